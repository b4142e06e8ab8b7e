//! Adaptive collocation sampling.
//!
//! At each resampling event a fresh pool of uniform candidates is scored by
//! a criterion `gamma` (constant, residual magnitude, residual-gradient norm
//! or residual-Hessian norm), turned into weights
//! `w_i ∝ gamma_i^tau / mean(gamma^tau) + c`, and the new collocation set is
//! drawn i.i.d. with replacement from those weights.

use std::fmt;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use thiserror::Error;

use crate::exec::Exec;
use crate::nn::{DenseNet, JetEvaluator, JetOrder};
use crate::points::PointSet;
use crate::residuals::{DomainBox, PdeProblem};

/// The sampling criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    Unif,
    Res,
    Grad,
    Hessian,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::Unif, Strategy::Res, Strategy::Grad, Strategy::Hessian];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Unif => "unif",
            Strategy::Res => "res",
            Strategy::Grad => "grad",
            Strategy::Hessian => "hessian",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown strategy {0:?} (expected unif, res, grad or hessian)")]
pub struct UnknownStrategy(pub String);

impl FromStr for Strategy {
    type Err = UnknownStrategy;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| UnknownStrategy(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SamplerError {
    #[error("n_colloc = {n_colloc} exceeds pool_size = {pool_size}")]
    PoolTooSmall { n_colloc: usize, pool_size: usize },
    #[error("tau and c must be finite and non-negative (tau = {tau}, c = {c})")]
    BadShape { tau: f64, c: f64 },
    #[error("fd_step must be positive, got {0}")]
    BadStep(f64),
    #[error("gamma values must be finite and non-negative")]
    BadGamma,
    #[error("empty pool")]
    EmptyPool,
}

/// Parameters of the sampling distribution and the candidate pool.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    pub tau: f64,
    pub c: f64,
    pub pool_size: usize,
    pub n_colloc: usize,
    /// Finite-difference step for residual derivatives, as a fraction of
    /// each axis extent.
    pub fd_step: f64,
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), SamplerError> {
        if self.n_colloc == 0 || self.pool_size < self.n_colloc {
            return Err(SamplerError::PoolTooSmall {
                n_colloc: self.n_colloc,
                pool_size: self.pool_size,
            });
        }
        if !(self.tau >= 0.0 && self.tau.is_finite() && self.c >= 0.0 && self.c.is_finite()) {
            return Err(SamplerError::BadShape { tau: self.tau, c: self.c });
        }
        if !(self.fd_step > 0.0 && self.fd_step.is_finite()) {
            return Err(SamplerError::BadStep(self.fd_step));
        }
        Ok(())
    }
}

pub const DEFAULT_FD_STEP: f64 = 1e-3;

/// Scored candidates and their sampling weights.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePool {
    pub points: PointSet,
    pub gamma: Vec<f64>,
    pub weights: Vec<f64>,
}

impl CandidatePool {
    pub fn new(points: PointSet, gamma: Vec<f64>, tau: f64, c: f64) -> Result<Self, SamplerError> {
        let weights = build_distribution(&gamma, tau, c)?;
        assert_eq!(points.len(), gamma.len());
        Ok(Self { points, gamma, weights })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// `pool_size` i.i.d. uniform points from the open interior of `domain`.
pub fn draw_pool<R: Rng + ?Sized>(domain: &DomainBox, pool_size: usize, rng: &mut R) -> PointSet {
    let d = domain.dim();
    let mut pool = PointSet::with_capacity(d, pool_size);
    let mut p = vec![0.0; d];
    for _ in 0..pool_size {
        domain.sample_interior(rng, &mut p);
        pool.push(&p);
    }
    pool
}

/// Finite-difference stencil along one axis: three equispaced offsets
/// (central, or shifted to one side near a wall) with first- and
/// second-derivative weights at the base point.
#[derive(Debug, Clone, Copy)]
struct AxisStencil {
    offsets: [f64; 3],
    first: [f64; 3],
    second: [f64; 3],
}

impl AxisStencil {
    fn new(x: f64, h: f64, lower: f64, upper: f64) -> Self {
        let second = [1.0 / (h * h), -2.0 / (h * h), 1.0 / (h * h)];
        if x - h < lower {
            Self {
                offsets: [0.0, h, 2.0 * h],
                first: [-1.5 / h, 2.0 / h, -0.5 / h],
                second,
            }
        } else if x + h > upper {
            Self {
                offsets: [-2.0 * h, -h, 0.0],
                first: [0.5 / h, -2.0 / h, 1.5 / h],
                second,
            }
        } else {
            Self {
                offsets: [-h, 0.0, h],
                first: [-0.5 / h, 0.0, 0.5 / h],
                second,
            }
        }
    }
}

/// `gamma` for every point of `points`, given a residual field.
///
/// Gradient and Hessian of the field come from three-point stencils per
/// axis (tensor products of first-derivative weights for mixed entries);
/// stencils that would leave the domain turn one-sided at the wall. All are
/// exact on quadratic fields up to roundoff.
pub fn eval_gamma_field<F>(
    field: F,
    domain: &DomainBox,
    points: &PointSet,
    strategy: Strategy,
    fd_step: f64,
    exec: Exec,
) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64 + Sync + Send,
{
    gamma_with_state(|| (), |_: &mut (), p: &[f64]| field(p), domain, points, strategy, fd_step, exec)
}

/// [`eval_gamma_field`] for fields that need per-thread scratch state.
fn gamma_with_state<S, I, F>(
    init: I,
    field: F,
    domain: &DomainBox,
    points: &PointSet,
    strategy: Strategy,
    fd_step: f64,
    exec: Exec,
) -> Vec<f64>
where
    I: Fn() -> S + Sync + Send,
    F: Fn(&mut S, &[f64]) -> f64 + Sync + Send,
{
    if strategy == Strategy::Unif {
        return vec![1.0; points.len()];
    }
    let chunks = exec.map_chunks(points.len(), GAMMA_CHUNK, |range| {
        let mut state = init();
        let mut p = vec![0.0; domain.dim()];
        range
            .map(|i| gamma_at(&mut state, &field, domain, points.get(i), &mut p, strategy, fd_step))
            .collect::<Vec<f64>>()
    });
    chunks.into_iter().flatten().collect()
}

const GAMMA_CHUNK: usize = 256;

fn gamma_at<S, F>(
    state: &mut S,
    field: &F,
    domain: &DomainBox,
    x: &[f64],
    p: &mut [f64],
    strategy: Strategy,
    fd_step: f64,
) -> f64
where
    F: Fn(&mut S, &[f64]) -> f64,
{
    let d = domain.dim();
    p.copy_from_slice(x);
    match strategy {
        Strategy::Unif => 1.0,
        Strategy::Res => field(state, x).abs(),
        Strategy::Grad => {
            let stencils = axis_stencils(domain, x, fd_step);
            let mut norm2 = 0.0;
            for (k, st) in stencils.iter().enumerate() {
                let mut g = 0.0;
                for s in 0..3 {
                    if st.first[s] == 0.0 {
                        continue;
                    }
                    p[k] = x[k] + st.offsets[s];
                    g += st.first[s] * field(state, p);
                }
                p[k] = x[k];
                norm2 += g * g;
            }
            norm2.sqrt()
        }
        Strategy::Hessian => {
            let stencils = axis_stencils(domain, x, fd_step);
            let mut frob2 = 0.0;
            for i in 0..d {
                for j in i..d {
                    let mut hij = 0.0;
                    if i == j {
                        let st = &stencils[i];
                        for s in 0..3 {
                            p[i] = x[i] + st.offsets[s];
                            hij += st.second[s] * field(state, p);
                        }
                        p[i] = x[i];
                        frob2 += hij * hij;
                    } else {
                        let (si, sj) = (&stencils[i], &stencils[j]);
                        for a in 0..3 {
                            for b in 0..3 {
                                let w = si.first[a] * sj.first[b];
                                if w == 0.0 {
                                    continue;
                                }
                                p[i] = x[i] + si.offsets[a];
                                p[j] = x[j] + sj.offsets[b];
                                hij += w * field(state, p);
                            }
                        }
                        p[i] = x[i];
                        p[j] = x[j];
                        frob2 += 2.0 * hij * hij;
                    }
                }
            }
            frob2.sqrt()
        }
    }
}

fn axis_stencils(domain: &DomainBox, x: &[f64], fd_step: f64) -> Vec<AxisStencil> {
    (0..domain.dim())
        .map(|k| AxisStencil::new(x[k], fd_step * domain.extent(k), domain.lower[k], domain.upper[k]))
        .collect()
}

/// `gamma` of the network's PDE residual at every point of `points`.
pub fn eval_gamma(
    net: &DenseNet,
    problem: &PdeProblem,
    points: &PointSet,
    strategy: Strategy,
    fd_step: f64,
    exec: Exec,
) -> Vec<f64> {
    gamma_with_state(
        || net.evaluator(JetOrder::Second),
        |ev: &mut JetEvaluator<'_>, p: &[f64]| problem.residual(p, ev.eval(p)),
        problem.domain(),
        points,
        strategy,
        fd_step,
        exec,
    )
}

/// Normalised weights `gamma_i^tau / mean(gamma^tau) + c`.
///
/// With every `gamma` zero and `tau > 0` the mean vanishes; the weights then
/// fall back to uniform and a warning is logged.
pub fn build_distribution(gamma: &[f64], tau: f64, c: f64) -> Result<Vec<f64>, SamplerError> {
    if gamma.is_empty() {
        return Err(SamplerError::EmptyPool);
    }
    if !(tau >= 0.0 && tau.is_finite() && c >= 0.0 && c.is_finite()) {
        return Err(SamplerError::BadShape { tau, c });
    }
    if gamma.iter().any(|g| !g.is_finite() || *g < 0.0) {
        return Err(SamplerError::BadGamma);
    }
    let n = gamma.len();
    let powered: Vec<f64> = gamma.iter().map(|g| g.powf(tau)).collect();
    let mean = powered.iter().sum::<f64>() / n as f64;
    if mean == 0.0 || !mean.is_finite() {
        log::warn!("degenerate gamma (mean of gamma^tau = {mean}); using uniform weights");
        return Ok(vec![1.0 / n as f64; n]);
    }
    let raw: Vec<f64> = powered.iter().map(|p| p / mean + c).collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|r| r / total).collect())
}

/// `n_colloc` points drawn i.i.d. with replacement according to the pool
/// weights.
pub fn resample<R: Rng + ?Sized>(pool: &CandidatePool, n_colloc: usize, rng: &mut R) -> PointSet {
    let dist = WeightedIndex::new(&pool.weights).expect("pool weights are a valid distribution");
    let mut out = PointSet::with_capacity(pool.points.dim(), n_colloc);
    for _ in 0..n_colloc {
        out.push(pool.points.get(dist.sample(rng)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_square() -> DomainBox {
        DomainBox::new(vec![0.0, 0.0], vec![1.0, 1.0])
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
        }
        assert!("rar".parse::<Strategy>().is_err());
    }

    #[test]
    fn pool_is_interior_and_seeded() {
        let dom = unit_square();
        let a = draw_pool(&dom, 40_000, &mut ChaCha8Rng::seed_from_u64(3));
        let b = draw_pool(&dom, 40_000, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
        assert!(a.as_flat().iter().all(|x| *x > 0.0 && *x < 1.0));
        for k in 0..2 {
            let mean = a.iter().map(|p| p[k]).sum::<f64>() / a.len() as f64;
            assert!((mean - 0.5).abs() < 0.01, "{mean}");
        }
    }

    #[test]
    fn uniform_strategy_is_constant() {
        let dom = unit_square();
        let pts = draw_pool(&dom, 10, &mut ChaCha8Rng::seed_from_u64(0));
        let g = eval_gamma_field(|_| panic!("not evaluated"), &dom, &pts, Strategy::Unif, 1e-3, Exec::Sequential);
        assert_eq!(g, vec![1.0; 10]);
    }

    #[test]
    fn affine_field_gradient_and_hessian() {
        let dom = DomainBox::new(vec![-1.0, 0.0], vec![1.0, 1.0]);
        let mut pts = draw_pool(&dom, 50, &mut ChaCha8Rng::seed_from_u64(1));
        // Points hugging each wall exercise the one-sided stencils.
        pts.push(&[-1.0, 0.5]);
        pts.push(&[1.0, 1.0]);
        pts.push(&[0.0, 0.0]);
        let g = eval_gamma_field(|p| p[0], &dom, &pts, Strategy::Grad, 1e-3, Exec::Sequential);
        assert!(g.iter().all(|v| (v - 1.0).abs() < 1e-9), "{g:?}");
        let h = eval_gamma_field(|p| p[0], &dom, &pts, Strategy::Hessian, 1e-3, Exec::Sequential);
        assert!(h.iter().all(|v| v.abs() < 1e-6), "{h:?}");
    }

    #[test]
    fn quadratic_field_hessian_norm() {
        let dom = unit_square();
        let mut pts = draw_pool(&dom, 50, &mut ChaCha8Rng::seed_from_u64(2));
        pts.push(&[0.0, 1.0]);
        let h = eval_gamma_field(
            |p| p[0] * p[0] + p[1] * p[1],
            &dom,
            &pts,
            Strategy::Hessian,
            1e-3,
            Exec::Sequential,
        );
        let want = 8.0f64.sqrt();
        assert!(h.iter().all(|v| (v - want).abs() < 1e-6 * want), "{h:?}");
    }

    #[test]
    fn distribution_examples() {
        assert_eq!(build_distribution(&[1.0; 4], 1.0, 0.0).unwrap(), vec![0.25; 4]);
        assert_eq!(build_distribution(&[1.0, 3.0], 1.0, 0.0).unwrap(), vec![0.25, 0.75]);
        let w = build_distribution(&[0.0, 2.0, 7.0], 0.0, 3.0).unwrap();
        assert!(w.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
        assert_eq!(build_distribution(&[0.0, 0.0], 0.5, 0.0).unwrap(), vec![0.5, 0.5]);
        assert_eq!(build_distribution(&[], 1.0, 0.0), Err(SamplerError::EmptyPool));
        assert_eq!(build_distribution(&[-1.0], 1.0, 0.0), Err(SamplerError::BadGamma));
        assert!(build_distribution(&[1.0], -1.0, 0.0).is_err());
    }

    #[test]
    fn resample_one_hot_and_seeded() {
        let pts = PointSet::from_points(1, &[[0.1], [0.2], [0.3]]);
        let pool = CandidatePool {
            points: pts.clone(),
            gamma: vec![0.0, 1.0, 0.0],
            weights: vec![0.0, 1.0, 0.0],
        };
        let s = resample(&pool, 20, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(s.iter().all(|p| p == [0.2]));
        let pool = CandidatePool::new(pts, vec![1.0, 2.0, 3.0], 1.0, 0.0).unwrap();
        let a = resample(&pool, 50, &mut ChaCha8Rng::seed_from_u64(9));
        let b = resample(&pool, 50, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn config_validation() {
        let ok = SamplerConfig {
            tau: 0.5,
            c: 0.0,
            pool_size: 100,
            n_colloc: 10,
            fd_step: DEFAULT_FD_STEP,
        };
        assert!(ok.validate().is_ok());
        assert!(SamplerConfig { n_colloc: 101, ..ok }.validate().is_err());
        assert!(SamplerConfig { tau: f64::NAN, ..ok }.validate().is_err());
        assert!(SamplerConfig { fd_step: 0.0, ..ok }.validate().is_err());
    }

    #[test]
    fn network_gamma_is_exec_independent() {
        use crate::nn::NetShape;
        let problem = PdeProblem::poisson2d();
        let net = DenseNet::init(NetShape::new(2, vec![8, 8]).unwrap(), 3);
        let pts = draw_pool(problem.domain(), 200, &mut ChaCha8Rng::seed_from_u64(4));
        for s in Strategy::ALL {
            let a = eval_gamma(&net, &problem, &pts, s, DEFAULT_FD_STEP, Exec::Sequential);
            let b = eval_gamma(&net, &problem, &pts, s, DEFAULT_FD_STEP, Exec::Parallel);
            assert_eq!(a, b);
            assert!(a.iter().all(|g| g.is_finite() && *g >= 0.0));
        }
        let res = eval_gamma(&net, &problem, &pts, Strategy::Res, DEFAULT_FD_STEP, Exec::Sequential);
        for (i, p) in pts.iter().enumerate() {
            assert_eq!(res[i], problem.residual(p, net.jet2(p).view()).abs());
        }
    }
}
