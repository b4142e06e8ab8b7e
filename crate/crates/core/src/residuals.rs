//! Benchmark PDEs: residual operators, initial/boundary data, analytic
//! solutions and domains.
//!
//! Both benchmarks have residuals that are affine in the network jet,
//! `r(x) = <coeffs, jet(x)> - F(x)`, which is what the loss assembly and the
//! parameter gradient rely on.

use std::fmt;
use std::str::FromStr;

use rand::distr::{Distribution, Open01};
use rand::Rng;
use thiserror::Error;

use crate::exec::Exec;
use crate::nn::{DenseNet, Jet2, JetOrder, JetView, NnError, PointLoss};
use crate::points::PointSet;

/// An axis-aligned box `lower <= x <= upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// One face of a [`DomainBox`]: the set where coordinate `axis` equals `value`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Face {
    pub axis: usize,
    pub value: f64,
}

impl DomainBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        assert_eq!(lower.len(), upper.len());
        assert!(lower.iter().zip(&upper).all(|(l, u)| l < u), "empty box");
        Self { lower, upper }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(x, (l, u))| *l <= *x && *x <= *u)
    }

    /// A point drawn uniformly from the open interior.
    pub fn sample_interior<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        for (k, x) in out.iter_mut().enumerate() {
            let u: f64 = Open01.sample(rng);
            *x = self.lower[k] + u * self.extent(k);
        }
    }
}

/// Benchmark identifier, also the registry key used by the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProblemKind {
    Poisson2d,
    DiffusionReaction,
}

impl ProblemKind {
    pub const ALL: [ProblemKind; 2] = [ProblemKind::Poisson2d, ProblemKind::DiffusionReaction];

    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::Poisson2d => "poisson2d",
            ProblemKind::DiffusionReaction => "diffusion-reaction",
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown problem {0:?} (expected poisson2d or diffusion-reaction)")]
pub struct UnknownProblem(pub String);

impl FromStr for ProblemKind {
    type Err = UnknownProblem;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ProblemKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| UnknownProblem(s.to_string()))
    }
}

/// A benchmark PDE on a box.
#[derive(Debug, Clone, PartialEq)]
pub struct PdeProblem {
    kind: ProblemKind,
    domain: DomainBox,
    /// Boundary faces carrying a Dirichlet condition.
    boundary: Vec<Face>,
    /// Face carrying the initial condition, for evolution problems.
    initial: Option<Face>,
}

const POISSON_EXPONENT: i32 = 10;
/// `2^(2a)` with `a = 10`, the per-axis normalisation of the Poisson solution.
const POISSON_SCALE: f64 = 1_048_576.0;

fn bump(t: f64) -> f64 {
    POISSON_SCALE * t.powi(POISSON_EXPONENT) * (1.0 - t).powi(POISSON_EXPONENT)
}

fn bump_d1(t: f64) -> f64 {
    let s = 1.0 - t;
    POISSON_SCALE * 10.0 * t.powi(9) * s.powi(9) * (s - t)
}

fn bump_d2(t: f64) -> f64 {
    let s = 1.0 - t;
    POISSON_SCALE * (90.0 * t.powi(8) * s.powi(10) - 200.0 * t.powi(9) * s.powi(9) + 90.0 * t.powi(10) * s.powi(8))
}

/// `(i, 1/i)` amplitudes of the diffusion-reaction solution's sine modes.
const DR_MODES: [f64; 5] = [1.0, 2.0, 3.0, 4.0, 8.0];

impl PdeProblem {
    /// `u_xx + u_yy = F` on `[0,1]^2` with manufactured solution
    /// `u(x,y) = g(x) g(y)`, `g(t) = 2^20 t^10 (1-t)^10`, and `u = 0` on the
    /// boundary.
    pub fn poisson2d() -> Self {
        Self {
            kind: ProblemKind::Poisson2d,
            domain: DomainBox::new(vec![0.0, 0.0], vec![1.0, 1.0]),
            boundary: vec![
                Face { axis: 0, value: 0.0 },
                Face { axis: 0, value: 1.0 },
                Face { axis: 1, value: 0.0 },
                Face { axis: 1, value: 1.0 },
            ],
            initial: None,
        }
    }

    /// `u_t = u_xx + F(x,t)` on `[-pi,pi] x [0,1]`, inputs ordered `(x, t)`,
    /// with `u(x,0) = sum_{i=1..4} sin(ix)/i + sin(8x)/8` and
    /// `u(-pi,t) = u(pi,t) = 0`.
    pub fn diffusion_reaction() -> Self {
        use std::f64::consts::PI;
        Self {
            kind: ProblemKind::DiffusionReaction,
            domain: DomainBox::new(vec![-PI, 0.0], vec![PI, 1.0]),
            boundary: vec![Face { axis: 0, value: -PI }, Face { axis: 0, value: PI }],
            initial: Some(Face { axis: 1, value: 0.0 }),
        }
    }

    pub fn by_kind(kind: ProblemKind) -> Self {
        match kind {
            ProblemKind::Poisson2d => Self::poisson2d(),
            ProblemKind::DiffusionReaction => Self::diffusion_reaction(),
        }
    }

    /// Registry lookup by name.
    pub fn by_name(name: &str) -> Result<Self, UnknownProblem> {
        name.parse().map(Self::by_kind)
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn domain(&self) -> &DomainBox {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn boundary_faces(&self) -> &[Face] {
        &self.boundary
    }

    pub fn initial_face(&self) -> Option<Face> {
        self.initial
    }

    pub fn has_initial_condition(&self) -> bool {
        self.initial.is_some()
    }

    /// The forcing term `F`.
    pub fn forcing(&self, p: &[f64]) -> f64 {
        match self.kind {
            ProblemKind::Poisson2d => {
                let (x, y) = (p[0], p[1]);
                bump_d2(x) * bump(y) + bump(x) * bump_d2(y)
            }
            ProblemKind::DiffusionReaction => {
                let (x, t) = (p[0], p[1]);
                (-t).exp()
                    * (1.5 * (2.0 * x).sin()
                        + 8.0 / 3.0 * (3.0 * x).sin()
                        + 15.0 / 4.0 * (4.0 * x).sin()
                        + 63.0 / 8.0 * (8.0 * x).sin())
            }
        }
    }

    /// Coefficients `c` of the affine residual `r = <c, jet> - F` in the
    /// channel layout of [`JetOrder::Second`].
    pub fn residual_coefficients(&self) -> Vec<f64> {
        let d = self.dim();
        let mut c = vec![0.0; JetOrder::Second.channels(d)];
        let hess = |i: usize, j: usize| 1 + d + i * d + j;
        match self.kind {
            ProblemKind::Poisson2d => {
                c[hess(0, 0)] = 1.0;
                c[hess(1, 1)] = 1.0;
            }
            ProblemKind::DiffusionReaction => {
                // u_t - D u_xx with D = 1
                c[1 + 1] = 1.0;
                c[hess(0, 0)] = -1.0;
            }
        }
        c
    }

    /// PDE residual of a solution candidate with jet `jet` at `p`.
    pub fn residual(&self, p: &[f64], jet: JetView<'_>) -> f64 {
        match self.kind {
            ProblemKind::Poisson2d => jet.hess(0, 0) + jet.hess(1, 1) - self.forcing(p),
            ProblemKind::DiffusionReaction => jet.grad(1) - jet.hess(0, 0) - self.forcing(p),
        }
    }

    /// Prescribed initial value at `p` (a point on the initial face).
    pub fn initial_value(&self, p: &[f64]) -> Option<f64> {
        self.initial.map(|_| match self.kind {
            ProblemKind::Poisson2d => unreachable!("stationary problem"),
            ProblemKind::DiffusionReaction => {
                let x = p[0];
                (1..=4).map(|i| (i as f64 * x).sin() / i as f64).sum::<f64>() + (8.0 * x).sin() / 8.0
            }
        })
    }

    /// Prescribed Dirichlet value at boundary point `p`; zero for both benchmarks.
    pub fn boundary_value(&self, _p: &[f64]) -> f64 {
        0.0
    }

    /// Initial-condition residual `u - u0` (zero-valued if there is no
    /// initial condition).
    pub fn ic_residual(&self, p: &[f64], u: f64) -> f64 {
        self.initial_value(p).map_or(0.0, |u0| u - u0)
    }

    pub fn bc_residual(&self, p: &[f64], u: f64) -> f64 {
        u - self.boundary_value(p)
    }

    /// The analytic solution.
    pub fn analytic(&self, p: &[f64]) -> f64 {
        match self.kind {
            ProblemKind::Poisson2d => bump(p[0]) * bump(p[1]),
            ProblemKind::DiffusionReaction => {
                let (x, t) = (p[0], p[1]);
                (-t).exp() * DR_MODES.iter().map(|i| (i * x).sin() / i).sum::<f64>()
            }
        }
    }

    /// Closed-form value, gradient and Hessian of the analytic solution.
    pub fn analytic_jet(&self, p: &[f64]) -> Jet2 {
        let mut jet = Jet2::zero(2);
        match self.kind {
            ProblemKind::Poisson2d => {
                let (x, y) = (p[0], p[1]);
                let (gx, gy) = (bump(x), bump(y));
                let (dx, dy) = (bump_d1(x), bump_d1(y));
                jet.value = gx * gy;
                jet.grad = vec![dx * gy, gx * dy];
                jet.hess = vec![bump_d2(x) * gy, dx * dy, dx * dy, gx * bump_d2(y)];
            }
            ProblemKind::DiffusionReaction => {
                let (x, t) = (p[0], p[1]);
                let e = (-t).exp();
                let (mut s, mut s_x, mut s_xx) = (0.0, 0.0, 0.0);
                for i in DR_MODES {
                    let (sin, cos) = (i * x).sin_cos();
                    s += sin / i;
                    s_x += cos;
                    s_xx -= i * sin;
                }
                jet.value = e * s;
                jet.grad = vec![e * s_x, -e * s];
                jet.hess = vec![e * s_xx, -e * s_x, -e * s_x, e * s];
            }
        }
        jet
    }

    /// `n` i.i.d. uniform points on the boundary faces, faces weighted by
    /// their measure.
    pub fn sample_boundary<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> PointSet {
        self.sample_faces(&self.boundary, n, rng)
    }

    /// `n` i.i.d. uniform points on the initial face (empty for stationary
    /// problems).
    pub fn sample_initial<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> PointSet {
        match self.initial {
            Some(face) => self.sample_faces(&[face], n, rng),
            None => PointSet::new(self.dim()),
        }
    }

    fn sample_faces<R: Rng + ?Sized>(&self, faces: &[Face], n: usize, rng: &mut R) -> PointSet {
        let d = self.dim();
        let measure = |f: &Face| -> f64 { (0..d).filter(|k| *k != f.axis).map(|k| self.domain.extent(k)).product() };
        let total: f64 = faces.iter().map(measure).sum();
        let mut out = PointSet::with_capacity(d, n);
        let mut p = vec![0.0; d];
        for _ in 0..n {
            let mut pick: f64 = rng.random::<f64>() * total;
            let mut face = faces[faces.len() - 1];
            for f in faces {
                let m = measure(f);
                if pick < m {
                    face = *f;
                    break;
                }
                pick -= m;
            }
            self.domain.sample_interior(rng, &mut p);
            p[face.axis] = face.value;
            out.push(&p);
        }
        out
    }
}

#[derive(Debug, Error)]
pub enum LossError {
    #[error("collocation set is empty")]
    NoCollocationPoints,
    #[error("problem {0} needs initial-condition points")]
    MissingInitialPoints(ProblemKind),
    #[error("network diverged: {0}")]
    Diverged(#[from] NnError),
}

/// Mean squared PDE residual, scaled by `weight`.
pub struct InteriorLoss<'a> {
    problem: &'a PdeProblem,
    coeffs: Vec<f64>,
    scale: f64,
}

impl<'a> InteriorLoss<'a> {
    pub fn new(problem: &'a PdeProblem, weight: f64, n_points: usize) -> Self {
        Self {
            problem,
            coeffs: problem.residual_coefficients(),
            scale: weight / n_points.max(1) as f64,
        }
    }
}

impl PointLoss for InteriorLoss<'_> {
    fn order(&self) -> JetOrder {
        JetOrder::Second
    }

    fn eval(&self, p: &[f64], jet: JetView<'_>, seed: &mut [f64]) -> f64 {
        let r = self.problem.residual(p, jet);
        for (s, c) in seed.iter_mut().zip(&self.coeffs) {
            *s = 2.0 * self.scale * r * c;
        }
        self.scale * r * r
    }
}

#[derive(Debug, Clone, Copy)]
enum ValueCondition {
    Initial,
    Boundary,
}

/// Mean squared initial or boundary residual, scaled by `weight`.
pub struct ConditionLoss<'a> {
    problem: &'a PdeProblem,
    which: ValueCondition,
    scale: f64,
}

impl<'a> ConditionLoss<'a> {
    pub fn initial(problem: &'a PdeProblem, weight: f64, n_points: usize) -> Self {
        Self {
            problem,
            which: ValueCondition::Initial,
            scale: weight / n_points.max(1) as f64,
        }
    }

    pub fn boundary(problem: &'a PdeProblem, weight: f64, n_points: usize) -> Self {
        Self {
            problem,
            which: ValueCondition::Boundary,
            scale: weight / n_points.max(1) as f64,
        }
    }
}

impl PointLoss for ConditionLoss<'_> {
    fn order(&self) -> JetOrder {
        JetOrder::Value
    }

    fn eval(&self, p: &[f64], jet: JetView<'_>, seed: &mut [f64]) -> f64 {
        let u = jet.value();
        let r = match self.which {
            ValueCondition::Initial => self.problem.ic_residual(p, u),
            ValueCondition::Boundary => self.problem.bc_residual(p, u),
        };
        seed[0] = 2.0 * self.scale * r;
        self.scale * r * r
    }
}

/// Collocation, initial and boundary points of one training step.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPoints {
    pub colloc: PointSet,
    pub initial: PointSet,
    pub boundary: PointSet,
}

/// Loss weights `lambda1` (initial) and `lambda2` (boundary).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub initial: f64,
    pub boundary: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            initial: 1.0,
            boundary: 1.0,
        }
    }
}

/// Anything that can provide the jets the loss needs.
pub trait JetModel: Sync {
    fn jet(&self, p: &[f64]) -> Jet2;
    fn value(&self, p: &[f64]) -> f64 {
        self.jet(p).value
    }
}

impl JetModel for DenseNet {
    fn jet(&self, p: &[f64]) -> Jet2 {
        self.jet2(p)
    }
    fn value(&self, p: &[f64]) -> f64 {
        DenseNet::value(self, p)
    }
}

/// The problem's own analytic solution viewed as a model.
impl JetModel for PdeProblem {
    fn jet(&self, p: &[f64]) -> Jet2 {
        self.analytic_jet(p)
    }
    fn value(&self, p: &[f64]) -> f64 {
        self.analytic(p)
    }
}

fn check_points(problem: &PdeProblem, pts: &TrainingPoints) -> Result<(), LossError> {
    if pts.colloc.is_empty() {
        return Err(LossError::NoCollocationPoints);
    }
    if problem.has_initial_condition() && pts.initial.is_empty() {
        return Err(LossError::MissingInitialPoints(problem.kind()));
    }
    Ok(())
}

/// `mean r^2 + lambda1 mean r_ic^2 + lambda2 mean r_bc^2` for any
/// [`JetModel`], evaluated point by point.
pub fn assemble_loss<M: JetModel + ?Sized>(
    model: &M,
    problem: &PdeProblem,
    pts: &TrainingPoints,
    weights: LossWeights,
) -> Result<f64, LossError> {
    check_points(problem, pts)?;
    let mean = |set: &PointSet, f: &dyn Fn(&[f64]) -> f64| -> Result<f64, LossError> {
        if set.is_empty() {
            return Ok(0.0);
        }
        let mut acc = 0.0;
        for p in set.iter() {
            let r = f(p);
            if !r.is_finite() {
                return Err(NnError::NonFiniteLoss {
                    value: r,
                    point: p.to_vec(),
                }
                .into());
            }
            acc += r * r;
        }
        Ok(acc / set.len() as f64)
    };
    let interior = mean(&pts.colloc, &|p| {
        let jet = model.jet(p);
        problem.residual(p, jet.view())
    })?;
    let initial = if problem.has_initial_condition() {
        mean(&pts.initial, &|p| problem.ic_residual(p, model.value(p)))?
    } else {
        0.0
    };
    let boundary = mean(&pts.boundary, &|p| problem.bc_residual(p, model.value(p)))?;
    Ok(interior + weights.initial * initial + weights.boundary * boundary)
}

/// The same loss for a [`DenseNet`], with its parameter gradient.
pub fn loss_and_grad(
    net: &DenseNet,
    problem: &PdeProblem,
    pts: &TrainingPoints,
    weights: LossWeights,
    exec: Exec,
) -> Result<(f64, Vec<f64>), LossError> {
    check_points(problem, pts)?;
    let interior = InteriorLoss::new(problem, 1.0, pts.colloc.len());
    let initial = ConditionLoss::initial(problem, weights.initial, pts.initial.len());
    let boundary = ConditionLoss::boundary(problem, weights.boundary, pts.boundary.len());
    let mut groups: Vec<(&PointSet, &dyn PointLoss)> = vec![(&pts.colloc, &interior)];
    if problem.has_initial_condition() && !pts.initial.is_empty() {
        groups.push((&pts.initial, &initial));
    }
    if !pts.boundary.is_empty() {
        groups.push((&pts.boundary, &boundary));
    }
    Ok(net.loss_grad(&groups, exec)?)
}

/// PDE residual of `net` at every point, in index order.
pub fn residual_field(net: &DenseNet, problem: &PdeProblem, points: &PointSet, exec: Exec) -> Vec<f64> {
    net.batch_map(points, JetOrder::Second, exec, |p, jet| problem.residual(p, jet))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::NetShape;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn registry_round_trip() {
        for kind in ProblemKind::ALL {
            assert_eq!(kind.name().parse::<ProblemKind>().unwrap(), kind);
            assert_eq!(PdeProblem::by_name(kind.name()).unwrap().kind(), kind);
        }
        assert!(PdeProblem::by_name("heat").is_err());
    }

    #[test]
    fn poisson_examples() {
        let p = PdeProblem::poisson2d();
        assert_eq!(p.analytic(&[0.5, 0.5]), 1.0);
        assert_eq!(p.forcing(&[0.5, 0.5]), -160.0);
        let zero = Jet2::zero(2);
        assert_eq!(p.residual(&[0.5, 0.5], zero.view()), 160.0);
        assert_eq!(p.analytic(&[0.0, 0.3]), 0.0);
        assert_eq!(p.bc_residual(&[0.0, 0.3], p.analytic(&[0.0, 0.3])), 0.0);
        assert!(!p.has_initial_condition());
    }

    #[test]
    fn diffusion_reaction_examples() {
        use std::f64::consts::PI;
        let p = PdeProblem::diffusion_reaction();
        for x in [-3.0, -1.1, 0.0, 0.4, 2.9] {
            let u0 = p.initial_value(&[x, 0.0]).unwrap();
            assert!((p.analytic(&[x, 0.0]) - u0).abs() < 1e-15);
        }
        for t in [0.0, 0.25, 1.0] {
            assert!(p.analytic(&[PI, t]).abs() < 1e-14);
            assert!(p.analytic(&[-PI, t]).abs() < 1e-14);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut pt = [0.0; 2];
        for _ in 0..100 {
            p.domain().sample_interior(&mut rng, &mut pt);
            let r = p.residual(&pt, p.analytic_jet(&pt).view());
            assert!(r.abs() < 1e-8, "{r}");
        }
    }

    #[test]
    fn analytic_jets_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = 1e-5;
        for problem in [PdeProblem::poisson2d(), PdeProblem::diffusion_reaction()] {
            let mut p = [0.0; 2];
            for _ in 0..20 {
                problem.domain().sample_interior(&mut rng, &mut p);
                let jet = problem.analytic_jet(&p);
                for i in 0..2 {
                    let mut pp = p;
                    let mut pm = p;
                    pp[i] += h;
                    pm[i] -= h;
                    let fd = (problem.analytic(&pp) - problem.analytic(&pm)) / (2.0 * h);
                    assert!((fd - jet.grad[i]).abs() <= 1e-6 * (1.0 + fd.abs()));
                    let gp = problem.analytic_jet(&pp).grad;
                    let gm = problem.analytic_jet(&pm).grad;
                    for j in 0..2 {
                        let fd2 = (gp[j] - gm[j]) / (2.0 * h);
                        assert!((fd2 - jet.hess(i, j)).abs() <= 1e-5 * (1.0 + fd2.abs()));
                    }
                }
            }
        }
    }

    #[test]
    fn boundary_and_initial_samples_lie_on_faces() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for problem in [PdeProblem::poisson2d(), PdeProblem::diffusion_reaction()] {
            let b = problem.sample_boundary(200, &mut rng);
            assert_eq!(b.len(), 200);
            for p in b.iter() {
                assert!(problem.domain().contains(p));
                assert!(problem.boundary_faces().iter().any(|f| p[f.axis] == f.value));
            }
            let i = problem.sample_initial(50, &mut rng);
            match problem.initial_face() {
                Some(face) => assert!(i.iter().all(|p| p[face.axis] == face.value)),
                None => assert!(i.is_empty()),
            }
        }
    }

    fn poisson_points(colloc: &[[f64; 2]], boundary: &[[f64; 2]]) -> TrainingPoints {
        TrainingPoints {
            colloc: PointSet::from_points(2, colloc),
            initial: PointSet::new(2),
            boundary: PointSet::from_points(2, boundary),
        }
    }

    #[test]
    fn loss_examples() {
        let p = PdeProblem::poisson2d();
        let zero = DenseNet::from_params(NetShape::new(2, vec![3]).unwrap(), vec![0.0; 13]).unwrap();
        let pts = poisson_points(&[[0.5, 0.5]], &[[0.0, 0.3], [1.0, 0.9]]);
        let l = assemble_loss(&zero, &p, &pts, LossWeights::default()).unwrap();
        assert_eq!(l, 25600.0);

        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut pts = poisson_points(&[], &[]);
        let mut q = [0.0; 2];
        for _ in 0..50 {
            p.domain().sample_interior(&mut rng, &mut q);
            pts.colloc.push(&q);
        }
        pts.boundary = p.sample_boundary(40, &mut rng);
        let exact = assemble_loss(&p, &p, &pts, LossWeights::default()).unwrap();
        assert!(exact < 1e-20, "{exact}");

        let dr = PdeProblem::diffusion_reaction();
        let mut pts = poisson_points(&[], &[]);
        for _ in 0..30 {
            dr.domain().sample_interior(&mut rng, &mut q);
            pts.colloc.push(&q);
        }
        pts.initial = dr.sample_initial(20, &mut rng);
        pts.boundary = dr.sample_boundary(20, &mut rng);
        assert!(assemble_loss(&dr, &dr, &pts, LossWeights::default()).unwrap() < 1e-20);
    }

    #[test]
    fn zero_weights_keep_interior_term_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let dr = PdeProblem::diffusion_reaction();
        let net = DenseNet::init(NetShape::new(2, vec![5]).unwrap(), 1);
        let mut pts = poisson_points(&[[0.1, 0.2], [1.0, 0.7]], &[]);
        pts.initial = dr.sample_initial(10, &mut rng);
        pts.boundary = dr.sample_boundary(10, &mut rng);
        let none = LossWeights {
            initial: 0.0,
            boundary: 0.0,
        };
        let full = assemble_loss(&net, &dr, &pts, none).unwrap();
        let interior_only = TrainingPoints {
            boundary: PointSet::new(2),
            ..pts.clone()
        };
        assert_eq!(full, assemble_loss(&net, &dr, &interior_only, none).unwrap());
        assert!(assemble_loss(&net, &dr, &pts, LossWeights::default()).unwrap() > full);
    }

    #[test]
    fn loss_preconditions() {
        let dr = PdeProblem::diffusion_reaction();
        let net = DenseNet::init(NetShape::new(2, vec![5]).unwrap(), 1);
        let empty = poisson_points(&[], &[]);
        assert!(matches!(
            assemble_loss(&net, &dr, &empty, LossWeights::default()),
            Err(LossError::NoCollocationPoints)
        ));
        let no_ic = poisson_points(&[[0.0, 0.5]], &[]);
        assert!(matches!(
            loss_and_grad(&net, &dr, &no_ic, LossWeights::default(), Exec::Sequential),
            Err(LossError::MissingInitialPoints(_))
        ));
    }

    #[test]
    fn gradient_loss_agrees_with_pointwise_assembly() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let dr = PdeProblem::diffusion_reaction();
        let net = DenseNet::init(NetShape::new(2, vec![6, 6]).unwrap(), 4);
        let mut colloc = PointSet::new(2);
        let mut q = [0.0; 2];
        for _ in 0..40 {
            dr.domain().sample_interior(&mut rng, &mut q);
            colloc.push(&q);
        }
        let pts = TrainingPoints {
            colloc,
            initial: dr.sample_initial(15, &mut rng),
            boundary: dr.sample_boundary(15, &mut rng),
        };
        let w = LossWeights {
            initial: 0.7,
            boundary: 1.3,
        };
        let (l, _) = loss_and_grad(&net, &dr, &pts, w, Exec::Sequential).unwrap();
        let reference = assemble_loss(&net, &dr, &pts, w).unwrap();
        assert!((l - reference).abs() <= 1e-12 * reference);
    }
}
