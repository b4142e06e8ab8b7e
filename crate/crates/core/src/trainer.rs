//! The adaptive-sampling training loop and its test metrics.
//!
//! A run draws a uniform collocation set, trains for a warmup period, then
//! alternates between rebuilding the candidate pool for the chosen
//! [`Strategy`], resampling the collocation set and training for
//! `resample_every` epochs. Every epoch is one full-batch Adam step.

use std::io::Write;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::exec::Exec;
use crate::nn::{Adam, DenseNet, NetShape, NnError};
use crate::points::PointSet;
use crate::residuals::{loss_and_grad, LossError, LossWeights, PdeProblem, ProblemKind, TrainingPoints};
use crate::sampler::{self, CandidatePool, SamplerConfig, SamplerError, Strategy, DEFAULT_FD_STEP};

/// Metrics are logged at multiples of this many epochs, plus the last one.
pub const LOG_EVERY: usize = 100;

pub const RUN_CSV_HEADER: [&str; 4] = ["epoch", "train_loss", "l2_error", "wall_time_s"];
pub const HEATMAP_CSV_HEADER: [&str; 3] = ["x", "y", "abs_error"];
pub const GAMMA_CSV_HEADER: [&str; 4] = ["x", "y", "gamma", "weight"];

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Loss(LossError),
    #[error("run diverged at epoch {epoch} (last finite epoch: {last_finite_epoch:?})")]
    Diverged {
        epoch: usize,
        last_finite_epoch: Option<usize>,
        rows: Vec<LogRow>,
    },
    #[error(transparent)]
    Net(#[from] NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// All hyperparameters of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub problem: ProblemKind,
    pub strategy: Strategy,
    pub epochs: usize,
    pub lr: f64,
    pub n_colloc: usize,
    pub pool_size: usize,
    pub tau: f64,
    pub c: f64,
    pub resample_every: usize,
    pub warmup_epochs: usize,
    pub seed: u64,
    /// Initial-condition loss weight.
    pub lambda1: f64,
    /// Boundary loss weight.
    pub lambda2: f64,
    /// Evaluation grid points per axis.
    pub test_grid: usize,
    pub n_initial: usize,
    pub n_boundary: usize,
    pub fd_step: f64,
    pub hidden: Vec<usize>,
}

impl TrainConfig {
    /// Defaults for `problem`, hessian sampling, seed 0.
    pub fn defaults(problem: ProblemKind) -> Self {
        let (epochs, lr, n_colloc, pool_size) = match problem {
            ProblemKind::Poisson2d => (20_000, 1e-3, 400, 40_000),
            ProblemKind::DiffusionReaction => (100_000, 1e-4, 50, 5_000),
        };
        Self {
            problem,
            strategy: Strategy::Hessian,
            epochs,
            lr,
            n_colloc,
            pool_size,
            tau: 0.5,
            c: 0.0,
            resample_every: 1000,
            warmup_epochs: 1000,
            seed: 0,
            lambda1: 1.0,
            lambda2: 1.0,
            test_grid: 100,
            n_initial: 100,
            n_boundary: 100,
            fd_step: DEFAULT_FD_STEP,
            hidden: vec![20, 20, 20],
        }
    }

    pub fn sampler_config(&self) -> SamplerConfig {
        SamplerConfig {
            tau: self.tau,
            c: self.c,
            pool_size: self.pool_size,
            n_colloc: self.n_colloc,
            fd_step: self.fd_step,
        }
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights {
            initial: self.lambda1,
            boundary: self.lambda2,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |msg: String| Err(TrainError::Config(msg));
        if self.resample_every == 0 {
            return bad("resample_every must be at least 1".into());
        }
        if self.epochs < self.warmup_epochs {
            return bad(format!("epochs ({}) < warmup_epochs ({})", self.epochs, self.warmup_epochs));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.lr));
        }
        if self.test_grid < 2 {
            return bad(format!("test_grid must be at least 2, got {}", self.test_grid));
        }
        for (name, l) in [("lambda1", self.lambda1), ("lambda2", self.lambda2)] {
            if !(l >= 0.0 && l.is_finite()) {
                return bad(format!("{name} must be finite and non-negative, got {l}"));
            }
        }
        if self.problem == ProblemKind::DiffusionReaction && self.n_initial == 0 {
            return bad("diffusion-reaction needs initial-condition points".into());
        }
        NetShape::new(2, self.hidden.clone()).map_err(|e| TrainError::Config(e.to_string()))?;
        self.sampler_config().validate()?;
        Ok(())
    }

    /// Epochs at which the collocation set is rebuilt.
    pub fn resample_epochs(&self) -> impl Iterator<Item = usize> {
        (self.warmup_epochs..self.epochs).step_by(self.resample_every.max(1))
    }
}

/// One logged row of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub l2_error: f64,
    pub wall_time_s: f64,
}

/// Absolute errors on a tensor grid; `abs_error[iy * xs.len() + ix]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorHeatmap {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub abs_error: Vec<f64>,
}

impl ErrorHeatmap {
    pub fn get(&self, ix: usize, iy: usize) -> f64 {
        self.abs_error[iy * self.xs.len() + ix]
    }

    /// Root mean square of the entries.
    pub fn rms(&self) -> f64 {
        let sum: f64 = self.abs_error.iter().map(|e| e * e).sum();
        (sum / self.abs_error.len() as f64).sqrt()
    }

    pub fn max(&self) -> f64 {
        self.abs_error.iter().copied().fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), TrainError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(HEATMAP_CSV_HEADER)?;
        for (iy, y) in self.ys.iter().enumerate() {
            for (ix, x) in self.xs.iter().enumerate() {
                out.write_record([x.to_string(), y.to_string(), self.get(ix, iy).to_string()])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// The outcome of a completed run.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub config: TrainConfig,
    pub rows: Vec<LogRow>,
    pub heatmap: ErrorHeatmap,
    pub net: DenseNet,
    pub resample_events: usize,
}

impl RunRecord {
    pub fn final_l2(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.l2_error)
    }

    pub fn wall_time_s(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.wall_time_s)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), TrainError> {
        write_rows(&self.rows, w)
    }
}

pub fn write_rows<W: Write>(rows: &[LogRow], w: W) -> Result<(), TrainError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(RUN_CSV_HEADER)?;
    for r in rows {
        out.write_record([
            r.epoch.to_string(),
            r.train_loss.to_string(),
            r.l2_error.to_string(),
            r.wall_time_s.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// The scored pool of one resampling event, passed to observers.
#[derive(Debug)]
pub struct ResampleEvent<'a> {
    /// 0 for the first event.
    pub index: usize,
    pub epoch: usize,
    pub pool: &'a CandidatePool,
    pub colloc: &'a PointSet,
}

/// Pool coordinates with their `gamma` and sampling weight.
pub fn write_gamma_csv<W: Write>(pool: &CandidatePool, w: W) -> Result<(), TrainError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(GAMMA_CSV_HEADER)?;
    for (i, p) in pool.points.iter().enumerate() {
        out.write_record([
            p[0].to_string(),
            p[1].to_string(),
            pool.gamma[i].to_string(),
            pool.weights[i].to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// A function of the domain whose error against the analytic solution can be
/// measured.
pub trait Surrogate: Sync {
    fn values(&self, points: &PointSet, exec: Exec) -> Vec<f64>;
}

impl Surrogate for DenseNet {
    fn values(&self, points: &PointSet, exec: Exec) -> Vec<f64> {
        DenseNet::values(self, points, exec)
    }
}

impl Surrogate for PdeProblem {
    fn values(&self, points: &PointSet, exec: Exec) -> Vec<f64> {
        exec.map(points.len(), |i| self.analytic(points.get(i)))
    }
}

/// Adapts a plain closure.
pub struct FnSurrogate<F>(pub F);

impl<F: Fn(&[f64]) -> f64 + Sync> Surrogate for FnSurrogate<F> {
    fn values(&self, points: &PointSet, exec: Exec) -> Vec<f64> {
        exec.map(points.len(), |i| (self.0)(points.get(i)))
    }
}

/// Uniform `grid_n x grid_n` grid over the closed domain, x fastest.
pub fn test_grid(problem: &PdeProblem, grid_n: usize) -> (Vec<f64>, Vec<f64>, PointSet) {
    assert!(grid_n >= 2, "grid_n must be at least 2");
    let dom = problem.domain();
    let axis = |k: usize| -> Vec<f64> {
        let (lo, hi) = (dom.lower[k], dom.upper[k]);
        (0..grid_n)
            .map(|i| {
                if i == grid_n - 1 {
                    hi
                } else {
                    lo + (hi - lo) * (i as f64 / (grid_n - 1) as f64)
                }
            })
            .collect()
    };
    let (xs, ys) = (axis(0), axis(1));
    let mut pts = PointSet::with_capacity(2, grid_n * grid_n);
    for &y in &ys {
        for &x in &xs {
            pts.push(&[x, y]);
        }
    }
    (xs, ys, pts)
}

pub fn error_heatmap<S: Surrogate + ?Sized>(model: &S, problem: &PdeProblem, grid_n: usize, exec: Exec) -> ErrorHeatmap {
    let (xs, ys, pts) = test_grid(problem, grid_n);
    let pred = model.values(&pts, exec);
    let abs_error = pred
        .iter()
        .zip(pts.iter())
        .map(|(u, p)| (u - problem.analytic(p)).abs())
        .collect();
    ErrorHeatmap { xs, ys, abs_error }
}

/// RMS of `model - analytic` over the closed test grid.
pub fn l2_error<S: Surrogate + ?Sized>(model: &S, problem: &PdeProblem, grid_n: usize, exec: Exec) -> f64 {
    error_heatmap(model, problem, grid_n, exec).rms()
}

/// Runs with the default executor and no observer.
pub fn train(cfg: &TrainConfig) -> Result<RunRecord, TrainError> {
    train_with(cfg, Exec::default(), |_| Ok(()))
}

/// Runs the loop, calling `observer` after every resampling event.
pub fn train_with<O>(cfg: &TrainConfig, exec: Exec, mut observer: O) -> Result<RunRecord, TrainError>
where
    O: FnMut(&ResampleEvent<'_>) -> Result<(), TrainError>,
{
    cfg.validate()?;
    let problem = PdeProblem::by_kind(cfg.problem);
    let shape = NetShape::new(problem.dim(), cfg.hidden.clone()).map_err(|e| TrainError::Config(e.to_string()))?;
    let mut net = DenseNet::init(shape, cfg.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let weights = cfg.weights();
    let mut pts = TrainingPoints {
        colloc: sampler::draw_pool(problem.domain(), cfg.n_colloc, &mut rng),
        initial: problem.sample_initial(cfg.n_initial, &mut rng),
        boundary: problem.sample_boundary(cfg.n_boundary, &mut rng),
    };
    let mut adam = Adam::new(net.param_count(), cfg.lr);
    let mut rows = Vec::with_capacity(cfg.epochs / LOG_EVERY + 2);
    let mut events = 0;
    let mut last_finite = None;
    let start = Instant::now();

    for epoch in 0..=cfg.epochs {
        if epoch < cfg.epochs && epoch >= cfg.warmup_epochs && (epoch - cfg.warmup_epochs).is_multiple_of(cfg.resample_every) {
            let pool_pts = sampler::draw_pool(problem.domain(), cfg.pool_size, &mut rng);
            let gamma = sampler::eval_gamma(&net, &problem, &pool_pts, cfg.strategy, cfg.fd_step, exec);
            let pool = CandidatePool::new(pool_pts, gamma, cfg.tau, cfg.c)?;
            pts.colloc = sampler::resample(&pool, cfg.n_colloc, &mut rng);
            pts.initial = problem.sample_initial(cfg.n_initial, &mut rng);
            pts.boundary = problem.sample_boundary(cfg.n_boundary, &mut rng);
            observer(&ResampleEvent {
                index: events,
                epoch,
                pool: &pool,
                colloc: &pts.colloc,
            })?;
            events += 1;
            log::debug!("epoch {epoch}: resampled {} collocation points", cfg.n_colloc);
        }

        let (loss, grad) = match loss_and_grad(&net, &problem, &pts, weights, exec) {
            Ok(v) => v,
            Err(LossError::Diverged(NnError::NonFiniteLoss { .. })) => {
                return Err(TrainError::Diverged {
                    epoch,
                    last_finite_epoch: last_finite,
                    rows,
                })
            }
            Err(e) => return Err(TrainError::Loss(e)),
        };
        last_finite = Some(epoch);

        if epoch % LOG_EVERY == 0 || epoch == cfg.epochs {
            let row = LogRow {
                epoch,
                train_loss: loss,
                l2_error: l2_error(&net, &problem, cfg.test_grid, exec),
                wall_time_s: start.elapsed().as_secs_f64(),
            };
            log::info!("epoch {:>6}  loss {:.3e}  l2 {:.3e}", row.epoch, row.train_loss, row.l2_error);
            rows.push(row);
        }
        if epoch == cfg.epochs {
            break;
        }
        adam.step(net.params_mut(), &grad);
    }

    let heatmap = error_heatmap(&net, &problem, cfg.test_grid, exec);
    Ok(RunRecord {
        config: cfg.clone(),
        rows,
        heatmap,
        net,
        resample_events: events,
    })
}
