//! Command-line front end.
//!
//! `quad-demo` compares the uniform and curvature-refined trapezoid rules on
//! a built-in integrand, `train` runs one adaptive-sampling PINN training and
//! `compare` runs every strategy over a list of seeds. All outputs are CSV.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{ArgAction, Args, Parser, Subcommand};

use crate::exec::Exec;
use crate::quad1d::{self, Integrand, Interval, QuadratureResult, BUILTIN_INTEGRANDS, REFERENCE_PANELS};
use crate::residuals::ProblemKind;
use crate::sampler::Strategy;
use crate::trainer::{self, write_gamma_csv, write_rows, LogRow, RunRecord, TrainConfig, TrainError};

pub const QUAD_POINTS_HEADER: [&str; 5] = ["method", "x_left", "x_right", "f_left", "f_right"];
pub const SUMMARY_HEADER: [&str; 5] = ["strategy", "seed", "final_l2", "wall_time_s", "status"];

/// Exit code for invalid input.
pub const EXIT_USAGE: i32 = 2;
/// Exit code for a failed run.
pub const EXIT_FAILURE: i32 = 1;

#[derive(Debug, Parser)]
#[command(name = "hessquad", version, about = "Curvature-refined quadrature and adaptive PINN sampling")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Uniform vs curvature-refined trapezoid rule on a built-in integrand.
    QuadDemo(QuadArgs),
    /// Train one PINN.
    Train(TrainArgs),
    /// Train every strategy for each seed and write a summary.
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Args)]
pub struct QuadArgs {
    /// Integrand: sin-inv-sqrt, linear, quadratic, sin, exp or runge.
    #[arg(long = "function", default_value = "sin-inv-sqrt")]
    pub function: String,
    #[arg(long, default_value_t = 0.1, allow_negative_numbers = true)]
    pub a: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub b: f64,
    /// Trapezoid budget N.
    #[arg(short = 'n', long = "n", default_value_t = 25)]
    pub n: usize,
    /// Number of subintervals k.
    #[arg(short = 'k', long = "k", default_value_t = 10)]
    pub k: usize,
    /// Curvature samples S per subinterval.
    #[arg(long = "samples", default_value_t = 100)]
    pub samples: usize,
    /// Output directory (falls back to $HESSQUAD_OUT, then ".").
    #[arg(long, env = "HESSQUAD_OUT")]
    pub out: Option<PathBuf>,
}

/// Training flags. Unset values come from `--config`, then from the
/// per-problem defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct TrainArgs {
    /// poisson2d or diffusion-reaction [default: poisson2d]
    #[arg(long)]
    pub problem: Option<ProblemKind>,
    /// unif, res, grad or hessian [default: hessian]
    #[arg(long)]
    pub strategy: Option<Strategy>,
    /// Training epochs [default: 20000 poisson2d, 100000 diffusion-reaction]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Adam learning rate [default: 1e-3 poisson2d, 1e-4 diffusion-reaction]
    #[arg(long)]
    pub lr: Option<f64>,
    /// Collocation points N [default: 400 poisson2d, 50 diffusion-reaction]
    #[arg(long = "n-colloc")]
    pub n_colloc: Option<usize>,
    /// Candidate pool size [default: 40000 poisson2d, 5000 diffusion-reaction]
    #[arg(long = "pool-size")]
    pub pool_size: Option<usize>,
    /// Exponent tau of the sampling weights [default: 0.5]
    #[arg(long)]
    pub tau: Option<f64>,
    /// Additive constant c of the sampling weights [default: 0]
    #[arg(long)]
    pub c: Option<f64>,
    /// Epochs between resampling events [default: 1000]
    #[arg(long = "resample-every")]
    pub resample_every: Option<usize>,
    /// Epochs before the first resampling event [default: 1000]
    #[arg(long)]
    pub warmup: Option<usize>,
    /// Random seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Test grid points per axis [default: 100]
    #[arg(long)]
    pub grid: Option<usize>,
    /// Initial-condition loss weight [default: 1]
    #[arg(long)]
    pub lambda1: Option<f64>,
    /// Boundary loss weight [default: 1]
    #[arg(long)]
    pub lambda2: Option<f64>,
    /// Output directory [default: $HESSQUAD_OUT, then "."]
    #[arg(long, env = "HESSQUAD_OUT")]
    pub out: Option<PathBuf>,
    /// Write the scored candidate pool of every resampling event
    #[arg(long = "dump-gamma", num_args = 0..=1, default_missing_value = "true", action = ArgAction::Set, default_value_t = false)]
    pub dump_gamma: bool,
    /// Flat key=value file using the flag names above; flags take precedence
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub train: TrainArgs,
    /// Comma-separated seeds
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub seeds: Vec<u64>,
    /// Comma-separated strategies
    #[arg(long, value_delimiter = ',', default_value = "unif,res,grad,hessian")]
    pub strategies: Vec<Strategy>,
}

/// Wrapper used to parse config-file entries with the same rules as flags.
#[derive(Debug, Parser)]
#[command(no_binary_name = true)]
struct ConfigFile {
    #[command(flatten)]
    args: TrainArgs,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Quad(#[from] quad1d::QuadError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Train(TrainError::Config(_)) => EXIT_USAGE,
            _ => EXIT_FAILURE,
        }
    }
}

/// Parses a `key=value` file into [`TrainArgs`]. Blank lines and lines
/// starting with `#` are skipped.
pub fn parse_config(text: &str) -> Result<TrainArgs, CliError> {
    let mut argv = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("config line {}: expected key=value", lineno + 1)))?;
        let key = key.trim();
        if key == "config" {
            return Err(CliError::Usage("config files cannot include other config files".into()));
        }
        argv.push(format!("--{key}={}", value.trim()));
    }
    ConfigFile::try_parse_from(argv)
        .map(|c| c.args)
        .map_err(|e| CliError::Usage(format!("config file: {}", e.render().to_string().trim())))
}

impl TrainArgs {
    /// Fills unset fields from `other`.
    fn or(self, other: TrainArgs) -> TrainArgs {
        TrainArgs {
            problem: self.problem.or(other.problem),
            strategy: self.strategy.or(other.strategy),
            epochs: self.epochs.or(other.epochs),
            lr: self.lr.or(other.lr),
            n_colloc: self.n_colloc.or(other.n_colloc),
            pool_size: self.pool_size.or(other.pool_size),
            tau: self.tau.or(other.tau),
            c: self.c.or(other.c),
            resample_every: self.resample_every.or(other.resample_every),
            warmup: self.warmup.or(other.warmup),
            seed: self.seed.or(other.seed),
            grid: self.grid.or(other.grid),
            lambda1: self.lambda1.or(other.lambda1),
            lambda2: self.lambda2.or(other.lambda2),
            out: self.out.or(other.out),
            dump_gamma: self.dump_gamma || other.dump_gamma,
            config: None,
        }
    }

    /// Merges the config file, if any, under the explicit flags.
    pub fn resolve(self) -> Result<TrainArgs, CliError> {
        match self.config.clone() {
            Some(path) => {
                let text = fs::read_to_string(&path)
                    .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
                Ok(self.or(parse_config(&text)?))
            }
            None => Ok(self),
        }
    }

    /// The training configuration, with per-problem defaults for unset
    /// fields.
    pub fn to_config(&self) -> TrainConfig {
        let base = TrainConfig::defaults(self.problem.unwrap_or(ProblemKind::Poisson2d));
        TrainConfig {
            strategy: self.strategy.unwrap_or(base.strategy),
            epochs: self.epochs.unwrap_or(base.epochs),
            lr: self.lr.unwrap_or(base.lr),
            n_colloc: self.n_colloc.unwrap_or(base.n_colloc),
            pool_size: self.pool_size.unwrap_or(base.pool_size),
            tau: self.tau.unwrap_or(base.tau),
            c: self.c.unwrap_or(base.c),
            resample_every: self.resample_every.unwrap_or(base.resample_every),
            warmup_epochs: self.warmup.unwrap_or(base.warmup_epochs),
            seed: self.seed.unwrap_or(base.seed),
            test_grid: self.grid.unwrap_or(base.test_grid),
            lambda1: self.lambda1.unwrap_or(base.lambda1),
            lambda2: self.lambda2.unwrap_or(base.lambda2),
            ..base
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("."))
    }
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::QuadDemo(args) => quad_demo(&args, &mut std::io::stdout().lock()),
        Command::Train(args) => train(args),
        Command::Compare(args) => compare(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Both quadrature results of a demo run.
#[derive(Debug, Clone)]
pub struct QuadDemo {
    pub reference: f64,
    pub uniform: QuadratureResult,
    pub refined: QuadratureResult,
}

/// Computes the uniform and refined rules with their bounds and relative
/// errors against a Simpson reference.
pub fn quad_compare(name: &str, iv: Interval, n: usize, k: usize, s: usize) -> Result<QuadDemo, CliError> {
    let g = Integrand::builtin(name).ok_or_else(|| {
        CliError::Usage(format!(
            "unknown function {name:?} (expected one of: {})",
            BUILTIN_INTEGRANDS.join(", ")
        ))
    })?;
    if k == 0 || k > n {
        return Err(CliError::Usage(format!("need 1 <= k <= N, got k = {k}, N = {n}")));
    }
    let g = g.with_simpson_reference(iv)?;
    let m_global = (0..k)
        .map(|j| quad1d::max_abs_f2(&g, iv.split(k, j), s))
        .try_fold(0.0_f64, |m, mj| mj.map(|mj| m.max(mj)))?;
    let mut uniform = quad1d::uniform_trapezoid(&g, iv, n)?;
    uniform.bound = Some(quad1d::bound_uniform(m_global, iv, n));
    let refined = quad1d::refined_trapezoid(&g, iv, n, k, s)?;
    Ok(QuadDemo {
        reference: g.reference_value().unwrap_or(f64::NAN),
        uniform,
        refined,
    })
}

fn percent(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".to_string(), |v| format!("{:.4}%", 100.0 * v))
}

pub fn quad_demo<W: Write>(args: &QuadArgs, stdout: &mut W) -> Result<i32, CliError> {
    let iv = Interval::new(args.a, args.b).map_err(|e| CliError::Usage(e.to_string()))?;
    let demo = quad_compare(&args.function, iv, args.n, args.k, args.samples)?;
    writeln!(
        stdout,
        "{} on [{}, {}], N = {}, k = {}, S = {}",
        args.function, args.a, args.b, args.n, args.k, args.samples
    )?;
    writeln!(stdout, "reference (Simpson, {REFERENCE_PANELS} panels): {:.16}", demo.reference)?;
    for (label, r) in [("uniform", &demo.uniform), ("refined", &demo.refined)] {
        writeln!(
            stdout,
            "{label:<8} value {:.16}  trapezoids {:>4}  rel. error {:>10}  bound {:.6e}",
            r.value,
            r.n_trapezoids,
            percent(r.rel_error),
            r.bound.unwrap_or(f64::NAN),
        )?;
    }

    let out = args.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&out)?;
    let path = out.join("quad_points.csv");
    let g = Integrand::builtin(&args.function).expect("checked above");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(QUAD_POINTS_HEADER)?;
    for (label, r) in [("uniform", &demo.uniform), ("refined", &demo.refined)] {
        for pair in r.nodes.windows(2) {
            w.write_record([
                label.to_string(),
                pair[0].to_string(),
                pair[1].to_string(),
                g.eval(pair[0])?.to_string(),
                g.eval(pair[1])?.to_string(),
            ])?;
        }
    }
    w.flush()?;
    writeln!(stdout, "wrote {}", path.display())?;
    Ok(0)
}

/// File stem shared by every output of one run.
pub fn run_stem(cfg: &TrainConfig) -> String {
    format!("{}_{}_seed{}", cfg.problem, cfg.strategy, cfg.seed)
}

/// Runs one configuration and writes its run, heatmap, checkpoint and
/// (optionally) gamma files into `out`.
pub fn run_and_write(cfg: &TrainConfig, out: &Path, dump_gamma: bool) -> Result<RunRecord, TrainError> {
    fs::create_dir_all(out)?;
    let stem = run_stem(cfg);
    log::info!("training {stem}");
    let result = trainer::train_with(cfg, Exec::default(), |ev| {
        if dump_gamma {
            let path = out.join(format!("gamma_{stem}_event{:03}.csv", ev.index));
            write_gamma_csv(ev.pool, BufWriter::new(File::create(path)?))?;
        }
        Ok(())
    });
    match result {
        Ok(rec) => {
            rec.write_csv(BufWriter::new(File::create(out.join(format!("run_{stem}.csv")))?))?;
            rec.heatmap
                .write_csv(BufWriter::new(File::create(out.join(format!("heatmap_{stem}.csv")))?))?;
            rec.net.save(out.join(format!("net_{stem}.txt")))?;
            Ok(rec)
        }
        Err(TrainError::Diverged {
            epoch,
            last_finite_epoch,
            rows,
        }) => {
            write_rows(&rows, BufWriter::new(File::create(out.join(format!("run_{stem}.csv")))?))?;
            Err(TrainError::Diverged {
                epoch,
                last_finite_epoch,
                rows,
            })
        }
        Err(e) => Err(e),
    }
}

fn train(args: TrainArgs) -> Result<i32, CliError> {
    let args = args.resolve()?;
    let cfg = args.to_config();
    cfg.validate()?;
    let rec = run_and_write(&cfg, &args.out_dir(), args.dump_gamma)?;
    println!(
        "{}: final l2 {:.6e}, train loss {:.6e}, {} resampling events, {:.1} s",
        run_stem(&cfg),
        rec.final_l2(),
        rec.rows.last().map_or(f64::NAN, |r: &LogRow| r.train_loss),
        rec.resample_events,
        rec.wall_time_s()
    );
    Ok(0)
}

/// One row of `summary.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub strategy: Strategy,
    pub seed: u64,
    pub final_l2: f64,
    pub wall_time_s: f64,
    pub status: String,
}

pub fn write_summary<W: Write>(rows: &[SummaryRow], w: W) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SUMMARY_HEADER)?;
    for r in rows {
        out.write_record([
            r.strategy.to_string(),
            r.seed.to_string(),
            r.final_l2.to_string(),
            r.wall_time_s.to_string(),
            r.status.clone(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

fn compare(args: CompareArgs) -> Result<i32, CliError> {
    let train = args.train.resolve()?;
    if train.strategy.is_some() {
        return Err(CliError::Usage("compare takes --strategies, not --strategy".into()));
    }
    let out = train.out_dir();
    let mut rows = Vec::new();
    let mut succeeded = BTreeSet::new();
    for &seed in &args.seeds {
        for &strategy in &args.strategies {
            let cfg = TrainConfig {
                strategy,
                seed,
                ..train.to_config()
            };
            cfg.validate()?;
            let row = match run_and_write(&cfg, &out, train.dump_gamma) {
                Ok(rec) => {
                    succeeded.insert(strategy.name());
                    SummaryRow {
                        strategy,
                        seed,
                        final_l2: rec.final_l2(),
                        wall_time_s: rec.wall_time_s(),
                        status: "ok".into(),
                    }
                }
                Err(TrainError::Diverged {
                    epoch, ref rows, ..
                }) => {
                    log::warn!("{} diverged at epoch {epoch}", run_stem(&cfg));
                    SummaryRow {
                        strategy,
                        seed,
                        final_l2: rows.last().map_or(f64::NAN, |r| r.l2_error),
                        wall_time_s: rows.last().map_or(0.0, |r| r.wall_time_s),
                        status: format!("diverged@{epoch}"),
                    }
                }
                Err(e) => return Err(e.into()),
            };
            println!(
                "{:<8} seed {:<4} final l2 {:.6e}  {:.1} s  {}",
                row.strategy, row.seed, row.final_l2, row.wall_time_s, row.status
            );
            rows.push(row);
        }
    }
    let path = out.join("summary.csv");
    write_summary(&rows, BufWriter::new(File::create(&path)?))?;
    println!("wrote {}", path.display());
    let all_ok = args.strategies.iter().all(|s| succeeded.contains(s.name()));
    Ok(if all_ok { 0 } else { EXIT_FAILURE })
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn config_file_parses_flag_names() {
        let args = parse_config("# comment\nproblem = diffusion-reaction\n\nepochs=300\nn-colloc=20\ndump-gamma=true\n").unwrap();
        assert_eq!(args.problem, Some(ProblemKind::DiffusionReaction));
        assert_eq!(args.epochs, Some(300));
        assert_eq!(args.n_colloc, Some(20));
        assert!(args.dump_gamma);
        assert!(parse_config("bogus=1").is_err());
        assert!(parse_config("epochs").is_err());
        assert!(parse_config("epochs=many").is_err());
    }

    #[test]
    fn flags_win_over_config() {
        let flags = TrainArgs {
            epochs: Some(10),
            ..TrainArgs::default()
        };
        let merged = flags.or(parse_config("epochs=300\nlr=0.5\nproblem=diffusion-reaction").unwrap());
        let cfg = merged.to_config();
        assert_eq!((cfg.epochs, cfg.lr, cfg.problem), (10, 0.5, ProblemKind::DiffusionReaction));
        assert_eq!(cfg.n_colloc, 50);
    }

    #[test]
    fn defaults_come_from_the_problem() {
        let cfg = TrainArgs::default().to_config();
        assert_eq!(cfg, TrainConfig::defaults(ProblemKind::Poisson2d));
    }

    #[test]
    fn linear_integrand_is_exact() {
        let demo = quad_compare("linear", Interval::new(0.1, 1.0).unwrap(), 25, 10, 100).unwrap();
        assert!(demo.uniform.rel_error.unwrap() < 1e-14);
        assert!(demo.refined.rel_error.unwrap() < 1e-14);
        assert_eq!(demo.uniform.bound, Some(0.0));
        assert_eq!(demo.refined.bound, Some(0.0));
    }

    #[test]
    fn k_equal_to_n_still_bounds() {
        let demo = quad_compare("sin-inv-sqrt", Interval::new(0.1, 1.0).unwrap(), 25, 25, 100).unwrap();
        let r = &demo.refined;
        assert!(r.n_trapezoids >= 25);
        assert!(r.bound.unwrap().is_finite());
        assert!(r.abs_error(demo.reference) <= r.bound.unwrap());
    }

    #[test]
    fn unknown_function_is_a_usage_error() {
        let err = quad_compare("nope", Interval::new(0.0, 1.0).unwrap(), 4, 2, 10).unwrap_err();
        assert_eq!(err.exit_code(), EXIT_USAGE);
    }
}
