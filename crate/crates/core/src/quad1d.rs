//! One-dimensional composite trapezoid quadrature on uniform and
//! curvature-refined partitions, with a-priori error bounds.
//!
//! The refined rule splits `[a, b]` into `k` equal subintervals, estimates
//! `M_j = max |f''|` on each from `S` equispaced samples, and spends
//! `n_j = ceil(N * sqrt(M_j) / sum_p sqrt(M_p))` trapezoids on subinterval
//! `j`. Its bound `sum_j l^3 M_j / (12 n_j^2)` never exceeds the uniform
//! bound `(b - a)^3 max_j M_j / (12 N^2)`.

use std::fmt;

use thiserror::Error;

use crate::exec::Exec;

/// Errors raised by the quadrature routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadError {
    #[error("invalid interval [{a}, {b}]: endpoints must be finite with a < b")]
    InvalidInterval { a: f64, b: f64 },
    #[error("integrand is not finite at x = {x} (got {value})")]
    NonFinite { x: f64, value: f64 },
    #[error("second derivative is not finite at x = {x} (got {value})")]
    NonFiniteSecondDerivative { x: f64, value: f64 },
    #[error("need at least one trapezoid")]
    ZeroPanels,
    #[error("need at least two curvature samples per subinterval, got {0}")]
    TooFewSamples(usize),
    #[error("subinterval count k = {k} must satisfy 1 <= k <= N = {n}")]
    BadSubintervalCount { k: usize, n: usize },
    #[error("curvature estimates must be finite and non-negative")]
    InvalidCurvature,
    #[error("all curvature estimates are zero")]
    DegenerateCurvature,
    #[error("Simpson's rule needs a positive even panel count, got {0}")]
    OddPanels(usize),
}

pub type Result<T> = std::result::Result<T, QuadError>;

/// A bounded integration interval `[a, b]` with `a < b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    a: f64,
    b: f64,
}

impl Interval {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if a.is_finite() && b.is_finite() && a < b {
            Ok(Self { a, b })
        } else {
            Err(QuadError::InvalidInterval { a, b })
        }
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn width(&self) -> f64 {
        self.b - self.a
    }

    /// The `j`-th of `k` equal subintervals. The last one ends exactly at `b`.
    pub fn split(&self, k: usize, j: usize) -> Interval {
        debug_assert!(j < k);
        Interval {
            a: self.at(j, k),
            b: self.at(j + 1, k),
        }
    }

    /// The point `a + (b - a) * num / den`, exactly `b` when `num == den`.
    ///
    /// Every node in this module goes through here, so nodes that coincide
    /// as rationals coincide bit for bit.
    fn at(&self, num: usize, den: usize) -> f64 {
        if num == den {
            self.b
        } else {
            self.a + self.width() * (num as f64 / den as f64)
        }
    }

    /// `n + 1` equispaced nodes, both endpoints included exactly.
    pub fn nodes(&self, n: usize) -> Vec<f64> {
        (0..=n).map(|i| self.at(i, n)).collect()
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.a, self.b)
    }
}

type RealFn = Box<dyn Fn(f64) -> f64 + Send + Sync>;

/// A scalar integrand, optionally with its analytic second derivative and a
/// high-precision reference value for error reporting.
pub struct Integrand {
    f: RealFn,
    f2: Option<RealFn>,
    reference_value: Option<f64>,
}

impl fmt::Debug for Integrand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Integrand")
            .field("analytic_f2", &self.f2.is_some())
            .field("reference_value", &self.reference_value)
            .finish()
    }
}

impl Integrand {
    pub fn new(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            f: Box::new(f),
            f2: None,
            reference_value: None,
        }
    }

    pub fn with_second_derivative(mut self, f2: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.f2 = Some(Box::new(f2));
        self
    }

    pub fn with_reference(mut self, value: f64) -> Self {
        self.reference_value = Some(value);
        self
    }

    /// Computes and caches a reference integral with composite Simpson on
    /// [`REFERENCE_PANELS`] panels.
    pub fn with_simpson_reference(self, iv: Interval) -> Result<Self> {
        let value = simpson(&self, iv, REFERENCE_PANELS, Exec::default())?;
        Ok(self.with_reference(value))
    }

    pub fn reference_value(&self) -> Option<f64> {
        self.reference_value
    }

    pub fn has_analytic_second_derivative(&self) -> bool {
        self.f2.is_some()
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        let value = (self.f)(x);
        if value.is_finite() {
            Ok(value)
        } else {
            Err(QuadError::NonFinite { x, value })
        }
    }

    /// `f''(x)`, analytic when available, otherwise a three-point finite
    /// difference with step `1e-4 * width(iv)` that turns one-sided at the
    /// ends of `iv`.
    pub fn second_derivative(&self, x: f64, iv: Interval) -> Result<f64> {
        let value = match &self.f2 {
            Some(f2) => f2(x),
            None => {
                let h = FD_RELATIVE_STEP * iv.width();
                let (x0, x1, x2) = if x - h < iv.a {
                    (x, x + h, x + 2.0 * h)
                } else if x + h > iv.b {
                    (x - 2.0 * h, x - h, x)
                } else {
                    (x - h, x, x + h)
                };
                let f0 = self.eval(x0)?;
                let f1 = self.eval(x1)?;
                let f2 = self.eval(x2)?;
                (f0 - 2.0 * f1 + f2) / (h * h)
            }
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(QuadError::NonFiniteSecondDerivative { x, value })
        }
    }

    /// Built-in integrands used by the `quad-demo` subcommand.
    pub fn builtin(name: &str) -> Option<Integrand> {
        let g = match name {
            "sin-inv-sqrt" => Integrand::new(|x: f64| (1.0 / x.sqrt()).sin()).with_second_derivative(|x: f64| {
                let u = 1.0 / x.sqrt();
                -u.sin() / (4.0 * x.powi(3)) + 3.0 * u.cos() / (4.0 * x.powf(2.5))
            }),
            "linear" => Integrand::new(|x| x).with_second_derivative(|_| 0.0),
            "quadratic" => Integrand::new(|x| x * x).with_second_derivative(|_| 2.0),
            "sin" => Integrand::new(f64::sin).with_second_derivative(|x: f64| -x.sin()),
            "exp" => Integrand::new(f64::exp).with_second_derivative(f64::exp),
            "runge" => Integrand::new(|x: f64| 1.0 / (1.0 + 25.0 * x * x)).with_second_derivative(|x: f64| {
                let q = 1.0 + 25.0 * x * x;
                (5000.0 * x * x - 50.0 * q) / q.powi(3)
            }),
            _ => return None,
        };
        Some(g)
    }
}

/// Names accepted by [`Integrand::builtin`].
pub const BUILTIN_INTEGRANDS: &[&str] = &["sin-inv-sqrt", "linear", "quadratic", "sin", "exp", "runge"];

/// Panel count of the Simpson reference integrals.
pub const REFERENCE_PANELS: usize = 1_000_000;

const FD_RELATIVE_STEP: f64 = 1e-4;
const SIMPSON_CHUNK: usize = 1 << 14;

/// Outcome of a quadrature run.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureResult {
    pub value: f64,
    pub n_trapezoids: usize,
    /// A-priori error bound, when one was computed.
    pub bound: Option<f64>,
    /// `|value - reference| / |reference|` when the integrand carries a
    /// non-zero reference value.
    pub rel_error: Option<f64>,
    /// Trapezoid endpoints in ascending order (`n_trapezoids + 1` entries).
    pub nodes: Vec<f64>,
}

impl QuadratureResult {
    fn new(g: &Integrand, value: f64, nodes: Vec<f64>) -> Self {
        let rel_error = g
            .reference_value
            .filter(|r| *r != 0.0)
            .map(|r| (value - r).abs() / r.abs());
        Self {
            value,
            n_trapezoids: nodes.len() - 1,
            bound: None,
            rel_error,
            nodes,
        }
    }

    pub fn abs_error(&self, reference: f64) -> f64 {
        (self.value - reference).abs()
    }
}

/// Running trapezoid sum over `nodes` with panel width `h`, continuing
/// from `acc`.
fn accumulate(g: &Integrand, nodes: &[f64], h: f64, mut acc: f64) -> Result<f64> {
    let mut prev = g.eval(nodes[0])?;
    for &x in &nodes[1..] {
        let cur = g.eval(x)?;
        acc += 0.5 * h * (prev + cur);
        prev = cur;
    }
    Ok(acc)
}

/// Composite trapezoid rule on `n` equal panels.
pub fn uniform_trapezoid(g: &Integrand, iv: Interval, n: usize) -> Result<QuadratureResult> {
    if n == 0 {
        return Err(QuadError::ZeroPanels);
    }
    let nodes = iv.nodes(n);
    let value = accumulate(g, &nodes, iv.width() / n as f64, 0.0)?;
    Ok(QuadratureResult::new(g, value, nodes))
}

/// Maximum of `|f''|` over `s` equispaced points of `iv`, endpoints included.
pub fn max_abs_f2(g: &Integrand, iv: Interval, s: usize) -> Result<f64> {
    if s < 2 {
        return Err(QuadError::TooFewSamples(s));
    }
    let mut best = 0.0_f64;
    for i in 0..s {
        let x = if i + 1 == s {
            iv.b
        } else {
            iv.a + i as f64 * iv.width() / (s - 1) as f64
        };
        best = best.max(g.second_derivative(x, iv)?.abs());
    }
    Ok(best)
}

/// Trapezoid counts `n_j = max(1, ceil(n * sqrt(M_j) / sum_p sqrt(M_p)))`.
///
/// Fails with [`QuadError::DegenerateCurvature`] when every `M_j` is zero;
/// callers fall back to a uniform rule in that case.
pub fn refined_allocation(curvature: &[f64], n: usize) -> Result<Vec<usize>> {
    let k = curvature.len();
    if k == 0 || k > n {
        return Err(QuadError::BadSubintervalCount { k, n });
    }
    if curvature.iter().any(|m| !m.is_finite() || *m < 0.0) {
        return Err(QuadError::InvalidCurvature);
    }
    let roots: Vec<f64> = curvature.iter().map(|m| m.sqrt()).collect();
    let total: f64 = roots.iter().sum();
    if total == 0.0 {
        return Err(QuadError::DegenerateCurvature);
    }
    Ok(roots
        .iter()
        .map(|r| ((n as f64 * r / total).ceil() as usize).max(1))
        .collect())
}

/// The coarse partition of the refined rule and its trapezoid allocation.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinedPartition {
    interval: Interval,
    /// Width of each coarse subinterval.
    pub width: f64,
    /// `M_j` estimates, one per subinterval.
    pub curvature: Vec<f64>,
    /// Trapezoid counts `n_j`.
    pub counts: Vec<usize>,
    /// Nominal trapezoid budget `N`.
    pub budget: usize,
}

impl RefinedPartition {
    /// Estimates the curvature of `g` on each of `k` subintervals from `s`
    /// samples and allocates `n` trapezoids among them.
    pub fn build(g: &Integrand, iv: Interval, n: usize, k: usize, s: usize) -> Result<Self> {
        if n == 0 {
            return Err(QuadError::ZeroPanels);
        }
        if k == 0 || k > n {
            return Err(QuadError::BadSubintervalCount { k, n });
        }
        let curvature = (0..k)
            .map(|j| max_abs_f2(g, iv.split(k, j), s))
            .collect::<Result<Vec<_>>>()?;
        let counts = refined_allocation(&curvature, n)?;
        Ok(Self {
            interval: iv,
            width: iv.width() / k as f64,
            curvature,
            counts,
            budget: n,
        })
    }

    /// Assembles a partition from explicit curvature values and counts.
    pub fn from_parts(iv: Interval, curvature: Vec<f64>, counts: Vec<usize>, budget: usize) -> Result<Self> {
        let k = curvature.len();
        if k == 0 || counts.len() != k {
            return Err(QuadError::BadSubintervalCount { k, n: budget });
        }
        if counts.contains(&0) {
            return Err(QuadError::ZeroPanels);
        }
        if curvature.iter().any(|m| !m.is_finite() || *m < 0.0) {
            return Err(QuadError::InvalidCurvature);
        }
        Ok(Self {
            interval: iv,
            width: iv.width() / k as f64,
            curvature,
            counts,
            budget,
        })
    }

    pub fn interval(&self) -> Interval {
        self.interval
    }

    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn total_trapezoids(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn max_curvature(&self) -> f64 {
        self.curvature.iter().copied().fold(0.0, f64::max)
    }

    pub fn subinterval(&self, j: usize) -> Interval {
        self.interval.split(self.k(), j)
    }
}

/// Integrates `g` over a refined partition as one running sum over the
/// subintervals in ascending order. With equal counts this reproduces the
/// uniform rule bit for bit.
pub fn integrate_partition(g: &Integrand, part: &RefinedPartition) -> Result<QuadratureResult> {
    let iv = part.interval;
    let k = part.k();
    let mut value = 0.0;
    let mut nodes = vec![iv.a];
    for (j, &n_j) in part.counts.iter().enumerate() {
        let den = k * n_j;
        let piece: Vec<f64> = (0..=n_j).map(|i| iv.at(j * n_j + i, den)).collect();
        value = accumulate(g, &piece, iv.width() / den as f64, value)?;
        nodes.extend_from_slice(&piece[1..]);
    }
    let mut result = QuadratureResult::new(g, value, nodes);
    result.bound = Some(bound_refined(part));
    Ok(result)
}

/// The curvature-refined trapezoid rule with `n` nominal trapezoids over `k`
/// subintervals and `s` curvature samples per subinterval.
///
/// When every curvature estimate vanishes this falls back to the uniform
/// rule with `n` panels and a zero bound.
pub fn refined_trapezoid(g: &Integrand, iv: Interval, n: usize, k: usize, s: usize) -> Result<QuadratureResult> {
    match RefinedPartition::build(g, iv, n, k, s) {
        Ok(part) => integrate_partition(g, &part),
        Err(QuadError::DegenerateCurvature) => {
            let mut result = uniform_trapezoid(g, iv, n)?;
            result.bound = Some(0.0);
            Ok(result)
        }
        Err(e) => Err(e),
    }
}

/// `(b - a)^3 * m_global / (12 n^2)`.
pub fn bound_uniform(m_global: f64, iv: Interval, n: usize) -> f64 {
    debug_assert!(m_global >= 0.0);
    iv.width().powi(3) * m_global / (12.0 * (n as f64).powi(2))
}

/// `sum_j l^3 M_j / (12 n_j^2)`, with `M_j` standing in for `|f''(xi_j)|`.
pub fn bound_refined(part: &RefinedPartition) -> f64 {
    let l3 = part.width.powi(3);
    part.curvature
        .iter()
        .zip(&part.counts)
        .map(|(m, &n)| l3 / 12.0 / (n as f64).powi(2) * m)
        .sum()
}

/// Composite Simpson rule on `panels` (even) panels, reduced in fixed-size
/// chunks so the result does not depend on `exec`.
pub fn simpson(g: &Integrand, iv: Interval, panels: usize, exec: Exec) -> Result<f64> {
    if panels == 0 || panels % 2 == 1 {
        return Err(QuadError::OddPanels(panels));
    }
    let h = iv.width() / panels as f64;
    let node = |i: usize| if i == panels { iv.b } else { iv.a + i as f64 * h };
    let partials = exec.map_chunks(panels + 1, SIMPSON_CHUNK, |range| -> Result<f64> {
        let mut acc = 0.0;
        for i in range {
            let w = if i == 0 || i == panels {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += w * g.eval(node(i))?;
        }
        Ok(acc)
    });
    let mut total = 0.0;
    for p in partials {
        total += p?;
    }
    Ok(total * h / 3.0)
}
