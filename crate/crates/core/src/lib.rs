//! Curvature-refined trapezoid quadrature and residual-driven adaptive
//! collocation sampling for physics-informed neural networks.
//!
//! The crate is organised bottom-up:
//!
//! * [`quad1d`]: uniform and curvature-refined composite trapezoid rules with
//!   computable a-priori error bounds.
//! * [`nn`]: a small fully-connected tanh network with exact second-order
//!   input jets, reverse-mode parameter gradients and an Adam optimizer.
//! * [`residuals`]: the Poisson and diffusion-reaction benchmarks.
//! * [`sampler`]: candidate pools, the gamma criteria and the weighted
//!   resampling of collocation points.
//! * [`trainer`]: the adaptive training loop and error metrics.
//! * [`cli`]: the `hessquad` command-line front end.
//!
//! Data-parallel loops go through [`exec::Exec`]; with the `parallel`
//! feature disabled every path runs sequentially and produces bitwise
//! identical results.

pub mod cli;
pub mod exec;
pub mod nn;
pub mod points;
pub mod quad1d;
pub mod residuals;
pub mod sampler;
pub mod trainer;

pub use exec::Exec;
pub use points::PointSet;
