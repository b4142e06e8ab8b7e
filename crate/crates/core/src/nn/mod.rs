//! Fully-connected tanh networks with exact second-order input derivatives.
//!
//! A network maps `d_in` inputs through tanh hidden layers to one linear
//! output. [`DenseNet::jet2`] propagates value, gradient and Hessian with
//! respect to the inputs layer by layer; [`DenseNet::loss_grad`] differentiates
//! any per-point loss of those jets with respect to the parameters.

mod adam;
mod checkpoint;
mod jet;

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use adam::Adam;
pub use checkpoint::CHECKPOINT_MAGIC;
pub use jet::{Jet2, JetOrder, JetView, PointLoss};

use crate::exec::Exec;
use crate::points::PointSet;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("invalid network shape: {0}")]
    Shape(String),
    #[error("parameter vector has length {got}, shape needs {expected}")]
    ParamCount { expected: usize, got: usize },
    #[error("loss is not finite (value {value}) at point {point:?}")]
    NonFiniteLoss { value: f64, point: Vec<f64> },
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Layer widths of a scalar-output network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetShape {
    d_in: usize,
    hidden: Vec<usize>,
}

impl NetShape {
    pub fn new(d_in: usize, hidden: Vec<usize>) -> Result<Self, NnError> {
        if d_in == 0 {
            return Err(NnError::Shape("need at least one input".into()));
        }
        if hidden.is_empty() || hidden.contains(&0) {
            return Err(NnError::Shape("hidden layers must be non-empty with positive widths".into()));
        }
        Ok(Self { d_in, hidden })
    }

    /// Three hidden layers of 20 units.
    pub fn pinn_default(d_in: usize) -> Self {
        Self::new(d_in, vec![20, 20, 20]).expect("valid default shape")
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        1
    }

    pub fn hidden(&self) -> &[usize] {
        &self.hidden
    }

    /// `[d_in, hidden..., 1]`.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 2);
        w.push(self.d_in);
        w.extend_from_slice(&self.hidden);
        w.push(1);
        w
    }

    pub fn param_count(&self) -> usize {
        self.widths().windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

/// Offsets of one affine layer inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct LayerSpan {
    pub fan_in: usize,
    pub fan_out: usize,
    /// Row-major `fan_out x fan_in` weights.
    pub w: usize,
    pub b: usize,
}

/// A tanh multilayer perceptron with a linear scalar output.
///
/// Parameters live in one flat vector, layer by layer, each layer storing its
/// row-major weight matrix followed by its bias.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    shape: NetShape,
    layers: Vec<LayerSpan>,
    params: Vec<f64>,
}

fn layout(shape: &NetShape) -> Vec<LayerSpan> {
    let mut off = 0;
    shape
        .widths()
        .windows(2)
        .map(|w| {
            let span = LayerSpan {
                fan_in: w[0],
                fan_out: w[1],
                w: off,
                b: off + w[0] * w[1],
            };
            off += w[0] * w[1] + w[1];
            span
        })
        .collect()
}

impl DenseNet {
    /// Glorot-uniform weights, zero biases, reproducible from `seed`.
    pub fn init(shape: NetShape, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = layout(&shape);
        let mut params = vec![0.0; shape.param_count()];
        for span in &layers {
            let limit = (6.0 / (span.fan_in + span.fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit).expect("finite Glorot limit");
            for p in &mut params[span.w..span.b] {
                *p = dist.sample(&mut rng);
            }
        }
        Self { shape, layers, params }
    }

    pub fn from_params(shape: NetShape, params: Vec<f64>) -> Result<Self, NnError> {
        let expected = shape.param_count();
        if params.len() != expected {
            return Err(NnError::ParamCount {
                expected,
                got: params.len(),
            });
        }
        let layers = layout(&shape);
        Ok(Self { shape, layers, params })
    }

    pub fn shape(&self) -> &NetShape {
        &self.shape
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub(crate) fn layers(&self) -> &[LayerSpan] {
        &self.layers
    }

    /// Network output at `x`.
    pub fn value(&self, x: &[f64]) -> f64 {
        jet::Workspace::new(self, JetOrder::Value).forward(self, x).value()
    }

    /// Output with its input gradient and Hessian at `x`.
    pub fn jet2(&self, x: &[f64]) -> Jet2 {
        jet::Workspace::new(self, JetOrder::Second).forward(self, x).to_jet2()
    }

    /// A reusable evaluator holding the buffers of one forward pass.
    pub fn evaluator(&self, order: JetOrder) -> JetEvaluator<'_> {
        JetEvaluator {
            net: self,
            ws: jet::Workspace::new(self, order),
        }
    }

    /// Network outputs at every point of `points`.
    pub fn values(&self, points: &PointSet, exec: Exec) -> Vec<f64> {
        self.batch_map(points, JetOrder::Value, exec, |_, jet| jet.value())
    }

    /// Applies `f(point, jet)` at every point, in index order.
    pub fn batch_map<T, F>(&self, points: &PointSet, order: JetOrder, exec: Exec, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(&[f64], JetView<'_>) -> T + Sync + Send,
    {
        let chunks = exec.map_chunks(points.len(), BATCH_CHUNK, |range| {
            let mut ws = jet::Workspace::new(self, order);
            range
                .map(|i| {
                    let p = points.get(i);
                    let view = ws.forward(self, p);
                    f(p, view)
                })
                .collect::<Vec<T>>()
        });
        chunks.into_iter().flatten().collect()
    }

    /// Total loss `sum_groups sum_points loss(point, jet)` and its gradient
    /// with respect to every parameter.
    ///
    /// Points are processed in fixed chunks whose partial sums are added in
    /// order, so the result is bitwise independent of `exec`.
    pub fn loss_grad(&self, groups: &[(&PointSet, &dyn PointLoss)], exec: Exec) -> Result<(f64, Vec<f64>), NnError> {
        let mut total = 0.0;
        let mut grad = vec![0.0; self.params.len()];
        for (points, loss) in groups {
            let partials = exec.map_chunks(points.len(), BATCH_CHUNK, |range| {
                let mut ws = jet::Workspace::new(self, loss.order());
                let mut g = vec![0.0; self.params.len()];
                let mut acc = 0.0;
                for i in range {
                    let p = points.get(i);
                    let l = ws.forward_backward(self, p, *loss, &mut g);
                    if !l.is_finite() {
                        return Err(NnError::NonFiniteLoss {
                            value: l,
                            point: p.to_vec(),
                        });
                    }
                    acc += l;
                }
                Ok((acc, g))
            });
            for part in partials {
                let (l, g) = part?;
                total += l;
                for (dst, src) in grad.iter_mut().zip(&g) {
                    *dst += src;
                }
            }
        }
        Ok((total, grad))
    }

    /// Loss only, with the same chunked summation order as [`Self::loss_grad`].
    pub fn loss(&self, groups: &[(&PointSet, &dyn PointLoss)], exec: Exec) -> Result<f64, NnError> {
        let mut total = 0.0;
        for (points, loss) in groups {
            let partials = exec.map_chunks(points.len(), BATCH_CHUNK, |range| {
                let mut ws = jet::Workspace::new(self, loss.order());
                let mut seed = vec![0.0; loss.order().channels(self.shape.d_in)];
                let mut acc = 0.0;
                for i in range {
                    let p = points.get(i);
                    let view = ws.forward(self, p);
                    let l = loss.eval(p, view, &mut seed);
                    if !l.is_finite() {
                        return Err(NnError::NonFiniteLoss {
                            value: l,
                            point: p.to_vec(),
                        });
                    }
                    acc += l;
                }
                Ok(acc)
            });
            for part in partials {
                total += part?;
            }
        }
        Ok(total)
    }
}

const BATCH_CHUNK: usize = 32;

/// Forward evaluation without per-call allocation; one per thread.
pub struct JetEvaluator<'a> {
    net: &'a DenseNet,
    ws: jet::Workspace,
}

impl JetEvaluator<'_> {
    pub fn eval(&mut self, x: &[f64]) -> JetView<'_> {
        self.ws.forward(self.net, x)
    }
}
