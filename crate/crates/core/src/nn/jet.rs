//! Second-order forward jets through the network and their reverse sweep.
//!
//! A jet at one layer is stored channel-major: channel 0 is the value,
//! channels `1..=d` the input gradient and the following `d * d` channels
//! the row-major input Hessian. Through `h = tanh(z)`:
//!
//! ```text
//! h    = t
//! h_i  = t' z_i
//! h_ij = t' z_ij + t'' z_i z_j       t' = 1 - t^2,  t'' = -2 t t'
//! ```

use super::{DenseNet, LayerSpan};

/// Which derivatives a forward pass carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JetOrder {
    /// Output value only.
    Value,
    /// Value, input gradient and input Hessian.
    Second,
}

impl JetOrder {
    pub fn channels(self, d_in: usize) -> usize {
        match self {
            JetOrder::Value => 1,
            JetOrder::Second => 1 + d_in + d_in * d_in,
        }
    }
}

/// Value, input gradient and input Hessian of a scalar function at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet2 {
    pub value: f64,
    pub grad: Vec<f64>,
    /// Row-major `d x d`.
    pub hess: Vec<f64>,
}

impl Jet2 {
    pub fn zero(d: usize) -> Self {
        Self {
            value: 0.0,
            grad: vec![0.0; d],
            hess: vec![0.0; d * d],
        }
    }

    pub fn dim(&self) -> usize {
        self.grad.len()
    }

    pub fn hess(&self, i: usize, j: usize) -> f64 {
        self.hess[i * self.dim() + j]
    }

    pub fn view(&self) -> JetView<'_> {
        JetView {
            d: self.dim(),
            order: JetOrder::Second,
            channels: Channels::Owned(self),
        }
    }
}

#[derive(Clone, Copy)]
enum Channels<'a> {
    Flat(&'a [f64]),
    Owned(&'a Jet2),
}

/// Borrowed view of an output jet.
#[derive(Clone, Copy)]
pub struct JetView<'a> {
    d: usize,
    order: JetOrder,
    channels: Channels<'a>,
}

impl<'a> JetView<'a> {
    pub(crate) fn flat(d: usize, order: JetOrder, channels: &'a [f64]) -> Self {
        Self {
            d,
            order,
            channels: Channels::Flat(channels),
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn order(&self) -> JetOrder {
        self.order
    }

    pub fn value(&self) -> f64 {
        match self.channels {
            Channels::Flat(c) => c[0],
            Channels::Owned(j) => j.value,
        }
    }

    /// `du/dx_i`. Panics on value-only jets.
    pub fn grad(&self, i: usize) -> f64 {
        assert_eq!(self.order, JetOrder::Second, "gradient of a value-only jet");
        match self.channels {
            Channels::Flat(c) => c[1 + i],
            Channels::Owned(j) => j.grad[i],
        }
    }

    /// `d2u/dx_i dx_j`. Panics on value-only jets.
    pub fn hess(&self, i: usize, j: usize) -> f64 {
        assert_eq!(self.order, JetOrder::Second, "Hessian of a value-only jet");
        match self.channels {
            Channels::Flat(c) => c[1 + self.d + i * self.d + j],
            Channels::Owned(jet) => jet.hess(i, j),
        }
    }

    pub fn to_jet2(&self) -> Jet2 {
        let d = self.d;
        let mut jet = Jet2::zero(d);
        jet.value = self.value();
        if self.order == JetOrder::Second {
            for i in 0..d {
                jet.grad[i] = self.grad(i);
                for j in 0..d {
                    jet.hess[i * d + j] = self.hess(i, j);
                }
            }
        }
        jet
    }
}

/// A per-point scalar loss of the network jet.
///
/// `eval` returns the loss at `point` and writes its derivative with respect
/// to each jet channel (value, gradient, Hessian; see [`JetOrder::channels`])
/// into `seed`, which arrives zeroed.
pub trait PointLoss: Sync {
    fn order(&self) -> JetOrder;
    fn eval(&self, point: &[f64], jet: JetView<'_>, seed: &mut [f64]) -> f64;
}

struct TanhCache {
    t: Vec<f64>,
    t1: Vec<f64>,
    t2: Vec<f64>,
}

/// Per-thread buffers for one forward (and optionally backward) pass.
pub(crate) struct Workspace {
    d: usize,
    order: JetOrder,
    channels: usize,
    /// Input jet of every layer.
    acts: Vec<Vec<f64>>,
    /// Pre-activation jet of every layer.
    zs: Vec<Vec<f64>>,
    tanh: Vec<TanhCache>,
    seed: Vec<f64>,
    zbar: Vec<f64>,
    abar: Vec<f64>,
}

impl Workspace {
    pub fn new(net: &DenseNet, order: JetOrder) -> Self {
        let d = net.shape().d_in();
        let c = order.channels(d);
        let layers = net.layers();
        let max_w = layers.iter().map(|s| s.fan_in.max(s.fan_out)).max().unwrap_or(1);
        Self {
            d,
            order,
            channels: c,
            acts: layers.iter().map(|s| vec![0.0; c * s.fan_in]).collect(),
            zs: layers.iter().map(|s| vec![0.0; c * s.fan_out]).collect(),
            tanh: layers
                .iter()
                .map(|s| TanhCache {
                    t: vec![0.0; s.fan_out],
                    t1: vec![0.0; s.fan_out],
                    t2: vec![0.0; s.fan_out],
                })
                .collect(),
            seed: vec![0.0; c],
            zbar: vec![0.0; c * max_w],
            abar: vec![0.0; c * max_w],
        }
    }

    pub fn forward(&mut self, net: &DenseNet, x: &[f64]) -> JetView<'_> {
        let d = self.d;
        assert_eq!(x.len(), d, "input dimension mismatch");
        let c = self.channels;
        let params = net.params();
        let layers = net.layers();

        let input = &mut self.acts[0];
        input.fill(0.0);
        input[..d].copy_from_slice(x);
        if self.order == JetOrder::Second {
            for i in 0..d {
                input[(1 + i) * d + i] = 1.0;
            }
        }

        let last = layers.len() - 1;
        for (l, span) in layers.iter().enumerate() {
            affine(span, params, &self.acts[l], &mut self.zs[l], c);
            if l < last {
                let next = &mut self.acts[l + 1];
                tanh_forward(self.order, d, span.fan_out, &self.zs[l], next, &mut self.tanh[l]);
            }
        }
        JetView::flat(d, self.order, &self.zs[last])
    }

    /// Forward pass, loss evaluation and accumulation of the loss gradient
    /// into `grad`. Returns the loss.
    pub fn forward_backward(&mut self, net: &DenseNet, x: &[f64], loss: &dyn PointLoss, grad: &mut [f64]) -> f64 {
        debug_assert_eq!(loss.order(), self.order);
        let c = self.channels;
        self.forward(net, x);
        let last = net.layers().len() - 1;
        self.seed.fill(0.0);
        let value = {
            let view = JetView::flat(self.d, self.order, &self.zs[last]);
            loss.eval(x, view, &mut self.seed)
        };
        if !value.is_finite() {
            return value;
        }

        let params = net.params();
        let layers = net.layers();
        self.zbar[..c].copy_from_slice(&self.seed);
        for l in (0..layers.len()).rev() {
            let span = layers[l];
            let (m, w) = (span.fan_in, span.fan_out);
            let a = &self.acts[l];
            for o in 0..w {
                let row = &mut grad[span.w + o * m..span.w + (o + 1) * m];
                for ch in 0..c {
                    let zb = self.zbar[ch * w + o];
                    if zb == 0.0 {
                        continue;
                    }
                    let a_ch = &a[ch * m..(ch + 1) * m];
                    for (g, av) in row.iter_mut().zip(a_ch) {
                        *g += zb * av;
                    }
                }
                grad[span.b + o] += self.zbar[o];
            }
            if l == 0 {
                break;
            }
            let wmat = &params[span.w..span.b];
            self.abar[..c * m].fill(0.0);
            for ch in 0..c {
                let ab = &mut self.abar[ch * m..(ch + 1) * m];
                for o in 0..w {
                    let zb = self.zbar[ch * w + o];
                    if zb == 0.0 {
                        continue;
                    }
                    for (dst, wv) in ab.iter_mut().zip(&wmat[o * m..(o + 1) * m]) {
                        *dst += wv * zb;
                    }
                }
            }
            tanh_backward(
                self.order,
                self.d,
                m,
                &self.zs[l - 1],
                &self.tanh[l - 1],
                &self.abar[..c * m],
                &mut self.zbar[..c * m],
            );
        }
        value
    }
}

fn affine(span: &LayerSpan, params: &[f64], a: &[f64], z: &mut [f64], c: usize) {
    let (m, w) = (span.fan_in, span.fan_out);
    let wmat = &params[span.w..span.b];
    let bias = &params[span.b..span.b + w];
    for o in 0..w {
        let row = &wmat[o * m..(o + 1) * m];
        for ch in 0..c {
            let a_ch = &a[ch * m..(ch + 1) * m];
            let mut acc = 0.0;
            for (wv, av) in row.iter().zip(a_ch) {
                acc += wv * av;
            }
            z[ch * w + o] = if ch == 0 { acc + bias[o] } else { acc };
        }
    }
}

fn tanh_forward(order: JetOrder, d: usize, w: usize, z: &[f64], h: &mut [f64], cache: &mut TanhCache) {
    for u in 0..w {
        let t = z[u].tanh();
        let t1 = 1.0 - t * t;
        let t2 = -2.0 * t * t1;
        cache.t[u] = t;
        cache.t1[u] = t1;
        cache.t2[u] = t2;
        h[u] = t;
        if order == JetOrder::Second {
            for i in 0..d {
                h[(1 + i) * w + u] = t1 * z[(1 + i) * w + u];
            }
            for i in 0..d {
                let zi = z[(1 + i) * w + u];
                for j in 0..d {
                    let zj = z[(1 + j) * w + u];
                    let k = (1 + d + i * d + j) * w + u;
                    h[k] = t1 * z[k] + t2 * (zi * zj);
                }
            }
        }
    }
}

fn tanh_backward(order: JetOrder, d: usize, w: usize, z: &[f64], cache: &TanhCache, hbar: &[f64], zbar: &mut [f64]) {
    for u in 0..w {
        let (t, t1, t2) = (cache.t[u], cache.t1[u], cache.t2[u]);
        let mut zb0 = hbar[u] * t1;
        if order == JetOrder::Second {
            let zi = |i: usize| z[(1 + i) * w + u];
            let hess_idx = |i: usize, j: usize| (1 + d + i * d + j) * w + u;
            let mut t1bar = 0.0;
            let mut t2bar = 0.0;
            for i in 0..d {
                let gi = (1 + i) * w + u;
                t1bar += hbar[gi] * z[gi];
                let mut cross = 0.0;
                for j in 0..d {
                    let hij = hbar[hess_idx(i, j)];
                    cross += (hij + hbar[hess_idx(j, i)]) * zi(j);
                    t1bar += hij * z[hess_idx(i, j)];
                    t2bar += hij * (zi(i) * zi(j));
                    zbar[hess_idx(i, j)] = hij * t1;
                }
                zbar[gi] = hbar[gi] * t1 + t2 * cross;
            }
            zb0 += t1bar * t2 + t2bar * (-2.0 * (t1 * t1 + t * t2));
        }
        zbar[u] = zb0;
    }
}
