//! Tape-based reverse-mode differentiation.
//!
//! Every operation appends a node holding its output value and whatever it
//! needs for the backward pass. Nodes are stored in creation order, which
//! is a topological order, so [`Tape::backward`] is a single reverse sweep.
//! Only leaves keep gradients; intermediate gradients are dropped as soon as
//! they have been propagated.

use serde::{Deserialize, Serialize};

use super::{BatchNormState, Scalar, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

/// Reduction over all spatial positions of each channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    #[default]
    Avg,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
}

/// Probabilities are clamped to `[BCE_CLAMP, 1 - BCE_CLAMP]` before the log.
pub const BCE_CLAMP: f64 = 1e-7;

enum Op<T> {
    Leaf,
    Conv2d {
        x: Var,
        w: Var,
        geom: ConvGeom,
    },
    BiasAdd {
        x: Var,
        b: Var,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        mean: Vec<T>,
        inv_std: Vec<T>,
        batch_stats: bool,
    },
    MaxPool2d {
        x: Var,
        argmax: Vec<u32>,
    },
    Relu {
        x: Var,
    },
    Sigmoid {
        x: Var,
    },
    GlobalPool {
        x: Var,
        kind: Pooling,
        argmax: Vec<u32>,
    },
    Bce {
        p: Var,
        targets: Vec<T>,
    },
    Sum {
        x: Var,
    },
    Mul {
        a: Var,
        b: Var,
    },
}

struct Node<T> {
    value: Tensor<T>,
    grad: Option<Vec<T>>,
    requires_grad: bool,
    op: Op<T>,
}

#[derive(Debug, Clone, Copy)]
struct ConvGeom {
    batch: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl ConvGeom {
    fn patch(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }
}

/// A differentiation graph. One tape per forward/backward pass.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Fingerprint of the linear piece the recorded graph sits on: the sign
    /// of every ReLU input, every pooling argmax and every BCE clamp.
    pub fn region(&self) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        let mut mix = |v: u64| {
            h ^= v;
            h = h.wrapping_mul(0x0100_0000_01b3);
        };
        let (lo, hi) = clamp_bounds::<T>();
        for node in &self.nodes {
            match &node.op {
                Op::Relu { x } => self
                    .value(*x)
                    .data()
                    .iter()
                    .for_each(|&v| mix(u64::from(v > T::zero()))),
                Op::MaxPool2d { argmax, .. } | Op::GlobalPool { argmax, .. } => {
                    argmax.iter().for_each(|&a| mix(u64::from(a)))
                }
                Op::Bce { p, .. } => self
                    .value(*p)
                    .data()
                    .iter()
                    .for_each(|&v| mix(u64::from(v < lo) + 2 * u64::from(v > hi))),
                _ => {}
            }
        }
        h
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, parents: &[Var], name: &'static str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: name });
        }
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// 2-D cross-correlation with zero padding. `x` is `[B, C_in, H, W]`
    /// (or unbatched `[C_in, H, W]`), `w` is `[C_out, C_in, kh, kw]`.
    pub fn conv2d(&mut self, x: Var, w: Var, stride: usize, pad: usize) -> Result<Var> {
        let xs = self.value(x).shape().to_vec();
        let ws = self.value(w).shape().to_vec();
        let unbatched = xs.len() == 3;
        let (batch, cin, h, wd) = match xs.as_slice() {
            [b, c, h, w] => (*b, *c, *h, *w),
            [c, h, w] => (1, *c, *h, *w),
            _ => return Err(Error::shape("conv2d", format!("input rank {} (want 3 or 4)", xs.len()))),
        };
        let [cout, wcin, kh, kw] = ws[..] else {
            return Err(Error::shape("conv2d", format!("filter rank {} (want 4)", ws.len())));
        };
        if wcin != cin {
            return Err(Error::shape(
                "conv2d",
                format!("input channels {cin} != filter input channels {wcin}"),
            ));
        }
        if stride == 0 {
            return Err(Error::InvalidArgument("conv2d stride must be >= 1".into()));
        }
        if h + 2 * pad < kh {
            return Err(Error::shape(
                "conv2d",
                format!("height {h} + 2*{pad} < kernel height {kh}"),
            ));
        }
        if wd + 2 * pad < kw {
            return Err(Error::shape(
                "conv2d",
                format!("width {wd} + 2*{pad} < kernel width {kw}"),
            ));
        }
        let geom = ConvGeom {
            batch,
            cin,
            h,
            w: wd,
            cout,
            kh,
            kw,
            stride,
            pad,
            ho: (h + 2 * pad - kh) / stride + 1,
            wo: (wd + 2 * pad - kw) / stride + 1,
        };
        let out = conv_forward(&geom, self.value(x).data(), self.value(w).data());
        let shape = if unbatched {
            vec![cout, geom.ho, geom.wo]
        } else {
            vec![batch, cout, geom.ho, geom.wo]
        };
        self.push(Tensor::new(shape, out)?, Op::Conv2d { x, w, geom }, &[x, w], "conv2d")
    }

    /// Adds a per-channel bias `b: [C]` to `x: [B, C, H, W]`.
    pub fn bias_add(&mut self, x: Var, b: Var) -> Result<Var> {
        let (batch, c, hw) = nchw(self.value(x).shape(), "bias_add")?;
        if self.value(b).len() != c {
            return Err(Error::shape(
                "bias_add",
                format!("bias has {} entries for {c} channels", self.value(b).len()),
            ));
        }
        let bias = self.value(b).data();
        let mut out = self.value(x).data().to_vec();
        for bi in 0..batch {
            for ci in 0..c {
                let off = (bi * c + ci) * hw;
                out[off..off + hw].iter_mut().for_each(|v| *v = *v + bias[ci]);
            }
        }
        let shape = self.value(x).shape().to_vec();
        self.push(Tensor::new(shape, out)?, Op::BiasAdd { x, b }, &[x, b], "bias_add")
    }

    /// Batch normalization over `(batch, H, W)` per channel, followed by the
    /// affine map `gamma * x_hat + beta`. Train mode normalizes with batch
    /// statistics and folds them into the running statistics of `state`;
    /// eval mode uses the running statistics.
    pub fn batch_norm2d(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        state: &mut BatchNormState<T>,
        mode: Mode,
    ) -> Result<Var> {
        let (batch, c, hw) = nchw(self.value(x).shape(), "batch_norm2d")?;
        if state.channels() != c || self.value(gamma).len() != c || self.value(beta).len() != c {
            return Err(Error::shape(
                "batch_norm2d",
                format!(
                    "input has {c} channels, state {}, gamma {}, beta {}",
                    state.channels(),
                    self.value(gamma).len(),
                    self.value(beta).len()
                ),
            ));
        }
        let xv = self.value(x).data();
        let n = batch * hw;
        let (mean, inv_std, batch_stats) = match mode {
            Mode::Train => {
                let mut mean = vec![T::zero(); c];
                let mut var = vec![T::zero(); c];
                for ci in 0..c {
                    let mut s = 0.0f64;
                    for bi in 0..batch {
                        let off = (bi * c + ci) * hw;
                        s += xv[off..off + hw].iter().map(|v| v.to_f64_lossy()).sum::<f64>();
                    }
                    let m = s / n as f64;
                    let mut ss = 0.0f64;
                    for bi in 0..batch {
                        let off = (bi * c + ci) * hw;
                        ss += xv[off..off + hw]
                            .iter()
                            .map(|v| {
                                let d = v.to_f64_lossy() - m;
                                d * d
                            })
                            .sum::<f64>();
                    }
                    mean[ci] = T::from_f64_lossy(m);
                    var[ci] = T::from_f64_lossy(ss / n as f64);
                }
                state.update(&mean, &var, n);
                let inv: Vec<T> = var.iter().map(|&v| (v + state.eps).sqrt().recip()).collect();
                (mean, inv, true)
            }
            Mode::Eval => {
                if !state.initialized {
                    return Err(Error::UninitializedNorm(state.name.clone()));
                }
                let inv = state
                    .running_var
                    .iter()
                    .map(|&v| (v + state.eps).sqrt().recip())
                    .collect();
                (state.running_mean.clone(), inv, false)
            }
        };
        let g = self.value(gamma).data();
        let bt = self.value(beta).data();
        let mut out = vec![T::zero(); xv.len()];
        for bi in 0..batch {
            for ci in 0..c {
                let off = (bi * c + ci) * hw;
                let (m, s, ga, be) = (mean[ci], inv_std[ci], g[ci], bt[ci]);
                for (o, &v) in out[off..off + hw].iter_mut().zip(&xv[off..off + hw]) {
                    *o = ga * (v - m) * s + be;
                }
            }
        }
        let shape = self.value(x).shape().to_vec();
        self.push(
            Tensor::new(shape, out)?,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                mean,
                inv_std,
                batch_stats,
            },
            &[x, gamma, beta],
            "batch_norm2d",
        )
    }

    /// Non-overlapping 2x2 max pooling; odd trailing rows/columns are
    /// dropped. Ties resolve to the first element in row-major order.
    pub fn max_pool2d(&mut self, x: Var) -> Result<Var> {
        let shape = self.value(x).shape().to_vec();
        let (batch, c, h, w) = match shape[..] {
            [b, c, h, w] => (b, c, h, w),
            _ => {
                return Err(Error::shape(
                    "max_pool2d",
                    format!("input rank {} (want 4)", shape.len()),
                ))
            }
        };
        if h < 2 || w < 2 {
            return Err(Error::shape("max_pool2d", format!("spatial size {h}x{w} is below 2x2")));
        }
        let (ho, wo) = (h / 2, w / 2);
        let xv = self.value(x).data();
        let mut out = Vec::with_capacity(batch * c * ho * wo);
        let mut argmax = Vec::with_capacity(batch * c * ho * wo);
        for plane in 0..batch * c {
            let base = plane * h * w;
            for i in 0..ho {
                for j in 0..wo {
                    let r0 = base + 2 * i * w + 2 * j;
                    let r1 = r0 + w;
                    let mut best = r0;
                    for idx in [r0 + 1, r1, r1 + 1] {
                        if xv[idx] > xv[best] {
                            best = idx;
                        }
                    }
                    out.push(xv[best]);
                    argmax.push(best as u32);
                }
            }
        }
        self.push(
            Tensor::new(vec![batch, c, ho, wo], out)?,
            Op::MaxPool2d { x, argmax },
            &[x],
            "max_pool2d",
        )
    }

    pub fn activation(&mut self, x: Var, kind: Activation) -> Result<Var> {
        match kind {
            Activation::Relu => self.relu(x),
            Activation::Sigmoid => self.sigmoid(x),
        }
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let out = t.data().iter().map(|&v| v.max(T::zero())).collect();
        let shape = t.shape().to_vec();
        self.push(Tensor::new(shape, out)?, Op::Relu { x }, &[x], "relu")
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let out = t.data().iter().map(|&v| sigmoid(v)).collect();
        let shape = t.shape().to_vec();
        self.push(Tensor::new(shape, out)?, Op::Sigmoid { x }, &[x], "sigmoid")
    }

    /// Reduces every channel of `x: [B, C, H, W]` over its `H x W`
    /// positions, giving `[B, C]`.
    pub fn global_pool(&mut self, x: Var, kind: Pooling) -> Result<Var> {
        let (batch, c, hw) = nchw(self.value(x).shape(), "global_pool")?;
        if hw == 0 {
            return Err(Error::shape("global_pool", "no spatial positions"));
        }
        let xv = self.value(x).data();
        let mut out = Vec::with_capacity(batch * c);
        let mut argmax = Vec::new();
        for plane in 0..batch * c {
            let s = &xv[plane * hw..(plane + 1) * hw];
            match kind {
                Pooling::Avg => {
                    let mean = s.iter().map(|v| v.to_f64_lossy()).sum::<f64>() / hw as f64;
                    out.push(T::from_f64_lossy(mean));
                }
                Pooling::Max => {
                    let mut best = 0;
                    for (i, v) in s.iter().enumerate() {
                        if *v > s[best] {
                            best = i;
                        }
                    }
                    out.push(s[best]);
                    argmax.push((plane * hw + best) as u32);
                }
            }
        }
        self.push(
            Tensor::new(vec![batch, c], out)?,
            Op::GlobalPool { x, kind, argmax },
            &[x],
            "global_pool",
        )
    }

    /// Mean binary cross-entropy over every entry of `p` (all classes of all
    /// recordings in the batch).
    pub fn bce_loss(&mut self, p: Var, targets: &[T]) -> Result<Var> {
        let pv = self.value(p).data();
        if pv.len() != targets.len() {
            return Err(Error::shape(
                "bce_loss",
                format!("{} probabilities vs {} targets", pv.len(), targets.len()),
            ));
        }
        if pv.is_empty() {
            return Err(Error::shape("bce_loss", "empty input"));
        }
        let (lo, hi) = clamp_bounds::<T>();
        let mut total = 0.0f64;
        for (&pi, &y) in pv.iter().zip(targets) {
            let q = pi.max(lo).min(hi);
            total += -(y * q.ln() + (T::one() - y) * (T::one() - q).ln()).to_f64_lossy();
        }
        let loss = T::from_f64_lossy(total / pv.len() as f64);
        self.push(
            Tensor::scalar(loss),
            Op::Bce {
                p,
                targets: targets.to_vec(),
            },
            &[p],
            "bce_loss",
        )
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data().iter().copied().sum();
        self.push(Tensor::scalar(s), Op::Sum { x }, &[x], "sum")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::shape(
                "mul",
                format!("{:?} vs {:?}", self.value(a).shape(), self.value(b).shape()),
            ));
        }
        let out = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x * y)
            .collect();
        let shape = self.value(a).shape().to_vec();
        self.push(Tensor::new(shape, out)?, Op::Mul { a, b }, &[a, b], "mul")
    }

    /// Back-propagates from a scalar `loss`, accumulating into the gradients
    /// of every leaf that requires them.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::shape(
                "backward",
                format!("root must be scalar, has shape {:?}", self.value(loss).shape()),
            ));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            if matches!(self.nodes[i].op, Op::Leaf) {
                let node = &mut self.nodes[i];
                match &mut node.grad {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, &b)| *a = *a + b),
                    None => node.grad = Some(g),
                }
                continue;
            }
            self.propagate(i, &g, &mut grads);
        }
        for n in &self.nodes {
            if let Some(g) = &n.grad {
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite { op: "backward" });
                }
            }
        }
        Ok(())
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => unreachable!(),
            Op::Conv2d { x, w, geom } => {
                let xv = self.value(*x).data();
                let wv = self.value(*w).data();
                if self.wants(*w) {
                    let dw = slot(grads, *w, wv.len());
                    conv_backward_filter(geom, xv, g, dw);
                }
                if self.wants(*x) {
                    let dx = slot(grads, *x, xv.len());
                    conv_backward_input(geom, wv, g, dx);
                }
            }
            Op::BiasAdd { x, b } => {
                let (batch, c, hw) = nchw(node.value.shape(), "bias_add").expect("checked in forward");
                if self.wants(*x) {
                    add_into(slot(grads, *x, g.len()), g);
                }
                if self.wants(*b) {
                    let db = slot(grads, *b, c);
                    for bi in 0..batch {
                        for (ci, d) in db.iter_mut().enumerate() {
                            let off = (bi * c + ci) * hw;
                            *d = *d + g[off..off + hw].iter().copied().sum();
                        }
                    }
                }
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                mean,
                inv_std,
                batch_stats,
            } => {
                let (batch, c, hw) = nchw(node.value.shape(), "batch_norm2d").expect("checked in forward");
                let xv = self.value(*x).data();
                let gv = self.value(*gamma).data();
                let n = T::from_usize(batch * hw).expect("count");
                let mut sum_dy = vec![T::zero(); c];
                let mut sum_dy_xhat = vec![T::zero(); c];
                for bi in 0..batch {
                    for ci in 0..c {
                        let off = (bi * c + ci) * hw;
                        let (m, s) = (mean[ci], inv_std[ci]);
                        let (mut a, mut b) = (T::zero(), T::zero());
                        for (&dy, &v) in g[off..off + hw].iter().zip(&xv[off..off + hw]) {
                            a = a + dy;
                            b = b + dy * (v - m) * s;
                        }
                        sum_dy[ci] = sum_dy[ci] + a;
                        sum_dy_xhat[ci] = sum_dy_xhat[ci] + b;
                    }
                }
                if self.wants(*gamma) {
                    add_into(slot(grads, *gamma, c), &sum_dy_xhat);
                }
                if self.wants(*beta) {
                    add_into(slot(grads, *beta, c), &sum_dy);
                }
                if self.wants(*x) {
                    let dx = slot(grads, *x, xv.len());
                    for bi in 0..batch {
                        for ci in 0..c {
                            let off = (bi * c + ci) * hw;
                            let (m, s, ga) = (mean[ci], inv_std[ci], gv[ci]);
                            let d = &mut dx[off..off + hw];
                            if *batch_stats {
                                let k = ga * s / n;
                                let (sd, sdx) = (sum_dy[ci], sum_dy_xhat[ci]);
                                for ((o, &dy), &v) in d.iter_mut().zip(&g[off..off + hw]).zip(&xv[off..off + hw]) {
                                    let xhat = (v - m) * s;
                                    *o = *o + k * (n * dy - sd - xhat * sdx);
                                }
                            } else {
                                let k = ga * s;
                                for (o, &dy) in d.iter_mut().zip(&g[off..off + hw]) {
                                    *o = *o + k * dy;
                                }
                            }
                        }
                    }
                }
            }
            Op::MaxPool2d { x, argmax } => {
                if self.wants(*x) {
                    let dx = slot(grads, *x, self.value(*x).len());
                    for (&idx, &dy) in argmax.iter().zip(g) {
                        dx[idx as usize] = dx[idx as usize] + dy;
                    }
                }
            }
            Op::Relu { x } => {
                if self.wants(*x) {
                    let xv = self.value(*x).data();
                    let dx = slot(grads, *x, xv.len());
                    for ((o, &dy), &v) in dx.iter_mut().zip(g).zip(xv) {
                        if v > T::zero() {
                            *o = *o + dy;
                        }
                    }
                }
            }
            Op::Sigmoid { x } => {
                if self.wants(*x) {
                    let yv = node.value.data();
                    let dx = slot(grads, *x, yv.len());
                    for ((o, &dy), &y) in dx.iter_mut().zip(g).zip(yv) {
                        *o = *o + dy * y * (T::one() - y);
                    }
                }
            }
            Op::GlobalPool { x, kind, argmax } => {
                if self.wants(*x) {
                    let (_, _, hw) = nchw(self.value(*x).shape(), "global_pool").expect("checked in forward");
                    let dx = slot(grads, *x, self.value(*x).len());
                    match kind {
                        Pooling::Avg => {
                            let inv = T::from_usize(hw).expect("count").recip();
                            for (plane, &dy) in g.iter().enumerate() {
                                let d = dy * inv;
                                dx[plane * hw..(plane + 1) * hw].iter_mut().for_each(|o| *o = *o + d);
                            }
                        }
                        Pooling::Max => {
                            for (&idx, &dy) in argmax.iter().zip(g) {
                                dx[idx as usize] = dx[idx as usize] + dy;
                            }
                        }
                    }
                }
            }
            Op::Bce { p, targets } => {
                if self.wants(*p) {
                    let pv = self.value(*p).data();
                    let (lo, hi) = clamp_bounds::<T>();
                    let scale = g[0] / T::from_usize(pv.len()).expect("count");
                    let dp = slot(grads, *p, pv.len());
                    for ((o, &pi), &y) in dp.iter_mut().zip(pv).zip(targets) {
                        if pi >= lo && pi <= hi {
                            let d = -y / pi + (T::one() - y) / (T::one() - pi);
                            *o = *o + scale * d;
                        }
                    }
                }
            }
            Op::Sum { x } => {
                if self.wants(*x) {
                    let dx = slot(grads, *x, self.value(*x).len());
                    dx.iter_mut().for_each(|o| *o = *o + g[0]);
                }
            }
            Op::Mul { a, b } => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                if self.wants(*a) {
                    let da = slot(grads, *a, av.len());
                    for ((o, &dy), &y) in da.iter_mut().zip(g).zip(bv) {
                        *o = *o + dy * y;
                    }
                }
                if self.wants(*b) {
                    let db = slot(grads, *b, bv.len());
                    for ((o, &dy), &x) in db.iter_mut().zip(g).zip(av) {
                        *o = *o + dy * x;
                    }
                }
            }
        }
    }
}

fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        (T::one() + (-v).exp()).recip()
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

fn clamp_bounds<T: Scalar>() -> (T, T) {
    let lo = T::from_f64_lossy(BCE_CLAMP);
    (lo, T::one() - lo)
}

fn slot<T: Scalar>(grads: &mut [Option<Vec<T>>], v: Var, len: usize) -> &mut [T] {
    grads[v.0].get_or_insert_with(|| vec![T::zero(); len])
}

fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    dst.iter_mut().zip(src).for_each(|(d, &s)| *d = *d + s);
}

fn nchw(shape: &[usize], op: &'static str) -> Result<(usize, usize, usize)> {
    match shape {
        [b, c, h, w] => Ok((*b, *c, h * w)),
        [c, h, w] => Ok((1, *c, h * w)),
        _ => Err(Error::shape(op, format!("input rank {} (want 3 or 4)", shape.len()))),
    }
}

fn im2col<T: Scalar>(g: &ConvGeom, x: &[T], col: &mut [T]) {
    let (h, w, ho, wo) = (g.h as isize, g.w as isize, g.ho, g.wo);
    let pad = g.pad as isize;
    let mut row = 0;
    for c in 0..g.cin {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let dst = &mut col[row * ho * wo..(row + 1) * ho * wo];
                for oi in 0..ho {
                    let ii = (oi * g.stride) as isize + ki as isize - pad;
                    let out_row = &mut dst[oi * wo..(oi + 1) * wo];
                    if ii < 0 || ii >= h {
                        out_row.fill(T::zero());
                        continue;
                    }
                    let src = &plane[ii as usize * g.w..(ii as usize + 1) * g.w];
                    if g.stride == 1 {
                        // valid output columns: 0 <= oj + kj - pad < w
                        let shift = kj as isize - pad;
                        let lo = (-shift).clamp(0, wo as isize) as usize;
                        let hi = (w - shift).clamp(0, wo as isize) as usize;
                        out_row[..lo].fill(T::zero());
                        if hi > lo {
                            let s0 = (lo as isize + shift) as usize;
                            out_row[lo..hi].copy_from_slice(&src[s0..s0 + (hi - lo)]);
                        }
                        out_row[hi.max(lo)..].fill(T::zero());
                    } else {
                        for (oj, o) in out_row.iter_mut().enumerate() {
                            let jj = (oj * g.stride) as isize + kj as isize - pad;
                            *o = if jj < 0 || jj >= w { T::zero() } else { src[jj as usize] };
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

fn col2im<T: Scalar>(g: &ConvGeom, col: &[T], dx: &mut [T]) {
    let (h, w, ho, wo) = (g.h as isize, g.w as isize, g.ho, g.wo);
    let pad = g.pad as isize;
    let mut row = 0;
    for c in 0..g.cin {
        let plane = &mut dx[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let src = &col[row * ho * wo..(row + 1) * ho * wo];
                for oi in 0..ho {
                    let ii = (oi * g.stride) as isize + ki as isize - pad;
                    if ii < 0 || ii >= h {
                        continue;
                    }
                    let dst = &mut plane[ii as usize * g.w..(ii as usize + 1) * g.w];
                    let srow = &src[oi * wo..(oi + 1) * wo];
                    for (oj, &v) in srow.iter().enumerate() {
                        let jj = (oj * g.stride) as isize + kj as isize - pad;
                        if jj >= 0 && jj < w {
                            dst[jj as usize] = dst[jj as usize] + v;
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

fn conv_forward<T: Scalar>(g: &ConvGeom, x: &[T], w: &[T]) -> Vec<T> {
    let (in_sz, out_sz, spatial) = (g.cin * g.h * g.w, g.cout * g.ho * g.wo, g.ho * g.wo);
    let mut out = vec![T::zero(); g.batch * out_sz];
    let mut col = if g.is_pointwise() {
        Vec::new()
    } else {
        vec![T::zero(); g.patch() * spatial]
    };
    for b in 0..g.batch {
        let xb = &x[b * in_sz..(b + 1) * in_sz];
        let ob = &mut out[b * out_sz..(b + 1) * out_sz];
        let cols: &[T] = if g.is_pointwise() {
            xb
        } else {
            im2col(g, xb, &mut col);
            &col
        };
        T::gemm(g.cout, g.patch(), spatial, w, false, cols, false, T::zero(), ob);
    }
    out
}

fn conv_backward_filter<T: Scalar>(g: &ConvGeom, x: &[T], dy: &[T], dw: &mut [T]) {
    let (in_sz, out_sz, spatial) = (g.cin * g.h * g.w, g.cout * g.ho * g.wo, g.ho * g.wo);
    let mut col = if g.is_pointwise() {
        Vec::new()
    } else {
        vec![T::zero(); g.patch() * spatial]
    };
    for b in 0..g.batch {
        let xb = &x[b * in_sz..(b + 1) * in_sz];
        let cols: &[T] = if g.is_pointwise() {
            xb
        } else {
            im2col(g, xb, &mut col);
            &col
        };
        let dyb = &dy[b * out_sz..(b + 1) * out_sz];
        T::gemm(g.cout, spatial, g.patch(), dyb, false, cols, true, T::one(), dw);
    }
}

fn conv_backward_input<T: Scalar>(g: &ConvGeom, w: &[T], dy: &[T], dx: &mut [T]) {
    let (in_sz, out_sz, spatial) = (g.cin * g.h * g.w, g.cout * g.ho * g.wo, g.ho * g.wo);
    let mut dcol = vec![T::zero(); if g.is_pointwise() { 0 } else { g.patch() * spatial }];
    for b in 0..g.batch {
        let dyb = &dy[b * out_sz..(b + 1) * out_sz];
        let dxb = &mut dx[b * in_sz..(b + 1) * in_sz];
        if g.is_pointwise() {
            T::gemm(g.patch(), g.cout, spatial, w, true, dyb, false, T::one(), dxb);
        } else {
            T::gemm(g.patch(), g.cout, spatial, w, true, dyb, false, T::zero(), &mut dcol);
            col2im(g, &dcol, dxb);
        }
    }
}
