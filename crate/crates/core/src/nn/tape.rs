use std::sync::Arc;

use super::kernels::{
    conv1d_backward, conv1d_forward, conv_out_len, conv_t1d_backward, conv_t1d_forward,
    conv_t_out_len,
};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::rcfk::{rc_fk_backward, rc_fk_decode, remove_root_rotation, Skeleton};
use crate::rotmath::Vec3;

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

/// How the parameter-free skip path changes the time axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resample {
    Same,
    /// Keep every second frame.
    Down2,
    /// Repeat every frame twice.
    Up2,
}

enum Op {
    Leaf,
    Conv {
        x: Var,
        w: Var,
        bias: Option<Var>,
        stride: usize,
        pad: usize,
    },
    ConvT {
        x: Var,
        w: Var,
        stride: usize,
        pad: usize,
    },
    Affine {
        x: Var,
        scale: Var,
        bias: Var,
    },
    Prelu {
        x: Var,
        slope: Var,
    },
    Scale {
        x: Var,
        s: f64,
    },
    Reshape {
        x: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Adapt {
        x: Var,
        mode: Resample,
    },
    ConcatBroadcast {
        x: Var,
        w: Var,
    },
    MeanTime {
        x: Var,
    },
    SliceChannels {
        x: Var,
        start: usize,
    },
    StackBatch {
        parts: Vec<Var>,
    },
    RcFk {
        x: Var,
        skel: Arc<Skeleton>,
        apply_root: bool,
    },
    IntegratePath {
        x: Var,
    },
    Substitute {
        x: Var,
        mask: Vec<bool>,
    },
    Scalar {
        inputs: Vec<Var>,
        grads: Vec<Tensor>,
    },
    WeightedSum {
        terms: Vec<(Var, f64)>,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// A single-use reverse-mode tape. Build the forward pass with the methods
/// below, then call [`Graph::backward`] on a scalar node.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

fn shape_err(what: &str, detail: String) -> Error {
    Error::Shape(format!("{what}: {detail}"))
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Constant input; no gradient is accumulated for it.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Trainable leaf.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn conv1d(
        &mut self,
        x: Var,
        w: Var,
        bias: Option<Var>,
        stride: usize,
        pad: usize,
    ) -> Result<Var> {
        let (b, cin, t) = self.value(x).dims3();
        let ws = &self.value(w).shape;
        if ws.len() != 3 || ws[1] != cin {
            return Err(shape_err(
                "conv1d",
                format!("weight {ws:?} vs input channels {cin}"),
            ));
        }
        let (cout, k) = (ws[0], ws[2]);
        if t + 2 * pad < k {
            return Err(shape_err(
                "conv1d",
                format!("sequence length {t} shorter than kernel {k}"),
            ));
        }
        let tout = conv_out_len(t, k, stride, pad);
        let mut y = Tensor::zeros(&[b, cout, tout]);
        {
            let xv = &self.nodes[x.0].value;
            let wv = &self.nodes[w.0].value.data;
            for bi in 0..b {
                conv1d_forward(
                    xv.batch(bi),
                    cin,
                    t,
                    wv,
                    cout,
                    k,
                    stride,
                    pad,
                    y.batch_mut(bi),
                );
            }
        }
        if let Some(bias) = bias {
            let bv = &self.value(bias).data;
            if bv.len() != cout {
                return Err(shape_err("conv1d", "bias length".into()));
            }
            for bi in 0..b {
                for co in 0..cout {
                    let base = y.idx3(bi, co, 0);
                    y.data[base..base + tout]
                        .iter_mut()
                        .for_each(|v| *v += bv[co]);
                }
            }
        }
        let ng = self.ng(x) || self.ng(w) || bias.is_some_and(|b| self.ng(b));
        Ok(self.push(
            y,
            Op::Conv {
                x,
                w,
                bias,
                stride,
                pad,
            },
            ng,
        ))
    }

    pub fn conv_transpose1d(&mut self, x: Var, w: Var, stride: usize, pad: usize) -> Result<Var> {
        let (b, cin, t) = self.value(x).dims3();
        let ws = &self.value(w).shape;
        if ws.len() != 3 || ws[0] != cin {
            return Err(shape_err(
                "conv_transpose1d",
                format!("weight {ws:?} vs input channels {cin}"),
            ));
        }
        let (cout, k) = (ws[1], ws[2]);
        let tout = conv_t_out_len(t, k, stride, pad);
        let mut y = Tensor::zeros(&[b, cout, tout]);
        {
            let xv = &self.nodes[x.0].value;
            let wv = &self.nodes[w.0].value.data;
            for bi in 0..b {
                conv_t1d_forward(
                    xv.batch(bi),
                    cin,
                    t,
                    wv,
                    cout,
                    k,
                    stride,
                    pad,
                    y.batch_mut(bi),
                );
            }
        }
        let ng = self.ng(x) || self.ng(w);
        Ok(self.push(y, Op::ConvT { x, w, stride, pad }, ng))
    }

    /// Per-channel `scale · x + bias`.
    pub fn affine(&mut self, x: Var, scale: Var, bias: Var) -> Var {
        let xv = self.value(x);
        let (b, c, t) = xv.dims3();
        let (s, bb) = (&self.value(scale).data, &self.value(bias).data);
        assert_eq!(s.len(), c);
        let y = Tensor::from_fn3(b, c, t, |bi, ci, ti| s[ci] * xv.at3(bi, ci, ti) + bb[ci]);
        let ng = self.ng(x) || self.ng(scale) || self.ng(bias);
        self.push(y, Op::Affine { x, scale, bias }, ng)
    }

    /// Per-channel parametric ReLU.
    pub fn prelu(&mut self, x: Var, slope: Var) -> Var {
        let xv = self.value(x);
        let (b, c, t) = xv.dims3();
        let a = &self.value(slope).data;
        assert_eq!(a.len(), c);
        let y = Tensor::from_fn3(b, c, t, |bi, ci, ti| {
            let v = xv.at3(bi, ci, ti);
            if v >= 0.0 {
                v
            } else {
                a[ci] * v
            }
        });
        let ng = self.ng(x) || self.ng(slope);
        self.push(y, Op::Prelu { x, slope }, ng)
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let mut y = self.value(x).clone();
        y.data.iter_mut().for_each(|v| *v *= s);
        let ng = self.ng(x);
        self.push(y, Op::Scale { x, s }, ng)
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let y = Tensor::new(shape, self.value(x).data.clone())?;
        let ng = self.ng(x);
        Ok(self.push(y, Op::Reshape { x }, ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).shape != self.value(b).shape {
            return Err(shape_err(
                "add",
                format!("{:?} vs {:?}", self.value(a).shape, self.value(b).shape),
            ));
        }
        let mut y = self.value(a).clone();
        y.add_assign(self.value(b));
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(y, Op::Add { a, b }, ng))
    }

    /// Parameter-free shape adaptation: resample time, then zero-pad or
    /// truncate channels to `out_ch`.
    pub fn adapt(&mut self, x: Var, mode: Resample, out_ch: usize) -> Var {
        let xv = self.value(x);
        let (b, c, t) = xv.dims3();
        let tout = match mode {
            Resample::Same => t,
            Resample::Down2 => t.div_ceil(2),
            Resample::Up2 => 2 * t,
        };
        let y = Tensor::from_fn3(b, out_ch, tout, |bi, ci, ti| {
            if ci >= c {
                return 0.0;
            }
            let src = match mode {
                Resample::Same => ti,
                Resample::Down2 => 2 * ti,
                Resample::Up2 => ti / 2,
            };
            xv.at3(bi, ci, src)
        });
        let ng = self.ng(x);
        self.push(y, Op::Adapt { x, mode }, ng)
    }

    /// Concatenates `w` (`[B, C2, 1]`) to every time step of `x` (`[B, C1, T]`).
    pub fn concat_broadcast(&mut self, x: Var, w: Var) -> Result<Var> {
        let (b, c1, t) = self.value(x).dims3();
        let (bw, c2, tw) = self.value(w).dims3();
        if bw != b || tw != 1 {
            return Err(shape_err(
                "concat_broadcast",
                format!("w shape {:?}", self.value(w).shape),
            ));
        }
        let (xv, wv) = (self.value(x), self.value(w));
        let y = Tensor::from_fn3(b, c1 + c2, t, |bi, ci, ti| {
            if ci < c1 {
                xv.at3(bi, ci, ti)
            } else {
                wv.at3(bi, ci - c1, 0)
            }
        });
        let ng = self.ng(x) || self.ng(w);
        Ok(self.push(y, Op::ConcatBroadcast { x, w }, ng))
    }

    /// Average over time: `[B, C, T]` to `[B, C, 1]`.
    pub fn mean_time(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let (b, c, t) = xv.dims3();
        let y = Tensor::from_fn3(b, c, 1, |bi, ci, _| {
            let base = xv.idx3(bi, ci, 0);
            xv.data[base..base + t].iter().sum::<f64>() / t as f64
        });
        let ng = self.ng(x);
        self.push(y, Op::MeanTime { x }, ng)
    }

    pub fn slice_channels(&mut self, x: Var, start: usize, len: usize) -> Var {
        let xv = self.value(x);
        let (b, c, t) = xv.dims3();
        assert!(start + len <= c, "channel slice out of range");
        let y = Tensor::from_fn3(b, len, t, |bi, ci, ti| xv.at3(bi, start + ci, ti));
        let ng = self.ng(x);
        self.push(y, Op::SliceChannels { x, start }, ng)
    }

    /// Stacks `[1, C, T]` parts along the batch axis.
    pub fn stack_batch(&mut self, parts: &[Var]) -> Result<Var> {
        let first = self.value(parts[0]).shape.clone();
        let mut data = Vec::new();
        for p in parts {
            let v = self.value(*p);
            if v.shape != first || v.shape[0] != 1 {
                return Err(shape_err(
                    "stack_batch",
                    format!("{:?} vs {first:?}", v.shape),
                ));
            }
            data.extend_from_slice(&v.data);
        }
        let y = Tensor::new(vec![parts.len(), first[1], first[2]], data)?;
        let ng = parts.iter().any(|p| self.ng(*p));
        Ok(self.push(
            y,
            Op::StackBatch {
                parts: parts.to_vec(),
            },
            ng,
        ))
    }

    /// Range-constrained FK per frame: `[B, 6+3(M−1), T]` raw to `[B, 3M, T]`
    /// positions (root channels zero). With `apply_root = false` the output is
    /// `Λ`, the pose without root rotation.
    pub fn rc_fk(&mut self, x: Var, skel: &Arc<Skeleton>, apply_root: bool) -> Result<Var> {
        let xv = self.value(x);
        let (b, c, t) = xv.dims3();
        if c != skel.raw_channels() {
            return Err(shape_err(
                "rc_fk",
                format!("{c} channels, skeleton needs {}", skel.raw_channels()),
            ));
        }
        let m = skel.len();
        let mut y = Tensor::zeros(&[b, 3 * m, t]);
        let mut raw = vec![0.0; c];
        for bi in 0..b {
            for ti in 0..t {
                for (ci, r) in raw.iter_mut().enumerate() {
                    *r = xv.at3(bi, ci, ti);
                }
                let frame = rc_fk_decode(&raw, skel)?;
                let pos = if apply_root {
                    frame.joint_positions
                } else {
                    remove_root_rotation(&frame)
                };
                for (j, p) in pos.iter().enumerate() {
                    for k in 0..3 {
                        let i = y.idx3(bi, 3 * j + k, ti);
                        y.data[i] = p[k];
                    }
                }
            }
        }
        let ng = self.ng(x);
        Ok(self.push(
            y,
            Op::RcFk {
                x,
                skel: Arc::clone(skel),
                apply_root,
            },
            ng,
        ))
    }

    /// `[B, 3, T]` channels `(dx, dz, y)` to root positions `(x, y, z)`:
    /// planar prefix sums starting at zero, height passed through.
    pub fn integrate_path(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let (b, c, t) = xv.dims3();
        if c != 3 {
            return Err(shape_err(
                "integrate_path",
                format!("expected 3 channels, got {c}"),
            ));
        }
        let mut y = Tensor::zeros(&[b, 3, t]);
        for bi in 0..b {
            let (mut px, mut pz) = (0.0, 0.0);
            for ti in 0..t {
                let i0 = y.idx3(bi, 0, ti);
                let i1 = y.idx3(bi, 1, ti);
                let i2 = y.idx3(bi, 2, ti);
                y.data[i0] = px;
                y.data[i1] = xv.at3(bi, 2, ti);
                y.data[i2] = pz;
                px += xv.at3(bi, 0, ti);
                pz += xv.at3(bi, 1, ti);
            }
        }
        let ng = self.ng(x);
        Ok(self.push(y, Op::IntegratePath { x }, ng))
    }

    /// Replaces the entries where `mask` is set by `values`; those entries
    /// pass no gradient back to `x`.
    pub fn substitute(&mut self, x: Var, mask: Vec<bool>, values: &Tensor) -> Result<Var> {
        let xv = self.value(x);
        if xv.shape != values.shape || mask.len() != xv.len() {
            return Err(shape_err(
                "substitute",
                "mask/values must match input".into(),
            ));
        }
        let mut y = xv.clone();
        for (i, m) in mask.iter().enumerate() {
            if *m {
                y.data[i] = values.data[i];
            }
        }
        let ng = self.ng(x);
        Ok(self.push(y, Op::Substitute { x, mask }, ng))
    }

    /// Fused scalar function: `f` returns the value and its gradient with
    /// respect to each input.
    pub fn scalar_fn(
        &mut self,
        inputs: &[Var],
        f: impl FnOnce(&[&Tensor]) -> (f64, Vec<Tensor>),
    ) -> Var {
        let vals: Vec<&Tensor> = inputs.iter().map(|v| self.value(*v)).collect();
        let (value, grads) = f(&vals);
        debug_assert_eq!(grads.len(), inputs.len());
        let ng = inputs.iter().any(|v| self.ng(*v));
        self.push(
            Tensor::scalar(value),
            Op::Scalar {
                inputs: inputs.to_vec(),
                grads,
            },
            ng,
        )
    }

    pub fn weighted_sum(&mut self, terms: &[(Var, f64)]) -> Var {
        let v = terms.iter().map(|(t, w)| w * self.value(*t).item()).sum();
        let ng = terms.iter().any(|(t, _)| self.ng(*t));
        self.push(
            Tensor::scalar(v),
            Op::WeightedSum {
                terms: terms.to_vec(),
            },
            ng,
        )
    }

    /// Reverse accumulation from scalar `loss` (seed gradient 1).
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::Shape("backward needs a scalar".into()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(&self.value(loss).shape, 1.0));
        for i in (0..=loss.0).rev() {
            let Some(gy) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                grads[i] = Some(gy);
                continue;
            }
            self.backprop_node(node, &gy, &mut grads)?;
            grads[i] = Some(gy);
        }
        Ok(Gradients { grads })
    }

    fn acc<'a>(&self, grads: &'a mut [Option<Tensor>], v: Var) -> Option<&'a mut Tensor> {
        if !self.ng(v) {
            return None;
        }
        let shape = &self.nodes[v.0].value.shape;
        Some(grads[v.0].get_or_insert_with(|| Tensor::zeros(shape)))
    }

    fn backprop_node(&self, node: &Node, gy: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        match &node.op {
            Op::Leaf => {}
            Op::Conv {
                x,
                w,
                bias,
                stride,
                pad,
            } => {
                let xv = self.value(*x);
                let wv = self.value(*w);
                let (b, cin, t) = xv.dims3();
                let (cout, k) = (wv.shape[0], wv.shape[2]);
                let mut gw = self.ng(*w).then(|| Tensor::zeros(&wv.shape));
                let mut gx = self.ng(*x).then(|| Tensor::zeros(&xv.shape));
                for bi in 0..b {
                    conv1d_backward(
                        xv.batch(bi),
                        cin,
                        t,
                        &wv.data,
                        cout,
                        k,
                        *stride,
                        *pad,
                        gy.batch(bi),
                        gx.as_mut().map(|g| g.batch_mut(bi)),
                        gw.as_mut().map(|g| &mut g.data[..]),
                    );
                }
                if let (Some(g), Some(acc)) = (gx, self.acc(grads, *x)) {
                    acc.add_assign(&g);
                }
                if let (Some(g), Some(acc)) = (gw, self.acc(grads, *w)) {
                    acc.add_assign(&g);
                }
                if let Some(bias) = bias {
                    if let Some(acc) = self.acc(grads, *bias) {
                        let (gb, gc, gt) = gy.dims3();
                        for bi in 0..gb {
                            for co in 0..gc {
                                let base = gy.idx3(bi, co, 0);
                                acc.data[co] += gy.data[base..base + gt].iter().sum::<f64>();
                            }
                        }
                    }
                }
            }
            Op::ConvT { x, w, stride, pad } => {
                let xv = self.value(*x);
                let wv = self.value(*w);
                let (b, cin, t) = xv.dims3();
                let (cout, k) = (wv.shape[1], wv.shape[2]);
                let mut gw = self.ng(*w).then(|| Tensor::zeros(&wv.shape));
                let mut gx = self.ng(*x).then(|| Tensor::zeros(&xv.shape));
                for bi in 0..b {
                    conv_t1d_backward(
                        xv.batch(bi),
                        cin,
                        t,
                        &wv.data,
                        cout,
                        k,
                        *stride,
                        *pad,
                        gy.batch(bi),
                        gx.as_mut().map(|g| g.batch_mut(bi)),
                        gw.as_mut().map(|g| &mut g.data[..]),
                    );
                }
                if let (Some(g), Some(acc)) = (gx, self.acc(grads, *x)) {
                    acc.add_assign(&g);
                }
                if let (Some(g), Some(acc)) = (gw, self.acc(grads, *w)) {
                    acc.add_assign(&g);
                }
            }
            Op::Affine { x, scale, bias } => {
                let xv = self.value(*x);
                let (b, c, t) = xv.dims3();
                let s = &self.value(*scale).data;
                if let Some(acc) = self.acc(grads, *x) {
                    for bi in 0..b {
                        for ci in 0..c {
                            for ti in 0..t {
                                let i = xv.idx3(bi, ci, ti);
                                acc.data[i] += s[ci] * gy.data[i];
                            }
                        }
                    }
                }
                if let Some(acc) = self.acc(grads, *scale) {
                    for bi in 0..b {
                        for ci in 0..c {
                            for ti in 0..t {
                                let i = xv.idx3(bi, ci, ti);
                                acc.data[ci] += xv.data[i] * gy.data[i];
                            }
                        }
                    }
                }
                if let Some(acc) = self.acc(grads, *bias) {
                    for bi in 0..b {
                        for ci in 0..c {
                            let base = xv.idx3(bi, ci, 0);
                            acc.data[ci] += gy.data[base..base + t].iter().sum::<f64>();
                        }
                    }
                }
            }
            Op::Prelu { x, slope } => {
                let xv = self.value(*x);
                let (b, c, t) = xv.dims3();
                let a = &self.value(*slope).data;
                if let Some(acc) = self.acc(grads, *x) {
                    for bi in 0..b {
                        for ci in 0..c {
                            for ti in 0..t {
                                let i = xv.idx3(bi, ci, ti);
                                acc.data[i] += if xv.data[i] >= 0.0 {
                                    gy.data[i]
                                } else {
                                    a[ci] * gy.data[i]
                                };
                            }
                        }
                    }
                }
                if let Some(acc) = self.acc(grads, *slope) {
                    for bi in 0..b {
                        for ci in 0..c {
                            for ti in 0..t {
                                let i = xv.idx3(bi, ci, ti);
                                if xv.data[i] < 0.0 {
                                    acc.data[ci] += xv.data[i] * gy.data[i];
                                }
                            }
                        }
                    }
                }
            }
            Op::Scale { x, s } => {
                if let Some(acc) = self.acc(grads, *x) {
                    acc.add_scaled(gy, *s);
                }
            }
            Op::Reshape { x } => {
                if let Some(acc) = self.acc(grads, *x) {
                    for (a, g) in acc.data.iter_mut().zip(&gy.data) {
                        *a += g;
                    }
                }
            }
            Op::Add { a, b } => {
                if let Some(acc) = self.acc(grads, *a) {
                    acc.add_assign(gy);
                }
                if let Some(acc) = self.acc(grads, *b) {
                    acc.add_assign(gy);
                }
            }
            Op::Adapt { x, mode } => {
                let (b, c, t) = self.value(*x).dims3();
                let (_, oc, ot) = gy.dims3();
                if let Some(acc) = self.acc(grads, *x) {
                    for bi in 0..b {
                        for ci in 0..c.min(oc) {
                            for to in 0..ot {
                                let src = match mode {
                                    Resample::Same => to,
                                    Resample::Down2 => 2 * to,
                                    Resample::Up2 => to / 2,
                                };
                                let i = (bi * c + ci) * t + src;
                                acc.data[i] += gy.at3(bi, ci, to);
                            }
                        }
                    }
                }
            }
            Op::ConcatBroadcast { x, w } => {
                let (b, c1, t) = self.value(*x).dims3();
                let c2 = self.value(*w).shape[1];
                if let Some(acc) = self.acc(grads, *x) {
                    for bi in 0..b {
                        for ci in 0..c1 {
                            for ti in 0..t {
                                acc.data[(bi * c1 + ci) * t + ti] += gy.at3(bi, ci, ti);
                            }
                        }
                    }
                }
                if let Some(acc) = self.acc(grads, *w) {
                    for bi in 0..b {
                        for ci in 0..c2 {
                            let base = gy.idx3(bi, c1 + ci, 0);
                            acc.data[bi * c2 + ci] += gy.data[base..base + t].iter().sum::<f64>();
                        }
                    }
                }
            }
            Op::MeanTime { x } => {
                let (b, c, t) = self.value(*x).dims3();
                if let Some(acc) = self.acc(grads, *x) {
                    for bi in 0..b {
                        for ci in 0..c {
                            let g = gy.data[bi * c + ci] / t as f64;
                            let base = (bi * c + ci) * t;
                            acc.data[base..base + t].iter_mut().for_each(|v| *v += g);
                        }
                    }
                }
            }
            Op::SliceChannels { x, start } => {
                let (b, c, t) = self.value(*x).dims3();
                let (_, len, _) = gy.dims3();
                if let Some(acc) = self.acc(grads, *x) {
                    for bi in 0..b {
                        for ci in 0..len {
                            for ti in 0..t {
                                acc.data[(bi * c + start + ci) * t + ti] += gy.at3(bi, ci, ti);
                            }
                        }
                    }
                }
            }
            Op::StackBatch { parts } => {
                let step = gy.len() / parts.len();
                for (k, p) in parts.iter().enumerate() {
                    if let Some(acc) = self.acc(grads, *p) {
                        for (a, g) in acc.data.iter_mut().zip(&gy.data[k * step..(k + 1) * step]) {
                            *a += g;
                        }
                    }
                }
            }
            Op::RcFk {
                x,
                skel,
                apply_root,
            } => {
                let xv = self.value(*x);
                let (b, c, t) = xv.dims3();
                let m = skel.len();
                if let Some(acc) = self.acc(grads, *x) {
                    let mut raw = vec![0.0; c];
                    let mut gp: Vec<Vec3> = vec![[0.0; 3]; m];
                    for bi in 0..b {
                        for ti in 0..t {
                            for (ci, r) in raw.iter_mut().enumerate() {
                                *r = xv.at3(bi, ci, ti);
                            }
                            for (j, g) in gp.iter_mut().enumerate() {
                                for k in 0..3 {
                                    g[k] = gy.at3(bi, 3 * j + k, ti);
                                }
                            }
                            let gr = rc_fk_backward(&raw, skel, &gp, *apply_root)?;
                            for (ci, g) in gr.iter().enumerate() {
                                acc.data[(bi * c + ci) * t + ti] += g;
                            }
                        }
                    }
                }
            }
            Op::IntegratePath { x } => {
                let (b, _, t) = self.value(*x).dims3();
                if let Some(acc) = self.acc(grads, *x) {
                    for bi in 0..b {
                        // d pos_t / d v_s = 1 for s < t: suffix sums of the
                        // position gradient.
                        let (mut sx, mut sz) = (0.0, 0.0);
                        for ti in (0..t).rev() {
                            acc.data[(bi * 3) * t + ti] += sx;
                            acc.data[(bi * 3 + 1) * t + ti] += sz;
                            acc.data[(bi * 3 + 2) * t + ti] += gy.at3(bi, 1, ti);
                            sx += gy.at3(bi, 0, ti);
                            sz += gy.at3(bi, 2, ti);
                        }
                    }
                }
            }
            Op::Substitute { x, mask } => {
                if let Some(acc) = self.acc(grads, *x) {
                    for (i, m) in mask.iter().enumerate() {
                        if !m {
                            acc.data[i] += gy.data[i];
                        }
                    }
                }
            }
            Op::Scalar {
                inputs,
                grads: local,
            } => {
                let g = gy.item();
                for (v, lg) in inputs.iter().zip(local) {
                    if let Some(acc) = self.acc(grads, *v) {
                        acc.add_scaled(lg, g);
                    }
                }
            }
            Op::WeightedSum { terms } => {
                let g = gy.item();
                for (v, w) in terms {
                    if let Some(acc) = self.acc(grads, *v) {
                        acc.data[0] += g * w;
                    }
                }
            }
        }
        Ok(())
    }
}
