//! Reverse-mode automatic differentiation over coarse tensor operations.
//!
//! A [`Tape`] records every operation of one forward pass. Leaves are either
//! constant inputs or parameters bound from a [`ParamStore`]; calling
//! [`Tape::backward`] on a scalar node returns gradients for every node that
//! depends on a trainable parameter.

use std::collections::HashMap;
use std::ops::Range;

use super::gemm::gemm;
use super::params::{ParamId, ParamStore};
use super::Tensor;
use crate::error::{Error, Result};
use crate::graphs::IndexConvention;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    /// `[.., K] · [K, N]` with all leading extents flattened.
    MatMul { x: usize, w: usize, b: Option<usize> },
    /// `(x · w + b)ᵀ` laid out as `[N, ..]`.
    AffineT { x: usize, w: usize, b: Option<usize> },
    AddBias { x: usize, b: usize },
    Bmm { a: usize, b: usize, ta: bool, tb: bool },
    Permute { x: usize, perm: [usize; 3] },
    Reshape { x: usize },
    Add { a: usize, b: usize },
    Sub { a: usize, b: usize },
    ScaleVar { x: usize, s: usize },
    ScaleConst { x: usize, c: f64 },
    Prelu { x: usize, slope: usize },
    Expand { x: usize, n: usize },
    SliceRows { x: usize, start: usize },
    PairSum { u: usize, v: usize, b: Option<usize> },
    Blend { corr: usize, m: usize, alpha: usize, reversed: bool },
    PairConcat { p: usize, q: usize },
    Compose { s: usize, t: usize, conv: IndexConvention },
    DotConst { x: usize, c: Tensor },
    Mpjpe { pred: usize, target: Tensor, frames: Range<usize> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    bound: HashMap<ParamId, Var>,
}

/// Gradients produced by [`Tape::backward`], indexed by node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
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

    /// Constant leaf; never receives a gradient.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Leaf that records a gradient regardless of any parameter store.
    pub fn variable(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Binds a parameter as a leaf. Repeated binds of one id share a node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.bound.get(&id) {
            return v;
        }
        let p = store.get(id);
        let v = self.push(p.value.clone(), Op::Leaf, p.trainable);
        self.bound.insert(id, v);
        v
    }

    /// Node bound for `id`, if the forward pass touched it.
    pub fn bound_param(&self, id: ParamId) -> Option<Var> {
        self.bound.get(&id).copied()
    }

    /// Product over the trailing axis: `x[.., K] · w[K, N] -> [.., N]`.
    pub fn matmul(&mut self, x: Var, w: Var) -> Result<Var> {
        self.affine(x, w, None)
    }

    /// `x[.., K] · w[K, N] + b[N]`.
    pub fn affine(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (m, k, n) = self.affine_dims("matmul", x, w, b)?;
        let mut out_shape = self.shape(x).to_vec();
        *out_shape.last_mut().unwrap() = n;
        let mut out = self.bias_rows(b, m, n, false, &out_shape);
        let beta = if b.is_some() { 1.0 } else { 0.0 };
        gemm(m, k, n, self.value(x).data(), false, self.value(w).data(), false, out.data_mut(), beta);
        let ng = self.ng(x) || self.ng(w) || b.is_some_and(|b| self.ng(b));
        Ok(self.push(out, Op::MatMul { x: x.0, w: w.0, b: b.map(|b| b.0) }, ng))
    }

    /// `x[R, K] · w[K, N] + b[N]`, stored transposed with shape `shape`
    /// (leading extent `N`, the rest multiplying to `R`).
    pub fn affine_t(&mut self, x: Var, w: Var, b: Option<Var>, shape: &[usize]) -> Result<Var> {
        let (m, k, n) = self.affine_dims("affine_t", x, w, b)?;
        if shape.first() != Some(&n) || shape.iter().product::<usize>() != m * n {
            return Err(Error::shape("affine_t", shape, &[n, m]));
        }
        let mut out = self.bias_rows(b, m, n, true, shape);
        let beta = if b.is_some() { 1.0 } else { 0.0 };
        gemm(n, k, m, self.value(w).data(), true, self.value(x).data(), true, out.data_mut(), beta);
        let ng = self.ng(x) || self.ng(w) || b.is_some_and(|b| self.ng(b));
        Ok(self.push(out, Op::AffineT { x: x.0, w: w.0, b: b.map(|b| b.0) }, ng))
    }

    fn affine_dims(&self, what: &'static str, x: Var, w: Var, b: Option<Var>) -> Result<(usize, usize, usize)> {
        let xs = self.shape(x);
        let ws = self.shape(w);
        if ws.len() != 2 || xs.is_empty() || *xs.last().unwrap() != ws[0] {
            return Err(Error::shape(what, xs, ws));
        }
        if let Some(b) = b {
            if self.shape(b) != [ws[1]] {
                return Err(Error::shape(what, self.shape(b), &[ws[1]]));
            }
        }
        Ok((self.value(x).len() / ws[0], ws[0], ws[1]))
    }

    /// `m` rows of `b` (or `n` rows of `b[i]` repeated when `transposed`).
    fn bias_rows(&self, b: Option<Var>, m: usize, n: usize, transposed: bool, shape: &[usize]) -> Tensor {
        let Some(b) = b else { return Tensor::zeros(shape) };
        let bias = self.value(b).data();
        let mut data = Vec::with_capacity(m * n);
        if transposed {
            for &bv in bias {
                data.extend(std::iter::repeat(bv).take(m));
            }
        } else {
            for _ in 0..m {
                data.extend_from_slice(bias);
            }
        }
        Tensor::new(shape, data).expect("bias layout")
    }

    /// Adds `b[N]` to every trailing slice of `x[.., N]`.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let xs = self.shape(x);
        let bs = self.shape(b);
        if bs.len() != 1 || xs.last() != Some(&bs[0]) {
            return Err(Error::shape("add_bias", xs, bs));
        }
        let n = bs[0];
        let mut out = self.value(x).clone();
        let bias = self.value(b).data();
        for row in out.data_mut().chunks_mut(n) {
            for (o, &bv) in row.iter_mut().zip(bias) {
                *o += bv;
            }
        }
        let ng = self.ng(x) || self.ng(b);
        Ok(self.push(out, Op::AddBias { x: x.0, b: b.0 }, ng))
    }

    /// Batched product `op(a[i]) · op(b[i])`; `ta`/`tb` read the stored
    /// matrices transposed.
    pub fn bmm(&mut self, a: Var, b: Var, ta: bool, tb: bool) -> Result<Var> {
        let as_ = self.shape(a).to_vec();
        let bs = self.shape(b).to_vec();
        if as_.len() != 3 || bs.len() != 3 || as_[0] != bs[0] {
            return Err(Error::shape("batch_matmul", &as_, &bs));
        }
        let (m, k) = if ta { (as_[2], as_[1]) } else { (as_[1], as_[2]) };
        let (kb, n) = if tb { (bs[2], bs[1]) } else { (bs[1], bs[2]) };
        if k != kb {
            return Err(Error::shape("batch_matmul", &as_, &bs));
        }
        let batch = as_[0];
        let mut out = Tensor::zeros(&[batch, m, n]);
        {
            let ad = self.value(a).data();
            let bd = self.value(b).data();
            let od = out.data_mut();
            for i in 0..batch {
                gemm(
                    m,
                    k,
                    n,
                    &ad[i * m * k..(i + 1) * m * k],
                    ta,
                    &bd[i * k * n..(i + 1) * k * n],
                    tb,
                    &mut od[i * m * n..(i + 1) * m * n],
                    0.0,
                );
            }
        }
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Bmm { a: a.0, b: b.0, ta, tb }, ng))
    }

    pub fn permute(&mut self, x: Var, perm: [usize; 3]) -> Result<Var> {
        let out = self.value(x).permute3(perm)?;
        let ng = self.ng(x);
        Ok(self.push(out, Op::Permute { x: x.0, perm }, ng))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).clone().reshape(shape)?;
        let ng = self.ng(x);
        Ok(self.push(out, Op::Reshape { x: x.0 }, ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).add(self.value(b))?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Add { a: a.0, b: b.0 }, ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).sub(self.value(b))?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Sub { a: a.0, b: b.0 }, ng))
    }

    /// `x · s` for a single-element tensor `s`.
    pub fn scale(&mut self, x: Var, s: Var) -> Result<Var> {
        if self.value(s).len() != 1 {
            return Err(Error::shape("scale", self.shape(x), self.shape(s)));
        }
        let c = self.value(s).data()[0];
        let out = self.value(x).scale(c);
        let ng = self.ng(x) || self.ng(s);
        Ok(self.push(out, Op::ScaleVar { x: x.0, s: s.0 }, ng))
    }

    pub fn scale_const(&mut self, x: Var, c: f64) -> Var {
        let out = self.value(x).scale(c);
        let ng = self.ng(x);
        self.push(out, Op::ScaleConst { x: x.0, c }, ng)
    }

    /// Elementwise PReLU with a single learnable slope.
    pub fn prelu(&mut self, x: Var, slope: Var) -> Result<Var> {
        if self.value(slope).len() != 1 {
            return Err(Error::shape("prelu", self.shape(x), self.shape(slope)));
        }
        let s = self.value(slope).data()[0];
        let out = self.value(x).map(|v| if v >= 0.0 { v } else { s * v });
        let ng = self.ng(x) || self.ng(slope);
        Ok(self.push(out, Op::Prelu { x: x.0, slope: slope.0 }, ng))
    }

    /// Repeats `x` along a new leading axis of extent `n`.
    pub fn expand(&mut self, x: Var, n: usize) -> Result<Var> {
        if n == 0 {
            return Err(Error::Domain("expand count must be positive".into()));
        }
        let xv = self.value(x);
        let mut shape = vec![n];
        shape.extend_from_slice(xv.shape());
        let mut data = Vec::with_capacity(n * xv.len());
        for _ in 0..n {
            data.extend_from_slice(xv.data());
        }
        let out = Tensor::new(&shape, data)?;
        let ng = self.ng(x);
        Ok(self.push(out, Op::Expand { x: x.0, n }, ng))
    }

    /// Rows `start..start + len` of a rank-2 tensor.
    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 2 || len == 0 || start + len > xs[0] {
            return Err(Error::shape("slice_rows", &xs, &[start, len]));
        }
        let c = xs[1];
        let data = self.value(x).data()[start * c..(start + len) * c].to_vec();
        let out = Tensor::new(&[len, c], data)?;
        let ng = self.ng(x);
        Ok(self.push(out, Op::SliceRows { x: x.0, start }, ng))
    }

    /// All ordered pairs: `out[p·N + q] = u[p] + v[q]`.
    pub fn pair_sum(&mut self, u: Var, v: Var) -> Result<Var> {
        self.pair_sum_bias(u, v, None)
    }

    /// `out[p·N + q] = u[p] + v[q] + b`.
    pub fn pair_sum_bias(&mut self, u: Var, v: Var, b: Option<Var>) -> Result<Var> {
        let us = self.shape(u).to_vec();
        let vs = self.shape(v).to_vec();
        if us.len() != 2 || us != vs {
            return Err(Error::shape("pair_sum", &us, &vs));
        }
        let (n, h) = (us[0], us[1]);
        if let Some(b) = b {
            if self.shape(b) != [h] {
                return Err(Error::shape("pair_sum", self.shape(b), &[h]));
            }
        }
        let ud = self.value(u).data();
        let vd = self.value(v).data();
        // u[p] + b once per row block
        let mut ub = ud.to_vec();
        if let Some(b) = b {
            for row in ub.chunks_mut(h) {
                add_into(row, self.value(b).data());
            }
        }
        let mut data = Vec::with_capacity(n * n * h);
        for up in ub.chunks(h) {
            for vq in vd.chunks(h) {
                data.extend(up.iter().zip(vq).map(|(a, b)| a + b));
            }
        }
        let out = Tensor::new(&[n * n, h], data)?;
        let ng = self.ng(u) || self.ng(v) || b.is_some_and(|b| self.ng(b));
        Ok(self.push(out, Op::PairSum { u: u.0, v: v.0, b: b.map(|b| b.0) }, ng))
    }

    /// `corr + α·m[i]` per leading slice of `m`, or `m[i] + α·corr` when
    /// `reversed`.
    pub fn blend(&mut self, corr: Var, m: Var, alpha: Var, reversed: bool) -> Result<Var> {
        let cs = self.shape(corr);
        let ms = self.shape(m);
        if ms.is_empty() || &ms[1..] != cs {
            return Err(Error::shape("blend", ms, cs));
        }
        if self.value(alpha).len() != 1 {
            return Err(Error::shape("blend", self.shape(alpha), &[1]));
        }
        let a = self.value(alpha).data()[0];
        let cd = self.value(corr).data();
        let mut data = Vec::with_capacity(self.value(m).len());
        for mi in self.value(m).data().chunks(cd.len()) {
            if reversed {
                data.extend(mi.iter().zip(cd).map(|(mv, cv)| mv + a * cv));
            } else {
                data.extend(mi.iter().zip(cd).map(|(mv, cv)| cv + a * mv));
            }
        }
        let out = Tensor::new(ms, data)?;
        let ng = self.ng(corr) || self.ng(m) || self.ng(alpha);
        Ok(self.push(out, Op::Blend { corr: corr.0, m: m.0, alpha: alpha.0, reversed }, ng))
    }

    /// All ordered pairs concatenated: `out[p·N + q] = [p_rows[p] ‖ q_rows[q]]`.
    pub fn pair_concat(&mut self, p: Var, q: Var) -> Result<Var> {
        let ps = self.shape(p).to_vec();
        let qs = self.shape(q).to_vec();
        if ps.len() != 2 || ps != qs {
            return Err(Error::shape("pair_concat", &ps, &qs));
        }
        let (n, f) = (ps[0], ps[1]);
        let mut out = Tensor::zeros(&[n * n, 2 * f]);
        {
            let pd = self.value(p).data();
            let qd = self.value(q).data();
            let od = out.data_mut();
            for i in 0..n {
                for j in 0..n {
                    let row = &mut od[(i * n + j) * 2 * f..(i * n + j + 1) * 2 * f];
                    row[..f].copy_from_slice(&pd[i * f..(i + 1) * f]);
                    row[f..].copy_from_slice(&qd[j * f..(j + 1) * f]);
                }
            }
        }
        let ng = self.ng(p) || self.ng(q);
        Ok(self.push(out, Op::PairConcat { p: p.0, q: q.0 }, ng))
    }

    /// Spatiotemporal adjacency from unshared spatial `s[T,J,J]` and temporal
    /// `t[J,T,T]` factors; see [`crate::graphs::compose_entry`].
    pub fn compose(&mut self, s: Var, t: Var, conv: IndexConvention) -> Result<Var> {
        let out = crate::graphs::compose_tensor(self.value(s), self.value(t), conv)?;
        let ng = self.ng(s) || self.ng(t);
        Ok(self.push(out, Op::Compose { s: s.0, t: t.0, conv }, ng))
    }

    /// Scalar `Σ x ⊙ c` against a constant tensor.
    pub fn dot_const(&mut self, x: Var, c: Tensor) -> Result<Var> {
        if self.shape(x) != c.shape() {
            return Err(Error::shape("dot_const", self.shape(x), c.shape()));
        }
        let v: f64 = self.value(x).data().iter().zip(c.data()).map(|(a, b)| a * b).sum();
        let ng = self.ng(x);
        Ok(self.push(Tensor::scalar(v), Op::DotConst { x: x.0, c }, ng))
    }

    /// Mean per-joint Euclidean error of `pred[J, T, D]` against a constant
    /// target over the frame range.
    pub fn mpjpe(&mut self, pred: Var, target: &Tensor, frames: Range<usize>) -> Result<Var> {
        let v = crate::train_eval::mpjpe_tensor(self.value(pred), target, frames.clone())?;
        let ng = self.ng(pred);
        Ok(self.push(
            Tensor::scalar(v),
            Op::Mpjpe {
                pred: pred.0,
                target: target.clone(),
                frames,
            },
            ng,
        ))
    }

    /// Reverse sweep from a single-element node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::shape("backward", self.shape(loss), &[1]));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop(node, &g, &mut grads);
        }
        Ok(Gradients { grads })
    }

    fn backprop(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let val = |i: usize| &self.nodes[i].value;
        let ng = |i: usize| self.nodes[i].needs_grad;
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { x, w, b } => {
                let (k, n) = (val(*w).shape()[0], val(*w).shape()[1]);
                let m = val(*x).len() / k;
                if ng(*x) {
                    let dx = acc(grads, *x, val(*x).shape());
                    gemm(m, n, k, gd, false, val(*w).data(), true, dx, 1.0);
                }
                if ng(*w) {
                    let dw = acc(grads, *w, &[k, n]);
                    gemm(k, m, n, val(*x).data(), true, gd, false, dw, 1.0);
                }
                if let Some(b) = b.filter(|&b| ng(b)) {
                    let db = acc(grads, b, &[n]);
                    for row in gd.chunks(n) {
                        add_into(db, row);
                    }
                }
            }
            Op::AffineT { x, w, b } => {
                // g is [N, R]
                let (k, n) = (val(*w).shape()[0], val(*w).shape()[1]);
                let m = val(*x).len() / k;
                if ng(*x) {
                    let dx = acc(grads, *x, val(*x).shape());
                    gemm(m, n, k, gd, true, val(*w).data(), true, dx, 1.0);
                }
                if ng(*w) {
                    let dw = acc(grads, *w, &[k, n]);
                    gemm(k, m, n, val(*x).data(), true, gd, true, dw, 1.0);
                }
                if let Some(b) = b.filter(|&b| ng(b)) {
                    let db = acc(grads, b, &[n]);
                    for (d, row) in db.iter_mut().zip(gd.chunks(m)) {
                        *d += row.iter().sum::<f64>();
                    }
                }
            }
            Op::Blend { corr, m, alpha, reversed } => {
                let a = val(*alpha).data()[0];
                let cd = val(*corr).data();
                let len = cd.len();
                let scaled = if *reversed { *corr } else { *m };
                if ng(*m) {
                    let dm = acc(grads, *m, g.shape());
                    let f = if *reversed { 1.0 } else { a };
                    for (d, &gv) in dm.iter_mut().zip(gd) {
                        *d += f * gv;
                    }
                }
                if ng(*corr) {
                    let f = if *reversed { a } else { 1.0 };
                    let dc = acc(grads, *corr, val(*corr).shape());
                    for gi in gd.chunks(len) {
                        for (d, &gv) in dc.iter_mut().zip(gi) {
                            *d += f * gv;
                        }
                    }
                }
                if ng(*alpha) {
                    let sd = val(scaled).data();
                    let dot: f64 = if *reversed {
                        gd.chunks(len).map(|gi| gi.iter().zip(sd).map(|(x, y)| x * y).sum::<f64>()).sum()
                    } else {
                        gd.iter().zip(sd).map(|(x, y)| x * y).sum()
                    };
                    acc(grads, *alpha, &[1])[0] += dot;
                }
            }
            Op::AddBias { x, b } => {
                if ng(*x) {
                    add_into(acc(grads, *x, g.shape()), gd);
                }
                if ng(*b) {
                    let n = val(*b).len();
                    let db = acc(grads, *b, &[n]);
                    for row in gd.chunks(n) {
                        add_into(db, row);
                    }
                }
            }
            Op::Bmm { a, b, ta, tb } => {
                let (ta, tb) = (*ta, *tb);
                let ashape = val(*a).shape().to_vec();
                let bshape = val(*b).shape().to_vec();
                let batch = ashape[0];
                let (m, k) = if ta { (ashape[2], ashape[1]) } else { (ashape[1], ashape[2]) };
                let n = if tb { bshape[1] } else { bshape[2] };
                let (ad, bd) = (val(*a).data(), val(*b).data());
                if ng(*a) {
                    let da = acc(grads, *a, &ashape);
                    for i in 0..batch {
                        let gi = &gd[i * m * n..(i + 1) * m * n];
                        let bi = &bd[i * k * n..(i + 1) * k * n];
                        let dai = &mut da[i * m * k..(i + 1) * m * k];
                        if !ta {
                            // dA = G · Bᵀ
                            gemm(m, n, k, gi, false, bi, !tb, dai, 1.0);
                        } else {
                            // stored Aᵀ: d = B · Gᵀ
                            gemm(k, n, m, bi, tb, gi, true, dai, 1.0);
                        }
                    }
                }
                if ng(*b) {
                    let db = acc(grads, *b, &bshape);
                    for i in 0..batch {
                        let gi = &gd[i * m * n..(i + 1) * m * n];
                        let ai = &ad[i * m * k..(i + 1) * m * k];
                        let dbi = &mut db[i * k * n..(i + 1) * k * n];
                        if !tb {
                            // dB = Aᵀ · G
                            gemm(k, m, n, ai, !ta, gi, false, dbi, 1.0);
                        } else {
                            // stored Bᵀ: d = Gᵀ · A
                            gemm(n, m, k, gi, true, ai, ta, dbi, 1.0);
                        }
                    }
                }
            }
            Op::Permute { x, perm } => {
                if ng(*x) {
                    let mut inv = [0usize; 3];
                    for (i, &p) in perm.iter().enumerate() {
                        inv[p] = i;
                    }
                    let back = g.permute3(inv).expect("rank-3 gradient");
                    add_into(acc(grads, *x, val(*x).shape()), back.data());
                }
            }
            Op::Reshape { x } => {
                if ng(*x) {
                    add_into(acc(grads, *x, val(*x).shape()), gd);
                }
            }
            Op::Add { a, b } => {
                if ng(*a) {
                    add_into(acc(grads, *a, g.shape()), gd);
                }
                if ng(*b) {
                    add_into(acc(grads, *b, g.shape()), gd);
                }
            }
            Op::Sub { a, b } => {
                if ng(*a) {
                    add_into(acc(grads, *a, g.shape()), gd);
                }
                if ng(*b) {
                    for (d, &gv) in acc(grads, *b, g.shape()).iter_mut().zip(gd) {
                        *d -= gv;
                    }
                }
            }
            Op::ScaleVar { x, s } => {
                let c = val(*s).data()[0];
                if ng(*x) {
                    for (d, &gv) in acc(grads, *x, g.shape()).iter_mut().zip(gd) {
                        *d += c * gv;
                    }
                }
                if ng(*s) {
                    let dot: f64 = gd.iter().zip(val(*x).data()).map(|(a, b)| a * b).sum();
                    acc(grads, *s, &[1])[0] += dot;
                }
            }
            Op::ScaleConst { x, c } => {
                if ng(*x) {
                    for (d, &gv) in acc(grads, *x, g.shape()).iter_mut().zip(gd) {
                        *d += c * gv;
                    }
                }
            }
            Op::Prelu { x, slope } => {
                let s = val(*slope).data()[0];
                let xd = val(*x).data();
                if ng(*x) {
                    for ((d, &gv), &xv) in acc(grads, *x, g.shape()).iter_mut().zip(gd).zip(xd) {
                        *d += if xv >= 0.0 { gv } else { s * gv };
                    }
                }
                if ng(*slope) {
                    let ds: f64 = gd
                        .iter()
                        .zip(xd)
                        .filter(|(_, &xv)| xv < 0.0)
                        .map(|(gv, xv)| gv * xv)
                        .sum();
                    acc(grads, *slope, &[1])[0] += ds;
                }
            }
            Op::Expand { x, n } => {
                if ng(*x) {
                    let len = val(*x).len();
                    let dx = acc(grads, *x, val(*x).shape());
                    for i in 0..*n {
                        add_into(dx, &gd[i * len..(i + 1) * len]);
                    }
                }
            }
            Op::SliceRows { x, start } => {
                if ng(*x) {
                    let c = val(*x).shape()[1];
                    let dx = acc(grads, *x, val(*x).shape());
                    add_into(&mut dx[start * c..start * c + gd.len()], gd);
                }
            }
            Op::PairSum { u, v, b } => {
                let (n, h) = (val(*u).shape()[0], val(*u).shape()[1]);
                if let Some(b) = b.filter(|&b| ng(b)) {
                    let db = acc(grads, b, &[h]);
                    for row in gd.chunks(h) {
                        add_into(db, row);
                    }
                }
                if ng(*u) {
                    let du = acc(grads, *u, &[n, h]);
                    for p in 0..n {
                        let dst = &mut du[p * h..(p + 1) * h];
                        for q in 0..n {
                            add_into(dst, &gd[(p * n + q) * h..(p * n + q + 1) * h]);
                        }
                    }
                }
                if ng(*v) {
                    let dv = acc(grads, *v, &[n, h]);
                    for p in 0..n {
                        for q in 0..n {
                            add_into(&mut dv[q * h..(q + 1) * h], &gd[(p * n + q) * h..(p * n + q + 1) * h]);
                        }
                    }
                }
            }
            Op::PairConcat { p, q } => {
                let (n, f) = (val(*p).shape()[0], val(*p).shape()[1]);
                if ng(*p) {
                    let dp = acc(grads, *p, &[n, f]);
                    for i in 0..n {
                        for j in 0..n {
                            let row = &gd[(i * n + j) * 2 * f..(i * n + j) * 2 * f + f];
                            add_into(&mut dp[i * f..(i + 1) * f], row);
                        }
                    }
                }
                if ng(*q) {
                    let dq = acc(grads, *q, &[n, f]);
                    for i in 0..n {
                        for j in 0..n {
                            let row = &gd[(i * n + j) * 2 * f + f..(i * n + j + 1) * 2 * f];
                            add_into(&mut dq[j * f..(j + 1) * f], row);
                        }
                    }
                }
            }
            Op::Compose { s, t, conv } => {
                let sv = val(*s);
                let tv = val(*t);
                let (tt, jj) = (sv.shape()[0], sv.shape()[1]);
                let jt = jj * tt;
                let mut ds = ng(*s).then(|| Tensor::zeros(sv.shape()));
                let mut dt = ng(*t).then(|| Tensor::zeros(tv.shape()));
                for p in 0..jj {
                    for m in 0..tt {
                        for q in 0..jj {
                            for n in 0..tt {
                                let gv = gd[(p * tt + m) * jt + q * tt + n];
                                if gv == 0.0 {
                                    continue;
                                }
                                let (si, ti) = crate::graphs::compose_indices(*conv, tt, jj, p, m, q, n);
                                if let Some(ds) = ds.as_mut() {
                                    ds.data_mut()[si] += gv * tv.data()[ti];
                                }
                                if let Some(dt) = dt.as_mut() {
                                    dt.data_mut()[ti] += gv * sv.data()[si];
                                }
                            }
                        }
                    }
                }
                if let Some(ds) = ds {
                    add_into(acc(grads, *s, sv.shape()), ds.data());
                }
                if let Some(dt) = dt {
                    add_into(acc(grads, *t, tv.shape()), dt.data());
                }
            }
            Op::DotConst { x, c } => {
                if ng(*x) {
                    let gv = gd[0];
                    for (d, &cv) in acc(grads, *x, c.shape()).iter_mut().zip(c.data()) {
                        *d += gv * cv;
                    }
                }
            }
            Op::Mpjpe { pred, target, frames } => {
                if ng(*pred) {
                    let pv = val(*pred);
                    let (j, t, d) = (pv.shape()[0], pv.shape()[1], pv.shape()[2]);
                    let scale = gd[0] / (j * frames.len()) as f64;
                    let dp = acc(grads, *pred, pv.shape());
                    for jj in 0..j {
                        for tt in frames.clone() {
                            let o = (jj * t + tt) * d;
                            let diff: Vec<f64> =
                                (0..d).map(|c| pv.data()[o + c] - target.data()[o + c]).collect();
                            let norm = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
                            if norm > 0.0 {
                                for c in 0..d {
                                    dp[o + c] += scale * diff[c] / norm;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

fn acc<'a>(grads: &'a mut [Option<Tensor>], i: usize, shape: &[usize]) -> &'a mut [f64] {
    grads[i].get_or_insert_with(|| Tensor::zeros(shape)).data_mut()
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
