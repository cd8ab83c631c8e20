//! Dynamic per-axis graph convolutions.
//!
//! Each layer keeps a trainable shared matrix `C` and adds an adjustment
//! `M(X)` predicted from the layer input, giving the effective unshared
//! adjacency `expand(C) + α·M(X)`. Spatial layers predict one `J × J` matrix
//! per frame from pairs of joints; temporal layers predict one `T × T` matrix
//! per joint from pairs of frames.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graphs::{VanillaSpatial, VanillaTemporal};
use crate::numerics::{Linear, LinearMap, Mlp, Tape, Tensor, Var};
use crate::static_gc::{aggregate_spatial, aggregate_temporal, Order};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    Spatial,
    Temporal,
}

impl Axis {
    /// `(rows paired by the head, extent folded into the channels)` for a
    /// `[J, T, C]` feature.
    pub fn extents(self, joints: usize, frames: usize) -> (usize, usize) {
        match self {
            Axis::Spatial => (joints, frames),
            Axis::Temporal => (frames, joints),
        }
    }
}

/// How the shared matrix and the adjustment combine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UpdateRule {
    /// `expand(C) + α·M`
    Adjust,
    /// `M + α·expand(C)`
    Reversed,
}

/// Width of the compact projections, `ceil(c / r)`.
pub fn reduced_width(channels: usize, reduction: usize) -> usize {
    channels.div_ceil(reduction.max(1)).max(1)
}

/// Compact projections, a pairwise MLP and the adjustment intensity.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjustmentHead<P> {
    pub theta: Linear<P>,
    pub phi: Linear<P>,
    pub mlp: Mlp<P>,
    pub alpha: P,
}

impl<P> AdjustmentHead<P> {
    pub fn map<Q>(&self, f: &mut impl FnMut(&P) -> Q) -> AdjustmentHead<Q> {
        AdjustmentHead {
            theta: self.theta.map(f),
            phi: self.phi.map(f),
            mlp: self.mlp.map(f),
            alpha: f(&self.alpha),
        }
    }

    pub fn for_each(&self, f: &mut impl FnMut(&P)) {
        self.theta.for_each(f);
        self.phi.for_each(f);
        self.mlp.for_each(f);
        f(&self.alpha);
    }
}

impl AdjustmentHead<Tensor> {
    /// Head for a `[J, T, channels]` input; `alpha` starts at `alpha0`.
    pub fn init(
        rng: &mut ChaCha8Rng,
        axis: Axis,
        joints: usize,
        frames: usize,
        channels: usize,
        reduction: usize,
        alpha0: f64,
    ) -> Self {
        let c = reduced_width(channels, reduction);
        let (_, other) = axis.extents(joints, frames);
        let width = other;
        AdjustmentHead {
            theta: LinearMap::glorot(rng, channels, c, true),
            phi: LinearMap::glorot(rng, channels, c, true),
            mlp: Mlp::glorot(rng, &[2 * other * c, width, width], true),
            alpha: Tensor::scalar(alpha0),
        }
    }

    pub fn reduced(&self) -> usize {
        self.theta.out_dim()
    }
}

/// One dynamic per-axis convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicGc<P> {
    pub axis: Axis,
    /// Shared matrix, `[J, J]` or `[T, T]`.
    pub corr: P,
    pub head: AdjustmentHead<P>,
    pub map: Mlp<P>,
    pub rule: UpdateRule,
}

impl<P> DynamicGc<P> {
    pub fn map<Q>(&self, f: &mut impl FnMut(&P) -> Q) -> DynamicGc<Q> {
        DynamicGc {
            axis: self.axis,
            corr: f(&self.corr),
            head: self.head.map(f),
            map: self.map.map(f),
            rule: self.rule,
        }
    }

    pub fn for_each(&self, f: &mut impl FnMut(&P)) {
        f(&self.corr);
        self.head.for_each(f);
        self.map.for_each(f);
    }
}

/// Shared correlation matrix of a dynamic layer.
#[derive(Debug, Clone, PartialEq)]
pub enum ConstrainedCorrelation {
    Spatial(VanillaSpatial),
    Temporal(VanillaTemporal),
}

impl ConstrainedCorrelation {
    pub fn axis(&self) -> Axis {
        match self {
            ConstrainedCorrelation::Spatial(_) => Axis::Spatial,
            ConstrainedCorrelation::Temporal(_) => Axis::Temporal,
        }
    }

    pub fn tensor(&self) -> &Tensor {
        match self {
            ConstrainedCorrelation::Spatial(a) => a.tensor(),
            ConstrainedCorrelation::Temporal(a) => a.tensor(),
        }
    }
}

/// Pairing strategy for the first MLP layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairPath {
    /// Splits the first weight so each pair costs one addition of projected rows.
    Factorized,
    /// Materializes every concatenated pair.
    Concat,
}

fn dims(tape: &Tape, x: Var) -> Result<(usize, usize, usize)> {
    match *tape.shape(x) {
        [j, t, c] => Ok((j, t, c)),
        ref s => Err(Error::shape("feature", s, &[3])),
    }
}

/// θ and φ projections folded to `[J, T·c̃]` (spatial) or `[T, J·c̃]` (temporal).
pub fn compact_project_vars(
    tape: &mut Tape,
    x: Var,
    head: &AdjustmentHead<Var>,
    axis: Axis,
) -> Result<(Var, Var)> {
    let (j, t, _) = dims(tape, x)?;
    let fold = |tape: &mut Tape, lin: &Linear<Var>| -> Result<Var> {
        let y = lin.forward(tape, x)?;
        let c = tape.shape(y)[2];
        match axis {
            Axis::Spatial => tape.reshape(y, &[j, t * c]),
            Axis::Temporal => {
                let yt = tape.permute(y, [1, 0, 2])?;
                tape.reshape(yt, &[t, j * c])
            }
        }
    };
    let p = fold(tape, &head.theta)?;
    let q = fold(tape, &head.phi)?;
    Ok((p, q))
}

/// Adjustment tensor `[T, J, J]` (spatial) or `[J, T, T]` (temporal) where
/// entry `[a, p, q]` is output `a` of the MLP on `[θ_p ‖ φ_q]`.
pub fn adjustment_vars(
    tape: &mut Tape,
    x: Var,
    head: &AdjustmentHead<Var>,
    axis: Axis,
    path: PairPath,
) -> Result<Var> {
    let (p, q) = compact_project_vars(tape, x, head, axis)?;
    let (n, f) = (tape.shape(p)[0], tape.shape(p)[1]);
    let first = &head.mlp.layers[0];
    if tape.shape(first.w)[0] != 2 * f {
        return Err(Error::shape("adjustment", tape.shape(first.w), &[2 * f]));
    }
    let mut h = match path {
        PairPath::Concat => {
            let pairs = tape.pair_concat(p, q)?;
            first.forward(tape, pairs)?
        }
        PairPath::Factorized => {
            let hidden = tape.shape(first.w)[1];
            let w_top = tape.slice_rows(first.w, 0, f)?;
            let w_bot = tape.slice_rows(first.w, f, f)?;
            debug_assert_eq!(tape.shape(w_top), [f, hidden]);
            let u = tape.matmul(p, w_top)?;
            let v = tape.matmul(q, w_bot)?;
            tape.pair_sum_bias(u, v, first.b)?
        }
    };
    let last = head.mlp.layers.len() - 1;
    if last == 0 {
        let out = tape.shape(h)[1];
        let h = tape.reshape(h, &[n, n, out])?;
        return tape.permute(h, [2, 0, 1]);
    }
    for (i, layer) in head.mlp.layers.iter().enumerate().skip(1) {
        h = tape.prelu(h, head.mlp.slopes[i - 1])?;
        if i < last {
            h = layer.forward(tape, h)?;
        }
    }
    // the last layer writes the [out, N, N] layout directly
    let layer = &head.mlp.layers[last];
    let out = tape.shape(layer.w)[1];
    tape.affine_t(h, layer.w, layer.b, &[out, n, n])
}

/// `expand(C) + α·M` or `M + α·expand(C)` depending on `rule`.
pub fn update_vars(tape: &mut Tape, corr: Var, m: Var, alpha: Var, rule: UpdateRule) -> Result<Var> {
    tape.blend(corr, m, alpha, rule == UpdateRule::Reversed)
}

/// Effective unshared adjacency of `gc` for input `x`.
pub fn effective_adjacency(tape: &mut Tape, x: Var, gc: &DynamicGc<Var>, path: PairPath) -> Result<Var> {
    let m = adjustment_vars(tape, x, &gc.head, gc.axis, path)?;
    update_vars(tape, gc.corr, m, gc.head.alpha, gc.rule)
}

/// Transform, then aggregate with the adjacency predicted from the raw input.
pub fn dynamic_forward(tape: &mut Tape, x: Var, gc: &DynamicGc<Var>, path: PairPath) -> Result<Var> {
    let a = effective_adjacency(tape, x, gc, path)?;
    let f = gc.map.forward(tape, x)?;
    match gc.axis {
        Axis::Spatial => aggregate_spatial(tape, f, a),
        Axis::Temporal => aggregate_temporal(tape, f, a),
    }
}

/// A spatial and a temporal dynamic layer stacked in `order`.
pub fn dstd_forward(
    tape: &mut Tape,
    x: Var,
    spatial: &DynamicGc<Var>,
    temporal: &DynamicGc<Var>,
    order: Order,
    path: PairPath,
) -> Result<Var> {
    let (a, b) = match order {
        Order::SpatialFirst => (spatial, temporal),
        Order::TemporalFirst => (temporal, spatial),
    };
    let h = dynamic_forward(tape, x, a, path)?;
    dynamic_forward(tape, h, b, path)
}

fn value_of(tape: &mut Tape, f: impl FnOnce(&mut Tape) -> Result<Var>) -> Result<Tensor> {
    let y = f(tape)?;
    Ok(tape.value(y).clone())
}

fn bind_head(tape: &mut Tape, head: &AdjustmentHead<Tensor>) -> AdjustmentHead<Var> {
    head.map(&mut |t| tape.input(t.clone()))
}

pub fn compact_project(x: &Tensor, head: &AdjustmentHead<Tensor>, axis: Axis) -> Result<(Tensor, Tensor)> {
    let mut tape = Tape::new();
    let xv = tape.input(x.clone());
    let h = bind_head(&mut tape, head);
    let (p, q) = compact_project_vars(&mut tape, xv, &h, axis)?;
    Ok((tape.value(p).clone(), tape.value(q).clone()))
}

pub fn adjustment(x: &Tensor, head: &AdjustmentHead<Tensor>, axis: Axis) -> Result<Tensor> {
    adjustment_with(x, head, axis, PairPath::Factorized)
}

pub fn adjustment_with(x: &Tensor, head: &AdjustmentHead<Tensor>, axis: Axis, path: PairPath) -> Result<Tensor> {
    let mut tape = Tape::new();
    let xv = tape.input(x.clone());
    let h = bind_head(&mut tape, head);
    value_of(&mut tape, |tape| adjustment_vars(tape, xv, &h, axis, path))
}

/// `expand(C) + α·M` with `C` broadcast over the leading axis of `M`.
pub fn update_correlation(corr: &Tensor, m: &Tensor, alpha: f64) -> Result<Tensor> {
    if m.rank() != 3 || corr.shape() != &m.shape()[1..] {
        return Err(Error::shape("update_correlation", corr.shape(), m.shape()));
    }
    let mut tape = Tape::new();
    let c = tape.input(corr.clone());
    let mv = tape.input(m.clone());
    let a = tape.input(Tensor::scalar(alpha));
    value_of(&mut tape, |tape| update_vars(tape, c, mv, a, UpdateRule::Adjust))
}

fn dynamic_value(x: &Tensor, gc: &DynamicGc<Tensor>) -> Result<Tensor> {
    let mut tape = Tape::new();
    let xv = tape.input(x.clone());
    let g = gc.map(&mut |t| tape.input(t.clone()));
    value_of(&mut tape, |tape| dynamic_forward(tape, xv, &g, PairPath::Factorized))
}

fn layer(axis: Axis, corr: &Tensor, head: &AdjustmentHead<Tensor>, map: &LinearMap) -> DynamicGc<Tensor> {
    DynamicGc {
        axis,
        corr: corr.clone(),
        head: head.clone(),
        map: Mlp::single(map.clone()),
        rule: UpdateRule::Adjust,
    }
}

pub fn ds_gc(x: &Tensor, corr: &VanillaSpatial, head: &AdjustmentHead<Tensor>, map: &LinearMap) -> Result<Tensor> {
    dynamic_value(x, &layer(Axis::Spatial, corr.tensor(), head, map))
}

pub fn dt_gc(x: &Tensor, corr: &VanillaTemporal, head: &AdjustmentHead<Tensor>, map: &LinearMap) -> Result<Tensor> {
    dynamic_value(x, &layer(Axis::Temporal, corr.tensor(), head, map))
}

pub fn dstd_gc(x: &Tensor, spatial: &DynamicGc<Tensor>, temporal: &DynamicGc<Tensor>, order: Order) -> Result<Tensor> {
    if spatial.axis != Axis::Spatial || temporal.axis != Axis::Temporal {
        return Err(Error::Domain("dstd_gc expects a spatial and a temporal layer".into()));
    }
    let mut tape = Tape::new();
    let xv = tape.input(x.clone());
    let s = spatial.map(&mut |t| tape.input(t.clone()));
    let t = temporal.map(&mut |t| tape.input(t.clone()));
    value_of(&mut tape, |tape| dstd_forward(tape, xv, &s, &t, order, PairPath::Factorized))
}
