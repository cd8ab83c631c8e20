//! Sample-generic graph convolutions over `[J, T, C]` features.
//!
//! Every convolution transforms features pointwise first and then aggregates
//! along the graph, so `y[q, n] = Σ a(p, m → q, n) · f(x[p, m])`.

use crate::error::{Error, Result};
use crate::graphs::{
    expand_spatial, expand_temporal, IndexConvention, Spatiotemporal, UnsharedSpatial,
    UnsharedTemporal, VanillaSpatial, VanillaTemporal,
};
use crate::numerics::{LinearMap, Mlp, Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GcKind {
    St,
    S,
    T,
    Std,
    Tsd,
    Vstd,
    Sts,
    Ds,
    Dt,
    Dstd,
    Dtsd,
}

impl GcKind {
    pub const ALL: [GcKind; 11] = [
        GcKind::St,
        GcKind::S,
        GcKind::T,
        GcKind::Std,
        GcKind::Tsd,
        GcKind::Vstd,
        GcKind::Sts,
        GcKind::Ds,
        GcKind::Dt,
        GcKind::Dstd,
        GcKind::Dtsd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GcKind::St => "st",
            GcKind::S => "s",
            GcKind::T => "t",
            GcKind::Std => "std",
            GcKind::Tsd => "tsd",
            GcKind::Vstd => "vstd",
            GcKind::Sts => "sts",
            GcKind::Ds => "ds",
            GcKind::Dt => "dt",
            GcKind::Dstd => "dstd",
            GcKind::Dtsd => "dtsd",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let s = s.to_ascii_lowercase();
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    pub fn is_dynamic(self) -> bool {
        matches!(self, GcKind::Ds | GcKind::Dt | GcKind::Dstd | GcKind::Dtsd)
    }
}

impl std::fmt::Display for GcKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.name().to_ascii_uppercase())
    }
}

/// Stacking order of a decomposed convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Order {
    SpatialFirst,
    TemporalFirst,
}

fn feature_dims(tape: &Tape, x: Var) -> Result<(usize, usize, usize)> {
    match *tape.shape(x) {
        [j, t, c] => Ok((j, t, c)),
        ref s => Err(Error::shape("feature", s, &[3])),
    }
}

/// `y[(q, n)] = Σ a[(p, m), (q, n)] · x[(p, m)]` on the flattened graph.
pub fn aggregate_st(tape: &mut Tape, x: Var, a: Var) -> Result<Var> {
    let (j, t, c) = feature_dims(tape, x)?;
    let jt = j * t;
    if tape.shape(a) != [jt, jt] {
        return Err(Error::shape("aggregate_st", tape.shape(a), &[jt, jt]));
    }
    let a3 = tape.reshape(a, &[1, jt, jt])?;
    let x3 = tape.reshape(x, &[1, jt, c])?;
    let y = tape.bmm(a3, x3, true, false)?;
    tape.reshape(y, &[j, t, c])
}

/// Frame-wise aggregation with `a[T, J, J]`: `y[q, n] = Σ_p a[n, p, q] · x[p, n]`.
pub fn aggregate_spatial(tape: &mut Tape, x: Var, a: Var) -> Result<Var> {
    let (j, t, _) = feature_dims(tape, x)?;
    if tape.shape(a) != [t, j, j] {
        return Err(Error::shape("aggregate_spatial", tape.shape(a), &[t, j, j]));
    }
    let xt = tape.permute(x, [1, 0, 2])?;
    let y = tape.bmm(a, xt, true, false)?;
    tape.permute(y, [1, 0, 2])
}

/// Joint-wise aggregation with `a[J, T, T]`: `y[q, n] = Σ_m a[q, m, n] · x[q, m]`.
pub fn aggregate_temporal(tape: &mut Tape, x: Var, a: Var) -> Result<Var> {
    let (j, t, _) = feature_dims(tape, x)?;
    if tape.shape(a) != [j, t, t] {
        return Err(Error::shape("aggregate_temporal", tape.shape(a), &[j, t, t]));
    }
    tape.bmm(a, x, true, false)
}

pub fn st_forward(tape: &mut Tape, x: Var, a: Var, map: &Mlp<Var>) -> Result<Var> {
    let f = map.forward(tape, x)?;
    aggregate_st(tape, f, a)
}

pub fn s_forward(tape: &mut Tape, x: Var, a: Var, map: &Mlp<Var>) -> Result<Var> {
    let f = map.forward(tape, x)?;
    aggregate_spatial(tape, f, a)
}

pub fn t_forward(tape: &mut Tape, x: Var, a: Var, map: &Mlp<Var>) -> Result<Var> {
    let f = map.forward(tape, x)?;
    aggregate_temporal(tape, f, a)
}

/// Two stacked per-axis convolutions; `map1` belongs to the first stage.
pub fn decomposed_forward(
    tape: &mut Tape,
    x: Var,
    a_s: Var,
    a_t: Var,
    map1: &Mlp<Var>,
    map2: &Mlp<Var>,
    order: Order,
) -> Result<Var> {
    match order {
        Order::SpatialFirst => {
            let h = s_forward(tape, x, a_s, map1)?;
            t_forward(tape, h, a_t, map2)
        }
        Order::TemporalFirst => {
            let h = t_forward(tape, x, a_t, map1)?;
            s_forward(tape, h, a_s, map2)
        }
    }
}

/// Factorized convolution with edge weights `a_s · a_t`.
///
/// The two conventions that correspond to a sequential product run as two
/// batched aggregations; the output-frame convention builds the dense graph.
pub fn sts_forward(
    tape: &mut Tape,
    x: Var,
    a_s: Var,
    a_t: Var,
    map: &Mlp<Var>,
    conv: IndexConvention,
) -> Result<Var> {
    let f = map.forward(tape, x)?;
    match conv {
        IndexConvention::SourceFrame => {
            let h = aggregate_spatial(tape, f, a_s)?;
            aggregate_temporal(tape, h, a_t)
        }
        IndexConvention::OutputJointTemporal => {
            let h = aggregate_temporal(tape, f, a_t)?;
            aggregate_spatial(tape, h, a_s)
        }
        IndexConvention::OutputFrame => sts_dense_forward_features(tape, f, a_s, a_t, conv),
    }
}

/// Literal dense evaluation of the factorized convolution for any convention.
pub fn sts_dense_forward(
    tape: &mut Tape,
    x: Var,
    a_s: Var,
    a_t: Var,
    map: &Mlp<Var>,
    conv: IndexConvention,
) -> Result<Var> {
    let f = map.forward(tape, x)?;
    sts_dense_forward_features(tape, f, a_s, a_t, conv)
}

fn sts_dense_forward_features(
    tape: &mut Tape,
    f: Var,
    a_s: Var,
    a_t: Var,
    conv: IndexConvention,
) -> Result<Var> {
    let a = tape.compose(a_s, a_t, conv)?;
    aggregate_st(tape, f, a)
}

struct Consts<'a> {
    tape: &'a mut Tape,
}

impl Consts<'_> {
    fn t(&mut self, t: &Tensor) -> Var {
        self.tape.input(t.clone())
    }

    fn map(&mut self, m: &LinearMap) -> Mlp<Var> {
        Mlp::single(m.clone()).map(&mut |t| self.tape.input(t.clone()))
    }
}

fn run(f: impl FnOnce(&mut Consts) -> Result<Var>) -> Result<Tensor> {
    let mut tape = Tape::new();
    let mut c = Consts { tape: &mut tape };
    let y = f(&mut c)?;
    Ok(tape.value(y).clone())
}

pub fn st_gc(x: &Tensor, a: &Spatiotemporal, map: &LinearMap) -> Result<Tensor> {
    run(|c| {
        let (xv, av, m) = (c.t(x), c.t(a.tensor()), c.map(map));
        st_forward(c.tape, xv, av, &m)
    })
}

pub fn s_gc(x: &Tensor, a: &UnsharedSpatial, map: &LinearMap) -> Result<Tensor> {
    run(|c| {
        let (xv, av, m) = (c.t(x), c.t(a.tensor()), c.map(map));
        s_forward(c.tape, xv, av, &m)
    })
}

pub fn t_gc(x: &Tensor, a: &UnsharedTemporal, map: &LinearMap) -> Result<Tensor> {
    run(|c| {
        let (xv, av, m) = (c.t(x), c.t(a.tensor()), c.map(map));
        t_forward(c.tape, xv, av, &m)
    })
}

pub fn decomposed_gc(
    x: &Tensor,
    a_s: &UnsharedSpatial,
    a_t: &UnsharedTemporal,
    map1: &LinearMap,
    map2: &LinearMap,
    order: Order,
) -> Result<Tensor> {
    run(|c| {
        let (xv, sv, tv) = (c.t(x), c.t(a_s.tensor()), c.t(a_t.tensor()));
        let (m1, m2) = (c.map(map1), c.map(map2));
        decomposed_forward(c.tape, xv, sv, tv, &m1, &m2, order)
    })
}

pub fn sts_gc(
    x: &Tensor,
    a_s: &UnsharedSpatial,
    a_t: &UnsharedTemporal,
    map: &LinearMap,
    conv: IndexConvention,
) -> Result<Tensor> {
    run(|c| {
        let (xv, sv, tv, m) = (c.t(x), c.t(a_s.tensor()), c.t(a_t.tensor()), c.map(map));
        sts_dense_forward(c.tape, xv, sv, tv, &m, conv)
    })
}

pub fn vstd_gc(
    x: &Tensor,
    a_s: &VanillaSpatial,
    a_t: &VanillaTemporal,
    map1: &LinearMap,
    map2: &LinearMap,
    order: Order,
) -> Result<Tensor> {
    if x.rank() != 3 {
        return Err(Error::shape("vstd_gc", x.shape(), &[3]));
    }
    let (j, t) = (x.shape()[0], x.shape()[1]);
    let s = expand_spatial(a_s, t)?;
    let tt = expand_temporal(a_t, j)?;
    decomposed_gc(x, &s, &tt, map1, map2, order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::{compose_spatiotemporal, random_adjacency};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn nobias(rng: &mut ChaCha8Rng, a: usize, b: usize) -> LinearMap {
        LinearMap::glorot(rng, a, b, false)
    }

    // Direct summation over every (source, target) vertex pair.
    fn st_oracle(x: &Tensor, a: &Tensor, w: &Tensor) -> Tensor {
        let (j, t, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let co = w.shape()[1];
        Tensor::from_fn(&[j, t, co], |ix| {
            let (q, n, k) = (ix[0], ix[1], ix[2]);
            let mut s = 0.0;
            for p in 0..j {
                for m in 0..t {
                    let xw: f64 = (0..c).map(|i| x.get(&[p, m, i]) * w.get(&[i, k])).sum();
                    s += a.get(&[p * t + m, q * t + n]) * xw;
                }
            }
            s
        })
    }

    fn s_oracle(x: &Tensor, a: &Tensor, w: &Tensor) -> Tensor {
        let (j, t, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        Tensor::from_fn(&[j, t, w.shape()[1]], |ix| {
            let (q, n, k) = (ix[0], ix[1], ix[2]);
            (0..j)
                .map(|p| {
                    let xw: f64 = (0..c).map(|i| x.get(&[p, n, i]) * w.get(&[i, k])).sum();
                    a.get(&[n, p, q]) * xw
                })
                .sum()
        })
    }

    fn t_oracle(x: &Tensor, a: &Tensor, w: &Tensor) -> Tensor {
        let (j, t, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        Tensor::from_fn(&[j, t, w.shape()[1]], |ix| {
            let (q, n, k) = (ix[0], ix[1], ix[2]);
            (0..t)
                .map(|m| {
                    let xw: f64 = (0..c).map(|i| x.get(&[q, m, i]) * w.get(&[i, k])).sum();
                    a.get(&[q, m, n]) * xw
                })
                .sum()
        })
    }

    #[test]
    fn test_st_identity_and_mean() {
        let mut r = rng(1);
        let x = random_adjacency(&mut r, &[2, 3, 2]);
        let eye = Spatiotemporal::new(Tensor::eye(6)).unwrap();
        assert_eq!(st_gc(&x, &eye, &LinearMap::identity(2)).unwrap(), x);

        let avg = Spatiotemporal::new(Tensor::full(&[6, 6], 1.0 / 6.0)).unwrap();
        let y = st_gc(&x, &avg, &LinearMap::identity(2)).unwrap();
        for k in 0..2 {
            let mean: f64 = (0..6).map(|v| x.data()[v * 2 + k]).sum::<f64>() / 6.0;
            for v in 0..6 {
                assert!((y.data()[v * 2 + k] - mean).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn test_st_matches_oracle() {
        let mut r = rng(2);
        let x = random_adjacency(&mut r, &[2, 3, 2]);
        let a = random_adjacency(&mut r, &[6, 6]);
        let w = nobias(&mut r, 2, 3);
        let y = st_gc(&x, &Spatiotemporal::new(a.clone()).unwrap(), &w).unwrap();
        assert!(y.max_abs_diff(&st_oracle(&x, &a, &w.w)).unwrap() <= 1e-12);
    }

    #[test]
    fn test_s_and_t_match_oracles() {
        let mut r = rng(3);
        let (j, t, c) = (3, 4, 2);
        let x = random_adjacency(&mut r, &[j, t, c]);
        let a_s = random_adjacency(&mut r, &[t, j, j]);
        let a_t = random_adjacency(&mut r, &[j, t, t]);
        let w = nobias(&mut r, c, 3);
        let ys = s_gc(&x, &UnsharedSpatial::new(a_s.clone()).unwrap(), &w).unwrap();
        assert!(ys.max_abs_diff(&s_oracle(&x, &a_s, &w.w)).unwrap() <= 1e-12);
        let yt = t_gc(&x, &UnsharedTemporal::new(a_t.clone()).unwrap(), &w).unwrap();
        assert!(yt.max_abs_diff(&t_oracle(&x, &a_t, &w.w)).unwrap() <= 1e-12);
    }

    #[test]
    fn test_s_permutes_one_frame() {
        let (j, t) = (3, 2);
        let x = Tensor::from_fn(&[j, t, 1], |ix| (ix[0] * 10 + ix[1]) as f64);
        let mut a = Tensor::zeros(&[t, j, j]);
        for f in 0..t {
            for p in 0..j {
                a.set(&[f, p, p], 1.0);
            }
        }
        // frame 1 sends joint p to joint (p + 1) % j
        for p in 0..j {
            a.set(&[1, p, p], 0.0);
        }
        for p in 0..j {
            a.set(&[1, p, (p + 1) % j], 1.0);
        }
        let y = s_gc(&x, &UnsharedSpatial::new(a).unwrap(), &LinearMap::identity(1)).unwrap();
        for q in 0..j {
            assert_eq!(y.get(&[q, 0, 0]), x.get(&[q, 0, 0]));
            assert_eq!(y.get(&[q, 1, 0]), x.get(&[(q + j - 1) % j, 1, 0]));
        }
    }

    #[test]
    fn test_t_shifts_one_joint() {
        let (j, t) = (2, 4);
        let x = Tensor::from_fn(&[j, t, 1], |ix| (ix[0] * 10 + ix[1]) as f64);
        let mut a = Tensor::zeros(&[j, t, t]);
        for m in 0..t {
            a.set(&[0, m, m], 1.0);
        }
        for m in 0..t - 1 {
            a.set(&[1, m, m + 1], 1.0);
        }
        let y = t_gc(&x, &UnsharedTemporal::new(a).unwrap(), &LinearMap::identity(1)).unwrap();
        assert_eq!(y.get(&[1, 0, 0]), 0.0);
        for n in 1..t {
            assert_eq!(y.get(&[1, n, 0]), x.get(&[1, n - 1, 0]));
            assert_eq!(y.get(&[0, n, 0]), x.get(&[0, n, 0]));
        }
    }

    #[test]
    fn test_order_matters_only_for_unshared() {
        let mut r = rng(4);
        let (j, t, c) = (3, 4, 2);
        let x = random_adjacency(&mut r, &[j, t, c]);
        let vs = VanillaSpatial::new(random_adjacency(&mut r, &[j, j])).unwrap();
        let vt = VanillaTemporal::new(random_adjacency(&mut r, &[t, t])).unwrap();
        let w1 = nobias(&mut r, c, c);
        let w2 = nobias(&mut r, c, c);
        // Shared matrices commute with each other, so the feature maps carry the order.
        let sf = vstd_gc(&x, &vs, &vt, &w1, &w2, Order::SpatialFirst).unwrap();
        let tf = vstd_gc(&x, &vs, &vt, &w1, &w2, Order::TemporalFirst).unwrap();
        assert!(sf.max_abs_diff(&tf).unwrap() <= 1e-12);

        let us = UnsharedSpatial::new(random_adjacency(&mut r, &[t, j, j])).unwrap();
        let ut = UnsharedTemporal::new(random_adjacency(&mut r, &[j, t, t])).unwrap();
        let sf = decomposed_gc(&x, &us, &ut, &w1, &w2, Order::SpatialFirst).unwrap();
        let tf = decomposed_gc(&x, &us, &ut, &w1, &w2, Order::TemporalFirst).unwrap();
        assert!(sf.max_abs_diff(&tf).unwrap() > 1e-6);
    }

    #[test]
    fn test_sts_conventions_match_stacking() {
        let mut r = rng(5);
        let (j, t, c) = (3, 4, 2);
        let x = random_adjacency(&mut r, &[j, t, c]);
        let us = UnsharedSpatial::new(random_adjacency(&mut r, &[t, j, j])).unwrap();
        let ut = UnsharedTemporal::new(random_adjacency(&mut r, &[j, t, t])).unwrap();
        let w1 = nobias(&mut r, c, 3);
        let w2 = nobias(&mut r, 3, 2);
        let w = w1.then(&w2).unwrap();
        let std = decomposed_gc(&x, &us, &ut, &w1, &w2, Order::SpatialFirst).unwrap();
        let sts = sts_gc(&x, &us, &ut, &w, IndexConvention::SourceFrame).unwrap();
        assert!(std.max_abs_diff(&sts).unwrap() <= 1e-11);
        let tsd = decomposed_gc(&x, &us, &ut, &w1, &w2, Order::TemporalFirst).unwrap();
        let sts = sts_gc(&x, &us, &ut, &w, IndexConvention::OutputJointTemporal).unwrap();
        assert!(tsd.max_abs_diff(&sts).unwrap() <= 1e-11);
        let sts = sts_gc(&x, &us, &ut, &w, IndexConvention::OutputFrame).unwrap();
        assert!(std.max_abs_diff(&sts).unwrap() > 1e-6);

        // composed graph through the full convolution
        let a = compose_spatiotemporal(&us, &ut, IndexConvention::SourceFrame).unwrap();
        let st = st_gc(&x, &a, &w).unwrap();
        assert!(std.max_abs_diff(&st).unwrap() <= 1e-11);
    }

    #[test]
    fn test_factorized_sts_matches_dense() {
        let mut r = rng(6);
        let (j, t, c) = (3, 4, 2);
        let x = random_adjacency(&mut r, &[j, t, c]);
        let a_s = random_adjacency(&mut r, &[t, j, j]);
        let a_t = random_adjacency(&mut r, &[j, t, t]);
        let w = nobias(&mut r, c, c);
        for conv in IndexConvention::ALL {
            let mut tape = Tape::new();
            let xv = tape.input(x.clone());
            let sv = tape.input(a_s.clone());
            let tv = tape.input(a_t.clone());
            let m = Mlp::single(w.clone()).map(&mut |t| tape.input(t.clone()));
            let fast = sts_forward(&mut tape, xv, sv, tv, &m, conv).unwrap();
            let dense = sts_dense_forward(&mut tape, xv, sv, tv, &m, conv).unwrap();
            assert!(tape.value(fast).max_abs_diff(tape.value(dense)).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn test_identity_inputs() {
        let mut r = rng(7);
        let (j, t, c) = (2, 3, 2);
        let x = random_adjacency(&mut r, &[j, t, c]);
        let us = expand_spatial(&VanillaSpatial::new(Tensor::eye(j)).unwrap(), t).unwrap();
        let ut = expand_temporal(&VanillaTemporal::new(Tensor::eye(t)).unwrap(), j).unwrap();
        let id = LinearMap::identity(c);
        assert_eq!(s_gc(&x, &us, &id).unwrap(), x);
        assert_eq!(t_gc(&x, &ut, &id).unwrap(), x);
        for order in [Order::SpatialFirst, Order::TemporalFirst] {
            assert_eq!(decomposed_gc(&x, &us, &ut, &id, &id, order).unwrap(), x);
        }
        let w = nobias(&mut r, c, 3);
        for conv in IndexConvention::ALL {
            let y = sts_gc(&x, &us, &ut, &w, conv).unwrap();
            assert!(y.max_abs_diff(&w.apply(&x).unwrap()).unwrap() <= 1e-15);
        }
    }

    #[test]
    fn test_shape_errors() {
        let x = Tensor::zeros(&[2, 3, 2]);
        let a = Spatiotemporal::new(Tensor::eye(5)).unwrap();
        assert!(matches!(st_gc(&x, &a, &LinearMap::identity(2)), Err(Error::Shape { .. })));
        let us = UnsharedSpatial::new(Tensor::zeros(&[2, 2, 2])).unwrap();
        assert!(matches!(s_gc(&x, &us, &LinearMap::identity(2)), Err(Error::Shape { .. })));
        let ut = UnsharedTemporal::new(Tensor::zeros(&[2, 3, 3])).unwrap();
        assert!(matches!(t_gc(&x, &ut, &LinearMap::identity(3)), Err(Error::Shape { .. })));
    }
}
