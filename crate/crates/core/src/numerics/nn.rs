//! Linear maps, PReLU MLPs and batched products.
//!
//! Layer structs are generic over their parameter slot `P`: `Tensor` for
//! standalone values, [`ParamId`] for tensors owned by a [`ParamStore`], and
//! [`Var`] once bound to a [`Tape`].

use rand_chacha::ChaCha8Rng;

use super::params::{glorot_uniform, ParamId, ParamStore};
use super::tape::{Tape, Var};
use super::Tensor;
use crate::error::{Error, Result};

pub const PRELU_INIT: f64 = 0.25;

#[derive(Debug, Clone, PartialEq)]
pub struct Linear<P> {
    pub w: P,
    pub b: Option<P>,
}

/// Value-level linear map `x · W + b`.
pub type LinearMap = Linear<Tensor>;

impl<P> Linear<P> {
    pub fn map<Q>(&self, f: &mut impl FnMut(&P) -> Q) -> Linear<Q> {
        Linear {
            w: f(&self.w),
            b: self.b.as_ref().map(&mut *f),
        }
    }

    pub fn for_each(&self, f: &mut impl FnMut(&P)) {
        f(&self.w);
        if let Some(b) = &self.b {
            f(b);
        }
    }
}

impl LinearMap {
    pub fn new(w: Tensor, b: Option<Tensor>) -> Result<Self> {
        if w.rank() != 2 {
            return Err(Error::shape("LinearMap::new", w.shape(), &[2]));
        }
        if let Some(b) = &b {
            if b.shape() != [w.shape()[1]] {
                return Err(Error::shape("LinearMap::new", w.shape(), b.shape()));
            }
        }
        Ok(Linear { w, b })
    }

    pub fn identity(c: usize) -> Self {
        Linear {
            w: Tensor::eye(c),
            b: None,
        }
    }

    pub fn zeros(c_in: usize, c_out: usize, bias: bool) -> Self {
        Linear {
            w: Tensor::zeros(&[c_in, c_out]),
            b: bias.then(|| Tensor::zeros(&[c_out])),
        }
    }

    pub fn glorot(rng: &mut ChaCha8Rng, c_in: usize, c_out: usize, bias: bool) -> Self {
        Linear {
            w: glorot_uniform(rng, c_in, c_out),
            b: bias.then(|| Tensor::zeros(&[c_out])),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w.shape()[0]
    }

    pub fn out_dim(&self) -> usize {
        self.w.shape()[1]
    }

    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        linear_apply(x, self)
    }

    /// The single map equal to `self` followed by `next`.
    pub fn then(&self, next: &LinearMap) -> Result<LinearMap> {
        let w = self.w.matmul(&next.w)?;
        let b = match (&self.b, &next.b) {
            (None, None) => None,
            (Some(b1), b2) => {
                let mut b = b1.clone().reshape(&[1, b1.len()])?.matmul(&next.w)?.reshape(&[next.out_dim()])?;
                if let Some(b2) = b2 {
                    b = b.add(b2)?;
                }
                Some(b)
            }
            (None, Some(b2)) => Some(b2.clone()),
        };
        LinearMap::new(w, b)
    }
}

impl Linear<ParamId> {
    pub fn register(store: &mut ParamStore, prefix: &str, init: LinearMap) -> Self {
        let w = store.add(format!("{prefix}.w"), init.w);
        let b = init.b.map(|b| store.add(format!("{prefix}.b"), b));
        Linear { w, b }
    }
}

impl Linear<Var> {
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        tape.affine(x, self.w, self.b)
    }
}

/// Stack of linear layers with a PReLU between consecutive layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<P> {
    pub layers: Vec<Linear<P>>,
    /// One slope per hidden activation; `layers.len() - 1` entries.
    pub slopes: Vec<P>,
}

impl<P> Mlp<P> {
    pub fn map<Q>(&self, f: &mut impl FnMut(&P) -> Q) -> Mlp<Q> {
        Mlp {
            layers: self.layers.iter().map(|l| l.map(f)).collect(),
            slopes: self.slopes.iter().map(&mut *f).collect(),
        }
    }

    pub fn for_each(&self, f: &mut impl FnMut(&P)) {
        for l in &self.layers {
            l.for_each(f);
        }
        for s in &self.slopes {
            f(s);
        }
    }
}

impl Mlp<Tensor> {
    pub fn new(layers: Vec<LinearMap>, slopes: Vec<f64>) -> Result<Self> {
        if layers.is_empty() || slopes.len() + 1 != layers.len() {
            return Err(Error::Domain(format!(
                "mlp needs {} slopes for {} layers, got {}",
                layers.len().saturating_sub(1),
                layers.len(),
                slopes.len()
            )));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::shape("Mlp::new", pair[0].w.shape(), pair[1].w.shape()));
            }
        }
        Ok(Mlp {
            layers,
            slopes: slopes.into_iter().map(Tensor::scalar).collect(),
        })
    }

    /// Glorot-initialised layers of widths `dims[0] → dims[1] → …`.
    pub fn glorot(rng: &mut ChaCha8Rng, dims: &[usize], bias: bool) -> Self {
        assert!(dims.len() >= 2, "an mlp needs at least one layer");
        let layers = dims
            .windows(2)
            .map(|d| LinearMap::glorot(rng, d[0], d[1], bias))
            .collect::<Vec<_>>();
        let slopes = (1..layers.len()).map(|_| Tensor::scalar(PRELU_INIT)).collect();
        Mlp { layers, slopes }
    }

    pub fn single(map: LinearMap) -> Self {
        Mlp {
            layers: vec![map],
            slopes: Vec::new(),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim()
    }

    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        mlp_apply(x, self)
    }
}

impl Mlp<ParamId> {
    pub fn register(store: &mut ParamStore, prefix: &str, init: Mlp<Tensor>) -> Self {
        let n = init.layers.len();
        let layers = init
            .layers
            .into_iter()
            .enumerate()
            .map(|(i, l)| {
                let name = if n == 1 { prefix.to_string() } else { format!("{prefix}.l{i}") };
                Linear::register(store, &name, l)
            })
            .collect();
        let slopes = init
            .slopes
            .into_iter()
            .enumerate()
            .map(|(i, s)| store.add(format!("{prefix}.act{i}"), s))
            .collect();
        Mlp { layers, slopes }
    }
}

impl Mlp<Var> {
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(tape, h)?;
            if let Some(&s) = self.slopes.get(i) {
                h = tape.prelu(h, s)?;
            }
        }
        Ok(h)
    }
}

/// Applies `map` to every trailing slice of `x`.
pub fn linear_apply(x: &Tensor, map: &LinearMap) -> Result<Tensor> {
    let mut tape = Tape::new();
    let xv = tape.input(x.clone());
    let m = map.map(&mut |t| tape.input(t.clone()));
    let y = m.forward(&mut tape, xv)?;
    Ok(tape.value(y).clone())
}

pub fn prelu(x: &Tensor, slope: f64) -> Tensor {
    x.map(|v| if v >= 0.0 { v } else { slope * v })
}

pub fn mlp_apply(x: &Tensor, net: &Mlp<Tensor>) -> Result<Tensor> {
    let mut tape = Tape::new();
    let xv = tape.input(x.clone());
    let m = net.map(&mut |t| tape.input(t.clone()));
    let y = m.forward(&mut tape, xv)?;
    Ok(tape.value(y).clone())
}

/// Per-batch product of `a[B, M, K]` and `b[B, K, N]`.
pub fn batch_matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let av = tape.input(a.clone());
    let bv = tape.input(b.clone());
    let y = tape.bmm(av, bv, false, false)?;
    Ok(tape.value(y).clone())
}
