//! Graph convolution units and their initialisation.

use rand_chacha::ChaCha8Rng;

use super::config::{ModelConfig, Variant};
use crate::dynamic_gc::{dynamic_forward, AdjustmentHead, Axis, DynamicGc, PairPath, UpdateRule};
use crate::error::Result;
use crate::graphs::{
    column_normalized, random_adjacency, spatial_natural, spatial_semantic, temporal_context, IndexConvention,
};
use crate::numerics::{Linear, LinearMap, Mlp, ParamId, ParamStore, Tape, Tensor, Var};
use crate::static_gc::{aggregate_spatial, aggregate_st, aggregate_temporal, sts_forward, GcKind};

/// Starting intensity when the shared matrices are frozen at zero; the
/// adjustment scales with the layer input, so larger values blow up deep stacks.
pub const DYNAMIC_ONLY_ALPHA: f64 = 0.05;

/// One per-axis convolution inside a decomposed unit.
#[derive(Debug, Clone, PartialEq)]
pub enum Stage<P> {
    /// Sample-generic; `shared` matrices are `[J, J]`/`[T, T]` and get
    /// expanded, unshared ones are `[T, J, J]`/`[J, T, T]`.
    Static {
        axis: Axis,
        adj: P,
        shared: bool,
        map: Mlp<P>,
    },
    Dynamic(DynamicGc<P>),
}

impl<P> Stage<P> {
    pub fn axis(&self) -> Axis {
        match self {
            Stage::Static { axis, .. } => *axis,
            Stage::Dynamic(d) => d.axis,
        }
    }

    pub fn map<Q>(&self, f: &mut impl FnMut(&P) -> Q) -> Stage<Q> {
        match self {
            Stage::Static { axis, adj, shared, map } => Stage::Static {
                axis: *axis,
                adj: f(adj),
                shared: *shared,
                map: map.map(f),
            },
            Stage::Dynamic(d) => Stage::Dynamic(d.map(f)),
        }
    }

    pub fn for_each(&self, f: &mut impl FnMut(&P)) {
        match self {
            Stage::Static { adj, map, .. } => {
                f(adj);
                map.for_each(f);
            }
            Stage::Dynamic(d) => d.for_each(f),
        }
    }
}

impl Stage<Var> {
    /// Unshared adjacency this stage applies to `x`.
    pub fn adjacency(&self, tape: &mut Tape, x: Var, path: PairPath) -> Result<Var> {
        match self {
            Stage::Static { axis, adj, shared, .. } => {
                if !*shared {
                    return Ok(*adj);
                }
                let (j, t) = (tape.shape(x)[0], tape.shape(x)[1]);
                let lead = match axis {
                    Axis::Spatial => t,
                    Axis::Temporal => j,
                };
                tape.expand(*adj, lead)
            }
            Stage::Dynamic(d) => crate::dynamic_gc::effective_adjacency(tape, x, d, path),
        }
    }

    pub fn forward(&self, tape: &mut Tape, x: Var, path: PairPath) -> Result<Var> {
        match self {
            Stage::Static { axis, map, .. } => {
                let a = self.adjacency(tape, x, path)?;
                let f = map.forward(tape, x)?;
                match axis {
                    Axis::Spatial => aggregate_spatial(tape, f, a),
                    Axis::Temporal => aggregate_temporal(tape, f, a),
                }
            }
            Stage::Dynamic(d) => dynamic_forward(tape, x, d, path),
        }
    }
}

/// A graph convolution unit of any kind.
#[derive(Debug, Clone, PartialEq)]
pub enum GcUnit<P> {
    /// Dense `[JT, JT]` graph.
    Full { adj: P, map: Mlp<P> },
    /// Product of unshared spatial and temporal weights.
    Factorized {
        spatial: P,
        temporal: P,
        map: Mlp<P>,
        convention: IndexConvention,
    },
    /// Summed parallel branches in each of up to two stacked stages.
    Staged { first: Vec<Stage<P>>, second: Vec<Stage<P>> },
}

impl<P> GcUnit<P> {
    pub fn map<Q>(&self, f: &mut impl FnMut(&P) -> Q) -> GcUnit<Q> {
        match self {
            GcUnit::Full { adj, map } => GcUnit::Full {
                adj: f(adj),
                map: map.map(f),
            },
            GcUnit::Factorized {
                spatial,
                temporal,
                map,
                convention,
            } => GcUnit::Factorized {
                spatial: f(spatial),
                temporal: f(temporal),
                map: map.map(f),
                convention: *convention,
            },
            GcUnit::Staged { first, second } => GcUnit::Staged {
                first: first.iter().map(|s| s.map(f)).collect(),
                second: second.iter().map(|s| s.map(f)).collect(),
            },
        }
    }

    pub fn for_each(&self, f: &mut impl FnMut(&P)) {
        match self {
            GcUnit::Full { adj, map } => {
                f(adj);
                map.for_each(f);
            }
            GcUnit::Factorized {
                spatial,
                temporal,
                map,
                ..
            } => {
                f(spatial);
                f(temporal);
                map.for_each(f);
            }
            GcUnit::Staged { first, second } => {
                for s in first.iter().chain(second) {
                    s.for_each(f);
                }
            }
        }
    }
}

fn sum_branches(tape: &mut Tape, x: Var, branches: &[Stage<Var>], path: PairPath) -> Result<Var> {
    let mut acc = branches[0].forward(tape, x, path)?;
    for b in &branches[1..] {
        let y = b.forward(tape, x, path)?;
        acc = tape.add(acc, y)?;
    }
    Ok(acc)
}

impl GcUnit<Var> {
    pub fn forward(&self, tape: &mut Tape, x: Var, path: PairPath) -> Result<Var> {
        match self {
            GcUnit::Full { adj, map } => {
                let f = map.forward(tape, x)?;
                aggregate_st(tape, f, *adj)
            }
            GcUnit::Factorized {
                spatial,
                temporal,
                map,
                convention,
            } => sts_forward(tape, x, *spatial, *temporal, map, *convention),
            GcUnit::Staged { first, second } => {
                let h = sum_branches(tape, x, first, path)?;
                if second.is_empty() {
                    Ok(h)
                } else {
                    sum_branches(tape, h, second, path)
                }
            }
        }
    }
}

/// Initial value of a parameter and whether the optimiser may change it.
#[derive(Debug, Clone, PartialEq)]
pub struct Init {
    pub value: Tensor,
    pub trainable: bool,
}

impl Init {
    fn free(value: Tensor) -> Self {
        Init { value, trainable: true }
    }

    fn frozen(value: Tensor) -> Self {
        Init {
            value,
            trainable: false,
        }
    }
}

fn lift<P: Clone>(x: Mlp<P>, f: impl Fn(P) -> Init) -> Mlp<Init> {
    x.map(&mut |t| f(t.clone()))
}

/// Builds initial units for a model configuration.
pub(crate) struct UnitFactory<'a> {
    pub cfg: &'a ModelConfig,
    pub rng: &'a mut ChaCha8Rng,
}

impl UnitFactory<'_> {
    fn frames(&self) -> usize {
        self.cfg.frames()
    }

    fn linear(&mut self, c_in: usize, c_out: usize, zero: bool) -> Mlp<Init> {
        let l = if zero {
            LinearMap::zeros(c_in, c_out, true)
        } else {
            LinearMap::glorot(self.rng, c_in, c_out, true)
        };
        lift(Mlp::single(l), Init::free)
    }

    fn two_layer(&mut self, c_in: usize, c_out: usize, zero: bool) -> Mlp<Init> {
        let mut m = Mlp::glorot(self.rng, &[c_in, self.cfg.channels, c_out], true);
        if zero {
            let last = m.layers.last_mut().unwrap();
            *last = LinearMap::zeros(last.in_dim(), c_out, true);
        }
        lift(m, Init::free)
    }

    fn random(&mut self, shape: &[usize]) -> Init {
        Init::free(random_adjacency(self.rng, shape))
    }

    fn prior(&self, axis: Axis, branch: usize) -> Tensor {
        let cfg = self.cfg;
        let raw = match axis {
            Axis::Spatial => {
                let sk = cfg.skeleton();
                if branch % 2 == 0 {
                    spatial_natural(&sk)
                } else {
                    spatial_semantic(&sk)
                }
                .expect("validated skeleton")
                .into_tensor()
            }
            Axis::Temporal => temporal_context(self.frames()).expect("positive frames").into_tensor(),
        };
        if cfg.normalize_prior {
            column_normalized(&raw)
        } else {
            raw
        }
    }

    fn side(&self, axis: Axis) -> usize {
        match axis {
            Axis::Spatial => self.cfg.joints,
            Axis::Temporal => self.frames(),
        }
    }

    fn static_stage(&mut self, axis: Axis, shared: bool, map: Mlp<Init>) -> Stage<Init> {
        let (j, t) = (self.cfg.joints, self.frames());
        let shape: Vec<usize> = match (axis, shared) {
            (Axis::Spatial, true) => vec![j, j],
            (Axis::Temporal, true) => vec![t, t],
            (Axis::Spatial, false) => vec![t, j, j],
            (Axis::Temporal, false) => vec![j, t, t],
        };
        Stage::Static {
            axis,
            adj: self.random(&shape),
            shared,
            map,
        }
    }

    /// Static unshared stage whose slices all start at the axis prior.
    fn prior_static_stage(&mut self, axis: Axis, branch: usize, map: Mlp<Init>) -> Stage<Init> {
        let p = self.prior(axis, branch);
        let lead = match axis {
            Axis::Spatial => self.frames(),
            Axis::Temporal => self.cfg.joints,
        };
        let mut data = Vec::with_capacity(lead * p.len());
        for _ in 0..lead {
            data.extend_from_slice(p.data());
        }
        let mut shape = vec![lead];
        shape.extend_from_slice(p.shape());
        Stage::Static {
            axis,
            adj: Init::free(Tensor::new(&shape, data).expect("positive extents")),
            shared: false,
            map,
        }
    }

    fn dynamic_stage(&mut self, axis: Axis, branch: usize, c_in: usize, map: Mlp<Init>) -> Stage<Init> {
        let cfg = self.cfg;
        let variant = cfg.variant;
        if variant == Variant::StaticGc {
            return self.prior_static_stage(axis, branch, map);
        }
        let alpha0 = if variant == Variant::DynamicOnly { DYNAMIC_ONLY_ALPHA } else { 0.0 };
        let head = AdjustmentHead::init(self.rng, axis, cfg.joints, self.frames(), c_in, cfg.reduction, alpha0);
        let mut head = head.map(&mut |t| Init::free(t.clone()));
        if variant == Variant::ConstrainedOnly {
            head.alpha.trainable = false;
        }
        let side = self.side(axis);
        let corr = match variant {
            Variant::DynamicOnly => Init::frozen(Tensor::zeros(&[side, side])),
            Variant::NoPrior => self.random(&[side, side]),
            _ if cfg.kind.is_dynamic() => Init::free(self.prior(axis, branch)),
            _ => self.random(&[side, side]),
        };
        let rule = if variant == Variant::ReversedUpdate {
            UpdateRule::Reversed
        } else {
            UpdateRule::Adjust
        };
        Stage::Dynamic(DynamicGc {
            axis,
            corr,
            head,
            map,
            rule,
        })
    }

    fn dynamic_branches(&mut self, axis: Axis, count: usize, c_in: usize, c_out: usize, zero: bool) -> Vec<Stage<Init>> {
        (0..count)
            .map(|b| {
                let map = self.linear(c_in, c_out, zero);
                self.dynamic_stage(axis, b, c_in, map)
            })
            .collect()
    }

    /// Unit mapping `c_in` to `c_out` channels; `zero_out` zeroes the final map.
    pub fn unit(&mut self, c_in: usize, c_out: usize, zero_out: bool) -> GcUnit<Init> {
        let cfg = self.cfg;
        let c = cfg.channels;
        let (j, t) = (cfg.joints, self.frames());
        match cfg.kind {
            GcKind::St => GcUnit::Full {
                adj: self.random(&[j * t, j * t]),
                map: self.two_layer(c_in, c_out, zero_out),
            },
            GcKind::Sts => GcUnit::Factorized {
                spatial: self.random(&[t, j, j]),
                temporal: self.random(&[j, t, t]),
                map: self.two_layer(c_in, c_out, zero_out),
                convention: cfg.convention,
            },
            GcKind::S | GcKind::T => {
                let axis = if cfg.kind == GcKind::S { Axis::Spatial } else { Axis::Temporal };
                let map = self.linear(c_in, c_out, zero_out);
                GcUnit::Staged {
                    first: vec![self.static_stage(axis, false, map)],
                    second: vec![],
                }
            }
            GcKind::Std | GcKind::Tsd | GcKind::Vstd => {
                let shared = cfg.kind == GcKind::Vstd;
                let (a1, a2) = if cfg.kind == GcKind::Tsd {
                    (Axis::Temporal, Axis::Spatial)
                } else {
                    (Axis::Spatial, Axis::Temporal)
                };
                let (m1, m2) = if shared {
                    (self.two_layer(c_in, c, false), self.two_layer(c, c_out, zero_out))
                } else {
                    (self.linear(c_in, c, false), self.linear(c, c_out, zero_out))
                };
                GcUnit::Staged {
                    first: vec![self.static_stage(a1, shared, m1)],
                    second: vec![self.static_stage(a2, shared, m2)],
                }
            }
            GcKind::Ds | GcKind::Dt => {
                let axis = if cfg.kind == GcKind::Ds { Axis::Spatial } else { Axis::Temporal };
                GcUnit::Staged {
                    first: self.dynamic_branches(axis, 1, c_in, c_out, zero_out),
                    second: vec![],
                }
            }
            GcKind::Dstd | GcKind::Dtsd => {
                let (spatial_axis, temporal_axis) = match cfg.variant {
                    Variant::DsOnly => (Axis::Spatial, Axis::Spatial),
                    Variant::DtOnly => (Axis::Temporal, Axis::Temporal),
                    _ => (Axis::Spatial, Axis::Temporal),
                };
                let n = cfg.spatial_branches;
                if cfg.kind == GcKind::Dstd {
                    GcUnit::Staged {
                        first: self.dynamic_branches(spatial_axis, n, c_in, c, false),
                        second: self.dynamic_branches(temporal_axis, 1, c, c_out, zero_out),
                    }
                } else {
                    GcUnit::Staged {
                        first: self.dynamic_branches(temporal_axis, 1, c_in, c, false),
                        second: self.dynamic_branches(spatial_axis, n, c, c_out, zero_out),
                    }
                }
            }
        }
    }
}

fn register_linear(store: &mut ParamStore, prefix: &str, l: &Linear<Init>) -> Linear<ParamId> {
    Linear {
        w: add(store, format!("{prefix}.w"), &l.w),
        b: l.b.as_ref().map(|b| add(store, format!("{prefix}.b"), b)),
    }
}

fn add(store: &mut ParamStore, name: String, i: &Init) -> ParamId {
    if i.trainable {
        store.add(name, i.value.clone())
    } else {
        store.add_frozen(name, i.value.clone())
    }
}

fn register_mlp(store: &mut ParamStore, prefix: &str, m: &Mlp<Init>) -> Mlp<ParamId> {
    let n = m.layers.len();
    let layers = m
        .layers
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let name = if n == 1 { prefix.to_string() } else { format!("{prefix}.l{i}") };
            register_linear(store, &name, l)
        })
        .collect();
    let slopes = m
        .slopes
        .iter()
        .enumerate()
        .map(|(i, s)| add(store, format!("{prefix}.act{i}"), s))
        .collect();
    Mlp { layers, slopes }
}

fn register_stage(store: &mut ParamStore, prefix: &str, s: &Stage<Init>) -> Stage<ParamId> {
    match s {
        Stage::Static { axis, adj, shared, map } => Stage::Static {
            axis: *axis,
            adj: add(store, format!("{prefix}.adj"), adj),
            shared: *shared,
            map: register_mlp(store, &format!("{prefix}.map"), map),
        },
        Stage::Dynamic(d) => Stage::Dynamic(DynamicGc {
            axis: d.axis,
            corr: add(store, format!("{prefix}.corr"), &d.corr),
            head: AdjustmentHead {
                theta: register_linear(store, &format!("{prefix}.theta"), &d.head.theta),
                phi: register_linear(store, &format!("{prefix}.phi"), &d.head.phi),
                mlp: register_mlp(store, &format!("{prefix}.mlp"), &d.head.mlp),
                alpha: add(store, format!("{prefix}.alpha"), &d.head.alpha),
            },
            map: register_mlp(store, &format!("{prefix}.map"), &d.map),
            rule: d.rule,
        }),
    }
}

/// Adds every tensor of `unit` to `store` under `prefix`.
pub(crate) fn register_unit(store: &mut ParamStore, prefix: &str, unit: &GcUnit<Init>) -> GcUnit<ParamId> {
    match unit {
        GcUnit::Full { adj, map } => GcUnit::Full {
            adj: add(store, format!("{prefix}.adj"), adj),
            map: register_mlp(store, &format!("{prefix}.map"), map),
        },
        GcUnit::Factorized {
            spatial,
            temporal,
            map,
            convention,
        } => GcUnit::Factorized {
            spatial: add(store, format!("{prefix}.adj_s"), spatial),
            temporal: add(store, format!("{prefix}.adj_t"), temporal),
            map: register_mlp(store, &format!("{prefix}.map"), map),
            convention: *convention,
        },
        GcUnit::Staged { first, second } => {
            let tag = |s: &Stage<Init>| match s.axis() {
                Axis::Spatial => if matches!(s, Stage::Dynamic(_)) { "ds" } else { "s" },
                Axis::Temporal => if matches!(s, Stage::Dynamic(_)) { "dt" } else { "t" },
            };
            let first = first
                .iter()
                .enumerate()
                .map(|(b, s)| register_stage(store, &format!("{prefix}.first.{}{b}", tag(s)), s))
                .collect();
            let second = second
                .iter()
                .enumerate()
                .map(|(b, s)| register_stage(store, &format!("{prefix}.second.{}{b}", tag(s)), s))
                .collect();
            GcUnit::Staged { first, second }
        }
    }
}
