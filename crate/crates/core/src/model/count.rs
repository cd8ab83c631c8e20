use super::config::{ModelConfig, Variant};
use super::network::Model;
use crate::dynamic_gc::{reduced_width, Axis};
use crate::static_gc::GcKind;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamCount {
    /// Trainable elements per unit, forward order.
    pub layers: Vec<(String, usize)>,
    /// Trainable elements.
    pub total: usize,
    /// Including frozen tensors.
    pub all: usize,
}

impl ParamCount {
    pub fn to_table(&self) -> String {
        let width = self.layers.iter().map(|(n, _)| n.len()).max().unwrap_or(5).max(5);
        let mut s = String::new();
        for (name, n) in &self.layers {
            s += &format!("{name:<width$}  {n:>10}\n");
        }
        s += &format!("{:<width$}  {:>10}\n", "total", self.total);
        s
    }
}

pub fn count_params(model: &Model) -> ParamCount {
    let layers = model
        .units()
        .map(|u| {
            let prefix = format!("{}.", u.name);
            let n = model
                .store
                .iter()
                .filter(|(_, p)| p.trainable && p.name.starts_with(&prefix))
                .map(|(_, p)| p.value.len())
                .sum();
            (u.name.clone(), n)
        })
        .collect();
    ParamCount {
        layers,
        total: model.store.trainable_count(),
        all: model.store.iter().map(|(_, p)| p.value.len()).sum(),
    }
}

fn linear(a: usize, b: usize) -> usize {
    a * b + b
}

/// Two layers through `hidden` with one PReLU slope.
fn mlp2(a: usize, hidden: usize, b: usize) -> usize {
    linear(a, hidden) + linear(hidden, b) + 1
}

/// Shared matrix, two compact projections, pairwise MLP, intensity, map.
pub fn dynamic_layer_params(axis: Axis, joints: usize, frames: usize, c_in: usize, c_out: usize, reduction: usize) -> usize {
    let (n, o) = axis.extents(joints, frames);
    let c = reduced_width(c_in, reduction);
    n * n + 2 * linear(c_in, c) + mlp2(2 * o * c, o, o) + 1 + linear(c_in, c_out)
}

/// Closed-form element count of one unit mapping `c_in` to `c_out`.
pub fn unit_params(cfg: &ModelConfig, c_in: usize, c_out: usize) -> usize {
    let (j, t, c, r) = (cfg.joints, cfg.frames(), cfg.channels, cfg.reduction);
    let unshared = |axis: Axis| {
        let (n, o) = axis.extents(j, t);
        o * n * n
    };
    let dynamic = |axis: Axis, a: usize, b: usize| match cfg.variant {
        Variant::StaticGc => unshared(axis) + linear(a, b),
        _ => dynamic_layer_params(axis, j, t, a, b, r),
    };
    match cfg.kind {
        GcKind::St => (j * t) * (j * t) + mlp2(c_in, c, c_out),
        GcKind::Sts => unshared(Axis::Spatial) + unshared(Axis::Temporal) + mlp2(c_in, c, c_out),
        GcKind::S => unshared(Axis::Spatial) + linear(c_in, c_out),
        GcKind::T => unshared(Axis::Temporal) + linear(c_in, c_out),
        GcKind::Std | GcKind::Tsd => {
            unshared(Axis::Spatial) + unshared(Axis::Temporal) + linear(c_in, c) + linear(c, c_out)
        }
        GcKind::Vstd => j * j + t * t + mlp2(c_in, c, c) + mlp2(c, c, c_out),
        GcKind::Ds => dynamic(Axis::Spatial, c_in, c_out),
        GcKind::Dt => dynamic(Axis::Temporal, c_in, c_out),
        GcKind::Dstd | GcKind::Dtsd => {
            let (sa, ta) = match cfg.variant {
                Variant::DsOnly => (Axis::Spatial, Axis::Spatial),
                Variant::DtOnly => (Axis::Temporal, Axis::Temporal),
                _ => (Axis::Spatial, Axis::Temporal),
            };
            let b = cfg.spatial_branches;
            if cfg.kind == GcKind::Dstd {
                b * dynamic(sa, c_in, c) + dynamic(ta, c, c_out)
            } else {
                dynamic(ta, c_in, c) + b * dynamic(sa, c, c_out)
            }
        }
    }
}

/// Closed-form element count of a whole model, frozen tensors included.
pub fn expected_params(cfg: &ModelConfig) -> usize {
    let (d, c) = (cfg.dims, cfg.channels);
    let inner = cfg.blocks * cfg.units_per_block;
    // one PReLU slope after every unit but the last
    unit_params(cfg, d, c) + 1 + inner * (unit_params(cfg, c, c) + 1) + unit_params(cfg, c, d)
}
