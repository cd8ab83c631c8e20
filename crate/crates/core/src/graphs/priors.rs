use super::adjacency::{VanillaSpatial, VanillaTemporal};
use super::skeleton::SkeletonSpec;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Bone connectivity plus self-loops.
pub fn spatial_natural(spec: &SkeletonSpec) -> Result<VanillaSpatial> {
    spec.validate()?;
    let n = spec.joint_count;
    let mut a = Tensor::eye(n);
    for &(p, q) in &spec.bones {
        a.set(&[p, q], 1.0);
        a.set(&[q, p], 1.0);
    }
    VanillaSpatial::new(a)
}

/// Joints in one limb, or in mirrored limbs, are fully connected.
pub fn spatial_semantic(spec: &SkeletonSpec) -> Result<VanillaSpatial> {
    spec.validate()?;
    let n = spec.joint_count;
    let mut a = Tensor::eye(n);
    let mut connect = |xs: &[usize], ys: &[usize]| {
        for &p in xs {
            for &q in ys {
                a.set(&[p, q], 1.0);
                a.set(&[q, p], 1.0);
            }
        }
    };
    for (_, joints) in &spec.limbs {
        connect(joints, joints);
    }
    for (l, r) in &spec.mirrors {
        let lj = spec
            .limb(l)
            .ok_or_else(|| Error::Spec(format!("unknown limb {l}")))?;
        let rj = spec
            .limb(r)
            .ok_or_else(|| Error::Spec(format!("unknown limb {r}")))?;
        connect(lj, rj);
    }
    VanillaSpatial::new(a)
}

/// Band of width one: each frame sees itself and its neighbours.
pub fn temporal_context(frames: usize) -> Result<VanillaTemporal> {
    if frames == 0 {
        return Err(Error::Domain("frame count must be at least 1".into()));
    }
    let a = Tensor::from_fn(&[frames, frames], |ix| {
        if ix[0].abs_diff(ix[1]) <= 1 {
            1.0
        } else {
            0.0
        }
    });
    VanillaTemporal::new(a)
}

/// Scales each column to unit sum so every target receives a convex
/// combination of its sources.
pub fn column_normalized(a: &Tensor) -> Tensor {
    let (r, c) = (a.shape()[0], a.shape()[1]);
    let mut out = a.clone();
    for q in 0..c {
        let s: f64 = (0..r).map(|p| a.data()[p * c + q]).sum();
        if s != 0.0 {
            for p in 0..r {
                out.data_mut()[p * c + q] /= s;
            }
        }
    }
    out
}
