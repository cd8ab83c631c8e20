use super::adjacency::{Spatiotemporal, UnsharedSpatial, UnsharedTemporal};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Which slices of the unshared factors weight the edge `(p, m) → (q, n)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IndexConvention {
    /// `s[m, p, q] · t[q, m, n]`: spatial slice of the source frame.
    SourceFrame,
    /// `s[n, p, q] · t[q, m, n]`: spatial slice of the target frame.
    OutputFrame,
    /// `s[n, p, q] · t[p, m, n]`: temporal slice of the source joint.
    OutputJointTemporal,
}

impl IndexConvention {
    pub const ALL: [IndexConvention; 3] = [
        IndexConvention::SourceFrame,
        IndexConvention::OutputFrame,
        IndexConvention::OutputJointTemporal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            IndexConvention::SourceFrame => "source_frame",
            IndexConvention::OutputFrame => "output_frame",
            IndexConvention::OutputJointTemporal => "output_joint_temporal",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }
}

/// Flat offsets into `s[T, J, J]` and `t[J, T, T]` for one edge.
#[inline]
pub(crate) fn compose_indices(
    conv: IndexConvention,
    frames: usize,
    joints: usize,
    p: usize,
    m: usize,
    q: usize,
    n: usize,
) -> (usize, usize) {
    let (sigma, tau) = match conv {
        IndexConvention::SourceFrame => (m, q),
        IndexConvention::OutputFrame => (n, q),
        IndexConvention::OutputJointTemporal => (n, p),
    };
    (
        (sigma * joints + p) * joints + q,
        (tau * frames + m) * frames + n,
    )
}

pub(crate) fn compose_tensor(s: &Tensor, t: &Tensor, conv: IndexConvention) -> Result<Tensor> {
    let ss = s.shape();
    let ts = t.shape();
    if ss.len() != 3 || ts.len() != 3 || ss[1] != ss[2] || ts[1] != ts[2] || ss[0] != ts[1] || ss[1] != ts[0] {
        return Err(Error::shape("compose_spatiotemporal", ss, ts));
    }
    let (frames, joints) = (ss[0], ss[1]);
    let jt = frames * joints;
    let mut out = Tensor::zeros(&[jt, jt]);
    let od = out.data_mut();
    for p in 0..joints {
        for m in 0..frames {
            let row = (p * frames + m) * jt;
            for q in 0..joints {
                for n in 0..frames {
                    let (si, ti) = compose_indices(conv, frames, joints, p, m, q, n);
                    od[row + q * frames + n] = s.data()[si] * t.data()[ti];
                }
            }
        }
    }
    Ok(out)
}

/// Dense spatiotemporal graph whose edges are products of a spatial and a
/// temporal weight.
pub fn compose_spatiotemporal(
    spatial: &UnsharedSpatial,
    temporal: &UnsharedTemporal,
    conv: IndexConvention,
) -> Result<Spatiotemporal> {
    Spatiotemporal::new(compose_tensor(spatial.tensor(), temporal.tensor(), conv)?)
}
