use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::params::uniform;
use crate::numerics::Tensor;

macro_rules! adjacency {
    ($(#[$doc:meta])* $name:ident, $rank:expr, $check:expr) => {
        $(#[$doc])*
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name(Tensor);

        impl $name {
            pub fn new(a: Tensor) -> Result<Self> {
                let check: fn(&[usize]) -> bool = $check;
                if a.rank() != $rank || !check(a.shape()) {
                    return Err(Error::shape(stringify!($name), a.shape(), &[$rank]));
                }
                if !a.is_finite() {
                    return Err(Error::Numeric(format!("{} has non-finite entries", stringify!($name))));
                }
                Ok(Self(a))
            }

            pub fn tensor(&self) -> &Tensor {
                &self.0
            }

            pub fn into_tensor(self) -> Tensor {
                self.0
            }
        }
    };
}

adjacency!(
    /// Joint-to-joint weights shared by every frame; `a[p, q]` is the influence of `p` on `q`.
    VanillaSpatial, 2, |s| s[0] == s[1]
);
adjacency!(
    /// Frame-to-frame weights shared by every joint.
    VanillaTemporal, 2, |s| s[0] == s[1]
);
adjacency!(
    /// One spatial matrix per frame, `[T, J, J]`.
    UnsharedSpatial, 3, |s| s[1] == s[2]
);
adjacency!(
    /// One temporal matrix per joint, `[J, T, T]`.
    UnsharedTemporal, 3, |s| s[1] == s[2]
);
adjacency!(
    /// Dense graph over all `J·T` vertices, vertex index `joint·T + frame`.
    Spatiotemporal, 2, |s| s[0] == s[1]
);

impl VanillaSpatial {
    pub fn joints(&self) -> usize {
        self.0.shape()[0]
    }
}

impl VanillaTemporal {
    pub fn frames(&self) -> usize {
        self.0.shape()[0]
    }
}

impl UnsharedSpatial {
    pub fn frames(&self) -> usize {
        self.0.shape()[0]
    }

    pub fn joints(&self) -> usize {
        self.0.shape()[1]
    }
}

impl UnsharedTemporal {
    pub fn joints(&self) -> usize {
        self.0.shape()[0]
    }

    pub fn frames(&self) -> usize {
        self.0.shape()[1]
    }
}

impl Spatiotemporal {
    pub fn vertices(&self) -> usize {
        self.0.shape()[0]
    }
}

fn repeat(a: &Tensor, n: usize) -> Tensor {
    let mut shape = vec![n];
    shape.extend_from_slice(a.shape());
    let mut data = Vec::with_capacity(n * a.len());
    for _ in 0..n {
        data.extend_from_slice(a.data());
    }
    Tensor::new(&shape, data).expect("repeated extents are positive")
}

/// Copies a shared spatial matrix into every one of `frames` slices.
pub fn expand_spatial(a: &VanillaSpatial, frames: usize) -> Result<UnsharedSpatial> {
    if frames == 0 {
        return Err(Error::Domain("frame count must be at least 1".into()));
    }
    UnsharedSpatial::new(repeat(&a.0, frames))
}

/// Copies a shared temporal matrix into every one of `joints` slices.
pub fn expand_temporal(a: &VanillaTemporal, joints: usize) -> Result<UnsharedTemporal> {
    if joints == 0 {
        return Err(Error::Domain("joint count must be at least 1".into()));
    }
    UnsharedTemporal::new(repeat(&a.0, joints))
}

/// Uniform in `[-1/√n, 1/√n]` where `n` is the trailing matrix side.
pub fn random_adjacency(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = *shape.last().expect("non-empty shape");
    uniform(rng, shape, 1.0 / (n as f64).sqrt())
}
