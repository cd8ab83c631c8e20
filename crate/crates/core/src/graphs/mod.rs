//! Adjacency representations, skeleton priors and spatiotemporal composition.
//!
//! Vertices of the full spatiotemporal graph are flattened joint-major:
//! vertex `(j, t)` has index `j·T + t` everywhere in the crate.

mod adjacency;
mod compose;
mod priors;
mod skeleton;

pub use adjacency::{
    expand_spatial, expand_temporal, random_adjacency, Spatiotemporal, UnsharedSpatial,
    UnsharedTemporal, VanillaSpatial, VanillaTemporal,
};
pub use compose::{compose_spatiotemporal, IndexConvention};
pub(crate) use compose::{compose_indices, compose_tensor};
pub use priors::{column_normalized, spatial_natural, spatial_semantic, temporal_context};
pub use skeleton::SkeletonSpec;
