//! Polarization analysis of community interaction logs.
//!
//! Users are described by an opinion factor and two source factors computed
//! from their interactions with two opposed communities, clustered with
//! weighted k-means, and tracked across overlapping timeframes whose cluster
//! structure is classified into period types.

pub mod artifacts;
pub mod clustering;
pub mod error;
pub mod factors;
pub mod ingest;
pub mod periods;
pub mod pipeline;
pub mod rng;
pub mod synth;
pub mod timeline;

pub use error::{Error, Result};

/// Version stamped into every exported artifact.
pub const SCHEMA_VERSION: u32 = 1;
