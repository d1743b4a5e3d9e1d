//! Coverage-probability manifolds from base-station locations.
//!
//! The pipeline projects base-station (BS) coordinates onto local planar
//! frames, cuts the region into square regions of interest (RoIs),
//! rasterizes each RoI into a binary occupancy grid and computes the
//! per-location downlink coverage probability over the concentric
//! region of evaluation (RoE). Stochastic-geometry baselines and the
//! L1 evaluation metric are provided alongside, together with the tile
//! file format shared with external model trainers.

pub mod baselines;
pub mod coverage;
pub mod error;
pub mod geo;
pub mod metrics;
pub mod pipeline;
pub mod quad;
pub mod seeds;
pub mod store;
pub mod tiles;

pub use error::{Error, Result};
