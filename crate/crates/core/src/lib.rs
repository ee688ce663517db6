//! Self-supervised object detection over precomputed region embeddings.
//!
//! Regions from frames that mention an object (positives) and frames that do
//! not (negatives) are clustered with a label-weighted soft assignment. Clusters
//! are ranked by a potential score, the best ones are distilled per frame with
//! dense subgraph peeling, and the survivors train a small MLP detector. The
//! loop repeats with warm-started weights.
//!
//! Builds without `std` (with `alloc`); the default `std` feature only enables
//! runtime SIMD dispatch in the matrix kernels.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod detector;
pub mod dsd;
pub mod error;
pub mod eval;
pub mod geometry;
mod math;
pub mod model;
pub mod rng;
pub mod scoring;
pub mod synth;
pub mod wdec;

pub use error::{Error, Result};
pub use geometry::BBox;
pub use model::{Dataset, FrameId, FrameRecord, GroundTruth, RegionId, RegionRecord, VideoId};
