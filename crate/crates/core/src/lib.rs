//! Content-aware viewpoint selection for projection-based point cloud
//! quality assessment.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the CLI and
//! parallel fan-out live in the `pcqa-view` companion crate.
#![no_std]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod cavgn;
pub mod cloud;
pub mod distortion;
pub mod dov;
pub mod error;
pub mod eval;
pub mod features;
pub mod geometry;
pub mod math;
pub mod metrics;
pub mod nn;
pub mod render;
pub mod ssvrn;
pub mod synth;

pub use cloud::{summarize, CloudSummary, PointCloud};
pub use error::{Error, Result};
pub use math::Vec3;
