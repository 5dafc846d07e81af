//! Desk-scale single-step latent depth estimation pipeline.
//!
//! The crate covers the full loop: procedural RGB-D data generation and file
//! I/O, depth-target preprocessing, a miniature image-to-latent codec, a
//! latent-to-latent U-Net with optional frequency-domain enhancement, feature
//! alignment against an external token encoder, the training losses, the
//! affine-invariant evaluation stack, and the two-stage training curriculum
//! that ties everything together.

pub mod checkpoint;
pub mod dataio;
pub mod losses;
pub mod metrics;
pub mod nn;
pub mod error;
pub mod preprocess;
pub mod raster;

pub use error::{Error, Result};
pub use raster::{DepthMap, DomainTag, RgbImage, Sample, ValidityMask};
