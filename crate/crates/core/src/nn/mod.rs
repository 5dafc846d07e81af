//! Minimal f64 neural-network stack: flat parameter storage, layers with
//! explicit backward passes, spectral ops, AdamW, and a finite-difference
//! gradient checker.

pub mod gradcheck;
pub mod init;
pub mod layers;
pub mod optim;
pub mod param;
pub mod spectral;

pub use gradcheck::{check_parameter_gradients, GradCheckReport};
pub use layers::{Activation, Conv2d, ConvInit, GroupNorm, Linear};
pub use optim::AdamW;
pub use param::{GradSet, PRef, ParamSet};
