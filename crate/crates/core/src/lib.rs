//! Sparse Gaussian-process regression: variational (SVGP, VFITC),
//! robust, MAP and parametric predictive (PPGPR) objectives over a shared
//! whitened inducing-point model, with hand-written gradients, a minibatch
//! Adam trainer and predictive calibration metrics.

pub mod data;
pub mod error;
pub mod grad;
pub mod kernels;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod objectives;
pub mod trainer;

pub use error::{GpError, Result};
pub use kernels::{KernelFamily, KernelParams};
pub use model::{CovKind, CovParam, ModelState, PredictiveMoments};
pub use objectives::{Batch, Method, ObjectiveSpec, ObjectiveValue};
