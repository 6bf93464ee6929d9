//! Kernelized off-policy evaluation and optimization for continuous
//! treatments.

pub mod bandwidth;
pub mod baselines;
pub mod data;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod kernels;
pub mod linalg;
pub mod optimizer;
pub mod policies;
pub mod propensity;
pub mod rng;

pub use data::{Dataset, EvalResult, LogRecord, TreatmentBounds};
pub use error::{Error, Result};
pub use estimators::{EstimatorConfig, EstimatorKind};
pub use kernels::Kernel;
pub use policies::{ConstraintSet, LinearClass, Policy};
pub use optimizer::{OptimizeConfig, OptimizeReport, RestartStatus, SearchConfig};
pub use propensity::GpsModel;
