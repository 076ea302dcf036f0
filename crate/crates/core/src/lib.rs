//! Robust estimation of sparse Kronecker-separable precision matrices for
//! tensor-valued data with elliptical (possibly heavy-tailed) distributions.
//!
//! The main entry point is [`estimators::estimate`], which runs the spatial-sign
//! separate estimator (`Method::Sss`) or one of the mean-based baselines
//! (`Method::Sep`, `Method::Cyc`) on a set of sample tensors.

// `!(x >= 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimators;
pub mod evaluation;
pub mod experiment;
pub mod glasso;
pub mod io;
pub mod robust;
pub mod simulation;
pub mod sym;
pub mod tensor;

pub use error::{Error, Result};
pub use estimators::{estimate, EstimatorSpec, Method, PrecisionSet};
pub use evaluation::{LambdaGrid, LossConvention};
pub use experiment::{run_experiment, ExperimentConfig, ExperimentRecord};
pub use glasso::{graphical_lasso, SolverOptions, SolverResult};
pub use simulation::{DistSpec, GroundTruth, ModelId};
pub use sym::SymMatrix;
pub use tensor::Tensor;
