//! Symbolic regression toolkit that aligns model complexity with the
//! intrinsic dimensionality of the data.
//!
//! The pipeline is:
//!
//! 1. estimate the intrinsic dimensionality (ID) of the inputs with a suite
//!    of estimators and turn the spread of estimates into a target window
//!    ([`intrinsic_dim::id_profile`]);
//! 2. evolve stack-based symbolic models ([`evolve::evolve`]);
//! 3. measure each model's effective dimensionality (ED) as the rank of its
//!    finite-difference Hessian averaged over three strategic data points
//!    ([`hessian_ed::effective_dimensionality`]);
//! 4. keep the Pareto-front models whose ED falls inside the ID window
//!    ([`select::select_models`]).

pub mod dataset;
pub mod evolve;
pub mod expr;
pub mod hessian_ed;
pub mod intrinsic_dim;
pub mod select;
pub mod synth;

pub use dataset::{Dataset, StrategicPoints};
pub use evolve::{GpConfig, Population, ScoredModel};
pub use expr::{Operand, Operator, StackModel};
pub use hessian_ed::{HessianEstimate, SamplingValidation};
pub use intrinsic_dim::{IdProfile, Estimator};
pub use select::{Band, BandReport};
