//! Uplift modeling with a shared-weight twin network.
//!
//! The library estimates individual treatment effects from randomized
//! experiments with binary treatment and binary outcome. A single MLP
//! parameter set is evaluated twice per observation, once with the
//! treatment input pinned to 1 and once pinned to 0; the difference of
//! the two sigmoid outputs is the predicted uplift. Training jointly
//! minimizes a conditional-mean cross-entropy and an uplift loss, either
//! the squared error against the transformed outcome (direct form) or a
//! cross-entropy on treatment proportions (indirect form).
//!
//! Modules:
//! - [`numerics`]: dense f64 matrices and the finite-difference oracle
//! - [`data`]: RCT datasets, CSV ingestion, splits, synthetic generators
//! - [`model`]: the twin network, its analytic gradients
//! - [`losses`]: the three loss functions and their alpha blends
//! - [`metrics`]: Qini curve/coefficient and Kendall uplift correlation
//! - [`training`]: minibatch SGD, validation-based selection, tuning
//! - [`baselines`]: two-model and interaction logistic baselines
//! - [`persist`]: the textual model file format

pub mod baselines;
pub mod data;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod persist;
pub mod training;

pub use error::{Error, Result};
