//! Numerical laboratory for the diagonal-kernel coagulation equation in
//! rescaled coordinates: stationary-profile construction, per-fibre lattice
//! dynamics, Lyapunov diagnostics, an independent grid solver for
//! cross-checks, and canned experiment scenarios.

// Validation guards use the !(x > 0.0) form on purpose: it trips on NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod fibre;
pub mod grid;
pub mod model;
pub mod profile;

pub use error::Error;
pub use model::ModelParams;
pub use profile::{ProfileBuilder, StationaryProfile};

