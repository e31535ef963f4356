//! Learning time-varying causal DAGs from panel data.
//!
//! Every weighted adjacency entry is expanded in a B-spline basis over time,
//! `B_t[a][b] = sum_k F_k(t) * gamma[k*p + a][b]`, which turns the dynamic
//! structural equation model into a fixed-coefficient regression on the
//! Kronecker design `F_t ⊗ X_t`. The coefficients are fitted by minimizing a
//! Gaussian reconstruction score under a smooth acyclicity constraint with an
//! augmented Lagrangian. Lagged (autoregressive) weights are handled the same
//! way with the design `F_t ⊗ Z_t`.
//!
//! Variables follow a fixed role convention: index 0 is the treatment, index
//! `p - 1` is the outcome and everything in between is a mediator.

// Negated float comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod bench;
pub mod dag;
pub mod datagen;
pub mod effect;
pub mod error;
pub mod io;
pub mod metrics;
pub mod model;
pub mod solver;

pub use basis::BasisConfig;
pub use error::{Error, Result};
pub use model::{CoefficientSet, GraphSequence, LaggedPanel, PanelTensor, PartitionedWeights};
pub use solver::{fit, FitResult, SolverConfig};

/// Default edge threshold applied to absolute weights.
pub const DEFAULT_THRESHOLD: f64 = 0.2;
