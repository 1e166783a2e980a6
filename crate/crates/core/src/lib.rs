//! Analysis framework for ARQ, repetition-time-diversity (Chase combining)
//! and incremental-redundancy hybrid ARQ over block-fading channels whose
//! one-bit ACK/NACK feedback is flipped with probability `p_b`.
//!
//! * [`fading`]: gain laws (Nakagami-N on `g = |h|^2`, deterministic).
//! * [`model`]: configuration, policy and result types.
//! * [`analytic`]: closed-form stop/decode probabilities and metrics.
//! * [`montecarlo`]: event-level packet simulator used as an independent oracle.
//! * [`optimizer`]: power/rate allocation under an average power budget.

pub mod analytic;
pub mod fading;
pub mod model;
pub mod montecarlo;
pub mod optimizer;
mod par;
mod special;

pub use fading::{FadingDistribution, FadingError, FadingKind};
pub use model::{
    db_to_linear, linear_to_db, ArqConfig, PerformanceReport, PowerPolicy, Protocol, RatePolicy,
    ReportStdErrors, Scenario, StopDistribution, Violation, ViolationCode,
};
