//! Capability-coupling diagnostics for families of language models.
//!
//! Scores are fractions in `[0, 1]`; parameter counts are in billions
//! unless a name says otherwise.

// `!(x > 0.0)` is the NaN-rejecting guard used throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coupling;
pub mod data;
pub mod error;
pub mod field;
pub mod geometry;
pub mod linalg;
pub mod ode;
pub mod scaling;
pub mod stats;
pub mod store;

pub use coupling::{
    bootstrap_nc_ci, classify_phase, fit_running_coupling, local_coupling, BootstrapCi, CouplingPoint,
    PhaseLabel, RunningCouplingFit,
};
pub use error::{CapeError, Result};
pub use geometry::{PcaKind, PcaResult};
pub use ode::{OdeModel, TermLibrary, Trajectory};
pub use stats::{PermutationMethod, PermutationResult};
pub use store::{
    FamilySeries, FrontierRecord, LossPoint, ModelRecord, Panel, PanelMetadata, TableFormat, CORE_BENCHMARKS,
    HELLASWAG, TRUTHFULQA,
};

/// Toolkit version embedded in reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
