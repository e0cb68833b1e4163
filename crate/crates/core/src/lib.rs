//! Anderson-Rubin tests for the presence of peer effects in balanced panels
//! when the interaction network is unknown.
//!
//! The unrestricted model lets every potential peer `j` of individual `i`
//! carry its own coefficient. Testing that all of them are zero is a
//! many-restrictions problem: the exogenous characteristics of potential
//! peers act as instruments, so the instrument count grows like `n²`.
//!
//! Observations are stacked period by period: `(i, t)` (1-based) lives in
//! row `(t - 1) * n + i`. Internally everything is 0-based, so row
//! `t * n + i`.
//!
//! Modules:
//! - [`panel`]: the panel container, validation and the two-way within transform.
//! - [`instruments`]: potential-peer sets, the peer-characteristic block `Z` and
//!   greedy selection of linearly independent instrument columns.
//! - [`projection`]: orthonormal bases, leverage and quadratic forms in `P` and `P - D`.
//! - [`kurtosis`]: excess-kurtosis estimation from within-transformed residuals.
//! - [`artest`]: the AR statistics, their variance estimators, decision rules and
//!   the TSLS comparator.
//! - [`simulate`]: data-generating processes and the Monte Carlo runner.

pub mod artest;
pub mod error;
pub mod instruments;
pub mod kurtosis;
pub mod panel;
pub mod projection;
pub mod simulate;

pub use nalgebra;

pub use artest::{
    ar_fe, ar_no_fe, decide_chisq, residualize, tsls_peer_test, ArOptions, ChisqDecision,
    FeStatistics, TestResult, TslsResult, Variant,
};
pub use error::{Error, Result};
pub use instruments::{
    assemble_q, build_z, default_peer_structure, ColumnOrigin, InstrumentMatrix, IvSpec,
    PeerInstruments, PeerStructure,
};
pub use kurtosis::{excess_kurtosis, pi_constants, KurtosisEstimate};
pub use panel::{build_j, stack_index, validate_panel, within_transform, Panel, TransformedPanel};
pub use projection::{
    orthonormalize, quad_form_p, quad_form_p_minus_d, trace_phi_crudu, ProjectionBundle,
};
