//! Direction-of-arrival estimation on two-level nested arrays.
//!
//! A two-level nested array of `M` physical sensors has a filled
//! difference coarray of `2M̄ - 1` virtual elements, `M̄ = M²/4 + M/2`, so
//! subspace estimators driven by the coarray resolve more sources than
//! sensors. This crate implements that pipeline end to end:
//!
//! * [`geometry`] — nested/uniform array layouts, difference coarrays,
//!   steering vectors and manifolds;
//! * [`signal`] — reproducible snapshot synthesis and the analytic
//!   (infinite-sample) covariance;
//! * [`covariance`] — sample covariance, coarray vectorization, spatial
//!   smoothing, and the equivalent-ULA square root;
//! * [`subspace`] — MUSIC: noise subspace, pseudospectrum, peak search;
//! * [`kai`] — iterative knowledge-aided covariance refinement driven by
//!   a stochastic maximum-likelihood objective over a reliability-factor
//!   grid;
//! * [`harness`] — seeded Monte-Carlo sweeps (RMSE and probability of
//!   resolution versus SNR or snapshot count) with CSV/JSON output.
//!
//! The `nestdoa` binary exposes the harness and the diagnostic tools as
//! CLI subcommands.

pub mod covariance;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod kai;
pub mod linalg;
pub mod signal;
pub mod subspace;

pub use error::{DoaError, Result};
