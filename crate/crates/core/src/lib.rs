//! Numerical pipeline for certifying genuine multipartite entanglement of
//! single-photon path-entangled states with displacement-based local
//! measurements.
//!
//! The crate is split along the pipeline:
//!
//! * [`fock`]: truncated multimode Fock-space states, optical channels and
//!   click statistics of non-photon-number-resolving detectors.
//! * [`witness`]: the witness observables, their expectation values and
//!   the measurable lower bound assembled from three independent settings.
//! * [`bisep`]: the biseparable bound as a one-angle eigenvalue problem per
//!   bipartition, plus a brute-force product-state oracle.
//! * [`expsim`]: the heralded-source model, scenario evaluation, Monte Carlo
//!   trials, parameter tuning and scalability scans.
//! * [`stats`]: Hoeffding p-values and trial planning.

pub mod bisep;
mod error;
pub mod expsim;
pub mod fock;
pub mod stats;
pub mod witness;

pub use error::{Error, Result};

pub use bisep::{Bipartition, BoundOptions, BoundResult};
pub use expsim::{ScenarioReport, SourceModel, TrialCounts};
pub use fock::{Basis, ClickStats, OccupationTuple, PhaseAveraging, TruncatedState};
pub use stats::Ranges;
pub use witness::{
    Conventions, DisplacementSpec, Estimator, ObservableTriple, SigmaConvention, WitnessParams,
};

/// Library version embedded in every machine-readable output.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
