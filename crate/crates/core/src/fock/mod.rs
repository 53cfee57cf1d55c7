//! Truncated multimode Fock space: basis, states, optical channels and the
//! click statistics of on/off detectors preceded by displacements.

mod basis;
mod detect;
mod state;

pub use basis::{basis_size, enumerate_basis, Basis, OccupationTuple, DEFAULT_MAX_BASIS};
pub use detect::{
    click_stats, click_stats_with_guard, coincidence_after_split, diagonal_stats,
    noclick_set_prob, noclick_set_prob_complex, pair_noclick, pair_noclick_complex, ClickStats,
    DiagonalStats, PairNoclick, PhaseAveraging, DEFAULT_PATTERN_GUARD,
};
pub use state::TruncatedState;

/// `<n|alpha>` for a real coherent amplitude: `exp(-alpha^2/2) alpha^n / sqrt(n!)`.
pub fn coherent_overlap(n: usize, alpha: f64) -> f64 {
    let mut acc = (-0.5 * alpha * alpha).exp();
    for k in 1..=n {
        acc *= alpha / (k as f64).sqrt();
    }
    acc
}
