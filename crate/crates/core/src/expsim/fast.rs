use std::sync::Arc;

use crate::fock::{coincidence_after_split, pair_noclick, Basis, PhaseAveraging, TruncatedState};
use crate::witness::{f_coeffs, fgh, Conventions, DisplacementSpec, MeasuredStatistics};
use crate::{Error, Result};

use super::SourceModel;

/// Observables of a symmetric model from a two-mode reduced state and
/// occupation combinatorics, without building the `N`-mode state.
///
/// Needs equal transmissions, a common displacement interval on every mode
/// and `n_max <= 2`. Every term is exact, including dark-count clicks on top
/// of two-photon events.
pub fn reduced_statistics(
    model: &SourceModel,
    spec: &DisplacementSpec,
    avg: &PhaseAveraging,
    conventions: &Conventions,
) -> Result<MeasuredStatistics> {
    model.validate()?;
    let n = model.n;
    if n < 2 {
        return Err(Error::invalid("N", "the reduced path needs at least two modes"));
    }
    if model.n_max > 2 {
        return Err(Error::invalid("n_max", "the reduced path handles at most two photons"));
    }
    let same = |v: &[f64]| v.iter().all(|&x| x == v[0]);
    if spec.modes() != n || !same(spec.nominal()) || !same(spec.min()) || !same(spec.max()) {
        return Err(Error::invalid("alpha", "the reduced path needs one common displacement interval"));
    }
    let mut dist = model.input_distribution()?;
    dist.resize(3, 0.0);
    let (p0_in, p1_in, p2_in) = (dist[0], dist[1], dist[2]);
    let nf = n as f64;
    let q = 1.0 - model.p_dc;

    let single = Arc::new(Basis::new(1, model.n_max)?);
    let input = TruncatedState::from_diagonal(single, &dist[..=model.n_max])?;
    let t = 1.0 / nf.sqrt();
    let rest = (1.0 - 2.0 / nf).max(0.0).sqrt();
    let two = input.split(&[t, t, rest])?.partial_trace(&[0, 1])?;

    let alpha = spec.nominal()[0];
    let table = pair_noclick(&two, &[alpha, alpha], avg, model.p_dc)?;
    let corr = 4.0 * table.pair[0][1] - 2.0 * table.single[0] - 2.0 * table.single[1] + 1.0;
    let pairs = nf * (nf - 1.0);

    let p0 = p0_in * q.powi(n as i32);
    let one_click = q.powi(n as i32 - 1) * (p0_in * nf * model.p_dc + p1_in + p2_in / nf);
    let p_multi = (1.0 - p0 - one_click).max(0.0);

    let outside = (nf - 2.0) / nf;
    let pair_silent = q * q * (p0_in + p1_in * outside + p2_in * outside * outside);
    let f_box = if n >= 2 { f_coeffs(&spec.restrict(&[0, 1])?)[(0, 1)] } else { 0.0 };

    let p_cc = coincidence_after_split(&two, 0, model.p_dc)?;
    let f = fgh(alpha).0;

    Ok(MeasuredStatistics {
        n,
        o: pairs * corr,
        p0,
        p_multi,
        f_pair_sum: pairs * f_box * pair_silent,
        p_cc,
        sigma: conventions.sigma.local_factor() * nf * p_cc,
        p_ge2: p2_in,
        m_offset: pairs * f * f * (p0_in + p1_in * outside),
    })
}
