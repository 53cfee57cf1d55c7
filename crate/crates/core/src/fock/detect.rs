use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::basis::Basis;
use super::state::TruncatedState;
use crate::error::checked_prob;
use crate::{Error, Result};

/// Largest mode count for which full click-pattern tables are built.
pub const DEFAULT_PATTERN_GUARD: usize = 20;

/// Uniform average over a common phase of all displacement amplitudes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseAveraging {
    pub enabled: bool,
    pub quadrature_points: usize,
}

impl PhaseAveraging {
    /// Enabled with the smallest exact rule for cutoff `n_max`.
    pub fn exact(n_max: usize) -> Self {
        PhaseAveraging {
            enabled: true,
            quadrature_points: 2 * n_max + 1,
        }
    }

    pub fn disabled() -> Self {
        PhaseAveraging {
            enabled: false,
            quadrature_points: 1,
        }
    }

    pub fn validate(&self, n_max: usize) -> Result<()> {
        if self.enabled && self.quadrature_points < 2 * n_max + 1 {
            return Err(Error::invalid(
                "quadrature_points",
                format!(
                    "{} points cannot average exactly at n_max = {n_max}; need at least {}",
                    self.quadrature_points,
                    2 * n_max + 1
                ),
            ));
        }
        Ok(())
    }

    fn phases(&self) -> Vec<f64> {
        if !self.enabled {
            return vec![0.0];
        }
        let k = self.quadrature_points;
        (0..k).map(|j| 2.0 * PI * j as f64 / k as f64).collect()
    }
}

/// `<k|-beta>` without the Gaussian prefactor: `(-beta)^k / sqrt(k!)`.
fn scaled_overlap(k: u8, beta: Complex64) -> Complex64 {
    let mut acc = Complex64::new(1.0, 0.0);
    for j in 1..=k {
        acc *= -beta / (j as f64).sqrt();
    }
    acc
}

fn rotated(amps: &[Complex64], phi: f64) -> Vec<Complex64> {
    let rot = Complex64::from_polar(1.0, phi);
    amps.iter().map(|a| a * rot).collect()
}

fn check_amplitudes(state: &TruncatedState, amps: &[Complex64], avg: &PhaseAveraging) -> Result<()> {
    if amps.len() != state.modes() {
        return Err(Error::invalid("alphas", "one displacement amplitude per mode is required"));
    }
    if amps.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
        return Err(Error::invalid("alphas", "amplitudes must be finite"));
    }
    avg.validate(state.n_max())
}

fn real_amps(alphas: &[f64]) -> Vec<Complex64> {
    alphas.iter().map(|&a| Complex64::new(a, 0.0)).collect()
}

fn occupation(basis: &Basis, idx: usize, mode: usize) -> u8 {
    basis
        .occupied(idx)
        .iter()
        .find(|(m, _)| *m == mode)
        .map_or(0, |&(_, k)| k)
}

/// Probability that every detector in `subset` reports no click when mode `i`
/// is displaced by `alphas[i]` before detection. Modes outside `subset` are
/// marginalized.
pub fn noclick_set_prob(
    state: &TruncatedState,
    subset: &[usize],
    alphas: &[f64],
    avg: &PhaseAveraging,
) -> Result<f64> {
    noclick_set_prob_complex(state, subset, &real_amps(alphas), avg)
}

/// Same as [`noclick_set_prob`] for complex displacement amplitudes.
pub fn noclick_set_prob_complex(
    state: &TruncatedState,
    subset: &[usize],
    alphas: &[Complex64],
    avg: &PhaseAveraging,
) -> Result<f64> {
    check_amplitudes(state, alphas, avg)?;
    let n = state.modes();
    let mut in_set = vec![false; n];
    for &m in subset {
        if m >= n {
            return Err(Error::invalid("subset", format!("mode {m} is out of range")));
        }
        in_set[m] = true;
    }
    let set: Vec<usize> = (0..n).filter(|&m| in_set[m]).collect();
    if set.is_empty() {
        return Ok(1.0);
    }
    let basis = state.basis();
    let rho = state.matrix();
    let dim = state.dim();
    let phases = avg.phases();

    let mut total = 0.0;
    for &phi in &phases {
        let amps = rotated(alphas, phi);
        let gauss: f64 = set.iter().map(|&m| (-amps[m].norm_sqr()).exp()).product();
        let mut acc = Complex64::new(0.0, 0.0);
        for r in 0..dim {
            for c in 0..dim {
                let v = rho[(r, c)];
                if v.re == 0.0 && v.im == 0.0 {
                    continue;
                }
                let (tr, tc) = (basis.tuple(r), basis.tuple(c));
                let outside_equal = (0..n).all(|m| in_set[m] || tr.get(m) == tc.get(m));
                if !outside_equal {
                    continue;
                }
                let mut w = Complex64::new(1.0, 0.0);
                for &m in &set {
                    w *= scaled_overlap(tc.as_slice()[m], amps[m])
                        * scaled_overlap(tr.as_slice()[m], amps[m]).conj();
                }
                acc += v * w;
            }
        }
        total += gauss * acc.re;
    }
    checked_prob(total / phases.len() as f64, "no-click probability")
}

/// Walks every nonzero matrix element of `rho` and emits its contribution to
/// the Möbius coefficients `a[X]` with
/// `noclick(S) = exp(-sum_{i in S} |alpha_i|^2) * sum_{X subset of S} a[X]`.
///
/// The callback receives the union of occupied modes of the row and column
/// tuples, a bit mask of `X` over that union, and the coefficient.
fn mobius_terms(
    state: &TruncatedState,
    amps: &[Complex64],
    mut emit: impl FnMut(&[usize], u32, Complex64),
) {
    let basis = state.basis();
    let rho = state.matrix();
    let dim = state.dim();
    let mut union: Vec<usize> = Vec::with_capacity(2 * basis.n_max());
    let mut wm1: Vec<Complex64> = Vec::with_capacity(2 * basis.n_max());
    for r in 0..dim {
        let occ_r = basis.occupied(r);
        for c in 0..dim {
            let v = rho[(r, c)];
            if v.re == 0.0 && v.im == 0.0 {
                continue;
            }
            let occ_c = basis.occupied(c);
            union.clear();
            union.extend(occ_r.iter().map(|&(m, _)| m));
            for &(m, _) in occ_c {
                if !union.contains(&m) {
                    union.push(m);
                }
            }
            union.sort_unstable();

            let mut diff_mask = 0u32;
            wm1.clear();
            for (pos, &m) in union.iter().enumerate() {
                let kr = occupation(basis, r, m);
                let kc = occupation(basis, c, m);
                if kr != kc {
                    diff_mask |= 1 << pos;
                }
                let w = scaled_overlap(kc, amps[m]) * scaled_overlap(kr, amps[m]).conj();
                wm1.push(w - 1.0);
            }

            let full = (1u32 << union.len()) - 1;
            let mut t = 0u32;
            loop {
                let mut coef = v;
                let mut bits = t;
                while bits != 0 {
                    let pos = bits.trailing_zeros() as usize;
                    coef *= wm1[pos];
                    bits &= bits - 1;
                }
                emit(&union, diff_mask | t, coef);
                if t == full {
                    break;
                }
                t = (t.wrapping_sub(full)) & full;
            }
        }
    }
}

/// Single-detector and pairwise no-click probabilities with displacement.
///
/// `single[i]` is the probability that detector `i` is silent and
/// `pair[i][j]` (for `i != j`) that `i` and `j` are both silent. Dark counts
/// flip each silent outcome with probability `p_dc`.
#[derive(Clone, Debug, PartialEq)]
pub struct PairNoclick {
    pub single: Vec<f64>,
    pub pair: Vec<Vec<f64>>,
}

pub fn pair_noclick(
    state: &TruncatedState,
    alphas: &[f64],
    avg: &PhaseAveraging,
    p_dc: f64,
) -> Result<PairNoclick> {
    pair_noclick_complex(state, &real_amps(alphas), avg, p_dc)
}

pub fn pair_noclick_complex(
    state: &TruncatedState,
    alphas: &[Complex64],
    avg: &PhaseAveraging,
    p_dc: f64,
) -> Result<PairNoclick> {
    check_amplitudes(state, alphas, avg)?;
    let p_dc = check_dark(p_dc)?;
    let n = state.modes();
    let phases = avg.phases();
    let mut single = vec![0.0; n];
    let mut pair = vec![vec![0.0; n]; n];

    for &phi in &phases {
        let amps = rotated(alphas, phi);
        let mut a0 = Complex64::new(0.0, 0.0);
        let mut a1 = vec![Complex64::new(0.0, 0.0); n];
        let mut a2 = vec![vec![Complex64::new(0.0, 0.0); n]; n];
        mobius_terms(state, &amps, |union, x, coef| match x.count_ones() {
            0 => a0 += coef,
            1 => a1[union[x.trailing_zeros() as usize]] += coef,
            2 => {
                let i = union[x.trailing_zeros() as usize];
                let j = union[31 - x.leading_zeros() as usize];
                a2[i][j] += coef;
            }
            _ => {}
        });
        let g: Vec<f64> = amps.iter().map(|a| (-a.norm_sqr()).exp()).collect();
        for i in 0..n {
            single[i] += g[i] * (a0 + a1[i]).re;
            for j in (i + 1)..n {
                let v = g[i] * g[j] * (a0 + a1[i] + a1[j] + a2[i][j]).re;
                pair[i][j] += v;
            }
        }
    }
    let k = phases.len() as f64;
    let keep = 1.0 - p_dc;
    for i in 0..n {
        single[i] = checked_prob(keep * single[i] / k, "single no-click probability")?;
        for j in (i + 1)..n {
            let v = checked_prob(keep * keep * pair[i][j] / k, "pair no-click probability")?;
            pair[i][j] = v;
            pair[j][i] = v;
        }
        pair[i][i] = single[i];
    }
    Ok(PairNoclick { single, pair })
}

fn check_dark(p_dc: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p_dc) {
        return Err(Error::invalid("p_dc", format!("{p_dc} is outside [0, 1]")));
    }
    Ok(p_dc)
}

/// Detector statistics of one measurement setting.
///
/// Subsets and click patterns are encoded as bit masks over modes (bit `i`
/// for mode `i`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClickStats {
    pub modes: usize,
    /// Indexed by the mask of modes required to be silent.
    pub noclick: Vec<f64>,
    /// Indexed by the mask of modes that click; all others are silent.
    pub patterns: Vec<f64>,
    /// Probability that exactly `n` detectors click, `n = 0..=modes`.
    pub per_n_click: Vec<f64>,
    /// `pair_vacuum[i][j]`: no click on `i` and `j`; the diagonal holds the
    /// single-mode no-click probability.
    pub pair_vacuum: Vec<Vec<f64>>,
}

impl ClickStats {
    pub fn noclick_set_prob(&self, subset: &[usize]) -> f64 {
        self.noclick[mask_of(subset)]
    }

    pub fn pattern_prob(&self, clicks: &[usize]) -> f64 {
        self.patterns[mask_of(clicks)]
    }

    /// Probability that no detector clicks.
    pub fn p0(&self) -> f64 {
        self.per_n_click[0]
    }

    /// Probability that at least two detectors click.
    pub fn p_multi(&self) -> f64 {
        self.per_n_click.iter().skip(2).sum()
    }
}

pub(crate) fn mask_of(modes: &[usize]) -> usize {
    modes.iter().fold(0usize, |m, &i| m | (1 << i))
}

/// Full click statistics with optional displacement.
pub fn click_stats(
    state: &TruncatedState,
    alphas: Option<&[f64]>,
    avg: &PhaseAveraging,
    p_dc: f64,
) -> Result<ClickStats> {
    click_stats_with_guard(state, alphas, avg, p_dc, DEFAULT_PATTERN_GUARD)
}

pub fn click_stats_with_guard(
    state: &TruncatedState,
    alphas: Option<&[f64]>,
    avg: &PhaseAveraging,
    p_dc: f64,
    guard: usize,
) -> Result<ClickStats> {
    let n = state.modes();
    if n > guard.min(usize::BITS as usize - 2) {
        return Err(Error::DimensionGuard {
            what: "modes for full click patterns",
            value: n,
            limit: guard,
        });
    }
    let p_dc = check_dark(p_dc)?;
    let zeros = vec![0.0; n];
    let alphas = alphas.unwrap_or(&zeros);
    let amps = real_amps(alphas);
    let avg = if alphas.iter().all(|&a| a == 0.0) {
        PhaseAveraging::disabled()
    } else {
        *avg
    };
    check_amplitudes(state, &amps, &avg)?;

    let size = 1usize << n;
    let phases = avg.phases();
    let mut noclick = vec![0.0; size];
    let mut coeffs = vec![Complex64::new(0.0, 0.0); size];
    for &phi in &phases {
        let amps = rotated(&amps, phi);
        coeffs.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        mobius_terms(state, &amps, |union, x, coef| {
            let mut mask = 0usize;
            let mut bits = x;
            while bits != 0 {
                mask |= 1 << union[bits.trailing_zeros() as usize];
                bits &= bits - 1;
            }
            coeffs[mask] += coef;
        });
        // zeta transform over subsets
        for bit in 0..n {
            let b = 1 << bit;
            for mask in 0..size {
                if mask & b != 0 {
                    let lower = coeffs[mask ^ b];
                    coeffs[mask] += lower;
                }
            }
        }
        let g: Vec<f64> = amps.iter().map(|a| (-a.norm_sqr()).exp()).collect();
        let mut gauss = vec![1.0; size];
        for mask in 1..size {
            let low = mask.trailing_zeros() as usize;
            gauss[mask] = gauss[mask & (mask - 1)] * g[low];
        }
        for mask in 0..size {
            noclick[mask] += gauss[mask] * coeffs[mask].re;
        }
    }
    let k = phases.len() as f64;
    let keep = 1.0 - p_dc;
    let mut keep_pow = vec![1.0; n + 1];
    for i in 1..=n {
        keep_pow[i] = keep_pow[i - 1] * keep;
    }
    for (mask, v) in noclick.iter_mut().enumerate() {
        *v = checked_prob(keep_pow[mask.count_ones() as usize] * *v / k, "no-click probability")?;
    }
    noclick[0] = 1.0;

    // pattern with click set C: silent on the complement S, inclusion-exclusion
    // over supersets of S
    let mut g = noclick.clone();
    for bit in 0..n {
        let b = 1 << bit;
        for mask in 0..size {
            if mask & b == 0 {
                let upper = g[mask | b];
                g[mask] -= upper;
            }
        }
    }
    let full = size - 1;
    let mut patterns = vec![0.0; size];
    for silent in 0..size {
        patterns[full ^ silent] = checked_prob(g[silent], "click-pattern probability")?;
    }
    let total: f64 = patterns.iter().sum();
    if (total - 1.0).abs() > crate::error::PROB_TOL {
        return Err(Error::Consistency(format!("click patterns sum to {total}")));
    }
    let mut per_n_click = vec![0.0; n + 1];
    for (mask, p) in patterns.iter().enumerate() {
        per_n_click[mask.count_ones() as usize] += p;
    }
    let mut pair_vacuum = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            pair_vacuum[i][j] = noclick[(1 << i) | (1 << j)];
        }
    }
    Ok(ClickStats {
        modes: n,
        noclick,
        patterns,
        per_n_click,
        pair_vacuum,
    })
}

/// Click statistics without displacement that only need the photon-number
/// populations: a detector clicks iff its mode is occupied or it dark-counts.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagonalStats {
    pub per_n_click: Vec<f64>,
    pub pair_vacuum: Vec<Vec<f64>>,
}

impl DiagonalStats {
    pub fn p0(&self) -> f64 {
        self.per_n_click[0]
    }

    pub fn p_multi(&self) -> f64 {
        self.per_n_click.iter().skip(2).sum()
    }
}

pub fn diagonal_stats(state: &TruncatedState, p_dc: f64) -> Result<DiagonalStats> {
    let p_dc = check_dark(p_dc)?;
    let n = state.modes();
    let basis = state.basis();
    let keep = 1.0 - p_dc;
    // binomial weights of dark clicks among the e empty detectors
    let mut dark = vec![vec![0.0; n + 1]; n + 1];
    for e in 0..=n {
        for extra in 0..=e {
            dark[e][extra] = super::state::binom(e, extra)
                * p_dc.powi(extra as i32)
                * keep.powi((e - extra) as i32);
        }
    }
    let mut per_n_click = vec![0.0; n + 1];
    let mut pair_vacuum = vec![vec![0.0; n]; n];
    let mut total_weight = 0.0;
    for idx in 0..state.dim() {
        let w = state.population(idx);
        if w == 0.0 {
            continue;
        }
        let occ = basis.occupied(idx);
        let k = occ.len();
        for extra in 0..=(n - k) {
            per_n_click[k + extra] += w * dark[n - k][extra];
        }
        total_weight += w;
        for &(i, _) in occ {
            for j in 0..n {
                pair_vacuum[i][j] -= w;
                pair_vacuum[j][i] -= w;
            }
        }
        for a in 0..k {
            for b in 0..k {
                let (i, j) = (occ[a].0, occ[b].0);
                if i != j {
                    pair_vacuum[i][j] += w;
                }
            }
        }
        for &(i, _) in occ {
            // diagonal got -2w above, should be -w
            pair_vacuum[i][i] += w;
        }
    }
    for i in 0..n {
        for j in 0..n {
            let scale = if i == j { keep } else { keep * keep };
            pair_vacuum[i][j] =
                checked_prob(scale * (total_weight + pair_vacuum[i][j]), "pair vacuum probability")?;
        }
    }
    for p in per_n_click.iter_mut() {
        *p = checked_prob(*p, "click-number probability")?;
    }
    Ok(DiagonalStats {
        per_n_click,
        pair_vacuum,
    })
}

/// Coincidence probability after splitting `mode` on a balanced two-port
/// splitter, both outputs monitored by detectors with dark-count probability
/// `p_dc`.
pub fn coincidence_after_split(state: &TruncatedState, mode: usize, p_dc: f64) -> Result<f64> {
    if mode >= state.modes() {
        return Err(Error::invalid("mode", format!("{mode} is out of range")));
    }
    let reduced = state.partial_trace(&[mode])?;
    let split = reduced.split_balanced(2)?;
    let stats = diagonal_stats(&split, p_dc)?;
    Ok(stats.per_n_click[2])
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn random_state(modes: usize, n_max: usize, seed: u64) -> TruncatedState {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let basis = Arc::new(Basis::new(modes, n_max).unwrap());
        let d = basis.dim();
        let a = nalgebra::DMatrix::from_fn(d, d, |_, _| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let mut rho = &a * a.adjoint();
        let tr = rho.trace();
        rho /= tr;
        TruncatedState::from_matrix(basis, rho).unwrap()
    }

    #[test]
    fn vacuum_noclick_is_gaussian() {
        let s = TruncatedState::vacuum(3, 2).unwrap();
        let al = [0.3, 0.83, 1.2];
        let p = noclick_set_prob(&s, &[0, 2], &al, &PhaseAveraging::exact(2)).unwrap();
        assert!((p - (-0.09f64 - 1.44).exp()).abs() < 1e-14);
        assert_eq!(noclick_set_prob(&s, &[], &al, &PhaseAveraging::exact(2)).unwrap(), 1.0);
    }

    #[test]
    fn w_state_without_displacement() {
        let w = TruncatedState::w_state(5, 2).unwrap();
        let p = noclick_set_prob(&w, &[1, 3], &[0.0; 5], &PhaseAveraging::disabled()).unwrap();
        assert!((p - 0.6).abs() < 1e-14);
    }

    #[test]
    fn pair_table_matches_direct_sum() {
        let s = random_state(4, 2, 7);
        let al = [0.4, 0.83, 0.0, 1.1];
        let avg = PhaseAveraging::exact(2);
        let t = pair_noclick(&s, &al, &avg, 0.0).unwrap();
        for i in 0..4 {
            let d = noclick_set_prob(&s, &[i], &al, &avg).unwrap();
            assert!((t.single[i] - d).abs() < 1e-13);
            for j in 0..4 {
                if i != j {
                    let d = noclick_set_prob(&s, &[i, j], &al, &avg).unwrap();
                    assert!((t.pair[i][j] - d).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn full_table_matches_direct_sum() {
        for avg in [PhaseAveraging::exact(2), PhaseAveraging::disabled()] {
            let s = random_state(3, 2, 11);
            let al = [0.5, 0.9, 0.2];
            let cs = click_stats(&s, Some(&al), &avg, 0.0).unwrap();
            for mask in 0..8usize {
                let set: Vec<usize> = (0..3).filter(|i| mask >> i & 1 == 1).collect();
                let d = noclick_set_prob(&s, &set, &al, &avg).unwrap();
                assert!((cs.noclick[mask] - d).abs() < 1e-13, "mask {mask}");
            }
            assert!((cs.patterns.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn lossy_w_click_numbers() {
        let eta = 0.37;
        let s = TruncatedState::w_state(4, 2).unwrap().apply_uniform_loss(eta).unwrap();
        let cs = click_stats(&s, None, &PhaseAveraging::exact(2), 0.0).unwrap();
        assert!((cs.per_n_click[1] - eta).abs() < 1e-14);
        assert!((cs.per_n_click[0] - (1.0 - eta)).abs() < 1e-14);
        assert!(cs.p_multi().abs() < 1e-14);
        let d = diagonal_stats(&s, 0.0).unwrap();
        for n in 0..=4 {
            assert!((d.per_n_click[n] - cs.per_n_click[n]).abs() < 1e-14);
        }
    }

    #[test]
    fn certain_dark_counts_fire_everything() {
        let s = TruncatedState::vacuum(3, 2).unwrap();
        let cs = click_stats(&s, None, &PhaseAveraging::exact(2), 1.0).unwrap();
        assert!((cs.pattern_prob(&[0, 1, 2]) - 1.0).abs() < 1e-15);
        let d = diagonal_stats(&s, 1.0).unwrap();
        assert!((d.per_n_click[3] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn diagonal_stats_match_full_tables_with_dark_counts() {
        let s = random_state(4, 2, 3);
        for p_dc in [0.0, 0.01, 0.3] {
            let cs = click_stats(&s, None, &PhaseAveraging::disabled(), p_dc).unwrap();
            let d = diagonal_stats(&s, p_dc).unwrap();
            for n in 0..=4 {
                assert!((d.per_n_click[n] - cs.per_n_click[n]).abs() < 1e-13);
            }
            for i in 0..4 {
                for j in 0..4 {
                    assert!((d.pair_vacuum[i][j] - cs.pair_vacuum[i][j]).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn guard_on_pattern_tables() {
        let s = TruncatedState::vacuum(3, 1).unwrap();
        let err = click_stats_with_guard(&s, None, &PhaseAveraging::disabled(), 0.0, 2);
        assert!(matches!(err, Err(Error::DimensionGuard { .. })));
    }

    #[test]
    fn too_few_quadrature_points_rejected() {
        let s = TruncatedState::vacuum(2, 2).unwrap();
        let avg = PhaseAveraging {
            enabled: true,
            quadrature_points: 4,
        };
        assert!(noclick_set_prob(&s, &[0], &[0.5, 0.5], &avg).is_err());
    }

    #[test]
    fn coincidence_of_two_photons() {
        let s = TruncatedState::fock(2, 2).unwrap();
        assert!((coincidence_after_split(&s, 0, 0.0).unwrap() - 0.5).abs() < 1e-14);
        let w = TruncatedState::w_state(3, 2).unwrap();
        assert!(coincidence_after_split(&w, 1, 0.0).unwrap().abs() < 1e-15);
    }
}
