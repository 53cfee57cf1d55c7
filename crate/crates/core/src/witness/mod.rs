//! Witness observables and the measurable lower bound on the witness.
//!
//! Each party measures `sigma = 2 E_0 - 1` with `E_0` the no-click element
//! after a displacement. The global observable sums the two-body
//! correlators over ordered pairs. The witness adds a vacuum reward, a
//! penalty on multi-photon components and a penalty on multi-click events.

pub mod dense;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::fock::{coincidence_after_split, diagonal_stats, pair_noclick, PhaseAveraging, TruncatedState};
use crate::{Error, Result};

/// Tunable witness parameters for `n` parties.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessParams {
    pub n: usize,
    pub lambda: f64,
    pub mu: f64,
}

impl WitnessParams {
    pub fn new(n: usize, lambda: f64, mu: f64) -> Result<Self> {
        let p = WitnessParams { n, lambda, mu };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::invalid("N", "at least two parties are required"));
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::invalid("lambda", "must be a positive finite number"));
        }
        if !(self.mu > 0.0) || !self.mu.is_finite() {
            return Err(Error::invalid("mu", "must be a positive finite number"));
        }
        Ok(())
    }

    /// Ordered pair count `N(N-1)`.
    pub fn pairs(&self) -> f64 {
        (self.n * (self.n - 1)) as f64
    }
}

/// Nominal displacement amplitudes with a per-mode fluctuation interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisplacementSpec {
    nominal: Vec<f64>,
    min: Vec<f64>,
    max: Vec<f64>,
}

impl DisplacementSpec {
    pub fn with_box(nominal: Vec<f64>, min: Vec<f64>, max: Vec<f64>) -> Result<Self> {
        if nominal.is_empty() {
            return Err(Error::invalid("alpha", "at least one mode is required"));
        }
        if min.len() != nominal.len() || max.len() != nominal.len() {
            return Err(Error::invalid("alpha box", "bounds must have one entry per mode"));
        }
        for i in 0..nominal.len() {
            let (lo, a, hi) = (min[i], nominal[i], max[i]);
            if !(lo.is_finite() && a.is_finite() && hi.is_finite()) {
                return Err(Error::invalid("alpha", format!("mode {i} has a non-finite value")));
            }
            if lo > hi {
                return Err(Error::invalid(
                    "alpha box",
                    format!("mode {i}: min {lo} exceeds max {hi}"),
                ));
            }
            if !(0.0 <= lo && lo <= a && a <= hi) {
                return Err(Error::invalid(
                    "alpha box",
                    format!("mode {i}: need 0 <= min <= nominal <= max, got [{lo}, {a}, {hi}]"),
                ));
            }
        }
        Ok(DisplacementSpec { nominal, min, max })
    }

    /// No fluctuation.
    pub fn degenerate(nominal: Vec<f64>) -> Result<Self> {
        Self::with_box(nominal.clone(), nominal.clone(), nominal)
    }

    pub fn uniform(n: usize, alpha: f64) -> Result<Self> {
        Self::degenerate(vec![alpha; n])
    }

    pub fn modes(&self) -> usize {
        self.nominal.len()
    }

    pub fn nominal(&self) -> &[f64] {
        &self.nominal
    }

    pub fn min(&self) -> &[f64] {
        &self.min
    }

    pub fn max(&self) -> &[f64] {
        &self.max
    }

    pub fn is_degenerate(&self) -> bool {
        self.min == self.max
    }

    /// All modes share one degenerate amplitude.
    pub fn is_uniform(&self) -> bool {
        self.is_degenerate() && self.nominal.iter().all(|&a| a == self.nominal[0])
    }

    /// Modes whose interval has positive width.
    pub fn fluctuating_modes(&self) -> Vec<usize> {
        (0..self.modes()).filter(|&i| self.min[i] < self.max[i]).collect()
    }

    /// The specification on a subset of modes, in the given order.
    pub fn restrict(&self, subset: &[usize]) -> Result<Self> {
        if subset.iter().any(|&m| m >= self.modes()) {
            return Err(Error::invalid("subset", "mode index out of range"));
        }
        let pick = |v: &[f64]| subset.iter().map(|&m| v[m]).collect::<Vec<_>>();
        Self::with_box(pick(&self.nominal), pick(&self.min), pick(&self.max))
    }
}

/// How the local multi-photon probability is estimated from the coincidence
/// rate `p_cc` of a split mode.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaConvention {
    /// `2 p_cc`, an upper bound for any state.
    #[default]
    Conservative,
    /// `p_cc` itself, with the matching smaller score range.
    Direct,
}

impl SigmaConvention {
    pub fn local_factor(&self) -> f64 {
        match self {
            SigmaConvention::Conservative => 2.0,
            SigmaConvention::Direct => 1.0,
        }
    }
}

/// Which scalar is reported as the witness value.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    /// The lower bound built from the three measured settings.
    #[default]
    Measured,
    /// The witness expectation itself, using the state's true multi-photon
    /// weight and the exact vacuum/one-photon operator at nominal amplitudes.
    Exact,
}

/// Reporting and evaluation conventions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Conventions {
    pub sigma: SigmaConvention,
    pub estimator: Estimator,
    /// Use one bipartition per `|G1|` when all amplitudes coincide.
    pub symmetric_bipartitions: bool,
    /// Estimate the local multi-photon term from mode 0 only and scale by `N`.
    pub sigma_single_mode: bool,
}

impl Default for Conventions {
    fn default() -> Self {
        Conventions {
            sigma: SigmaConvention::Conservative,
            estimator: Estimator::Measured,
            symmetric_bipartitions: true,
            sigma_single_mode: false,
        }
    }
}

/// Expected values of the three measured observables plus derived weights.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ObservableTriple {
    pub o: f64,
    pub z: f64,
    pub s: f64,
    pub p0: f64,
    pub p_star: f64,
    pub p_cc: f64,
    pub p_multi: f64,
}

/// `(f, g, h)` for a real displacement amplitude.
pub fn fgh(alpha: f64) -> (f64, f64, f64) {
    let e = (-alpha * alpha).exp();
    (2.0 * e - 1.0, 2.0 * alpha * e, 2.0 * alpha * alpha * e - 1.0)
}

/// The global observable on the sector with at most one photon, in the basis
/// `{|vac>, |1_1>, ..., |1_N>}`.
pub fn o_restricted(alphas: &[f64]) -> DMatrix<f64> {
    let n = alphas.len();
    let c: Vec<(f64, f64, f64)> = alphas.iter().map(|&a| fgh(a)).collect();
    let f_sum: f64 = c.iter().map(|x| x.0).sum();
    let f_sq: f64 = c.iter().map(|x| x.0 * x.0).sum();
    let ff_all = f_sum * f_sum - f_sq;
    let mut m = DMatrix::zeros(n + 1, n + 1);
    m[(0, 0)] = ff_all;
    for k in 0..n {
        let (fk, gk, hk) = c[k];
        // pairs i != j avoiding k
        let rest = f_sum - fk;
        let rest_sq = f_sq - fk * fk;
        m[(k + 1, k + 1)] = rest * rest - rest_sq + 2.0 * hk * rest;
        for l in 0..n {
            if l != k {
                m[(k + 1, l + 1)] = 2.0 * gk * c[l].1;
            }
        }
    }
    m
}

/// `<sigma_i sigma_j>` for all ordered pairs; the diagonal is left at zero.
pub fn correlators(
    state: &TruncatedState,
    alphas: &[f64],
    avg: &PhaseAveraging,
    p_dc: f64,
) -> Result<DMatrix<f64>> {
    let t = pair_noclick(state, alphas, avg, p_dc)?;
    let n = state.modes();
    Ok(DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            4.0 * t.pair[i][j] - 2.0 * t.single[i] - 2.0 * t.single[j] + 1.0
        }
    }))
}

/// Expectation of the global observable from click statistics.
pub fn expected_o(state: &TruncatedState, alphas: &[f64], avg: &PhaseAveraging, p_dc: f64) -> Result<f64> {
    Ok(correlators(state, alphas, avg, p_dc)?.sum())
}

/// Worst-case coefficients `F_ij = max(0, max_box f(a_i) f(a_j))`, zero on
/// the diagonal.
pub fn f_coeffs(spec: &DisplacementSpec) -> DMatrix<f64> {
    let n = spec.modes();
    let ends: Vec<[f64; 2]> = (0..n)
        .map(|i| [fgh(spec.min()[i]).0, fgh(spec.max()[i]).0])
        .collect();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            return 0.0;
        }
        let mut best = 0.0f64;
        for a in ends[i] {
            for b in ends[j] {
                best = best.max(a * b);
            }
        }
        best
    })
}

fn off_diagonal_dot(a: &DMatrix<f64>, b: &[Vec<f64>]) -> f64 {
    let n = a.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                acc += a[(i, j)] * b[i][j];
            }
        }
    }
    acc
}

/// Expectation of the undisplaced setting's score.
pub fn expected_z(state: &TruncatedState, params: &WitnessParams, f: &DMatrix<f64>, p_dc: f64) -> Result<f64> {
    check_modes(state, params.n)?;
    let d = diagonal_stats(state, p_dc)?;
    Ok(params.lambda * d.p0() - off_diagonal_dot(f, &d.pair_vacuum) - (params.pairs() + params.mu) * d.p_multi())
}

/// Coincidence probability after splitting `mode`, and the conservative
/// local multi-photon bound `2 p_cc`.
pub fn local_multiphoton(state: &TruncatedState, mode: usize, p_dc: f64) -> Result<(f64, f64)> {
    let p_cc = coincidence_after_split(state, mode, p_dc)?;
    Ok((p_cc, 2.0 * p_cc))
}

/// Sum over modes of the local multi-photon estimate under `sigma`.
fn sigma_sum(state: &TruncatedState, single_mode: bool, sigma: SigmaConvention, p_dc: f64) -> Result<(f64, f64)> {
    let n = state.modes();
    let p_cc0 = coincidence_after_split(state, 0, p_dc)?;
    let total = if single_mode {
        n as f64 * p_cc0
    } else {
        let mut acc = p_cc0;
        for m in 1..n {
            acc += coincidence_after_split(state, m, p_dc)?;
        }
        acc
    };
    Ok((p_cc0, sigma.local_factor() * total))
}

/// Upper bound on the probability of two or more photons: multi-click rate
/// plus the local multi-photon estimates.
pub fn p_star(state: &TruncatedState, symmetric: bool, sigma: SigmaConvention, p_dc: f64) -> Result<f64> {
    let d = diagonal_stats(state, p_dc)?;
    let (_, s) = sigma_sum(state, symmetric, sigma, p_dc)?;
    Ok(d.p_multi() + s)
}

fn check_modes(state: &TruncatedState, n: usize) -> Result<()> {
    if state.modes() != n {
        return Err(Error::invalid(
            "state",
            format!("has {} modes but the witness is for {n} parties", state.modes()),
        ));
    }
    Ok(())
}

/// Everything the witness needs from a state that does not depend on
/// `lambda` or `mu`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasuredStatistics {
    pub n: usize,
    pub o: f64,
    pub p0: f64,
    pub p_multi: f64,
    /// `sum_{i != j} F_ij P(i and j silent)`.
    pub f_pair_sum: f64,
    pub p_cc: f64,
    /// Sum over modes of the local multi-photon estimate.
    pub sigma: f64,
    /// True probability of two or more photons.
    pub p_ge2: f64,
    /// Expectation of the `f f` part of the vacuum/one-photon operator at
    /// nominal amplitudes.
    pub m_offset: f64,
}

impl MeasuredStatistics {
    pub fn measure(
        state: &TruncatedState,
        spec: &DisplacementSpec,
        avg: &PhaseAveraging,
        p_dc: f64,
        conventions: &Conventions,
    ) -> Result<Self> {
        let n = state.modes();
        if spec.modes() != n {
            return Err(Error::invalid("alpha", format!("expected {n} amplitudes, got {}", spec.modes())));
        }
        let o = expected_o(state, spec.nominal(), avg, p_dc)?;
        let d = diagonal_stats(state, p_dc)?;
        let f = f_coeffs(spec);
        let (p_cc, sigma) = sigma_sum(state, conventions.sigma_single_mode, conventions.sigma, p_dc)?;
        let dist = state.photon_number_distribution();
        let p_ge2: f64 = dist.iter().skip(2).sum();
        Ok(MeasuredStatistics {
            n,
            o,
            p0: d.p0(),
            p_multi: d.p_multi(),
            f_pair_sum: off_diagonal_dot(&f, &d.pair_vacuum),
            p_cc,
            sigma,
            p_ge2,
            m_offset: m_offset(state, spec.nominal()),
        })
    }

    /// Witness value under `conventions.estimator` and the measured triple.
    pub fn assemble(&self, params: &WitnessParams, conventions: &Conventions) -> (f64, ObservableTriple) {
        let pairs = params.pairs();
        let z = params.lambda * self.p0 - self.f_pair_sum - (pairs + params.mu) * self.p_multi;
        let s = -pairs * self.sigma;
        let triple = ObservableTriple {
            o: self.o,
            z,
            s,
            p0: self.p0,
            p_star: (self.p_multi + self.sigma).min(1.0),
            p_cc: self.p_cc,
            p_multi: self.p_multi,
        };
        let value = match conventions.estimator {
            Estimator::Measured => self.o + z + s,
            Estimator::Exact => {
                self.o + params.lambda * self.p0 - self.m_offset - pairs * self.p_ge2 - params.mu * self.p_multi
            }
        };
        (value, triple)
    }
}

/// `sum_{i != j} f_i f_j (P(vac) + sum_{k != i,j} P(1_k))`.
fn m_offset(state: &TruncatedState, alphas: &[f64]) -> f64 {
    let basis = state.basis();
    let n = state.modes();
    let f: Vec<f64> = alphas.iter().map(|&a| fgh(a).0).collect();
    let f_sum: f64 = f.iter().sum();
    let f_sq: f64 = f.iter().map(|x| x * x).sum();
    let mut acc = (f_sum * f_sum - f_sq) * state.population(basis.vacuum());
    if basis.n_max() >= 1 {
        for k in 0..n {
            let rest = f_sum - f[k];
            let rest_sq = f_sq - f[k] * f[k];
            acc += (rest * rest - rest_sq) * state.population(basis.single_photon(k).unwrap());
        }
    }
    acc
}

/// Witness value on `state` and the triple of measured expectations.
pub fn witness_value(
    state: &TruncatedState,
    params: &WitnessParams,
    spec: &DisplacementSpec,
    avg: &PhaseAveraging,
    p_dc: f64,
    conventions: &Conventions,
) -> Result<(f64, ObservableTriple)> {
    params.validate()?;
    check_modes(state, params.n)?;
    let stats = MeasuredStatistics::measure(state, spec, avg, p_dc, conventions)?;
    Ok(stats.assemble(params, conventions))
}
