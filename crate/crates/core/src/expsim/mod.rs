//! End-to-end model of the heralded source: state preparation, scenario
//! evaluation, tuning of the witness parameters, scans, subset analysis and
//! Monte Carlo trials.

mod fast;
mod sample;
mod scan;
mod subsets;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bisep::{worst_case_bound, BoundOptions, BoundResult};
use crate::fock::{Basis, PhaseAveraging, TruncatedState, DEFAULT_PATTERN_GUARD};
use crate::witness::{Conventions, DisplacementSpec, Estimator, MeasuredStatistics, ObservableTriple, WitnessParams};
use crate::{Error, Result};

pub use fast::reduced_statistics;
pub use sample::{sample_trials, trial_moments, TrialCounts, TrialMoments, BLOCK_SIZE};
pub use scan::{scan_eta, scan_n, tune_params, EtaRow, GridCell, ScanPoint, TuneGrid, TuneResult};
pub use subsets::{subset_analysis, SubsetParams, SubsetRow};

/// Heralded single photon with a small two-photon admixture, sent through
/// loss onto a balanced `n`-port splitter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceModel {
    pub n: usize,
    /// Two-photon weight relative to the single photon.
    pub p: f64,
    /// Overall transmission before the splitter.
    pub eta: f64,
    /// Extra transmission per output mode.
    pub per_mode_eta: Option<Vec<f64>>,
    /// Dark-count probability of each party's detector per heralding event.
    pub p_dc: f64,
    /// Fraction of heralds caused by dark counts of the heralding detector.
    pub herald_dark_fraction: f64,
    pub n_max: usize,
}

impl SourceModel {
    pub fn new(n: usize, p: f64, eta: f64) -> Self {
        SourceModel {
            n,
            p,
            eta,
            per_mode_eta: None,
            p_dc: 0.0,
            herald_dark_fraction: 0.0,
            n_max: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::invalid("N", "at least one mode is required"));
        }
        if !(self.p >= 0.0) || !self.p.is_finite() {
            return Err(Error::invalid("p", "must be a non-negative finite number"));
        }
        if self.p > 0.0 && self.n_max < 2 {
            return Err(Error::invalid("n_max", "a two-photon admixture needs n_max >= 2"));
        }
        if self.n_max < 1 {
            return Err(Error::invalid("n_max", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::invalid("eta", format!("{} is outside [0, 1]", self.eta)));
        }
        if let Some(v) = &self.per_mode_eta {
            if v.len() != self.n {
                return Err(Error::invalid("per_mode_eta", format!("expected {} entries", self.n)));
            }
            if let Some(i) = v.iter().position(|e| !(0.0..=1.0).contains(e)) {
                return Err(Error::invalid(format!("per_mode_eta[{i}]"), "outside [0, 1]"));
            }
        }
        if !(0.0..=1.0).contains(&self.p_dc) {
            return Err(Error::invalid("p_dc", format!("{} is outside [0, 1]", self.p_dc)));
        }
        if !(0.0..1.0).contains(&self.herald_dark_fraction) {
            return Err(Error::invalid("herald_dark_fraction", "must lie in [0, 1)"));
        }
        Ok(())
    }

    /// All output modes see the same transmission.
    pub fn is_symmetric(&self) -> bool {
        match &self.per_mode_eta {
            None => true,
            Some(v) => v.iter().all(|&e| e == v[0]),
        }
    }

    /// Photon-number distribution of the single mode entering the splitter,
    /// including every symmetric loss.
    pub fn input_distribution(&self) -> Result<Vec<f64>> {
        self.validate()?;
        if !self.is_symmetric() {
            return Err(Error::invalid("per_mode_eta", "the input distribution needs equal transmissions"));
        }
        let eta = self.eta * self.per_mode_eta.as_ref().map_or(1.0, |v| v[0]);
        let s = self.input_state()?.apply_loss(&[eta])?;
        Ok(s.photon_number_distribution())
    }

    fn input_state(&self) -> Result<TruncatedState> {
        let basis = Arc::new(Basis::new(1, self.n_max)?);
        let mut w = vec![0.0; self.n_max + 1];
        let d = self.herald_dark_fraction;
        w[0] = d;
        w[1] = (1.0 - d) / (1.0 + self.p);
        if self.n_max >= 2 {
            w[2] = (1.0 - d) * self.p / (1.0 + self.p);
        }
        TruncatedState::from_diagonal(basis, &w)
    }
}

/// Density operator of the `n` output modes.
pub fn make_state(model: &SourceModel) -> Result<TruncatedState> {
    model.validate()?;
    let mut s = model.input_state()?.apply_loss(&[model.eta])?.split_balanced(model.n)?;
    if let Some(v) = &model.per_mode_eta {
        s = s.apply_loss(v)?;
    }
    Ok(s)
}

/// `2 N^2 (N-1) p_dc`.
pub fn dark_penalty(n: usize, p_dc: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p_dc) {
        return Err(Error::invalid("p_dc", format!("{p_dc} is outside [0, 1]")));
    }
    let n = n as f64;
    Ok(2.0 * n * n * (n - 1.0) * p_dc)
}

/// Bound options after applying the conventions: with one common amplitude
/// the symmetric reduction is used when enabled, and always once the mode
/// count exceeds the enumeration guard.
pub fn effective_bound_options(spec: &DisplacementSpec, conventions: &Conventions, base: &BoundOptions) -> BoundOptions {
    let mut o = *base;
    o.symmetric = spec.is_uniform() && (conventions.symmetric_bipartitions || spec.modes() > base.enumeration_guard);
    o
}

/// Which computation backs the observables.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalPath {
    /// Full state up to `fast_threshold` modes, reduced two-mode path beyond.
    #[default]
    Auto,
    Full,
    Reduced,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub avg: PhaseAveraging,
    pub bound: BoundOptions,
    pub fast_threshold: usize,
    pub path: EvalPath,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            avg: PhaseAveraging::exact(2),
            bound: BoundOptions::default(),
            fast_threshold: DEFAULT_PATTERN_GUARD,
            path: EvalPath::Auto,
        }
    }
}

/// Outcome of one scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub params: WitnessParams,
    pub triple: ObservableTriple,
    pub estimator: Estimator,
    pub witness_value: f64,
    pub bound: BoundResult,
    pub dark_penalty: f64,
    /// `witness_value - bound - dark_penalty`.
    pub violation: f64,
    /// `"full"` or `"reduced"`.
    pub path: String,
}

/// Observables of a model, independent of `lambda` and `mu`, ready for
/// repeated evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct Prepared {
    pub stats: MeasuredStatistics,
    pub spec: DisplacementSpec,
    pub conventions: Conventions,
    pub dark_penalty: f64,
    pub path: &'static str,
}

impl Prepared {
    pub fn new(model: &SourceModel, spec: &DisplacementSpec, conventions: &Conventions, opts: &EvalOptions) -> Result<Self> {
        model.validate()?;
        if spec.modes() != model.n {
            return Err(Error::invalid("alpha", format!("expected {} amplitudes, got {}", model.n, spec.modes())));
        }
        let reduced = match opts.path {
            EvalPath::Full => false,
            EvalPath::Reduced => true,
            EvalPath::Auto => model.n > opts.fast_threshold,
        };
        let stats = if reduced {
            if !model.is_symmetric() {
                return Err(Error::invalid(
                    "per_mode_eta",
                    format!(
                        "unequal transmissions need the full computation, which is limited to N <= {}",
                        opts.fast_threshold
                    ),
                ));
            }
            reduced_statistics(model, spec, &opts.avg, conventions)?
        } else {
            let state = make_state(model)?;
            MeasuredStatistics::measure(&state, spec, &opts.avg, model.p_dc, conventions)?
        };
        Ok(Prepared {
            stats,
            spec: spec.clone(),
            conventions: *conventions,
            dark_penalty: dark_penalty(model.n, model.p_dc)?,
            path: if reduced { "reduced" } else { "full" },
        })
    }

    pub fn n(&self) -> usize {
        self.stats.n
    }

    pub fn bound_options(&self, base: &BoundOptions) -> BoundOptions {
        effective_bound_options(&self.spec, &self.conventions, base)
    }

    pub fn report(&self, params: &WitnessParams, bound_opts: &BoundOptions) -> Result<ScenarioReport> {
        params.validate()?;
        if params.n != self.n() {
            return Err(Error::invalid("N", "witness parameters and model disagree"));
        }
        let (value, triple) = self.stats.assemble(params, &self.conventions);
        let bound = worst_case_bound(params, &self.spec, &self.bound_options(bound_opts))?;
        Ok(ScenarioReport {
            params: *params,
            triple,
            estimator: self.conventions.estimator,
            witness_value: value,
            violation: value - bound.value - self.dark_penalty,
            dark_penalty: self.dark_penalty,
            bound,
            path: self.path.to_string(),
        })
    }
}

/// Witness value, worst-case bound and dark-count penalty of one scenario.
pub fn evaluate(
    model: &SourceModel,
    params: &WitnessParams,
    spec: &DisplacementSpec,
    conventions: &Conventions,
    opts: &EvalOptions,
) -> Result<ScenarioReport> {
    if params.n != model.n {
        return Err(Error::invalid("N", "witness parameters and model disagree"));
    }
    Prepared::new(model, spec, conventions, opts)?.report(params, &opts.bound)
}
