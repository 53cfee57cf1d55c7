//! Run configuration: parsing, dot-path overrides, defaults and validation.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use pathwit_core::expsim::{EvalOptions, EvalPath, TuneGrid};
use pathwit_core::{BoundOptions, Conventions, DisplacementSpec, PhaseAveraging, SourceModel};

use crate::CliError;

/// One amplitude for every mode, or one per mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerMode {
    Common(f64),
    Each(Vec<f64>),
}

impl PerMode {
    fn expand(&self, n: usize, field: &str) -> Result<Vec<f64>, CliError> {
        match self {
            PerMode::Common(v) => Ok(vec![*v; n]),
            PerMode::Each(v) if v.len() == n => Ok(v.clone()),
            PerMode::Each(v) => Err(CliError::invalid(field, format!("has {} entries for N = {n}", v.len()))),
        }
    }
}

/// A fixed positive value or `"tune"`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Tunable {
    Value(f64),
    Keyword(TuneKeyword),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TuneKeyword {
    Tune,
}

impl Tunable {
    pub fn value(&self) -> Option<f64> {
        match self {
            Tunable::Value(v) => Some(*v),
            Tunable::Keyword(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceConfig {
    pub p: f64,
    pub eta: f64,
    pub per_mode_eta: Option<Vec<f64>>,
    pub p_dc: f64,
    pub herald_dark_fraction: f64,
}

impl Default for SourceConfig {
    fn default() -> Self {
        SourceConfig {
            p: 5e-3,
            eta: 0.3,
            per_mode_eta: None,
            p_dc: 0.0,
            herald_dark_fraction: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AveragingConfig {
    pub enabled: bool,
    /// `null` selects `2 n_max + 1`.
    pub quadrature_points: Option<usize>,
}

impl Default for AveragingConfig {
    fn default() -> Self {
        AveragingConfig {
            enabled: true,
            quadrature_points: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub path: EvalPath,
    pub fast_threshold: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        let d = EvalOptions::default();
        EvalConfig {
            path: d.path,
            fast_threshold: d.fast_threshold,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrialsConfig {
    pub n: u64,
    pub m: u64,
    pub l: u64,
}

impl Default for TrialsConfig {
    fn default() -> Self {
        TrialsConfig {
            n: 1_000_000,
            m: 1_000_000,
            l: 1_000_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PvalueConfig {
    /// TrialCounts JSON, bare or inside a `sample` result.
    pub counts: Option<PathBuf>,
    /// Bound to test against; `null` computes it from the configuration.
    pub bound: Option<f64>,
    pub target_log10_p: f64,
}

impl Default for PvalueConfig {
    fn default() -> Self {
        PvalueConfig {
            counts: None,
            bound: None,
            target_log10_p: -10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanConfig {
    pub n_values: Vec<usize>,
    pub etas: Vec<f64>,
    /// `[p, p_dc]` pairs for `scan-eta`.
    pub settings: Vec<[f64; 2]>,
    pub n_limit: usize,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            n_values: (2..=26).collect(),
            etas: (1..=10).map(|k| k as f64 / 10.0).collect(),
            settings: vec![[5e-3, 1e-6]],
            n_limit: 40,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub csv: bool,
}

/// Everything a run depends on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    #[serde(rename = "N")]
    pub n: Option<usize>,
    pub n_max: usize,
    pub alpha: PerMode,
    /// `[min, max]`; `null` means no fluctuation.
    pub alpha_box: Option<[PerMode; 2]>,
    pub lambda: Tunable,
    pub mu: Tunable,
    pub source: SourceConfig,
    pub conventions: Conventions,
    pub seed: u64,
    pub phase_averaging: AveragingConfig,
    pub bound: BoundOptions,
    pub eval: EvalConfig,
    pub tune: TuneGrid,
    pub trials: TrialsConfig,
    pub pvalue: PvalueConfig,
    pub scan: ScanConfig,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            n: None,
            n_max: 2,
            alpha: PerMode::Common(0.83),
            alpha_box: None,
            lambda: Tunable::Keyword(TuneKeyword::Tune),
            mu: Tunable::Keyword(TuneKeyword::Tune),
            source: SourceConfig::default(),
            conventions: Conventions::default(),
            seed: 0,
            phase_averaging: AveragingConfig::default(),
            bound: BoundOptions::default(),
            eval: EvalConfig::default(),
            tune: TuneGrid::default(),
            trials: TrialsConfig::default(),
            pvalue: PvalueConfig::default(),
            scan: ScanConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Sets `path` (dot-separated) inside `doc`, creating objects as needed.
pub fn apply_override(doc: &mut Value, path: &str, raw: &str) -> Result<(), CliError> {
    if path.is_empty() || path.split('.').any(str::is_empty) {
        return Err(CliError::invalid(path, "empty key in override path"));
    }
    let mut cur = doc;
    let keys: Vec<&str> = path.split('.').collect();
    for (i, key) in keys.iter().enumerate() {
        if !cur.is_object() {
            if cur.is_null() {
                *cur = Value::Object(Default::default());
            } else {
                return Err(CliError::invalid(keys[..i].join("."), "is not an object"));
            }
        }
        let map = cur.as_object_mut().expect("object");
        if i + 1 == keys.len() {
            map.insert(key.to_string(), parse_value(raw));
            return Ok(());
        }
        cur = map.entry(key.to_string()).or_insert(Value::Null);
    }
    Ok(())
}

fn deserialize(text: &str) -> Result<RunConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::invalid(if path == "." { "config".into() } else { path }, e.into_inner().to_string())
    })?;
    Ok(cfg)
}

/// Parses a configuration document, applies overrides and fills defaults.
///
/// The document itself is checked first so that duplicate and unknown keys
/// in the file are reported even when an override touches the same field.
pub fn load(text: &str, overrides: &[(String, String)]) -> Result<RunConfig, CliError> {
    let cfg = deserialize(text)?;
    if overrides.is_empty() {
        return resolve(cfg);
    }
    let mut doc: Value = serde_json::from_str(text).map_err(|e| CliError::invalid("config", e.to_string()))?;
    if doc.is_null() {
        doc = Value::Object(Default::default());
    }
    for (k, v) in overrides {
        apply_override(&mut doc, k, v)?;
    }
    resolve(deserialize(&doc.to_string())?)
}

/// Fills derived defaults and validates every field.
pub fn resolve(mut cfg: RunConfig) -> Result<RunConfig, CliError> {
    let n = cfg.n.ok_or_else(|| CliError::invalid("N", "is required"))?;
    if n < 2 {
        return Err(CliError::invalid("N", format!("{n} is below two parties")));
    }
    if cfg.phase_averaging.quadrature_points.is_none() {
        cfg.phase_averaging.quadrature_points = Some(2 * cfg.n_max + 1);
    }
    for (name, t) in [("lambda", cfg.lambda), ("mu", cfg.mu)] {
        if let Some(v) = t.value() {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CliError::invalid(name, format!("{v} must be positive")));
            }
        }
    }
    cfg.spec()?;
    cfg.model()?.validate()?;
    cfg.eval_options().avg.validate(cfg.n_max)?;
    cfg.tune.validate()?;
    if cfg.trials.n == 0 || cfg.trials.m == 0 || cfg.trials.l == 0 {
        return Err(CliError::invalid("trials", "every setting needs at least one trial"));
    }
    if !(cfg.pvalue.target_log10_p < 0.0) {
        return Err(CliError::invalid("pvalue.target_log10_p", "must be negative"));
    }
    if let Some(&bad) = cfg.scan.n_values.iter().find(|&&k| k < 2) {
        return Err(CliError::invalid("scan.n_values", format!("{bad} is below two parties")));
    }
    if let Some(&bad) = cfg.scan.etas.iter().find(|&&e| !(e > 0.0 && e <= 1.0)) {
        return Err(CliError::invalid("scan.etas", format!("{bad} is outside (0, 1]")));
    }
    for [p, d] in &cfg.scan.settings {
        if !(0.0..=1.0).contains(p) || !(0.0..=1.0).contains(d) {
            return Err(CliError::invalid("scan.settings", format!("[{p}, {d}] is outside [0, 1]")));
        }
    }
    if cfg.scan.n_limit < 2 {
        return Err(CliError::invalid("scan.n_limit", "must be at least 2"));
    }
    Ok(cfg)
}

impl RunConfig {
    pub fn n(&self) -> usize {
        self.n.unwrap_or(0)
    }

    pub fn spec(&self) -> Result<DisplacementSpec, CliError> {
        let n = self.n();
        let nominal = self.alpha.expand(n, "alpha")?;
        if let Some(&bad) = nominal.iter().find(|a| !(a.is_finite() && **a >= 0.0)) {
            return Err(CliError::invalid("alpha", format!("{bad} must be finite and non-negative")));
        }
        match &self.alpha_box {
            None => Ok(DisplacementSpec::degenerate(nominal)?),
            Some([lo, hi]) => {
                let lo = lo.expand(n, "alpha_box")?;
                let hi = hi.expand(n, "alpha_box")?;
                for i in 0..n {
                    if lo[i] > hi[i] {
                        return Err(CliError::invalid(
                            "alpha_box",
                            format!("min {} exceeds max {} for mode {i}", lo[i], hi[i]),
                        ));
                    }
                    if !(lo[i] <= nominal[i] && nominal[i] <= hi[i]) {
                        return Err(CliError::invalid(
                            "alpha_box",
                            format!("[{}, {}] does not contain alpha {} for mode {i}", lo[i], hi[i], nominal[i]),
                        ));
                    }
                }
                Ok(DisplacementSpec::with_box(nominal, lo, hi)?)
            }
        }
    }

    pub fn model(&self) -> Result<SourceModel, CliError> {
        let mut m = SourceModel::new(self.n(), self.source.p, self.source.eta);
        m.per_mode_eta = self.source.per_mode_eta.clone();
        m.p_dc = self.source.p_dc;
        m.herald_dark_fraction = self.source.herald_dark_fraction;
        m.n_max = self.n_max;
        Ok(m)
    }

    pub fn eval_options(&self) -> EvalOptions {
        let avg = if self.phase_averaging.enabled {
            PhaseAveraging {
                enabled: true,
                quadrature_points: self.phase_averaging.quadrature_points.unwrap_or(2 * self.n_max + 1),
            }
        } else {
            PhaseAveraging::disabled()
        };
        EvalOptions {
            avg,
            bound: self.bound,
            fast_threshold: self.eval.fast_threshold,
            path: self.eval.path,
        }
    }

    /// Tuning grid with any fixed parameter pinned to a single point.
    pub fn pinned_grid(&self) -> TuneGrid {
        let mut g = self.tune;
        if let Some(l) = self.lambda.value() {
            g.lambda_min = l;
            g.lambda_max = l;
            g.lambda_points = 1;
        }
        if let Some(m) = self.mu.value() {
            g.mu_min = m;
            g.mu_max = m;
            g.mu_points = 1;
        }
        g
    }

    pub fn fixed_params(&self) -> Option<(f64, f64)> {
        Some((self.lambda.value()?, self.mu.value()?))
    }

    /// Common displacement for scans.
    pub fn common_alpha(&self) -> Result<f64, CliError> {
        match &self.alpha {
            PerMode::Common(a) if self.alpha_box.is_none() => Ok(*a),
            _ => Err(CliError::invalid("alpha", "scans need one common amplitude without a box")),
        }
    }
}
