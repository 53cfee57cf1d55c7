use serde::Serialize;
use serde_json::Value;

use pathwit_core::bisep::worst_case_bound;
use pathwit_core::expsim::{
    effective_bound_options, sample_trials, scan_eta, scan_n, subset_analysis, trial_moments, Prepared, SubsetParams,
    TuneResult,
};
use pathwit_core::stats::{ln_p_value, min_trials, p_value, ranges};
use pathwit_core::witness::f_coeffs;
use pathwit_core::{BoundResult, ScenarioReport, TrialCounts, WitnessParams};

use crate::output::{num, opt, Output};
use crate::{CliError, Command, RunConfig};

pub fn dispatch(cmd: &Command, cfg: &RunConfig, out: &mut Output) -> Result<(), CliError> {
    match cmd {
        Command::Bound(_) => bound(cfg, out),
        Command::Simulate(_) => simulate(cfg, out),
        Command::Sample(_) => sample(cfg, out),
        Command::Pvalue(a) => pvalue(cfg, a.counts.as_deref(), out),
        Command::Subsets(_) => subsets(cfg, out),
        Command::ScanN(_) => scan_parties(cfg, out),
        Command::ScanEta(_) => scan_transmission(cfg, out),
        Command::Tune(_) => tune(cfg, out),
        Command::Validate(_) => unreachable!("handled before dispatch"),
    }
}

fn prepare(cfg: &RunConfig) -> Result<Prepared, CliError> {
    let opts = cfg.eval_options();
    Ok(Prepared::new(&cfg.model()?, &cfg.spec()?, &cfg.conventions, &opts)?)
}

/// Fixed parameters, or tuned ones on the source model.
fn params(cfg: &RunConfig, prepared: Option<&Prepared>, out: &mut Output) -> Result<(WitnessParams, Option<TuneResult>), CliError> {
    if let Some((l, m)) = cfg.fixed_params() {
        return Ok((WitnessParams::new(cfg.n(), l, m)?, None));
    }
    out.log("tuning lambda and mu");
    let owned;
    let prep = match prepared {
        Some(p) => p,
        None => {
            owned = prepare(cfg)?;
            &owned
        }
    };
    let t = prep.tune(&cfg.pinned_grid(), &cfg.bound)?;
    out.log(&format!("tuned lambda {} mu {} violation {}", t.lambda, t.mu, t.violation));
    Ok((WitnessParams::new(cfg.n(), t.lambda, t.mu)?, Some(t)))
}

fn worst_case(cfg: &RunConfig, p: &WitnessParams) -> Result<BoundResult, CliError> {
    let spec = cfg.spec()?;
    let opts = effective_bound_options(&spec, &cfg.conventions, &cfg.bound);
    Ok(worst_case_bound(p, &spec, &opts)?)
}

fn modes_label(modes: &[usize]) -> String {
    modes.iter().map(|m| m.to_string()).collect::<Vec<_>>().join(" ")
}

#[derive(Serialize)]
struct BoundOut {
    lambda: f64,
    mu: f64,
    tuning: Option<TuneResult>,
    /// The bound never includes a two-photon allowance.
    includes_p_star_term: bool,
    bound: BoundResult,
}

fn bound(cfg: &RunConfig, out: &mut Output) -> Result<(), CliError> {
    let (p, tuning) = params(cfg, None, out)?;
    let b = worst_case(cfg, &p)?;
    let rows: Vec<Vec<String>> = b
        .per_partition
        .iter()
        .map(|r| {
            vec![
                modes_label(r.partition.g1()),
                num(r.value),
                num(r.angle),
                num(r.lipschitz_gap),
            ]
        })
        .collect();
    out.result(BoundOut {
        lambda: p.lambda,
        mu: p.mu,
        tuning,
        includes_p_star_term: false,
        bound: b,
    })?;
    out.table(&["g1", "value", "angle", "lipschitz_gap"], &rows)
}

#[derive(Serialize)]
struct SimulateOut {
    tuning: Option<TuneResult>,
    report: ScenarioReport,
    /// `N(N-1) p_*`, the allowance a bound folding in the two-photon term
    /// would add.
    p_star_term: f64,
    bound_with_p_star_term: f64,
}

fn simulate(cfg: &RunConfig, out: &mut Output) -> Result<(), CliError> {
    let prep = prepare(cfg)?;
    let (p, tuning) = params(cfg, Some(&prep), out)?;
    let report = prep.report(&p, &cfg.bound)?;
    let p_star_term = p.pairs() * report.triple.p_star;
    out.result(SimulateOut {
        tuning,
        p_star_term,
        bound_with_p_star_term: report.bound.value + p_star_term,
        report,
    })
}

#[derive(Serialize)]
struct SampleOut {
    lambda: f64,
    mu: f64,
    tuning: Option<TuneResult>,
    counts: TrialCounts,
    expected: pathwit_core::expsim::TrialMoments,
}

fn sample(cfg: &RunConfig, out: &mut Output) -> Result<(), CliError> {
    let (p, tuning) = params(cfg, None, out)?;
    let model = cfg.model()?;
    let spec = cfg.spec()?;
    let avg = cfg.eval_options().avg;
    let t = cfg.trials;
    let counts = sample_trials(&model, &p, &spec, &cfg.conventions, &avg, (t.n, t.m, t.l), cfg.seed)?;
    let expected = trial_moments(&model, &p, &spec, &cfg.conventions, &avg)?;
    out.result(SampleOut {
        lambda: p.lambda,
        mu: p.mu,
        tuning,
        counts,
        expected,
    })
}

/// Reads TrialCounts from a bare document or from a `sample` result.
fn read_counts(path: &std::path::Path) -> Result<TrialCounts, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let doc: Value = serde_json::from_str(&text).map_err(|e| CliError::invalid("pvalue.counts", e.to_string()))?;
    let inner = doc.pointer("/result/counts").cloned().unwrap_or(doc);
    let counts: TrialCounts =
        serde_json::from_value(inner).map_err(|e| CliError::invalid("pvalue.counts", e.to_string()))?;
    if counts.n == 0 || counts.m == 0 || counts.l == 0 {
        return Err(CliError::invalid("pvalue.counts", "n, m and l must be positive"));
    }
    Ok(counts)
}

#[derive(Serialize)]
struct PvalueOut {
    lambda: f64,
    mu: f64,
    counts: TrialCounts,
    witness_mean: f64,
    bound: f64,
    bound_source: &'static str,
    margin: f64,
    ranges: pathwit_core::Ranges,
    log10_p: f64,
    ln_p: f64,
    target_log10_p: f64,
    /// Trials per setting for the target at this margin, when positive.
    min_trials: Option<u64>,
}

fn pvalue(cfg: &RunConfig, counts_flag: Option<&std::path::Path>, out: &mut Output) -> Result<(), CliError> {
    let path = counts_flag
        .map(|p| p.to_path_buf())
        .or_else(|| cfg.pvalue.counts.clone())
        .ok_or_else(|| CliError::invalid("pvalue.counts", "is required (or pass --counts)"))?;
    let counts = read_counts(&path)?;
    let (l, m) = cfg
        .fixed_params()
        .ok_or_else(|| CliError::invalid("lambda", "pvalue needs fixed lambda and mu"))?;
    let p = WitnessParams::new(cfg.n(), l, m)?;
    let (bound, bound_source) = match cfg.pvalue.bound {
        Some(b) => (b, "config"),
        None => (worst_case(cfg, &p)?.value, "computed"),
    };
    let r = ranges(&p, &f_coeffs(&cfg.spec()?), cfg.conventions.sigma);
    let witness_mean = counts.o_bar + counts.z_bar + counts.s_bar;
    let margin = witness_mean - bound;
    let target = cfg.pvalue.target_log10_p;
    out.result(PvalueOut {
        lambda: l,
        mu: m,
        counts,
        witness_mean,
        bound,
        bound_source,
        margin,
        ranges: r,
        log10_p: p_value(&counts, bound, &r)?,
        ln_p: ln_p_value(&counts, bound, &r)?,
        target_log10_p: target,
        min_trials: if margin > 0.0 { Some(min_trials(margin, &r, target)?) } else { None },
    })
}

#[derive(Serialize)]
struct SubsetsOut {
    rows: Vec<pathwit_core::expsim::SubsetRow>,
}

fn subsets(cfg: &RunConfig, out: &mut Output) -> Result<(), CliError> {
    let choice = match cfg.fixed_params() {
        Some((lambda, mu)) => SubsetParams::Fixed { lambda, mu },
        None => SubsetParams::TunePerSize(cfg.pinned_grid()),
    };
    let rows = subset_analysis(&cfg.model()?, &cfg.spec()?, &cfg.conventions, &choice, &cfg.eval_options())?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                modes_label(&r.subset),
                r.subset.len().to_string(),
                num(r.lambda),
                num(r.mu),
                num(r.witness_value),
                num(r.bound),
                num(r.dark_penalty),
                num(r.violation),
                num(r.one_minus_p0),
            ]
        })
        .collect();
    out.result(SubsetsOut { rows })?;
    out.table(
        &["subset", "size", "lambda", "mu", "witness_value", "bound", "dark_penalty", "violation", "one_minus_p0"],
        &table,
    )
}

#[derive(Serialize)]
struct ScanNOut {
    /// Largest party count with a positive violation.
    n_max: Option<usize>,
    points: Vec<pathwit_core::expsim::ScanPoint>,
}

fn scan_parties(cfg: &RunConfig, out: &mut Output) -> Result<(), CliError> {
    let mut ns = cfg.scan.n_values.clone();
    ns.sort_unstable();
    ns.dedup();
    let points = scan_n(
        &cfg.model()?,
        &ns,
        cfg.common_alpha()?,
        &cfg.conventions,
        cfg.fixed_params(),
        &cfg.pinned_grid(),
        &cfg.eval_options(),
    )?;
    let table: Vec<Vec<String>> = points
        .iter()
        .map(|p| {
            vec![
                p.n.to_string(),
                num(p.lambda),
                num(p.mu),
                num(p.witness_value),
                num(p.bound),
                num(p.dark_penalty),
                num(p.violation),
                p.path.clone(),
            ]
        })
        .collect();
    let n_max = points.iter().filter(|p| p.violation > 0.0).map(|p| p.n).max();
    out.result(ScanNOut { n_max, points })?;
    out.table(&["n", "lambda", "mu", "witness_value", "bound", "dark_penalty", "violation", "path"], &table)
}

#[derive(Serialize)]
struct ScanEtaOut {
    rows: Vec<pathwit_core::expsim::EtaRow>,
}

fn scan_transmission(cfg: &RunConfig, out: &mut Output) -> Result<(), CliError> {
    let settings: Vec<(f64, f64)> = cfg.scan.settings.iter().map(|[p, d]| (*p, *d)).collect();
    let mut rows = scan_eta(
        &cfg.model()?,
        &cfg.scan.etas,
        &settings,
        cfg.common_alpha()?,
        &cfg.conventions,
        &cfg.pinned_grid(),
        &cfg.eval_options(),
        cfg.scan.n_limit,
    )?;
    rows.sort_by(|a, b| a.eta.total_cmp(&b.eta).then(a.p.total_cmp(&b.p)).then(a.p_dc.total_cmp(&b.p_dc)));
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                num(r.eta),
                num(r.p),
                num(r.p_dc),
                opt(r.n_max),
                r.violation_at_n_max.map(num).unwrap_or_default(),
                r.hit_limit.to_string(),
            ]
        })
        .collect();
    out.result(ScanEtaOut { rows })?;
    out.table(&["eta", "p", "p_dc", "n_max", "violation_at_n_max", "hit_limit"], &table)
}

#[derive(Serialize)]
struct TuneOut {
    best: TuneResult,
    grid: Vec<pathwit_core::expsim::GridCell>,
}

fn tune(cfg: &RunConfig, out: &mut Output) -> Result<(), CliError> {
    let prep = prepare(cfg)?;
    let (best, grid) = prep.tune_with_table(&cfg.pinned_grid(), &cfg.bound)?;
    let table: Vec<Vec<String>> = grid
        .iter()
        .map(|c| vec![num(c.lambda), num(c.mu), num(c.violation)])
        .collect();
    out.result(TuneOut { best, grid })?;
    out.table(&["lambda", "mu", "violation"], &table)
}
