use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bisep::{worst_case_bound, BoundOptions};
use crate::witness::{Conventions, DisplacementSpec, WitnessParams};
use crate::{Error, Result};

use super::{EvalOptions, Prepared, SourceModel};

/// Axis and diagonal moves of the pattern search, in units of the step.
const COMPASS: [(f64, f64); 8] = [
    (1.0, 0.0),
    (-1.0, 0.0),
    (0.0, 1.0),
    (0.0, -1.0),
    (1.0, 1.0),
    (1.0, -1.0),
    (-1.0, 1.0),
    (-1.0, -1.0),
];

/// Evaluations allowed to one pattern-search start.
pub const REFINE_BUDGET: usize = 4000;

/// Pattern-search step, in log space, below which a start stops.
pub const REFINE_TOL: f64 = 1e-5;

/// Log-spaced search grid for `(lambda, mu)` and the refinement settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TuneGrid {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub lambda_points: usize,
    pub mu_min: f64,
    pub mu_max: f64,
    pub mu_points: usize,
    /// Pattern search in log space, kept inside the grid box.
    pub refine: bool,
    /// Number of best grid cells the pattern search starts from.
    pub refine_starts: usize,
    /// Angle grid used for the bound during the grid scan and the pattern
    /// search; each start ends with one evaluation on the full grid.
    pub coarse_angle_grid: usize,
}

impl Default for TuneGrid {
    fn default() -> Self {
        TuneGrid {
            lambda_min: 0.1,
            lambda_max: 100.0,
            lambda_points: 40,
            mu_min: 1.0,
            mu_max: 1e4,
            mu_points: 40,
            refine: true,
            refine_starts: 4,
            coarse_angle_grid: 201,
        }
    }
}

impl TuneGrid {
    pub fn validate(&self) -> Result<()> {
        let ok = |lo: f64, hi: f64, k: usize| lo > 0.0 && hi >= lo && hi.is_finite() && k >= 1;
        if !ok(self.lambda_min, self.lambda_max, self.lambda_points) {
            return Err(Error::invalid("tune.lambda", "need 0 < min <= max and at least one point"));
        }
        if !ok(self.mu_min, self.mu_max, self.mu_points) {
            return Err(Error::invalid("tune.mu", "need 0 < min <= max and at least one point"));
        }
        if self.coarse_angle_grid < 3 {
            return Err(Error::invalid("tune.coarse_angle_grid", "at least three points are required"));
        }
        Ok(())
    }

    fn axis(lo: f64, hi: f64, k: usize) -> Vec<f64> {
        if k == 1 {
            return vec![lo];
        }
        let (a, b) = (lo.ln(), hi.ln());
        (0..k).map(|i| (a + (b - a) * i as f64 / (k - 1) as f64).exp()).collect()
    }

    fn log_step(lo: f64, hi: f64, k: usize) -> f64 {
        if lo == hi {
            0.0
        } else if k <= 1 {
            0.5
        } else {
            (hi.ln() - lo.ln()) / (k - 1) as f64
        }
    }
}

/// Violation at one cell of the tuning grid, evaluated with the coarse
/// angle grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub lambda: f64,
    pub mu: f64,
    pub violation: f64,
}

/// Tuned parameters and the violation they reach.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub lambda: f64,
    pub mu: f64,
    pub violation: f64,
    pub grid_lambda: f64,
    pub grid_mu: f64,
    pub grid_violation: f64,
    pub evaluations: usize,
}

impl Prepared {
    fn violation_at(&self, lambda: f64, mu: f64, bound_opts: &BoundOptions) -> Result<f64> {
        let params = WitnessParams::new(self.n(), lambda, mu)?;
        let (value, _) = self.stats.assemble(&params, &self.conventions);
        let bound = worst_case_bound(&params, &self.spec, &self.bound_options(bound_opts))?;
        Ok(value - bound.value - self.dark_penalty)
    }

    /// Violation on every grid cell, `lambda`-major.
    pub fn grid_values(&self, grid: &TuneGrid, bound_opts: &BoundOptions) -> Result<Vec<GridCell>> {
        grid.validate()?;
        let lambdas = TuneGrid::axis(grid.lambda_min, grid.lambda_max, grid.lambda_points);
        let mus = TuneGrid::axis(grid.mu_min, grid.mu_max, grid.mu_points);
        let coarse = BoundOptions {
            angle_grid: grid.coarse_angle_grid,
            ..*bound_opts
        };
        let cells: Vec<(f64, f64)> = lambdas.iter().flat_map(|&l| mus.iter().map(move |&m| (l, m))).collect();
        cells
            .par_iter()
            .map(|&(lambda, mu)| {
                Ok(GridCell {
                    lambda,
                    mu,
                    violation: self.violation_at(lambda, mu, &coarse)?,
                })
            })
            .collect()
    }

    /// Grid search over `(lambda, mu)` with an optional pattern-search
    /// refinement.
    pub fn tune(&self, grid: &TuneGrid, bound_opts: &BoundOptions) -> Result<TuneResult> {
        Ok(self.tune_with_table(grid, bound_opts)?.0)
    }

    /// [`Prepared::tune`] together with the grid it searched.
    pub fn tune_with_table(&self, grid: &TuneGrid, bound_opts: &BoundOptions) -> Result<(TuneResult, Vec<GridCell>)> {
        let table = self.grid_values(grid, bound_opts)?;
        let cells: Vec<(f64, f64)> = table.iter().map(|c| (c.lambda, c.mu)).collect();
        let values: Vec<f64> = table.iter().map(|c| c.violation).collect();
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
        let (grid_lambda, grid_mu) = cells[order[0]];
        let mut evaluations = cells.len();

        let (mut lambda, mut mu) = (grid_lambda, grid_mu);
        if grid.refine {
            let bx = (grid.lambda_min.ln(), grid.lambda_max.ln());
            let by = (grid.mu_min.ln(), grid.mu_max.ln());
            let init_x = TuneGrid::log_step(grid.lambda_min, grid.lambda_max, grid.lambda_points);
            let init_y = TuneGrid::log_step(grid.mu_min, grid.mu_max, grid.mu_points);
            let coarse = BoundOptions {
                angle_grid: grid.coarse_angle_grid,
                ..*bound_opts
            };
            let mut best_f = f64::NEG_INFINITY;
            for &start in order.iter().take(grid.refine_starts.max(1)) {
                // positions in log space next to the values they stand for, so
                // that an axis that never moves keeps its exact value
                let (mut cl, mut cm) = cells[start];
                let (mut cx, mut cy) = (cl.ln(), cm.ln());
                let mut fx = self.violation_at(cl, cm, &coarse)?;
                evaluations += 1;
                let (mut step_x, mut step_y) = (init_x, init_y);
                let mut budget = REFINE_BUDGET;
                while (step_x > REFINE_TOL || step_y > REFINE_TOL) && budget > 0 {
                    let mut best: Option<(f64, f64, f64)> = None;
                    for (sx, sy) in COMPASS {
                        let nx = (cx + sx * step_x).clamp(bx.0, bx.1);
                        let ny = (cy + sy * step_y).clamp(by.0, by.1);
                        if nx == cx && ny == cy {
                            continue;
                        }
                        let nl = if nx == cx { cl } else { nx.exp() };
                        let nm = if ny == cy { cm } else { ny.exp() };
                        let v = self.violation_at(nl, nm, &coarse)?;
                        evaluations += 1;
                        budget = budget.saturating_sub(1);
                        if v > best.map_or(fx + 1e-14, |b| b.0) {
                            best = Some((v, nx, ny));
                        }
                    }
                    match best {
                        Some((v, nx, ny)) => {
                            fx = v;
                            if nx != cx {
                                cl = nx.exp();
                            }
                            if ny != cy {
                                cm = ny.exp();
                            }
                            cx = nx;
                            cy = ny;
                            step_x = (2.0 * step_x).min(init_x);
                            step_y = (2.0 * step_y).min(init_y);
                        }
                        None => {
                            step_x *= 0.5;
                            step_y *= 0.5;
                        }
                    }
                }
                // starts are ranked on the full angle grid
                let full = self.violation_at(cl, cm, bound_opts)?;
                evaluations += 1;
                if full > best_f {
                    best_f = full;
                    lambda = cl;
                    mu = cm;
                }
            }
        }
        let violation = self.violation_at(lambda, mu, bound_opts)?;
        let grid_violation = self.violation_at(grid_lambda, grid_mu, bound_opts)?;
        let result = TuneResult {
            lambda,
            mu,
            violation,
            grid_lambda,
            grid_mu,
            grid_violation,
            evaluations: evaluations + 2,
        };
        Ok((result, table))
    }
}

/// `(lambda, mu)` maximizing the violation of `model`.
pub fn tune_params(
    model: &SourceModel,
    spec: &DisplacementSpec,
    conventions: &Conventions,
    grid: &TuneGrid,
    opts: &EvalOptions,
) -> Result<TuneResult> {
    Prepared::new(model, spec, conventions, opts)?.tune(grid, &opts.bound)
}

/// One point of a scan over the party count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub n: usize,
    pub lambda: f64,
    pub mu: f64,
    pub witness_value: f64,
    pub bound: f64,
    pub dark_penalty: f64,
    pub violation: f64,
    pub path: String,
}

fn scan_one(
    template: &SourceModel,
    n: usize,
    alpha: f64,
    conventions: &Conventions,
    fixed: Option<(f64, f64)>,
    grid: &TuneGrid,
    opts: &EvalOptions,
) -> Result<ScanPoint> {
    let model = SourceModel {
        n,
        per_mode_eta: None,
        ..template.clone()
    };
    let spec = DisplacementSpec::uniform(n, alpha)?;
    let prepared = Prepared::new(&model, &spec, conventions, opts)?;
    let (lambda, mu) = match fixed {
        Some(p) => p,
        None => {
            let t = prepared.tune(grid, &opts.bound)?;
            (t.lambda, t.mu)
        }
    };
    let report = prepared.report(&WitnessParams::new(n, lambda, mu)?, &opts.bound)?;
    Ok(ScanPoint {
        n,
        lambda,
        mu,
        witness_value: report.witness_value,
        bound: report.bound.value,
        dark_penalty: report.dark_penalty,
        violation: report.violation,
        path: report.path,
    })
}

/// Violation against the party count at a common displacement `alpha`,
/// with `(lambda, mu)` either fixed or tuned per point.
pub fn scan_n(
    template: &SourceModel,
    ns: &[usize],
    alpha: f64,
    conventions: &Conventions,
    fixed: Option<(f64, f64)>,
    grid: &TuneGrid,
    opts: &EvalOptions,
) -> Result<Vec<ScanPoint>> {
    if template.per_mode_eta.is_some() {
        return Err(Error::invalid("per_mode_eta", "scans use equal transmissions"));
    }
    if let Some(&n) = ns.iter().find(|&&n| n < 2) {
        return Err(Error::invalid("N", format!("{n} is below two parties")));
    }
    ns.par_iter()
        .map(|&n| scan_one(template, n, alpha, conventions, fixed, grid, opts))
        .collect()
}

/// Largest party count with a positive violation for one `(eta, p, p_dc)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EtaRow {
    pub eta: f64,
    pub p: f64,
    pub p_dc: f64,
    /// `None` when not even two parties violate.
    pub n_max: Option<usize>,
    pub violation_at_n_max: Option<f64>,
    /// True when the search stopped at the party-count limit.
    pub hit_limit: bool,
}

/// For each transmission and `(p, p_dc)` setting, increase `N` from 2 until
/// the tuned violation is no longer positive.
#[allow(clippy::too_many_arguments)]
pub fn scan_eta(
    template: &SourceModel,
    etas: &[f64],
    settings: &[(f64, f64)],
    alpha: f64,
    conventions: &Conventions,
    grid: &TuneGrid,
    opts: &EvalOptions,
    n_limit: usize,
) -> Result<Vec<EtaRow>> {
    if let Some(&e) = etas.iter().find(|&&e| !(e > 0.0 && e <= 1.0)) {
        return Err(Error::invalid("eta", format!("{e} is outside (0, 1]")));
    }
    if n_limit < 2 {
        return Err(Error::invalid("n_limit", "must be at least 2"));
    }
    let cells: Vec<(f64, f64, f64)> = etas
        .iter()
        .flat_map(|&e| settings.iter().map(move |&(p, d)| (e, p, d)))
        .collect();
    cells
        .par_iter()
        .map(|&(eta, p, p_dc)| {
            let model = SourceModel {
                eta,
                p,
                p_dc,
                per_mode_eta: None,
                ..template.clone()
            };
            let mut best: Option<(usize, f64)> = None;
            let mut n = 2;
            let mut hit_limit = false;
            loop {
                let pt = scan_one(&model, n, alpha, conventions, None, grid, opts)?;
                if pt.violation <= 0.0 {
                    break;
                }
                best = Some((n, pt.violation));
                if n == n_limit {
                    hit_limit = true;
                    break;
                }
                n += 1;
            }
            Ok(EtaRow {
                eta,
                p,
                p_dc,
                n_max: best.map(|b| b.0),
                violation_at_n_max: best.map(|b| b.1),
                hit_limit,
            })
        })
        .collect()
}
