use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bisep::worst_case_bound;
use crate::witness::{Conventions, DisplacementSpec, MeasuredStatistics, WitnessParams};
use crate::{Error, Result};

use super::{dark_penalty, make_state, EvalOptions, Prepared, SourceModel, TuneGrid};

/// How `(lambda, mu)` is chosen for each subset size.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SubsetParams {
    Fixed { lambda: f64, mu: f64 },
    /// Tuned once per size on the lexicographically first subset.
    TunePerSize(TuneGrid),
}

/// Witness analysis of the parties in one subset, the others traced out.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsetRow {
    pub subset: Vec<usize>,
    pub lambda: f64,
    pub mu: f64,
    pub witness_value: f64,
    pub bound: f64,
    pub dark_penalty: f64,
    pub violation: f64,
    /// Probability that at least one detector of the subset clicks.
    pub one_minus_p0: f64,
}

fn subsets_of_size(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    loop {
        out.push(cur.clone());
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] < n - k + i {
                cur[i] += 1;
                for j in (i + 1)..k {
                    cur[j] = cur[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Every subset of at least two parties, ordered by size then
/// lexicographically.
pub fn subset_analysis(
    model: &SourceModel,
    spec: &DisplacementSpec,
    conventions: &Conventions,
    choice: &SubsetParams,
    opts: &EvalOptions,
) -> Result<Vec<SubsetRow>> {
    model.validate()?;
    if model.n < 2 {
        return Err(Error::invalid("N", "subsets need at least two parties"));
    }
    if model.n > opts.fast_threshold {
        return Err(Error::DimensionGuard {
            what: "modes for subset analysis",
            value: model.n,
            limit: opts.fast_threshold,
        });
    }
    if spec.modes() != model.n {
        return Err(Error::invalid("alpha", format!("expected {} amplitudes", model.n)));
    }
    let state = make_state(model)?;
    let subsets: Vec<Vec<usize>> = (2..=model.n).flat_map(|k| subsets_of_size(model.n, k)).collect();

    let prepared: Vec<Prepared> = subsets
        .par_iter()
        .map(|s| {
            let reduced = state.partial_trace(s)?;
            let sub_spec = spec.restrict(s)?;
            let stats = MeasuredStatistics::measure(&reduced, &sub_spec, &opts.avg, model.p_dc, conventions)?;
            Ok(Prepared {
                stats,
                spec: sub_spec,
                conventions: *conventions,
                dark_penalty: dark_penalty(s.len(), model.p_dc)?,
                path: "full",
            })
        })
        .collect::<Result<_>>()?;

    let mut per_size: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
    for (s, prep) in subsets.iter().zip(&prepared) {
        if per_size.contains_key(&s.len()) {
            continue;
        }
        let lm = match choice {
            SubsetParams::Fixed { lambda, mu } => (*lambda, *mu),
            SubsetParams::TunePerSize(grid) => {
                let t = prep.tune(grid, &opts.bound)?;
                (t.lambda, t.mu)
            }
        };
        per_size.insert(s.len(), lm);
    }

    subsets
        .par_iter()
        .zip(prepared.par_iter())
        .map(|(s, prep)| {
            let (lambda, mu) = per_size[&s.len()];
            let params = WitnessParams::new(s.len(), lambda, mu)?;
            let (value, _) = prep.stats.assemble(&params, conventions);
            let bound = worst_case_bound(&params, &prep.spec, &prep.bound_options(&opts.bound))?;
            Ok(SubsetRow {
                subset: s.clone(),
                lambda,
                mu,
                witness_value: value,
                bound: bound.value,
                dark_penalty: prep.dark_penalty,
                violation: value - bound.value - prep.dark_penalty,
                one_minus_p0: 1.0 - prep.stats.p0,
            })
        })
        .collect()
}
