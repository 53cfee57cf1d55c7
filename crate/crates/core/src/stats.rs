//! Hoeffding certification of a positive witness violation.

use std::f64::consts::LN_10;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::expsim::TrialCounts;
use crate::witness::{SigmaConvention, WitnessParams};
use crate::{Error, Result};

/// Widths of the ranges of the three per-trial scores.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ranges {
    pub delta_o: f64,
    pub delta_z: f64,
    pub delta_s: f64,
}

pub fn ranges(params: &WitnessParams, f: &DMatrix<f64>, sigma: SigmaConvention) -> Ranges {
    let n = params.n as f64;
    let pairs = n * (n - 1.0);
    let f_sum: f64 = (0..f.nrows())
        .flat_map(|i| (0..f.ncols()).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| f[(i, j)])
        .sum();
    Ranges {
        delta_o: 2.0 * pairs,
        delta_z: params.lambda + f_sum + pairs + params.mu,
        delta_s: sigma.local_factor() * n * pairs,
    }
}

fn check_counts(counts: &TrialCounts) -> Result<()> {
    if counts.n == 0 || counts.m == 0 || counts.l == 0 {
        return Err(Error::invalid("counts", "every observable needs at least one trial"));
    }
    Ok(())
}

/// Natural logarithm of the Hoeffding p-value; `0` when the mean does not
/// exceed `bound`.
pub fn ln_p_value(counts: &TrialCounts, bound: f64, ranges: &Ranges) -> Result<f64> {
    check_counts(counts)?;
    let t = counts.o_bar + counts.z_bar + counts.s_bar - bound;
    if !(t > 0.0) {
        return Ok(0.0);
    }
    let (n, m, l) = (counts.n as f64, counts.m as f64, counts.l as f64);
    let total = n + m + l;
    let denom = n * ranges.delta_o.powi(2) + m * ranges.delta_z.powi(2) + l * ranges.delta_s.powi(2);
    Ok(-2.0 * total * total * t * t / denom)
}

/// Base-10 logarithm of the Hoeffding p-value.
pub fn p_value(counts: &TrialCounts, bound: f64, ranges: &Ranges) -> Result<f64> {
    Ok(ln_p_value(counts, bound, ranges)? / LN_10)
}

/// Smallest common trial count `n = m = l` whose p-value reaches
/// `10^target_log10` for a mean violation `t`.
pub fn min_trials(t: f64, ranges: &Ranges, target_log10: f64) -> Result<u64> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::invalid("t", "the expected violation must be positive"));
    }
    if !(target_log10 < 0.0) {
        return Err(Error::invalid("target", "the target log10 p-value must be negative"));
    }
    let sum_sq = ranges.delta_o.powi(2) + ranges.delta_z.powi(2) + ranges.delta_s.powi(2);
    let n = (-target_log10 * LN_10) * sum_sq / (18.0 * t * t);
    Ok(n.ceil().max(1.0) as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(o: f64, z: f64, s: f64, n: u64, m: u64, l: u64) -> TrialCounts {
        TrialCounts {
            o_bar: o,
            z_bar: z,
            s_bar: s,
            n,
            m,
            l,
            seed: 0,
            ..Default::default()
        }
    }

    #[test]
    fn ranges_by_substitution() {
        let p = WitnessParams::new(2, 1.0, 1.0).unwrap();
        let f = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let r = ranges(&p, &f, SigmaConvention::Conservative);
        assert_eq!((r.delta_o, r.delta_z, r.delta_s), (4.0, 6.0, 8.0));
        let r = ranges(&p, &f, SigmaConvention::Direct);
        assert_eq!(r.delta_s, 4.0);
    }

    #[test]
    fn no_violation_gives_unit_p() {
        let r = Ranges {
            delta_o: 1.0,
            delta_z: 1.0,
            delta_s: 1.0,
        };
        let c = counts(1.0, 1.0, 0.0, 10, 10, 10);
        assert_eq!(p_value(&c, 2.0, &r).unwrap(), 0.0);
        assert_eq!(p_value(&c, 3.0, &r).unwrap(), 0.0);
        assert!(p_value(&c, 1.5, &r).unwrap() < 0.0);
    }

    #[test]
    fn doubling_t_quarters_trials() {
        let r = Ranges {
            delta_o: 24.0,
            delta_z: 116.73,
            delta_s: 48.0,
        };
        let a = min_trials(0.2, &r, -10.0).unwrap() as f64;
        let b = min_trials(0.4, &r, -10.0).unwrap() as f64;
        assert!((a / b - 4.0).abs() < 1e-3);
        assert!(min_trials(0.0, &r, -10.0).is_err());
    }
}
