use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fock::{click_stats, coincidence_after_split, PhaseAveraging};
use crate::witness::{f_coeffs, Conventions, DisplacementSpec, WitnessParams};
use crate::{Error, Result};

use super::{make_state, SourceModel};

/// Trials per independently seeded block; results do not depend on how
/// blocks are spread over threads.
pub const BLOCK_SIZE: u64 = 1 << 16;

/// Sample means of the three per-trial scores.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrialCounts {
    pub o_bar: f64,
    pub z_bar: f64,
    pub s_bar: f64,
    pub n: u64,
    pub m: u64,
    pub l: u64,
    pub seed: u64,
    /// Unbiased sample variances of the scores.
    pub o_var: f64,
    pub z_var: f64,
    pub s_var: f64,
}

/// Exact means and variances of the per-trial scores.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialMoments {
    pub o_mean: f64,
    pub o_var: f64,
    pub z_mean: f64,
    pub z_var: f64,
    pub s_mean: f64,
    pub s_var: f64,
}

/// Discrete score distribution of one measurement setting.
struct Setting {
    probs: Vec<f64>,
    scores: Vec<f64>,
}

impl Setting {
    fn moments(&self) -> (f64, f64) {
        let mean: f64 = self.probs.iter().zip(&self.scores).map(|(p, s)| p * s).sum();
        let var = self.probs.iter().zip(&self.scores).map(|(p, s)| p * (s - mean).powi(2)).sum();
        (mean, var)
    }

    fn sample(&self, trials: u64, seed: u64, stream: u64) -> (f64, f64) {
        let mut cdf = Vec::with_capacity(self.probs.len());
        let mut acc = 0.0;
        for p in &self.probs {
            acc += p;
            cdf.push(acc);
        }
        let total = acc;
        let blocks = trials.div_ceil(BLOCK_SIZE);
        let counts: Vec<Vec<u64>> = (0..blocks)
            .into_par_iter()
            .map(|b| {
                let mut rng = ChaCha8Rng::seed_from_u64(block_seed(seed, stream, b));
                let len = BLOCK_SIZE.min(trials - b * BLOCK_SIZE);
                let mut c = vec![0u64; cdf.len()];
                for _ in 0..len {
                    let u = rng.gen::<f64>() * total;
                    let k = cdf.partition_point(|&x| x <= u).min(cdf.len() - 1);
                    c[k] += 1;
                }
                c
            })
            .collect();
        let mut hist = vec![0u64; cdf.len()];
        for c in counts {
            for (h, x) in hist.iter_mut().zip(c) {
                *h += x;
            }
        }
        let t = trials as f64;
        let mean = hist.iter().zip(&self.scores).map(|(&h, s)| h as f64 * s).sum::<f64>() / t;
        let var = if trials > 1 {
            hist.iter()
                .zip(&self.scores)
                .map(|(&h, s)| h as f64 * (s - mean).powi(2))
                .sum::<f64>()
                / (t - 1.0)
        } else {
            0.0
        };
        (mean, var)
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn block_seed(seed: u64, stream: u64, block: u64) -> u64 {
    splitmix64(splitmix64(seed ^ stream.wrapping_mul(0xd1b5_4a32_d192_ed03)) ^ block)
}

fn settings(
    model: &SourceModel,
    params: &WitnessParams,
    spec: &DisplacementSpec,
    conventions: &Conventions,
    avg: &PhaseAveraging,
) -> Result<[Setting; 3]> {
    params.validate()?;
    if params.n != model.n || spec.modes() != model.n {
        return Err(Error::invalid("N", "model, parameters and amplitudes disagree"));
    }
    let n = model.n;
    let state = make_state(model)?;
    let pairs = params.pairs();

    let displaced = click_stats(&state, Some(spec.nominal()), avg, model.p_dc)?;
    let o_scores = (0..displaced.patterns.len())
        .map(|mask| {
            let clicks = mask.count_ones() as f64;
            let sum = n as f64 - 2.0 * clicks;
            sum * sum - n as f64
        })
        .collect();

    let plain = click_stats(&state, None, avg, model.p_dc)?;
    let f = f_coeffs(spec);
    let z_scores = (0..plain.patterns.len())
        .map(|mask| {
            let clicks = mask.count_ones();
            let mut s = if clicks == 0 { params.lambda } else { 0.0 };
            for i in 0..n {
                for j in 0..n {
                    if i != j && mask >> i & 1 == 0 && mask >> j & 1 == 0 {
                        s -= f[(i, j)];
                    }
                }
            }
            if clicks >= 2 {
                s -= pairs + params.mu;
            }
            s
        })
        .collect();

    // the coincidence setting picks its mode uniformly unless only mode 0 is used
    let modes: Vec<usize> = if conventions.sigma_single_mode { vec![0] } else { (0..n).collect() };
    let mut p_cc = 0.0;
    for &m in &modes {
        p_cc += coincidence_after_split(&state, m, model.p_dc)?;
    }
    p_cc /= modes.len() as f64;
    let hit = -pairs * n as f64 * conventions.sigma.local_factor();

    Ok([
        Setting {
            probs: displaced.patterns,
            scores: o_scores,
        },
        Setting {
            probs: plain.patterns,
            scores: z_scores,
        },
        Setting {
            probs: vec![1.0 - p_cc, p_cc],
            scores: vec![0.0, hit],
        },
    ])
}

/// Exact per-trial means and variances of the three settings.
pub fn trial_moments(
    model: &SourceModel,
    params: &WitnessParams,
    spec: &DisplacementSpec,
    conventions: &Conventions,
    avg: &PhaseAveraging,
) -> Result<TrialMoments> {
    let [o, z, s] = settings(model, params, spec, conventions, avg)?;
    let (o_mean, o_var) = o.moments();
    let (z_mean, z_var) = z.moments();
    let (s_mean, s_var) = s.moments();
    Ok(TrialMoments {
        o_mean,
        o_var,
        z_mean,
        z_var,
        s_mean,
        s_var,
    })
}

/// Draws `n`, `m` and `l` independent trials of the displaced, undisplaced
/// and coincidence settings and scores them.
#[allow(clippy::too_many_arguments)]
pub fn sample_trials(
    model: &SourceModel,
    params: &WitnessParams,
    spec: &DisplacementSpec,
    conventions: &Conventions,
    avg: &PhaseAveraging,
    counts: (u64, u64, u64),
    seed: u64,
) -> Result<TrialCounts> {
    let (n, m, l) = counts;
    if n == 0 || m == 0 || l == 0 {
        return Err(Error::invalid("counts", "every setting needs at least one trial"));
    }
    let [o, z, s] = settings(model, params, spec, conventions, avg)?;
    let (o_bar, o_var) = o.sample(n, seed, 0);
    let (z_bar, z_var) = z.sample(m, seed, 1);
    let (s_bar, s_var) = s.sample(l, seed, 2);
    Ok(TrialCounts {
        o_bar,
        z_bar,
        s_bar,
        n,
        m,
        l,
        seed,
        o_var,
        z_var,
        s_var,
    })
}
