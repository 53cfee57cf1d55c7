//! Biseparable bound of the witness.
//!
//! For a bipartition `G1|G2` the largest witness value reachable by product
//! states is the maximum over an angle `a` of the top eigenvalue of an
//! `N x N` matrix. The bound is the maximum over bipartitions, and the
//! worst case over the displacement box.

mod brute;

use std::f64::consts::FRAC_PI_2;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::witness::{fgh, DisplacementSpec, WitnessParams};
use crate::{Error, Result};

pub use brute::{brute_force_bound, relaxed_block, BruteForceOptions};

/// Largest mode count whose bipartitions are enumerated one by one.
pub const DEFAULT_ENUMERATION_GUARD: usize = 24;

const SYMMETRY_TOL: f64 = 1e-12;
const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Split of the modes into `G1` and its complement `G2`. `G1` never
/// contains mode 0, so every unordered split has one representative.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Bipartition {
    n: usize,
    g1: Vec<usize>,
}

impl Bipartition {
    pub fn new(n: usize, mut g1: Vec<usize>) -> Result<Self> {
        g1.sort_unstable();
        g1.dedup();
        if g1.is_empty() || g1.len() >= n {
            return Err(Error::invalid("bipartition", "G1 must be a non-empty proper subset"));
        }
        if g1[0] == 0 {
            return Err(Error::invalid("bipartition", "G1 must not contain mode 0"));
        }
        if *g1.last().unwrap() >= n {
            return Err(Error::invalid("bipartition", "mode index out of range"));
        }
        Ok(Bipartition { n, g1 })
    }

    pub fn modes(&self) -> usize {
        self.n
    }

    pub fn g1(&self) -> &[usize] {
        &self.g1
    }

    pub fn g2(&self) -> Vec<usize> {
        (0..self.n).filter(|m| self.g1.binary_search(m).is_err()).collect()
    }

    fn sort_key(&self) -> (usize, &[usize]) {
        (self.g1.len(), &self.g1)
    }
}

/// Search settings for the bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundOptions {
    /// Grid points on `[0, pi/2]` before refinement.
    pub angle_grid: usize,
    /// Golden-section tolerance in the angle.
    pub angle_tol: f64,
    /// One bipartition per `|G1|` (valid for uniform amplitudes only).
    pub symmetric: bool,
    /// Grid points per fluctuating mode on the displacement box.
    pub box_points: usize,
    /// Up to this many fluctuating modes use the grid; beyond it, corners.
    pub box_grid_modes: usize,
    /// Limit on the number of displacement points visited.
    pub box_point_guard: usize,
    pub enumeration_guard: usize,
}

impl Default for BoundOptions {
    fn default() -> Self {
        BoundOptions {
            angle_grid: 2001,
            angle_tol: 1e-10,
            symmetric: false,
            box_points: 5,
            box_grid_modes: 4,
            box_point_guard: 1 << 16,
            enumeration_guard: DEFAULT_ENUMERATION_GUARD,
        }
    }
}

/// Bound of one bipartition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionBound {
    pub partition: Bipartition,
    pub value: f64,
    pub angle: f64,
    /// Lipschitz-based bound on how far the grid maximum can sit below the
    /// true maximum; refinement only improves on it.
    pub lipschitz_gap: f64,
}

/// Worst-case biseparable bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundResult {
    pub value: f64,
    pub argmax_partition: Bipartition,
    pub argmax_angle: f64,
    pub argmax_alpha: Vec<f64>,
    /// Per-bipartition bounds at `argmax_alpha`.
    pub per_partition: Vec<PartitionBound>,
    /// `"degenerate"`, `"grid"` or `"corners"`.
    pub box_strategy: String,
    pub alpha_points: usize,
    pub lipschitz_gap: f64,
}

/// `B_kk = 2 sum_{i != k} f_i h_k`, `B_kl = 2 g_k g_l`.
pub fn base_matrix(alphas: &[f64]) -> DMatrix<f64> {
    let n = alphas.len();
    let c: Vec<_> = alphas.iter().map(|&a| fgh(a)).collect();
    let f_sum: f64 = c.iter().map(|x| x.0).sum();
    DMatrix::from_fn(n, n, |k, l| {
        if k == l {
            2.0 * (f_sum - c[k].0) * c[k].2
        } else {
            2.0 * c[k].1 * c[l].1
        }
    })
}

fn block_matrix(base: &DMatrix<f64>, params: &WitnessParams, part: &Bipartition, a: f64) -> DMatrix<f64> {
    let order: Vec<usize> = part.g2().into_iter().chain(part.g1().iter().copied()).collect();
    let n2 = part.modes() - part.g1().len();
    let (cs, sn) = (a.cos(), a.sin());
    let n = order.len();
    DMatrix::from_fn(n, n, |r, c| {
        let b = base[(order[r], order[c])];
        let diag = if r == c { 1.0 } else { 0.0 };
        match (r < n2, c < n2) {
            (true, true) => cs * cs * b - params.mu * sn * sn * diag,
            (false, false) => sn * sn * b + params.lambda * cs * cs * diag,
            _ => cs * sn * b,
        }
    })
}

/// The matrix whose top eigenvalue is the product-state optimum at angle `a`;
/// rows are ordered `G2` first, then `G1`.
pub fn build_m(params: &WitnessParams, alphas: &[f64], part: &Bipartition, a: f64) -> Result<DMatrix<f64>> {
    check_inputs(params, alphas, part)?;
    Ok(block_matrix(&base_matrix(alphas), params, part, a))
}

fn check_inputs(params: &WitnessParams, alphas: &[f64], part: &Bipartition) -> Result<()> {
    params.validate()?;
    if alphas.len() != params.n || part.modes() != params.n {
        return Err(Error::invalid("alpha", "amplitudes, bipartition and N disagree"));
    }
    Ok(())
}

/// Largest eigenvalue of a symmetric matrix.
pub fn max_eig(m: &DMatrix<f64>) -> Result<f64> {
    if !m.is_square() || m.nrows() == 0 {
        return Err(Error::invalid("matrix", "must be square and non-empty"));
    }
    let n = m.nrows();
    for r in 0..n {
        for c in (r + 1)..n {
            if (m[(r, c)] - m[(c, r)]).abs() > SYMMETRY_TOL {
                return Err(Error::invalid("matrix", format!("not symmetric at ({r},{c})")));
            }
        }
    }
    if n == 1 {
        return Ok(m[(0, 0)]);
    }
    if n == 2 {
        return Ok(top_of_2x2(m[(0, 0)], m[(0, 1)], m[(1, 1)]));
    }
    Ok(m.symmetric_eigenvalues().iter().cloned().fold(f64::NEG_INFINITY, f64::max))
}

fn top_of_2x2(a: f64, b: f64, d: f64) -> f64 {
    let mean = 0.5 * (a + d);
    let half = 0.5 * (a - d);
    mean + half.hypot(b)
}

/// Angle objective of one bipartition.
enum Objective<'a> {
    Dense {
        base: DMatrix<f64>,
        params: &'a WitnessParams,
        part: &'a Bipartition,
    },
    /// All modes share one amplitude: the matrix has two invariant
    /// subspaces of constant vectors plus two degenerate eigenvalues.
    Uniform { d: f64, e: f64, n1: f64, n2: f64, lambda: f64, mu: f64 },
}

impl<'a> Objective<'a> {
    fn new(params: &'a WitnessParams, alphas: &[f64], part: &'a Bipartition) -> Self {
        if alphas.iter().all(|&x| x == alphas[0]) {
            let (f, g, h) = fgh(alphas[0]);
            let e = 2.0 * g * g;
            let n = params.n as f64;
            Objective::Uniform {
                d: 2.0 * (n - 1.0) * f * h - e,
                e,
                n1: part.g1().len() as f64,
                n2: (part.modes() - part.g1().len()) as f64,
                lambda: params.lambda,
                mu: params.mu,
            }
        } else {
            Objective::Dense {
                base: base_matrix(alphas),
                params,
                part,
            }
        }
    }

    fn eval(&self, a: f64) -> f64 {
        match self {
            Objective::Dense { base, params, part } => {
                max_eig(&block_matrix(base, params, part, a)).expect("block matrix is symmetric")
            }
            &Objective::Uniform { d, e, n1, n2, lambda, mu } => {
                let (c2, s2) = (a.cos().powi(2), a.sin().powi(2));
                let cs = a.cos() * a.sin();
                let mut best = top_of_2x2(
                    c2 * (d + e * n2) - mu * s2,
                    cs * e * (n1 * n2).sqrt(),
                    s2 * (d + e * n1) + lambda * c2,
                );
                if n2 >= 2.0 {
                    best = best.max(c2 * d - mu * s2);
                }
                if n1 >= 2.0 {
                    best = best.max(s2 * d + lambda * c2);
                }
                best
            }
        }
    }
}

/// Top eigenvalue at angle `a`, without the angle search.
pub fn objective(params: &WitnessParams, alphas: &[f64], part: &Bipartition, a: f64) -> Result<f64> {
    check_inputs(params, alphas, part)?;
    Ok(Objective::new(params, alphas, part).eval(a))
}

fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let mut x1 = hi - GOLDEN * (hi - lo);
    let mut x2 = lo + GOLDEN * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + GOLDEN * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - GOLDEN * (hi - lo);
            f1 = f(x1);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Maximum over `a in [0, pi/2]` of the top eigenvalue for one bipartition.
pub fn bound_for_partition(
    params: &WitnessParams,
    alphas: &[f64],
    part: &Bipartition,
    opts: &BoundOptions,
) -> Result<PartitionBound> {
    check_inputs(params, alphas, part)?;
    if opts.angle_grid < 3 {
        return Err(Error::invalid("angle_grid", "at least three points are required"));
    }
    let obj = Objective::new(params, alphas, part);
    let g = opts.angle_grid;
    let step = FRAC_PI_2 / (g - 1) as f64;
    let values: Vec<f64> = (0..g).map(|i| obj.eval(i as f64 * step)).collect();
    let lipschitz = values
        .windows(2)
        .map(|w| (w[1] - w[0]).abs() / step)
        .fold(0.0, f64::max);
    let gap = 0.5 * lipschitz * step;

    let (mut best_i, mut best) = (0, values[0]);
    for (i, &v) in values.iter().enumerate() {
        if v > best {
            best = v;
            best_i = i;
        }
    }
    let mut angle = best_i as f64 * step;
    let threshold = best - 2.0 * gap;
    for i in 0..g {
        let left = if i > 0 { values[i - 1] } else { f64::NEG_INFINITY };
        let right = if i + 1 < g { values[i + 1] } else { f64::NEG_INFINITY };
        if values[i] < left || values[i] < right || values[i] < threshold {
            continue;
        }
        let lo = (i.saturating_sub(1)) as f64 * step;
        let hi = ((i + 1).min(g - 1)) as f64 * step;
        let (a, v) = golden_max(|a| obj.eval(a), lo, hi, opts.angle_tol);
        if v > best {
            best = v;
            angle = a;
        }
    }
    Ok(PartitionBound {
        partition: part.clone(),
        value: best,
        angle,
        lipschitz_gap: gap,
    })
}

/// Canonical bipartitions ordered by `|G1|`, then lexicographically.
pub fn enumerate_bipartitions(n: usize, symmetric: bool, guard: usize) -> Result<Vec<Bipartition>> {
    if n < 2 {
        return Err(Error::invalid("N", "at least two parties are required"));
    }
    if symmetric {
        return (1..=n / 2)
            .map(|k| Bipartition::new(n, (1..=k).collect()))
            .collect();
    }
    if n > guard || n > 62 {
        return Err(Error::DimensionGuard {
            what: "modes for bipartition enumeration",
            value: n,
            limit: guard.min(62),
        });
    }
    let mut out = Vec::with_capacity((1usize << (n - 1)) - 1);
    // G1 ranges over non-empty subsets of modes 1..n
    for mask in 1u64..(1u64 << (n - 1)) {
        let g1: Vec<usize> = (0..n - 1).filter(|b| mask >> b & 1 == 1).map(|b| b + 1).collect();
        if g1.len() < n {
            out.push(Bipartition { n, g1 });
        }
    }
    out.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    Ok(out)
}

fn tie_key(p: &PartitionBound) -> (usize, &[usize], f64) {
    (p.partition.g1().len(), p.partition.g1(), p.angle)
}

fn better(a: &PartitionBound, b: &PartitionBound) -> bool {
    a.value > b.value
        || (a.value == b.value && tie_key(a).partial_cmp(&tie_key(b)) == Some(std::cmp::Ordering::Less))
}

/// Bound at fixed amplitudes over all bipartitions.
pub fn bound_at(params: &WitnessParams, alphas: &[f64], opts: &BoundOptions) -> Result<Vec<PartitionBound>> {
    params.validate()?;
    if alphas.len() != params.n {
        return Err(Error::invalid("alpha", format!("expected {} amplitudes", params.n)));
    }
    if opts.symmetric && alphas.iter().any(|&a| a != alphas[0]) {
        return Err(Error::invalid(
            "symmetric_bipartitions",
            "the symmetric reduction needs one common displacement amplitude",
        ));
    }
    let parts = enumerate_bipartitions(params.n, opts.symmetric, opts.enumeration_guard)?;
    parts
        .par_iter()
        .map(|p| bound_for_partition(params, alphas, p, opts))
        .collect()
}

fn reduce(per: &[PartitionBound]) -> &PartitionBound {
    let mut best = &per[0];
    for p in &per[1..] {
        if better(p, best) {
            best = p;
        }
    }
    best
}

fn box_points(spec: &DisplacementSpec, opts: &BoundOptions) -> Result<(Vec<Vec<f64>>, &'static str)> {
    let fluct = spec.fluctuating_modes();
    if fluct.is_empty() {
        return Ok((vec![spec.nominal().to_vec()], "degenerate"));
    }
    let (per_mode, strategy) = if fluct.len() <= opts.box_grid_modes {
        (opts.box_points.max(2), "grid")
    } else {
        (2, "corners")
    };
    let count = (per_mode as f64).powi(fluct.len() as i32);
    if count > opts.box_point_guard as f64 {
        return Err(Error::DimensionGuard {
            what: "displacement box points",
            value: count.min(usize::MAX as f64) as usize,
            limit: opts.box_point_guard,
        });
    }
    let levels: Vec<Vec<f64>> = fluct
        .iter()
        .map(|&m| {
            let (lo, hi) = (spec.min()[m], spec.max()[m]);
            (0..per_mode)
                .map(|j| lo + (hi - lo) * j as f64 / (per_mode - 1) as f64)
                .collect()
        })
        .collect();
    let mut points = Vec::with_capacity(count as usize);
    let mut digits = vec![0usize; fluct.len()];
    loop {
        let mut alpha = spec.nominal().to_vec();
        for (d, &m) in fluct.iter().enumerate() {
            alpha[m] = levels[d][digits[d]];
        }
        points.push(alpha);
        let mut pos = 0;
        loop {
            if pos == digits.len() {
                if !points.iter().any(|p| p.as_slice() == spec.nominal()) {
                    points.push(spec.nominal().to_vec());
                }
                return Ok((points, strategy));
            }
            digits[pos] += 1;
            if digits[pos] < per_mode {
                break;
            }
            digits[pos] = 0;
            pos += 1;
        }
    }
}

/// Largest bound over bipartitions and over points of the displacement box.
pub fn worst_case_bound(params: &WitnessParams, spec: &DisplacementSpec, opts: &BoundOptions) -> Result<BoundResult> {
    params.validate()?;
    if spec.modes() != params.n {
        return Err(Error::invalid("alpha", format!("expected {} amplitudes", params.n)));
    }
    let (points, strategy) = box_points(spec, opts)?;
    let mut best: Option<(Vec<PartitionBound>, usize)> = None;
    for (idx, alpha) in points.iter().enumerate() {
        let per = bound_at(params, alpha, opts)?;
        let replace = match &best {
            None => true,
            Some((b, _)) => reduce(&per).value > reduce(b).value,
        };
        if replace {
            best = Some((per, idx));
        }
    }
    let (per, idx) = best.expect("at least one displacement point");
    let top = reduce(&per).clone();
    let gap = per.iter().map(|p| p.lipschitz_gap).fold(0.0, f64::max);
    Ok(BoundResult {
        value: top.value,
        argmax_partition: top.partition,
        argmax_angle: top.angle,
        argmax_alpha: points[idx].clone(),
        per_partition: per,
        box_strategy: strategy.to_string(),
        alpha_points: points.len(),
        lipschitz_gap: gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SQRT_LN2: f64 = 0.832_554_611_157_697_7;

    fn params(n: usize, l: f64, m: f64) -> WitnessParams {
        WitnessParams::new(n, l, m).unwrap()
    }

    #[test]
    fn build_m_special_cases() {
        let p = params(2, 2.73, 5.0);
        let part = Bipartition::new(2, vec![1]).unwrap();
        let m = build_m(&p, &[0.0, 0.0], &part, 0.0).unwrap();
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[-2.0, 0.0, 0.0, 2.73]));
        let m = build_m(&p, &[0.0, 0.0], &part, FRAC_PI_2).unwrap();
        assert!((m[(0, 0)] + 5.0).abs() < 1e-12 && (m[(1, 1)] + 2.0).abs() < 1e-12);
        let b = base_matrix(&[SQRT_LN2; 5]);
        assert!(b[(2, 2)].abs() < 1e-15 && (b[(1, 3)] - 2.0 * 2f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn max_eig_small_cases() {
        let m = DMatrix::from_row_slice(2, 2, &[-2.0, 0.0, 0.0, 2.73]);
        assert!((max_eig(&m).unwrap() - 2.73).abs() < 1e-15);
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!((max_eig(&m).unwrap() - 1.0).abs() < 1e-15);
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.5, 0.0]);
        assert!(max_eig(&m).is_err());
    }

    #[test]
    fn no_displacement_gives_lambda() {
        let p = params(4, 2.73, 102.0);
        for part in enumerate_bipartitions(4, false, 24).unwrap() {
            let b = bound_for_partition(&p, &[0.0; 4], &part, &BoundOptions::default()).unwrap();
            assert!((b.value - 2.73).abs() < 1e-12);
            assert!(b.angle.abs() < 1e-9);
        }
    }

    #[test]
    fn enumeration_counts() {
        assert_eq!(enumerate_bipartitions(4, false, 24).unwrap().len(), 7);
        assert_eq!(enumerate_bipartitions(4, true, 24).unwrap().len(), 2);
        assert_eq!(enumerate_bipartitions(8, true, 24).unwrap().len(), 4);
        assert_eq!(enumerate_bipartitions(10, false, 24).unwrap().len(), 511);
        assert!(matches!(
            enumerate_bipartitions(25, false, 24),
            Err(Error::DimensionGuard { .. })
        ));
        assert_eq!(enumerate_bipartitions(40, true, 24).unwrap().len(), 20);
        let parts = enumerate_bipartitions(5, false, 24).unwrap();
        assert!(parts.iter().all(|p| !p.g1().contains(&0)));
    }

    #[test]
    fn uniform_closed_form_matches_dense() {
        let p = params(6, 3.1, 40.0);
        let alphas = [0.83; 6];
        for part in enumerate_bipartitions(6, false, 24).unwrap() {
            let base = base_matrix(&alphas);
            for k in 0..25 {
                let a = k as f64 * 0.07;
                let dense = max_eig(&block_matrix(&base, &p, &part, a)).unwrap();
                let closed = objective(&p, &alphas, &part, a).unwrap();
                assert!((dense - closed).abs() < 1e-10, "{part:?} a={a}");
            }
        }
    }

    #[test]
    fn degenerate_box_matches_nominal() {
        let p = params(4, 2.73, 102.0);
        let spec = DisplacementSpec::uniform(4, 0.83).unwrap();
        let r = worst_case_bound(&p, &spec, &BoundOptions::default()).unwrap();
        let per = bound_at(&p, &[0.83; 4], &BoundOptions::default()).unwrap();
        assert_eq!(r.value, reduce(&per).value);
        assert_eq!(r.box_strategy, "degenerate");
    }

    #[test]
    fn symmetric_reduction_requires_uniform_alpha() {
        let p = params(3, 1.0, 1.0);
        let opts = BoundOptions {
            symmetric: true,
            ..Default::default()
        };
        assert!(bound_at(&p, &[0.8, 0.9, 0.8], &opts).is_err());
    }
}
