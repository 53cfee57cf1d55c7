#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pathwit_core::{Basis, TruncatedState};

pub const SQRT_LN2: f64 = 0.832_554_611_157_697_7;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Random mixed state `G G^dag / tr` of rank `rank` restricted to the basis
/// indices in `support`.
pub fn random_state_on(basis: Arc<Basis>, support: &[usize], rank: usize, r: &mut ChaCha8Rng) -> TruncatedState {
    let d = basis.dim();
    let mut g = DMatrix::<Complex64>::zeros(d, rank);
    for &i in support {
        for k in 0..rank {
            g[(i, k)] = Complex64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0));
        }
    }
    let mut rho = &g * g.adjoint();
    let tr: f64 = (0..d).map(|i| rho[(i, i)].re).sum();
    rho /= c(tr);
    TruncatedState::from_matrix(basis, rho).unwrap()
}

pub fn random_state(modes: usize, n_max: usize, rank: usize, seed: u64) -> TruncatedState {
    let basis = Arc::new(Basis::new(modes, n_max).unwrap());
    let all: Vec<usize> = (0..basis.dim()).collect();
    random_state_on(basis, &all, rank, &mut rng(seed))
}

/// Random state on `{vac, 1_0, ..., 1_{N-1}}` embedded in the `n_max = 1`
/// basis.
pub fn random_single_excitation(modes: usize, rank: usize, seed: u64) -> TruncatedState {
    let basis = Arc::new(Basis::new(modes, 1).unwrap());
    let support: Vec<usize> = std::iter::once(basis.vacuum())
        .chain((0..modes).map(|m| basis.single_photon(m).unwrap()))
        .collect();
    random_state_on(basis, &support, rank, &mut rng(seed))
}

/// `D(beta) = exp(beta a^dag - beta* a)` on a single mode cut at `dim`.
pub fn displacement(beta: Complex64, dim: usize) -> DMatrix<Complex64> {
    let mut gen = DMatrix::<Complex64>::zeros(dim, dim);
    for n in 0..dim - 1 {
        let s = ((n + 1) as f64).sqrt();
        gen[(n + 1, n)] = beta * s;
        gen[(n, n + 1)] = -beta.conj() * s;
    }
    gen.exp()
}

/// Number of eigenvalues of the symmetric `a` below `x`, from the signs of
/// the pivots of `a - x I`.
pub fn count_below(a: &DMatrix<f64>, x: f64) -> usize {
    let n = a.nrows();
    let mut m = a.clone();
    for i in 0..n {
        m[(i, i)] -= x;
    }
    let mut neg = 0;
    for k in 0..n {
        let mut p = m[(k, k)];
        if p == 0.0 {
            p = -1e-300;
        }
        if p < 0.0 {
            neg += 1;
        }
        for i in k + 1..n {
            let l = m[(i, k)] / p;
            for j in k + 1..n {
                m[(i, j)] -= l * m[(k, j)];
            }
        }
    }
    neg
}

/// Largest eigenvalue of a symmetric matrix by bisection on the inertia.
pub fn top_eig_bisect(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let r = a.iter().map(|v| v.abs()).sum::<f64>() + 1.0;
    let (mut lo, mut hi) = (-r, r);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if count_below(a, mid) == n {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Pattern probabilities from no-click probabilities indexed by silent mask.
pub fn patterns_from_noclick(noclick: &[f64], modes: usize) -> Vec<f64> {
    let full = (1usize << modes) - 1;
    (0..=full)
        .map(|clicks| {
            let silent = full & !clicks;
            // inclusion-exclusion over the clicking modes
            let mut acc = 0.0;
            let mut sub = clicks;
            loop {
                let sign = if sub.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
                acc += sign * noclick[silent | sub];
                if sub == 0 {
                    break;
                }
                sub = (sub - 1) & clicks;
            }
            acc
        })
        .collect()
}

pub fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}
