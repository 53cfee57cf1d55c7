//! Dense operator representations on a truncated basis, used to cross-check
//! the click-statistics path and to build oracles.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::fgh;
use crate::fock::{Basis, TruncatedState};

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// `<k|-beta>` for a complex amplitude.
fn shifted_overlap(k: usize, beta: Complex64) -> Complex64 {
    let mut acc = c((-0.5 * beta.norm_sqr()).exp());
    for j in 1..=k {
        acc *= -beta / (j as f64).sqrt();
    }
    acc
}

/// Compression of the no-click element of `mode` onto the basis, for
/// displacement `beta`.
pub fn noclick_element(basis: &Basis, mode: usize, beta: Complex64) -> DMatrix<Complex64> {
    let dim = basis.dim();
    let n = basis.modes();
    DMatrix::from_fn(dim, dim, |r, col| {
        let (tr, tc) = (basis.tuple(r), basis.tuple(col));
        if (0..n).any(|m| m != mode && tr.get(m) != tc.get(m)) {
            return c(0.0);
        }
        shifted_overlap(tr.get(mode), beta) * shifted_overlap(tc.get(mode), beta).conj()
    })
}

/// `sigma = 2 E_0 - 1` on one mode.
pub fn sigma_matrix(basis: &Basis, mode: usize, beta: Complex64) -> DMatrix<Complex64> {
    noclick_element(basis, mode, beta) * c(2.0) - DMatrix::identity(basis.dim(), basis.dim())
}

/// Phase-averaged global observable `sum_{i != j} sigma_i sigma_j` with
/// `points` uniform phases (or a single phase when `points == 1`),
/// compressed onto `basis`.
///
/// The products are formed on a basis with twice the cutoff so that every
/// intermediate tuple is represented and the compression is exact.
pub fn o_operator(basis: &Basis, alphas: &[f64], points: usize) -> DMatrix<Complex64> {
    let n = basis.modes();
    let aux = Basis::new(n, 2 * basis.n_max()).expect("auxiliary basis within guard");
    let embed: Vec<usize> = basis
        .tuples()
        .iter()
        .map(|t| aux.index_of(t.as_slice()).unwrap())
        .collect();
    let dim = basis.dim();
    let mut acc = DMatrix::zeros(dim, dim);
    for q in 0..points {
        let rot = Complex64::from_polar(1.0, 2.0 * PI * q as f64 / points as f64);
        let sig: Vec<_> = (0..n).map(|m| sigma_matrix(&aux, m, rot * alphas[m])).collect();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let prod = &sig[i] * &sig[j];
                    for (r, &ar) in embed.iter().enumerate() {
                        for (col, &ac) in embed.iter().enumerate() {
                            acc[(r, col)] += prod[(ar, ac)];
                        }
                    }
                }
            }
        }
    }
    acc / c(points as f64)
}

fn diagonal(basis: &Basis, value: impl Fn(usize) -> f64) -> DMatrix<Complex64> {
    let dim = basis.dim();
    DMatrix::from_fn(dim, dim, |r, col| if r == col { c(value(r)) } else { c(0.0) })
}

/// Projector on total photon number two or more.
pub fn pi_ge2(basis: &Basis) -> DMatrix<Complex64> {
    diagonal(basis, |r| (basis.tuple(r).total() >= 2) as u8 as f64)
}

/// Projector on tuples that fire two or more undisplaced detectors.
pub fn e_ge2(basis: &Basis) -> DMatrix<Complex64> {
    diagonal(basis, |r| (basis.occupied(r).len() >= 2) as u8 as f64)
}

/// The vacuum/one-photon operator `lambda |vac><vac| - sum_{i != j} f_i f_j
/// (|vac><vac| + sum_{k != i,j} |1_k><1_k|)`.
pub fn m_operator(basis: &Basis, lambda: f64, alphas: &[f64]) -> DMatrix<Complex64> {
    let n = basis.modes();
    let f: Vec<f64> = alphas.iter().map(|&a| fgh(a).0).collect();
    diagonal(basis, |r| {
        let t = basis.tuple(r);
        match t.total() {
            0 => {
                let mut acc = lambda;
                for i in 0..n {
                    for j in 0..n {
                        if i != j {
                            acc -= f[i] * f[j];
                        }
                    }
                }
                acc
            }
            1 => {
                let k = basis.occupied(r)[0].0;
                let mut acc = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        if i != j && i != k && j != k {
                            acc -= f[i] * f[j];
                        }
                    }
                }
                acc
            }
            _ => 0.0,
        }
    })
}

/// Full witness operator `O + M - N(N-1) Pi_{>=2} - mu E_{>=2}`.
pub fn witness_operator(basis: &Basis, lambda: f64, mu: f64, alphas: &[f64], points: usize) -> DMatrix<Complex64> {
    let n = basis.modes() as f64;
    o_operator(basis, alphas, points) + m_operator(basis, lambda, alphas)
        - pi_ge2(basis) * c(n * (n - 1.0))
        - e_ge2(basis) * c(mu)
}

/// Diagonal operator whose expectation is the undisplaced score without dark
/// counts, given worst-case coefficients `f_box`:
/// `lambda |vac><vac| - sum F_ij |00><00|_ij - (N(N-1) + mu) E_{>=2}`.
pub fn z_operator(basis: &Basis, lambda: f64, mu: f64, f_box: &DMatrix<f64>) -> DMatrix<Complex64> {
    let n = basis.modes();
    diagonal(basis, |r| {
        let t = basis.tuple(r);
        let mut acc = if t.total() == 0 { lambda } else { 0.0 };
        for i in 0..n {
            for j in 0..n {
                if i != j && t.get(i) == 0 && t.get(j) == 0 {
                    acc -= f_box[(i, j)];
                }
            }
        }
        if basis.occupied(r).len() >= 2 {
            acc -= (n * (n - 1)) as f64 + mu;
        }
        acc
    })
}

/// `tr(A rho)`, real part.
pub fn expectation(op: &DMatrix<Complex64>, state: &TruncatedState) -> f64 {
    (op * state.matrix()).trace().re
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::PhaseAveraging;
    use crate::witness::{expected_o, o_restricted};

    #[test]
    fn dense_o_matches_click_path_on_w_state() {
        let w = TruncatedState::w_state(3, 2).unwrap();
        let al = [0.7, 0.83, 1.0];
        let dense = expectation(&o_operator(w.basis(), &al, 5), &w);
        let clicks = expected_o(&w, &al, &PhaseAveraging::exact(2), 0.0).unwrap();
        assert!((dense - clicks).abs() < 1e-12);
    }

    #[test]
    fn dense_o_restricted_block() {
        let basis = Basis::new(3, 1).unwrap();
        let al = [0.4, 0.83, 1.3];
        let op = o_operator(&basis, &al, 3);
        let m = o_restricted(&al);
        let idx = |k: usize| if k == 0 { 0 } else { basis.single_photon(k - 1).unwrap() };
        for a in 0..4 {
            for b in 0..4 {
                assert!((op[(idx(a), idx(b))].re - m[(a, b)]).abs() < 1e-12, "({a},{b})");
            }
        }
    }
}
