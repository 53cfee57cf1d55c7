use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Bipartition;
use crate::fock::Basis;
use crate::witness::dense::{m_operator, o_operator};
use crate::witness::WitnessParams;
use crate::{Error, Result};

/// Settings of the product-state search.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BruteForceOptions {
    pub restarts: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub max_modes: usize,
}

impl Default for BruteForceOptions {
    fn default() -> Self {
        BruteForceOptions {
            restarts: 200,
            tol: 1e-12,
            max_iter: 20_000,
            seed: 0x5eed,
            max_modes: 8,
        }
    }
}

/// Witness operator on the sector with at most one photon, in the basis
/// `{|vac>, |1_0>, ..., |1_{N-1}>}`, assembled from the dense operators.
pub fn relaxed_block(params: &WitnessParams, alphas: &[f64]) -> Result<DMatrix<f64>> {
    let basis = Basis::new(params.n, 1)?;
    let points = 3;
    let op = o_operator(&basis, alphas, points) + m_operator(&basis, params.lambda, alphas);
    let idx: Vec<usize> = std::iter::once(basis.vacuum())
        .chain((0..params.n).map(|m| basis.single_photon(m).unwrap()))
        .collect();
    Ok(DMatrix::from_fn(params.n + 1, params.n + 1, |r, c| op[(idx[r], idx[c])].re))
}

fn top_vector(q: &DMatrix<f64>) -> DVector<f64> {
    let eig = SymmetricEigen::new(q.clone());
    let mut best = 0;
    for i in 1..eig.eigenvalues.len() {
        if eig.eigenvalues[i] > eig.eigenvalues[best] {
            best = i;
        }
    }
    eig.eigenvectors.column(best).into_owned()
}

struct Problem {
    a: DMatrix<f64>,
    mu: f64,
    g1: Vec<usize>,
    g2: Vec<usize>,
}

impl Problem {
    /// Quadratic form in the coefficients of the first group given the
    /// second group's vector, or vice versa (`first = false`).
    fn reduced(&self, other: &DVector<f64>, first: bool) -> DMatrix<f64> {
        let (own, foreign) = if first { (&self.g1, &self.g2) } else { (&self.g2, &self.g1) };
        let n = self.a.nrows();
        let mut l = DMatrix::zeros(n, own.len() + 1);
        l[(0, 0)] = other[0];
        for (p, &k) in own.iter().enumerate() {
            l[(1 + k, 1 + p)] = other[0];
        }
        for (q, &k) in foreign.iter().enumerate() {
            l[(1 + k, 0)] = other[1 + q];
        }
        let mut q = l.transpose() * &self.a * l;
        let foreign_weight: f64 = other.iter().skip(1).map(|x| x * x).sum();
        for p in 0..own.len() {
            q[(1 + p, 1 + p)] -= self.mu * foreign_weight;
        }
        q
    }

    fn value(&self, v: &DVector<f64>, u: &DVector<f64>) -> f64 {
        let q = self.reduced(u, true);
        (v.transpose() * q * v)[(0, 0)]
    }
}

/// Largest witness value over product states `|psi_1>_{G1} |psi_2>_{G2}`,
/// each with at most one photon, by alternating top-eigenvector ascent from
/// random starting points.
pub fn brute_force_bound(
    params: &WitnessParams,
    alphas: &[f64],
    part: &Bipartition,
    opts: &BruteForceOptions,
) -> Result<f64> {
    params.validate()?;
    if params.n > opts.max_modes {
        return Err(Error::DimensionGuard {
            what: "modes for the brute-force bound",
            value: params.n,
            limit: opts.max_modes,
        });
    }
    if alphas.len() != params.n || part.modes() != params.n {
        return Err(Error::invalid("alpha", "amplitudes, bipartition and N disagree"));
    }
    let prob = Problem {
        a: relaxed_block(params, alphas)?,
        mu: params.mu,
        g1: part.g1().to_vec(),
        g2: part.g2(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best = f64::NEG_INFINITY;
    for restart in 0..=opts.restarts {
        let mut u = if restart == 0 {
            let mut u = DVector::zeros(prob.g2.len() + 1);
            u[0] = 1.0;
            u
        } else {
            let u = DVector::from_fn(prob.g2.len() + 1, |_, _| rng.gen_range(-1.0..1.0));
            u.normalize()
        };
        let mut v = top_vector(&prob.reduced(&u, true));
        let mut current = prob.value(&v, &u);
        for _ in 0..opts.max_iter {
            u = top_vector(&prob.reduced(&v, false));
            v = top_vector(&prob.reduced(&u, true));
            let next = prob.value(&v, &u);
            let done = (next - current).abs() <= opts.tol * current.abs().max(1.0);
            current = next;
            if done {
                break;
            }
        }
        best = best.max(current);
    }
    Ok(best)
}
