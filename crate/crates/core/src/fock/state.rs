use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::basis::Basis;
use crate::{Error, Result};

const HERMITIAN_TOL: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;

/// Density operator of `modes` bosonic modes in the occupation-number basis
/// truncated at total photon number `n_max`.
#[derive(Clone, Debug)]
pub struct TruncatedState {
    basis: Arc<Basis>,
    rho: DMatrix<Complex64>,
}

impl TruncatedState {
    /// Builds a state from a density matrix, checking hermiticity, unit trace
    /// and positivity.
    pub fn from_matrix(basis: Arc<Basis>, rho: DMatrix<Complex64>) -> Result<Self> {
        if rho.nrows() != basis.dim() || rho.ncols() != basis.dim() {
            return Err(Error::invalid(
                "density matrix",
                format!(
                    "shape {}x{} does not match basis dimension {}",
                    rho.nrows(),
                    rho.ncols(),
                    basis.dim()
                ),
            ));
        }
        let state = TruncatedState { basis, rho };
        state.validate()?;
        Ok(state)
    }

    /// Pure state `|psi><psi|` from (not necessarily normalized) amplitudes.
    pub fn from_pure(basis: Arc<Basis>, amplitudes: &[Complex64]) -> Result<Self> {
        if amplitudes.len() != basis.dim() {
            return Err(Error::invalid("amplitudes", "length differs from basis dimension"));
        }
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(Error::invalid("amplitudes", "zero vector"));
        }
        let dim = basis.dim();
        let rho = DMatrix::from_fn(dim, dim, |r, c| {
            amplitudes[r] * amplitudes[c].conj() / (norm * norm)
        });
        Ok(TruncatedState { basis, rho })
    }

    /// Diagonal state with the given weight on each basis tuple.
    pub fn from_diagonal(basis: Arc<Basis>, weights: &[f64]) -> Result<Self> {
        if weights.len() != basis.dim() {
            return Err(Error::invalid("weights", "length differs from basis dimension"));
        }
        let rho = DMatrix::from_fn(basis.dim(), basis.dim(), |r, c| {
            if r == c {
                Complex64::new(weights[r], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        Self::from_matrix(basis, rho)
    }

    pub fn vacuum(modes: usize, n_max: usize) -> Result<Self> {
        let basis = Arc::new(Basis::new(modes, n_max)?);
        let mut rho = DMatrix::zeros(basis.dim(), basis.dim());
        rho[(0, 0)] = Complex64::new(1.0, 0.0);
        Ok(TruncatedState { basis, rho })
    }

    /// Single-mode Fock state `|n><n|` in a space truncated at `n_max`.
    pub fn fock(n: usize, n_max: usize) -> Result<Self> {
        if n > n_max {
            return Err(Error::invalid("n", format!("{n} exceeds the cutoff {n_max}")));
        }
        let basis = Arc::new(Basis::new(1, n_max)?);
        let mut rho = DMatrix::zeros(basis.dim(), basis.dim());
        rho[(n, n)] = Complex64::new(1.0, 0.0);
        Ok(TruncatedState { basis, rho })
    }

    /// The W state: one photon shared with equal amplitudes by `modes` modes.
    pub fn w_state(modes: usize, n_max: usize) -> Result<Self> {
        if n_max == 0 {
            return Err(Error::invalid("n_max", "a W state needs n_max >= 1"));
        }
        let basis = Arc::new(Basis::new(modes, n_max)?);
        let mut amps = vec![Complex64::new(0.0, 0.0); basis.dim()];
        for m in 0..modes {
            amps[basis.single_photon(m).unwrap()] = Complex64::new(1.0, 0.0);
        }
        Self::from_pure(basis, &amps)
    }

    /// Convex combination of states on the same basis.
    pub fn mixture(parts: &[(f64, &TruncatedState)]) -> Result<Self> {
        let (_, first) = parts
            .first()
            .ok_or_else(|| Error::invalid("mixture", "no components"))?;
        let total: f64 = parts.iter().map(|(w, _)| w).sum();
        if parts.iter().any(|(w, _)| *w < 0.0) || (total - 1.0).abs() > TRACE_TOL {
            return Err(Error::invalid("mixture", "weights must be non-negative and sum to one"));
        }
        let mut rho = DMatrix::zeros(first.dim(), first.dim());
        for (w, s) in parts {
            if *s.basis != *first.basis {
                return Err(Error::invalid("mixture", "components live on different bases"));
            }
            rho += &s.rho * Complex64::new(*w, 0.0);
        }
        Ok(TruncatedState {
            basis: first.basis.clone(),
            rho,
        })
    }

    pub fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }

    pub fn modes(&self) -> usize {
        self.basis.modes()
    }

    pub fn n_max(&self) -> usize {
        self.basis.n_max()
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.rho
    }

    pub fn trace(&self) -> f64 {
        self.rho.diagonal().iter().map(|z| z.re).sum()
    }

    /// Diagonal entry for tuple `idx`.
    pub fn population(&self, idx: usize) -> f64 {
        self.rho[(idx, idx)].re
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.dim();
        for r in 0..dim {
            for c in r..dim {
                let d = (self.rho[(r, c)] - self.rho[(c, r)].conj()).norm();
                if d > HERMITIAN_TOL {
                    return Err(Error::invalid(
                        "density matrix",
                        format!("not Hermitian at ({r},{c}), deviation {d:e}"),
                    ));
                }
            }
        }
        let tr = self.trace();
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(Error::invalid("density matrix", format!("trace {tr} != 1")));
        }
        let herm = (&self.rho + self.rho.adjoint()) * Complex64::new(0.5, 0.0);
        let min_eig = herm
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if min_eig < -PSD_TOL {
            return Err(Error::invalid(
                "density matrix",
                format!("not positive semidefinite, smallest eigenvalue {min_eig:e}"),
            ));
        }
        Ok(())
    }

    /// Probability of each total photon number `0..=n_max`.
    pub fn photon_number_distribution(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.n_max() + 1];
        for (i, t) in self.basis.tuples().iter().enumerate() {
            p[t.total()] += self.rho[(i, i)].re;
        }
        p
    }

    /// Largest element-wise deviation from another state on the same basis.
    pub fn max_abs_diff(&self, other: &TruncatedState) -> f64 {
        assert_eq!(*self.basis, *other.basis, "states live on different bases");
        self.rho
            .iter()
            .zip(other.rho.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Independent binomial photon loss on each mode; `eta[i]` is the
    /// transmission of mode `i`.
    pub fn apply_loss(&self, eta: &[f64]) -> Result<Self> {
        if eta.len() != self.modes() {
            return Err(Error::invalid("eta", "one transmission per mode is required"));
        }
        for (i, &e) in eta.iter().enumerate() {
            if !(0.0..=1.0).contains(&e) {
                return Err(Error::invalid(format!("eta[{i}]"), format!("{e} is outside [0, 1]")));
            }
        }
        let mut rho = self.rho.clone();
        for (mode, &e) in eta.iter().enumerate() {
            if e == 1.0 {
                continue;
            }
            rho = loss_one_mode(&self.basis, &rho, mode, e);
        }
        Ok(TruncatedState {
            basis: self.basis.clone(),
            rho,
        })
    }

    /// Same transmission on every mode.
    pub fn apply_uniform_loss(&self, eta: f64) -> Result<Self> {
        self.apply_loss(&vec![eta; self.modes()])
    }

    /// Sends a single-mode state into a linear splitter with real output
    /// amplitudes, `a^dag -> sum_i t_i a_i^dag`. The amplitudes must be
    /// normalized.
    pub fn split(&self, amplitudes: &[f64]) -> Result<Self> {
        if self.modes() != 1 {
            return Err(Error::invalid("state", "splitter input must be a single mode"));
        }
        if amplitudes.is_empty() {
            return Err(Error::invalid("amplitudes", "at least one output mode is required"));
        }
        let norm: f64 = amplitudes.iter().map(|t| t * t).sum();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("amplitudes", format!("squared norm {norm} != 1")));
        }
        let n_max = self.n_max();
        let out = Arc::new(Basis::new(amplitudes.len(), n_max)?);

        // isometry column n: image of |n> = (a^dag)^n / sqrt(n!) |0>
        let ln_fact: Vec<f64> = (0..=n_max).map(ln_factorial).collect();
        let mut iso = DMatrix::<f64>::zeros(out.dim(), n_max + 1);
        for (r, t) in out.tuples().iter().enumerate() {
            let n = t.total();
            let mut amp = 0.5 * ln_fact[n];
            let mut sign = 1.0;
            let mut zero = false;
            for &(m, k) in out.occupied(r) {
                let tm = amplitudes[m];
                if tm == 0.0 {
                    zero = true;
                    break;
                }
                amp += k as f64 * tm.abs().ln() - 0.5 * ln_fact[k as usize];
                if tm < 0.0 && k % 2 == 1 {
                    sign = -sign;
                }
            }
            if !zero {
                iso[(r, n)] = sign * amp.exp();
            }
        }
        let iso_c = iso.map(|x| Complex64::new(x, 0.0));
        let rho = &iso_c * &self.rho * iso_c.transpose();
        Ok(TruncatedState { basis: out, rho })
    }

    /// Balanced `n`-port splitter with zero phases.
    pub fn split_balanced(&self, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("N", "splitter needs at least one output"));
        }
        self.split(&vec![1.0 / (n as f64).sqrt(); n])
    }

    /// Reduced state on the modes in `keep` (in the given order).
    pub fn partial_trace(&self, keep: &[usize]) -> Result<Self> {
        if keep.is_empty() {
            return Err(Error::invalid("keep", "at least one mode must be kept"));
        }
        let mut seen = vec![false; self.modes()];
        for &m in keep {
            if m >= self.modes() || seen[m] {
                return Err(Error::invalid("keep", format!("mode {m} is out of range or repeated")));
            }
            seen[m] = true;
        }
        let out = Arc::new(Basis::new(keep.len(), self.n_max())?);

        let mut sig_ids: HashMap<Vec<u8>, usize> = HashMap::new();
        let mut kept_idx = Vec::with_capacity(self.dim());
        let mut sig = Vec::with_capacity(self.dim());
        for t in self.basis.tuples() {
            let occ = t.as_slice();
            let kept: Vec<u8> = keep.iter().map(|&m| occ[m]).collect();
            kept_idx.push(out.index_of(&kept).expect("reduced tuple within cutoff"));
            let traced: Vec<u8> = (0..occ.len()).filter(|&m| !seen[m]).map(|m| occ[m]).collect();
            let next = sig_ids.len();
            sig.push(*sig_ids.entry(traced).or_insert(next));
        }

        let mut rho = DMatrix::zeros(out.dim(), out.dim());
        for c in 0..self.dim() {
            for r in 0..self.dim() {
                if sig[r] == sig[c] {
                    rho[(kept_idx[r], kept_idx[c])] += self.rho[(r, c)];
                }
            }
        }
        Ok(TruncatedState { basis: out, rho })
    }
}

fn loss_one_mode(
    basis: &Basis,
    rho: &DMatrix<Complex64>,
    mode: usize,
    eta: f64,
) -> DMatrix<Complex64> {
    let dim = basis.dim();
    let sqrt_eta = eta.sqrt();
    let mut out = DMatrix::zeros(dim, dim);
    let occ_in = |idx: usize| {
        basis
            .occupied(idx)
            .iter()
            .find(|(m, _)| *m == mode)
            .map_or(0usize, |&(_, k)| k as usize)
    };
    for c in 0..dim {
        let nc = occ_in(c);
        for r in 0..dim {
            let v = rho[(r, c)];
            if v.re == 0.0 && v.im == 0.0 {
                continue;
            }
            let nr = occ_in(r);
            let (mut rr, mut cc) = (r, c);
            for k in 0..=nr.min(nc) {
                let coef = (binom(nr, k) * binom(nc, k)).sqrt()
                    * sqrt_eta.powi((nr + nc - 2 * k) as i32)
                    * (1.0 - eta).powi(k as i32);
                out[(rr, cc)] += v * coef;
                if k < nr.min(nc) {
                    rr = basis.lower(rr, mode).unwrap();
                    cc = basis.lower(cc, mode).unwrap();
                }
            }
        }
    }
    out
}

pub(crate) fn binom(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let mut acc = 1.0;
    for i in 0..k {
        acc *= (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

pub(crate) fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|i| (i as f64).ln()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn single_photon_loss() {
        let s = TruncatedState::fock(1, 2).unwrap().apply_loss(&[0.3]).unwrap();
        assert!((s.population(1) - 0.3).abs() < 1e-15);
        assert!((s.population(0) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn two_photon_loss_is_binomial() {
        for &eta in &[0.0, 0.1, 0.5, 0.77, 1.0] {
            let s = TruncatedState::fock(2, 2).unwrap().apply_loss(&[eta]).unwrap();
            assert!((s.population(2) - eta * eta).abs() < 1e-15);
            assert!((s.population(1) - 2.0 * eta * (1.0 - eta)).abs() < 1e-15);
            assert!((s.population(0) - (1.0 - eta).powi(2)).abs() < 1e-15);
        }
    }

    #[test]
    fn unit_transmission_is_identity() {
        let w = TruncatedState::w_state(3, 2).unwrap();
        let s = w.apply_uniform_loss(1.0).unwrap();
        assert!(s.max_abs_diff(&w) < 1e-14);
    }

    #[test]
    fn loss_damps_coherences_by_sqrt_eta() {
        // (|0> + |1>)/sqrt2 : coherence shrinks by sqrt(eta)
        let b = Arc::new(Basis::new(1, 2).unwrap());
        let s = TruncatedState::from_pure(b, &[c(1.0), c(1.0), c(0.0)]).unwrap();
        let l = s.apply_loss(&[0.64]).unwrap();
        assert!((l.matrix()[(0, 1)].re - 0.5 * 0.8).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_transmission() {
        let s = TruncatedState::fock(1, 2).unwrap();
        assert!(s.apply_loss(&[1.2]).is_err());
        assert!(s.apply_loss(&[0.5, 0.5]).is_err());
    }

    #[test]
    fn single_photon_on_fifty_fifty() {
        let s = TruncatedState::fock(1, 1).unwrap().split_balanced(2).unwrap();
        let b = s.basis().clone();
        let i10 = b.index_of(&[1, 0]).unwrap();
        let i01 = b.index_of(&[0, 1]).unwrap();
        for &(r, cc) in &[(i10, i10), (i01, i01), (i10, i01), (i01, i10)] {
            assert!((s.matrix()[(r, cc)].re - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn single_photon_gives_w_state() {
        for n in 2..7 {
            let s = TruncatedState::fock(1, 2).unwrap().split_balanced(n).unwrap();
            let w = TruncatedState::w_state(n, 2).unwrap();
            assert!(s.max_abs_diff(&w) < 1e-14, "N = {n}");
        }
    }

    #[test]
    fn two_photons_on_fifty_fifty() {
        let s = TruncatedState::fock(2, 2).unwrap().split_balanced(2).unwrap();
        let b = s.basis().clone();
        let amp = [
            (b.index_of(&[2, 0]).unwrap(), 0.5),
            (b.index_of(&[1, 1]).unwrap(), 1.0 / 2f64.sqrt()),
            (b.index_of(&[0, 2]).unwrap(), 0.5),
        ];
        for &(r, ar) in &amp {
            for &(cc, ac) in &amp {
                assert!((s.matrix()[(r, cc)].re - ar * ac).abs() < 1e-15);
            }
        }
        assert!((s.trace() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn splitter_preserves_photon_distribution() {
        let b = Arc::new(Basis::new(1, 2).unwrap());
        let s = TruncatedState::from_diagonal(b, &[0.2, 0.5, 0.3]).unwrap();
        let out = s.split(&[0.6, 0.8]).unwrap();
        let p = out.photon_number_distribution();
        assert!((p[0] - 0.2).abs() < 1e-14 && (p[1] - 0.5).abs() < 1e-14 && (p[2] - 0.3).abs() < 1e-14);
        out.validate().unwrap();
    }

    #[test]
    fn partial_trace_of_two_mode_w() {
        let w = TruncatedState::w_state(2, 1).unwrap();
        let r = w.partial_trace(&[0]).unwrap();
        assert!((r.population(0) - 0.5).abs() < 1e-15);
        assert!((r.population(1) - 0.5).abs() < 1e-15);
        assert!(r.matrix()[(0, 1)].norm() < 1e-15);
    }

    #[test]
    fn partial_trace_of_w_is_mixture_of_vacuum_and_smaller_w() {
        for n in 2..=6 {
            let w = TruncatedState::w_state(n, 2).unwrap();
            for k in 1..=n {
                let keep: Vec<usize> = (0..k).collect();
                let r = w.partial_trace(&keep).unwrap();
                let vac = TruncatedState::vacuum(k, 2).unwrap();
                let wk = TruncatedState::w_state(k, 2).unwrap();
                let frac = k as f64 / n as f64;
                let expect = TruncatedState::mixture(&[(1.0 - frac, &vac), (frac, &wk)]).unwrap();
                assert!(r.max_abs_diff(&expect) < 1e-14, "N={n} k={k}");
            }
        }
    }

    #[test]
    fn keeping_all_modes_is_identity() {
        let s = TruncatedState::fock(2, 2).unwrap().split(&[0.6, 0.0, 0.8]).unwrap();
        let r = s.partial_trace(&[0, 1, 2]).unwrap();
        assert!(r.max_abs_diff(&s) < 1e-15);
        assert!(s.partial_trace(&[]).is_err());
        assert!(s.partial_trace(&[0, 0]).is_err());
    }

    #[test]
    fn validation_rejects_bad_matrices() {
        let b = Arc::new(Basis::new(1, 1).unwrap());
        let neg = DMatrix::from_row_slice(2, 2, &[c(1.2), c(0.0), c(0.0), c(-0.2)]);
        assert!(TruncatedState::from_matrix(b.clone(), neg).is_err());
        let nonherm = DMatrix::from_row_slice(2, 2, &[c(0.5), c(0.1), c(0.0), c(0.5)]);
        assert!(TruncatedState::from_matrix(b.clone(), nonherm).is_err());
        let trace = DMatrix::from_row_slice(2, 2, &[c(0.5), c(0.0), c(0.0), c(0.4)]);
        assert!(TruncatedState::from_matrix(b, trace).is_err());
    }
}
