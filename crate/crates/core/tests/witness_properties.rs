mod common;

use num_complex::Complex64;
use proptest::prelude::*;

use common::*;
use pathwit_core::witness::dense::{expectation, o_operator, witness_operator, z_operator};
use pathwit_core::witness::{
    correlators, expected_o, expected_z, f_coeffs, o_restricted, p_star, witness_value,
};
use pathwit_core::{
    Conventions, DisplacementSpec, Estimator, PhaseAveraging, SigmaConvention, TruncatedState, WitnessParams,
};

/// `tr(O_r rho)` on the block `{vac, 1_0, ..., 1_{N-1}}`.
fn restricted_form(state: &TruncatedState, alphas: &[f64]) -> f64 {
    let basis = state.basis();
    let idx: Vec<usize> = std::iter::once(basis.vacuum())
        .chain((0..state.modes()).map(|m| basis.single_photon(m).unwrap()))
        .collect();
    let o = o_restricted(alphas);
    let mut acc = Complex64::new(0.0, 0.0);
    for (a, &ia) in idx.iter().enumerate() {
        for (b, &ib) in idx.iter().enumerate() {
            acc += o[(a, b)] * state.matrix()[(ib, ia)];
        }
    }
    acc.re
}

fn rotate_total_phase(state: &TruncatedState, phi: f64) -> TruncatedState {
    let basis = state.basis().clone();
    let mut rho = state.matrix().clone();
    for r in 0..basis.dim() {
        for c in 0..basis.dim() {
            let d = basis.tuple(r).total() as f64 - basis.tuple(c).total() as f64;
            rho[(r, c)] *= Complex64::from_polar(1.0, phi * d);
        }
    }
    TruncatedState::from_matrix(basis, rho).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn correlators_lie_in_unit_interval(
        seed in any::<u64>(),
        modes in 2usize..=4,
        alphas in prop::collection::vec(0.0f64..1.5, 4),
        p_dc in 0.0f64..=1.0,
    ) {
        let s = random_state(modes, 2, 2, seed);
        let m = correlators(&s, &alphas[..modes], &PhaseAveraging::exact(2), p_dc).unwrap();
        prop_assert!(m.iter().all(|&v| (-1.0 - 1e-12..=1.0 + 1e-12).contains(&v)));
    }

    #[test]
    fn click_path_matches_restricted_form(
        seed in any::<u64>(),
        modes in 2usize..=5,
        rank in 1usize..=3,
        alphas in prop::collection::vec(0.0f64..1.5, 5),
    ) {
        let s = random_single_excitation(modes, rank, seed);
        let a = &alphas[..modes];
        let clicks = expected_o(&s, a, &PhaseAveraging::exact(1), 0.0).unwrap();
        prop_assert!((clicks - restricted_form(&s, a)).abs() < 1e-10);
    }

    #[test]
    fn click_path_matches_dense_operator(
        seed in any::<u64>(),
        modes in 2usize..=3,
        alphas in prop::collection::vec(0.0f64..1.5, 3),
    ) {
        let s = random_state(modes, 2, 2, seed);
        let a = &alphas[..modes];
        let clicks = expected_o(&s, a, &PhaseAveraging::exact(2), 0.0).unwrap();
        let dense = expectation(&o_operator(s.basis(), a, 5), &s);
        prop_assert!((clicks - dense).abs() < 1e-10);
    }

    #[test]
    fn averaged_statistics_ignore_total_phase(
        seed in any::<u64>(),
        modes in 2usize..=3,
        phi in 0.0f64..std::f64::consts::TAU,
        alphas in prop::collection::vec(0.0f64..1.5, 3),
    ) {
        let s = random_state(modes, 2, 3, seed);
        let r = rotate_total_phase(&s, phi);
        let a = &alphas[..modes];
        let avg = PhaseAveraging::exact(2);
        let x = expected_o(&s, a, &avg, 1e-3).unwrap();
        let y = expected_o(&r, a, &avg, 1e-3).unwrap();
        prop_assert!((x - y).abs() < 1e-12);
    }

    #[test]
    fn exact_estimator_is_the_operator_expectation(
        seed in any::<u64>(),
        modes in 2usize..=3,
        lambda in 0.1f64..50.0,
        mu in 1.0f64..500.0,
        alphas in prop::collection::vec(0.0f64..1.5, 3),
    ) {
        let s = random_state(modes, 2, 2, seed);
        let a = alphas[..modes].to_vec();
        let params = WitnessParams::new(modes, lambda, mu).unwrap();
        let spec = DisplacementSpec::degenerate(a.clone()).unwrap();
        let conv = Conventions { estimator: Estimator::Exact, ..Default::default() };
        let (v, _) = witness_value(&s, &params, &spec, &PhaseAveraging::exact(2), 0.0, &conv).unwrap();
        let w = expectation(&witness_operator(s.basis(), lambda, mu, &a, 5), &s);
        prop_assert!((v - w).abs() < 1e-9 * (1.0 + w.abs()));
    }

    #[test]
    fn measured_value_never_exceeds_witness(
        seed in any::<u64>(),
        modes in 2usize..=3,
        n_max in 2usize..=3,
        lambda in 0.1f64..50.0,
        mu in 1.0f64..500.0,
        alphas in prop::collection::vec(0.0f64..1.5, 3),
        widen in 0.0f64..0.2,
    ) {
        let s = random_state(modes, n_max, 2, seed);
        let a = alphas[..modes].to_vec();
        let lo: Vec<f64> = a.iter().map(|x| (x - widen).max(0.0)).collect();
        let hi: Vec<f64> = a.iter().map(|x| x + widen).collect();
        let spec = DisplacementSpec::with_box(a.clone(), lo, hi).unwrap();
        let params = WitnessParams::new(modes, lambda, mu).unwrap();
        let avg = PhaseAveraging::exact(n_max);
        let (measured, _) = witness_value(&s, &params, &spec, &avg, 0.0, &Conventions::default()).unwrap();
        let w = expectation(&witness_operator(s.basis(), lambda, mu, &a, 2 * n_max + 1), &s);
        prop_assert!(measured <= w + 1e-9 * (1.0 + w.abs()), "{measured} > {w}");
    }

    #[test]
    fn undisplaced_score_matches_diagonal_operator(
        seed in any::<u64>(),
        modes in 2usize..=4,
        lambda in 0.1f64..50.0,
        mu in 1.0f64..500.0,
        alpha in 0.0f64..1.5,
    ) {
        let s = random_state(modes, 2, 2, seed);
        let params = WitnessParams::new(modes, lambda, mu).unwrap();
        let f = f_coeffs(&DisplacementSpec::uniform(modes, alpha).unwrap());
        let z = expected_z(&s, &params, &f, 0.0).unwrap();
        let dense = expectation(&z_operator(s.basis(), lambda, mu, &f), &s);
        prop_assert!((z - dense).abs() < 1e-10 * (1.0 + dense.abs()));
    }

    #[test]
    fn conservative_p_star_dominates(
        seed in any::<u64>(),
        modes in 2usize..=4,
    ) {
        let s = random_state(modes, 2, 2, seed);
        let dist = s.photon_number_distribution();
        let true_ge2: f64 = dist.iter().skip(2).sum();
        let cons = p_star(&s, false, SigmaConvention::Conservative, 0.0).unwrap();
        let direct = p_star(&s, false, SigmaConvention::Direct, 0.0).unwrap();
        prop_assert!(cons + 1e-12 >= true_ge2);
        prop_assert!(direct <= cons + 1e-15);
    }
}

#[test]
fn ideal_w_state_paths_agree() {
    let s = TruncatedState::w_state(4, 2).unwrap();
    let a = [SQRT_LN2; 4];
    let clicks = expected_o(&s, &a, &PhaseAveraging::exact(2), 0.0).unwrap();
    let form = restricted_form(&s.partial_trace(&[0, 1, 2, 3]).unwrap(), &a);
    assert!((clicks - form).abs() < 1e-10);
}

#[test]
fn undisplaced_examples() {
    let p = WitnessParams::new(4, 2.73, 102.0).unwrap();
    let vac = TruncatedState::vacuum(4, 2).unwrap();
    let zero = nalgebra::DMatrix::zeros(4, 4);
    assert!((expected_z(&vac, &p, &zero, 0.0).unwrap() - 2.73).abs() < 1e-15);

    let f = f_coeffs(&DisplacementSpec::uniform(4, SQRT_LN2).unwrap());
    assert!(f.iter().all(|v| v.abs() < 1e-15));
    let w = TruncatedState::w_state(4, 2).unwrap();
    assert!(expected_z(&w, &p, &f, 0.0).unwrap().abs() < 1e-14);

    // |1,1,0,0>: exactly two clicks with certainty
    let basis = w.basis().clone();
    let mut amp = vec![Complex64::new(0.0, 0.0); basis.dim()];
    amp[basis.index_of(&[1, 1, 0, 0]).unwrap()] = Complex64::new(1.0, 0.0);
    let two = TruncatedState::from_pure(basis, &amp).unwrap();
    let q = 1.0;
    let expect = -(12.0 + 102.0) * q;
    assert!((expected_z(&two, &p, &f, 0.0).unwrap() - expect).abs() < 1e-12);
}
