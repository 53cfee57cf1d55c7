mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;

use common::relative;
use pathwit_core::stats::{ln_p_value, min_trials, p_value, ranges};
use pathwit_core::witness::f_coeffs;
use pathwit_core::{DisplacementSpec, Ranges, SigmaConvention, TrialCounts, WitnessParams};

fn counts(t: f64, n: u64, m: u64, l: u64) -> TrialCounts {
    TrialCounts {
        o_bar: t,
        z_bar: 0.0,
        s_bar: 0.0,
        n,
        m,
        l,
        ..Default::default()
    }
}

fn ranges_strategy() -> impl Strategy<Value = Ranges> {
    (1.0f64..500.0, 1.0f64..500.0, 1.0f64..1000.0).prop_map(|(delta_o, delta_z, delta_s)| Ranges {
        delta_o,
        delta_z,
        delta_s,
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn p_value_falls_with_margin(
        r in ranges_strategy(),
        t1 in 1e-4f64..5.0,
        t2 in 1e-4f64..5.0,
        n in 1u64..10_000_000,
    ) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let a = p_value(&counts(lo, n, n, n), 0.0, &r).unwrap();
        let b = p_value(&counts(hi, n, n, n), 0.0, &r).unwrap();
        prop_assert!(b <= a);
        prop_assert!(a <= 0.0);
    }

    #[test]
    fn p_value_falls_with_each_count_of_moderate_range(
        r in ranges_strategy(),
        t in 1e-3f64..2.0,
        base in prop::collection::vec(1u64..1_000_000, 3),
        which in 0usize..3,
        extra in 1u64..1_000_000,
    ) {
        let mut more = base.clone();
        more[which] += extra;
        let sq = [r.delta_o.powi(2), r.delta_z.powi(2), r.delta_s.powi(2)];
        // the exponent grows with a count while that setting's squared range
        // is at most twice the count-weighted mean squared range
        let grows = |c: &[u64]| {
            let total = c.iter().sum::<u64>() as f64;
            let d: f64 = c.iter().zip(&sq).map(|(&k, s)| k as f64 * s).sum();
            sq[which] <= 2.0 * d / total
        };
        let a = p_value(&counts(t, base[0], base[1], base[2]), 0.0, &r).unwrap();
        let b = p_value(&counts(t, more[0], more[1], more[2]), 0.0, &r).unwrap();
        if grows(&base) && grows(&more) {
            prop_assert!(b <= a + 1e-12 * a.abs());
        }
    }

    #[test]
    fn p_value_falls_when_all_counts_scale(
        r in ranges_strategy(),
        t in 1e-3f64..2.0,
        base in prop::collection::vec(1u64..1_000_000, 3),
        k in 2u64..50,
    ) {
        let a = p_value(&counts(t, base[0], base[1], base[2]), 0.0, &r).unwrap();
        let b = p_value(&counts(t, k * base[0], k * base[1], k * base[2]), 0.0, &r).unwrap();
        prop_assert!(relative(b, k as f64 * a) < 1e-12);
    }

    #[test]
    fn natural_and_decimal_logs_agree(
        r in ranges_strategy(),
        t in 1e-3f64..2.0,
        n in 1u64..100_000_000,
        m in 1u64..100_000_000,
        l in 1u64..100_000_000,
    ) {
        let c = counts(t, n, m, l);
        let ln = ln_p_value(&c, 0.0, &r).unwrap();
        let lg = p_value(&c, 0.0, &r).unwrap();
        // independent evaluation of the Hoeffding exponent
        let total = (n + m + l) as f64;
        let denom = n as f64 * r.delta_o.powi(2) + m as f64 * r.delta_z.powi(2) + l as f64 * r.delta_s.powi(2);
        let oracle = -2.0 * total * total * t * t / denom;
        prop_assert!(relative(ln, oracle) < 1e-12);
        prop_assert!(relative(lg * std::f64::consts::LN_10, ln) < 1e-12);
    }

    #[test]
    fn planned_trials_meet_target(
        r in ranges_strategy(),
        t in 1e-3f64..2.0,
        target in -200.0f64..-1.0,
    ) {
        let n = min_trials(t, &r, target).unwrap();
        prop_assert!(p_value(&counts(t, n, n, n), 0.0, &r).unwrap() <= target);
        if n > 1 {
            let fewer = n - 1;
            prop_assert!(p_value(&counts(t, fewer, fewer, fewer), 0.0, &r).unwrap() > target);
        }
    }
}

#[test]
fn ranges_at_reference_operating_points() {
    let cases = [(4usize, 2.73, 102.0, (24.0, 116.73, 48.0)), (8, 8.29, 151.0, (112.0, 215.29, 448.0))];
    for (n, lambda, mu, (o, z, s)) in cases {
        let params = WitnessParams::new(n, lambda, mu).unwrap();
        let f = f_coeffs(&DisplacementSpec::uniform(n, 0.83).unwrap());
        let r = ranges(&params, &f, SigmaConvention::Direct);
        assert_eq!(r.delta_o, o);
        // F is about 1.8e-5 per pair at alpha = 0.83
        assert!((r.delta_z - z).abs() < 1e-2, "{}", r.delta_z);
        assert_eq!(r.delta_s, s);
        let r = ranges(&params, &f, SigmaConvention::Conservative);
        assert_eq!(r.delta_s, 2.0 * s);
    }
}

#[test]
fn ranges_without_displacement() {
    let params = WitnessParams::new(2, 1.0, 1.0).unwrap();
    let f = f_coeffs(&DisplacementSpec::uniform(2, 0.0).unwrap());
    assert_eq!(f, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
    let r = ranges(&params, &f, SigmaConvention::Conservative);
    assert_eq!((r.delta_o, r.delta_z, r.delta_s), (4.0, 6.0, 8.0));
    assert_eq!(ranges(&params, &f, SigmaConvention::Direct).delta_s, 4.0);
}

#[test]
fn margin_at_or_below_bound_carries_no_evidence() {
    let r = Ranges {
        delta_o: 24.0,
        delta_z: 116.73,
        delta_s: 48.0,
    };
    assert_eq!(p_value(&counts(2.785, 10, 10, 10), 2.785, &r).unwrap(), 0.0);
    assert_eq!(p_value(&counts(1.0, 10, 10, 10), 2.785, &r).unwrap(), 0.0);
    assert!(min_trials(0.0, &r, -10.0).is_err());
    assert!(min_trials(-1.0, &r, -10.0).is_err());
}

#[test]
fn wide_range_setting_can_dilute_the_evidence() {
    let r = Ranges {
        delta_o: 1.0,
        delta_z: 1.0,
        delta_s: 900.0,
    };
    let a = p_value(&counts(0.5, 1000, 1000, 1), 0.0, &r).unwrap();
    let b = p_value(&counts(0.5, 1000, 1000, 1000), 0.0, &r).unwrap();
    assert!(b > a);
}
