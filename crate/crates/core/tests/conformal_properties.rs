use proptest::prelude::*;
use taskcp::conformal::{
    ar_interval, calibrate, conformal_quantile, cqr_score, interval, lwr_stats, sample_quantile,
    CalibrationRecord, ErrorRate, Method, Predictor, Reduction,
};
use taskcp::oracles::brute_force_conformal_quantile;

fn alpha() -> impl Strategy<Value = f64> {
    0.001f64..0.999
}

fn scores() -> impl Strategy<Value = Vec<f64>> {
    // Coarse grid so that ties show up regularly.
    prop::collection::vec((-50i32..50).prop_map(|v| v as f64 / 10.0), 1..60)
}

fn records(min: usize) -> impl Strategy<Value = Vec<CalibrationRecord>> {
    prop::collection::vec(
        (
            prop::collection::vec(0.01f64..0.99, 2..12),
            0.0f64..1.0,
            0u8..2,
        ),
        min..40,
    )
    .prop_map(|rows| {
        rows.into_iter()
            .map(|(mut s, z, c)| {
                // keep LWR well defined
                s[1] = s[0] + 0.013;
                CalibrationRecord::new(s, z, c).unwrap()
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn quantile_matches_brute_force(s in scores(), a in alpha()) {
        let got = conformal_quantile(&s, ErrorRate::new(a).unwrap()).unwrap();
        prop_assert_eq!(got, brute_force_conformal_quantile(&s, a));
    }
}

proptest! {
    #[test]
    fn quantile_nonincreasing_in_alpha(s in scores(), a in alpha(), b in alpha()) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let q_lo = conformal_quantile(&s, ErrorRate::new(lo).unwrap()).unwrap();
        let q_hi = conformal_quantile(&s, ErrorRate::new(hi).unwrap()).unwrap();
        prop_assert!(q_hi <= q_lo);
    }

    #[test]
    fn ar_width_independent_of_prediction(q in 0.0f64..2.0, zs in prop::collection::vec(-5.0f64..5.0, 1..20)) {
        let pred = Predictor {
            method: Method::Ar,
            alpha: ErrorRate::new(0.1).unwrap(),
            qhat: q,
            calibration_size: 9,
            reduction: Reduction::First,
        };
        for z in zs {
            prop_assert_eq!(ar_interval(&pred, z).unwrap().length(), 2.0 * q);
        }
    }

    #[test]
    fn lwr_affine_equivariance(
        recs in records(5),
        test in prop::collection::vec(0.01f64..0.99, 2..10),
        scale in 0.2f64..5.0,
        shift in -3.0f64..3.0,
    ) {
        let a = ErrorRate::new(0.2).unwrap();
        let mut test = test;
        test[1] = test[0] + 0.02;
        let map = |v: f64| scale * v + shift;
        let moved: Vec<CalibrationRecord> = recs
            .iter()
            .map(|r| CalibrationRecord::new(
                r.task_samples.iter().copied().map(map).collect(),
                map(r.true_output),
                r.class_label,
            ).unwrap())
            .collect();
        let base = interval(&calibrate(Method::Lwr, &recs, a).unwrap(), &test).unwrap();
        let moved_test: Vec<f64> = test.iter().copied().map(map).collect();
        let image = interval(&calibrate(Method::Lwr, &moved, a).unwrap(), &moved_test).unwrap();
        if base.is_bounded() {
            let tol = 1e-9 * (1.0 + scale + shift.abs());
            prop_assert!((image.lower() - map(base.lower())).abs() < tol);
            prop_assert!((image.upper() - map(base.upper())).abs() < tol);
            let stats = lwr_stats(&test).unwrap();
            prop_assert!(((base.lower() + base.upper()) / 2.0 - stats.mean).abs() < 1e-12);
        } else {
            prop_assert!(!image.is_bounded());
        }
    }

    #[test]
    fn cqr_interval_is_the_score_sublevel_set(
        samples in prop::collection::vec(0.0f64..1.0, 1..30),
        q in -0.3f64..0.3,
        a in 0.01f64..0.5,
        zs in prop::collection::vec(-0.5f64..1.5, 1..30),
    ) {
        let alpha = ErrorRate::new(a).unwrap();
        let pred = Predictor {
            method: Method::Cqr,
            alpha,
            qhat: q,
            calibration_size: 50,
            reduction: Reduction::First,
        };
        let iv = interval(&pred, &samples).unwrap();
        for z in zs {
            let s = cqr_score(&samples, z, alpha).unwrap();
            prop_assert_eq!(iv.contains(z), s <= q, "z={} score={} iv={:?}", z, s, iv);
        }
    }

    #[test]
    fn sample_quantile_is_member_and_monotone(
        v in prop::collection::vec(-10.0f64..10.0, 1..40),
        w1 in 0.0f64..=1.0,
        w2 in 0.0f64..=1.0,
    ) {
        let (lo, hi) = if w1 <= w2 { (w1, w2) } else { (w2, w1) };
        let q_lo = sample_quantile(lo, &v).unwrap();
        let q_hi = sample_quantile(hi, &v).unwrap();
        prop_assert!(v.contains(&q_lo) && v.contains(&q_hi));
        prop_assert!(q_lo <= q_hi);
    }

    #[test]
    fn calibration_ignores_record_order(recs in records(1), seed in any::<u64>(), a in 0.05f64..0.5) {
        use rand::seq::SliceRandom;
        let alpha = ErrorRate::new(a).unwrap();
        let mut shuffled = recs.clone();
        shuffled.shuffle(&mut taskcp::seeds::stream(seed, &[]));
        for m in Method::ALL {
            prop_assert_eq!(calibrate(m, &recs, alpha).unwrap(), calibrate(m, &shuffled, alpha).unwrap());
        }
    }
}
