//! Property tests over random inputs.

use proptest::prelude::*;

use fermi::charts::{AdiabaticPoint, Chart, Charts, Strip, StripPoint};
use fermi::config::RunConfig;
use fermi::curves::{push_forward, CurveConfig, Stepper, UnstableCurve};
use fermi::hyperbolic::dg_matrices;
use fermi::io::fmt_f64;
use fermi::maps::NormalForm;
use fermi::model::{ModelParams, NormalFormConstants, SlitProfile, DEFAULT_LAMBDA};
use fermi::stats::run_ensemble;

fn chart() -> impl Strategy<Value = Chart> {
    prop_oneof![Just(Chart::U), Just(Chart::L), Just(Chart::F)]
}

fn strip() -> impl Strategy<Value = Strip> {
    prop_oneof![Just(Strip::R1), Just(Strip::R2Plus), Just(Strip::R2Minus)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fmt_f64_round_trips(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
        prop_assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn chart_round_trip(chart in chart(), angle in 0.0..2.0f64, log_action in 3.0..6.0f64) {
        let p = ModelParams::default_model();
        let charts = Charts::new(&p);
        let a = AdiabaticPoint { chart, angle, action: 10f64.powf(log_action) };
        let (t, v) = charts.from_adiabatic(a).unwrap();
        let back = charts.to_adiabatic(t, v, chart).unwrap();
        let da = (back.angle - angle + 1.0).rem_euclid(2.0) - 1.0;
        prop_assert!(da.abs() < 1e-9);
        prop_assert!((back.action - a.action).abs() < 1e-9 * a.action);
    }

    #[test]
    fn strip_round_trip(strip in strip(), u in 0.0..1.0f64, second in 100.0..1e5f64) {
        let p = ModelParams::default_model();
        let charts = Charts::new(&p);
        let first = u * 2.0 * charts.from_strip(StripPoint::new(strip, 0.0, second)).action;
        let s = StripPoint::new(strip, first, second);
        let a = charts.from_strip(s);
        let back = charts.to_strip(a, strip).unwrap();
        prop_assert!((back.second - second).abs() <= 1e-12 * second);
        prop_assert!((back.first - first).abs() <= 1e-9 * a.action);
    }

    #[test]
    fn sine_profiles_preserve_area(
        amp in 0.05..0.35f64,
        omega in 2u32..40,
        phi0 in 0.0..std::f64::consts::TAU,
        x0 in 0.1..0.4f64,
    ) {
        let profile = SlitProfile::sine(0.5, amp, omega as f64, phi0).unwrap();
        let Ok(p) = ModelParams::derive(&profile, DEFAULT_LAMBDA, x0, 0.05) else {
            return Ok(());
        };
        prop_assume!(p.fdot1.abs() > 0.5 && p.fdot2.abs() > 0.5);
        let c = NormalFormConstants::new(&p);
        for (_, m) in dg_matrices(&p, &c) {
            prop_assert!((m.det() - 1.0).abs() < 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn cutting_conserves_measure(sigma in 0.0..1.9f64, h in 500.0..5000.0f64, dh in 1e-4..1e-2f64, revs in 1usize..=2) {
        let p = ModelParams::default_model();
        let st = Stepper::new(NormalForm::new(&p), None);
        let c = UnstableCurve::segment(Strip::R1, [sigma, h], [sigma + 1e-3 * dh, h + dh]);
        let pieces = push_forward(&c, revs, &st, &CurveConfig::default()).unwrap();
        let m: f64 = pieces.iter().map(|q| q.measure()).sum();
        prop_assert!((m - c.measure()).abs() <= 1e-8 * c.measure());
    }

    #[test]
    fn ensembles_are_deterministic(seed in any::<u64>()) {
        let mut cfg = RunConfig::default();
        cfg.seed = seed;
        cfg.ensemble.n_orbits = 40;
        cfg.ensemble.horizon = 10;
        cfg.ensemble.n0 = 5;
        let setup = cfg.setup().unwrap();
        let ec = cfg.ensemble_config(&setup);
        let a = run_ensemble(&ec, &setup.ensemble()).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| run_ensemble(&ec, &setup.ensemble())).unwrap();
        prop_assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }
}
