//! Acceptance suite. Prints one PASS/FAIL line per criterion; pass criterion
//! numbers as arguments to run a subset.

use std::time::Instant;

use rand::Rng;

use fermi::billiard::{Billiard, Surface};
use fermi::charts::{AdiabaticPoint, Chart, Charts, Strip};
use fermi::config::RunConfig;
use fermi::curves::{
    complexity_scan, growth_statistics, push_forward, route_proportions, ComplexityConfig, CurveConfig, GrowthConfig,
    Stepper, UnstableCurve,
};
use fermi::fit::loglog;
use fermi::hyperbolic::{
    complexity_delta0, dg_matrices, expansion_delta0, expansion_rates, verify_cone_invariance, InvarianceConfig,
};
use fermi::maps::{validate_normal_forms, MapId, NormalForm};
use fermi::model::{drift_rate, ModelParams, Side, SlitProfile, DEFAULT_LAMBDA};
use fermi::stats::{
    drift_estimate, escape_curve, escape_fraction, itinerary_stats, moment_check, never_below, run_ensemble,
    Dynamics, EnsembleConfig, InitMode, NhatMode, OrbitRecord,
};

type Check = fn() -> (bool, String);

fn large_omega_ensemble() -> (RunConfig, Vec<OrbitRecord>) {
    let cfg = RunConfig::large_omega();
    let setup = cfg.setup().unwrap();
    let ec = cfg.ensemble_config(&setup);
    let records = run_ensemble(&ec, &setup.ensemble()).unwrap();
    (cfg, records)
}

fn normal_form_accuracy() -> (bool, String) {
    let p = ModelParams::default_model();
    let levels = [250.0, 500.0, 1000.0];
    let rows = validate_normal_forms(&NormalForm::new(&p), &Charts::new(&p), &levels, 500, 1);
    let mut ok = true;
    let mut parts = Vec::new();
    for id in MapId::ALL {
        let r: Vec<_> = rows.iter().filter(|r| r.map == id).collect();
        let errs: Vec<f64> = r.iter().map(|r| r.err()).collect();
        let slope = loglog(&levels, &errs).slope;
        let samples = r.iter().map(|r| r.samples).min().unwrap_or(0);
        ok &= (slope + 2.0).abs() <= 0.3 && samples >= 500;
        parts.push(format!("{} {slope:.2}", id.name()));
    }
    (ok, format!("log-log slopes {}", parts.join(", ")))
}

fn sweep_configurations() -> Vec<ModelParams> {
    let mut out = Vec::new();
    for k in 0..12 {
        out.push(ModelParams::resonant(5.0 + 4.0 * k as f64).unwrap());
    }
    for (i, omega) in [3.0, 7.0, 11.0, 15.0, 19.0, 23.0, 27.0, 31.0, 35.0, 39.0].iter().enumerate() {
        for (a, f1) in [(0.2, 0.42), (0.35, 0.25)] {
            let f1 = f1 + 0.005 * i as f64;
            out.push(ModelParams::symmetric_heights(*omega, a, f1).unwrap());
        }
    }
    let mut rng = fermi::rng(2, 0);
    while out.len() < 50 {
        let profile = SlitProfile::sine(
            0.5,
            rng.gen_range(0.05..0.35),
            rng.gen_range(2..40) as f64,
            rng.gen_range(0.0..std::f64::consts::TAU),
        )
        .unwrap();
        let x0 = rng.gen_range(0.1..0.4);
        if let Ok(p) = ModelParams::derive(&profile, DEFAULT_LAMBDA, x0, 0.05) {
            if p.fdot1.abs() > 0.5 && p.fdot2.abs() > 0.5 {
                out.push(p);
            }
        }
    }
    out
}

fn determinant_identity() -> (bool, String) {
    let configs = sweep_configurations();
    let mut worst: f64 = 0.0;
    for p in &configs {
        let c = fermi::model::NormalFormConstants::new(p);
        for (_, m) in dg_matrices(p, &c) {
            worst = worst.max((m.det() - 1.0).abs());
        }
    }
    (worst <= 1e-9, format!("{} configurations, max |det - 1| = {worst:.2e}", configs.len()))
}

fn cone_hyperbolicity() -> (bool, String) {
    let cfg = RunConfig::large_omega();
    let setup = cfg.setup().unwrap();
    let Some(cone) = setup.cone else {
        return (false, "no common cone".into());
    };
    let v = cfg.thresholds.v_star;
    let inv = InvarianceConfig { samples: 100_000, h_min: v, h_max: 10.0 * v, seed: 5 };
    let r = verify_cone_invariance(&cone, &setup.nf(), &inv, true);
    (
        r.violations == 0 && r.min_stretch > 2.0 && r.samples == 100_000,
        format!("omega 49, V* {v}: {} violations over {} samples, min stretch {:.2}", r.violations, r.samples, r.min_stretch),
    )
}

fn complexity_bound() -> (bool, String) {
    let cfg = RunConfig::large_omega();
    let setup = cfg.setup().unwrap();
    let cone = setup.cone.unwrap();
    let rates = expansion_rates(&cone, &setup.params, &setup.consts);
    let st = Stepper::new(setup.nf(), Some(setup.modcfg));
    let ccfg = setup.curve_config();
    let v = cfg.thresholds.v_star;
    let run = |delta0| {
        complexity_scan(&st, &ccfg, &ComplexityConfig { delta0, trials: 1000, h_range: (10.0 * v, 40.0 * v), seed: 1 })
            .unwrap()
    };
    let r = run(complexity_delta0(&cone, &setup.params, &rates));
    let control = run(expansion_delta0(&rates));
    (
        r.max_pieces <= 4 && r.trials == 1000,
        format!(
            "delta0 {:.3e}: histogram {:?}, max {} (1/Lambda scale {:.3e} gives max {})",
            r.delta0, r.histogram, r.max_pieces, control.delta0, control.max_pieces
        ),
    )
}

fn route_fractions() -> (bool, String) {
    let mut ok = true;
    let mut parts = Vec::new();
    for cfg in [RunConfig::default(), RunConfig::large_omega()] {
        let setup = cfg.setup().unwrap();
        let p = &setup.params;
        let st = Stepper::new(setup.nf(), Some(setup.modcfg));
        let ccfg = CurveConfig::default();
        // 20.5 components: each spans 2 / entry_span in H
        let len = 20.5 * 2.0 / p.entry_span();
        let dir = setup.cone.map_or([0.0, 1.0], |c| c.direction(0.5));
        let a = [0.5, 1000.0];
        let b = [a[0] + len * dir[0], a[1] + len * dir[1]];
        let r = route_proportions(&UnstableCurve::segment(Strip::R1, a, b), &st, &ccfg, cfg.thresholds.v_star).unwrap();
        ok &= (r.s_plus - p.f2).abs() <= 0.02 && r.components >= 20;
        parts.push(format!("omega {:.0}: S+1 {:.4} over {} components", p.profile.pieces()[0].waves[0].omega, r.s_plus, r.components));
    }
    (ok, format!("f2 = 0.6; {}", parts.join("; ")))
}

fn itinerary_law() -> (bool, String) {
    let (cfg, records) = large_omega_ensemble();
    let s = itinerary_stats(&records, 3, cfg.params().unwrap().f2).unwrap();
    (s.tv <= 0.05 && s.samples >= 10_000, format!("depth 3 over {} orbits: TV {:.4}", s.samples, s.tv))
}

fn drift() -> (bool, String) {
    let (cfg, records) = large_omega_ensemble();
    let p = cfg.params().unwrap();
    let e = drift_rate(p.f1, p.f2).unwrap();
    let d = drift_estimate(&records, cfg.ensemble.n0, 1).unwrap();
    let gap = (d.mean - e) / e;
    let soft = if gap.abs() <= 0.1 { "soft target met" } else { "soft target missed" };
    (
        d.mean >= e / 3.0 && d.n >= 10_000,
        format!(
            "{} orbits, N0 {}: drift {:.5} [{:.5}, {:.5}] vs E {e:.6} (floor {:.5}); {:+.1}% ({soft})",
            d.n,
            cfg.ensemble.n0,
            d.mean,
            d.lo,
            d.hi,
            e / 3.0,
            100.0 * gap
        ),
    )
}

fn moment_estimate() -> (bool, String) {
    let (cfg, records) = large_omega_ensemble();
    let n0 = cfg.ensemble.n0;
    let kappa = cfg.stats.eta / n0 as f64;
    let m = moment_check(&records, kappa, n0, 1).unwrap();
    let null = RunConfig::null_control();
    let setup = null.setup().unwrap();
    let nr = run_ensemble(&null.ensemble_config(&setup), &setup.ensemble()).unwrap();
    let nm = moment_check(&nr, kappa, n0, 1).unwrap();
    (
        m.hi < 1.0 && nm.mean >= 1.0 - 1e-3,
        format!(
            "kappa {kappa}: E[exp(-kappa D)] {:.4} [{:.4}, {:.4}]; null control {:.6} [{:.6}, {:.6}]",
            m.mean, m.lo, m.hi, nm.mean, nm.lo, nm.hi
        ),
    )
}

fn escape_statistics() -> (bool, String) {
    let cfg = RunConfig::desk();
    let setup = cfg.setup().unwrap();
    let sec = &cfg.escape;
    let v = cfg.thresholds.v_star;
    let mut ec = cfg.ensemble_config(&setup);
    ec.n_orbits = sec.n_orbits;
    ec.horizon = 200;
    ec.v_range = (v, 4.0 * v);
    ec.nhat = NhatMode::Off;
    let ens = setup.ensemble();
    let records = run_ensemble(&ec, &ens).unwrap();
    let d = drift_estimate(&records, cfg.ensemble.n0, 1).unwrap();
    let alpha = d.mean / 2.0;
    let ts = [5, 10, 15, 20, 25];
    let curve = escape_curve(&records, alpha, &ts);
    let frac = escape_fraction(&records, alpha, 20);

    let m = &setup.modcfg;
    let mut xc = EnsembleConfig::new(3, 60, (5.0 * m.v0, 10.0 * m.v0), 6, Dynamics::Exact);
    xc.init = InitMode::Uniform;
    xc.energy_cap = Some(20.0 * m.v0);
    let exact = run_ensemble(&xc, &ens).unwrap();
    let nb = never_below(&exact, m.v0);
    (
        frac >= 0.9 && curve.slope < 0.0 && curve.r2 >= 0.9 && nb >= 0.9,
        format!(
            "alpha {alpha:.4}: fraction(T=20) {frac:.4}; fractions {:?}, slope {:.4}, R2 {:.3}; exact never below V0 {nb:.3} ({} orbits)",
            curve.fractions,
            curve.slope,
            curve.r2,
            exact.len()
        ),
    )
}

fn growth_tails() -> (bool, String) {
    let cfg = RunConfig::default();
    let setup = cfg.setup().unwrap();
    let g = &cfg.growth;
    let v = cfg.thresholds.v_star;
    let st = Stepper::new(setup.nf(), Some(setup.modcfg));
    let run = GrowthConfig {
        curves: g.curves,
        points: g.points,
        trajectories: g.trajectories,
        horizon: g.horizon,
        n0: g.n0,
        theta1: cfg.theta1(&setup),
        epochs: g.epochs.clone(),
        h_range: (10.0 * v, 40.0 * v),
        seed: 7,
        floor: g.floor,
    };
    let r = growth_statistics(&st, &setup.curve_config(), &run).unwrap();
    let theta4 = r.nbar_fit.theta.max(r.nhat_fit.theta);
    let q: Vec<f64> = r.epochs.iter().map(|e| e.q99).collect();
    let stable = q.len() >= 2 && {
        let (a, b) = (q[q.len() - 2], q[q.len() - 1]);
        b.is_finite() && (a - b).abs() <= 0.25 * b
    };
    (
        r.nbar_fit.r2 >= 0.95 && r.nhat_fit.r2 >= 0.95 && theta4 < 1.0 && stable,
        format!(
            "N-bar R2 {:.3}, N-hat R2 {:.3}, theta4 {theta4:.2e}, q99(N-hat_n / n) {:?}, a {}",
            r.nbar_fit.r2, r.nhat_fit.r2, q, r.a_hat
        ),
    )
}

fn sanity_suite() -> (bool, String) {
    // static slit: |v| is conserved
    let stat = ModelParams::derive(&SlitProfile::constant(0.5), 0.5, 0.25, 0.1).unwrap();
    let b = Billiard::new(&stat);
    let mut s = b.state(0.3, 0.8, 7.3).unwrap();
    for _ in 0..10_000 {
        s = b.next_collision(&s).unwrap().1;
    }
    let energy = (s.v.abs() - 7.3).abs();

    // chart round trips
    let p = ModelParams::default_model();
    let charts = Charts::new(&p);
    let mut rng = fermi::rng(11, 0);
    let mut round: f64 = 0.0;
    for _ in 0..10_000 {
        let chart = [Chart::U, Chart::L, Chart::F][rng.gen_range(0..3)];
        let a = AdiabaticPoint { chart, angle: rng.gen_range(0.0..2.0), action: 10f64.powf(rng.gen_range(3.0..6.0)) };
        let (t, v) = charts.from_adiabatic(a).unwrap();
        let back = charts.to_adiabatic(t, v, chart).unwrap();
        let da = (back.angle - a.angle + 1.0).rem_euclid(2.0) - 1.0;
        round = round.max(da.abs()).max((back.action - a.action).abs() / a.action);
    }

    // adiabatic invariant: max |I_{n+1} - I_n| over 50 slit collisions
    let b = Billiard::new(&p);
    let amps = [1e3, 2e3, 4e3];
    let jumps: Vec<f64> = amps
        .iter()
        .map(|&a| {
            let t0 = p.t2_star + 0.05;
            let v = 2.0 * a / (p.l_star * p.gap_jet(Side::Upper, t0).f);
            let mut s = b.on_slit(t0, v).unwrap();
            let mut is = vec![charts.to_adiabatic(t0, v, Chart::U).unwrap().action];
            while is.len() < 51 {
                let (e, n) = b.next_collision(&s).unwrap();
                if e.surface == Surface::SlitTop {
                    is.push(charts.to_adiabatic(e.t, e.v_after, Chart::U).unwrap().action);
                }
                s = n;
            }
            is.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max)
        })
        .collect();
    let slope = loglog(&amps, &jumps).slope;

    // push-forward conserves measure
    let st = Stepper::new(NormalForm::new(&p), None);
    let c = UnstableCurve::segment(Strip::R1, [0.3, 1000.0], [0.300001, 1000.0003]);
    let pieces = push_forward(&c, 3, &st, &CurveConfig::default()).unwrap();
    let m: f64 = pieces.iter().map(|p| p.measure()).sum();
    let measure = (m - c.measure()).abs() / c.measure();

    (
        energy <= 1e-9 && round <= 1e-9 && (slope + 3.0).abs() <= 0.5 && measure <= 1e-8,
        format!(
            "static |v| drift {energy:.1e}; chart round trip {round:.1e}; adiabatic slope {slope:.2}; measure error {measure:.1e} over {} pieces",
            pieces.len()
        ),
    )
}

fn main() {
    let checks: [(&str, Check); 11] = [
        ("normal-form accuracy", normal_form_accuracy),
        ("determinant identity", determinant_identity),
        ("cone hyperbolicity", cone_hyperbolicity),
        ("complexity bound", complexity_bound),
        ("route proportions", route_fractions),
        ("itinerary product law", itinerary_law),
        ("drift", drift),
        ("moment estimate", moment_estimate),
        ("escape statistics", escape_statistics),
        ("growth-lemma tails", growth_tails),
        ("sanity suite", sanity_suite),
    ];
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let id = i + 1;
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let t = Instant::now();
        let (ok, detail) = match std::panic::catch_unwind(check) {
            Ok(r) => r,
            Err(e) => {
                let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
                (false, format!("panicked: {}", msg.unwrap_or_default()))
            }
        };
        if !ok {
            failed += 1;
        }
        println!(
            "{} criterion {id:2} {name}: {detail} [{:.1} s]",
            if ok { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
