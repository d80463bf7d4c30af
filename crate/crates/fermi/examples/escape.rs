//! Escape fractions for the desk profile.

use fermi::config::RunConfig;
use fermi::stats::{drift_estimate, escape_curve, run_ensemble, NhatMode};

fn main() {
    let cfg = RunConfig::desk();
    let setup = cfg.setup().unwrap();
    let v = cfg.thresholds.v_star;
    let mut ec = cfg.ensemble_config(&setup);
    ec.n_orbits = 1000;
    ec.horizon = cfg.escape.horizon;
    ec.v_range = (v, 4.0 * v);
    ec.nhat = NhatMode::Off;
    let records = run_ensemble(&ec, &setup.ensemble()).unwrap();
    let d = drift_estimate(&records, cfg.ensemble.n0, 1).unwrap();
    let c = escape_curve(&records, d.mean / 2.0, &cfg.escape.ts);
    for (t, f) in c.ts.iter().zip(&c.fractions) {
        println!("T {t:>3}: {f:.4}");
    }
    println!("alpha {:.4}, slope {:.4}, R2 {:.3}", c.alpha, c.slope, c.r2);
}
