//! Orbit ensemble under the modified dynamics and its log-energy drift.

use fermi::config::RunConfig;
use fermi::model::drift_rate;
use fermi::stats::{drift_estimate, run_ensemble};

fn main() {
    let mut cfg = RunConfig::large_omega();
    cfg.ensemble.n_orbits = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let setup = cfg.setup().unwrap();
    let records = run_ensemble(&cfg.ensemble_config(&setup), &setup.ensemble()).unwrap();
    let d = drift_estimate(&records, cfg.ensemble.n0, 1).unwrap();
    let e = drift_rate(setup.params.f1, setup.params.f2).unwrap();
    println!("{} orbits: drift {:.5} [{:.5}, {:.5}], E = {e:.5}", d.n, d.mean, d.lo, d.hi);
}
