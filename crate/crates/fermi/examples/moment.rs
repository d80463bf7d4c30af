//! Exponential moment of the delayed log-energy gain, with the null control.

use fermi::config::RunConfig;
use fermi::stats::{moment_check, run_ensemble};

fn main() {
    for cfg in [RunConfig::large_omega(), RunConfig::null_control()] {
        let mut cfg = cfg;
        cfg.ensemble.n_orbits = 2000;
        let setup = cfg.setup().unwrap();
        let records = run_ensemble(&cfg.ensemble_config(&setup), &setup.ensemble()).unwrap();
        let n0 = cfg.ensemble.n0;
        let m = moment_check(&records, cfg.stats.eta / n0 as f64, n0, 1).unwrap();
        println!("f1 {:.2} f2 {:.2}: {:.5} [{:.5}, {:.5}]", setup.params.f1, setup.params.f2, m.mean, m.lo, m.hi);
    }
}
