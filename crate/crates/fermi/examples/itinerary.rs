//! Route-sign patterns of an ensemble against the product law.

use fermi::config::RunConfig;
use fermi::stats::{itinerary_stats, run_ensemble};

fn main() {
    let mut cfg = RunConfig::large_omega();
    cfg.ensemble.n_orbits = 2000;
    let setup = cfg.setup().unwrap();
    let records = run_ensemble(&cfg.ensemble_config(&setup), &setup.ensemble()).unwrap();
    let s = itinerary_stats(&records, 3, setup.params.f2).unwrap();
    for row in &s.rows {
        let pat: String = row.pattern.iter().map(|&x| if x > 0 { '+' } else { '-' }).collect();
        println!("{pat}: {:.4} vs {:.4}", row.empirical, row.predicted);
    }
    println!("TV {:.4} over {} orbits", s.tv, s.samples);
}
