//! Linear parts of the revolution maps, the common cone and its invariance.

use fermi::config::RunConfig;
use fermi::hyperbolic::{dg_matrices, eigen, expansion_rates, verify_cone_invariance, InvarianceConfig};

fn main() {
    let cfg = RunConfig::large_omega();
    let setup = cfg.setup().unwrap();
    for (part, m) in dg_matrices(&setup.params, &setup.consts) {
        let lu = eigen(&m).map_or(f64::NAN, |e| e.lambda_u);
        println!("{:>4}: det - 1 = {:.1e}, trace {:.2}, lambda_u {:.2}", part.name(), m.det() - 1.0, m.trace(), lu);
    }
    let Some(cone) = setup.cone else {
        println!("no common cone");
        return;
    };
    let rates = expansion_rates(&cone, &setup.params, &setup.consts);
    println!("{rates:?}");
    let v = cfg.thresholds.v_star;
    let inv = InvarianceConfig { samples: 20_000, h_min: v, h_max: 10.0 * v, seed: 1 };
    let r = verify_cone_invariance(&cone, &setup.nf(), &inv, true);
    println!("{} violations over {} samples, min stretch {:.2}", r.violations, r.samples, r.min_stretch);
}
