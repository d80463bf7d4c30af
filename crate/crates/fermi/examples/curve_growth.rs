//! Complexity of cut curves and geometric tails of the growth statistics.

use fermi::config::RunConfig;
use fermi::curves::{complexity_scan, growth_statistics, ComplexityConfig, GrowthConfig, Stepper};
use fermi::hyperbolic::{complexity_delta0, expansion_rates};

fn main() {
    let cfg = RunConfig::large_omega();
    let setup = cfg.setup().unwrap();
    let v = cfg.thresholds.v_star;
    let st = Stepper::new(setup.nf(), Some(setup.modcfg));
    let ccfg = setup.curve_config();
    let cone = setup.cone.unwrap();
    let rates = expansion_rates(&cone, &setup.params, &setup.consts);
    let run = ComplexityConfig {
        delta0: complexity_delta0(&cone, &setup.params, &rates),
        trials: 200,
        h_range: (10.0 * v, 40.0 * v),
        seed: 1,
    };
    let r = complexity_scan(&st, &ccfg, &run).unwrap();
    println!("delta0 {:.3e}: pieces histogram {:?}", r.delta0, r.histogram);

    let g = GrowthConfig {
        curves: 20_000,
        points: 2000,
        trajectories: 200,
        horizon: 12,
        n0: 5,
        theta1: cfg.theta1(&setup),
        epochs: vec![1, 2, 4],
        h_range: (10.0 * v, 40.0 * v),
        seed: 7,
        floor: 1e-12,
    };
    let r = growth_statistics(&st, &ccfg, &g).unwrap();
    println!("N-bar tail theta {:.3e} R2 {:.3}", r.nbar_fit.theta, r.nbar_fit.r2);
    println!("N-hat tail theta {:.3e} R2 {:.3}", r.nhat_fit.theta, r.nhat_fit.r2);
}
