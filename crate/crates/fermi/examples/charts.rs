//! Adiabatic charts: phase functions and a round trip through each chart.

use fermi::charts::{AdiabaticPoint, Chart, Charts};
use fermi::model::{ModelParams, Side};

fn main() {
    let p = ModelParams::default_model();
    let charts = Charts::new(&p);
    println!("period phases: upper {:.6}, lower {:.6}", charts.period_phase(Side::Upper), charts.period_phase(Side::Lower));
    for t in [0.1, 0.5, 0.9, 1.3, 1.7] {
        println!("t {t:.1}: theta {:.6} zeta {:.6}", charts.theta(t), charts.zeta(t));
    }
    for chart in [Chart::U, Chart::L, Chart::F] {
        let a = AdiabaticPoint { chart, angle: 0.7, action: 5000.0 };
        let (t, v) = charts.from_adiabatic(a).unwrap();
        let back = charts.to_adiabatic(t, v, chart).unwrap();
        println!("{chart:?}: (t, v) = ({t:.6}, {v:.3}), back to angle {:.12} action {:.6}", back.angle, back.action);
    }
}
