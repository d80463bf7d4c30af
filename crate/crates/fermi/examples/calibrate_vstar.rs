//! Smallest energy with 1% normal-form error.

use fermi::charts::Charts;
use fermi::maps::{calibrate_vstar, NormalForm};
use fermi::model::ModelParams;

fn main() {
    let p = ModelParams::default_model();
    let levels: Vec<f64> = (0..8).map(|j| 4.0 * 2f64.powi(j)).collect();
    let c = calibrate_vstar(&NormalForm::new(&p), &Charts::new(&p), &levels, 100, 0.01, 1);
    for l in &c.levels {
        println!("H {:>6}: {:.3e}", l.level, l.relative_err);
    }
    println!("V* = {:?}", c.v_star);
}
