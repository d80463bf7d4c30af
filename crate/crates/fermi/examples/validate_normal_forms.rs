//! Normal forms against the exact billiard at three energy levels.

use fermi::charts::Charts;
use fermi::fit::loglog;
use fermi::maps::{validate_normal_forms, MapId, NormalForm};
use fermi::model::ModelParams;

fn main() {
    let omega: f64 = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(17.0);
    let params = ModelParams::resonant(omega).unwrap();
    let nf = NormalForm::new(&params);
    let charts = Charts::new(&params);
    let levels = [250.0, 500.0, 1000.0];
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(100);
    let rows = validate_normal_forms(&nf, &charts, &levels, n, 7);
    for id in MapId::ALL {
        let r: Vec<_> = rows.iter().filter(|r| r.map == id).collect();
        let errs: Vec<f64> = r.iter().map(|r| r.err()).collect();
        let shown: Vec<f64> = r.iter().map(|r| r.err_first.max(r.err_second_displayed)).collect();
        println!(
            "{:5} errs {:?} slope {:.3} | displayed slope {:.3} | mismatches {}",
            id.name(),
            errs.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>(),
            loglog(&levels, &errs).slope,
            loglog(&levels, &shown).slope,
            r.iter().map(|r| r.mismatches).sum::<usize>()
        );
    }
}
