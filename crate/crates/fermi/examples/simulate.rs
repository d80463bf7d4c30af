//! Exact billiard trace: the first events from the right floor.

use fermi::billiard::Billiard;
use fermi::model::ModelParams;

fn main() {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let p = ModelParams::default_model();
    let b = Billiard::new(&p);
    let mut s = b.on_floor(0.3, 200.0).unwrap();
    for _ in 0..n {
        let (e, next) = b.next_collision(&s).unwrap();
        println!("{:<12} t {:>12.6} v {:>12.4}", format!("{:?}", e.surface), e.t, e.v_after);
        s = next;
    }
}
