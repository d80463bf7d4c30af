//! Bernoulli reference walk and its Hoeffding bound.

use fermi::stats::bernoulli_walk;

fn main() {
    let w = bernoulli_walk(0.99, 0.4, 0.6, 1000, 20_000, 0.02, 3);
    println!("h {:.5}, empirical {:.5}", w.h, w.empirical_mean);
    for t in &w.tail {
        println!("n {:>4}: below {:.4}, bound {:.4}", t.n, t.empirical, t.hoeffding);
    }
}
