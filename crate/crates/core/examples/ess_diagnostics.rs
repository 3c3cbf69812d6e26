//! Effective sample size of synthetic chains with known answers: an AR(1)
//! process and independent draws.
//!
//! Run with `cargo run --release --example ess_diagnostics`.

use lhnn_nuts::diagnostics::{ess, ess_1d};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn main() -> lhnn_nuts::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 10_000;
    for rho in [0.0, 0.5, 0.9, 0.99] {
        let mut x = 0.0;
        let chain: Vec<f64> = (0..n)
            .map(|_| {
                x = rho * x + rng.sample::<f64, _>(StandardNormal);
                x
            })
            .collect();
        let exact = n as f64 * (1.0 - rho) / (1.0 + rho);
        let est = ess_1d(&chain).unwrap_or(1.0);
        println!("AR(1) rho={rho:<5} ESS {est:>8.1}   asymptotic {exact:>8.1}");
    }

    let iid: Vec<Vec<f64>> = (0..4000)
        .map(|_| (0..3).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    let report = ess(&iid, 0)?;
    println!("iid 3-D, n=4000: per dimension {:?}", report.per_dimension);

    let constant = vec![vec![1.0]; 100];
    let report = ess(&constant, 0)?;
    println!("constant chain: ESS {:?}, degenerate dims {:?}", report.per_dimension, report.degenerate);
    Ok(())
}
