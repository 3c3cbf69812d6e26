//! Classical NUTS on a 2-D standard Gaussian.
//!
//! Run with `cargo run --release --example classical_gaussian`.

use lhnn_nuts::diagnostics::ess;
use lhnn_nuts::{nuts_sample, SamplerConfig, SamplerMode, TargetDensity};

fn main() -> lhnn_nuts::Result<()> {
    let target = TargetDensity::standard_gaussian(2);
    let cfg = SamplerConfig::new(SamplerMode::Classical, 5000, 0.2, 42);
    let chain = nuts_sample(&target, None, &cfg)?;

    let burn_in = 500;
    let kept = &chain.samples[burn_in..];
    let n = kept.len() as f64;
    for k in 0..2 {
        let mean = kept.iter().map(|q| q[k]).sum::<f64>() / n;
        let var = kept.iter().map(|q| (q[k] - mean).powi(2)).sum::<f64>() / n;
        println!("q_{}: mean {mean:+.3}  variance {var:.3}", k + 1);
    }
    let report = ess(&chain.samples, burn_in)?;
    println!("ESS per dimension: {:?}", report.per_dimension);
    println!(
        "{} exact gradients ({:.1} per sample), {} divergent transitions",
        chain.ledger.exact_gradients,
        chain.ledger.exact_gradients as f64 / chain.samples.len() as f64,
        chain.n_divergent
    );
    Ok(())
}
