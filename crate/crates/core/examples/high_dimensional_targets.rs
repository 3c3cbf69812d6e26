//! Short classical chains on the higher-dimensional benchmark posteriors:
//! 10-D Rosenbrock, 24-D Bayesian logistic regression and 100-D rough well.
//!
//! Run with `cargo run --release --example high_dimensional_targets`.

use lhnn_nuts::diagnostics::ess;
use lhnn_nuts::targets::DatasetSource;
use lhnn_nuts::{nuts_sample, SamplerConfig, SamplerMode, TargetDensity, TargetSpec};

fn main() -> lhnn_nuts::Result<()> {
    let cases = [
        (TargetSpec::Rosenbrock { dim: 10, a: 5.0, b: 1.0 }, 0.025),
        (
            TargetSpec::LogisticRegression {
                dataset: DatasetSource::Synthetic {
                    n_rows: 500,
                    n_features: 23,
                    seed: 7,
                },
                alpha: 1.0,
            },
            0.05,
        ),
        (
            TargetSpec::RoughWell {
                dim: 100,
                sigma: 1.0,
                eta: 0.01,
                epsilon: 0.01,
            },
            0.01,
        ),
    ];
    for (spec, dt) in cases {
        let target = TargetDensity::build(&spec)?;
        let cfg = SamplerConfig::new(SamplerMode::Classical, 1000, dt, 1);
        let chain = nuts_sample(&target, None, &cfg)?;
        let report = ess(&chain.samples, 100)?;
        println!(
            "{:<20} d={:<4} min ESS {:>7.1}  mean ESS {:>7.1}  gradients {:>8}  {:.1}s",
            target.name(),
            target.dim(),
            report.min,
            report.mean,
            chain.ledger.exact_gradients,
            chain.elapsed.as_secs_f64()
        );
    }
    Ok(())
}
