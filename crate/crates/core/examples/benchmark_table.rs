//! The benchmark pipeline end to end on two small targets: classical NUTS
//! against harvest + train + monitored surrogate NUTS, reported as a table
//! of gradient counts and ESS per gradient.
//!
//! Run with `cargo run --release --example benchmark_table`.

use lhnn_nuts::app::{cli_benchmark, RunConfig};
use lhnn_nuts::diagnostics::format_report;

const CONFIG: &str = r#"{
  "seed": 5,
  "network": { "hidden": [32, 32], "activation": "sine" },
  "harvest": {
    "n_trajectories": 20,
    "steps_per_trajectory": 100,
    "step_size": 0.1,
    "init": { "kind": "warm_nuts", "n_samples": 50, "step_size": 0.2 }
  },
  "train": { "epochs": 400, "learning_rate": 0.003 },
  "sampler": { "n_samples": 3000, "step_size": 0.1, "mode": "lhnn_monitored" },
  "benchmark": {
    "targets": [
      { "target": { "family": "gaussian", "dim": 3 } },
      {
        "target": { "family": "rosenbrock", "dim": 2 },
        "sampler": { "n_samples": 3000, "step_size": 0.05, "mode": "lhnn_monitored" }
      }
    ]
  }
}"#;

fn main() -> lhnn_nuts::Result<()> {
    let cfg: RunConfig = serde_json::from_str(CONFIG)?;
    let out = std::env::temp_dir().join("lhnn_benchmark_example");
    let rows = cli_benchmark(&cfg, &out)?;
    print!("{}", format_report(&rows, cfg.report.ess_variant));
    for r in &rows {
        println!(
            "{:<12} {:<16} fallback {:.3}  surrogate evals {}",
            r.target,
            r.mode.as_str(),
            r.fallback_fraction,
            r.surrogate_evals
        );
    }
    println!("artifacts in {}", out.display());
    Ok(())
}
