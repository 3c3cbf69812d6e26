//! Why error monitoring matters: a surrogate fitted to a single short
//! trajectory is badly wrong almost everywhere. Without monitoring, NUTS
//! keeps stopping early and repeats samples; with monitoring it falls back
//! to exact gradients instead.
//!
//! Uses `configs/mixture_degeneracy.json`.
//! Run with `cargo run --release --example degeneracy`.

use lhnn_nuts::app::{train_resolved, Command, RunConfig};
use lhnn_nuts::diagnostics::{degeneracy_score, mode_occupancy};
use lhnn_nuts::{nuts_sample, SamplerMode};

fn main() -> lhnn_nuts::Result<()> {
    let cfg: RunConfig = serde_json::from_str(include_str!("../configs/mixture_degeneracy.json"))?;
    let r = cfg.validate_for(Command::Train)?.remove(0);
    let trained = train_resolved(&r, cfg.seed)?;
    println!(
        "surrogate trained on {} records (loss {:.2e})",
        trained.dataset.len(),
        trained.outcome.final_loss
    );
    let means = r.target.mixture_means().unwrap();
    for mode in [SamplerMode::LhnnUnmonitored, SamplerMode::LhnnMonitored] {
        let scfg = r.sampler_for(mode).unwrap();
        let chain = nuts_sample(&r.target, Some(&trained.outcome.net), &scfg)?;
        let occ = mode_occupancy(&chain.samples, means)?;
        println!(
            "{:<18} repeated samples {:.4}  within 0.05: {:.4}  divergent {:>5}  exact gradients {:>8}  occupancy min {:.3}",
            mode.as_str(),
            degeneracy_score(&chain.samples, cfg.report.degeneracy_radius)?,
            degeneracy_score(&chain.samples, 0.05)?,
            chain.n_divergent,
            chain.ledger.exact_gradients,
            occ.iter().copied().fold(f64::INFINITY, f64::min)
        );
    }
    Ok(())
}
