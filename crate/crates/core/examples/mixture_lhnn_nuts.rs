//! Surrogate-driven NUTS with error monitoring on the 2-D eight-Gaussian
//! mixture, against classical NUTS at the same sample count.
//!
//! Uses `configs/mixture_desk.json`. Training takes several minutes on one core.
//! Run with `cargo run --release --example mixture_lhnn_nuts`.

use lhnn_nuts::app::{train_resolved, Command, RunConfig};
use lhnn_nuts::diagnostics::{ess, mode_occupancy};
use lhnn_nuts::{nuts_sample, SamplerMode};

fn main() -> lhnn_nuts::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cfg: RunConfig = serde_json::from_str(include_str!("../configs/mixture_desk.json"))?;
    let r = cfg.validate_for(Command::Train)?.remove(0);
    let means = r.target.mixture_means().expect("mixture target").to_vec();

    let trained = train_resolved(&r, cfg.seed)?;
    let harvest = trained.dataset.meta.exact_gradients;
    println!(
        "surrogate: {} records, final loss {:.2e}, {:.0}s",
        trained.dataset.len(),
        trained.outcome.final_loss,
        trained.seconds
    );

    let burn_in = cfg.report.burn_in(r.sampler.as_ref().unwrap().n_samples);
    for mode in [SamplerMode::LhnnMonitored, SamplerMode::Classical] {
        let scfg = r.sampler_for(mode).unwrap();
        let net = mode.uses_surrogate().then_some(&trained.outcome.net as &dyn lhnn_nuts::SurrogateGradient);
        let chain = nuts_sample(&r.target, net, &scfg)?;
        let spent = chain.ledger.exact_gradients + if net.is_some() { harvest } else { 0 };
        let report = ess(&chain.samples, burn_in)?;
        let occ = mode_occupancy(&chain.samples[burn_in..], &means)?;
        println!("\n{}", mode.as_str());
        println!("  exact gradients   {spent} (harvest {})", if net.is_some() { harvest } else { 0 });
        println!("  surrogate evals   {}", chain.ledger.surrogate_evals);
        println!("  fallback fraction {:.3}", chain.fallback_fraction());
        println!("  min ESS           {:.1}", report.min);
        println!("  ESS / gradient    {:.3e}", report.min / spent as f64);
        let occ: Vec<String> = occ.iter().map(|o| format!("{:.3}", o)).collect();
        println!("  mode occupancy    [{}]", occ.join(", "));
    }
    Ok(())
}
