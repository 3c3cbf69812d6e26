//! Hamiltonian conservation along leapfrog paths on the mixture, with exact
//! and with surrogate gradients, written as a plot-ready CSV.
//!
//! Pass a checkpoint from `lhnn train --config configs/mixture_desk.json`
//! to skip training: `cargo run --release --example energy_traces -- out/mixture/checkpoint.json`.

use std::io::Write;

use lhnn_nuts::app::{train_resolved, Checkpoint, Command, RunConfig};
use lhnn_nuts::diagnostics::{hamiltonian_trace, max_energy_wander, random_phase_states, TraceSource};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> lhnn_nuts::Result<()> {
    let cfg: RunConfig = serde_json::from_str(include_str!("../configs/mixture_desk.json"))?;
    let r = cfg.validate_for(Command::Train)?.remove(0);
    let net = match std::env::args().nth(1) {
        Some(path) => Checkpoint::load(path)?.to_net()?,
        None => train_resolved(&r, cfg.seed)?.outcome.net,
    };

    let dt = r.sampler.as_ref().unwrap().step_size;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let path = std::env::temp_dir().join("mixture_traces.csv");
    let mut csv = std::io::BufWriter::new(std::fs::File::create(&path)?);
    writeln!(csv, "trace,t,h_exact,h_surrogate")?;
    for (k, z0) in random_phase_states(&r.target, 5, &mut rng).iter().enumerate() {
        let exact = hamiltonian_trace(&r.target, TraceSource::Exact, z0, dt, 500)?;
        let surrogate = hamiltonian_trace(&r.target, TraceSource::Surrogate(&net), z0, dt, 500)?;
        for ((t, he), (_, hs)) in exact.iter().zip(&surrogate) {
            writeln!(csv, "{k},{t},{he},{hs}")?;
        }
        println!(
            "trace {k}: H0 {:.3}  wander exact {:.2e}  surrogate {:.2e}",
            exact[0].1,
            max_energy_wander(&exact),
            max_energy_wander(&surrogate)
        );
    }
    csv.flush()?;
    println!("wrote {}", path.display());
    Ok(())
}
