//! Fit a latent Hamiltonian network to the harmonic oscillator
//! `H = q²/2 + p²/2`, check its input gradients against `(q, p)`, and
//! round-trip it through a checkpoint.
//!
//! Run with `cargo run --release --example train_oscillator`.

use lhnn_nuts::app::{Checkpoint, CheckpointMeta};
use lhnn_nuts::train::HarvestInit;
use lhnn_nuts::{
    harvest_training_data, train_lhnn, Activation, HarvestConfig, TargetDensity, TrainConfig,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> lhnn_nuts::Result<()> {
    let target = TargetDensity::standard_gaussian(1);
    let harvest = HarvestConfig {
        n_trajectories: 10,
        steps_per_trajectory: 49,
        step_size: 0.1,
        init: HarvestInit::Box {
            lower: -2.0,
            upper: 2.0,
        },
        momentum_refresh: None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let data = harvest_training_data(&target, &harvest, 0, &mut rng)?;
    println!("{} records, {} exact gradients", data.len(), data.meta.exact_gradients);

    let cfg = TrainConfig {
        epochs: 2000,
        learning_rate: 5e-3,
        hidden: vec![16, 16],
        activation: Activation::Tanh,
        ..TrainConfig::default()
    };
    let out = train_lhnn(&data, &cfg)?;
    println!("loss {:.3e} -> {:.3e}", out.history[0], out.final_loss);

    let mut worst = 0.0f64;
    for r in &data.records {
        let g = out.net.input_gradient(&r.z.to_input())?;
        worst = worst.max((g[0] - r.z.q[0]).abs()).max((g[1] - r.z.p[0]).abs());
    }
    println!("max |∇H_θ − (q, p)| over the training data: {worst:.4}");

    let ck = Checkpoint::from_net(
        &out.net,
        CheckpointMeta {
            seed: cfg.seed,
            train: cfg.clone(),
            dataset_fingerprint: lhnn_nuts::app::dataset_fingerprint(&data),
            target: target.name().to_string(),
            harvest_gradients: data.meta.exact_gradients,
            final_loss: out.final_loss,
        },
    );
    let path = std::env::temp_dir().join("oscillator_checkpoint.json");
    ck.save(&path)?;
    let restored = Checkpoint::load(&path)?.to_net()?;
    println!("checkpoint {} restores identically: {}", path.display(), restored == out.net);
    Ok(())
}
