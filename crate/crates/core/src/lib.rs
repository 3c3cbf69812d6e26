//! No-U-Turn sampling with latent Hamiltonian neural network surrogates.
//!
//! The crate is organised bottom-up:
//!
//! - [`targets`]: benchmark posteriors and the Hamiltonian `U(q) + K(p)`.
//! - [`network`]: the latent Hamiltonian network and its exact gradients.
//! - [`integrate`]: leapfrog integration with exact or surrogate gradients.
//! - [`train`]: training-data harvesting and network fitting.
//! - [`sampler`]: NUTS, classical or surrogate-driven with error monitoring.
//! - [`diagnostics`]: ESS, energy traces, occupancy and stickiness metrics.
//! - [`app`]: configuration, checkpoints and the end-to-end pipelines behind
//!   the `lhnn` binary.

pub mod app;
pub mod diagnostics;
pub mod error;
pub mod integrate;
pub mod network;
pub mod sampler;
pub mod targets;
pub mod train;

pub use error::{Error, Result};
pub use integrate::{GradientKind, GradientSource, IntegratorConfig, SurrogateGradient};
pub use network::{Activation, Lhnn};
pub use sampler::{nuts_sample, ChainResult, SamplerConfig, SamplerMode};
pub use targets::{PhaseState, TargetDensity, TargetSpec};
pub use train::{harvest_training_data, train_lhnn, HarvestConfig, TrainConfig, TrainingDataset};
