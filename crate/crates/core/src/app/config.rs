//! Run configuration: one JSON document drives every subcommand.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diagnostics::EssVariant;
use crate::error::{Error, Result};
use crate::network::Activation;
use crate::sampler::{SamplerConfig, SamplerMode};
use crate::targets::{TargetDensity, TargetSpec};
use crate::train::{HarvestConfig, TrainConfig};

/// Architecture of the surrogate. Input and output widths follow from the
/// target dimension; `dim`, when given, must agree with it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkBlock {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Initialization seed; the run seed when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for NetworkBlock {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            dim: None,
            hidden: t.hidden,
            activation: t.activation,
            seed: None,
        }
    }
}

/// Optimizer settings. The architecture lives in [`NetworkBlock`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainBlock {
    pub epochs: usize,
    pub learning_rate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_learning_rate: Option<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub minibatch_threshold: usize,
    pub batch_size: usize,
}

impl Default for TrainBlock {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            final_learning_rate: t.final_learning_rate,
            beta1: t.beta1,
            beta2: t.beta2,
            adam_epsilon: t.adam_epsilon,
            minibatch_threshold: t.minibatch_threshold,
            batch_size: t.batch_size,
        }
    }
}

impl TrainBlock {
    pub fn to_train_config(&self, network: &NetworkBlock, run_seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            final_learning_rate: self.final_learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            adam_epsilon: self.adam_epsilon,
            minibatch_threshold: self.minibatch_threshold,
            batch_size: self.batch_size,
            hidden: network.hidden.clone(),
            activation: network.activation,
            seed: network.seed.unwrap_or(run_seed),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportOptions {
    /// Leading fraction of each chain dropped before ESS and occupancy.
    pub burn_in_fraction: f64,
    pub ess_variant: EssVariant,
    /// Energy traces emitted by `diagnose`.
    pub n_traces: usize,
    pub trace_steps: usize,
    /// Step size for traces; the sampler step size when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace_step_size: Option<f64>,
    pub degeneracy_radius: f64,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            burn_in_fraction: 0.1,
            ess_variant: EssVariant::Min,
            n_traces: 5,
            trace_steps: 500,
            trace_step_size: None,
            degeneracy_radius: 1e-6,
        }
    }
}

impl ReportOptions {
    pub fn burn_in(&self, n: usize) -> usize {
        (self.burn_in_fraction * n as f64).floor() as usize
    }
}

/// One benchmark row. Blocks left out fall back to the top-level ones.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkEntry {
    pub target: TargetSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub network: Option<NetworkBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub harvest: Option<HarvestConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampler: Option<SamplerConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkBlock {
    pub targets: Vec<BenchmarkEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<TargetSpec>,
    #[serde(default)]
    pub network: NetworkBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub harvest: Option<HarvestConfig>,
    #[serde(default)]
    pub train: TrainBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampler: Option<SamplerConfig>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub report: ReportOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benchmark: Option<BenchmarkBlock>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Train,
    Sample,
    Benchmark,
    Diagnose,
}

/// The blocks one pipeline needs, with benchmark overrides applied.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub spec: TargetSpec,
    pub target: TargetDensity,
    pub network: NetworkBlock,
    pub harvest: Option<HarvestConfig>,
    pub train: TrainBlock,
    pub sampler: Option<SamplerConfig>,
}

impl RunConfig {
    /// Reads and parses a config file. Unreadable or malformed files are
    /// validation errors.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Validation(vec![format!("cannot read config {}: {e}", path.display())]))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Validation(vec![format!("config {}: {e}", path.display())]))
    }

    /// Replaces every seed in the config.
    pub fn override_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.network.seed = Some(seed);
        if let Some(s) = &mut self.sampler {
            s.seed = seed;
        }
        if let Some(b) = &mut self.benchmark {
            for e in &mut b.targets {
                if let Some(n) = &mut e.network {
                    n.seed = Some(seed);
                }
                if let Some(s) = &mut e.sampler {
                    s.seed = seed;
                }
            }
        }
    }

    /// SHA-256 of the canonical JSON serialization, hex encoded.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }

    fn resolve_entry(
        &self,
        label: &str,
        spec: &TargetSpec,
        entry: Option<&BenchmarkEntry>,
        cmd: Command,
        errs: &mut Vec<String>,
    ) -> Option<Resolved> {
        let network = entry
            .and_then(|e| e.network.clone())
            .unwrap_or_else(|| self.network.clone());
        let harvest = entry
            .and_then(|e| e.harvest.clone())
            .or_else(|| self.harvest.clone());
        let train = entry
            .and_then(|e| e.train.clone())
            .unwrap_or_else(|| self.train.clone());
        let sampler = entry
            .and_then(|e| e.sampler.clone())
            .or_else(|| self.sampler.clone());

        let spec_errs = spec.validate();
        let spec_ok = spec_errs.is_empty();
        let mut local = spec_errs;
        let needs_net = match cmd {
            Command::Train | Command::Benchmark => true,
            Command::Sample => sampler.as_ref().is_some_and(|s| s.mode.uses_surrogate()),
            Command::Diagnose => false,
        };
        if needs_net {
            local.extend(train.to_train_config(&network, self.seed).validate());
        }
        match &harvest {
            Some(h) => local.extend(h.validate()),
            None if matches!(cmd, Command::Train | Command::Benchmark) => {
                local.push("harvest block is required".into())
            }
            None => {}
        }
        match &sampler {
            Some(s) if cmd == Command::Benchmark => {
                for mode in [SamplerMode::Classical, benchmark_surrogate_mode(s.mode)] {
                    let mut s = s.clone();
                    s.mode = mode;
                    local.extend(s.validate());
                }
                local.dedup();
            }
            Some(s) => local.extend(s.validate()),
            None if matches!(cmd, Command::Sample | Command::Benchmark) => {
                local.push("sampler block is required".into())
            }
            None => {}
        }

        let target = if spec_ok {
            match TargetDensity::build(spec) {
                Ok(t) => Some(t),
                Err(e) => {
                    local.push(format!("target: {e}"));
                    None
                }
            }
        } else {
            None
        };
        if let Some(t) = &target {
            if let Some(d) = network.dim {
                if d != t.dim() {
                    local.push(format!(
                        "target.dim ({}) does not match network.dim ({d})",
                        t.dim()
                    ));
                }
            }
            if let Some(q) = sampler.as_ref().and_then(|s| s.initial_position.as_ref()) {
                if q.len() != t.dim() {
                    local.push(format!(
                        "sampler.initial_position has length {} but target.dim is {}",
                        q.len(),
                        t.dim()
                    ));
                }
            }
        }
        if !local.is_empty() {
            errs.extend(local.into_iter().map(|e| format!("{label}{e}")));
            return None;
        }
        Some(Resolved {
            spec: spec.clone(),
            target: target?,
            network,
            harvest,
            train,
            sampler,
        })
    }

    /// Checks everything `cmd` will need, collecting every problem, and
    /// returns the resolved blocks (one per benchmark row, or one).
    pub fn validate_for(&self, cmd: Command) -> Result<Vec<Resolved>> {
        let mut errs = Vec::new();
        if !(0.0..1.0).contains(&self.report.burn_in_fraction) {
            errs.push(format!(
                "report.burn_in_fraction must be in [0, 1) (got {})",
                self.report.burn_in_fraction
            ));
        }
        if !(self.report.degeneracy_radius > 0.0) {
            errs.push("report.degeneracy_radius must be positive".into());
        }
        if cmd == Command::Diagnose {
            if self.report.trace_steps == 0 && self.report.n_traces > 0 {
                errs.push("report.trace_steps must be positive".into());
            }
            let dt = self
                .report
                .trace_step_size
                .or(self.sampler.as_ref().map(|s| s.step_size));
            match dt {
                Some(dt) if dt.is_finite() && dt > 0.0 => {}
                Some(dt) => errs.push(format!("trace step size must be positive (got {dt})")),
                None if self.report.n_traces > 0 => errs.push(
                    "traces need report.trace_step_size or a sampler block".into(),
                ),
                None => {}
            }
        }

        let mut resolved = Vec::new();
        if cmd == Command::Benchmark {
            match &self.benchmark {
                None => errs.push("benchmark block is required".into()),
                Some(b) if b.targets.is_empty() => {
                    errs.push("benchmark.targets must list at least one target".into())
                }
                Some(b) => {
                    for (i, e) in b.targets.iter().enumerate() {
                        let label = format!("benchmark.targets[{i}]: ");
                        if let Some(r) = self.resolve_entry(&label, &e.target, Some(e), cmd, &mut errs) {
                            resolved.push(r);
                        }
                    }
                }
            }
        } else {
            match &self.target {
                None => errs.push("target block is required".into()),
                Some(spec) => {
                    if let Some(r) = self.resolve_entry("", spec, None, cmd, &mut errs) {
                        resolved.push(r);
                    }
                }
            }
        }
        if errs.is_empty() {
            Ok(resolved)
        } else {
            Err(Error::Validation(errs))
        }
    }
}

/// The surrogate mode a benchmark compares against classical NUTS: the
/// configured one, or monitored when the config names classical.
pub fn benchmark_surrogate_mode(configured: SamplerMode) -> SamplerMode {
    if configured.uses_surrogate() {
        configured
    } else {
        SamplerMode::LhnnMonitored
    }
}

impl Resolved {
    pub fn sampler_for(&self, mode: SamplerMode) -> Option<SamplerConfig> {
        self.sampler.clone().map(|mut s| {
            s.mode = mode;
            s
        })
    }
}
