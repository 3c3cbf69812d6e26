//! Training-data harvesting from exact-gradient trajectories and L-HNN
//! fitting.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::integrate::{leapfrog_step_cached, GradientSource, IntegratorConfig};
use crate::network::{Activation, Lhnn};
use crate::sampler::{nuts_sample_with_rng, SamplerConfig, SamplerMode};
use crate::targets::{PhaseState, TargetDensity};

/// One phase-space point with its exact time derivatives.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingRecord {
    pub z: PhaseState,
    /// `p / m`.
    pub dq_dt: Vec<f64>,
    /// `−∇U(q)`.
    pub dp_dt: Vec<f64>,
}

/// How trajectory starting positions are chosen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HarvestInit {
    /// Uniform in `[lower, upper]^d`.
    Box { lower: f64, upper: f64 },
    /// Draws from a short classical NUTS run; its gradients are charged to
    /// the harvest.
    WarmNuts {
        n_samples: usize,
        step_size: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        initial_position: Option<Vec<f64>>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarvestConfig {
    pub n_trajectories: usize,
    pub steps_per_trajectory: usize,
    pub step_size: f64,
    pub init: HarvestInit,
    /// Redraw the momentum every this many steps. Trajectories started far
    /// out in the tails otherwise carry their excess potential energy as
    /// kinetic energy through the high-density region.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub momentum_refresh: Option<usize>,
}

impl HarvestConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.n_trajectories == 0 {
            errs.push("harvest.n_trajectories must be positive".into());
        }
        if self.steps_per_trajectory == 0 {
            errs.push("harvest.steps_per_trajectory must be positive".into());
        }
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            errs.push(format!("harvest.step_size must be positive (got {})", self.step_size));
        }
        if self.momentum_refresh == Some(0) {
            errs.push("harvest.momentum_refresh must be positive".into());
        }
        match &self.init {
            HarvestInit::Box { lower, upper } => {
                if !(lower.is_finite() && upper.is_finite() && lower < upper) {
                    errs.push(format!("harvest box [{lower}, {upper}] is empty or not finite"));
                }
            }
            HarvestInit::WarmNuts {
                n_samples,
                step_size,
                ..
            } => {
                if *n_samples == 0 {
                    errs.push("harvest.init.n_samples must be positive".into());
                }
                if !(step_size.is_finite() && *step_size > 0.0) {
                    errs.push("harvest.init.step_size must be positive".into());
                }
            }
        }
        errs
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub target: String,
    pub step_size: f64,
    pub harvest: HarvestConfig,
    pub seed: u64,
    /// Exact posterior gradients spent producing the data.
    pub exact_gradients: u64,
    pub failed_trajectories: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingDataset {
    pub records: Vec<TrainingRecord>,
    pub meta: DatasetMeta,
}

impl TrainingDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.records.first().map_or(0, |r| r.z.dim())
    }

    /// Writes `q_*, p_*, dqdt_*, dpdt_*` columns plus a `.meta.json` sidecar.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let d = self.dim();
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        let header: Vec<String> = ["q", "p", "dqdt", "dpdt"]
            .iter()
            .flat_map(|prefix| (1..=d).map(move |i| format!("{prefix}_{i}")))
            .collect();
        writeln!(out, "{}", header.join(","))?;
        for r in &self.records {
            let row: Vec<String> = r
                .z
                .q
                .iter()
                .chain(&r.z.p)
                .chain(&r.dq_dt)
                .chain(&r.dp_dt)
                .map(|v| v.to_string())
                .collect();
            writeln!(out, "{}", row.join(","))?;
        }
        out.flush()?;
        std::fs::write(meta_path(path), serde_json::to_string_pretty(&self.meta)?)?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let meta: DatasetMeta = serde_json::from_str(&std::fs::read_to_string(meta_path(path))?)?;
        let mut reader = csv::Reader::from_path(path)?;
        let width = reader.headers()?.len();
        if width == 0 || width % 4 != 0 {
            return Err(Error::Dataset(format!(
                "{}: expected 4·d columns, found {width}",
                path.display()
            )));
        }
        let d = width / 4;
        let mut records = Vec::new();
        for row in reader.records() {
            let row = row?;
            let vals = row
                .iter()
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|_| Error::Dataset(format!("bad number `{f}`")))
                })
                .collect::<Result<Vec<_>>>()?;
            records.push(TrainingRecord {
                z: PhaseState::new(vals[..d].to_vec(), vals[d..2 * d].to_vec())?,
                dq_dt: vals[2 * d..3 * d].to_vec(),
                dp_dt: vals[3 * d..].to_vec(),
            });
        }
        Ok(Self { records, meta })
    }
}

fn meta_path(path: &Path) -> PathBuf {
    let mut name = path.file_stem().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    path.with_file_name(name)
}

/// Integrates exact-gradient leapfrog trajectories and records every visited
/// state with its analytic time derivatives (unit masses). Gradients are
/// reused along each trajectory, so a trajectory of `n` steps costs `n + 1`
/// exact gradients.
pub fn harvest_training_data<R: Rng + ?Sized>(
    target: &TargetDensity,
    cfg: &HarvestConfig,
    seed: u64,
    rng: &mut R,
) -> Result<TrainingDataset> {
    let errs = cfg.validate();
    if !errs.is_empty() {
        return Err(Error::Validation(errs));
    }
    let d = target.dim();
    let mut warm_gradients = 0;
    let starts: Vec<Vec<f64>> = match &cfg.init {
        HarvestInit::Box { lower, upper } => (0..cfg.n_trajectories)
            .map(|_| (0..d).map(|_| rng.random_range(*lower..*upper)).collect())
            .collect(),
        HarvestInit::WarmNuts {
            n_samples,
            step_size,
            initial_position,
        } => {
            let mut warm = SamplerConfig::new(SamplerMode::Classical, *n_samples, *step_size, seed);
            warm.initial_position.clone_from(initial_position);
            let chain = nuts_sample_with_rng(target, None, &warm, rng)?;
            warm_gradients = chain.ledger.exact_gradients;
            (0..cfg.n_trajectories)
                .map(|_| chain.samples[rng.random_range(0..chain.samples.len())].clone())
                .collect()
        }
    };

    let integ = IntegratorConfig::new(cfg.step_size);
    let mut src = GradientSource::exact(target);
    let mut records = Vec::with_capacity(cfg.n_trajectories * (cfg.steps_per_trajectory + 1));
    let mut failed = 0;
    for q0 in starts {
        let p0: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let mut z = PhaseState::new(q0, p0)?;
        let mut grad = src.grad_potential(&z.q, &z.p)?;
        records.push(record_for(&z, &grad));
        for step in 1..=cfg.steps_per_trajectory {
            let cache = crate::integrate::CachedGradient {
                kind: src.kind(),
                values: grad,
            };
            match leapfrog_step_cached(&mut src, &integ, &z, 1.0, Some(&cache)) {
                Ok((next, g)) => {
                    z = next;
                    grad = g.values;
                    if cfg.momentum_refresh.is_some_and(|k| step % k == 0) {
                        z.p.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
                    }
                    records.push(record_for(&z, &grad));
                }
                Err(e) => {
                    log::warn!("harvest trajectory aborted: {e}");
                    failed += 1;
                    break;
                }
            }
        }
    }
    Ok(TrainingDataset {
        records,
        meta: DatasetMeta {
            target: target.name().to_string(),
            step_size: cfg.step_size,
            harvest: cfg.clone(),
            seed,
            exact_gradients: src.evaluations() + warm_gradients,
            failed_trajectories: failed,
        },
    })
}

fn record_for(z: &PhaseState, grad_u: &[f64]) -> TrainingRecord {
    TrainingRecord {
        z: z.clone(),
        dq_dt: z.p.clone(),
        dp_dt: grad_u.iter().map(|g| -g).collect(),
    }
}

fn default_epochs() -> usize {
    2000
}
fn default_lr() -> f64 {
    1e-3
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_adam_eps() -> f64 {
    1e-8
}
fn default_hidden() -> Vec<usize> {
    vec![100, 100, 100]
}
fn default_minibatch_threshold() -> usize {
    4096
}
fn default_batch_size() -> usize {
    1024
}

/// Optimizer settings and the architecture to train.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    /// Learning rate reached at the last epoch (geometric schedule). Constant
    /// when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_learning_rate: Option<f64>,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_adam_eps")]
    pub adam_epsilon: f64,
    /// Datasets larger than this are trained in mini-batches.
    #[serde(default = "default_minibatch_threshold")]
    pub minibatch_threshold: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: default_epochs(),
            learning_rate: default_lr(),
            final_learning_rate: None,
            beta1: default_beta1(),
            beta2: default_beta2(),
            adam_epsilon: default_adam_eps(),
            minibatch_threshold: default_minibatch_threshold(),
            batch_size: default_batch_size(),
            hidden: default_hidden(),
            activation: Activation::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.epochs == 0 {
            errs.push("train.epochs must be positive".into());
        }
        let positive = [
            ("learning_rate", self.learning_rate),
            ("adam_epsilon", self.adam_epsilon),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                errs.push(format!("train.{name} must be positive (got {v})"));
            }
        }
        if let Some(v) = self.final_learning_rate {
            if !(v.is_finite() && v > 0.0) {
                errs.push(format!("train.final_learning_rate must be positive (got {v})"));
            }
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                errs.push(format!("train.{name} must be in [0, 1) (got {v})"));
            }
        }
        if self.batch_size == 0 {
            errs.push("train.batch_size must be positive".into());
        }
        if self.hidden.iter().any(|&h| h == 0) {
            errs.push("train.hidden widths must be positive".into());
        }
        errs
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub net: Lhnn,
    /// Mean training loss per epoch, measured during that epoch.
    pub history: Vec<f64>,
    /// Full-dataset loss of the returned network.
    pub final_loss: f64,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, net: &mut Lhnn, grad: &[f64], lr: f64, cfg: &TrainConfig) {
        self.t += 1;
        let (b1, b2) = (cfg.beta1, cfg.beta2);
        for ((m, v), g) in self.m.iter_mut().zip(&mut self.v).zip(grad) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
        }
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let (m, v) = (&self.m, &self.v);
        net.apply_update(|i, w| {
            *w -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + cfg.adam_epsilon);
        });
    }
}

/// Fits a fresh network to `dataset` by minimizing the physics loss with
/// Adam. Full-batch below `minibatch_threshold` records, shuffled
/// mini-batches above.
pub fn train_lhnn(dataset: &TrainingDataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    if dataset.is_empty() {
        return Err(Error::Empty("training dataset"));
    }
    let errs = cfg.validate();
    if !errs.is_empty() {
        return Err(Error::Validation(errs));
    }
    let net = Lhnn::new(dataset.dim(), &cfg.hidden, cfg.activation, cfg.seed)?;
    train_from(net, dataset, cfg)
}

/// Continues training an existing network.
pub fn train_from(mut net: Lhnn, dataset: &TrainingDataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    if dataset.is_empty() {
        return Err(Error::Empty("training dataset"));
    }
    check_dim("training data", net.dim(), dataset.dim())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_da7a);
    let mut adam = Adam::new(net.n_params());
    let records = &dataset.records;
    let full_batch = records.len() <= cfg.minibatch_threshold;
    let mut order: Vec<usize> = (0..records.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let decay = match cfg.final_learning_rate {
        Some(end) if cfg.epochs > 1 => (end / cfg.learning_rate).powf(1.0 / (cfg.epochs - 1) as f64),
        _ => 1.0,
    };
    let mut lr = cfg.learning_rate;
    for epoch in 0..cfg.epochs {
        let epoch_loss = if full_batch {
            let (loss, grad) = net.loss_and_gradient(records)?;
            check_loss(epoch, loss)?;
            adam.step(&mut net, &grad.to_flat(), lr, cfg);
            loss
        } else {
            order.shuffle(&mut rng);
            let mut total = 0.0;
            let mut batch = Vec::with_capacity(cfg.batch_size);
            for chunk in order.chunks(cfg.batch_size) {
                batch.clear();
                batch.extend(chunk.iter().map(|&i| records[i].clone()));
                let (loss, grad) = net.loss_and_gradient(&batch)?;
                check_loss(epoch, loss)?;
                adam.step(&mut net, &grad.to_flat(), lr, cfg);
                total += loss * chunk.len() as f64;
            }
            total / records.len() as f64
        };
        history.push(epoch_loss);
        if epoch % 100 == 0 {
            log::debug!("epoch {epoch}: loss {epoch_loss:.6e}");
        }
        lr *= decay;
    }
    let final_loss = net.loss(records)?;
    check_loss(cfg.epochs, final_loss)?;
    Ok(TrainOutcome {
        net,
        history,
        final_loss,
    })
}

fn check_loss(epoch: usize, loss: f64) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::TrainingDiverged { epoch, loss })
    }
}
