//! End-to-end pipelines behind the `lhnn` binary: configuration,
//! checkpoints, and the train / sample / benchmark / diagnose commands.
//!
//! Every file written is accompanied by `<file>.meta.json` naming the
//! config hash and seed that produced it.

pub mod checkpoint;
pub mod config;

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::diagnostics::{
    degeneracy_score, ess, format_report, hamiltonian_trace, max_energy_wander, mode_occupancy,
    random_phase_states, BenchmarkRow, EssReport, TraceSource,
};
use crate::error::{Error, Result};
use crate::network::Lhnn;
use crate::sampler::{nuts_sample, read_chain_csv, ChainResult, GradientLedger, SamplerMode};
use crate::train::{harvest_training_data, train_lhnn, TrainOutcome, TrainingDataset};

pub use checkpoint::{dataset_fingerprint, Architecture, Checkpoint, CheckpointMeta};
pub use config::{
    benchmark_surrogate_mode, BenchmarkBlock, BenchmarkEntry, Command, NetworkBlock, ReportOptions,
    Resolved, RunConfig, TrainBlock,
};

/// Process exit code for an error: 1 for bad input, 2 for failures while
/// running.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Validation(_) | Error::InvalidConfig(_) => 1,
        _ => 2,
    }
}

#[derive(Serialize)]
struct Sidecar<'a> {
    artifact: &'a str,
    command: &'a str,
    config_hash: &'a str,
    seed: u64,
    version: &'static str,
}

struct Outputs {
    dir: PathBuf,
    command: &'static str,
    config_hash: String,
    seed: u64,
}

impl Outputs {
    fn new(dir: &Path, command: &'static str, cfg: &RunConfig) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            command,
            config_hash: cfg.hash(),
            seed: cfg.seed,
        })
    }

    fn sub(&self, name: &str) -> Result<Self> {
        let dir = self.dir.join(name);
        fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            command: self.command,
            config_hash: self.config_hash.clone(),
            seed: self.seed,
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Writes the sidecar for an artifact already on disk.
    fn seal(&self, name: &str) -> Result<PathBuf> {
        let meta = Sidecar {
            artifact: name,
            command: self.command,
            config_hash: &self.config_hash,
            seed: self.seed,
            version: env!("CARGO_PKG_VERSION"),
        };
        fs::write(
            self.path(&format!("{name}.meta.json")),
            serde_json::to_string_pretty(&meta)?,
        )?;
        Ok(self.path(name))
    }

    fn json(&self, name: &str, value: &impl Serialize) -> Result<PathBuf> {
        fs::write(self.path(name), serde_json::to_string_pretty(value)?)?;
        self.seal(name)
    }
}

fn write_history(path: &Path, history: &[f64]) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(out, "epoch,loss")?;
    for (i, l) in history.iter().enumerate() {
        writeln!(out, "{},{l}", i + 1)?;
    }
    out.flush()?;
    Ok(())
}

/// Harvest plus training for one resolved target.
pub struct TrainedSurrogate {
    pub dataset: TrainingDataset,
    pub outcome: TrainOutcome,
    pub checkpoint: Checkpoint,
    pub seconds: f64,
}

pub fn train_resolved(r: &Resolved, seed: u64) -> Result<TrainedSurrogate> {
    let start = Instant::now();
    let harvest = r
        .harvest
        .as_ref()
        .ok_or_else(|| Error::Validation(vec!["harvest block is required".into()]))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dataset = harvest_training_data(&r.target, harvest, seed, &mut rng)?;
    log::info!(
        "harvested {} records with {} exact gradients",
        dataset.len(),
        dataset.meta.exact_gradients
    );
    let train_cfg = r.train.to_train_config(&r.network, seed);
    let outcome = train_lhnn(&dataset, &train_cfg)?;
    log::info!("trained: final loss {:.6e}", outcome.final_loss);
    let checkpoint = Checkpoint::from_net(
        &outcome.net,
        CheckpointMeta {
            seed: train_cfg.seed,
            train: train_cfg,
            dataset_fingerprint: dataset_fingerprint(&dataset),
            target: r.target.name().to_string(),
            harvest_gradients: dataset.meta.exact_gradients,
            final_loss: outcome.final_loss,
        },
    );
    Ok(TrainedSurrogate {
        dataset,
        outcome,
        checkpoint,
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Clone, Debug)]
pub struct TrainSummary {
    pub checkpoint: PathBuf,
    pub final_loss: f64,
    pub harvest_gradients: u64,
}

/// Harvests training data, trains the surrogate, and writes
/// `checkpoint.json`, `history.csv`, `dataset.csv` and `ledger.json`.
pub fn cli_train(cfg: &RunConfig, out: &Path) -> Result<TrainSummary> {
    let r = cfg.validate_for(Command::Train)?.remove(0);
    let o = Outputs::new(out, "train", cfg)?;
    let trained = train_resolved(&r, cfg.seed)?;
    trained.checkpoint.save(o.path("checkpoint.json"))?;
    let checkpoint = o.seal("checkpoint.json")?;
    write_history(&o.path("history.csv"), &trained.outcome.history)?;
    o.seal("history.csv")?;
    trained.dataset.write_csv(o.path("dataset.csv"))?;
    o.seal("dataset.csv")?;
    let ledger = GradientLedger {
        exact_gradients: 0,
        surrogate_evals: 0,
        harvest_gradients: trained.dataset.meta.exact_gradients,
    };
    o.json("ledger.json", &ledger)?;
    Ok(TrainSummary {
        checkpoint,
        final_loss: trained.outcome.final_loss,
        harvest_gradients: ledger.harvest_gradients,
    })
}

fn load_checkpoint_for(path: &Path, target_dim: usize) -> Result<(Lhnn, Checkpoint)> {
    let ck = Checkpoint::load(path).map_err(|e| {
        Error::Validation(vec![format!("cannot load checkpoint {}: {e}", path.display())])
    })?;
    let net = ck.to_net()?;
    if net.dim() != target_dim {
        return Err(Error::Validation(vec![format!(
            "checkpoint d ({}) does not match target.dim ({target_dim})",
            net.dim()
        )]));
    }
    Ok((net, ck))
}

/// Runs one chain and writes `chain.csv` and `ledger.json`. Surrogate modes
/// need a checkpoint; its harvest spend is carried into the ledger.
pub fn cli_sample(cfg: &RunConfig, checkpoint: Option<&Path>, out: &Path) -> Result<ChainResult> {
    let r = cfg.validate_for(Command::Sample)?.remove(0);
    let sampler = r.sampler.clone().expect("validated");
    let loaded = match (sampler.mode.uses_surrogate(), checkpoint) {
        (true, None) => {
            return Err(Error::Validation(vec![format!(
                "sampler.mode is {} but no checkpoint was given; pass --checkpoint (from `lhnn train`) or use mode \"classical\"",
                sampler.mode.as_str()
            )]))
        }
        (true, Some(path)) => Some(load_checkpoint_for(path, r.target.dim())?),
        (false, Some(_)) => {
            log::warn!("classical mode ignores the checkpoint");
            None
        }
        (false, None) => None,
    };
    let o = Outputs::new(out, "sample", cfg)?;
    let net = loaded.as_ref().map(|(n, _)| n as &dyn crate::SurrogateGradient);
    let mut chain = nuts_sample(&r.target, net, &sampler)?;
    chain.ledger.harvest_gradients = loaded.as_ref().map_or(0, |(_, ck)| ck.meta.harvest_gradients);
    chain.write_csv(o.path("chain.csv"))?;
    o.seal("chain.csv")?;
    o.json("ledger.json", &chain.ledger)?;
    log::info!(
        "{} samples, {} exact gradients, {} surrogate evaluations",
        chain.samples.len(),
        chain.ledger.exact_gradients,
        chain.ledger.surrogate_evals
    );
    Ok(chain)
}

#[derive(Serialize)]
struct BenchmarkReport<'a> {
    config_hash: &'a str,
    seed: u64,
    rows: &'a [BenchmarkRow],
}

fn slug(i: usize, name: &str) -> String {
    let clean: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect();
    format!("{i:02}_{clean}")
}

fn bench_classical(r: &Resolved, o: &Outputs, burn: &ReportOptions) -> Result<BenchmarkRow> {
    let cfg = r.sampler_for(SamplerMode::Classical).expect("validated");
    let chain = nuts_sample(&r.target, None, &cfg)?;
    chain.write_csv(o.path("chain_classical.csv"))?;
    o.seal("chain_classical.csv")?;
    BenchmarkRow::from_chain(r.target.name(), &chain, 0, burn.burn_in(chain.samples.len()), 0.0)
}

fn bench_surrogate(r: &Resolved, o: &Outputs, seed: u64, burn: &ReportOptions) -> Result<BenchmarkRow> {
    let mode = benchmark_surrogate_mode(r.sampler.as_ref().expect("validated").mode);
    let trained = train_resolved(r, seed)?;
    trained.checkpoint.save(o.path("checkpoint.json"))?;
    o.seal("checkpoint.json")?;
    let cfg = r.sampler_for(mode).expect("validated");
    let chain = nuts_sample(&r.target, Some(&trained.outcome.net), &cfg)?;
    chain.write_csv(o.path(&format!("chain_{}.csv", mode.as_str())))?;
    o.seal(&format!("chain_{}.csv", mode.as_str()))?;
    BenchmarkRow::from_chain(
        r.target.name(),
        &chain,
        trained.dataset.meta.exact_gradients,
        burn.burn_in(chain.samples.len()),
        trained.seconds,
    )
}

/// For every listed target: classical NUTS, then harvest, train and
/// surrogate NUTS. A failing stage marks its row failed and the run
/// continues. Writes `report.txt` and `report.json`.
pub fn cli_benchmark(cfg: &RunConfig, out: &Path) -> Result<Vec<BenchmarkRow>> {
    let resolved = cfg.validate_for(Command::Benchmark)?;
    let o = Outputs::new(out, "benchmark", cfg)?;
    let mut rows = Vec::new();
    for (i, r) in resolved.iter().enumerate() {
        let name = r.target.name().to_string();
        let row_out = o.sub(&slug(i, &name))?;
        let surrogate_mode = benchmark_surrogate_mode(r.sampler.as_ref().expect("validated").mode);
        log::info!("benchmark {name}: classical");
        rows.push(bench_classical(r, &row_out, &cfg.report).unwrap_or_else(|e| {
            log::error!("{name} classical failed: {e}");
            BenchmarkRow::failed(&name, SamplerMode::Classical, e.to_string())
        }));
        log::info!("benchmark {name}: {}", surrogate_mode.as_str());
        rows.push(bench_surrogate(r, &row_out, cfg.seed, &cfg.report).unwrap_or_else(|e| {
            log::error!("{name} {} failed: {e}", surrogate_mode.as_str());
            BenchmarkRow::failed(&name, surrogate_mode, e.to_string())
        }));
    }
    fs::write(o.path("report.txt"), format_report(&rows, cfg.report.ess_variant))?;
    o.seal("report.txt")?;
    o.json(
        "report.json",
        &BenchmarkReport {
            config_hash: &o.config_hash,
            seed: cfg.seed,
            rows: &rows,
        },
    )?;
    Ok(rows)
}

#[derive(Clone, Debug, Serialize)]
pub struct ChainDiagnostics {
    pub path: PathBuf,
    pub n_samples: usize,
    pub burn_in: usize,
    pub ess: EssReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode_occupancy: Option<Vec<f64>>,
    pub degeneracy: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TraceSummary {
    pub q0: Vec<f64>,
    pub p0: Vec<f64>,
    pub exact_wander: f64,
    /// Absent without a checkpoint, or when the surrogate trace blew up.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub surrogate_wander: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct DiagnoseReport {
    pub chains: Vec<ChainDiagnostics>,
    pub traces: Vec<TraceSummary>,
}

fn write_scatter(path: &Path, samples: &[Vec<f64>], burn_in: usize) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    write!(out, "iter")?;
    for i in 1..=samples.first().map_or(0, Vec::len) {
        write!(out, ",q_{i}")?;
    }
    writeln!(out)?;
    for (k, q) in samples.iter().enumerate().skip(burn_in) {
        write!(out, "{k}")?;
        for v in q {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

/// ESS, occupancy and stickiness for existing chain CSVs, plus Hamiltonian
/// traces from random initial states. Writes `diagnose.json`,
/// `scatter_<k>.csv` per chain and `traces.csv`.
pub fn cli_diagnose(
    cfg: &RunConfig,
    checkpoint: Option<&Path>,
    chains: &[PathBuf],
    out: &Path,
) -> Result<DiagnoseReport> {
    let r = cfg.validate_for(Command::Diagnose)?.remove(0);
    let net = checkpoint
        .map(|p| load_checkpoint_for(p, r.target.dim()).map(|(n, _)| n))
        .transpose()?;
    let o = Outputs::new(out, "diagnose", cfg)?;
    let opts = &cfg.report;

    let mut chain_reports = Vec::new();
    for (k, path) in chains.iter().enumerate() {
        let samples = read_chain_csv(path)?;
        if samples.first().map(Vec::len) != Some(r.target.dim()) {
            return Err(Error::Validation(vec![format!(
                "{} does not hold {}-dimensional samples",
                path.display(),
                r.target.dim()
            )]));
        }
        let burn_in = opts.burn_in(samples.len());
        let kept = &samples[burn_in..];
        let ess = ess(&samples, burn_in)?;
        let mode_occupancy = r
            .target
            .mixture_means()
            .map(|m| mode_occupancy(kept, m))
            .transpose()?;
        let degeneracy = degeneracy_score(kept, opts.degeneracy_radius)?;
        let name = format!("scatter_{k}.csv");
        write_scatter(&o.path(&name), &samples, burn_in)?;
        o.seal(&name)?;
        chain_reports.push(ChainDiagnostics {
            path: path.clone(),
            n_samples: samples.len(),
            burn_in,
            ess,
            mode_occupancy,
            degeneracy,
        });
    }

    let dt = opts
        .trace_step_size
        .or(r.sampler.as_ref().map(|s| s.step_size))
        .unwrap_or(0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let starts = random_phase_states(&r.target, opts.n_traces, &mut rng);
    let mut traces = Vec::new();
    let mut csv = std::io::BufWriter::new(fs::File::create(o.path("traces.csv"))?);
    writeln!(csv, "trace,step,t,h_exact,h_surrogate")?;
    for (k, z0) in starts.iter().enumerate() {
        let exact = hamiltonian_trace(&r.target, TraceSource::Exact, z0, dt, opts.trace_steps)?;
        let surrogate = match &net {
            Some(n) => match hamiltonian_trace(&r.target, TraceSource::Surrogate(n), z0, dt, opts.trace_steps) {
                Ok(t) => Some(t),
                Err(e) => {
                    log::warn!("surrogate trace {k} failed: {e}");
                    None
                }
            },
            None => None,
        };
        for (i, (t, h)) in exact.iter().enumerate() {
            let hs = surrogate
                .as_ref()
                .map_or(String::new(), |s| s[i].1.to_string());
            writeln!(csv, "{k},{i},{t},{h},{hs}")?;
        }
        traces.push(TraceSummary {
            q0: z0.q.clone(),
            p0: z0.p.clone(),
            exact_wander: max_energy_wander(&exact),
            surrogate_wander: surrogate.as_deref().map(max_energy_wander),
        });
    }
    csv.flush()?;
    drop(csv);
    o.seal("traces.csv")?;

    let report = DiagnoseReport {
        chains: chain_reports,
        traces,
    };
    o.json("diagnose.json", &report)?;
    Ok(report)
}
