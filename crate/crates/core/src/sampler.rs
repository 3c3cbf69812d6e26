//! No-U-Turn sampling with slice variables, optionally driven by a surrogate
//! gradient with online error monitoring.
//!
//! # Random stream
//!
//! Each chain consumes a single stream in this order per sample: `d`
//! standard normals for the momentum, one uniform for the slice variable,
//! then for every doubling one boolean for the direction, the uniforms used
//! by sub-tree proposal swaps (in recursion order, only when the merged
//! weight is positive), and finally one uniform for the top-level
//! acceptance when the new sub-tree is valid.

use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::integrate::{
    leapfrog_step_cached, CachedGradient, GradientKind, GradientSource, IntegratorConfig,
    SurrogateGradient,
};
use crate::targets::{dot, PhaseState, TargetDensity};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerMode {
    /// Exact posterior gradients throughout.
    Classical,
    /// Surrogate gradients with fallback to exact gradients after a
    /// threshold breach.
    LhnnMonitored,
    /// Surrogate gradients only.
    LhnnUnmonitored,
}

impl SamplerMode {
    pub fn uses_surrogate(self) -> bool {
        !matches!(self, Self::Classical)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Classical => "classical",
            Self::LhnnMonitored => "lhnn_monitored",
            Self::LhnnUnmonitored => "lhnn_unmonitored",
        }
    }
}

fn default_delta_lf() -> f64 {
    1000.0
}
fn default_delta_hnn() -> f64 {
    10.0
}
fn default_n_lf() -> usize {
    10
}
fn default_max_depth() -> usize {
    10
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub n_samples: usize,
    pub step_size: f64,
    pub mode: SamplerMode,
    /// Error threshold for exact-gradient steps.
    #[serde(default = "default_delta_lf")]
    pub delta_max_lf: f64,
    /// Error threshold for surrogate steps.
    #[serde(default = "default_delta_hnn")]
    pub delta_max_hnn: f64,
    /// Number of sample iterations spent on exact gradients after a breach.
    #[serde(default = "default_n_lf")]
    pub n_lf: usize,
    #[serde(default = "default_max_depth")]
    pub max_tree_depth: usize,
    #[serde(default)]
    pub seed: u64,
    /// Starting position; the origin when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_position: Option<Vec<f64>>,
    /// Permit `n_lf` outside 5..=20.
    #[serde(default)]
    pub allow_any_n_lf: bool,
}

impl SamplerConfig {
    pub fn new(mode: SamplerMode, n_samples: usize, step_size: f64, seed: u64) -> Self {
        Self {
            n_samples,
            step_size,
            mode,
            delta_max_lf: default_delta_lf(),
            delta_max_hnn: default_delta_hnn(),
            n_lf: default_n_lf(),
            max_tree_depth: default_max_depth(),
            seed,
            initial_position: None,
            allow_any_n_lf: false,
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.n_samples == 0 {
            errs.push("sampler.n_samples must be positive".into());
        }
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            errs.push(format!("sampler.step_size must be positive (got {})", self.step_size));
        }
        if self.max_tree_depth == 0 {
            errs.push("sampler.max_tree_depth must be positive".into());
        }
        if self.delta_max_lf.is_nan() || self.delta_max_hnn.is_nan() {
            errs.push("sampler thresholds must not be NaN".into());
        }
        if self.mode == SamplerMode::LhnnMonitored {
            if self.delta_max_hnn >= self.delta_max_lf {
                errs.push(format!(
                    "sampler.delta_max_hnn ({}) must be below sampler.delta_max_lf ({})",
                    self.delta_max_hnn, self.delta_max_lf
                ));
            }
            if self.n_lf == 0 {
                errs.push("sampler.n_lf must be positive".into());
            } else if !self.allow_any_n_lf && !(5..=20).contains(&self.n_lf) {
                errs.push(format!(
                    "sampler.n_lf must be within 5..=20 (got {}); set allow_any_n_lf to override",
                    self.n_lf
                ));
            }
        }
        if let Some(q) = &self.initial_position {
            if q.iter().any(|v| !v.is_finite()) {
                errs.push("sampler.initial_position must be finite".into());
            }
        }
        errs
    }
}

/// Fallback flag and the number of sample iterations it has been set for.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FallbackState {
    pub active: bool,
    pub count: usize,
}

impl FallbackState {
    /// Bookkeeping at the start of a sample iteration: advance the counter
    /// while the flag is set and clear both once it reaches `n_lf`.
    pub fn begin_sample(&mut self, n_lf: usize) {
        if self.active {
            self.count += 1;
        }
        if self.count == n_lf {
            self.active = false;
            self.count = 0;
        }
    }
}

/// `H + ln u > threshold`; non-finite inputs count as exceeding.
pub fn error_criterion(h_val: f64, ln_u: f64, threshold: f64) -> bool {
    !(h_val + ln_u <= threshold)
}

/// A trajectory endpoint together with the gradient last evaluated there.
#[derive(Clone, Debug)]
pub struct TreeNode {
    pub z: PhaseState,
    pub grad: Option<CachedGradient>,
}

impl TreeNode {
    pub fn new(z: PhaseState) -> Self {
        Self { z, grad: None }
    }
}

#[derive(Clone, Debug)]
pub struct Subtree {
    pub minus: TreeNode,
    pub plus: TreeNode,
    pub proposal: PhaseState,
    pub proposal_h: f64,
    /// Number of states inside the slice.
    pub n: u64,
    /// False once a sub-trajectory turned back or diverged.
    pub s: bool,
    pub diverged: bool,
    /// Monitoring threshold breached at some leaf of this sub-tree.
    pub breached: bool,
}

fn no_u_turn(minus: &PhaseState, plus: &PhaseState) -> bool {
    let span: Vec<f64> = plus.q.iter().zip(&minus.q).map(|(a, b)| a - b).collect();
    dot(&span, &minus.p) >= 0.0 && dot(&span, &plus.p) >= 0.0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    UTurn,
    Divergence,
    MaxDepth,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleInfo {
    /// Exact Hamiltonian of the selected state.
    pub hamiltonian: f64,
    /// Number of doublings performed.
    pub tree_depth: usize,
    /// Fallback flag was set at some point during this iteration.
    pub fallback: bool,
    /// A monitoring threshold breach happened in this iteration.
    pub breach: bool,
    pub ln_u: f64,
    pub termination: Termination,
    pub leapfrog_steps: u64,
}

/// Gradient accounting for one run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GradientLedger {
    pub exact_gradients: u64,
    pub surrogate_evals: u64,
    pub harvest_gradients: u64,
}

impl GradientLedger {
    /// Exact posterior gradients spent in total, training data included.
    pub fn total_exact(&self) -> u64 {
        self.exact_gradients + self.harvest_gradients
    }
}

#[derive(Clone, Debug)]
pub struct ChainResult {
    pub mode: SamplerMode,
    pub samples: Vec<Vec<f64>>,
    pub info: Vec<SampleInfo>,
    pub ledger: GradientLedger,
    /// Base-case leapfrog steps per gradient kind.
    pub exact_steps: u64,
    pub surrogate_steps: u64,
    /// Leading gradients reused from the previous step.
    pub exact_cache_hits: u64,
    pub surrogate_cache_hits: u64,
    pub n_divergent: usize,
    /// Iterations whose very first step diverged.
    pub n_stuck: usize,
    pub n_max_depth: usize,
    pub elapsed: Duration,
}

impl ChainResult {
    pub fn dim(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    pub fn fallback_fraction(&self) -> f64 {
        if self.info.is_empty() {
            return 0.0;
        }
        self.info.iter().filter(|i| i.fallback).count() as f64 / self.info.len() as f64
    }

    /// Writes `iter,q_1..q_d,H,tree_depth,fallback,u`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        write!(out, "iter")?;
        for i in 1..=self.dim() {
            write!(out, ",q_{i}")?;
        }
        writeln!(out, ",H,tree_depth,fallback,u")?;
        for (k, (q, info)) in self.samples.iter().zip(&self.info).enumerate() {
            write!(out, "{k}")?;
            for v in q {
                write!(out, ",{v}")?;
            }
            writeln!(
                out,
                ",{},{},{},{}",
                info.hamiltonian,
                info.tree_depth,
                u8::from(info.fallback),
                info.ln_u.exp()
            )?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Reads the `q_*` columns of a chain CSV.
pub fn read_chain_csv(path: impl AsRef<Path>) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::Reader::from_path(path.as_ref())?;
    let headers = reader.headers()?.clone();
    let cols: Vec<usize> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| h.starts_with("q_"))
        .map(|(i, _)| i)
        .collect();
    if cols.is_empty() {
        return Err(Error::Dataset(format!(
            "{}: no q_* columns",
            path.as_ref().display()
        )));
    }
    let mut samples = Vec::new();
    for record in reader.records() {
        let record = record?;
        let row = cols
            .iter()
            .map(|&c| {
                record[c]
                    .parse::<f64>()
                    .map_err(|_| Error::Dataset(format!("bad number `{}`", &record[c])))
            })
            .collect::<Result<Vec<_>>>()?;
        samples.push(row);
    }
    Ok(samples)
}

/// Transition kernel: owns the gradient sources and step counters of one
/// chain.
pub struct NutsKernel<'a> {
    target: &'a TargetDensity,
    exact: GradientSource<'a>,
    surrogate: Option<GradientSource<'a>>,
    cfg: &'a SamplerConfig,
    integ: IntegratorConfig,
    exact_steps: u64,
    surrogate_steps: u64,
    exact_cache_hits: u64,
    surrogate_cache_hits: u64,
}

impl<'a> NutsKernel<'a> {
    pub fn new(
        target: &'a TargetDensity,
        net: Option<&'a dyn SurrogateGradient>,
        cfg: &'a SamplerConfig,
    ) -> Result<Self> {
        let errs = cfg.validate();
        if !errs.is_empty() {
            return Err(Error::Validation(errs));
        }
        match (cfg.mode.uses_surrogate(), net) {
            (true, None) => {
                return Err(Error::InvalidConfig(format!(
                    "mode {} needs a trained network",
                    cfg.mode.as_str()
                )))
            }
            (false, Some(_)) => {
                return Err(Error::InvalidConfig(
                    "classical mode does not take a network".into(),
                ))
            }
            (true, Some(n)) => check_dim("network dimension", target.dim(), n.dim())?,
            _ => {}
        }
        Ok(Self {
            target,
            exact: GradientSource::exact(target),
            surrogate: net.map(GradientSource::surrogate),
            cfg,
            integ: IntegratorConfig::new(cfg.step_size),
            exact_steps: 0,
            surrogate_steps: 0,
            exact_cache_hits: 0,
            surrogate_cache_hits: 0,
        })
    }

    pub fn ledger(&self) -> GradientLedger {
        GradientLedger {
            exact_gradients: self.exact.evaluations(),
            surrogate_evals: self.surrogate.as_ref().map_or(0, GradientSource::evaluations),
            harvest_gradients: 0,
        }
    }

    fn hamiltonian(&self, z: &PhaseState) -> f64 {
        -self.target.log_density_unchecked(&z.q) + 0.5 * dot(&z.p, &z.p)
    }

    /// One leapfrog step; `None` when the step produced non-finite values.
    fn step(
        &mut self,
        kind: GradientKind,
        node: &TreeNode,
        direction: f64,
    ) -> Option<(TreeNode, f64)> {
        let hit = node.grad.as_ref().is_some_and(|g| g.kind == kind);
        let src = match kind {
            GradientKind::Exact => {
                self.exact_steps += 1;
                self.exact_cache_hits += u64::from(hit);
                &mut self.exact
            }
            GradientKind::Surrogate => {
                self.surrogate_steps += 1;
                self.surrogate_cache_hits += u64::from(hit);
                self.surrogate.as_mut().expect("surrogate mode has a network")
            }
        };
        let (z, grad) =
            leapfrog_step_cached(src, &self.integ, &node.z, direction, node.grad.as_ref()).ok()?;
        let h = self.hamiltonian(&z);
        Some((
            TreeNode {
                z,
                grad: Some(grad),
            },
            h,
        ))
    }

    fn leaf(&mut self, start: &TreeNode, ln_u: f64, direction: f64, fallback: &mut FallbackState) -> Subtree {
        let mut breached = false;
        let (kind, threshold) = match self.cfg.mode {
            SamplerMode::Classical => (GradientKind::Exact, self.cfg.delta_max_lf),
            SamplerMode::LhnnUnmonitored => (GradientKind::Surrogate, self.cfg.delta_max_lf),
            SamplerMode::LhnnMonitored => {
                if fallback.active {
                    (GradientKind::Exact, self.cfg.delta_max_lf)
                } else {
                    let outcome = self.step(GradientKind::Surrogate, start, direction);
                    match outcome {
                        Some((node, h))
                            if !error_criterion(h, ln_u, self.cfg.delta_max_hnn) =>
                        {
                            return Self::finish_leaf(node, h, ln_u, true, false);
                        }
                        _ => {
                            fallback.active = true;
                            breached = true;
                            (GradientKind::Exact, self.cfg.delta_max_lf)
                        }
                    }
                }
            }
        };
        let mut tree = match self.step(kind, start, direction) {
            Some((node, h)) => {
                let ok = !error_criterion(h, ln_u, threshold);
                Self::finish_leaf(node, h, ln_u, ok, !ok)
            }
            None => Subtree {
                minus: start.clone(),
                plus: start.clone(),
                proposal: start.z.clone(),
                proposal_h: f64::INFINITY,
                n: 0,
                s: false,
                diverged: true,
                breached: false,
            },
        };
        tree.breached = breached;
        tree
    }

    fn finish_leaf(node: TreeNode, h: f64, ln_u: f64, s: bool, diverged: bool) -> Subtree {
        Subtree {
            proposal: node.z.clone(),
            proposal_h: h,
            n: u64::from(h + ln_u <= 0.0),
            s,
            diverged,
            breached: false,
            minus: node.clone(),
            plus: node,
        }
    }

    /// Builds a sub-tree of `2^depth` leapfrog steps from `start` in
    /// `direction` (±1), threading the fallback state through every leaf.
    pub fn build_tree<R: Rng + ?Sized>(
        &mut self,
        start: &TreeNode,
        ln_u: f64,
        direction: f64,
        depth: usize,
        fallback: &mut FallbackState,
        rng: &mut R,
    ) -> Subtree {
        if depth == 0 {
            return self.leaf(start, ln_u, direction, fallback);
        }
        let mut tree = self.build_tree(start, ln_u, direction, depth - 1, fallback, rng);
        if !tree.s {
            return tree;
        }
        let edge = if direction < 0.0 { &tree.minus } else { &tree.plus }.clone();
        let outer = self.build_tree(&edge, ln_u, direction, depth - 1, fallback, rng);
        if direction < 0.0 {
            tree.minus = outer.minus;
        } else {
            tree.plus = outer.plus;
        }
        let total = tree.n + outer.n;
        if total > 0 && rng.random::<f64>() < outer.n as f64 / total as f64 {
            tree.proposal = outer.proposal;
            tree.proposal_h = outer.proposal_h;
        }
        tree.n = total;
        tree.diverged |= outer.diverged;
        tree.breached |= outer.breached;
        tree.s = outer.s && no_u_turn(&tree.minus.z, &tree.plus.z);
        tree
    }

    /// One full NUTS iteration from position `q`.
    pub fn transition<R: Rng + ?Sized>(
        &mut self,
        q: &[f64],
        fallback: &mut FallbackState,
        rng: &mut R,
    ) -> (Vec<f64>, SampleInfo) {
        let steps_before = self.exact_steps + self.surrogate_steps;
        let d = q.len();
        let p: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let z0 = PhaseState { q: q.to_vec(), p };
        let h0 = self.hamiltonian(&z0);
        // u ~ Uniform(0, exp(-H0)]
        let ln_u = -h0 + (1.0 - rng.random::<f64>()).ln();

        if self.cfg.mode == SamplerMode::LhnnMonitored {
            fallback.begin_sample(self.cfg.n_lf);
        }
        let mut used_fallback = fallback.active;
        let mut breach = false;

        let mut minus = TreeNode::new(z0.clone());
        let mut plus = minus.clone();
        let mut selected = z0.q;
        let mut selected_h = h0;
        let mut n: u64 = 1;
        let mut depth = 0;
        let termination = loop {
            if depth >= self.cfg.max_tree_depth {
                break Termination::MaxDepth;
            }
            let direction = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let edge = if direction < 0.0 { &minus } else { &plus }.clone();
            let tree = self.build_tree(&edge, ln_u, direction, depth, fallback, rng);
            used_fallback |= fallback.active;
            breach |= tree.breached;
            if direction < 0.0 {
                minus = tree.minus;
            } else {
                plus = tree.plus;
            }
            if tree.s && rng.random::<f64>() < tree.n as f64 / n as f64 {
                selected = tree.proposal.q;
                selected_h = tree.proposal_h;
            }
            n += tree.n;
            depth += 1;
            if !tree.s {
                break if tree.diverged {
                    Termination::Divergence
                } else {
                    Termination::UTurn
                };
            }
            if !no_u_turn(&minus.z, &plus.z) {
                break Termination::UTurn;
            }
        };
        let info = SampleInfo {
            hamiltonian: selected_h,
            tree_depth: depth,
            fallback: used_fallback,
            breach,
            ln_u,
            termination,
            leapfrog_steps: self.exact_steps + self.surrogate_steps - steps_before,
        };
        (selected, info)
    }
}

/// Runs one chain with the random stream seeded from `cfg.seed`.
pub fn nuts_sample(
    target: &TargetDensity,
    net: Option<&dyn SurrogateGradient>,
    cfg: &SamplerConfig,
) -> Result<ChainResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    nuts_sample_with_rng(target, net, cfg, &mut rng)
}

pub fn nuts_sample_with_rng<R: Rng + ?Sized>(
    target: &TargetDensity,
    net: Option<&dyn SurrogateGradient>,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<ChainResult> {
    let mut kernel = NutsKernel::new(target, net, cfg)?;
    let mut q = match &cfg.initial_position {
        Some(q) => {
            check_dim("sampler initial position", target.dim(), q.len())?;
            q.clone()
        }
        None => vec![0.0; target.dim()],
    };
    let start = Instant::now();
    let mut fallback = FallbackState::default();
    let mut samples = Vec::with_capacity(cfg.n_samples);
    let mut info = Vec::with_capacity(cfg.n_samples);
    for _ in 0..cfg.n_samples {
        let (next, meta) = kernel.transition(&q, &mut fallback, rng);
        q.clone_from(&next);
        samples.push(next);
        info.push(meta);
    }
    let n_divergent = info
        .iter()
        .filter(|i| i.termination == Termination::Divergence)
        .count();
    let n_stuck = info
        .iter()
        .filter(|i| i.termination == Termination::Divergence && i.tree_depth == 1)
        .count();
    let n_max_depth = info
        .iter()
        .filter(|i| i.termination == Termination::MaxDepth)
        .count();
    if n_max_depth > 0 {
        log::info!("{n_max_depth} iterations hit the maximum tree depth");
    }
    if n_stuck * 10 > cfg.n_samples {
        log::warn!(
            "{n_stuck} of {} iterations diverged on their first step",
            cfg.n_samples
        );
    }
    Ok(ChainResult {
        mode: cfg.mode,
        samples,
        info,
        ledger: kernel.ledger(),
        exact_steps: kernel.exact_steps,
        surrogate_steps: kernel.surrogate_steps,
        exact_cache_hits: kernel.exact_cache_hits,
        surrogate_cache_hits: kernel.surrogate_cache_hits,
        n_divergent,
        n_stuck,
        n_max_depth,
        elapsed: start.elapsed(),
    })
}
