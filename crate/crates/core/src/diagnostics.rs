//! Chain diagnostics: effective sample size, Hamiltonian traces, mode
//! occupancy, stickiness, and the benchmark summary table.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::{integrate_trajectory, GradientSource, IntegratorConfig, SurrogateGradient};
use crate::sampler::{ChainResult, SamplerMode};
use crate::targets::{sq_dist, PhaseState, TargetDensity};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EssReport {
    pub per_dimension: Vec<f64>,
    pub min: f64,
    pub mean: f64,
    pub n_used: usize,
    /// Dimensions whose post-burn-in values never change.
    pub degenerate: Vec<usize>,
}

/// Effective sample size of one series with Geyer's initial monotone
/// sequence estimator. `None` for a constant series.
pub fn ess_1d(x: &[f64]) -> Option<f64> {
    let n = x.len();
    let nf = n as f64;
    let mean = x.iter().sum::<f64>() / nf;
    let centred: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let autocov = |lag: usize| -> f64 {
        centred[..n - lag]
            .iter()
            .zip(&centred[lag..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / nf
    };
    let var = autocov(0);
    if var <= 0.0 || !var.is_finite() {
        return None;
    }
    // τ = −1 + 2 Σ_m (ρ_2m + ρ_2m+1), truncated at the first negative pair
    // and forced to be non-increasing
    let mut tau = -1.0;
    let mut prev_pair = f64::INFINITY;
    let mut lag = 0;
    while lag + 1 < n {
        let pair = (autocov(lag) + autocov(lag + 1)) / var;
        if pair < 0.0 {
            break;
        }
        let pair = pair.min(prev_pair);
        tau += 2.0 * pair;
        prev_pair = pair;
        lag += 2;
    }
    let tau = tau.max(1.0 / nf.log10().max(1.0));
    Some(nf / tau)
}

/// Per-dimension ESS of `samples` (rows are draws) after dropping the first
/// `burn_in` rows. Constant dimensions get ESS 1 and are listed in
/// `degenerate`.
pub fn ess(samples: &[Vec<f64>], burn_in: usize) -> Result<EssReport> {
    let kept = samples.get(burn_in..).unwrap_or_default();
    if kept.len() < 10 {
        return Err(Error::InvalidConfig(format!(
            "ESS needs at least 10 post-burn-in draws (got {})",
            kept.len()
        )));
    }
    let d = kept[0].len();
    let mut per_dimension = Vec::with_capacity(d);
    let mut degenerate = Vec::new();
    for k in 0..d {
        let series: Vec<f64> = kept.iter().map(|row| row[k]).collect();
        match ess_1d(&series) {
            Some(v) => per_dimension.push(v),
            None => {
                log::warn!("dimension {k} is constant after burn-in; ESS set to 1");
                degenerate.push(k);
                per_dimension.push(1.0);
            }
        }
    }
    let min = per_dimension.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = per_dimension.iter().sum::<f64>() / d as f64;
    Ok(EssReport {
        per_dimension,
        min,
        mean,
        n_used: kept.len(),
        degenerate,
    })
}

/// Which gradient drives a Hamiltonian trace.
#[derive(Clone, Copy)]
pub enum TraceSource<'a> {
    Exact,
    Surrogate(&'a dyn SurrogateGradient),
}

/// `(t, H(z_t))` along a leapfrog path, with `H` always the exact
/// Hamiltonian.
pub fn hamiltonian_trace(
    target: &TargetDensity,
    source: TraceSource<'_>,
    z0: &PhaseState,
    step_size: f64,
    n_steps: usize,
) -> Result<Vec<(f64, f64)>> {
    let h0 = target.hamiltonian(z0)?;
    if n_steps == 0 {
        return Ok(vec![(0.0, h0)]);
    }
    let mut src = match source {
        TraceSource::Exact => GradientSource::exact(target),
        TraceSource::Surrogate(net) => GradientSource::surrogate(net),
    };
    let path = integrate_trajectory(&mut src, &IntegratorConfig::new(step_size), z0, n_steps)?;
    path.iter()
        .enumerate()
        .map(|(i, z)| Ok((i as f64 * step_size, target.hamiltonian(z)?)))
        .collect()
}

/// Largest `|H_t − H_0|` along a trace.
pub fn max_energy_wander(trace: &[(f64, f64)]) -> f64 {
    let h0 = trace.first().map_or(0.0, |t| t.1);
    trace.iter().map(|(_, h)| (h - h0).abs()).fold(0.0, f64::max)
}

/// Random phase states for energy traces: positions drawn from the mixture
/// components when the target is a mixture, otherwise standard normal;
/// momenta standard normal.
pub fn random_phase_states<R: Rng + ?Sized>(
    target: &TargetDensity,
    n: usize,
    rng: &mut R,
) -> Vec<PhaseState> {
    let d = target.dim();
    (0..n)
        .map(|_| {
            let centre = match target.mixture_means() {
                Some(means) => means[rng.random_range(0..means.len())].clone(),
                None => vec![0.0; d],
            };
            let q = centre
                .iter()
                .map(|c| c + rng.sample::<f64, _>(StandardNormal))
                .collect();
            let p = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            PhaseState { q, p }
        })
        .collect()
}

/// Fraction of samples whose nearest mean is each entry of `means`.
pub fn mode_occupancy(samples: &[Vec<f64>], means: &[Vec<f64>]) -> Result<Vec<f64>> {
    if means.is_empty() {
        return Err(Error::Empty("mode means"));
    }
    if samples.is_empty() {
        return Err(Error::Empty("samples"));
    }
    let mut counts = vec![0usize; means.len()];
    for s in samples {
        let nearest = means
            .iter()
            .enumerate()
            .map(|(i, m)| (i, sq_dist(s, m)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
            .unwrap();
        counts[nearest] += 1;
    }
    let n = samples.len() as f64;
    Ok(counts.into_iter().map(|c| c as f64 / n).collect())
}

/// Fraction of consecutive draws closer than `radius` to each other.
pub fn degeneracy_score(samples: &[Vec<f64>], radius: f64) -> Result<f64> {
    if !(radius > 0.0) {
        return Err(Error::InvalidConfig(format!("radius must be positive (got {radius})")));
    }
    if samples.len() < 2 {
        return Err(Error::Empty("need at least two samples"));
    }
    let r2 = radius * radius;
    let close = samples
        .windows(2)
        .filter(|w| sq_dist(&w[0], &w[1]) < r2)
        .count();
    Ok(close as f64 / (samples.len() - 1) as f64)
}

/// One row of the benchmark summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub target: String,
    pub mode: SamplerMode,
    /// Exact posterior gradients, harvest included.
    pub n_exact_gradients: u64,
    pub harvest_gradients: u64,
    pub sampling_gradients: u64,
    pub surrogate_evals: u64,
    pub n_samples: usize,
    pub ess_min: f64,
    pub ess_mean: f64,
    pub ess_per_dimension: Vec<f64>,
    /// `ess_min / n_exact_gradients`.
    pub ess_per_gradient: f64,
    pub ess_mean_per_gradient: f64,
    /// Min-ESS over sampling gradients only, harvest excluded.
    pub ess_per_sampling_gradient: f64,
    pub fallback_fraction: f64,
    pub wall_time_secs: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl BenchmarkRow {
    pub fn from_chain(
        target: &str,
        chain: &ChainResult,
        harvest_gradients: u64,
        burn_in: usize,
        extra_secs: f64,
    ) -> Result<Self> {
        let report = ess(&chain.samples, burn_in)?;
        let sampling = chain.ledger.exact_gradients;
        let total = sampling + harvest_gradients;
        let per = |ess: f64, grads: u64| if grads == 0 { f64::INFINITY } else { ess / grads as f64 };
        Ok(Self {
            target: target.to_string(),
            mode: chain.mode,
            n_exact_gradients: total,
            harvest_gradients,
            sampling_gradients: sampling,
            surrogate_evals: chain.ledger.surrogate_evals,
            n_samples: chain.samples.len(),
            ess_min: report.min,
            ess_mean: report.mean,
            ess_per_gradient: per(report.min, total),
            ess_mean_per_gradient: per(report.mean, total),
            ess_per_sampling_gradient: per(report.min, sampling),
            ess_per_dimension: report.per_dimension,
            fallback_fraction: chain.fallback_fraction(),
            wall_time_secs: chain.elapsed.as_secs_f64() + extra_secs,
            failure: None,
        })
    }

    pub fn failed(target: &str, mode: SamplerMode, reason: String) -> Self {
        Self {
            target: target.to_string(),
            mode,
            n_exact_gradients: 0,
            harvest_gradients: 0,
            sampling_gradients: 0,
            surrogate_evals: 0,
            n_samples: 0,
            ess_min: f64::NAN,
            ess_mean: f64::NAN,
            ess_per_dimension: Vec::new(),
            ess_per_gradient: f64::NAN,
            ess_mean_per_gradient: f64::NAN,
            ess_per_sampling_gradient: f64::NAN,
            fallback_fraction: 0.0,
            wall_time_secs: 0.0,
            failure: Some(reason),
        }
    }
}

/// Which ESS summary the headline `ESS/gradient` row uses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EssVariant {
    #[default]
    Min,
    Mean,
}

/// Aligned text table, one block per target with `# gradients` and
/// `ESS/gradient` rows and one column per sampler mode.
pub fn format_report(rows: &[BenchmarkRow], variant: EssVariant) -> String {
    let mut targets: Vec<&str> = Vec::new();
    for r in rows {
        if !targets.contains(&r.target.as_str()) {
            targets.push(&r.target);
        }
    }
    let columns = [SamplerMode::LhnnMonitored, SamplerMode::Classical];
    let cell = |target: &str, mode: SamplerMode, f: &dyn Fn(&BenchmarkRow) -> String| {
        rows.iter()
            .find(|r| r.target == target && r.mode == mode)
            .map_or_else(
                || "-".to_string(),
                |r| match &r.failure {
                    Some(_) => "failed".to_string(),
                    None => f(r),
                },
            )
    };
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<22} {:<14} {:>14} {:>14}",
        "Posterior density", "QOI", "LHNN-NUTS", "NUTS"
    );
    for t in targets {
        let grads: Vec<String> = columns
            .iter()
            .map(|&m| cell(t, m, &|r| r.n_exact_gradients.to_string()))
            .collect();
        let eff: Vec<String> = columns
            .iter()
            .map(|&m| {
                cell(t, m, &|r| {
                    let v = match variant {
                        EssVariant::Min => r.ess_per_gradient,
                        EssVariant::Mean => r.ess_mean_per_gradient,
                    };
                    format!("{v:.4e}")
                })
            })
            .collect();
        let _ = writeln!(out, "{:<22} {:<14} {:>14} {:>14}", t, "# gradients", grads[0], grads[1]);
        let _ = writeln!(out, "{:<22} {:<14} {:>14} {:>14}", "", "ESS/gradient", eff[0], eff[1]);
    }
    for r in rows.iter().filter(|r| r.failure.is_some()) {
        let _ = writeln!(
            out,
            "failed: {} [{}]: {}",
            r.target,
            r.mode.as_str(),
            r.failure.as_deref().unwrap_or_default()
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn constant_chain_is_degenerate() {
        let chain = vec![vec![2.0, 1.0]; 50];
        let report = ess(&chain, 0).unwrap();
        assert_eq!(report.per_dimension, vec![1.0, 1.0]);
        assert_eq!(report.degenerate, vec![0, 1]);
    }

    #[test]
    fn too_short_after_burn_in() {
        let chain = vec![vec![0.0]; 15];
        assert!(ess(&chain, 10).is_err());
        assert!(ess(&chain, 100).is_err());
    }

    #[test]
    fn occupancy_edge_cases() {
        let means = vec![vec![0.0, 0.0], vec![5.0, 0.0], vec![0.0, 5.0]];
        let samples = vec![vec![0.1, -0.2]; 7];
        assert_eq!(mode_occupancy(&samples, &means).unwrap(), vec![1.0, 0.0, 0.0]);
        assert!(mode_occupancy(&[], &means).is_err());
        assert!(mode_occupancy(&samples, &[]).is_err());
    }

    #[test]
    fn degeneracy_edge_cases() {
        let same = vec![vec![1.0, 1.0]; 20];
        assert_eq!(degeneracy_score(&same, 1e-3).unwrap(), 1.0);
        assert!(degeneracy_score(&same[..1], 1e-3).is_err());
        assert!(degeneracy_score(&same, 0.0).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let iid: Vec<Vec<f64>> = (0..5000)
            .map(|_| vec![rng.sample(StandardNormal), rng.sample(StandardNormal)])
            .collect();
        assert!(degeneracy_score(&iid, 1e-3).unwrap() < 0.01);
    }

    #[test]
    fn zero_step_trace() {
        let t = TargetDensity::standard_gaussian(1);
        let z = PhaseState::new(vec![1.0], vec![1.0]).unwrap();
        assert_eq!(
            hamiltonian_trace(&t, TraceSource::Exact, &z, 0.1, 0).unwrap(),
            vec![(0.0, 1.0)]
        );
    }

    #[test]
    fn report_table_layout() {
        let mut a = BenchmarkRow::failed("gaussian_mixture", SamplerMode::Classical, "x".into());
        a.failure = None;
        a.n_exact_gradients = 1000;
        a.ess_per_gradient = 0.5;
        let b = BenchmarkRow::failed("gaussian_mixture", SamplerMode::LhnnMonitored, "boom".into());
        let text = format_report(&[a, b], EssVariant::Min);
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].contains("LHNN-NUTS") && lines[0].contains("NUTS"));
        assert!(lines[1].contains("# gradients") && lines[1].contains("1000"));
        assert!(lines[2].contains("ESS/gradient") && lines[2].contains("5.0000e-1"));
        assert!(lines[3].contains("boom"));
    }
}
