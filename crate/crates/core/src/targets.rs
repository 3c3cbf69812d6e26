//! Benchmark posterior densities and the separable Hamiltonian `H = U(q) + K(p)`.
//!
//! Every density here is unnormalized: `U(q) = -log π(q)` up to an additive
//! constant, which is all the sampler and integrator ever need.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Position/momentum pair `z = {q, p}`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseState {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

impl PhaseState {
    pub fn new(q: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        check_dim("phase state momentum", q.len(), p.len())?;
        let state = Self { q, p };
        state.check_finite()?;
        Ok(state)
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(&self.p).all(|v| v.is_finite())
    }

    pub fn check_finite(&self) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite("phase state"))
        }
    }

    /// Concatenated `[q; p]`, the input layout of the surrogate network.
    pub fn to_input(&self) -> Vec<f64> {
        let mut z = Vec::with_capacity(2 * self.dim());
        z.extend_from_slice(&self.q);
        z.extend_from_slice(&self.p);
        z
    }

    /// Same state with the momentum negated.
    pub fn flipped(&self) -> Self {
        Self {
            q: self.q.clone(),
            p: self.p.iter().map(|v| -v).collect(),
        }
    }
}

/// Kinetic energy `Σ p_i² / (2 m_i)`. `masses = None` means unit masses.
pub fn kinetic_energy(p: &[f64], masses: Option<&[f64]>) -> f64 {
    match masses {
        Some(m) => p.iter().zip(m).map(|(pi, mi)| pi * pi / (2.0 * mi)).sum(),
        None => 0.5 * p.iter().map(|pi| pi * pi).sum::<f64>(),
    }
}

/// Binary-classification data for the logistic-regression posterior.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    /// Row-major feature matrix, `n_rows × n_features`.
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
}

impl LabeledDataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<u8>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::Dataset("dataset has no rows".into()));
        }
        check_dim("dataset labels", features.len(), labels.len())?;
        let width = features[0].len();
        for (i, row) in features.iter().enumerate() {
            if row.len() != width {
                return Err(Error::Dataset(format!(
                    "row {i} has {} features, expected {width}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Dataset(format!("row {i} has a non-finite feature")));
            }
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::Dataset(format!("label {bad} is not 0/1")));
        }
        Ok(Self { features, labels })
    }

    pub fn n_rows(&self) -> usize {
        self.features.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    /// Deterministic synthetic data: Gaussian features, labels drawn from a
    /// logistic model with a fixed random coefficient vector.
    pub fn synthetic(n_rows: usize, n_features: usize, seed: u64) -> Result<Self> {
        if n_rows == 0 || n_features == 0 {
            return Err(Error::Dataset("synthetic dataset needs rows and features".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coef: Vec<f64> = (0..=n_features)
            .map(|_| 0.5 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let mut features = Vec::with_capacity(n_rows);
        let mut labels = Vec::with_capacity(n_rows);
        for _ in 0..n_rows {
            let row: Vec<f64> = (0..n_features).map(|_| rng.sample(StandardNormal)).collect();
            let eta = coef[0] + row.iter().zip(&coef[1..]).map(|(x, b)| x * b).sum::<f64>();
            let prob = 1.0 / (1.0 + (-eta).exp());
            labels.push(u8::from(rng.random::<f64>() < prob));
            features.push(row);
        }
        Self::new(features, labels)
    }

    /// Reads a CSV with a header row, a `label` column of 0/1 values, and
    /// numeric feature columns.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::Reader::from_path(path)?;
        let headers = reader.headers()?.clone();
        let label_col = headers
            .iter()
            .position(|h| h.trim() == "label")
            .ok_or_else(|| Error::Dataset(format!("{}: no `label` column", path.display())))?;
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record?;
            let mut row = Vec::with_capacity(record.len().saturating_sub(1));
            for (col, field) in record.iter().enumerate() {
                let value: f64 = field.trim().parse().map_err(|_| {
                    Error::Dataset(format!(
                        "{}: row {}, column `{}`: `{field}` is not numeric",
                        path.display(),
                        line + 1,
                        &headers[col]
                    ))
                })?;
                if col == label_col {
                    let label = match value {
                        v if v == 0.0 => 0,
                        v if v == 1.0 => 1,
                        _ => {
                            return Err(Error::Dataset(format!(
                                "{}: row {}: label `{field}` is not 0/1",
                                path.display(),
                                line + 1
                            )))
                        }
                    };
                    labels.push(label);
                } else {
                    row.push(value);
                }
            }
            features.push(row);
        }
        Self::new(features, labels)
    }

    /// Zero-mean, unit-variance columns. Constant columns are only centred.
    pub fn standardized(&self) -> Self {
        let n = self.n_rows() as f64;
        let width = self.n_features();
        let mut out = self.features.clone();
        for c in 0..width {
            let mean = self.features.iter().map(|r| r[c]).sum::<f64>() / n;
            let var = self.features.iter().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / n;
            let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
            for row in &mut out {
                row[c] = (row[c] - mean) / sd;
            }
        }
        Self {
            features: out,
            labels: self.labels.clone(),
        }
    }
}

/// Where the logistic-regression data comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    Synthetic {
        n_rows: usize,
        n_features: usize,
        #[serde(default)]
        seed: u64,
    },
    Csv {
        path: PathBuf,
    },
}

fn default_mixture_dim() -> usize {
    2
}
fn default_components() -> usize {
    8
}
fn default_rosenbrock_a() -> f64 {
    5.0
}
fn default_one() -> f64 {
    1.0
}
fn default_rough() -> f64 {
    0.01
}

/// Configuration block naming a density family and its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSpec {
    Gaussian {
        dim: usize,
    },
    GaussianMixture {
        #[serde(default = "default_mixture_dim")]
        dim: usize,
        #[serde(default = "default_components")]
        n_components: usize,
        /// Circle radius for the default means. When absent, adjacent means
        /// are placed six standard deviations apart.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        radius: Option<f64>,
        /// Explicit component means; overrides `radius`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        means: Option<Vec<Vec<f64>>>,
    },
    Rosenbrock {
        dim: usize,
        #[serde(default = "default_rosenbrock_a")]
        a: f64,
        #[serde(default = "default_one")]
        b: f64,
    },
    LogisticRegression {
        dataset: DatasetSource,
        /// Prior precision: coefficients ~ N(0, α⁻¹ I).
        #[serde(default = "default_one")]
        alpha: f64,
    },
    RoughWell {
        dim: usize,
        #[serde(default = "default_one")]
        sigma: f64,
        #[serde(default = "default_rough")]
        eta: f64,
        #[serde(default = "default_rough")]
        epsilon: f64,
    },
}

impl TargetSpec {
    pub fn family_name(&self) -> &'static str {
        match self {
            Self::Gaussian { .. } => "gaussian",
            Self::GaussianMixture { .. } => "gaussian_mixture",
            Self::Rosenbrock { .. } => "rosenbrock",
            Self::LogisticRegression { .. } => "logistic_regression",
            Self::RoughWell { .. } => "rough_well",
        }
    }

    /// Parameter dimension implied by the spec, when it can be known without
    /// loading data.
    pub fn declared_dim(&self) -> Option<usize> {
        match self {
            Self::Gaussian { dim }
            | Self::GaussianMixture { dim, .. }
            | Self::Rosenbrock { dim, .. }
            | Self::RoughWell { dim, .. } => Some(*dim),
            Self::LogisticRegression {
                dataset: DatasetSource::Synthetic { n_features, .. },
                ..
            } => Some(n_features + 1),
            Self::LogisticRegression { .. } => None,
        }
    }

    /// Static parameter checks; every problem is reported.
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let positive = |errs: &mut Vec<String>, name: &str, v: f64| {
            if !(v.is_finite() && v > 0.0) {
                errs.push(format!("target.{name} must be positive and finite (got {v})"));
            }
        };
        match self {
            Self::Gaussian { dim } => {
                if *dim == 0 {
                    errs.push("target.dim must be positive".into());
                }
            }
            Self::GaussianMixture {
                dim,
                n_components,
                radius,
                means,
            } => {
                if *n_components == 0 {
                    errs.push("target.n_components must be positive".into());
                }
                match means {
                    Some(means) => {
                        if means.len() != *n_components {
                            errs.push(format!(
                                "target.means has {} entries but target.n_components is {n_components}",
                                means.len()
                            ));
                        }
                        if let Some(bad) = means.iter().find(|m| m.len() != *dim) {
                            errs.push(format!(
                                "target.means entry has length {} but target.dim is {dim}",
                                bad.len()
                            ));
                        }
                    }
                    None => {
                        if *dim < 2 {
                            errs.push(format!(
                                "target.dim must be at least 2 for circle-placed means (got {dim})"
                            ));
                        }
                    }
                }
                if let Some(r) = radius {
                    positive(&mut errs, "radius", *r);
                }
            }
            Self::Rosenbrock { dim, a, b } => {
                if *dim == 0 || dim % 2 != 0 {
                    errs.push(format!("target.dim must be a positive even number (got {dim})"));
                }
                positive(&mut errs, "a", *a);
                if !b.is_finite() {
                    errs.push("target.b must be finite".into());
                }
            }
            Self::LogisticRegression { dataset, alpha } => {
                positive(&mut errs, "alpha", *alpha);
                if let DatasetSource::Synthetic {
                    n_rows, n_features, ..
                } = dataset
                {
                    if *n_rows == 0 || *n_features == 0 {
                        errs.push("target.dataset needs positive n_rows and n_features".into());
                    }
                }
            }
            Self::RoughWell {
                dim,
                sigma,
                eta,
                epsilon,
            } => {
                if *dim == 0 {
                    errs.push("target.dim must be positive".into());
                }
                positive(&mut errs, "sigma", *sigma);
                positive(&mut errs, "epsilon", *epsilon);
                if !eta.is_finite() {
                    errs.push("target.eta must be finite".into());
                }
            }
        }
        errs
    }
}

/// `n` means equally spaced on a circle of radius `r` in the first two
/// coordinates; remaining coordinates are zero.
pub fn circle_means(n: usize, dim: usize, radius: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|k| {
            let angle = 2.0 * PI * k as f64 / n as f64;
            let mut m = vec![0.0; dim];
            m[0] = radius * angle.cos();
            m[1] = radius * angle.sin();
            m
        })
        .collect()
}

/// Radius at which adjacent circle means are `separation` apart.
pub fn radius_for_separation(n: usize, separation: f64) -> f64 {
    separation / (2.0 * (PI / n as f64).sin())
}

#[derive(Clone, Debug)]
enum Family {
    Gaussian,
    Mixture {
        means: Vec<Vec<f64>>,
        log_weight: f64,
    },
    Rosenbrock {
        a: f64,
        b: f64,
    },
    Logistic {
        /// Design matrix with a leading intercept column.
        design: Vec<Vec<f64>>,
        labels: Vec<f64>,
        alpha: f64,
    },
    RoughWell {
        sigma: f64,
        eta: f64,
        epsilon: f64,
    },
}

/// An unnormalized posterior with analytic gradient. Immutable once built.
#[derive(Clone, Debug)]
pub struct TargetDensity {
    name: String,
    dim: usize,
    family: Family,
}

impl TargetDensity {
    pub fn build(spec: &TargetSpec) -> Result<Self> {
        let errs = spec.validate();
        if !errs.is_empty() {
            return Err(Error::Validation(errs));
        }
        let name = spec.family_name().to_string();
        let (dim, family) = match spec {
            TargetSpec::Gaussian { dim } => (*dim, Family::Gaussian),
            TargetSpec::GaussianMixture {
                dim,
                n_components,
                radius,
                means,
            } => {
                let means = match means {
                    Some(m) => m.clone(),
                    None => {
                        let r = radius.unwrap_or_else(|| radius_for_separation(*n_components, 6.0));
                        circle_means(*n_components, *dim, r)
                    }
                };
                let log_weight = -(means.len() as f64).ln();
                (*dim, Family::Mixture { means, log_weight })
            }
            TargetSpec::Rosenbrock { dim, a, b } => (*dim, Family::Rosenbrock { a: *a, b: *b }),
            TargetSpec::LogisticRegression { dataset, alpha } => {
                let data = match dataset {
                    DatasetSource::Synthetic {
                        n_rows,
                        n_features,
                        seed,
                    } => LabeledDataset::synthetic(*n_rows, *n_features, *seed)?,
                    DatasetSource::Csv { path } => LabeledDataset::from_csv(path)?,
                };
                return Ok(Self::logistic_regression(&data, *alpha));
            }
            TargetSpec::RoughWell {
                dim,
                sigma,
                eta,
                epsilon,
            } => (
                *dim,
                Family::RoughWell {
                    sigma: *sigma,
                    eta: *eta,
                    epsilon: *epsilon,
                },
            ),
        };
        Ok(Self { name, dim, family })
    }

    pub fn standard_gaussian(dim: usize) -> Self {
        Self {
            name: "gaussian".into(),
            dim,
            family: Family::Gaussian,
        }
    }

    pub fn gaussian_mixture(means: Vec<Vec<f64>>) -> Result<Self> {
        let dim = means.first().map(Vec::len).ok_or(Error::Empty("mixture means"))?;
        Self::build(&TargetSpec::GaussianMixture {
            dim,
            n_components: means.len(),
            radius: None,
            means: Some(means),
        })
    }

    /// Logistic-regression posterior over `[intercept, coefficients...]`.
    /// Features are standardized before use.
    pub fn logistic_regression(data: &LabeledDataset, alpha: f64) -> Self {
        let std = data.standardized();
        let design = std
            .features
            .iter()
            .map(|row| std::iter::once(1.0).chain(row.iter().copied()).collect())
            .collect();
        Self {
            name: "logistic_regression".into(),
            dim: data.n_features() + 1,
            family: Family::Logistic {
                design,
                labels: std.labels.iter().map(|&l| f64::from(l)).collect(),
                alpha,
            },
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Component means for mixture targets.
    pub fn mixture_means(&self) -> Option<&[Vec<f64>]> {
        match &self.family {
            Family::Mixture { means, .. } => Some(means),
            _ => None,
        }
    }

    fn check(&self, q: &[f64]) -> Result<()> {
        check_dim("target position", self.dim, q.len())?;
        if q.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite("target position"))
        }
    }

    /// Unnormalized `log π(q)`.
    pub fn log_density(&self, q: &[f64]) -> Result<f64> {
        self.check(q)?;
        Ok(self.log_density_unchecked(q))
    }

    pub fn grad_log_density(&self, q: &[f64]) -> Result<Vec<f64>> {
        self.check(q)?;
        Ok(self.grad_log_density_unchecked(q))
    }

    /// `U(q) = -log π(q)`.
    pub fn potential(&self, q: &[f64]) -> Result<f64> {
        self.log_density(q).map(|v| -v)
    }

    /// `∇U(q) = -∇ log π(q)`.
    pub fn grad_potential(&self, q: &[f64]) -> Result<Vec<f64>> {
        let mut g = self.grad_log_density(q)?;
        g.iter_mut().for_each(|v| *v = -*v);
        Ok(g)
    }

    /// `H = U(q) + Σ p²/2` with unit masses.
    pub fn hamiltonian(&self, z: &PhaseState) -> Result<f64> {
        self.hamiltonian_with_masses(z, None)
    }

    pub fn hamiltonian_with_masses(&self, z: &PhaseState, masses: Option<&[f64]>) -> Result<f64> {
        check_dim("hamiltonian momentum", self.dim, z.p.len())?;
        if let Some(m) = masses {
            check_dim("hamiltonian masses", self.dim, m.len())?;
        }
        Ok(self.potential(&z.q)? + kinetic_energy(&z.p, masses))
    }

    pub(crate) fn log_density_unchecked(&self, q: &[f64]) -> f64 {
        match &self.family {
            Family::Gaussian => -0.5 * dot(q, q),
            Family::Mixture { means, log_weight } => {
                let terms: Vec<f64> = means.iter().map(|m| -0.5 * sq_dist(q, m)).collect();
                log_weight + log_sum_exp(&terms)
            }
            Family::Rosenbrock { a, b } => -q
                .chunks_exact(2)
                .map(|pair| {
                    let (x, y) = (pair[0], pair[1]);
                    a * (y - x * x).powi(2) + (x - b).powi(2)
                })
                .sum::<f64>(),
            Family::Logistic {
                design,
                labels,
                alpha,
            } => {
                let lik: f64 = design
                    .iter()
                    .zip(labels)
                    .map(|(x, y)| {
                        let eta = dot(x, q);
                        y * eta - softplus(eta)
                    })
                    .sum();
                lik - 0.5 * alpha * dot(q, q)
            }
            Family::RoughWell {
                sigma,
                eta,
                epsilon,
            } => -q
                .iter()
                .map(|x| x * x / (2.0 * sigma * sigma) + eta * (x / epsilon).cos())
                .sum::<f64>(),
        }
    }

    pub(crate) fn grad_log_density_unchecked(&self, q: &[f64]) -> Vec<f64> {
        match &self.family {
            Family::Gaussian => q.iter().map(|v| -v).collect(),
            Family::Mixture { means, .. } => {
                let terms: Vec<f64> = means.iter().map(|m| -0.5 * sq_dist(q, m)).collect();
                let lse = log_sum_exp(&terms);
                let mut g = vec![0.0; q.len()];
                for (m, t) in means.iter().zip(&terms) {
                    let w = (t - lse).exp();
                    for ((gi, mi), qi) in g.iter_mut().zip(m).zip(q) {
                        *gi += w * (mi - qi);
                    }
                }
                g
            }
            Family::Rosenbrock { a, b } => {
                let mut g = vec![0.0; q.len()];
                for (k, pair) in q.chunks_exact(2).enumerate() {
                    let (x, y) = (pair[0], pair[1]);
                    let r = y - x * x;
                    g[2 * k] = 4.0 * a * x * r - 2.0 * (x - b);
                    g[2 * k + 1] = -2.0 * a * r;
                }
                g
            }
            Family::Logistic {
                design,
                labels,
                alpha,
            } => {
                let mut g: Vec<f64> = q.iter().map(|b| -alpha * b).collect();
                for (x, y) in design.iter().zip(labels) {
                    let resid = y - sigmoid(dot(x, q));
                    for (gi, xi) in g.iter_mut().zip(x) {
                        *gi += resid * xi;
                    }
                }
                g
            }
            Family::RoughWell {
                sigma,
                eta,
                epsilon,
            } => q
                .iter()
                .map(|x| -x / (sigma * sigma) + (eta / epsilon) * (x / epsilon).sin())
                .collect(),
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
