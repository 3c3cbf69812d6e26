//! Velocity-Verlet (leapfrog) integration driven by exact or surrogate
//! potential gradients.

use crate::error::{check_dim, Error, Result};
use crate::network::Lhnn;
use crate::targets::{PhaseState, TargetDensity};

/// Anything that can stand in for `∂H/∂q` during integration.
///
/// The surrogate Hamiltonian depends on both `q` and `p`, so the current
/// momentum is passed along even though the exact gradient ignores it.
pub trait SurrogateGradient: Send + Sync {
    fn dim(&self) -> usize;
    fn grad_q(&self, q: &[f64], p: &[f64]) -> Result<Vec<f64>>;
}

impl SurrogateGradient for Lhnn {
    fn dim(&self) -> usize {
        Lhnn::dim(self)
    }

    fn grad_q(&self, q: &[f64], p: &[f64]) -> Result<Vec<f64>> {
        let mut z = Vec::with_capacity(2 * q.len());
        z.extend_from_slice(q);
        z.extend_from_slice(p);
        let mut g = self.input_gradient(&z)?;
        g.truncate(q.len());
        Ok(g)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GradientKind {
    Exact,
    Surrogate,
}

#[derive(Clone, Copy)]
enum Backend<'a> {
    Exact(&'a TargetDensity),
    Surrogate(&'a dyn SurrogateGradient),
}

/// A gradient provider plus a count of how many times it was evaluated.
pub struct GradientSource<'a> {
    backend: Backend<'a>,
    evaluations: u64,
}

impl<'a> GradientSource<'a> {
    pub fn exact(target: &'a TargetDensity) -> Self {
        Self {
            backend: Backend::Exact(target),
            evaluations: 0,
        }
    }

    pub fn surrogate(net: &'a dyn SurrogateGradient) -> Self {
        Self {
            backend: Backend::Surrogate(net),
            evaluations: 0,
        }
    }

    pub fn kind(&self) -> GradientKind {
        match self.backend {
            Backend::Exact(_) => GradientKind::Exact,
            Backend::Surrogate(_) => GradientKind::Surrogate,
        }
    }

    pub fn dim(&self) -> usize {
        match self.backend {
            Backend::Exact(t) => t.dim(),
            Backend::Surrogate(s) => s.dim(),
        }
    }

    pub fn evaluations(&self) -> u64 {
        self.evaluations
    }

    /// `∂U/∂q` (exact) or `∂H_θ/∂q` (surrogate) at `(q, p)`.
    pub fn grad_potential(&mut self, q: &[f64], p: &[f64]) -> Result<Vec<f64>> {
        check_dim("gradient source position", self.dim(), q.len())?;
        self.evaluations += 1;
        let g = match self.backend {
            Backend::Exact(t) => t
                .grad_log_density_unchecked(q)
                .into_iter()
                .map(|v| -v)
                .collect::<Vec<_>>(),
            Backend::Surrogate(s) => s.grad_q(q, p)?,
        };
        if g.iter().all(|v| v.is_finite()) && q.iter().all(|v| v.is_finite()) {
            Ok(g)
        } else {
            Err(Error::IntegrationFailure {
                q: q.to_vec(),
                p: p.to_vec(),
            })
        }
    }
}

/// Step size and (diagonal) masses.
#[derive(Clone, Debug, PartialEq)]
pub struct IntegratorConfig {
    pub step_size: f64,
    /// `None` means unit masses.
    pub masses: Option<Vec<f64>>,
}

impl IntegratorConfig {
    pub fn new(step_size: f64) -> Self {
        Self {
            step_size,
            masses: None,
        }
    }

    pub fn with_masses(mut self, masses: Vec<f64>) -> Self {
        self.masses = Some(masses);
        self
    }

    /// Configuration covering end time `t_end` in `n_steps` equal steps.
    pub fn from_end_time(t_end: f64, n_steps: usize) -> Self {
        Self::new(t_end / n_steps as f64)
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "step size must be positive (got {})",
                self.step_size
            )));
        }
        if let Some(m) = &self.masses {
            check_dim("integrator masses", dim, m.len())?;
            if m.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
                return Err(Error::InvalidConfig("masses must be positive".into()));
            }
        }
        Ok(())
    }

    #[inline]
    fn mass(&self, i: usize) -> f64 {
        self.masses.as_ref().map_or(1.0, |m| m[i])
    }
}

/// A gradient already evaluated at some state, tagged with its source.
#[derive(Clone, Debug, PartialEq)]
pub struct CachedGradient {
    pub kind: GradientKind,
    pub values: Vec<f64>,
}

/// One velocity-Verlet step of signed length `direction * Δt`.
///
/// `q' = q + (h/m) p − (h²/2m) g(q)`, `p' = p − (h/2)(g(q) + g(q'))`. The
/// trailing gradient is evaluated at `(q', p − (h/2) g(q))`, the half-step
/// momentum, and returned so the next step can reuse it. A cached gradient
/// is only used when it came from the same kind of source.
pub fn leapfrog_step_cached(
    src: &mut GradientSource<'_>,
    cfg: &IntegratorConfig,
    z: &PhaseState,
    direction: f64,
    cached: Option<&CachedGradient>,
) -> Result<(PhaseState, CachedGradient)> {
    let d = z.dim();
    check_dim("leapfrog state", src.dim(), d)?;
    let h = direction * cfg.step_size;
    let g0 = match cached {
        Some(c) if c.kind == src.kind() => c.values.clone(),
        _ => src.grad_potential(&z.q, &z.p)?,
    };
    let mut q1 = Vec::with_capacity(d);
    let mut p_half = Vec::with_capacity(d);
    for i in 0..d {
        let m = cfg.mass(i);
        q1.push(z.q[i] + (h / m) * z.p[i] - (h * h / (2.0 * m)) * g0[i]);
        p_half.push(z.p[i] - 0.5 * h * g0[i]);
    }
    let g1 = src.grad_potential(&q1, &p_half)?;
    let p1: Vec<f64> = (0..d).map(|i| z.p[i] - 0.5 * h * (g0[i] + g1[i])).collect();
    let next = PhaseState { q: q1, p: p1 };
    if !next.is_finite() {
        return Err(Error::IntegrationFailure {
            q: next.q,
            p: next.p,
        });
    }
    Ok((
        next,
        CachedGradient {
            kind: src.kind(),
            values: g1,
        },
    ))
}

/// One forward step without caching: exactly two gradient evaluations.
pub fn leapfrog_step(
    src: &mut GradientSource<'_>,
    cfg: &IntegratorConfig,
    z: &PhaseState,
) -> Result<PhaseState> {
    leapfrog_step_cached(src, cfg, z, 1.0, None).map(|(z, _)| z)
}

/// `n_steps` forward steps, reusing each trailing gradient as the next
/// leading one (`n_steps + 1` evaluations). Element 0 is `z0`.
pub fn integrate_trajectory(
    src: &mut GradientSource<'_>,
    cfg: &IntegratorConfig,
    z0: &PhaseState,
    n_steps: usize,
) -> Result<Vec<PhaseState>> {
    if n_steps == 0 {
        return Err(Error::InvalidConfig("trajectory needs at least one step".into()));
    }
    cfg.validate(z0.dim())?;
    let mut path = Vec::with_capacity(n_steps + 1);
    path.push(z0.clone());
    let mut cache = None;
    for _ in 0..n_steps {
        let (next, g) = leapfrog_step_cached(src, cfg, path.last().unwrap(), 1.0, cache.as_ref())?;
        path.push(next);
        cache = Some(g);
    }
    Ok(path)
}
