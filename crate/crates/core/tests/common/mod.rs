#![allow(dead_code)]

use std::sync::atomic::{AtomicUsize, Ordering};

use lhnn_nuts::network::Dense;
use lhnn_nuts::train::TrainingRecord;
use lhnn_nuts::{Activation, Lhnn, PhaseState, Result, SurrogateGradient, TargetDensity};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `|a − b| / max(1, |b|)`: relative error with a unit floor so that
/// components near zero are compared absolutely.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| rel_err(*x, *y)).fold(0.0, f64::max)
}

pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut x = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + h;
            let up = f(&x);
            x[i] = orig - h;
            let down = f(&x);
            x[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub fn random_net(rng: &mut ChaCha8Rng) -> Lhnn {
    let dim = rng.random_range(1..=3);
    let depth = rng.random_range(1..=3);
    let hidden: Vec<usize> = (0..depth).map(|_| rng.random_range(2..=8)).collect();
    let act = if rng.random::<bool>() {
        Activation::Tanh
    } else {
        Activation::Sine
    };
    Lhnn::new(dim, &hidden, act, rng.random()).unwrap()
}

pub fn random_record(dim: usize, rng: &mut ChaCha8Rng) -> TrainingRecord {
    let mut v = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-2.0..2.0)).collect() };
    TrainingRecord {
        z: PhaseState::new(v(dim), v(dim)).unwrap(),
        dq_dt: v(dim),
        dp_dt: v(dim),
    }
}

/// Plain layer-by-layer evaluation, written without ndarray.
pub fn reference_forward(net: &Lhnn, z: &[f64]) -> Vec<f64> {
    let act = |x: f64| match net.activation() {
        Activation::Tanh => x.tanh(),
        Activation::Sine => x.sin(),
        Activation::Relu => x.max(0.0),
        Activation::Identity => x,
    };
    let layers: &[Dense] = net.layers();
    let mut u = z.to_vec();
    for (k, l) in layers.iter().enumerate() {
        let mut next = Vec::with_capacity(l.outputs());
        for i in 0..l.outputs() {
            let mut a = l.bias[i];
            for j in 0..l.inputs() {
                a += l.weight[[i, j]] * u[j];
            }
            next.push(if k + 1 < layers.len() { act(a) } else { a });
        }
        u = next;
    }
    u
}

/// Surrogate that returns the exact potential gradient.
pub struct ExactStub<'a> {
    pub target: &'a TargetDensity,
}

impl SurrogateGradient for ExactStub<'_> {
    fn dim(&self) -> usize {
        self.target.dim()
    }
    fn grad_q(&self, q: &[f64], _p: &[f64]) -> Result<Vec<f64>> {
        self.target.grad_potential(q)
    }
}

/// Exact gradients, except on the listed call indices where it returns a
/// huge value that forces an integration-error breach.
pub struct ScheduledBreach<'a> {
    pub target: &'a TargetDensity,
    pub breach_calls: Vec<usize>,
    pub calls: AtomicUsize,
}

impl<'a> ScheduledBreach<'a> {
    pub fn new(target: &'a TargetDensity, breach_calls: Vec<usize>) -> Self {
        Self {
            target,
            breach_calls,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl SurrogateGradient for ScheduledBreach<'_> {
    fn dim(&self) -> usize {
        self.target.dim()
    }
    fn grad_q(&self, q: &[f64], _p: &[f64]) -> Result<Vec<f64>> {
        let k = self.calls.fetch_add(1, Ordering::SeqCst);
        if self.breach_calls.contains(&k) {
            Ok(vec![1e8; q.len()])
        } else {
            self.target.grad_potential(q)
        }
    }
}

/// Always returns a huge gradient.
pub struct AlwaysBreach {
    pub dim: usize,
}

impl SurrogateGradient for AlwaysBreach {
    fn dim(&self) -> usize {
        self.dim
    }
    fn grad_q(&self, q: &[f64], _p: &[f64]) -> Result<Vec<f64>> {
        Ok(vec![1e8; q.len()])
    }
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
