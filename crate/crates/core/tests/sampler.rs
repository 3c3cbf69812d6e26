mod common;

use common::{AlwaysBreach, ExactStub, ScheduledBreach};
use lhnn_nuts::integrate::{leapfrog_step_cached, CachedGradient};
use lhnn_nuts::sampler::{error_criterion, FallbackState, NutsKernel, Subtree, TreeNode};
use lhnn_nuts::targets::circle_means;
use lhnn_nuts::{
    nuts_sample, ChainResult, GradientSource, IntegratorConfig, PhaseState, SamplerConfig,
    SamplerMode, SurrogateGradient, TargetDensity,
};
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn state(q: f64, p: f64) -> PhaseState {
    PhaseState::new(vec![q], vec![p]).unwrap()
}

fn check_ledger(chain: &ChainResult) {
    assert_eq!(
        chain.ledger.exact_gradients,
        2 * chain.exact_steps - chain.exact_cache_hits,
        "exact ledger"
    );
    assert_eq!(
        chain.ledger.surrogate_evals,
        2 * chain.surrogate_steps - chain.surrogate_cache_hits,
        "surrogate ledger"
    );
    let steps: u64 = chain.info.iter().map(|i| i.leapfrog_steps).sum();
    assert_eq!(steps, chain.exact_steps + chain.surrogate_steps);
}

#[test]
fn base_case_on_the_maximal_slice_rejects_an_energy_increase() {
    let t = TargetDensity::standard_gaussian(1);
    let cfg = SamplerConfig::new(SamplerMode::Classical, 1, 0.1, 0);
    let mut kernel = NutsKernel::new(&t, None, &cfg).unwrap();
    let z = state(0.0, 1.0);
    let ln_u = -t.hamiltonian(&z).unwrap();
    let mut fb = FallbackState::default();
    let tree = kernel.build_tree(&TreeNode::new(z), ln_u, 1.0, 0, &mut fb, &mut common::seeded(0));
    // one step from (0, 1): q' = 0.1, p' = 0.995, H' = 0.5000125
    assert!((tree.proposal.q[0] - 0.1).abs() < 1e-15);
    assert!((tree.proposal.p[0] - 0.995).abs() < 1e-15);
    assert!((tree.proposal_h - 0.5000125).abs() < 1e-12);
    assert_eq!(tree.n, 0);
    assert!(tree.s);
    assert_eq!(kernel.ledger().exact_gradients, 2);
}

/// The four leapfrog states a depth-2 tree visits, computed one by one.
fn flat_states(t: &TargetDensity, z: &PhaseState, dt: f64, direction: f64) -> Vec<(PhaseState, f64)> {
    let integ = IntegratorConfig::new(dt);
    let mut src = GradientSource::exact(t);
    let mut out = Vec::new();
    let mut cur = z.clone();
    let mut cache: Option<CachedGradient> = None;
    for _ in 0..4 {
        let (next, g) = leapfrog_step_cached(&mut src, &integ, &cur, direction, cache.as_ref()).unwrap();
        out.push((next.clone(), t.hamiltonian(&next).unwrap()));
        cur = next;
        cache = Some(g);
    }
    out
}

fn turned(a: &PhaseState, b: &PhaseState, direction: f64) -> bool {
    let (minus, plus) = if direction < 0.0 { (b, a) } else { (a, b) };
    let span: Vec<f64> = plus.q.iter().zip(&minus.q).map(|(x, y)| x - y).collect();
    let dot = |p: &[f64]| span.iter().zip(p).map(|(x, y)| x * y).sum::<f64>();
    !(dot(&minus.p) >= 0.0 && dot(&plus.p) >= 0.0)
}

/// Non-recursive replay of a depth-2 tree: two inner merges, then the outer
/// merge, drawing uniforms from `rng` in the same order.
fn reference_depth2(
    states: &[(PhaseState, f64)],
    ln_u: f64,
    direction: f64,
    rng: &mut ChaCha8Rng,
) -> (PhaseState, u64, bool) {
    let n_of = |h: f64| u64::from(h + ln_u <= 0.0);
    let s_of = |h: f64| !error_criterion(h, ln_u, 1000.0);
    let half = |a: usize, rng: &mut ChaCha8Rng| -> (PhaseState, u64, bool) {
        let (za, ha) = &states[a];
        if !s_of(*ha) {
            return (za.clone(), n_of(*ha), false);
        }
        let (zb, hb) = &states[a + 1];
        let (na, nb) = (n_of(*ha), n_of(*hb));
        let mut prop = za.clone();
        if na + nb > 0 && rng.random::<f64>() < nb as f64 / (na + nb) as f64 {
            prop = zb.clone();
        }
        (prop, na + nb, s_of(*hb) && !turned(za, zb, direction))
    };
    let (pa, na, sa) = half(0, rng);
    if !sa {
        return (pa, na, false);
    }
    let (pb, nb, sb) = half(2, rng);
    let mut prop = pa;
    if na + nb > 0 && rng.random::<f64>() < nb as f64 / (na + nb) as f64 {
        prop = pb;
    }
    (prop, na + nb, sb && !turned(&states[0].0, &states[3].0, direction))
}

#[test]
fn depth_two_tree_matches_flat_enumeration() {
    let t = TargetDensity::standard_gaussian(1);
    let mut checked = 0;
    for seed in 0..40u64 {
        let mut rng = common::seeded(seed);
        let z = state(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let dt = rng.random_range(0.05..0.8);
        let direction = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let h0 = t.hamiltonian(&z).unwrap();
        let ln_u = -h0 + rng.random::<f64>().ln();

        let cfg = SamplerConfig::new(SamplerMode::Classical, 1, dt, 0);
        let mut kernel = NutsKernel::new(&t, None, &cfg).unwrap();
        let mut fb = FallbackState::default();
        let mut tree_rng = common::seeded(1000 + seed);
        let mut ref_rng = tree_rng.clone();
        let tree: Subtree = kernel.build_tree(&TreeNode::new(z.clone()), ln_u, direction, 2, &mut fb, &mut tree_rng);

        let states = flat_states(&t, &z, dt, direction);
        let (prop, n, s) = reference_depth2(&states, ln_u, direction, &mut ref_rng);
        assert_eq!(tree.proposal, prop, "seed {seed}");
        assert_eq!(tree.n, n, "seed {seed}");
        assert_eq!(tree.s, s, "seed {seed}");
        // both streams consumed the same number of draws
        assert_eq!(tree_rng.random::<u64>(), ref_rng.random::<u64>(), "seed {seed}");
        if s {
            let edge = if direction > 0.0 { &tree.plus.z } else { &tree.minus.z };
            assert_eq!(edge, &states[3].0);
            checked += 1;
        }
    }
    assert!(checked > 10, "too few full trees ({checked})");
}

#[test]
fn forced_breach_switches_to_exact_gradients() {
    let t = TargetDensity::standard_gaussian(1);
    let stub = AlwaysBreach { dim: 1 };
    let cfg = SamplerConfig::new(SamplerMode::LhnnMonitored, 1, 0.1, 0);
    let mut kernel = NutsKernel::new(&t, Some(&stub), &cfg).unwrap();
    let z = state(0.3, -0.4);
    let ln_u = -t.hamiltonian(&z).unwrap() - 0.5;
    let mut fb = FallbackState::default();
    let tree = kernel.build_tree(&TreeNode::new(z.clone()), ln_u, 1.0, 0, &mut fb, &mut common::seeded(0));
    assert!(fb.active);
    assert_eq!(fb.count, 0);
    assert!(tree.breached);
    let exact = lhnn_nuts::integrate::leapfrog_step(&mut GradientSource::exact(&t), &IntegratorConfig::new(0.1), &z)
        .unwrap();
    assert_eq!(tree.proposal, exact);
    let ledger = kernel.ledger();
    assert_eq!(ledger.surrogate_evals, 2);
    assert_eq!(ledger.exact_gradients, 2);

    // with the flag already set, no surrogate step is attempted
    let tree2 = kernel.build_tree(&tree.plus, ln_u, 1.0, 0, &mut fb, &mut common::seeded(0));
    assert!(!tree2.breached);
    let ledger = kernel.ledger();
    assert_eq!(ledger.surrogate_evals, 2);
    // the cached exact gradient at the edge is reused
    assert_eq!(ledger.exact_gradients, 3);
}

fn fallback_runs(chain: &ChainResult) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = None;
    for (k, info) in chain.info.iter().enumerate() {
        match (info.fallback, start) {
            (true, None) => start = Some(k),
            (false, Some(s)) => {
                runs.push((s, k - s));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, chain.info.len() - s));
    }
    runs
}

#[test]
fn every_fallback_episode_lasts_n_lf_iterations() {
    let t = TargetDensity::standard_gaussian(2);
    for n_lf in [5, 10, 20] {
        let stub = ScheduledBreach::new(&t, vec![3, 250, 251, 900, 1700, 2600]);
        let mut cfg = SamplerConfig::new(SamplerMode::LhnnMonitored, 400, 0.2, 7);
        cfg.n_lf = n_lf;
        let chain = nuts_sample(&t, Some(&stub), &cfg).unwrap();
        check_ledger(&chain);
        let breaches: Vec<usize> = (0..chain.info.len()).filter(|&k| chain.info[k].breach).collect();
        assert!(breaches.len() >= 3, "n_lf {n_lf}: breaches at {breaches:?}");
        // a breach only ever happens outside an episode
        for w in breaches.windows(2) {
            assert!(w[1] - w[0] >= n_lf, "n_lf {n_lf}: breaches at {breaches:?}");
        }
        for (k, info) in chain.info.iter().enumerate() {
            let in_episode = breaches.iter().any(|&b| k >= b && k < b + n_lf);
            assert_eq!(info.fallback, in_episode, "n_lf {n_lf}, iteration {k}");
        }
        for (start, len) in fallback_runs(&chain) {
            if start + len < chain.info.len() {
                assert_eq!(len % n_lf, 0, "n_lf {n_lf}: run at {start} of length {len}");
            }
        }
    }
}

#[test]
fn constant_breaches_give_back_to_back_episodes() {
    let t = TargetDensity::standard_gaussian(1);
    let stub = AlwaysBreach { dim: 1 };
    let cfg = SamplerConfig::new(SamplerMode::LhnnMonitored, 95, 0.2, 3);
    let chain = nuts_sample(&t, Some(&stub), &cfg).unwrap();
    check_ledger(&chain);
    let breaches: Vec<usize> = (0..95).filter(|&k| chain.info[k].breach).collect();
    let expected: Vec<usize> = (0..95).step_by(10).collect();
    assert_eq!(breaches, expected);
    assert!(chain.info.iter().all(|i| i.fallback));
    // exactly one failed surrogate step per episode
    assert_eq!(chain.surrogate_steps, expected.len() as u64);
    assert_eq!(chain.ledger.surrogate_evals, 2 * expected.len() as u64);
}

fn mixture() -> TargetDensity {
    TargetDensity::gaussian_mixture(circle_means(8, 2, 4.0)).unwrap()
}

#[test]
fn exact_stub_reproduces_classical_chain() {
    for t in [TargetDensity::standard_gaussian(2), mixture()] {
        let stub = ExactStub { target: &t };
        let classical = nuts_sample(&t, None, &SamplerConfig::new(SamplerMode::Classical, 300, 0.1, 5)).unwrap();
        let unmon = nuts_sample(
            &t,
            Some(&stub),
            &SamplerConfig::new(SamplerMode::LhnnUnmonitored, 300, 0.1, 5),
        )
        .unwrap();
        let mon = nuts_sample(
            &t,
            Some(&stub),
            &SamplerConfig::new(SamplerMode::LhnnMonitored, 300, 0.1, 5),
        )
        .unwrap();
        assert_eq!(classical.samples, unmon.samples);
        assert_eq!(classical.samples, mon.samples);

        assert_eq!(classical.ledger.surrogate_evals, 0);
        assert_eq!(unmon.ledger.exact_gradients, 0);
        assert_eq!(mon.ledger.exact_gradients, 0);
        assert_eq!(classical.ledger.exact_gradients, unmon.ledger.surrogate_evals);
        for c in [&classical, &unmon, &mon] {
            check_ledger(c);
        }
    }
}

#[test]
fn monitored_exact_gradients_only_come_from_fallback() {
    let t = mixture();
    let stub = ScheduledBreach::new(&t, vec![10, 5000]);
    let chain = nuts_sample(&t, Some(&stub), &SamplerConfig::new(SamplerMode::LhnnMonitored, 300, 0.1, 2)).unwrap();
    check_ledger(&chain);
    let fallback_steps: u64 = chain
        .info
        .iter()
        .filter(|i| i.fallback)
        .map(|i| i.leapfrog_steps)
        .sum();
    assert!(chain.exact_steps > 0);
    assert!(chain.exact_steps <= fallback_steps);
    assert_eq!(stub.calls() as u64, chain.ledger.surrogate_evals);
}

#[test]
fn selected_states_lie_in_their_slice() {
    let t = mixture();
    let stub = ScheduledBreach::new(&t, (0..50).map(|k| 37 * k).collect());
    for (mode, net) in [
        (SamplerMode::Classical, None),
        (SamplerMode::LhnnMonitored, Some(&stub as &dyn SurrogateGradient)),
    ] {
        let chain = nuts_sample(&t, net, &SamplerConfig::new(mode, 500, 0.2, 8)).unwrap();
        for (k, info) in chain.info.iter().enumerate() {
            assert!(info.hamiltonian + info.ln_u <= 0.0, "{mode:?} sample {k}");
            assert!(t.potential(&chain.samples[k]).unwrap() <= info.hamiltonian + 1e-12);
        }
    }
}

#[test]
fn chains_are_reproducible_and_written_as_csv() {
    let t = TargetDensity::standard_gaussian(2);
    let cfg = SamplerConfig::new(SamplerMode::Classical, 50, 0.3, 12);
    let a = nuts_sample(&t, None, &cfg).unwrap();
    let b = nuts_sample(&t, None, &cfg).unwrap();
    assert_eq!(a.samples, b.samples);
    assert_eq!(a.info, b.info);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("chain.csv");
    a.write_csv(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().next(), Some("iter,q_1,q_2,H,tree_depth,fallback,u"));
    assert_eq!(text.lines().count(), 51);
    assert_eq!(lhnn_nuts::sampler::read_chain_csv(&path).unwrap(), a.samples);
}

#[test]
fn invalid_configurations_are_rejected() {
    let t = TargetDensity::standard_gaussian(1);
    let stub = ExactStub { target: &t };
    let mon = SamplerConfig::new(SamplerMode::LhnnMonitored, 10, 0.1, 0);
    assert!(nuts_sample(&t, None, &mon).is_err());
    let classical = SamplerConfig::new(SamplerMode::Classical, 10, 0.1, 0);
    assert!(nuts_sample(&t, Some(&stub), &classical).is_err());
    let mut bad = mon.clone();
    bad.delta_max_hnn = 2000.0;
    assert!(nuts_sample(&t, Some(&stub), &bad).is_err());
    let mut odd = mon.clone();
    odd.n_lf = 2;
    assert!(nuts_sample(&t, Some(&stub), &odd).is_err());
    odd.allow_any_n_lf = true;
    assert!(nuts_sample(&t, Some(&stub), &odd).is_ok());
}

#[test]
fn max_depth_caps_tree_building() {
    let t = TargetDensity::standard_gaussian(1);
    let mut cfg = SamplerConfig::new(SamplerMode::Classical, 30, 1e-3, 4);
    cfg.max_tree_depth = 3;
    let chain = nuts_sample(&t, None, &cfg).unwrap();
    assert!(chain.info.iter().all(|i| i.tree_depth <= 3));
    assert!(chain.n_max_depth > 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ledger_reconciles_for_any_seed(seed in 0u64..10_000, dt in 0.05f64..1.5) {
        let t = mixture();
        let chain = nuts_sample(&t, None, &SamplerConfig::new(SamplerMode::Classical, 40, dt, seed)).unwrap();
        check_ledger(&chain);
        prop_assert!(chain.samples.iter().all(|q| q.len() == 2 && q.iter().all(|v| v.is_finite())));
    }

    #[test]
    fn criterion_is_a_strict_inequality(h in -1e3f64..1e3, ln_u in -1e3f64..1e3, thr in -1e3f64..1e3) {
        prop_assert_eq!(error_criterion(h, ln_u, thr), h + ln_u > thr);
    }
}
