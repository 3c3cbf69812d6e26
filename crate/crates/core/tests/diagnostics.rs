mod common;

use lhnn_nuts::diagnostics::{
    degeneracy_score, ess, ess_1d, format_report, hamiltonian_trace, max_energy_wander,
    mode_occupancy, BenchmarkRow, EssVariant, TraceSource,
};
use lhnn_nuts::targets::circle_means;
use lhnn_nuts::{nuts_sample, PhaseState, SamplerConfig, SamplerMode, TargetDensity};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn ar1(rho: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = common::seeded(seed);
    let scale = (1.0 - rho * rho).sqrt();
    let mut x = rng.sample::<f64, _>(StandardNormal);
    (0..n)
        .map(|_| {
            x = rho * x + scale * rng.sample::<f64, _>(StandardNormal);
            x
        })
        .collect()
}

#[test]
fn ar1_ess_matches_closed_form() {
    // n (1 − ρ) / (1 + ρ)
    let expected = 10_000.0 * 0.1 / 1.9;
    for seed in 0..5 {
        let e = ess_1d(&ar1(0.9, 10_000, seed)).unwrap();
        assert!((e / expected - 1.0).abs() < 0.25, "seed {seed}: ESS {e:.1} vs {expected:.1}");
    }
}

#[test]
fn iid_ess_is_close_to_n() {
    for seed in 0..5 {
        let x = ar1(0.0, 4000, 100 + seed);
        let e = ess_1d(&x).unwrap();
        assert!((3000.0..=5000.0).contains(&e), "seed {seed}: ESS {e:.1}");
    }
}

#[test]
fn constant_chain_is_degenerate() {
    assert_eq!(ess_1d(&[2.5; 100]), None);
    let rows: Vec<Vec<f64>> = (0..100).map(|i| vec![1.0, i as f64 % 7.0]).collect();
    let r = ess(&rows, 0).unwrap();
    assert_eq!(r.per_dimension[0], 1.0);
    assert_eq!(r.degenerate, vec![0]);
    assert_eq!(r.min, 1.0);
}

#[test]
fn burn_in_is_dropped() {
    let mut rows: Vec<Vec<f64>> = vec![vec![1e6]; 50];
    rows.extend(ar1(0.0, 1000, 3).into_iter().map(|v| vec![v]));
    let r = ess(&rows, 50).unwrap();
    assert_eq!(r.n_used, 1000);
    assert!(r.min > 700.0);
    assert!(ess(&rows, 1045).is_err());
}

#[test]
fn iid_mixture_occupancy_is_balanced() {
    let means = circle_means(8, 2, 7.0);
    let mut rng = common::seeded(8);
    let samples: Vec<Vec<f64>> = (0..8000)
        .map(|_| {
            let m = &means[rng.random_range(0..8)];
            m.iter().map(|c| c + rng.sample::<f64, _>(StandardNormal)).collect()
        })
        .collect();
    let occ = mode_occupancy(&samples, &means).unwrap();
    for (k, f) in occ.iter().enumerate() {
        assert!((0.08..=0.17).contains(f), "mode {k}: {f}");
    }
}

#[test]
fn occupancy_edge_cases() {
    let means = circle_means(8, 2, 7.0);
    let at_first = vec![means[0].clone(); 20];
    let occ = mode_occupancy(&at_first, &means).unwrap();
    assert_eq!(occ[0], 1.0);
    assert!(occ[1..].iter().all(|&f| f == 0.0));
    assert!(mode_occupancy(&[], &means).is_err());
    assert!(mode_occupancy(&at_first, &[]).is_err());
}

#[test]
fn degeneracy_edge_cases() {
    let stuck = vec![vec![0.5, 0.5]; 10];
    assert_eq!(degeneracy_score(&stuck, 1e-6).unwrap(), 1.0);
    let moving: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 0.0]).collect();
    assert_eq!(degeneracy_score(&moving, 0.5).unwrap(), 0.0);
    assert!(degeneracy_score(&stuck[..1], 1.0).is_err());
    assert!(degeneracy_score(&stuck, 0.0).is_err());
}

#[test]
fn sho_traces() {
    let t = TargetDensity::standard_gaussian(1);
    let z0 = PhaseState::new(vec![1.0], vec![0.3]).unwrap();
    let trace = hamiltonian_trace(&t, TraceSource::Exact, &z0, 0.05, 1000).unwrap();
    assert_eq!(trace.len(), 1001);
    assert!((trace[1000].0 - 50.0).abs() < 1e-9);
    assert!(max_energy_wander(&trace) < 1e-3);

    let zero = hamiltonian_trace(&t, TraceSource::Exact, &z0, 0.05, 0).unwrap();
    assert_eq!(zero, vec![(0.0, 0.545)]);
}

#[test]
fn benchmark_rows_and_table() {
    let t = TargetDensity::standard_gaussian(2);
    let chain = nuts_sample(&t, None, &SamplerConfig::new(SamplerMode::Classical, 300, 0.3, 1)).unwrap();
    let row = BenchmarkRow::from_chain("gaussian", &chain, 0, 15, 0.0).unwrap();
    assert_eq!(row.n_exact_gradients, chain.ledger.exact_gradients);
    assert_eq!(row.ess_per_gradient, row.ess_min / row.n_exact_gradients as f64);

    let charged = BenchmarkRow::from_chain("gaussian", &chain, 1000, 15, 0.0).unwrap();
    assert_eq!(charged.n_exact_gradients, chain.ledger.exact_gradients + 1000);
    assert!(charged.ess_per_gradient < row.ess_per_gradient);

    let failed = BenchmarkRow::failed("rosenbrock", SamplerMode::LhnnMonitored, "diverged".into());
    let table = format_report(&[row, failed], EssVariant::Min);
    assert!(table.contains("gaussian"));
    assert!(table.contains("rosenbrock"));
    assert!(table.contains("# gradients"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn ess_is_affine_and_reversal_invariant(
        seed in 0u64..1000,
        rho in 0.0f64..0.95,
        scale in 0.01f64..100.0,
        shift in -50.0f64..50.0,
    ) {
        let x = ar1(rho, 500, seed);
        let base = ess_1d(&x).unwrap();
        let affine: Vec<f64> = x.iter().map(|v| scale * v + shift).collect();
        let reversed: Vec<f64> = x.iter().rev().copied().collect();
        prop_assert!((ess_1d(&affine).unwrap() / base - 1.0).abs() < 1e-6);
        prop_assert!((ess_1d(&reversed).unwrap() / base - 1.0).abs() < 1e-6);
        prop_assert!(base > 0.0 && base <= 500.0 * 500f64.log10());
    }

    #[test]
    fn occupancy_sums_to_one(points in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..200)) {
        let samples: Vec<Vec<f64>> = points.iter().map(|&(a, b)| vec![a, b]).collect();
        let occ = mode_occupancy(&samples, &circle_means(8, 2, 5.0)).unwrap();
        prop_assert!((occ.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degeneracy_is_a_fraction(
        points in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 2..200),
        radius in 1e-6f64..2.0,
    ) {
        let samples: Vec<Vec<f64>> = points.iter().map(|&(a, b)| vec![a, b]).collect();
        let s = degeneracy_score(&samples, radius).unwrap();
        prop_assert!((0.0..=1.0).contains(&s));
    }
}
