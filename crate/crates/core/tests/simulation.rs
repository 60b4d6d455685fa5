use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use proxcerf::simulation::{
    exposure_quantile, run_replications, sample_outcome, simulate, true_cerf, BenchmarkSpec,
    Scenario,
};
use proxcerf::{stats, ModelConfig, OutcomeModel};

/// Monte Carlo mean of Y(x) over U ~ N(1, 0.2), with its standard error.
fn mc_cerf(id: u8, x: f64, draws: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = Normal::new(1.0, 0.2f64.sqrt()).unwrap();
    let ys: Vec<f64> = (0..draws)
        .map(|_| {
            let ui = u.sample(&mut rng);
            sample_outcome(id, x, ui, &mut rng)
        })
        .collect();
    let m = stats::mean(&ys);
    (m, (stats::variance(&ys) / draws as f64).sqrt())
}

#[test]
fn true_curves_match_monte_carlo() {
    for id in 1..=4u8 {
        for (j, x) in [3.5, 4.5, 5.5, 6.5, 7.5].into_iter().enumerate() {
            let (m, se) = mc_cerf(id, x, 100_000, 100 * id as u64 + j as u64);
            let t = true_cerf(id, x);
            assert!((m - t).abs() < 3.0 * se, "scenario {id} x={x}: {m} vs {t} (se {se})");
        }
    }
    assert_eq!(true_cerf(1, 5.5), 14.0);
}

#[test]
fn simulated_columns_have_the_stated_moments() {
    let d = simulate(&Scenario::new(2, 50_000, 3).unwrap()).unwrap();
    let u = d.u_hidden.as_ref().unwrap();
    let tol = 0.02;
    assert!((stats::mean(u) - 1.0).abs() < tol);
    assert!((stats::variance(u) - 0.2).abs() < tol);
    assert!((stats::mean(&d.x) - 5.5).abs() < 3.0 * tol);
    assert!((stats::variance(&d.x) - 3.4).abs() < 0.1);
    assert!((stats::mean(&d.w) - (-1.0)).abs() < tol);
    assert!((stats::mean(&d.z) - 0.5).abs() < tol);
    let s = stats::sorted(&d.x);
    assert!((stats::quantile_sorted(&s, 0.9) - exposure_quantile(2, 0.9)).abs() < 0.05);
}

#[test]
fn smoke_benchmark_scores_and_marks_models() {
    let cfg = ModelConfig {
        k: 5,
        iterations: 200,
        burn_in: 100,
        ..ModelConfig::default()
    };
    let spec = BenchmarkSpec {
        scenario: 2,
        n: 200,
        replicates: 2,
        models: vec![OutcomeModel::NegativeControl, OutcomeModel::UAdjusted],
    };
    let reports = run_replications(&spec, &cfg).unwrap();
    assert_eq!(reports.len(), 2);
    for r in &reports {
        assert_eq!(r.results.len(), 2);
        assert_eq!(r.failed(), 0);
        assert_eq!(r.grid.len(), 100);
        assert!(!r.central.is_empty());
        let c = r.pooled_coverage(0.95).unwrap();
        assert!((0.0..=1.0).contains(&c));
    }
    let again = run_replications(&spec, &cfg).unwrap();
    assert_eq!(reports[0].pooled, again[0].pooled);
    assert!(run_replications(&BenchmarkSpec { scenario: 5, ..spec }, &cfg).is_err());
}
