use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use proxcerf::baselines::{fit_yx, fit_yxu, linear_nc};
use proxcerf::conjugate::ols;
use proxcerf::diagnostics::{assumption_tests, partial_correlation};
use proxcerf::simulation::{simulate_linear, Scenario};
use proxcerf::{fit, Dataset, Error, ModelConfig, OutcomeModel};

fn quick(k: usize) -> ModelConfig {
    ModelConfig {
        k,
        iterations: 400,
        burn_in: 200,
        ..ModelConfig::default()
    }
}

#[test]
fn linear_nc_is_centered_on_the_true_slope() {
    // The estimator's sampling SD at n = 5000 is about 0.036.
    let est: Vec<f64> = (0..20)
        .map(|s| {
            let d = simulate_linear(5000, 1000 + s).unwrap();
            linear_nc(&d, 0, 0.95, s, 1e-6).unwrap().estimate
        })
        .collect();
    let m = proxcerf::stats::mean(&est);
    let sd = proxcerf::stats::variance(&est).sqrt();
    assert!((m - 2.0).abs() < 3.0 * 0.036 / 20f64.sqrt(), "{m}");
    assert!(sd < 0.06, "{sd}");
}

#[test]
fn linear_nc_without_w_confounding_is_the_adjusted_slope() {
    // θ_WX = 0 in the population: w depends on z only.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 4000;
    let mut g = || -> f64 { StandardNormal.sample(&mut rng) };
    let z: Vec<f64> = (0..n).map(|_| g()).collect();
    let x: Vec<f64> = z.iter().map(|z| 0.5 * z + g()).collect();
    let w: Vec<f64> = z.iter().map(|z| 2.0 * z + 0.3 * g()).collect();
    let y: Vec<f64> = x.iter().zip(&z).map(|(x, z)| 1.5 * x + z + 0.3 * g()).collect();
    let d = Dataset::new(y.clone(), x.clone(), z.clone(), w).unwrap();
    let e = linear_nc(&d, 0, 0.95, 1, 1e-6).unwrap();
    let adj = ols(&[&x, &z], &y).unwrap()[1];
    assert!((e.estimate - adj).abs() < 0.02);
}

#[test]
fn single_component_fit_slope_is_two() {
    let d = simulate_linear(5000, 31).unwrap().without_u();
    let f = fit(&d, OutcomeModel::NegativeControl, &quick(1), 1).unwrap();
    let g = &f.estimate.grid;
    let (j0, j1) = (0, g.len() - 1);
    let slopes: Vec<f64> = f
        .estimate
        .draws
        .iter_rows()
        .map(|r| (r[j1] - r[j0]) / (g[j1] - g[j0]))
        .collect();
    let mean = slopes.iter().sum::<f64>() / slopes.len() as f64;
    assert!((mean - 2.0).abs() < 0.1, "{mean}");
}

#[test]
fn baseline_fits_run_and_yxu_needs_u() {
    let full = proxcerf::simulation::simulate(&Scenario::new(2, 300, 5).unwrap()).unwrap();
    let cfg = ModelConfig { grid: proxcerf::config::GridSpec { points: 10, ..Default::default() }, ..quick(4) };
    assert_eq!(fit_yx(&full.without_u(), &cfg, 1).unwrap().estimate.label, "YX");
    assert_eq!(fit_yxu(&full, &cfg, 1).unwrap().estimate.label, "YXU");
    assert!(matches!(fit_yxu(&full.without_u(), &cfg, 1), Err(Error::Config(_))));
    let constant_u = full.without_u().with_u(vec![1.0; 300]).unwrap();
    assert!(matches!(fit_yxu(&constant_u, &cfg, 1), Err(Error::ZeroVariance(_))));
}

#[test]
fn uninformative_w_aborts_negative_control_fit() {
    let d = simulate_linear(300, 8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let w: Vec<f64> = (0..300).map(|_| StandardNormal.sample(&mut rng)).collect();
    let d = Dataset::new(d.y, d.x, d.z, w).unwrap();
    let mut cfg = quick(3);
    cfg.tol_wz = 0.5;
    let err = fit(&d, OutcomeModel::NegativeControl, &cfg, 1).unwrap_err();
    assert!(matches!(err, Error::IdentificationRate { .. }), "{err}");
    assert!(err.to_string().contains("A6/A7"));
}

#[test]
fn assumption_report_on_scenario_data() {
    let d = proxcerf::simulation::simulate(&Scenario::new(1, 2000, 9).unwrap()).unwrap();
    let rep = assumption_tests(&d).unwrap();
    let get = |a: &str| rep.tests.iter().find(|t| t.assumption == a).unwrap();
    assert_eq!(get("A6").conclusion, "holds");
    assert_eq!(get("A7").conclusion, "holds");
    // W and Z are conditionally independent given U by construction.
    assert!(get("A5").result.covers_zero() || get("A5").result.estimate.abs() < 0.1);
    let mut csv = Vec::new();
    rep.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("assumption,null,estimate,ci_lower,ci_upper,n,conclusion"));
    assert_eq!(text.lines().count(), 1 + rep.tests.len());
}

#[test]
fn fisher_interval_contains_estimate() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for n in [10usize, 50, 500] {
        let a: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let b: Vec<f64> = a.iter().map(|v| { let e: f64 = StandardNormal.sample(&mut rng); v + e }).collect();
        let c: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let r = partial_correlation(&a, &b, &[&c]).unwrap();
        assert!(r.lower < r.estimate && r.estimate < r.upper);
        let half = (r.estimate.atanh() - r.lower.atanh()) * ((n - 4) as f64).sqrt();
        assert!((half - 1.959_963_984_540_054).abs() < 1e-9);
    }
}
