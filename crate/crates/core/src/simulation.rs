//! Synthetic data with a hidden confounder and closed-form true curves, and a
//! replication harness that scores fitted curves against them.
//!
//! Every generator shares U ~ N(1, 0.2), W | U ~ N(1 − 2U, 0.2) and
//! Z | U ~ N(−1 + 1.5U, 0.2); the scenarios differ in X | U and Y | X, U. The
//! second argument of N(·, ·) is a variance throughout.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::fit::fit;
use crate::identification::{summarize, Bands};
use crate::matrix::RowMatrix;
use crate::model::OutcomeModel;
use crate::normal;
use crate::stats;

const U_MEAN: f64 = 1.0;
const U_VAR: f64 = 0.2;
const NC_VAR: f64 = 0.2;
const X_VAR: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: u8,
    pub n: usize,
    pub seed: u64,
}

impl Scenario {
    pub fn new(id: u8, n: usize, seed: u64) -> Result<Self> {
        check_id(id)?;
        if n == 0 {
            return Err(Error::Config("scenario sample size must be at least 1".into()));
        }
        Ok(Scenario { id, n, seed })
    }
}

fn check_id(id: u8) -> Result<()> {
    if (1..=4).contains(&id) {
        Ok(())
    } else {
        Err(Error::Config(format!("scenario must be 1, 2, 3 or 4 (got {id})")))
    }
}

/// Intercept of E[X | U] = a + 4U.
fn exposure_intercept(id: u8) -> f64 {
    match id {
        1 | 2 => 1.5,
        3 => 1.0,
        _ => 2.5,
    }
}

/// sign(a) with sign(0) = +1.
#[inline]
fn sign(a: f64) -> f64 {
    if a >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// E[Y | X = x, U = u].
pub fn outcome_mean(id: u8, x: f64, u: f64) -> f64 {
    match id {
        1 => {
            if x < 5.5 {
                1.0 + 2.0 * x + 2.0 * u
            } else {
                -16.0 + 5.0 * x + 2.5 * u
            }
        }
        2 => -10.0 + 2.2 * (x - 6.0).powi(2) + 4.0 * u,
        3 => 1.5 + sign(x - 5.0) * (x - 5.0).abs().sqrt() + 1.7 * u,
        _ => -2.0 * (-1.4 * (x - 6.0)).exp() + 0.8 * u.exp(),
    }
}

/// Var[Y | X, U].
pub fn outcome_variance(id: u8) -> f64 {
    match id {
        1 => 0.3,
        3 => 0.05,
        _ => 0.2,
    }
}

/// Draws Y | X = x, U = u.
pub fn sample_outcome<R: Rng + ?Sized>(id: u8, x: f64, u: f64, rng: &mut R) -> f64 {
    let noise = Normal::new(0.0, outcome_variance(id).sqrt()).expect("valid variance");
    outcome_mean(id, x, u) + noise.sample(rng)
}

/// E[Y(x)]: the outcome mean integrated over U ~ N(1, 0.2).
pub fn true_cerf(id: u8, x: f64) -> f64 {
    match id {
        1 => {
            if x < 5.5 {
                3.0 + 2.0 * x
            } else {
                -13.5 + 5.0 * x
            }
        }
        2 => -6.0 + 2.2 * (x - 6.0).powi(2),
        3 => 3.2 + sign(x - 5.0) * (x - 5.0).abs().sqrt(),
        // E[e^U] = e^{1 + 0.2/2}
        _ => -2.0 * (-1.4 * (x - 6.0)).exp() + 0.8 * 1.1f64.exp(),
    }
}

/// Quantile of the marginal exposure distribution N(a + 4, 16·0.2 + 0.2).
pub fn exposure_quantile(id: u8, p: f64) -> f64 {
    let mean = exposure_intercept(id) + 4.0 * U_MEAN;
    let sd = (16.0 * U_VAR + X_VAR).sqrt();
    mean + sd * normal::quantile(p)
}

/// One dataset for a scenario; `u_hidden` holds U.
pub fn simulate(s: &Scenario) -> Result<Dataset> {
    check_id(s.id)?;
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let u_dist = Normal::new(U_MEAN, U_VAR.sqrt()).expect("valid");
    let nc_noise = Normal::new(0.0, NC_VAR.sqrt()).expect("valid");
    let x_noise = Normal::new(0.0, X_VAR.sqrt()).expect("valid");
    let a = exposure_intercept(s.id);
    let (mut y, mut x, mut z, mut w, mut u) = (
        Vec::with_capacity(s.n),
        Vec::with_capacity(s.n),
        Vec::with_capacity(s.n),
        Vec::with_capacity(s.n),
        Vec::with_capacity(s.n),
    );
    for _ in 0..s.n {
        let ui = u_dist.sample(&mut rng);
        let wi = 1.0 - 2.0 * ui + nc_noise.sample(&mut rng);
        let zi = -1.0 + 1.5 * ui + nc_noise.sample(&mut rng);
        let xi = a + 4.0 * ui + x_noise.sample(&mut rng);
        let yi = sample_outcome(s.id, xi, ui, &mut rng);
        u.push(ui);
        w.push(wi);
        z.push(zi);
        x.push(xi);
        y.push(yi);
    }
    Dataset::new(y, x, z, w)?.with_u(u)
}

/// A transparent linear system with causal slope 2: U ~ N(0, 1), and
/// Z = U + e, W = −2U + e, X = U + e, Y = 2X + 3U + e with noise variance 0.1.
pub fn simulate_linear(n: usize, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.1f64.sqrt()).expect("valid");
    let (mut y, mut x, mut z, mut w, mut u) = (
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    );
    for _ in 0..n {
        let ui: f64 = rng.sample(rand_distr::StandardNormal);
        let zi = ui + noise.sample(&mut rng);
        let wi = -2.0 * ui + noise.sample(&mut rng);
        let xi = ui + noise.sample(&mut rng);
        let yi = 2.0 * xi + 3.0 * ui + noise.sample(&mut rng);
        u.push(ui);
        z.push(zi);
        w.push(wi);
        x.push(xi);
        y.push(yi);
    }
    Dataset::new(y, x, z, w)?.with_u(u)
}

/// SplitMix64 finalizer over the combined key; gives independent,
/// reproducible substream seeds.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    let mut h = master;
    for &p in parts {
        h = h
            .wrapping_add(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(p.wrapping_mul(0xD6E8_FEB8_6659_FD93));
        h = (h ^ (h >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h ^= h >> 31;
    }
    h
}

/// How one curve estimate scores against the truth on the central grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveScore {
    pub rmse: f64,
    /// Per level: fraction of central grid points inside the band.
    pub coverage: Vec<(f64, f64)>,
    /// Per level, per grid point: band contains the truth.
    pub covers: Vec<Vec<bool>>,
}

/// Scores `median`/`bands` against `truth` over grid indices in `central`.
pub fn score_curve(truth: &[f64], median: &[f64], bands: &Bands, central: &[usize]) -> CurveScore {
    let sq: f64 = central.iter().map(|&j| (median[j] - truth[j]).powi(2)).sum();
    let rmse = (sq / central.len().max(1) as f64).sqrt();
    let covers: Vec<Vec<bool>> = bands
        .intervals
        .iter()
        .map(|iv| {
            (0..truth.len())
                .map(|j| iv.lower[j] <= truth[j] && truth[j] <= iv.upper[j])
                .collect()
        })
        .collect();
    let coverage = bands
        .intervals
        .iter()
        .zip(&covers)
        .map(|(iv, c)| {
            let hit = central.iter().filter(|&&j| c[j]).count();
            (iv.level, hit as f64 / central.len().max(1) as f64)
        })
        .collect();
    CurveScore {
        rmse,
        coverage,
        covers,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub index: usize,
    pub data_seed: u64,
    pub chain_seed: u64,
    pub runtime_secs: f64,
    /// Fit error, if the replicate failed.
    pub error: Option<String>,
    pub score: Option<CurveScore>,
    pub identification_failures: usize,
}

/// Aggregate over replicates for one model on one scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub scenario: u8,
    pub model: OutcomeModel,
    pub n: usize,
    pub replicates: usize,
    pub grid: Vec<f64>,
    pub truth: Vec<f64>,
    /// Exposure range [10th, 90th percentile] of the pooled simulated x.
    pub central_range: (f64, f64),
    pub central: Vec<usize>,
    /// Bands over the pooled draws of all successful replicates.
    pub pooled: Bands,
    pub pooled_score: CurveScore,
    /// Per level, per grid point: fraction of replicates whose own band covers.
    pub replicate_coverage: Vec<(f64, Vec<f64>)>,
    pub mean_replicate_rmse: f64,
    pub results: Vec<ReplicateResult>,
    pub runtime_secs: f64,
}

impl BenchmarkReport {
    pub fn failed(&self) -> usize {
        self.results.iter().filter(|r| r.error.is_some()).count()
    }

    /// Pooled-band coverage of the truth over the central grid at `level`.
    pub fn pooled_coverage(&self, level: f64) -> Option<f64> {
        self.pooled_score
            .coverage
            .iter()
            .find(|(l, _)| (l - level).abs() < 1e-12)
            .map(|&(_, c)| c)
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkSpec {
    pub scenario: u8,
    pub n: usize,
    pub replicates: usize,
    pub models: Vec<OutcomeModel>,
}

struct ReplicateOutput {
    x: Vec<f64>,
    per_model: Vec<std::result::Result<(RowMatrix, Bands, usize, f64), String>>,
    data_seed: u64,
    chain_seed: u64,
}

/// Simulates `replicates` datasets (hidden U masked for every model but the
/// U-adjusted one), fits each model on a shared grid, and scores the results.
///
/// Replicate r uses data seed `derive_seed(config.seed, [id, r, 0])` and
/// chain seed `derive_seed(config.seed, [id, r, 1])`.
pub fn run_replications(
    spec: &BenchmarkSpec,
    config: &ModelConfig,
) -> Result<Vec<BenchmarkReport>> {
    check_id(spec.scenario)?;
    if spec.replicates == 0 {
        return Err(Error::Config("replicates must be at least 1".into()));
    }
    if spec.models.is_empty() {
        return Err(Error::Config("no models to benchmark".into()));
    }
    config.validate_for(spec.n)?;
    let started = Instant::now();
    let id = spec.scenario;
    let grid = match &config.grid.explicit {
        Some(g) => g.clone(),
        None => stats::linspace(
            exposure_quantile(id, config.grid.lower_quantile.max(1e-6)),
            exposure_quantile(id, config.grid.upper_quantile.min(1.0 - 1e-6)),
            config.grid.points,
        ),
    };
    let truth: Vec<f64> = grid.iter().map(|&x| true_cerf(id, x)).collect();

    let outputs: Vec<ReplicateOutput> = (0..spec.replicates)
        .into_par_iter()
        .map(|r| {
            let data_seed = derive_seed(config.seed, &[id as u64, r as u64, 0]);
            let chain_seed = derive_seed(config.seed, &[id as u64, r as u64, 1]);
            let per_model = match simulate(&Scenario::new(id, spec.n, data_seed)?) {
                Ok(full) => spec
                    .models
                    .iter()
                    .map(|&m| {
                        let data = if m == OutcomeModel::UAdjusted {
                            full.clone()
                        } else {
                            full.without_u()
                        };
                        let mut cfg = config.clone();
                        cfg.seed = chain_seed;
                        cfg.grid.explicit = Some(grid.clone());
                        fit(&data, m, &cfg, 1)
                            .map(|f| {
                                (
                                    f.estimate.draws,
                                    f.estimate.bands,
                                    f.estimate.identification_failures,
                                    f.summary.runtime_secs,
                                )
                            })
                            .map_err(|e| e.to_string())
                    })
                    .collect(),
                Err(e) => vec![Err(e.to_string()); spec.models.len()],
            };
            let x = simulate(&Scenario::new(id, spec.n, data_seed)?)?.x;
            Ok(ReplicateOutput {
                x,
                per_model,
                data_seed,
                chain_seed,
            })
        })
        .collect::<Result<_>>()?;

    let pooled_x: Vec<f64> = outputs.iter().flat_map(|o| o.x.iter().copied()).collect();
    let sx = stats::sorted(&pooled_x);
    let central_range = (stats::quantile_sorted(&sx, 0.1), stats::quantile_sorted(&sx, 0.9));
    let central: Vec<usize> = grid
        .iter()
        .enumerate()
        .filter(|(_, &x)| central_range.0 <= x && x <= central_range.1)
        .map(|(j, _)| j)
        .collect();
    let levels = config.sorted_levels();
    let runtime_secs = started.elapsed().as_secs_f64();

    let mut reports = Vec::with_capacity(spec.models.len());
    for (mi, &model) in spec.models.iter().enumerate() {
        let mut results = Vec::with_capacity(spec.replicates);
        let mut pooled_rows: Vec<Vec<f64>> = Vec::new();
        let mut cover_counts = vec![vec![0usize; grid.len()]; levels.len()];
        let mut ok = 0usize;
        let mut rmse_sum = 0.0;
        for (r, o) in outputs.iter().enumerate() {
            match &o.per_model[mi] {
                Ok((draws, bands, failures, secs)) => {
                    let score = score_curve(&truth, &bands.median, bands, &central);
                    for (li, c) in score.covers.iter().enumerate() {
                        for (j, &hit) in c.iter().enumerate() {
                            cover_counts[li][j] += hit as usize;
                        }
                    }
                    pooled_rows.extend(draws.iter_rows().map(<[f64]>::to_vec));
                    ok += 1;
                    rmse_sum += score.rmse;
                    results.push(ReplicateResult {
                        index: r,
                        data_seed: o.data_seed,
                        chain_seed: o.chain_seed,
                        runtime_secs: *secs,
                        error: None,
                        score: Some(score),
                        identification_failures: *failures,
                    });
                }
                Err(msg) => results.push(ReplicateResult {
                    index: r,
                    data_seed: o.data_seed,
                    chain_seed: o.chain_seed,
                    runtime_secs: 0.0,
                    error: Some(msg.clone()),
                    score: None,
                    identification_failures: 0,
                }),
            }
        }
        if ok == 0 {
            let msg = results[0].error.clone().unwrap_or_default();
            return Err(Error::AtReplicate {
                replicate: 0,
                source: Box::new(Error::Numerical(format!(
                    "every replicate of {} failed; first: {msg}",
                    model.label()
                ))),
            });
        }
        let pooled = summarize(&RowMatrix::from_rows(&pooled_rows), &levels)?;
        let pooled_score = score_curve(&truth, &pooled.median, &pooled, &central);
        let replicate_coverage = levels
            .iter()
            .zip(&cover_counts)
            .map(|(&l, c)| (l, c.iter().map(|&h| h as f64 / ok as f64).collect()))
            .collect();
        reports.push(BenchmarkReport {
            scenario: id,
            model,
            n: spec.n,
            replicates: spec.replicates,
            grid: grid.clone(),
            truth: truth.clone(),
            central_range,
            central: central.clone(),
            pooled,
            pooled_score,
            replicate_coverage,
            mean_replicate_rmse: rmse_sum / ok as f64,
            results,
            runtime_secs,
        });
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn true_cerf_hand_values() {
        assert_eq!(true_cerf(1, 5.5), 14.0);
        assert!((true_cerf(1, 5.5 - 1e-12) - 14.0).abs() < 1e-10);
        assert_eq!(true_cerf(2, 6.0), -6.0);
        assert_eq!(true_cerf(3, 5.0), 3.2);
        assert!((true_cerf(4, 6.0) - 0.403_332_819_157_146_8).abs() < 1e-12);
    }

    #[test]
    fn sign_convention() {
        assert_eq!(sign(0.0), 1.0);
        assert_eq!(sign(-1e-300), -1.0);
    }

    #[test]
    fn simulate_is_deterministic() {
        let s = Scenario::new(3, 50, 11).unwrap();
        assert_eq!(simulate(&s).unwrap(), simulate(&s).unwrap());
        let other = Scenario::new(3, 50, 12).unwrap();
        assert_ne!(simulate(&s).unwrap(), simulate(&other).unwrap());
    }

    #[test]
    fn invalid_scenario() {
        assert!(Scenario::new(5, 10, 0).is_err());
        assert!(Scenario::new(0, 10, 0).is_err());
        assert!(Scenario::new(1, 0, 0).is_err());
    }

    #[test]
    fn oracle_scores_itself_perfectly() {
        let grid = stats::linspace(3.0, 8.0, 20);
        let truth: Vec<f64> = grid.iter().map(|&x| true_cerf(2, x)).collect();
        let bands = Bands {
            median: truth.clone(),
            intervals: vec![crate::identification::Interval {
                level: 0.95,
                lower: truth.clone(),
                upper: truth.clone(),
            }],
        };
        let central: Vec<usize> = (0..20).collect();
        let s = score_curve(&truth, &truth, &bands, &central);
        assert_eq!(s.rmse, 0.0);
        assert_eq!(s.coverage, vec![(0.95, 1.0)]);
    }

    #[test]
    fn derived_seeds_differ() {
        let a = derive_seed(7, &[2, 0, 0]);
        let b = derive_seed(7, &[2, 1, 0]);
        let c = derive_seed(7, &[2, 0, 1]);
        assert!(a != b && b != c && a != c);
        assert_eq!(a, derive_seed(7, &[2, 0, 0]));
    }

    #[test]
    fn exposure_marginal_quantiles() {
        assert!((exposure_quantile(2, 0.5) - 5.5).abs() < 1e-12);
        let q = exposure_quantile(4, 0.975);
        assert!((q - (6.5 + 3.4f64.sqrt() * 1.959_963_984_540_054)).abs() < 1e-9);
    }
}
