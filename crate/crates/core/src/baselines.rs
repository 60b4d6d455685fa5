//! Comparison estimators: the unadjusted and U-adjusted mixture fits, and the
//! closed-form linear negative-control estimator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::conjugate::ols;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::fit::{fit, Fit};
use crate::identification::component_effect;
use crate::model::OutcomeModel;
use crate::simulation::derive_seed;
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    BnpNc,
    Yx,
    Yxu,
    LinearNc,
}

impl Mode {
    pub fn parse(s: &str) -> Result<Mode> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "bnp-nc" => Ok(Mode::BnpNc),
            "yx" => Ok(Mode::Yx),
            "yxu" => Ok(Mode::Yxu),
            "linear-nc" => Ok(Mode::LinearNc),
            _ => Err(Error::Config(format!(
                "unknown mode '{s}' (expected bnp-nc, yx, yxu or linear-nc)"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::BnpNc => "bnp-nc",
            Mode::Yx => "yx",
            Mode::Yxu => "yxu",
            Mode::LinearNc => "linear-nc",
        }
    }

    /// Mixture model behind the mode; None for the closed-form estimator.
    pub fn outcome_model(self) -> Option<OutcomeModel> {
        match self {
            Mode::BnpNc => Some(OutcomeModel::NegativeControl),
            Mode::Yx => Some(OutcomeModel::Unadjusted),
            Mode::Yxu => Some(OutcomeModel::UAdjusted),
            Mode::LinearNc => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitSpec {
    pub mode: Mode,
    pub config: ModelConfig,
}

impl FitSpec {
    pub fn check(&self, data: &Dataset) -> Result<()> {
        self.config.validate()?;
        if self.mode == Mode::Yxu && data.u_hidden.is_none() {
            return Err(Error::Config(
                "mode yxu needs the confounder column u, which is missing or masked".into(),
            ));
        }
        Ok(())
    }
}

/// Mixture regressions on [1, x]; the curve uses no negative-control correction.
pub fn fit_yx(data: &Dataset, config: &ModelConfig, chains: usize) -> Result<Fit> {
    fit(data, OutcomeModel::Unadjusted, config, chains)
}

/// Mixture regressions on [1, x, u]; U is marginalized at its sample mean.
pub fn fit_yxu(data: &Dataset, config: &ModelConfig, chains: usize) -> Result<Fit> {
    fit(data, OutcomeModel::UAdjusted, config, chains)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearEffect {
    pub estimate: f64,
    /// [1, x, z] coefficients of the outcome regression.
    pub theta_y: Vec<f64>,
    /// [1, x, z] coefficients of the negative-control outcome regression.
    pub theta_w: Vec<f64>,
    pub level: f64,
    pub lower: f64,
    pub upper: f64,
    pub bootstrap: usize,
    /// Resamples discarded because |θ_WZ| fell below tolerance.
    pub bootstrap_failures: usize,
}

fn effect_from(y: &[f64], x: &[f64], z: &[f64], w: &[f64], tol: f64) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let theta_y = ols(&[x, z], y)?;
    let theta_w = ols(&[x, z], w)?;
    let b = component_effect(&theta_y, &theta_w, tol)?;
    Ok((b, theta_y, theta_w))
}

/// Closed-form effect from OLS of y and w on [1, x, z], with a percentile
/// bootstrap interval at `level`.
pub fn linear_nc(data: &Dataset, bootstrap: usize, level: f64, seed: u64, tol: f64) -> Result<LinearEffect> {
    data.validate()?;
    if !(0.0 < level && level < 1.0) {
        return Err(Error::Config(format!("level must lie in (0, 1), got {level}")));
    }
    let (estimate, theta_y, theta_w) = effect_from(&data.y, &data.x, &data.z, &data.w, tol)?;
    let n = data.n();
    let draws: Vec<Option<f64>> = (0..bootstrap as u64)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[b]));
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let pick = |v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
            effect_from(&pick(&data.y), &pick(&data.x), &pick(&data.z), &pick(&data.w), tol)
                .ok()
                .map(|r| r.0)
        })
        .collect();
    let ok: Vec<f64> = draws.iter().flatten().copied().collect();
    let failures = bootstrap - ok.len();
    let (lower, upper) = if ok.len() >= 2 {
        let s = stats::sorted(&ok);
        let a = (1.0 - level) / 2.0;
        (stats::quantile_sorted(&s, a), stats::quantile_sorted(&s, 1.0 - a))
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(LinearEffect {
        estimate,
        theta_y,
        theta_w,
        level,
        lower,
        upper,
        bootstrap,
        bootstrap_failures: failures,
    })
}

impl LinearEffect {
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "estimate,level,lower,upper,bootstrap,bootstrap_failures")?;
        writeln!(
            out,
            "{},{},{},{},{},{}",
            self.estimate, self.level, self.lower, self.upper, self.bootstrap, self.bootstrap_failures
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulation::simulate_linear;

    #[test]
    fn modes_round_trip() {
        for m in [Mode::BnpNc, Mode::Yx, Mode::Yxu, Mode::LinearNc] {
            assert_eq!(Mode::parse(m.as_str()).unwrap(), m);
        }
        assert_eq!(Mode::parse("LINEAR_NC").unwrap(), Mode::LinearNc);
        assert!(Mode::parse("foo").is_err());
    }

    #[test]
    fn linear_generator_recovers_two() {
        let d = simulate_linear(5000, 3).unwrap();
        let e = linear_nc(&d, 200, 0.95, 1, 1e-6).unwrap();
        assert!((e.estimate - 2.0).abs() < 0.05, "{}", e.estimate);
        assert!(e.lower <= e.estimate && e.estimate <= e.upper);
        assert_eq!(e.bootstrap_failures, 0);
    }

    #[test]
    fn matches_component_effect_bitwise() {
        let d = simulate_linear(500, 9).unwrap();
        let e = linear_nc(&d, 0, 0.95, 1, 1e-6).unwrap();
        let ty = ols(&[&d.x, &d.z], &d.y).unwrap();
        let tw = ols(&[&d.x, &d.z], &d.w).unwrap();
        assert_eq!(e.estimate.to_bits(), component_effect(&ty, &tw, 1e-6).unwrap().to_bits());
    }

    #[test]
    fn unrelated_w_fails_tolerance() {
        let d = simulate_linear(200, 4).unwrap();
        // w exactly linear in x alone: θ_WZ = 0 up to rounding
        let w: Vec<f64> = d.x.iter().map(|x| 1.0 + 0.5 * x).collect();
        let d = Dataset::new(d.y.clone(), d.x.clone(), d.z.clone(), w).unwrap();
        let err = linear_nc(&d, 0, 0.95, 1, 1e-6).unwrap_err();
        assert!(matches!(err, Error::Identification { .. }), "{err}");
    }

    #[test]
    fn yxu_requires_u() {
        let d = simulate_linear(50, 1).unwrap().without_u();
        let spec = FitSpec {
            mode: Mode::Yxu,
            config: ModelConfig::default(),
        };
        assert!(matches!(spec.check(&d), Err(Error::Config(_))));
    }
}
