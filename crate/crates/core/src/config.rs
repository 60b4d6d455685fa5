//! Model configuration and its flat `key = value` text form.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Normal prior on a coefficient vector of (as yet unknown) length p.
///
/// `mean` of length 1 is broadcast. `cov` of length 1 is a multiple of the
/// identity, length p is a diagonal, and length p² is a full row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefPrior {
    pub mean: Vec<f64>,
    pub cov: Vec<f64>,
}

impl CoefPrior {
    pub fn isotropic(mean: f64, var: f64) -> Self {
        CoefPrior {
            mean: vec![mean],
            cov: vec![var],
        }
    }

    /// Expands to dimension `p`, checking symmetry and positive definiteness.
    pub fn resolve(&self, p: usize) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let mean = match self.mean.len() {
            1 => DVector::from_element(p, self.mean[0]),
            l if l == p => DVector::from_column_slice(&self.mean),
            l => {
                return Err(Error::Config(format!(
                    "prior mean has {l} entries; expected 1 or {p}"
                )))
            }
        };
        let cov = match self.cov.len() {
            1 => DMatrix::from_diagonal_element(p, p, self.cov[0]),
            l if l == p => DMatrix::from_diagonal(&DVector::from_column_slice(&self.cov)),
            l if l == p * p => DMatrix::from_row_slice(p, p, &self.cov),
            l => {
                return Err(Error::Config(format!(
                    "prior covariance has {l} entries; expected 1, {p} or {}",
                    p * p
                )))
            }
        };
        if (&cov - cov.transpose()).abs().max() > 1e-12 * cov.abs().max() {
            return Err(Error::Config("prior covariance is not symmetric".into()));
        }
        if cov.clone().cholesky().is_none() {
            return Err(Error::Config(
                "prior covariance is not positive definite".into(),
            ));
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("prior mean must be finite".into()));
        }
        Ok((mean, cov))
    }
}

/// Normal–inverse-gamma prior: θ | σ² ~ N(m0, σ² V0), σ² ~ IG(a0, b0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NigPrior {
    pub coef: CoefPrior,
    pub shape: f64,
    pub scale: f64,
}

impl Default for NigPrior {
    fn default() -> Self {
        NigPrior {
            coef: CoefPrior::isotropic(0.0, 100.0),
            shape: 1.0,
            scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    /// Component outcome regressions.
    pub y: NigPrior,
    /// Negative-control outcome regression.
    pub w: NigPrior,
    /// Prior mean of every weight-model coefficient; prior variance is 1.
    pub mu_eta: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec {
            y: NigPrior::default(),
            w: NigPrior::default(),
            mu_eta: 0.0,
        }
    }
}

/// Where the exposure-response curve is evaluated (original units).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub points: usize,
    pub lower_quantile: f64,
    pub upper_quantile: f64,
    /// Overrides the quantile rule when set.
    pub explicit: Option<Vec<f64>>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            points: 100,
            lower_quantile: 0.01,
            upper_quantile: 0.99,
            explicit: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Truncation level K.
    pub k: usize,
    /// Number of exposure segments in the weight model.
    pub n_knots: usize,
    pub iterations: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub seed: u64,
    pub standardize: bool,
    pub priors: PriorSpec,
    pub grid: GridSpec,
    /// Central credible levels reported for the curve.
    pub levels: Vec<f64>,
    /// Minimum |theta_WZ| on the analysis scale.
    pub tol_wz: f64,
    /// Abort when more than this fraction of draws fail identification.
    pub max_identification_failure: f64,
    /// Bootstrap resamples for the closed-form linear estimator.
    pub bootstrap: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            k: 20,
            n_knots: 4,
            iterations: 4000,
            burn_in: 2000,
            thinning: 2,
            seed: 1,
            standardize: true,
            priors: PriorSpec::default(),
            grid: GridSpec::default(),
            levels: vec![0.5, 0.8, 0.9, 0.95],
            tol_wz: 1e-6,
            max_identification_failure: 0.01,
            bootstrap: 1000,
        }
    }
}

impl ModelConfig {
    /// Number of states a chain keeps.
    pub fn retained(&self) -> usize {
        (self.iterations - self.burn_in) / self.thinning
    }

    /// Checks data-independent invariants.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.k < 1 {
            return bad("K must be at least 1");
        }
        if self.n_knots < 1 {
            return bad("n_knots must be at least 1");
        }
        if self.thinning < 1 {
            return bad("thinning must be at least 1");
        }
        if self.burn_in >= self.iterations {
            return bad("burn_in must be smaller than iterations");
        }
        for (name, p) in [("y", &self.priors.y), ("w", &self.priors.w)] {
            if !(p.shape > 0.0 && p.scale > 0.0) {
                return Err(Error::Config(format!(
                    "inverse-gamma hyperparameters a0_{name}, b0_{name} must be positive"
                )));
            }
        }
        if !self.priors.mu_eta.is_finite() {
            return bad("mu_eta must be finite");
        }
        let g = &self.grid;
        match &g.explicit {
            Some(pts) => {
                if pts.is_empty() || pts.windows(2).any(|w| !(w[0] < w[1])) {
                    return bad("explicit grid must be non-empty and strictly ascending");
                }
            }
            None => {
                if g.points < 2 {
                    return bad("grid_points must be at least 2");
                }
                if !(0.0 <= g.lower_quantile
                    && g.lower_quantile < g.upper_quantile
                    && g.upper_quantile <= 1.0)
                {
                    return bad("grid quantiles must satisfy 0 <= lower < upper <= 1");
                }
            }
        }
        if self.levels.is_empty() || self.levels.iter().any(|&l| !(l > 0.0 && l < 1.0)) {
            return bad("credible levels must lie in (0, 1)");
        }
        if !(self.tol_wz > 0.0) {
            return bad("tol_wz must be positive");
        }
        if !(0.0..=1.0).contains(&self.max_identification_failure) {
            return bad("max_identification_failure must lie in [0, 1]");
        }
        Ok(())
    }

    /// Checks invariants that depend on the sample size.
    pub fn validate_for(&self, n: usize) -> Result<()> {
        self.validate()?;
        if self.n_knots > n / 10 {
            return Err(Error::Config(format!(
                "n_knots = {} exceeds n/10 = {} (every segment must contain data)",
                self.n_knots,
                n / 10
            )));
        }
        Ok(())
    }

    /// Sorted, de-duplicated levels.
    pub fn sorted_levels(&self) -> Vec<f64> {
        let mut l = self.levels.clone();
        l.sort_by(f64::total_cmp);
        l.dedup();
        l
    }

    /// Applies `key = value` settings on top of `self`.
    ///
    /// Blank lines, `#`/`;` comments and `[section]` headers are ignored.
    pub fn apply_ini(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split(['#', ';']).next().unwrap_or("").trim();
            if line.is_empty() || (line.starts_with('[') && line.ends_with(']')) {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            self.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    pub fn from_ini(text: &str) -> Result<Self> {
        let mut c = ModelConfig::default();
        c.apply_ini(text)?;
        Ok(c)
    }

    /// Sets one field by its text-form key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Config(format!("invalid value '{v}' for {key}")))
        }
        fn list(key: &str, v: &str) -> Result<Vec<f64>> {
            v.split(',').map(|s| num(key, s.trim())).collect()
        }
        match key {
            "K" | "k" => self.k = num(key, value)?,
            "n_knots" => self.n_knots = num(key, value)?,
            "iterations" => self.iterations = num(key, value)?,
            "burn_in" => self.burn_in = num(key, value)?,
            "thinning" => self.thinning = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "standardize" => {
                self.standardize = match value {
                    "true" | "yes" | "1" => true,
                    "false" | "no" | "0" => false,
                    _ => return Err(Error::Config(format!("invalid boolean '{value}'"))),
                }
            }
            "m0_y" => self.priors.y.coef.mean = list(key, value)?,
            "V0_y" => self.priors.y.coef.cov = list(key, value)?,
            "a0_y" => self.priors.y.shape = num(key, value)?,
            "b0_y" => self.priors.y.scale = num(key, value)?,
            "m0_w" => self.priors.w.coef.mean = list(key, value)?,
            "V0_w" => self.priors.w.coef.cov = list(key, value)?,
            "a0_w" => self.priors.w.shape = num(key, value)?,
            "b0_w" => self.priors.w.scale = num(key, value)?,
            "mu_eta" => self.priors.mu_eta = num(key, value)?,
            "grid_points" => self.grid.points = num(key, value)?,
            "grid_lower_quantile" => self.grid.lower_quantile = num(key, value)?,
            "grid_upper_quantile" => self.grid.upper_quantile = num(key, value)?,
            "grid" => {
                self.grid.explicit = if value.is_empty() || value == "auto" {
                    None
                } else {
                    Some(list(key, value)?)
                }
            }
            "levels" => self.levels = list(key, value)?,
            "tol_wz" => self.tol_wz = num(key, value)?,
            "max_identification_failure" => self.max_identification_failure = num(key, value)?,
            "bootstrap" => self.bootstrap = num(key, value)?,
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Text form accepted by [`ModelConfig::from_ini`].
    pub fn to_ini(&self) -> String {
        fn join(v: &[f64]) -> String {
            v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(",")
        }
        let mut s = String::new();
        let p = &self.priors;
        let _ = writeln!(s, "# mixture and sampler");
        let _ = writeln!(s, "K = {}", self.k);
        let _ = writeln!(s, "n_knots = {}", self.n_knots);
        let _ = writeln!(s, "iterations = {}", self.iterations);
        let _ = writeln!(s, "burn_in = {}", self.burn_in);
        let _ = writeln!(s, "thinning = {}", self.thinning);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "standardize = {}", self.standardize);
        let _ = writeln!(s, "# priors");
        let _ = writeln!(s, "m0_y = {}", join(&p.y.coef.mean));
        let _ = writeln!(s, "V0_y = {}", join(&p.y.coef.cov));
        let _ = writeln!(s, "a0_y = {}", p.y.shape);
        let _ = writeln!(s, "b0_y = {}", p.y.scale);
        let _ = writeln!(s, "m0_w = {}", join(&p.w.coef.mean));
        let _ = writeln!(s, "V0_w = {}", join(&p.w.coef.cov));
        let _ = writeln!(s, "a0_w = {}", p.w.shape);
        let _ = writeln!(s, "b0_w = {}", p.w.scale);
        let _ = writeln!(s, "mu_eta = {}", p.mu_eta);
        let _ = writeln!(s, "# curve output");
        let _ = writeln!(s, "grid_points = {}", self.grid.points);
        let _ = writeln!(s, "grid_lower_quantile = {}", self.grid.lower_quantile);
        let _ = writeln!(s, "grid_upper_quantile = {}", self.grid.upper_quantile);
        let _ = writeln!(
            s,
            "grid = {}",
            self.grid.explicit.as_deref().map(join).unwrap_or_else(|| "auto".into())
        );
        let _ = writeln!(s, "levels = {}", join(&self.levels));
        let _ = writeln!(s, "tol_wz = {}", self.tol_wz);
        let _ = writeln!(s, "max_identification_failure = {}", self.max_identification_failure);
        let _ = writeln!(s, "bootstrap = {}", self.bootstrap);
        s
    }
}
