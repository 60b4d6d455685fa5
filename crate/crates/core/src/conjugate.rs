//! Conjugate Gaussian regression updates and least squares.
//!
//! Everything here works from sufficient statistics (XᵀX, Xᵀy, yᵀy, n) so the
//! sampler can accumulate them in one pass over the rows it owns.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::config::NigPrior;
use crate::error::{Error, Result};

/// Running XᵀX, Xᵀy, yᵀy for a design of width p.
#[derive(Debug, Clone)]
pub struct SuffStats {
    pub xtx: DMatrix<f64>,
    pub xty: DVector<f64>,
    pub yty: f64,
    pub n: usize,
}

impl SuffStats {
    pub fn new(p: usize) -> Self {
        SuffStats {
            xtx: DMatrix::zeros(p, p),
            xty: DVector::zeros(p),
            yty: 0.0,
            n: 0,
        }
    }

    pub fn clear(&mut self) {
        self.xtx.fill(0.0);
        self.xty.fill(0.0);
        self.yty = 0.0;
        self.n = 0;
    }

    /// Adds one row; only the upper triangle of XᵀX is touched until
    /// [`SuffStats::symmetrize`] is called.
    #[inline]
    pub fn push(&mut self, row: &[f64], y: f64) {
        let p = row.len();
        for a in 0..p {
            let ra = row[a];
            self.xty[a] += ra * y;
            for b in a..p {
                self.xtx[(a, b)] += ra * row[b];
            }
        }
        self.yty += y * y;
        self.n += 1;
    }

    pub fn symmetrize(&mut self) {
        let p = self.xty.len();
        for a in 0..p {
            for b in (a + 1)..p {
                self.xtx[(b, a)] = self.xtx[(a, b)];
            }
        }
    }

    pub fn from_rows<'a>(rows: impl IntoIterator<Item = (&'a [f64], f64)>, p: usize) -> Self {
        let mut s = SuffStats::new(p);
        for (r, y) in rows {
            s.push(r, y);
        }
        s.symmetrize();
        s
    }
}

/// A normal–inverse-gamma prior resolved to a fixed dimension, with the
/// pieces every update reuses precomputed.
#[derive(Debug, Clone)]
pub struct ResolvedNig {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub precision: DMatrix<f64>,
    precision_mean: DVector<f64>,
    mean_quad: f64,
    pub shape: f64,
    pub scale: f64,
}

impl ResolvedNig {
    pub fn new(prior: &NigPrior, p: usize) -> Result<Self> {
        let (mean, cov) = prior.coef.resolve(p)?;
        let precision = cov
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Config("prior covariance is not positive definite".into()))?
            .inverse();
        let precision_mean = &precision * &mean;
        let mean_quad = mean.dot(&precision_mean);
        Ok(ResolvedNig {
            mean,
            cov,
            precision,
            precision_mean,
            mean_quad,
            shape: prior.shape,
            scale: prior.scale,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Full conditional of (θ, σ²) given the rows summarized in `s`.
    pub fn posterior(&self, s: &SuffStats) -> Result<NigPosterior> {
        let post_prec = &self.precision + &s.xtx;
        let chol = Cholesky::new(post_prec.clone()).ok_or_else(|| {
            Error::Numerical("posterior precision is not positive definite".into())
        })?;
        let mean = chol.solve(&(&self.precision_mean + &s.xty));
        let quad = mean.dot(&(&post_prec * &mean));
        let resid = (s.yty + self.mean_quad - quad).max(0.0);
        Ok(NigPosterior {
            mean,
            chol,
            shape: self.shape + 0.5 * s.n as f64,
            scale: self.scale + 0.5 * resid,
        })
    }
}

#[derive(Debug, Clone)]
pub struct NigPosterior {
    pub mean: DVector<f64>,
    /// Cholesky factor of the posterior precision scaled by σ²
    /// (i.e. θ | σ² ~ N(mean, σ² · (LLᵀ)⁻¹)).
    pub chol: Cholesky<f64, Dyn>,
    pub shape: f64,
    pub scale: f64,
}

impl NigPosterior {
    /// σ² ~ IG(shape, scale), then θ | σ².
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(DVector<f64>, f64)> {
        let var = draw_inverse_gamma(self.shape, self.scale, rng)?;
        let theta = self.draw_theta(var, rng);
        Ok((theta, var))
    }

    /// θ | σ² for a given variance.
    pub fn draw_theta<R: Rng + ?Sized>(&self, var: f64, rng: &mut R) -> DVector<f64> {
        let eps = standard_normal_vector(self.mean.len(), rng);
        let dev = self
            .chol
            .l_dirty()
            .tr_solve_lower_triangular(&eps)
            .expect("triangular factor is nonsingular");
        &self.mean + dev * var.sqrt()
    }

    /// Marginal covariance of θ given σ².
    pub fn theta_cov(&self, var: f64) -> DMatrix<f64> {
        self.chol.inverse() * var
    }
}

pub fn draw_inverse_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> Result<f64> {
    let g = Gamma::new(shape, 1.0 / scale)
        .map_err(|e| Error::Numerical(format!("inverse-gamma({shape}, {scale}): {e}")))?;
    let v = 1.0 / g.sample(rng);
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::Numerical(format!(
            "inverse-gamma({shape}, {scale}) draw is {v}"
        )))
    }
}

pub fn standard_normal_vector<R: Rng + ?Sized>(p: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(p, |_, _| rng.sample(StandardNormal))
}

/// Regression with unit observation variance and prior N(prior_mean, I):
/// returns the posterior mean and Cholesky factor of the posterior precision.
pub fn unit_variance_posterior(
    prior_mean: &DVector<f64>,
    dtd: &DMatrix<f64>,
    dtq: &DVector<f64>,
) -> Result<(DVector<f64>, Cholesky<f64, Dyn>)> {
    let p = prior_mean.len();
    let prec = DMatrix::identity(p, p) + dtd;
    let chol = Cholesky::new(prec)
        .ok_or_else(|| Error::Numerical("weight-model precision is not positive definite".into()))?;
    let mean = chol.solve(&(prior_mean + dtq));
    Ok((mean, chol))
}

/// Draws from N(mean, (LLᵀ)⁻¹).
pub fn draw_from_precision<R: Rng + ?Sized>(
    mean: &DVector<f64>,
    chol: &Cholesky<f64, Dyn>,
    rng: &mut R,
) -> DVector<f64> {
    let eps = standard_normal_vector(mean.len(), rng);
    mean + chol
        .l_dirty()
        .tr_solve_lower_triangular(&eps)
        .expect("triangular factor is nonsingular")
}

/// Ordinary least squares of `y` on an intercept plus `predictors`.
///
/// Predictors are centered before solving, so returned coefficients are
/// `[intercept, slope_1, …]` on the original scale.
pub fn ols(predictors: &[&[f64]], y: &[f64]) -> Result<Vec<f64>> {
    let n = y.len();
    let p = predictors.len();
    if n <= p {
        return Err(Error::Validation(format!(
            "least squares needs more than {p} rows, got {n}"
        )));
    }
    let nf = n as f64;
    let means: Vec<f64> = predictors.iter().map(|c| c.iter().sum::<f64>() / nf).collect();
    let ybar = y.iter().sum::<f64>() / nf;
    let mut xtx = DMatrix::<f64>::zeros(p, p);
    let mut xty = DVector::<f64>::zeros(p);
    let mut row = vec![0.0; p];
    for i in 0..n {
        for (j, c) in predictors.iter().enumerate() {
            row[j] = c[i] - means[j];
        }
        let yi = y[i] - ybar;
        for a in 0..p {
            xty[a] += row[a] * yi;
            for b in a..p {
                xtx[(a, b)] += row[a] * row[b];
            }
        }
    }
    for a in 0..p {
        for b in (a + 1)..p {
            xtx[(b, a)] = xtx[(a, b)];
        }
    }
    let slopes = Cholesky::new(xtx)
        .ok_or_else(|| Error::Numerical("least-squares design is rank deficient".into()))?
        .solve(&xty);
    let intercept = ybar - slopes.iter().zip(&means).map(|(b, m)| b * m).sum::<f64>();
    let mut coef = Vec::with_capacity(p + 1);
    coef.push(intercept);
    coef.extend(slopes.iter());
    Ok(coef)
}
