//! From posterior draws to the causal exposure-response curve.
//!
//! Within component k the negative-control correction gives the causal slope
//!
//! ```text
//! β_{X,k} = θ_{X,k} − θ_{Z,k} · θ_{WX} / θ_{WZ}
//! ```
//!
//! and the intercept `θ_{0,k} + θ_{Z,k} E(Z) + θ_{Z,k} (θ_{WX}/θ_{WZ}) E(X)`.
//! The curve is `E[Y(x)] = Σ_k ω_k(x) (β_{X,k} x + intercept_k)`.

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::Affine;
use crate::error::{Error, Result};
use crate::gibbs::Snapshot;
use crate::matrix::RowMatrix;
use crate::model::{OutcomeModel, X_COL};
use crate::psbp::{self, KnotGrid};
use crate::stats;

/// Sample means of the regressors on the analysis scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentCache {
    pub mean_x: f64,
    /// Mean of z (negative-control model) or u (U-adjusted model).
    pub mean_proxy: f64,
    pub covariate_means: Vec<f64>,
}

impl MomentCache {
    /// From design column means `[1, x, proxy?, covariates…]`.
    pub fn from_design_means(means: &[f64], has_proxy: bool) -> Self {
        let cov_start = if has_proxy { 3 } else { 2 };
        MomentCache {
            mean_x: means[X_COL],
            mean_proxy: if has_proxy { means[2] } else { 0.0 },
            covariate_means: means[cov_start..].to_vec(),
        }
    }
}

/// Ratio θ_WX / θ_WZ, guarded by `tol`.
#[inline]
fn w_ratio(theta_w: &[f64], tol: f64) -> Result<f64> {
    let theta_wz = theta_w[2];
    if !(theta_wz.abs() > tol) {
        return Err(Error::Identification { theta_wz, tol });
    }
    Ok(theta_w[1] / theta_wz)
}

/// β_{X,k} = θ_{X,k} − θ_{Z,k} (θ_{WX} / θ_{WZ}).
///
/// `theta_y_k` is `[θ₀, θ_X, θ_Z, …]`, `theta_w` is `[θ_W0, θ_WX, θ_WZ, …]`.
#[inline]
pub fn component_effect(theta_y_k: &[f64], theta_w: &[f64], tol: f64) -> Result<f64> {
    let ratio = w_ratio(theta_w, tol)?;
    Ok(theta_y_k[1] - theta_y_k[2] * ratio)
}

/// θ_{0,k} + θ_{Z,k} E(Z) + θ_{Z,k} (θ_{WX}/θ_{WZ}) E(X), plus θ_L·E(L) for
/// any covariates.
#[inline]
pub fn component_intercept(
    theta_y_k: &[f64],
    theta_w: &[f64],
    moments: &MomentCache,
    tol: f64,
) -> Result<f64> {
    let ratio = w_ratio(theta_w, tol)?;
    let theta_z = theta_y_k[2];
    let mut v = theta_y_k[0] + theta_z * moments.mean_proxy + theta_z * ratio * moments.mean_x;
    for (b, m) in theta_y_k[3..].iter().zip(&moments.covariate_means) {
        v += b * m;
    }
    Ok(v)
}

/// Evaluates one draw's curve on a grid.
#[derive(Debug, Clone)]
pub struct CurveEvaluator {
    pub model: OutcomeModel,
    pub knots: KnotGrid,
    pub moments: MomentCache,
    /// Grid on the analysis scale.
    pub grid: Vec<f64>,
    /// Analysis → original scale for the outcome.
    pub y_scale: Affine,
    pub tol: f64,
}

impl CurveEvaluator {
    /// E[Y(x)] at each grid point, on the original outcome scale.
    pub fn cerf_draw(&self, draw: &Snapshot) -> Result<Vec<f64>> {
        let mut out = cerf_draw(
            self.model,
            &draw.theta_y,
            draw.theta_w.as_deref(),
            &draw.eta,
            &self.grid,
            &self.knots,
            &self.moments,
            self.tol,
        )?;
        for v in &mut out {
            *v = self.y_scale.inverse(*v);
        }
        Ok(out)
    }
}

/// Curve of one parameter draw on the analysis scale.
#[allow(clippy::too_many_arguments)]
pub fn cerf_draw(
    model: OutcomeModel,
    theta_y: &RowMatrix,
    theta_w: Option<&[f64]>,
    eta: &RowMatrix,
    grid: &[f64],
    knots: &KnotGrid,
    moments: &MomentCache,
    tol: f64,
) -> Result<Vec<f64>> {
    let k = theta_y.rows();
    // Per-component (slope, intercept) in x.
    let mut lines = Vec::with_capacity(k);
    for c in 0..k {
        let row = theta_y.row(c);
        let line = match model {
            OutcomeModel::NegativeControl => {
                let tw = theta_w.ok_or_else(|| {
                    Error::Config("negative-control curve needs the W regression".into())
                })?;
                (
                    component_effect(row, tw, tol)?,
                    component_intercept(row, tw, moments, tol)?,
                )
            }
            OutcomeModel::Unadjusted | OutcomeModel::UAdjusted => {
                let has_proxy = model == OutcomeModel::UAdjusted;
                let mut b = row[0];
                if has_proxy {
                    b += row[2] * moments.mean_proxy;
                }
                let start = if has_proxy { 3 } else { 2 };
                for (t, m) in row[start..].iter().zip(&moments.covariate_means) {
                    b += t * m;
                }
                (row[X_COL], b)
            }
        };
        lines.push(line);
    }
    Ok(grid
        .iter()
        .map(|&x| {
            let w = psbp::weights_at(x, eta, knots);
            w.0.iter()
                .zip(&lines)
                .map(|(wk, (slope, icpt))| wk * (slope * x + icpt))
                .sum()
        })
        .collect())
}

/// Pointwise median and central intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bands {
    pub median: Vec<f64>,
    /// Ascending levels with their (lower, upper) curves.
    pub intervals: Vec<Interval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub level: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bands {
    pub fn interval(&self, level: f64) -> Option<&Interval> {
        self.intervals.iter().find(|i| (i.level - level).abs() < 1e-12)
    }
}

/// Type-7 quantiles across draws (rows) at each grid point (column).
pub fn summarize(draws: &RowMatrix, levels: &[f64]) -> Result<Bands> {
    if draws.rows() < 2 {
        return Err(Error::Validation(format!(
            "need at least 2 draws to summarize, got {}",
            draws.rows()
        )));
    }
    let mut levels = levels.to_vec();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let g = draws.cols();
    let mut median = Vec::with_capacity(g);
    let mut intervals: Vec<Interval> = levels
        .iter()
        .map(|&level| Interval {
            level,
            lower: Vec::with_capacity(g),
            upper: Vec::with_capacity(g),
        })
        .collect();
    let mut column = vec![0.0; draws.rows()];
    for j in 0..g {
        for (r, v) in column.iter_mut().enumerate() {
            *v = draws.get(r, j);
        }
        column.sort_by(f64::total_cmp);
        median.push(stats::quantile_sorted(&column, 0.5));
        for iv in &mut intervals {
            let tail = 0.5 * (1.0 - iv.level);
            iv.lower.push(stats::quantile_sorted(&column, tail));
            iv.upper.push(stats::quantile_sorted(&column, 1.0 - tail));
        }
    }
    Ok(Bands { median, intervals })
}

/// Posterior curve with its grid (original units) and bands.
#[derive(Debug, Clone)]
pub struct CerfEstimate {
    pub label: String,
    pub grid: Vec<f64>,
    pub draws: RowMatrix,
    pub bands: Bands,
    /// Draws dropped because |θ_WZ| fell below tolerance.
    pub identification_failures: usize,
}

/// Column label fragment for a level: 0.95 → "95", 0.975 → "97.5".
pub fn level_tag(level: f64) -> String {
    let pct = (level * 1e6).round() / 1e4;
    let s = format!("{pct}");
    s.trim_end_matches(".0").to_string()
}

impl CerfEstimate {
    /// CSV with columns `x, median, lo_<L>, hi_<L>, …` in ascending level order.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut header = String::from("x,median");
        for iv in &self.bands.intervals {
            let t = level_tag(iv.level);
            let _ = write!(header, ",lo_{t},hi_{t}");
        }
        writeln!(out, "{header}")?;
        for (j, x) in self.grid.iter().enumerate() {
            let mut line = format!("{x},{}", self.bands.median[j]);
            for iv in &self.bands.intervals {
                let _ = write!(line, ",{},{}", iv.lower[j], iv.upper[j]);
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn moments(mx: f64, mz: f64) -> MomentCache {
        MomentCache {
            mean_x: mx,
            mean_proxy: mz,
            covariate_means: vec![],
        }
    }

    #[test]
    fn effect_cases() {
        assert_eq!(component_effect(&[0.0, 1.7, 3.0], &[0.0, 0.0, 2.0], 1e-6).unwrap(), 1.7);
        assert_eq!(component_effect(&[0.0, 2.0, 3.0], &[0.0, 1.0, 1.5], 1e-6).unwrap(), 0.0);
        let err = component_effect(&[0.0, 2.0, 3.0], &[0.0, 1.0, 1e-12], 1e-6).unwrap_err();
        assert!(err.to_string().contains("A6/A7"));
    }

    #[test]
    fn intercept_cases() {
        let tw = [0.0, 0.25, 1.0];
        assert_eq!(component_intercept(&[1.0, 9.0, 0.0], &tw, &moments(4.0, 0.5), 1e-6).unwrap(), 1.0);
        assert_eq!(component_intercept(&[1.0, 9.0, 2.0], &tw, &moments(4.0, 0.5), 1e-6).unwrap(), 4.0);
        assert_eq!(component_intercept(&[1.5, 9.0, 2.0], &tw, &moments(0.0, 0.0), 1e-6).unwrap(), 1.5);
    }

    fn single_knots() -> KnotGrid {
        KnotGrid::new(vec![-1.0, 1.0]).unwrap()
    }

    #[test]
    fn single_component_is_a_line() {
        let ty = RowMatrix::from_rows(&[vec![0.3, 1.2, -0.4]]);
        let tw = [0.1, 0.5, 0.8];
        let eta = RowMatrix::from_rows(&[vec![0.2, 0.7]]);
        let m = moments(0.1, -0.2);
        let grid = [-1.0, 0.0, 0.5, 2.0];
        let c = cerf_draw(OutcomeModel::NegativeControl, &ty, Some(&tw), &eta, &grid, &single_knots(), &m, 1e-6)
            .unwrap();
        let b = component_effect(ty.row(0), &tw, 1e-6).unwrap();
        let a = component_intercept(ty.row(0), &tw, &m, 1e-6).unwrap();
        for (x, v) in grid.iter().zip(&c) {
            assert_eq!(*v, b * x + a);
        }
    }

    #[test]
    fn no_confounding_reduces_to_mixture_regression() {
        let ty = RowMatrix::from_rows(&[vec![0.3, 1.2, 0.0], vec![-1.0, 0.5, 0.0]]);
        let tw = [0.1, 0.0, 0.8];
        let eta = RowMatrix::from_rows(&[vec![0.2, 0.7], vec![0.0, 0.0]]);
        let grid = [-0.5, 0.25];
        let m = moments(0.3, 0.2);
        let nc = cerf_draw(OutcomeModel::NegativeControl, &ty, Some(&tw), &eta, &grid, &single_knots(), &m, 1e-6)
            .unwrap();
        for (x, v) in grid.iter().zip(&nc) {
            let w = psbp::weights_at(*x, &eta, &single_knots()).0;
            let want = w[0] * (0.3 + 1.2 * x) + w[1] * (-1.0 + 0.5 * x);
            assert!((v - want).abs() < 1e-15);
        }
    }

    #[test]
    fn two_component_hand_evaluation() {
        // Independent evaluation at x = 0.5 with the parameters below:
        // α₁ = 0.2 + 0.7·0.5 = 0.55, Φ(0.55) = 0.708840313211654
        // ratio = 0.5/0.8 = 0.625
        // comp 1: β = 1.2 + 0.4·0.625 = 1.45; a = 0.3 − 0.4·(−0.2) − 0.4·0.625·0.1 = 0.355
        // comp 2: β = 0.5 − 1.0·0.625 = −0.125; a = −1 + 1·(−0.2) + 1·0.625·0.1 = −1.1375
        let ty = RowMatrix::from_rows(&[vec![0.3, 1.2, -0.4], vec![-1.0, 0.5, 1.0]]);
        let tw = [0.1, 0.5, 0.8];
        let eta = RowMatrix::from_rows(&[vec![0.2, 0.7], vec![0.0, 0.0]]);
        let m = moments(0.1, -0.2);
        let v = cerf_draw(OutcomeModel::NegativeControl, &ty, Some(&tw), &eta, &[0.5], &single_knots(), &m, 1e-6)
            .unwrap()[0];
        let p = 0.708_840_313_211_653_6;
        let want = p * (1.45 * 0.5 + 0.355) + (1.0 - p) * (-0.125 * 0.5 - 1.1375);
        assert!((v - want).abs() < 1e-12, "{v} vs {want}");
    }

    #[test]
    fn identification_failure_propagates() {
        let ty = RowMatrix::from_rows(&[vec![0.0, 1.0, 1.0]]);
        let eta = RowMatrix::from_rows(&[vec![0.0, 0.0]]);
        let r = cerf_draw(
            OutcomeModel::NegativeControl,
            &ty,
            Some(&[0.0, 1.0, 0.0]),
            &eta,
            &[0.0],
            &single_knots(),
            &moments(0.0, 0.0),
            1e-6,
        );
        assert!(matches!(r, Err(Error::Identification { .. })));
    }

    #[test]
    fn summarize_hand_quantiles() {
        let rows: Vec<Vec<f64>> = (1..=100).map(|v| vec![v as f64, 7.0]).collect();
        let b = summarize(&RowMatrix::from_rows(&rows), &[0.95, 0.5]).unwrap();
        let iv = b.interval(0.95).unwrap();
        assert!((iv.lower[0] - 3.475).abs() < 1e-12);
        assert!((iv.upper[0] - 97.525).abs() < 1e-12);
        assert_eq!(b.median[0], 50.5);
        // Constant column collapses.
        for iv in &b.intervals {
            assert_eq!(iv.lower[1], 7.0);
            assert_eq!(iv.upper[1], 7.0);
        }
        assert_eq!(b.intervals[0].level, 0.5);
    }

    #[test]
    fn summarize_needs_two_draws() {
        assert!(summarize(&RowMatrix::from_rows(&[vec![1.0]]), &[0.9]).is_err());
    }

    #[test]
    fn level_tags() {
        assert_eq!(level_tag(0.95), "95");
        assert_eq!(level_tag(0.5), "50");
        assert_eq!(level_tag(0.975), "97.5");
    }

    proptest! {
        #[test]
        fn bands_nested_and_contain_median(
            rows in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 3), 2..60)
        ) {
            let b = summarize(&RowMatrix::from_rows(&rows), &[0.5, 0.8, 0.9, 0.95]).unwrap();
            for j in 0..3 {
                for w in b.intervals.windows(2) {
                    prop_assert!(w[1].lower[j] <= w[0].lower[j]);
                    prop_assert!(w[0].upper[j] <= w[1].upper[j]);
                }
                prop_assert!(b.intervals[0].lower[j] <= b.median[j]);
                prop_assert!(b.median[j] <= b.intervals[0].upper[j]);
            }
        }
    }
}
