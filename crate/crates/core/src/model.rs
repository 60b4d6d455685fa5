//! Which regressors the outcome components use, and whether the
//! negative-control outcome is modeled.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::matrix::RowMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OutcomeModel {
    /// Components on [1, x, z, L] plus a W regression on [1, x, z, L];
    /// the curve uses the negative-control correction.
    NegativeControl,
    /// Components on [1, x, L]; no confounding adjustment ("YX").
    Unadjusted,
    /// Components on [1, x, u, L] with the hidden confounder unmasked ("YXU").
    UAdjusted,
}

impl OutcomeModel {
    pub fn label(self) -> &'static str {
        match self {
            OutcomeModel::NegativeControl => "BNP-NC",
            OutcomeModel::Unadjusted => "YX",
            OutcomeModel::UAdjusted => "YXU",
        }
    }
}

/// Column index of the exposure in every outcome design.
pub const X_COL: usize = 1;

/// Row-major outcome design plus the W design when modeled.
#[derive(Debug, Clone)]
pub struct Design {
    pub model: OutcomeModel,
    pub names: Vec<String>,
    pub rows: RowMatrix,
    /// Column of z (negative-control model) or u (U-adjusted model).
    pub proxy_col: Option<usize>,
    /// First covariate column.
    pub covariate_start: usize,
}

impl Design {
    pub fn build(d: &Dataset, model: OutcomeModel) -> Result<Self> {
        let n = d.n();
        let mut names = vec!["1".to_string(), "x".to_string()];
        let mut cols: Vec<&[f64]> = vec![&d.x];
        let proxy_col = match model {
            OutcomeModel::NegativeControl => {
                names.push("z".into());
                cols.push(&d.z);
                Some(2)
            }
            OutcomeModel::UAdjusted => {
                let u = d.u_hidden.as_deref().ok_or_else(|| {
                    Error::Config("the U-adjusted model needs the hidden confounder column u".into())
                })?;
                names.push("u".into());
                cols.push(u);
                Some(2)
            }
            OutcomeModel::Unadjusted => None,
        };
        let covariate_start = names.len();
        for c in &d.covariates {
            names.push(c.name.clone());
            cols.push(&c.values);
        }
        let p = names.len();
        let mut rows = RowMatrix::zeros(n, p);
        for i in 0..n {
            let r = rows.row_mut(i);
            r[0] = 1.0;
            for (j, c) in cols.iter().enumerate() {
                r[j + 1] = c[i];
            }
        }
        Ok(Design {
            model,
            names,
            rows,
            proxy_col,
            covariate_start,
        })
    }

    pub fn p(&self) -> usize {
        self.names.len()
    }

    pub fn n(&self) -> usize {
        self.rows.rows()
    }

    /// Whether the W regression is part of the model.
    pub fn models_w(&self) -> bool {
        self.model == OutcomeModel::NegativeControl
    }

    /// Sample means of every design column (the intercept column gives 1).
    pub fn column_means(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.p()];
        for r in self.rows.iter_rows() {
            for (a, v) in m.iter_mut().zip(r) {
                *a += v;
            }
        }
        let n = self.n() as f64;
        m.iter_mut().for_each(|a| *a /= n);
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data() -> Dataset {
        Dataset::new(
            vec![1.0, 2.0, 3.0],
            vec![0.1, 0.2, 0.3],
            vec![5.0, 6.0, 7.0],
            vec![0.0, 1.0, 0.0],
        )
        .unwrap()
        .with_covariate("age", vec![30.0, 40.0, 50.0])
        .unwrap()
    }

    #[test]
    fn designs_per_model() {
        let d = data();
        let nc = Design::build(&d, OutcomeModel::NegativeControl).unwrap();
        assert_eq!(nc.names, ["1", "x", "z", "age"]);
        assert_eq!(nc.rows.row(1), &[1.0, 0.2, 6.0, 40.0]);
        assert!(nc.models_w());
        let yx = Design::build(&d, OutcomeModel::Unadjusted).unwrap();
        assert_eq!(yx.names, ["1", "x", "age"]);
        assert_eq!(yx.proxy_col, None);
        assert!(Design::build(&d, OutcomeModel::UAdjusted).is_err());
        let du = d.with_u(vec![9.0, 8.0, 7.0]).unwrap();
        let yxu = Design::build(&du, OutcomeModel::UAdjusted).unwrap();
        assert_eq!(yxu.rows.row(2), &[1.0, 0.3, 7.0, 50.0]);
        let m = yxu.column_means();
        for (a, b) in m.iter().zip([1.0, 0.2, 8.0, 40.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
