//! Dependent probit stick-breaking weights.
//!
//! Component k's stick fraction at exposure x is Φ(α_k(x)), where α_k is
//! linear in x within each exposure segment: α_k(x) = η₀ₖ + η_{v,k}·x for x in
//! segment v. The intercept is shared by all segments, so α_k may jump at
//! interior cutpoints.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::RowMatrix;
use crate::normal;
use crate::stats;

/// Segment boundaries q₀ < q₁ < … < q_V over the exposure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnotGrid {
    cutpoints: Vec<f64>,
}

impl KnotGrid {
    pub fn new(cutpoints: Vec<f64>) -> Result<Self> {
        if cutpoints.len() < 2 {
            return Err(Error::Validation("a knot grid needs at least 2 cutpoints".into()));
        }
        if cutpoints.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Validation(
                "knot cutpoints must be strictly ascending".into(),
            ));
        }
        Ok(KnotGrid { cutpoints })
    }

    pub fn cutpoints(&self) -> &[f64] {
        &self.cutpoints
    }

    /// Number of segments V.
    pub fn segments(&self) -> usize {
        self.cutpoints.len() - 1
    }

    /// 0-based segment of `x`: segment v covers [q_v, q_{v+1}), the last one
    /// also holds q_V, and points outside the range use the nearest segment.
    #[inline]
    pub fn segment(&self, x: f64) -> usize {
        let interior = &self.cutpoints[1..self.cutpoints.len() - 1];
        interior.partition_point(|&q| q <= x)
    }

    /// Applies `v ↦ a + b·v` (b > 0) to every cutpoint.
    pub fn map_affine(&self, a: f64, b: f64) -> KnotGrid {
        KnotGrid {
            cutpoints: self.cutpoints.iter().map(|&q| a + b * q).collect(),
        }
    }
}

/// Cutpoints at min, max, and the type-7 quantiles v/V of `x`.
pub fn make_knots(x: &[f64], segments: usize) -> Result<KnotGrid> {
    if segments == 0 {
        return Err(Error::Config("the weight model needs at least one segment".into()));
    }
    if x.is_empty() {
        return Err(Error::Validation("cannot place knots on empty data".into()));
    }
    let sorted = stats::sorted(x);
    let mut distinct = sorted.clone();
    distinct.dedup();
    let advice = || {
        Error::Validation(format!(
            "exposure quantiles do not give {segments} distinct segments; use fewer knots"
        ))
    };
    if distinct.len() < segments + 1 {
        return Err(advice());
    }
    let cutpoints: Vec<f64> = (0..=segments)
        .map(|v| match v {
            0 => sorted[0],
            v if v == segments => sorted[sorted.len() - 1],
            v => stats::quantile_sorted(&sorted, v as f64 / segments as f64),
        })
        .collect();
    KnotGrid::new(cutpoints).map_err(|_| advice())
}

/// α_k(x) for one coefficient row `[η₀, η₁, …, η_V]`.
#[inline]
pub fn alpha_at(x: f64, eta: &[f64], knots: &KnotGrid) -> f64 {
    debug_assert_eq!(eta.len(), knots.segments() + 1);
    eta[0] + eta[1 + knots.segment(x)] * x
}

/// Mixture weights on the K-simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(pub Vec<f64>);

impl WeightVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// ω_k = Φ(α_k) ∏_{r<k} (1 − Φ(α_r)) for k < K; the last component takes the
/// remaining stick.
pub fn stick_break(alphas: &[f64]) -> WeightVector {
    let mut w = Vec::with_capacity(alphas.len() + 1);
    let mut rest = 1.0;
    for &a in alphas {
        let (p, q) = normal::cdf_pair(a);
        w.push(rest * p);
        rest *= q;
    }
    w.push(rest);
    WeightVector(w)
}

/// Writes ln ω_k for k = 1..K into `out`, given the K − 1 stick α values.
#[inline]
pub fn ln_stick_break_into(alphas: impl Iterator<Item = f64>, out: &mut [f64]) {
    let k = out.len();
    let mut ln_rest = 0.0;
    for (slot, a) in out[..k - 1].iter_mut().zip(alphas) {
        let (p, q) = normal::cdf_pair(a);
        *slot = ln_rest + p.ln();
        ln_rest += q.ln();
    }
    out[k - 1] = ln_rest;
}

/// Weights at exposure `x` from the K × (1 + V) coefficient matrix.
pub fn weights_at(x: f64, eta: &RowMatrix, knots: &KnotGrid) -> WeightVector {
    let k = eta.rows();
    let alphas: Vec<f64> = (0..k.saturating_sub(1))
        .map(|c| alpha_at(x, eta.row(c), knots))
        .collect();
    stick_break(&alphas)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn quartile_knots() {
        let x: Vec<f64> = (1..=8).map(f64::from).collect();
        let k = make_knots(&x, 4).unwrap();
        assert_eq!(k.cutpoints(), &[1.0, 2.75, 4.5, 6.25, 8.0]);
    }

    #[test]
    fn single_segment_knots() {
        let k = make_knots(&[3.0, -1.0, 2.0], 1).unwrap();
        assert_eq!(k.cutpoints(), &[-1.0, 3.0]);
        assert_eq!(k.segment(-5.0), 0);
        assert_eq!(k.segment(7.0), 0);
    }

    #[test]
    fn too_few_distinct_values() {
        let x = [1.0, 2.0, 3.0, 1.0, 2.0, 3.0, 3.0];
        let err = make_knots(&x, 4).unwrap_err();
        assert!(err.to_string().contains("fewer knots"));
    }

    #[test]
    fn colliding_quantiles_rejected() {
        // Enough distinct values, but the median equals the first quartile.
        let mut x = vec![5.0; 20];
        x.extend([1.0, 2.0, 9.0, 10.0]);
        assert!(make_knots(&x, 4).is_err());
    }

    #[test]
    fn segment_membership_half_open() {
        let k = KnotGrid::new(vec![0.0, 1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(k.segment(0.0), 0);
        assert_eq!(k.segment(0.999), 0);
        assert_eq!(k.segment(1.0), 1);
        assert_eq!(k.segment(2.5), 2);
        assert_eq!(k.segment(4.0), 3);
        assert_eq!(k.segment(-1.0), 0);
        assert_eq!(k.segment(9.0), 3);
    }

    #[test]
    fn alpha_hand_value() {
        let k = KnotGrid::new(vec![0.0, 1.0, 2.0, 3.0, 4.0]).unwrap();
        let eta = [0.5, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(alpha_at(2.5, &eta, &k), 8.0);
        // x = q_V uses the last segment's slope.
        assert_eq!(alpha_at(4.0, &eta, &k), 0.5 + 16.0);
        // Extrapolation uses boundary segments.
        assert_eq!(alpha_at(-1.0, &eta, &k), 0.5 - 1.0);
        assert_eq!(alpha_at(0.0, &[0.25, 0.0, 0.0, 0.0, 0.0], &k), 0.25);
        assert_eq!(alpha_at(3.3, &[0.25, 0.0, 0.0, 0.0, 0.0], &k), 0.25);
    }

    #[test]
    fn stick_break_cases() {
        assert_eq!(stick_break(&[0.0, 0.0]).0, vec![0.5, 0.25, 0.25]);
        let w = stick_break(&[10.0]).0;
        assert!((w[0] - 1.0).abs() < 1e-12 && w[1].abs() < 1e-12);
        // Reference values from mpmath.
        let w = stick_break(&[0.5, -0.5]).0;
        let want = [
            0.691_462_461_274_013_1,
            0.095_195_412_803_089_86,
            0.213_342_125_922_897_03,
        ];
        for (g, e) in w.iter().zip(want) {
            assert!((g - e).abs() < 1e-15, "{g} vs {e}");
        }
        assert_eq!(stick_break(&[]).0, vec![1.0]);
    }

    #[test]
    fn ln_weights_agree() {
        let alphas = [0.3, -1.2, 2.0, -0.1];
        let w = stick_break(&alphas);
        let mut lw = vec![0.0; 5];
        ln_stick_break_into(alphas.iter().copied(), &mut lw);
        for (a, b) in w.0.iter().zip(&lw) {
            assert!((a.ln() - b).abs() < 1e-14);
        }
    }

    #[test]
    fn single_component_weight_is_one() {
        let k = KnotGrid::new(vec![0.0, 1.0]).unwrap();
        let eta = RowMatrix::from_rows(&[vec![3.0, -2.0]]);
        assert_eq!(weights_at(0.4, &eta, &k).0, vec![1.0]);
    }

    #[test]
    fn zero_eta_weights_constant() {
        let k = KnotGrid::new(vec![0.0, 1.0, 2.0]).unwrap();
        let eta = RowMatrix::zeros(4, 3);
        let want = stick_break(&[0.0, 0.0, 0.0]);
        for x in [-3.0, 0.2, 1.7, 5.0] {
            assert_eq!(weights_at(x, &eta, &k), want);
        }
    }

    #[test]
    fn first_weight_monotone_within_segment() {
        let k = KnotGrid::new(vec![0.0, 1.0, 2.0]).unwrap();
        let eta = RowMatrix::from_rows(&[vec![-0.5, 0.8, 1.5], vec![0.1, -1.0, 0.3]]);
        for seg in 0..2 {
            let xs: Vec<f64> = (0..50).map(|i| seg as f64 + i as f64 / 50.0).collect();
            let w1: Vec<f64> = xs.iter().map(|&x| weights_at(x, &eta, &k).0[0]).collect();
            assert!(w1.windows(2).all(|p| p[1] > p[0]));
        }
    }

    proptest! {
        #[test]
        fn weights_on_simplex(
            rows in prop::collection::vec(prop::collection::vec(-8.0f64..8.0, 4), 1..12),
            x in -5.0f64..5.0,
        ) {
            let k = KnotGrid::new(vec![-2.0, -0.5, 0.5, 2.0]).unwrap();
            let eta = RowMatrix::from_rows(&rows);
            let w = weights_at(x, &eta, &k);
            prop_assert_eq!(w.0.len(), rows.len());
            prop_assert!((w.0.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(w.0.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }

        #[test]
        fn own_weight_increases_with_own_alpha(
            alphas in prop::collection::vec(-3.0f64..3.0, 1..8),
            pick in 0usize..8,
            bump in 0.01f64..1.0,
        ) {
            let k = pick % alphas.len();
            let before = stick_break(&alphas).0[k];
            let mut moved = alphas.clone();
            moved[k] += bump;
            prop_assert!(stick_break(&moved).0[k] > before);
        }
    }
}
