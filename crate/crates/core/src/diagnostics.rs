//! Linear partial-correlation tests of the negative-control assumptions.

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::conjugate::ols;
use crate::data::Dataset;
use crate::error::{Error, Result};

const Z975: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartialCorrelation {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub n: usize,
    pub conditioners: usize,
}

impl PartialCorrelation {
    pub fn covers_zero(&self) -> bool {
        self.lower <= 0.0 && 0.0 <= self.upper
    }
}

fn residuals(v: &[f64], given: &[&[f64]]) -> Result<Vec<f64>> {
    if given.is_empty() {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        return Ok(v.iter().map(|a| a - m).collect());
    }
    let beta = ols(given, v)?;
    Ok((0..v.len())
        .map(|i| v[i] - beta[0] - given.iter().zip(&beta[1..]).map(|(c, b)| b * c[i]).sum::<f64>())
        .collect())
}

/// Correlation of `a` and `b` after regressing each on [1, given], with a
/// Fisher-z 95% interval of half-width 1.96/√(n − |given| − 3) on the z scale.
pub fn partial_correlation(a: &[f64], b: &[f64], given: &[&[f64]]) -> Result<PartialCorrelation> {
    let n = a.len();
    if b.len() != n || given.iter().any(|c| c.len() != n) {
        return Err(Error::Validation("columns differ in length".into()));
    }
    if n <= given.len() + 3 {
        return Err(Error::Validation(format!(
            "partial correlation needs more than {} rows with {} conditioners (got {n})",
            given.len() + 3,
            given.len()
        )));
    }
    let ra = residuals(a, given)?;
    let rb = residuals(b, given)?;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        sab += x * y;
        saa += x * x;
        sbb += y * y;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return Err(Error::ZeroVariance("partial-correlation residual".into()));
    }
    let r = (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0);
    let se = 1.0 / ((n - given.len() - 3) as f64).sqrt();
    let zr = r.atanh();
    Ok(PartialCorrelation {
        estimate: r,
        lower: (zr - Z975 * se).tanh(),
        upper: (zr + Z975 * se).tanh(),
        n,
        conditioners: given.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionTest {
    pub assumption: String,
    pub null: String,
    pub result: PartialCorrelation,
    pub conclusion: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub tests: Vec<AssumptionTest>,
    /// Rows that could not be run, with the reason.
    pub skipped: Vec<(String, String)>,
}

/// `independence_holds`: the assumption asserts the null. Otherwise the
/// assumption asserts dependence and holds only when the null is rejected.
fn run(
    assumption: &str,
    null: &str,
    a: &[f64],
    b: &[f64],
    given: &[&[f64]],
    independence_holds: bool,
) -> Result<AssumptionTest> {
    let result = partial_correlation(a, b, given)?;
    let rejected = !result.covers_zero();
    let holds = rejected != independence_holds;
    Ok(AssumptionTest {
        assumption: assumption.into(),
        null: null.into(),
        result,
        conclusion: if holds { "holds" } else { "violated" }.into(),
    })
}

/// Tests the linear implications of A4–A7. Rows that need U are skipped when
/// it is absent; W⊥Z|X is always reported as an observable check that W and Z
/// share information.
pub fn assumption_tests(data: &Dataset) -> Result<AssumptionReport> {
    data.validate()?;
    let mut tests = Vec::new();
    let mut skipped = Vec::new();
    match &data.u_hidden {
        Some(u) => {
            tests.push(run("A4", "X ⊥ W | U", &data.x, &data.w, &[u], true)?);
            tests.push(run("A5", "W ⊥ Z | U", &data.w, &data.z, &[u], true)?);
            tests.push(run("A6", "W ⊥ U", &data.w, u, &[], false)?);
            tests.push(run("A7", "U ⊥ Z | X", u, &data.z, &[&data.x], false)?);
        }
        None => {
            for (a, why) in [("A4", "X ⊥ W | U"), ("A5", "W ⊥ Z | U"), ("A6", "W ⊥ U"), ("A7", "U ⊥ Z | X")] {
                skipped.push((format!("{a} ({why})"), "needs the confounder column u".to_string()));
            }
        }
    }
    tests.push(run("A6/A7 (observable)", "W ⊥ Z | X", &data.w, &data.z, &[&data.x], false)?);
    Ok(AssumptionReport { tests, skipped })
}

impl AssumptionReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::Numerical(format!("csv write failed: {e}"));
        w.write_record(["assumption", "null", "estimate", "ci_lower", "ci_upper", "n", "conclusion"])
            .map_err(err)?;
        for t in &self.tests {
            w.write_record([
                t.assumption.clone(),
                t.null.clone(),
                t.result.estimate.to_string(),
                t.result.lower.to_string(),
                t.result.upper.to_string(),
                t.result.n.to_string(),
                t.conclusion.clone(),
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|e| Error::Numerical(format!("csv flush failed: {e}")))?;
        Ok(())
    }

    /// Aligned text table.
    pub fn to_text(&self) -> String {
        let header = ["assumption", "null", "estimate", "95% CI", "conclusion"];
        let rows: Vec<[String; 5]> = self
            .tests
            .iter()
            .map(|t| {
                [
                    t.assumption.clone(),
                    t.null.clone(),
                    format!("{:.3}", t.result.estimate),
                    format!("({:.3}, {:.3})", t.result.lower, t.result.upper),
                    t.conclusion.clone(),
                ]
            })
            .collect();
        let mut width = header.map(|h| h.chars().count());
        for r in &rows {
            for (c, cell) in r.iter().enumerate() {
                width[c] = width[c].max(cell.chars().count());
            }
        }
        let mut s = String::new();
        let line = |s: &mut String, cells: &[String]| {
            let parts: Vec<String> = cells
                .iter()
                .enumerate()
                .map(|(c, v)| format!("{v}{}", " ".repeat(width[c] - v.chars().count())))
                .collect();
            let _ = writeln!(s, "{}", parts.join("  ").trim_end());
        };
        line(&mut s, &header.map(String::from));
        for r in &rows {
            line(&mut s, r);
        }
        for (a, why) in &self.skipped {
            let _ = writeln!(s, "skipped {a}: {why}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gauss(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn independent_columns_cover_zero() {
        let (a, b) = (gauss(500, 1), gauss(500, 2));
        let r = partial_correlation(&a, &b, &[]).unwrap();
        assert!(r.estimate.abs() < 0.15);
        assert!(r.covers_zero());
        assert!(r.lower <= r.estimate && r.estimate <= r.upper);
    }

    #[test]
    fn conditioning_removes_shared_cause() {
        let c = gauss(2000, 3);
        let a: Vec<f64> = c.iter().zip(gauss(2000, 4)).map(|(c, e)| c + 0.5 * e).collect();
        let b: Vec<f64> = c.iter().zip(gauss(2000, 5)).map(|(c, e)| c + 0.5 * e).collect();
        assert!(!partial_correlation(&a, &b, &[]).unwrap().covers_zero());
        assert!(partial_correlation(&a, &b, &[&c]).unwrap().estimate.abs() < 0.1);
    }

    #[test]
    fn insufficient_rows() {
        let v = [1.0, 2.0, 3.0, 4.0];
        let c1 = [0.3, 0.1, 0.7, 0.2];
        let c2 = [1.0, 0.0, 1.0, 1.0];
        assert!(matches!(
            partial_correlation(&v, &v, &[&c1, &c2]),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn width_shrinks_with_n() {
        let (a, b) = (gauss(4000, 6), gauss(4000, 7));
        let small = partial_correlation(&a[..100], &b[..100], &[]).unwrap();
        let big = partial_correlation(&a, &b, &[]).unwrap();
        assert!(big.upper - big.lower < small.upper - small.lower);
    }

    #[test]
    fn simulated_negative_controls_pass() {
        let s = crate::simulation::Scenario::new(2, 1000, 5).unwrap();
        let d = crate::simulation::simulate(&s).unwrap();
        let rep = assumption_tests(&d).unwrap();
        let a6 = rep.tests.iter().find(|t| t.assumption == "A6").unwrap();
        assert!(!a6.result.covers_zero());
        assert_eq!(a6.conclusion, "holds");
        let masked = assumption_tests(&d.without_u()).unwrap();
        assert_eq!(masked.tests.len(), 1);
        assert_eq!(masked.skipped.len(), 4);
        assert!(masked.to_text().contains("W ⊥ Z | X"));
    }
}
