//! End-to-end fitting: scale the data, run chains, turn draws into a curve.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{GridSpec, ModelConfig};
use crate::data::{standardize, Dataset, Standardization};
use crate::error::{Error, Result};
use crate::gibbs::{run_chain, ChainOutput};
use crate::identification::{summarize, CerfEstimate, CurveEvaluator, MomentCache};
use crate::matrix::RowMatrix;
use crate::model::{Design, OutcomeModel};
use crate::stats;

/// Curve grid in original exposure units.
pub fn make_grid(x: &[f64], spec: &GridSpec) -> Result<Vec<f64>> {
    if let Some(g) = &spec.explicit {
        return Ok(g.clone());
    }
    let s = stats::sorted(x);
    let lo = stats::quantile_sorted(&s, spec.lower_quantile);
    let hi = stats::quantile_sorted(&s, spec.upper_quantile);
    if !(lo < hi) {
        return Err(Error::Validation(format!(
            "grid quantiles {} and {} of x coincide",
            spec.lower_quantile, spec.upper_quantile
        )));
    }
    Ok(stats::linspace(lo, hi, spec.points))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitSummary {
    pub model: OutcomeModel,
    pub chains: usize,
    pub retained_draws: usize,
    pub identification_failures: usize,
    pub standardized: bool,
    pub standardization: Standardization,
    pub moments: MomentCache,
    pub knots: Vec<f64>,
    pub runtime_secs: f64,
}

#[derive(Debug, Clone)]
pub struct Fit {
    pub estimate: CerfEstimate,
    pub chains: Vec<ChainOutput>,
    pub summary: FitSummary,
}

/// Runs `chains` chains (seed streams 0..chains) and pools their curves.
pub fn fit(data: &Dataset, model: OutcomeModel, config: &ModelConfig, chains: usize) -> Result<Fit> {
    config.validate_for(data.n())?;
    if chains == 0 {
        return Err(Error::Config("at least one chain is required".into()));
    }
    if model == OutcomeModel::UAdjusted && data.u_hidden.is_none() {
        return Err(Error::Config(
            "the U-adjusted model needs the hidden confounder column u".into(),
        ));
    }
    let grid = make_grid(&data.x, &config.grid)?;
    let (analysis, transform) = if config.standardize {
        standardize(data)?
    } else {
        (data.clone(), Standardization::identity(data))
    };
    let design = Design::build(&analysis, model)?;
    let moments = MomentCache::from_design_means(&design.column_means(), design.proxy_col.is_some());
    drop(design);

    let outputs: Vec<ChainOutput> = (0..chains as u64)
        .into_par_iter()
        .map(|c| run_chain(&analysis, model, config, c))
        .collect::<Result<_>>()?;

    let evaluator = CurveEvaluator {
        model,
        knots: outputs[0].knots.clone(),
        moments: moments.clone(),
        grid: grid.iter().map(|&x| transform.x.forward(x)).collect(),
        y_scale: transform.y,
        tol: config.tol_wz,
    };
    let total: usize = outputs.iter().map(|o| o.retained.len()).sum();
    let mut curves = Vec::with_capacity(total);
    let mut failures = 0;
    for out in &outputs {
        for draw in &out.retained {
            match evaluator.cerf_draw(draw) {
                Ok(c) => curves.push(c),
                Err(Error::Identification { .. }) => failures += 1,
                Err(e) => return Err(e),
            }
        }
    }
    if failures as f64 > config.max_identification_failure * total as f64 {
        return Err(Error::IdentificationRate {
            failed: failures,
            total,
        });
    }
    let draws = RowMatrix::from_rows(&curves);
    let bands = summarize(&draws, &config.levels)?;
    let runtime_secs = outputs.iter().map(|o| o.meta.runtime_secs).sum();
    let summary = FitSummary {
        model,
        chains,
        retained_draws: total,
        identification_failures: failures,
        standardized: config.standardize,
        standardization: transform,
        moments,
        knots: evaluator.knots.cutpoints().to_vec(),
        runtime_secs,
    };
    Ok(Fit {
        estimate: CerfEstimate {
            label: model.label().to_string(),
            grid,
            draws,
            bands,
            identification_failures: failures,
        },
        chains: outputs,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_between_quantiles() {
        let x: Vec<f64> = (0..=100).map(f64::from).collect();
        let g = make_grid(&x, &GridSpec::default()).unwrap();
        assert_eq!(g.len(), 100);
        assert_eq!(g[0], 1.0);
        assert_eq!(g[99], 99.0);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn explicit_grid_wins() {
        let spec = GridSpec {
            explicit: Some(vec![0.5, 2.0]),
            ..GridSpec::default()
        };
        assert_eq!(make_grid(&[1.0, 2.0], &spec).unwrap(), vec![0.5, 2.0]);
    }
}
