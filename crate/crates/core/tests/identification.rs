use proptest::prelude::*;

use proxcerf::data::{standardize, Affine};
use proxcerf::gibbs::Snapshot;
use proxcerf::identification::{cerf_draw, CurveEvaluator, MomentCache};
use proxcerf::matrix::RowMatrix;
use proxcerf::model::Design;
use proxcerf::psbp::make_knots;
use proxcerf::simulation::simulate_linear;
use proxcerf::stats;
use proxcerf::{component_effect, component_intercept, OutcomeModel};

fn snapshot(theta_y: Vec<Vec<f64>>, theta_w: Vec<f64>, eta: Vec<Vec<f64>>) -> Snapshot {
    let k = theta_y.len();
    Snapshot {
        theta_y: RowMatrix::from_rows(&theta_y),
        sigma_y: vec![1.0; k],
        theta_w: Some(theta_w),
        sigma_w: Some(1.0),
        eta: RowMatrix::from_rows(&eta),
        alloc: vec![],
    }
}

/// The same curve evaluated from an original-scale parameter state and from
/// its exact image on the standardized scale.
#[test]
fn standardized_and_raw_curves_agree() {
    let raw = simulate_linear(2000, 21).unwrap().without_u();
    let (std_data, t) = standardize(&raw).unwrap();
    let knots_raw = make_knots(&raw.x, 1).unwrap();
    let grid: Vec<f64> = stats::linspace(-1.5, 1.5, 40);

    let theta_y = vec![vec![0.3, 1.9, 2.4], vec![-0.7, 2.6, 1.1]];
    let theta_w = vec![0.1, 0.2, -1.8];
    let eta = vec![vec![0.25, -0.6], vec![0.0, 0.0]];

    let (cx, sx) = (t.x.center, t.x.scale);
    let (cz, sz) = (t.z.center, t.z.scale);
    let (cy, sy) = (t.y.center, t.y.scale);
    let (cw, sw) = (t.w.center, t.w.scale);
    let ty_std: Vec<Vec<f64>> = theta_y
        .iter()
        .map(|r| vec![(r[0] + r[1] * cx + r[2] * cz - cy) / sy, r[1] * sx / sy, r[2] * sz / sy])
        .collect();
    let tw = &theta_w;
    let tw_std = vec![(tw[0] + tw[1] * cx + tw[2] * cz - cw) / sw, tw[1] * sx / sw, tw[2] * sz / sw];
    let eta_std: Vec<Vec<f64>> = eta.iter().map(|r| vec![r[0] + r[1] * cx, r[1] * sx]).collect();

    let raw_eval = CurveEvaluator {
        model: OutcomeModel::NegativeControl,
        knots: knots_raw.clone(),
        moments: MomentCache::from_design_means(
            &Design::build(&raw, OutcomeModel::NegativeControl).unwrap().column_means(),
            true,
        ),
        grid: grid.clone(),
        y_scale: Affine::IDENTITY,
        tol: 1e-6,
    };
    let std_eval = CurveEvaluator {
        model: OutcomeModel::NegativeControl,
        knots: make_knots(&std_data.x, 1).unwrap(),
        moments: MomentCache::from_design_means(
            &Design::build(&std_data, OutcomeModel::NegativeControl).unwrap().column_means(),
            true,
        ),
        grid: grid.iter().map(|&x| t.x.forward(x)).collect(),
        y_scale: t.y,
        tol: 1e-6,
    };
    let a = raw_eval.cerf_draw(&snapshot(theta_y, theta_w, eta)).unwrap();
    let b = std_eval.cerf_draw(&snapshot(ty_std, tw_std, eta_std)).unwrap();
    for (p, q) in a.iter().zip(&b) {
        assert!((p - q).abs() < 1e-8, "{p} vs {q}");
    }
}

fn one_component_agrees(
    ty: [f64; 3],
    tw: [f64; 3],
    mx: f64,
    mz: f64,
    x: f64,
) -> Result<(), TestCaseError> {
    let knots = make_knots(&[-3.0, -1.0, 0.0, 1.0, 3.0], 1).unwrap();
    let moments = MomentCache {
        mean_x: mx,
        mean_proxy: mz,
        covariate_means: vec![],
    };
    let theta = RowMatrix::from_rows(&[ty.to_vec()]);
    let eta = RowMatrix::from_rows(&[vec![0.0, 0.0]]);
    let got = cerf_draw(
        OutcomeModel::NegativeControl,
        &theta,
        Some(&tw),
        &eta,
        &[x],
        &knots,
        &moments,
        1e-6,
    )
    .unwrap()[0];
    let want = component_effect(&ty, &tw, 1e-6).unwrap() * x
        + component_intercept(&ty, &tw, &moments, 1e-6).unwrap();
    prop_assert_eq!(got.to_bits(), want.to_bits());
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn single_component_curve_is_the_linear_effect(
        ty in prop::array::uniform3(-10.0f64..10.0),
        tw01 in prop::array::uniform2(-10.0f64..10.0),
        twz in prop_oneof![-10.0f64..-0.01, 0.01f64..10.0],
        mx in -5.0f64..5.0,
        mz in -5.0f64..5.0,
        x in -4.0f64..4.0,
    ) {
        one_component_agrees(ty, [tw01[0], tw01[1], twz], mx, mz, x)?;
    }
}
