//! Fits one simulated scenario and prints runtime and central-grid accuracy.
//! Usage: fit_scenario <scenario> <n> <iterations> [seed]

use proxcerf::simulation::{simulate, true_cerf, Scenario};
use proxcerf::{fit, ModelConfig, OutcomeModel};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let id: u8 = args.first().map_or(2, |s| s.parse().unwrap());
    let n: usize = args.get(1).map_or(2000, |s| s.parse().unwrap());
    let iters: usize = args.get(2).map_or(4000, |s| s.parse().unwrap());
    let seed: u64 = args.get(3).map_or(1, |s| s.parse().unwrap());
    let data = simulate(&Scenario::new(id, n, seed).unwrap()).unwrap().without_u();
    let mut cfg = ModelConfig { iterations: iters, burn_in: iters / 2, seed, ..ModelConfig::default() };
    cfg.grid.points = 25;
    for model in [OutcomeModel::NegativeControl, OutcomeModel::Unadjusted] {
        let f = fit(&data, model, &cfg, 1).unwrap();
        let e = &f.estimate;
        let b = e.bands.interval(0.95).unwrap();
        let mut cover = 0;
        let mut sq = 0.0;
        for (j, &x) in e.grid.iter().enumerate() {
            let t = true_cerf(id, x);
            cover += (b.lower[j] <= t && t <= b.upper[j]) as usize;
            sq += (e.bands.median[j] - t).powi(2);
        }
        println!(
            "{:6} {:.2}s ({:.3} ms/iter) cover95={}/{} rmse={:.3} idfail={}",
            model.label(),
            f.summary.runtime_secs,
            1e3 * f.summary.runtime_secs / iters as f64,
            cover,
            e.grid.len(),
            (sq / e.grid.len() as f64).sqrt(),
            e.identification_failures
        );
    }
}
