//! Reduced-scale replication study: pooled 95% coverage and RMSE per scenario.
//! Usage: replicate_scenarios <replicates> <n> <iterations> [scenarios...]

use proxcerf::simulation::{run_replications, BenchmarkSpec};
use proxcerf::{ModelConfig, OutcomeModel};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let reps: usize = args.first().map_or(5, |s| s.parse().unwrap());
    let n: usize = args.get(1).map_or(2000, |s| s.parse().unwrap());
    let iters: usize = args.get(2).map_or(4000, |s| s.parse().unwrap());
    let ids: Vec<u8> = if args.len() > 3 {
        args[3..].iter().map(|s| s.parse().unwrap()).collect()
    } else {
        vec![1, 2, 3, 4]
    };
    let cfg = ModelConfig { iterations: iters, burn_in: iters / 2, ..ModelConfig::default() };
    for id in ids {
        let spec = BenchmarkSpec {
            scenario: id,
            n,
            replicates: reps,
            models: vec![OutcomeModel::NegativeControl, OutcomeModel::Unadjusted],
        };
        for r in run_replications(&spec, &cfg).unwrap() {
            println!(
                "scenario {id} {:6} pooled cover95={:.3} pooled rmse={:.3} mean rmse={:.3} central=({:.2},{:.2}) failed={} {:.0}s",
                r.model.label(),
                r.pooled_coverage(0.95).unwrap(),
                r.pooled_score.rmse,
                r.mean_replicate_rmse,
                r.central_range.0,
                r.central_range.1,
                r.failed(),
                r.runtime_secs
            );
        }
    }
}
