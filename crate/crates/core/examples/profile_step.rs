use std::time::Instant;
use proxcerf::gibbs::{chain_rng, Sampler};
use proxcerf::model::Design;
use proxcerf::simulation::{simulate, Scenario};
use proxcerf::{data::standardize, ModelConfig, OutcomeModel};

fn main() {
    let d = simulate(&Scenario::new(2, 2000, 1).unwrap()).unwrap().without_u();
    let (a, _) = standardize(&d).unwrap();
    let design = Design::build(&a, OutcomeModel::NegativeControl).unwrap();
    let cfg = ModelConfig::default();
    let mut s = Sampler::new(&a, &design, &cfg).unwrap();
    let mut rng = chain_rng(1, 0);
    let mut st = s.initialize(&mut rng).unwrap();
    for _ in 0..300 { s.step(&mut st, &mut rng).unwrap(); }
    let mut t = [0f64; 7];
    let reps = 300;
    for _ in 0..reps {
        let c = Instant::now(); s.draw_allocations(&mut st, &mut rng).unwrap(); t[0] += c.elapsed().as_secs_f64();
        let c = Instant::now(); s.draw_component_regressions(&mut st, &mut rng).unwrap(); t[1] += c.elapsed().as_secs_f64();
        let c = Instant::now(); s.draw_eta(&mut st, &mut rng).unwrap(); t[2] += c.elapsed().as_secs_f64();
        let c = Instant::now(); s.compute_alpha(&st); t[3] += c.elapsed().as_secs_f64();
        let c = Instant::now(); s.draw_augmentation(&mut st, &mut rng); t[4] += c.elapsed().as_secs_f64();
        let c = Instant::now(); s.compute_weights(); t[5] += c.elapsed().as_secs_f64();
        let c = Instant::now(); s.draw_w_regression(&mut st, &mut rng).unwrap(); t[6] += c.elapsed().as_secs_f64();
    }
    let names = ["alloc", "regress", "eta", "alpha", "augment", "weights", "w"];
    for (n, v) in names.iter().zip(t) { println!("{n:8} {:.3} ms", 1e3 * v / reps as f64); }
    let mut counts = vec![0; 20];
    for &a in &st.alloc { counts[a] += 1; }
    println!("{counts:?}");
}
