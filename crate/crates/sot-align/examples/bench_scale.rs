//! Temporary scale probe for the matching route (not shipped).

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sot_align::cost::{build_cost, VirtualCosts};
use sot_align::solver::{branch_and_cut, build_instance, SolveOptions};

fn main() {
    let n = 2000usize;
    let dim = 8usize;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let base = Array2::from_shape_fn((n, dim), |_| rng.gen_range(-1.0..1.0));
    let e1 = &base + &Array2::from_shape_fn((n, dim), |_| rng.gen_range(-0.45..0.45));
    let e2 = &base + &Array2::from_shape_fn((n, dim), |_| rng.gen_range(-0.45..0.45));
    for k in [1usize, 10, 100] {
        let t0 = std::time::Instant::now();
        let cost = build_cost(&e1, &e2, k, None).unwrap();
        let t_build = t0.elapsed().as_secs_f64();
        let max_cost = cost.entries.iter().map(|e| e.2).fold(0.0, f64::max);
        let vc = VirtualCosts::new(0.6 * max_cost, 0.6 * max_cost).unwrap();
        let t1 = std::time::Instant::now();
        let sol = branch_and_cut(&build_instance(&cost, vc), &SolveOptions::default()).unwrap();
        let t_solve = t1.elapsed().as_secs_f64();
        println!(
            "K={k:3}  entries={:7}  build={t_build:6.2}s  solve={t_solve:6.2}s  matched={}  obj={:.3}",
            cost.num_entries(),
            sol.matched.len(),
            sol.objective
        );
    }
}
