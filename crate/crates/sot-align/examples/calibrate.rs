//! Temporary calibration harness for the synthetic fixture (not shipped).

use ndarray::Array2;
use sot_align::cost::{build_cost, grid_search_virtual_costs, VirtualCosts};
use sot_align::eval::{
    ded_scores, hits_at_k, matched_accuracy, rank_by_distance, DedPrediction, Setting,
};
use sot_align::metric::{train, TrainingConfig};
use sot_align::solver::{branch_and_cut, build_instance, greedy_match, LpRoute, SolveOptions};
use sot_align::synth::{generate, SynthParams};
use sot_align::text::{embed_names, extract_pseudo_pairs, similarity_matrix};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let get = |name: &str, default: f64| -> f64 {
        args.iter()
            .position(|a| a == name)
            .and_then(|i| args.get(i + 1))
            .and_then(|v| v.parse().ok())
            .unwrap_or(default)
    };
    let sigma = get("--sigma", 0.35);
    let tau = get("--tau", 0.55);
    let rho = get("--rho", 0.9);
    let dim = get("--dim", 16.0) as usize;
    let fam = get("--fam", 4.0) as usize;
    let eps = get("--eps", 0.85);
    let steps = get("--steps", 300.0) as usize;
    let lr = get("--lr", 1e-3);
    let margin = get("--margin", 2.0);
    let seed = get("--seed", 17.0) as u64;
    let deg = get("--deg", 4.0);

    let params = SynthParams {
        matchable: 100,
        dangling1: 20,
        dangling2: 20,
        dim,
        noise_sigma: sigma,
        family_size: fam,
        family_rho: rho,
        clone_noise: tau,
        avg_degree: deg,
        relation_types: 3,
        train_fraction: 0.0,
        seed,
    };
    let data = generate(&params).unwrap();
    let e1 = embed_names(&data.kg1, &data.word_vectors).unwrap();
    let e2 = embed_names(&data.kg2, &data.word_vectors).unwrap();

    let sources: Vec<usize> = data.gold.pairs.iter().map(|&(i, _)| i).collect();
    let raw_rank = rank_by_distance(&sources, &e1.matrix, &e2.matrix);
    let raw_h1 = hits_at_k(&raw_rank, &data.gold, 1, Setting::Practical).unwrap();

    let s = similarity_matrix(&e1, &e2).unwrap();
    let pseudo = extract_pseudo_pairs(&s, eps).unwrap();
    let p_correct = pseudo.pairs.iter().filter(|&&(i, j)| i == j).count();

    let cfg = TrainingConfig {
        margin,
        negatives_per_pair: 5,
        top_n: 3,
        w0: 0.3,
        decay_fraction: 0.25,
        learning_rate: lr,
        total_steps: steps,
        rng_seed: seed,
        hidden_dim: 0,
        output_dim: 0,
    };
    let t0 = std::time::Instant::now();
    let trained = train(&data.kg1, &data.kg2, &e1, &e2, &pseudo, &cfg, None).unwrap();
    let train_secs = t0.elapsed().as_secs_f64();

    let t1: &Array2<f64> = &trained.embeddings1.matrix;
    let t2: &Array2<f64> = &trained.embeddings2.matrix;
    let trained_rank = rank_by_distance(&sources, t1, t2);
    let trained_h1 = hits_at_k(&trained_rank, &data.gold, 1, Setting::Practical).unwrap();

    let cost_small = build_cost(t1, t2, 10, None).unwrap();
    let opts = SolveOptions::with_route(LpRoute::Matching);
    let gs = grid_search_virtual_costs(&cost_small, &pseudo, 10, &opts).unwrap();

    let topk = get("--topk", 100.0) as usize;
    let cost_full = build_cost(t1, t2, topk, None).unwrap();
    let solution = branch_and_cut(&build_instance(&cost_full, gs.chosen), &opts).unwrap();
    let solver_h1 = matched_accuracy(&solution.matched, &data.gold);
    let greedy = greedy_match(&cost_full);
    let greedy_h1 = matched_accuracy(&greedy.matched, &data.gold);
    let ded = ded_scores(&DedPrediction::from_solution(&solution), &data.gold);

    // ablation: force maximal matching
    let max_cost = cost_full.entries.iter().map(|e| e.2).fold(0.0, f64::max);
    let huge = VirtualCosts::new(max_cost * 1e3, max_cost * 1e3).unwrap();
    let ablated = branch_and_cut(&build_instance(&cost_full, huge), &opts).unwrap();
    let ablated_h1 = matched_accuracy(&ablated.matched, &data.gold);

    // grid cells summary: best and the chosen one
    let best_cell = gs
        .cells
        .iter()
        .map(|c| c.hits_on_pairs)
        .fold(f64::NEG_INFINITY, f64::max);

    println!(
        "sigma={sigma} tau={tau} rho={rho} dim={dim} fam={fam} eps={eps} steps={steps} lr={lr} margin={margin} seed={seed}"
    );
    println!(
        "raw_h1={raw_h1:.3}  |P|={} (correct {p_correct})  trained_h1={trained_h1:.3}  train_secs={train_secs:.1}",
        pseudo.len()
    );
    println!(
        "alpha={:.3} beta={:.3} hitsP={:.3} bestP={:.3}",
        gs.chosen.alpha, gs.chosen.beta, gs.hits_on_pairs, best_cell
    );
    println!(
        "solver_h1={solver_h1:.3}  greedy_h1={greedy_h1:.3}  gap={:+.3}  ded_f1={:.3} (P={:.3} R={:.3})  dangl={} {}",
        solver_h1 - greedy_h1,
        ded.pooled.f1,
        ded.pooled.precision,
        ded.pooled.recall,
        solution.dangling1.len(),
        solution.dangling2.len()
    );
    let ablated_ded = ded_scores(&DedPrediction::from_solution(&ablated), &data.gold);
    println!(
        "ablated_h1={ablated_h1:.3} (delta {:+.3}) ablated_dangling={}+{} ablated_f1={:.3}",
        ablated_h1 - solver_h1,
        ablated.dangling1.len(),
        ablated.dangling2.len(),
        ablated_ded.pooled.f1
    );

    if get("--grid", 0.0) > 0.0 {
        println!("grid cells (alpha beta hitsP):");
        for (idx, c) in gs.cells.iter().enumerate() {
            print!("{:.2}/{:.2}/{:.3}  ", c.alpha, c.beta, c.hits_on_pairs);
            if idx % 10 == 9 {
                println!();
            }
        }
    }

    if get("--bands", 0.0) > 0.0 {
        use sot_align::metric::manhattan_distance;
        let dist = |a: &Array2<f64>, i: usize, b: &Array2<f64>, j: usize| {
            manhattan_distance(a.row(i).as_slice().unwrap(), b.row(j).as_slice().unwrap())
        };
        let mut anchor_costs: Vec<f64> = data
            .gold
            .pairs
            .iter()
            .map(|&(i, j)| dist(t1, i, t2, j))
            .collect();
        anchor_costs.sort_by(f64::total_cmp);
        let m = data.gold.pairs.len();
        let mut clone_nn: Vec<f64> = data
            .gold
            .dangling1
            .iter()
            .map(|&d| {
                (0..t2.nrows())
                    .map(|j| dist(t1, d, t2, j))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        clone_nn.sort_by(f64::total_cmp);
        let mut far: Vec<f64> = (0..50)
            .map(|k| dist(t1, (k * 7) % m, t2, (k * 13 + 29) % m))
            .collect();
        far.sort_by(f64::total_cmp);
        let pct = |v: &[f64], p: f64| v[((v.len() - 1) as f64 * p) as usize];
        println!(
            "anchor band: p10={:.1} p50={:.1} p90={:.1} p100={:.1}",
            pct(&anchor_costs, 0.1),
            pct(&anchor_costs, 0.5),
            pct(&anchor_costs, 0.9),
            pct(&anchor_costs, 1.0)
        );
        println!(
            "clone-NN band (side1): p10={:.1} p50={:.1} p90={:.1}",
            pct(&clone_nn, 0.1),
            pct(&clone_nn, 0.5),
            pct(&clone_nn, 0.9)
        );
        println!(
            "far band: p10={:.1} p50={:.1} p90={:.1}",
            pct(&far, 0.1),
            pct(&far, 0.5),
            pct(&far, 0.9)
        );
        // where do matched clones go?
        let mut clone_to_matchable = 0;
        let mut clone_to_clone = 0;
        for &(i, j) in &solution.matched {
            if i >= m {
                if j >= m {
                    clone_to_clone += 1;
                } else {
                    clone_to_matchable += 1;
                }
            }
        }
        println!(
            "matched clones (side1): ->matchable {}  ->clone {}",
            clone_to_matchable, clone_to_clone
        );
    }
}
