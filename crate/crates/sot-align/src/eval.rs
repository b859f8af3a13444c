//! Alignment and dangling-detection metrics.
//!
//! Ranking metrics (Hits@k, MRR) are computed from raw embedding costs in
//! two settings: *practical*, where every target-KG entity is a candidate,
//! and *relaxed*, where candidates are filtered to the targets that appear
//! in the gold pairs. The solver's discrete matching is scored separately
//! as matched accuracy — an entity the solver sends to a virtual sink
//! counts as missed — and its dangling sets are scored as a classifier.

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::path::Path;

use crate::error::{Result, SotError};
use crate::kg::GoldStandard;
use crate::metric::manhattan_distance;
use crate::solver::AssignmentSolution;

/// Ordered candidate lists, one row per source entity, ascending cost.
#[derive(Debug, Clone, PartialEq)]
pub struct RankingTable {
    pub rows: Vec<(usize, Vec<usize>)>,
}

impl RankingTable {
    fn row(&self, source: usize) -> Option<&[usize]> {
        self.rows
            .iter()
            .find(|(s, _)| *s == source)
            .map(|(_, c)| c.as_slice())
    }
}

/// Rank every target entity for each requested source by ascending Manhattan
/// distance, ties toward the smaller index.
pub fn rank_by_distance(
    sources: &[usize],
    emb1: &Array2<f64>,
    emb2: &Array2<f64>,
) -> RankingTable {
    let rows = sources
        .iter()
        .map(|&i| {
            let a = emb1.row(i);
            let mut scored: Vec<(f64, usize)> = (0..emb2.nrows())
                .map(|j| {
                    (
                        manhattan_distance(
                            a.as_slice().unwrap(),
                            emb2.row(j).as_slice().unwrap(),
                        ),
                        j,
                    )
                })
                .collect();
            scored.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
            (i, scored.into_iter().map(|(_, j)| j).collect())
        })
        .collect();
    RankingTable { rows }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Setting {
    Relaxed,
    Practical,
}

fn rank_of(
    candidates: &[usize],
    gold_targets: &HashSet<usize>,
    target: usize,
    setting: Setting,
) -> Option<usize> {
    let mut rank = 0usize;
    for &c in candidates {
        if setting == Setting::Relaxed && !gold_targets.contains(&c) {
            continue;
        }
        rank += 1;
        if c == target {
            return Some(rank);
        }
    }
    None
}

/// Fraction of gold pairs whose target ranks within the top `k`.
pub fn hits_at_k(
    rankings: &RankingTable,
    gold: &GoldStandard,
    k: usize,
    setting: Setting,
) -> Result<f64> {
    if gold.pairs.is_empty() {
        return Ok(0.0);
    }
    let gold_targets: HashSet<usize> = gold.pairs.iter().map(|&(_, j)| j).collect();
    let mut missing = Vec::new();
    let mut hits = 0usize;
    for &(src, tgt) in &gold.pairs {
        match rankings.row(src) {
            None => missing.push(src),
            Some(cands) => {
                if let Some(rank) = rank_of(cands, &gold_targets, tgt, setting) {
                    if rank <= k {
                        hits += 1;
                    }
                }
            }
        }
    }
    if !missing.is_empty() {
        return Err(SotError::Config(format!(
            "gold sources missing from rankings: {missing:?}"
        )));
    }
    Ok(hits as f64 / gold.pairs.len() as f64)
}

/// Mean reciprocal rank of the gold target; an absent target contributes 0.
pub fn mrr(rankings: &RankingTable, gold: &GoldStandard, setting: Setting) -> Result<f64> {
    if gold.pairs.is_empty() {
        return Ok(0.0);
    }
    let gold_targets: HashSet<usize> = gold.pairs.iter().map(|&(_, j)| j).collect();
    let mut missing = Vec::new();
    let mut total = 0.0;
    for &(src, tgt) in &gold.pairs {
        match rankings.row(src) {
            None => missing.push(src),
            Some(cands) => {
                if let Some(rank) = rank_of(cands, &gold_targets, tgt, setting) {
                    total += 1.0 / rank as f64;
                }
            }
        }
    }
    if !missing.is_empty() {
        return Err(SotError::Config(format!(
            "gold sources missing from rankings: {missing:?}"
        )));
    }
    Ok(total / gold.pairs.len() as f64)
}

/// Fraction of gold pairs the discrete matching reproduces exactly; sources
/// matched elsewhere or sent to a virtual sink count as missed.
pub fn matched_accuracy(matched: &[(usize, usize)], gold: &GoldStandard) -> f64 {
    if gold.pairs.is_empty() {
        return 0.0;
    }
    let matched_set: HashSet<(usize, usize)> = matched.iter().copied().collect();
    let hits = gold
        .pairs
        .iter()
        .filter(|p| matched_set.contains(p))
        .count();
    hits as f64 / gold.pairs.len() as f64
}

/// Predicted dangling sets for both KGs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DedPrediction {
    pub dangling1: Vec<usize>,
    pub dangling2: Vec<usize>,
}

impl DedPrediction {
    pub fn from_solution(solution: &AssignmentSolution) -> Self {
        DedPrediction {
            dangling1: solution.dangling1.clone(),
            dangling2: solution.dangling2.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrfScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    /// Set when the prediction was empty and precision defaulted to 0.
    pub empty_prediction: bool,
}

fn prf(tp: usize, fp: usize, fn_: usize) -> PrfScores {
    let empty_prediction = tp + fp == 0;
    let precision = if empty_prediction {
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = if tp + fn_ == 0 {
        0.0
    } else {
        tp as f64 / (tp + fn_) as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    PrfScores {
        precision,
        recall,
        f1,
        tp,
        fp,
        fn_,
        empty_prediction,
    }
}

fn side_counts(predicted: &[usize], gold: &[usize]) -> (usize, usize, usize) {
    let pred: HashSet<usize> = predicted.iter().copied().collect();
    let gold: HashSet<usize> = gold.iter().copied().collect();
    let tp = pred.intersection(&gold).count();
    let fp = pred.len() - tp;
    let fn_ = gold.len() - tp;
    (tp, fp, fn_)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DedReport {
    pub kg1: PrfScores,
    pub kg2: PrfScores,
    /// Micro-average: counts pooled over both sides.
    pub pooled: PrfScores,
}

/// Precision/recall/F1 with dangling as the positive class, per side and
/// pooled.
pub fn ded_scores(pred: &DedPrediction, gold: &GoldStandard) -> DedReport {
    let (tp1, fp1, fn1) = side_counts(&pred.dangling1, &gold.dangling1);
    let (tp2, fp2, fn2) = side_counts(&pred.dangling2, &gold.dangling2);
    DedReport {
        kg1: prf(tp1, fp1, fn1),
        kg2: prf(tp2, fp2, fn2),
        pooled: prf(tp1 + tp2, fp1 + fp2, fn1 + fn2),
    }
}

/// Supervised-threshold dangling baseline for one KG side: sweep candidate
/// thresholds over the distinct nearest-neighbor distances of the training
/// entities (plus "everything dangling"), keep the one maximizing training
/// F1, and predict dangling wherever the distance exceeds it.
pub fn distance_threshold_baseline(
    nn_distance: &[f64],
    training: &[(usize, bool)],
) -> Result<(f64, Vec<usize>)> {
    if training.is_empty() {
        return Err(SotError::Config(
            "distance-threshold baseline needs labeled training entities".into(),
        ));
    }
    let mut candidates: Vec<f64> = training.iter().map(|&(id, _)| nn_distance[id]).collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    candidates.insert(0, f64::NEG_INFINITY);

    let mut best: Option<(f64, f64)> = None; // (f1, threshold)
    for &tau in &candidates {
        let mut tp = 0;
        let mut fp = 0;
        let mut fn_ = 0;
        for &(id, dangling) in training {
            let predicted = nn_distance[id] > tau;
            match (predicted, dangling) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
        let f1 = prf(tp, fp, fn_).f1;
        let better = match best {
            None => true,
            Some((bf, _)) => f1 > bf,
        };
        if better {
            best = Some((f1, tau));
        }
    }
    let (_, tau) = best.unwrap();
    let predicted = (0..nn_distance.len())
        .filter(|&id| nn_distance[id] > tau)
        .collect();
    Ok((tau, predicted))
}

/// The JSON metrics report the pipeline emits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub hits1_relaxed: f64,
    pub hits1_practical: f64,
    pub hits10: f64,
    pub mrr: f64,
    /// Matched accuracy of the transport solution (practical sense).
    pub solver_hits1_practical: f64,
    /// Matched accuracy of the greedy nearest-neighbor arm on the same costs.
    pub greedy_hits1_practical: f64,
    pub ded: DedReport,
}

impl MetricsReport {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| SotError::Config(format!("serializing metrics: {e}")))?;
        crate::kg::write_file(path, text.as_bytes())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = crate::kg::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| SotError::parse(path, 0, format!("bad metrics JSON: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gold(pairs: Vec<(usize, usize)>, d1: Vec<usize>, d2: Vec<usize>) -> GoldStandard {
        GoldStandard {
            pairs,
            dangling1: d1,
            dangling2: d2,
        }
    }

    #[test]
    fn perfect_rankings_hit_everything() {
        let rankings = RankingTable {
            rows: vec![(0, vec![0, 1, 2]), (1, vec![1, 0, 2])],
        };
        let g = gold(vec![(0, 0), (1, 1)], vec![], vec![]);
        assert_eq!(hits_at_k(&rankings, &g, 1, Setting::Practical).unwrap(), 1.0);
        assert_eq!(mrr(&rankings, &g, Setting::Practical).unwrap(), 1.0);
    }

    #[test]
    fn reversed_rankings_hit_nothing() {
        let rankings = RankingTable {
            rows: vec![(0, vec![2, 1, 0]), (1, vec![2, 0, 1])],
        };
        let g = gold(vec![(0, 0), (1, 1)], vec![], vec![]);
        assert_eq!(hits_at_k(&rankings, &g, 1, Setting::Practical).unwrap(), 0.0);
    }

    #[test]
    fn relaxed_filtering_promotes_gold_targets() {
        // Sources 0 and 1 have their gold target first; source 2's gold
        // target hides behind two non-gold candidates that relaxed filtering
        // removes.
        let rankings = RankingTable {
            rows: vec![
                (0, vec![0, 1, 3, 4]),
                (1, vec![1, 0, 3, 4]),
                (2, vec![3, 4, 2, 0]),
            ],
        };
        let g = gold(vec![(0, 0), (1, 1), (2, 2)], vec![], vec![]);
        let relaxed = hits_at_k(&rankings, &g, 1, Setting::Relaxed).unwrap();
        let practical = hits_at_k(&rankings, &g, 1, Setting::Practical).unwrap();
        assert_eq!(relaxed, 1.0);
        assert!((practical - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn mrr_hand_computation() {
        // ranks 1 and 2 -> (1 + 0.5) / 2 = 0.75
        let rankings = RankingTable {
            rows: vec![(0, vec![0, 1]), (1, vec![0, 1])],
        };
        let g = gold(vec![(0, 0), (1, 1)], vec![], vec![]);
        assert_eq!(mrr(&rankings, &g, Setting::Practical).unwrap(), 0.75);

        // four sources with ranks 1, 2, 4, 1
        let rankings = RankingTable {
            rows: vec![
                (0, vec![0, 1, 2, 3]),
                (1, vec![0, 1, 2, 3]),
                (2, vec![0, 1, 3, 2]),
                (3, vec![3, 0, 1, 2]),
            ],
        };
        let g = gold(vec![(0, 0), (1, 1), (2, 2), (3, 3)], vec![], vec![]);
        let expect = (1.0 + 0.5 + 0.25 + 1.0) / 4.0;
        assert!((mrr(&rankings, &g, Setting::Practical).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn missing_gold_source_is_an_error() {
        let rankings = RankingTable {
            rows: vec![(0, vec![0])],
        };
        let g = gold(vec![(0, 0), (7, 0)], vec![], vec![]);
        let err = hits_at_k(&rankings, &g, 1, Setting::Practical).unwrap_err();
        assert!(err.to_string().contains('7'));
    }

    #[test]
    fn ded_exact_prediction() {
        let g = gold(vec![], vec![1, 2], vec![0]);
        let pred = DedPrediction {
            dangling1: vec![1, 2],
            dangling2: vec![0],
        };
        let r = ded_scores(&pred, &g);
        assert_eq!(
            (r.pooled.precision, r.pooled.recall, r.pooled.f1),
            (1.0, 1.0, 1.0)
        );
    }

    #[test]
    fn ded_empty_prediction_flags() {
        let g = gold(vec![], vec![1], vec![]);
        let pred = DedPrediction {
            dangling1: vec![],
            dangling2: vec![],
        };
        let r = ded_scores(&pred, &g);
        assert!(r.kg1.empty_prediction);
        assert_eq!((r.kg1.precision, r.kg1.recall, r.kg1.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn ded_formula_on_counts() {
        let s = prf(8, 2, 2);
        assert!((s.precision - 0.8).abs() < 1e-12);
        assert!((s.recall - 0.8).abs() < 1e-12);
        assert!((s.f1 - 0.8).abs() < 1e-12);
    }

    #[test]
    fn f1_is_zero_whenever_tp_is_zero() {
        for (fp, fn_) in [(0usize, 3usize), (4, 0), (2, 5)] {
            assert_eq!(prf(0, fp, fn_).f1, 0.0);
        }
    }

    #[test]
    fn threshold_baseline_separable_case() {
        // matchable entities at distance 0.1, dangling at 0.9
        let nn = vec![0.1, 0.1, 0.9, 0.9];
        let training = vec![(0, false), (1, false), (2, true), (3, true)];
        let (tau, pred) = distance_threshold_baseline(&nn, &training).unwrap();
        assert_eq!(pred, vec![2, 3]);
        assert!(tau >= 0.1 && tau < 0.9);
    }

    #[test]
    fn threshold_baseline_degenerate_equal_distances() {
        let nn = vec![0.5, 0.5, 0.5];
        // two dangling, one matchable: all-dangling F1 = 0.8 beats
        // none-dangling F1 = 0 -> everything predicted dangling.
        let training = vec![(0, true), (1, true), (2, false)];
        let (_, pred) = distance_threshold_baseline(&nn, &training).unwrap();
        assert_eq!(pred, vec![0, 1, 2]);
    }

    #[test]
    fn threshold_baseline_matches_exhaustive_sweep() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let nn: Vec<f64> = (0..50).map(|_| rng.gen_range(0.0..1.0)).collect();
        let training: Vec<(usize, bool)> = (0..30).map(|i| (i, rng.gen_bool(0.4))).collect();
        let (tau, _) = distance_threshold_baseline(&nn, &training).unwrap();

        let f1_at = |tau: f64| -> f64 {
            let (mut tp, mut fp, mut fn_) = (0, 0, 0);
            for &(i, d) in &training {
                match (nn[i] > tau, d) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    _ => {}
                }
            }
            prf(tp, fp, fn_).f1
        };
        let mut cands: Vec<f64> = training.iter().map(|&(i, _)| nn[i]).collect();
        cands.push(f64::NEG_INFINITY);
        let best = cands
            .iter()
            .map(|&t| f1_at(t))
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((f1_at(tau) - best).abs() < 1e-12);
    }

    #[test]
    fn baseline_requires_training_labels() {
        assert!(distance_threshold_baseline(&[0.5], &[]).is_err());
    }

    proptest! {
        #[test]
        fn hits_monotone_in_k_and_relaxed_dominates(seed in any::<u64>()) {
            use rand::{seq::SliceRandom, Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(2usize..8);
            let mut rows = Vec::new();
            for i in 0..n {
                let mut cands: Vec<usize> = (0..n).collect();
                cands.shuffle(&mut rng);
                rows.push((i, cands));
            }
            let rankings = RankingTable { rows };
            let pairs: Vec<(usize, usize)> = (0..n)
                .filter(|_| rng.gen_bool(0.7))
                .map(|i| (i, (i + 1) % n))
                .collect();
            prop_assume!(!pairs.is_empty());
            let g = gold(pairs, vec![], vec![]);

            let mut last = 0.0;
            for k in 1..=n {
                let h = hits_at_k(&rankings, &g, k, Setting::Practical).unwrap();
                prop_assert!(h + 1e-12 >= last);
                last = h;
                let relaxed = hits_at_k(&rankings, &g, k, Setting::Relaxed).unwrap();
                prop_assert!(relaxed + 1e-12 >= h);
            }
            let m = mrr(&rankings, &g, Setting::Practical).unwrap();
            let h1 = hits_at_k(&rankings, &g, 1, Setting::Practical).unwrap();
            prop_assert!(m + 1e-12 >= h1 && m <= 1.0 + 1e-12);
        }
    }
}
