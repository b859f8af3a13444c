//! Sparse transport-cost construction and virtual-entity cost selection.
//!
//! Costs are Manhattan distances between enhanced embeddings, kept only for
//! each entity's top-K cheapest counterparts (union of row-wise and
//! column-wise top-K so both sides' candidates survive). Virtual-entity
//! costs are picked by a paired quantile grid search scored on the pseudo
//! entity pairs.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::collections::HashMap;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SotError};
use crate::metric::manhattan_distance;
use crate::solver::{branch_and_cut, build_instance, SolveOptions};
use crate::text::PseudoPairSet;

/// Strictly positive floor applied to stored costs; identical embeddings
/// would otherwise produce a zero cost, which the transport formulation
/// forbids.
pub const COST_FLOOR: f64 = 1e-9;

/// Cross-KG cost matrix restricted to a sparse candidate pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCostMatrix {
    pub m: usize,
    pub n: usize,
    /// `(i, j, c_ij)` sorted by `(i, j)`, all `c_ij > 0`.
    pub entries: Vec<(usize, usize, f64)>,
    row_index: Vec<Vec<usize>>,
    col_index: Vec<Vec<usize>>,
}

impl SparseCostMatrix {
    pub fn from_entries(m: usize, n: usize, mut entries: Vec<(usize, usize, f64)>) -> Result<Self> {
        entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_index = vec![Vec::new(); m];
        let mut col_index = vec![Vec::new(); n];
        for (idx, &(i, j, c)) in entries.iter().enumerate() {
            if i >= m || j >= n {
                return Err(SotError::Shape(format!(
                    "entry ({i}, {j}) outside {m}x{n} cost matrix"
                )));
            }
            if !(c > 0.0) {
                return Err(SotError::Shape(format!(
                    "cost at ({i}, {j}) must be strictly positive, got {c}"
                )));
            }
            if idx > 0 && entries[idx - 1].0 == i && entries[idx - 1].1 == j {
                return Err(SotError::Duplicate {
                    what: "cost entry".into(),
                    key: format!("({i}, {j})"),
                });
            }
            row_index[i].push(idx);
            col_index[j].push(idx);
        }
        Ok(SparseCostMatrix {
            m,
            n,
            entries,
            row_index,
            col_index,
        })
    }

    pub fn num_entries(&self) -> usize {
        self.entries.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.row_index[i]
            .iter()
            .map(move |&idx| (self.entries[idx].1, self.entries[idx].2))
    }

    pub fn col(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.col_index[j]
            .iter()
            .map(move |&idx| (self.entries[idx].0, self.entries[idx].2))
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.row_index[i]
            .iter()
            .find(|&&idx| self.entries[idx].1 == j)
            .map(|&idx| self.entries[idx].2)
    }

    /// TSV dump `i<TAB>j<TAB>cost`.
    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        let mut buf = String::new();
        for &(i, j, c) in &self.entries {
            buf.push_str(&format!("{i}\t{j}\t{c}\n"));
        }
        crate::kg::write_file(path, buf.as_bytes())
    }

    pub fn read_tsv(path: &Path, m: usize, n: usize) -> Result<Self> {
        let text = crate::kg::read_to_string(path)?;
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(SotError::parse(
                    path,
                    lineno + 1,
                    format!("expected 3 columns, got {}", cols.len()),
                ));
            }
            let parse = |s: &str| -> Result<f64> {
                s.parse()
                    .map_err(|_| SotError::parse(path, lineno + 1, format!("bad number {s:?}")))
            };
            let i = parse(cols[0])? as usize;
            let j = parse(cols[1])? as usize;
            entries.push((i, j, parse(cols[2])?));
        }
        SparseCostMatrix::from_entries(m, n, entries)
    }
}

/// JSON sidecar written next to a cost TSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostSidecar {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub delta: f64,
}

/// Costs of the virtual arcs: `alpha` prices sending a KG2 entity to the
/// virtual KG1 entity, `beta` the reverse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VirtualCosts {
    pub alpha: f64,
    pub beta: f64,
}

impl VirtualCosts {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && beta > 0.0) {
            return Err(SotError::Config(format!(
                "virtual costs must be positive, got alpha={alpha}, beta={beta}"
            )));
        }
        Ok(VirtualCosts { alpha, beta })
    }
}

/// Optional char-level cost term (the word+char variant): Manhattan distance
/// between character-bigram count vectors, normalized by the summed name
/// lengths.
#[derive(Debug, Clone)]
pub struct CharBigramPenalty {
    counts1: Vec<HashMap<(char, char), u32>>,
    counts2: Vec<HashMap<(char, char), u32>>,
    lens1: Vec<usize>,
    lens2: Vec<usize>,
    pub weight: f64,
}

impl CharBigramPenalty {
    pub fn new(names1: &[String], names2: &[String], weight: f64) -> Self {
        let build = |names: &[String]| -> (Vec<HashMap<(char, char), u32>>, Vec<usize>) {
            let mut counts = Vec::with_capacity(names.len());
            let mut lens = Vec::with_capacity(names.len());
            for name in names {
                let chars: Vec<char> = name.to_lowercase().chars().collect();
                let mut map = HashMap::new();
                for w in chars.windows(2) {
                    *map.entry((w[0], w[1])).or_insert(0u32) += 1;
                }
                counts.push(map);
                lens.push(chars.len());
            }
            (counts, lens)
        };
        let (counts1, lens1) = build(names1);
        let (counts2, lens2) = build(names2);
        CharBigramPenalty {
            counts1,
            counts2,
            lens1,
            lens2,
            weight,
        }
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (&self.counts1[i], &self.counts2[j]);
        let mut total = 0u64;
        for (bg, &ca) in a {
            let cb = b.get(bg).copied().unwrap_or(0);
            total += ca.abs_diff(cb) as u64;
        }
        for (bg, &cb) in b {
            if !a.contains_key(bg) {
                total += cb as u64;
            }
        }
        let denom = (self.lens1[i] + self.lens2[j]).max(1) as f64;
        self.weight * total as f64 / denom
    }
}

struct TopK {
    k: usize,
    // max-heap on (cost, index): keeps the k smallest.
    heap: BinaryHeap<HeapKey>,
}

#[derive(PartialEq)]
struct HeapKey(f64, usize);

impl Eq for HeapKey {}

impl Ord for HeapKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

impl PartialOrd for HeapKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl TopK {
    fn new(k: usize) -> Self {
        TopK {
            k,
            heap: BinaryHeap::with_capacity(k + 1),
        }
    }

    fn push(&mut self, cost: f64, index: usize) {
        self.heap.push(HeapKey(cost, index));
        if self.heap.len() > self.k {
            self.heap.pop();
        }
    }

    fn into_indices(self) -> Vec<usize> {
        self.heap.into_iter().map(|HeapKey(_, i)| i).collect()
    }
}

/// Build the sparse cost matrix from enhanced embeddings: the pattern is the
/// union of each row's K cheapest columns and each column's K cheapest rows;
/// values are Manhattan distances (plus the optional char-bigram term),
/// floored at [`COST_FLOOR`]. K larger than a side is clamped.
pub fn build_cost(
    e1: &Array2<f64>,
    e2: &Array2<f64>,
    k: usize,
    char_penalty: Option<&CharBigramPenalty>,
) -> Result<SparseCostMatrix> {
    if e1.ncols() != e2.ncols() {
        return Err(SotError::Shape(format!(
            "embedding dimensions differ: {} vs {}",
            e1.ncols(),
            e2.ncols()
        )));
    }
    if k == 0 {
        return Err(SotError::Config("top-K must be at least 1".into()));
    }
    let (m, n) = (e1.nrows(), e2.nrows());
    let k = k.min(m.max(1)).min(n.max(1)).max(1);
    let mut col_top: Vec<TopK> = (0..n).map(|_| TopK::new(k)).collect();
    let mut keep = vec![false; m * n];
    for i in 0..m {
        let ai = e1.row(i);
        let mut row_top = TopK::new(k);
        for j in 0..n {
            let mut d = manhattan_distance(ai.as_slice().unwrap(), e2.row(j).as_slice().unwrap());
            if let Some(p) = char_penalty {
                d += p.distance(i, j);
            }
            let d = d.max(COST_FLOOR);
            row_top.push(d, j);
            col_top[j].push(d, i);
        }
        for j in row_top.into_indices() {
            keep[i * n + j] = true;
        }
    }
    for (j, top) in col_top.into_iter().enumerate() {
        for i in top.into_indices() {
            keep[i * n + j] = true;
        }
    }
    let mut entries = Vec::new();
    for i in 0..m {
        let ai = e1.row(i);
        for j in 0..n {
            if keep[i * n + j] {
                let mut d =
                    manhattan_distance(ai.as_slice().unwrap(), e2.row(j).as_slice().unwrap());
                if let Some(p) = char_penalty {
                    d += p.distance(i, j);
                }
                entries.push((i, j, d.max(COST_FLOOR)));
            }
        }
    }
    SparseCostMatrix::from_entries(m, n, entries)
}

/// Row and column minima over the present sparse entries; sides with no
/// entries get an infinity sentinel and are listed.
#[derive(Debug, Clone, PartialEq)]
pub struct MinCostProfiles {
    pub row_min: Vec<f64>,
    pub col_min: Vec<f64>,
    pub empty_rows: Vec<usize>,
    pub empty_cols: Vec<usize>,
}

pub fn min_cost_profiles(c: &SparseCostMatrix) -> MinCostProfiles {
    let mut row_min = vec![f64::INFINITY; c.m];
    let mut col_min = vec![f64::INFINITY; c.n];
    for &(i, j, v) in &c.entries {
        if v < row_min[i] {
            row_min[i] = v;
        }
        if v < col_min[j] {
            col_min[j] = v;
        }
    }
    let empty_rows = (0..c.m).filter(|&i| row_min[i].is_infinite()).collect();
    let empty_cols = (0..c.n).filter(|&j| col_min[j].is_infinite()).collect();
    MinCostProfiles {
        row_min,
        col_min,
        empty_rows,
        empty_cols,
    }
}

/// Linear-interpolation quantile of already-sorted values.
fn quantile_sorted(sorted: &[f64], level: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = level * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

/// The ten mid-quantile levels used per axis: 0.05, 0.15, ..., 0.95.
pub fn quantile_levels(grid_size: usize) -> Vec<f64> {
    (0..grid_size)
        .map(|i| (2 * i + 1) as f64 / (2 * grid_size) as f64)
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridCell {
    pub alpha: f64,
    pub beta: f64,
    pub hits_on_pairs: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub chosen: VirtualCosts,
    pub hits_on_pairs: f64,
    pub cells: Vec<GridCell>,
}

/// Paired quantile grid search for the virtual costs. Candidate alphas are
/// quantiles of the finite column minima, candidate betas quantiles of the
/// finite row minima; each pair is scored by solving the transport on
/// `c_small` and measuring Hits@1 over the pseudo pairs. Ties go to the
/// larger alpha, then the larger beta.
pub fn grid_search_virtual_costs(
    c_small: &SparseCostMatrix,
    pseudo: &PseudoPairSet,
    grid_size: usize,
    solve_opts: &SolveOptions,
) -> Result<GridSearchResult> {
    let profiles = min_cost_profiles(c_small);
    let mut row_sorted: Vec<f64> = profiles
        .row_min
        .iter()
        .copied()
        .filter(|v| v.is_finite())
        .collect();
    let mut col_sorted: Vec<f64> = profiles
        .col_min
        .iter()
        .copied()
        .filter(|v| v.is_finite())
        .collect();
    if row_sorted.is_empty() || col_sorted.is_empty() {
        return Err(SotError::Config(
            "cost matrix has an entirely empty side; cannot derive quantiles".into(),
        ));
    }
    row_sorted.sort_by(f64::total_cmp);
    col_sorted.sort_by(f64::total_cmp);
    let levels = quantile_levels(grid_size);
    let alphas: Vec<f64> = levels.iter().map(|&q| quantile_sorted(&col_sorted, q)).collect();
    let betas: Vec<f64> = levels.iter().map(|&q| quantile_sorted(&row_sorted, q)).collect();

    if pseudo.is_empty() {
        log::warn!(
            "pseudo pair set is empty; falling back to the median quantile for alpha and beta"
        );
        let mid = (grid_size - 1) / 2;
        let chosen = VirtualCosts::new(alphas[mid], betas[mid])?;
        return Ok(GridSearchResult {
            chosen,
            hits_on_pairs: 0.0,
            cells: Vec::new(),
        });
    }

    let mut cells = Vec::with_capacity(grid_size * grid_size);
    let mut best: Option<(f64, f64, f64)> = None; // (hits, alpha, beta)
    for &alpha in &alphas {
        for &beta in &betas {
            let vc = VirtualCosts::new(alpha, beta)?;
            let instance = build_instance(c_small, vc);
            let solution = branch_and_cut(&instance, solve_opts)?;
            let hits = hits_on_pseudo_pairs(&solution.matched, pseudo);
            cells.push(GridCell {
                alpha,
                beta,
                hits_on_pairs: hits,
            });
            let better = match best {
                None => true,
                Some((bh, ba, bb)) => {
                    hits > bh || (hits == bh && (alpha > ba || (alpha == ba && beta > bb)))
                }
            };
            if better {
                best = Some((hits, alpha, beta));
            }
        }
    }
    let (hits, alpha, beta) = best.unwrap();
    Ok(GridSearchResult {
        chosen: VirtualCosts::new(alpha, beta)?,
        hits_on_pairs: hits,
        cells,
    })
}

/// Fraction of pseudo pairs reproduced exactly by a matching.
pub fn hits_on_pseudo_pairs(matched: &[(usize, usize)], pseudo: &PseudoPairSet) -> f64 {
    if pseudo.is_empty() {
        return 0.0;
    }
    let hit = pseudo
        .pairs
        .iter()
        .filter(|p| matched.contains(p))
        .count();
    hit as f64 / pseudo.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};

    #[test]
    fn single_entry_profiles() {
        let c = SparseCostMatrix::from_entries(1, 1, vec![(0, 0, 0.7)]).unwrap();
        let p = min_cost_profiles(&c);
        assert_eq!(p.row_min, vec![0.7]);
        assert_eq!(p.col_min, vec![0.7]);
        assert!(p.empty_rows.is_empty());
    }

    #[test]
    fn row_minimum_over_entries() {
        let c = SparseCostMatrix::from_entries(1, 2, vec![(0, 0, 0.3), (0, 1, 0.9)]).unwrap();
        let p = min_cost_profiles(&c);
        assert_eq!(p.row_min, vec![0.3]);
    }

    #[test]
    fn empty_rows_get_sentinel() {
        let c = SparseCostMatrix::from_entries(2, 1, vec![(0, 0, 0.5)]).unwrap();
        let p = min_cost_profiles(&c);
        assert!(p.row_min[1].is_infinite());
        assert_eq!(p.empty_rows, vec![1]);
    }

    #[test]
    fn dense_k_keeps_every_pair() {
        let e1 = array![[0.0], [1.0], [2.0]];
        let e2 = array![[0.5], [1.5], [2.5]];
        let c = build_cost(&e1, &e2, 3, None).unwrap();
        assert_eq!(c.num_entries(), 9);
    }

    #[test]
    fn k1_pattern_is_union_of_row_and_col_argmins() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let e1 = Array2::from_shape_fn((4, 3), |_| rng.gen_range(-1.0..1.0));
            let e2 = Array2::from_shape_fn((4, 3), |_| rng.gen_range(-1.0..1.0));
            let c = build_cost(&e1, &e2, 1, None).unwrap();
            // brute-force expectation
            let dist = |i: usize, j: usize| {
                manhattan_distance(
                    e1.row(i).as_slice().unwrap(),
                    e2.row(j).as_slice().unwrap(),
                )
                .max(COST_FLOOR)
            };
            let mut expected = std::collections::BTreeSet::new();
            for i in 0..4 {
                let j = (0..4)
                    .min_by(|&a, &b| dist(i, a).total_cmp(&dist(i, b)).then(a.cmp(&b)))
                    .unwrap();
                expected.insert((i, j));
            }
            for j in 0..4 {
                let i = (0..4)
                    .min_by(|&a, &b| dist(a, j).total_cmp(&dist(b, j)).then(a.cmp(&b)))
                    .unwrap();
                expected.insert((i, j));
            }
            let got: std::collections::BTreeSet<(usize, usize)> =
                c.entries.iter().map(|&(i, j, _)| (i, j)).collect();
            assert_eq!(got, expected);
        }
    }

    #[test]
    fn identical_embeddings_hit_the_floor() {
        let e = array![[1.0, 2.0]];
        let c = build_cost(&e, &e, 1, None).unwrap();
        assert_eq!(c.entries[0].2, COST_FLOOR);
    }

    #[test]
    fn quantile_candidates_are_nondecreasing() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut vals: Vec<f64> = (0..37).map(|_| rng.gen_range(0.01..5.0)).collect();
        vals.sort_by(f64::total_cmp);
        let levels = quantile_levels(10);
        let qs: Vec<f64> = levels.iter().map(|&q| quantile_sorted(&vals, q)).collect();
        for w in qs.windows(2) {
            assert!(w[0] <= w[1]);
        }
    }

    #[test]
    fn char_bigram_distance_zero_for_identical_names() {
        let names = vec!["heart attack".to_string()];
        let p = CharBigramPenalty::new(&names, &names, 1.0);
        assert_eq!(p.distance(0, 0), 0.0);
        let other = vec!["heart failure".to_string()];
        let q = CharBigramPenalty::new(&names, &other, 1.0);
        assert!(q.distance(0, 0) > 0.0);
    }

    #[test]
    fn cost_tsv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let c = SparseCostMatrix::from_entries(2, 2, vec![(0, 0, 0.25), (1, 1, 0.5)]).unwrap();
        let path = dir.path().join("cost.tsv");
        c.write_tsv(&path).unwrap();
        let back = SparseCostMatrix::read_tsv(&path, 2, 2).unwrap();
        assert_eq!(c, back);
    }
}
