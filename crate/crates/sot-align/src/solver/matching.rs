//! Scale route for transport instances: successive shortest augmenting
//! paths on the reduced matching problem.
//!
//! Substituting the virtual indicators out of the row/column equalities
//! turns the transport program into
//! `m*beta + n*alpha + min over partial matchings of sum (c_ij - alpha - beta)`,
//! so only edges with `c_ij < alpha + beta` can improve the objective. The
//! constraint matrix is a bipartite flow structure, hence the matching found
//! here is a vertex of the LP relaxation and integral by construction —
//! the same solution branch-and-cut reaches at the root on these instances,
//! obtained without touching a tableau.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::cost::{SparseCostMatrix, VirtualCosts};

#[derive(PartialEq)]
struct HeapEntry {
    dist: f64,
    node: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap; invert for smallest-distance-first.
        other
            .dist
            .total_cmp(&self.dist)
            .then(other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub(crate) struct MatchingSolution {
    pub matched: Vec<(usize, usize)>,
    pub dangling1: Vec<usize>,
    pub dangling2: Vec<usize>,
}

/// Minimize the transport objective by augmenting along profitable shortest
/// paths until none remains. Deterministic: all ties break on node index.
pub(crate) fn solve_matching(cost: &SparseCostMatrix, vc: VirtualCosts) -> MatchingSolution {
    let (m, n) = (cost.m, cost.n);
    let shift = vc.alpha + vc.beta;
    // Profitable edges only; dropping an edge with nonnegative adjusted
    // weight never hurts any matching.
    let mut row_edges: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
    for &(i, j, c) in &cost.entries {
        let w = c - shift;
        if w < 0.0 {
            row_edges[i].push((j, w));
        }
    }

    let mut row_match: Vec<Option<usize>> = vec![None; m];
    // Matched row and its edge weight, per column.
    let mut col_match: Vec<Option<(usize, f64)>> = vec![None; n];

    // Node ids: rows 0..m, columns m..m+n. Potentials keep reduced costs
    // nonnegative; unmatched rows stay at potential zero throughout.
    let total = m + n;
    let mut pi = vec![0.0f64; total];
    for i in 0..m {
        for &(j, w) in &row_edges[i] {
            let col = m + j;
            if w < pi[col] {
                pi[col] = w;
            }
        }
    }

    let mut dist = vec![f64::INFINITY; total];
    let mut pred: Vec<Option<usize>> = vec![None; total];
    let mut visited = vec![false; total];
    let mut reached: Vec<usize> = Vec::new();

    loop {
        for &v in &reached {
            dist[v] = f64::INFINITY;
            pred[v] = None;
            visited[v] = false;
        }
        reached.clear();

        // Lower bound over potentials of still-unmatched columns: once the
        // frontier distance exceeds best-so-far minus this bound no better
        // target can appear.
        let mut pi_min_free_col = f64::INFINITY;
        for j in 0..n {
            if col_match[j].is_none() && pi[m + j] < pi_min_free_col {
                pi_min_free_col = pi[m + j];
            }
        }
        if pi_min_free_col.is_infinite() {
            break; // every column matched; no augmenting path can end
        }

        let mut heap = BinaryHeap::new();
        for i in 0..m {
            if row_match[i].is_none() && !row_edges[i].is_empty() {
                dist[i] = 0.0;
                reached.push(i);
                heap.push(HeapEntry { dist: 0.0, node: i });
            }
        }

        let mut best_target: Option<(f64, usize)> = None;
        while let Some(HeapEntry { dist: d, node }) = heap.pop() {
            if visited[node] {
                continue;
            }
            if let Some((bc, _)) = best_target {
                if d + pi_min_free_col >= bc {
                    break; // no remaining node can start a cheaper path
                }
            }
            visited[node] = true;
            if node < m {
                let i = node;
                for &(j, w) in &row_edges[i] {
                    if row_match[i] == Some(j) {
                        continue;
                    }
                    let col = m + j;
                    let nd = d + (w + pi[i] - pi[col]);
                    if nd < dist[col] {
                        if dist[col].is_infinite() {
                            reached.push(col);
                        }
                        dist[col] = nd;
                        pred[col] = Some(i);
                        heap.push(HeapEntry { dist: nd, node: col });
                    }
                }
            } else {
                let j = node - m;
                match col_match[j] {
                    None => {
                        let true_cost = d + pi[node];
                        let better = match best_target {
                            None => true,
                            Some((bc, bn)) => {
                                true_cost < bc || (true_cost == bc && node < bn)
                            }
                        };
                        if better {
                            best_target = Some((true_cost, node));
                        }
                    }
                    Some((i, w)) => {
                        let nd = d + (-w + pi[node] - pi[i]);
                        if nd < dist[i] {
                            if dist[i].is_infinite() {
                                reached.push(i);
                            }
                            dist[i] = nd;
                            pred[i] = Some(node);
                            heap.push(HeapEntry { dist: nd, node: i });
                        }
                    }
                }
            }
        }

        let (true_cost, target) = match best_target {
            Some(t) => t,
            None => break,
        };
        if true_cost >= 0.0 {
            break; // augmenting would not decrease the objective
        }

        // Shift potentials: reached nodes by their distance capped at the
        // target's, unreached nodes by the target distance itself. This
        // keeps every residual reduced cost nonnegative.
        let d_target = dist[target];
        for v in pi.iter_mut() {
            *v += d_target;
        }
        for &v in &reached {
            pi[v] += dist[v].min(d_target) - d_target;
        }

        // Flip matches along the augmenting path (column-terminated).
        let mut node = target;
        loop {
            let i = pred[node].expect("augmenting path must start at a source row");
            let j = node - m;
            let w = edge_weight(&row_edges, i, j);
            let prev_col = row_match[i];
            row_match[i] = Some(j);
            col_match[j] = Some((i, w));
            match prev_col {
                None => break,
                Some(pc) => {
                    node = m + pc;
                    col_match[pc] = None;
                }
            }
        }
    }

    let matched: Vec<(usize, usize)> = (0..m)
        .filter_map(|i| row_match[i].map(|j| (i, j)))
        .collect();
    let dangling1 = (0..m).filter(|&i| row_match[i].is_none()).collect();
    let dangling2 = (0..n).filter(|&j| col_match[j].is_none()).collect();
    MatchingSolution {
        matched,
        dangling1,
        dangling2,
    }
}

fn edge_weight(row_edges: &[Vec<(usize, f64)>], i: usize, j: usize) -> f64 {
    row_edges[i]
        .iter()
        .find(|&&(jj, _)| jj == j)
        .map(|&(_, w)| w)
        .expect("matched edge must exist in the profitable edge set")
}
