//! Baseline alignment schemes: nearest-neighbor greedy and deferred
//! acceptance (Gale-Shapley). Both rank counterparts by ascending cost and
//! neither reasons about virtual costs; they are the ablation arms the
//! transport solver is compared against.

use crate::cost::SparseCostMatrix;

/// A matching produced by a baseline. `matched` may repeat columns for the
/// greedy scheme; `unmatched1`/`unmatched2` collect entities left without a
/// counterpart.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BaselineMatching {
    pub matched: Vec<(usize, usize)>,
    pub unmatched1: Vec<usize>,
    pub unmatched2: Vec<usize>,
}

impl BaselineMatching {
    /// Column assigned to row `i`, if any.
    pub fn assignment_of(&self, i: usize) -> Option<usize> {
        self.matched
            .iter()
            .find(|&&(r, _)| r == i)
            .map(|&(_, j)| j)
    }
}

/// Assign every row its cheapest present column, ignoring conflicts. Ties go
/// to the smaller column index. Rows without entries stay unmatched.
pub fn greedy_match(cost: &SparseCostMatrix) -> BaselineMatching {
    let mut matched = Vec::new();
    let mut unmatched1 = Vec::new();
    let mut col_taken = vec![false; cost.n];
    for i in 0..cost.m {
        let best = cost
            .row(i)
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        match best {
            Some((j, _)) => {
                matched.push((i, j));
                col_taken[j] = true;
            }
            None => unmatched1.push(i),
        }
    }
    let unmatched2 = (0..cost.n).filter(|&j| !col_taken[j]).collect();
    BaselineMatching {
        matched,
        unmatched1,
        unmatched2,
    }
}

/// One-to-one stable matching over the present entries, rows proposing in
/// ascending cost order, columns holding on to the cheaper proposal (ties to
/// the smaller row index). Entities whose preference lists run out stay
/// unmatched.
pub fn daa_match(cost: &SparseCostMatrix) -> BaselineMatching {
    let mut prefs: Vec<Vec<(usize, f64)>> = (0..cost.m)
        .map(|i| {
            let mut row: Vec<(usize, f64)> = cost.row(i).collect();
            row.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            row
        })
        .collect();
    let mut next_proposal = vec![0usize; cost.m];
    let mut row_match: Vec<Option<usize>> = vec![None; cost.m];
    let mut col_match: Vec<Option<(usize, f64)>> = vec![None; cost.n];
    let mut queue: std::collections::VecDeque<usize> = (0..cost.m).collect();

    while let Some(i) = queue.pop_front() {
        if row_match[i].is_some() {
            continue;
        }
        while next_proposal[i] < prefs[i].len() {
            let (j, c) = prefs[i][next_proposal[i]];
            next_proposal[i] += 1;
            match col_match[j] {
                None => {
                    col_match[j] = Some((i, c));
                    row_match[i] = Some(j);
                    break;
                }
                Some((held, held_cost)) => {
                    // The column prefers the strictly cheaper proposer; on a
                    // tie it keeps its current match.
                    if c < held_cost {
                        col_match[j] = Some((i, c));
                        row_match[i] = Some(j);
                        row_match[held] = None;
                        queue.push_back(held);
                        break;
                    }
                }
            }
        }
        prefs[i].shrink_to_fit();
    }

    let matched: Vec<(usize, usize)> = (0..cost.m)
        .filter_map(|i| row_match[i].map(|j| (i, j)))
        .collect();
    let unmatched1 = (0..cost.m).filter(|&i| row_match[i].is_none()).collect();
    let unmatched2 = (0..cost.n).filter(|&j| col_match[j].is_none()).collect();
    BaselineMatching {
        matched,
        unmatched1,
        unmatched2,
    }
}

/// True when no row-column pair would both strictly prefer each other over
/// their current situation. Used by tests.
pub fn is_stable(cost: &SparseCostMatrix, matching: &BaselineMatching) -> bool {
    let mut row_cost = vec![f64::INFINITY; cost.m];
    let mut col_cost = vec![f64::INFINITY; cost.n];
    for &(i, j) in &matching.matched {
        let c = cost.get(i, j).expect("matched pair must be present");
        row_cost[i] = c;
        col_cost[j] = c;
    }
    for &(i, j, c) in &cost.entries {
        if c < row_cost[i] && c < col_cost[j] {
            return false;
        }
    }
    true
}
