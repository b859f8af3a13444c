//! Exhaustive-enumeration reference for small transport instances.
//!
//! Walks every way of choosing a partial injective matching over the present
//! entries and sending the rest to the virtual entities. Kept deliberately
//! separate from the branch-and-cut path: no LP, no potentials, just
//! enumeration, so it can serve as an independent oracle in tests.

use crate::cost::{SparseCostMatrix, VirtualCosts};
use crate::error::{Result, SotError};
use crate::solver::{AssignmentSolution, SolveStatus};

const MAX_SIDE: usize = 8;

pub fn brute_force_oracle(cost: &SparseCostMatrix, vc: VirtualCosts) -> Result<AssignmentSolution> {
    if cost.m > MAX_SIDE || cost.n > MAX_SIDE {
        return Err(SotError::Config(format!(
            "brute-force oracle is capped at {MAX_SIDE}x{MAX_SIDE}, got {}x{}",
            cost.m, cost.n
        )));
    }
    let mut search = Search {
        cost,
        vc,
        col_used: vec![false; cost.n],
        assigned: vec![None; cost.m],
        best: None,
    };
    search.recurse(0);
    let (_, assigned) = search.best.expect("all-virtual assignment always exists");

    let matched: Vec<(usize, usize)> = assigned
        .iter()
        .enumerate()
        .filter_map(|(i, j)| j.map(|j| (i, j)))
        .collect();
    let dangling1: Vec<usize> = assigned
        .iter()
        .enumerate()
        .filter_map(|(i, j)| j.is_none().then_some(i))
        .collect();
    let mut col_used = vec![false; cost.n];
    for &(_, j) in &matched {
        col_used[j] = true;
    }
    let dangling2: Vec<usize> = (0..cost.n).filter(|&j| !col_used[j]).collect();
    let objective = objective_of(cost, vc, &assigned);
    Ok(AssignmentSolution {
        matched,
        dangling1,
        dangling2,
        objective,
        node_count: 0,
        status: SolveStatus::Optimal,
    })
}

struct Search<'a> {
    cost: &'a SparseCostMatrix,
    vc: VirtualCosts,
    col_used: Vec<bool>,
    assigned: Vec<Option<usize>>,
    best: Option<(f64, Vec<Option<usize>>)>,
}

impl Search<'_> {
    fn recurse(&mut self, i: usize) {
        if i == self.cost.m {
            let obj = objective_of(self.cost, self.vc, &self.assigned);
            let better = match &self.best {
                None => true,
                Some((b, _)) => obj < *b,
            };
            if better {
                self.best = Some((obj, self.assigned.clone()));
            }
            return;
        }
        // Row i goes virtual...
        self.assigned[i] = None;
        self.recurse(i + 1);
        // ...or takes any free present column.
        let cols: Vec<usize> = self.cost.row(i).map(|(j, _)| j).collect();
        for j in cols {
            if !self.col_used[j] {
                self.col_used[j] = true;
                self.assigned[i] = Some(j);
                self.recurse(i + 1);
                self.assigned[i] = None;
                self.col_used[j] = false;
            }
        }
    }
}

/// Canonical objective: matched costs in ascending row order, then the two
/// virtual terms as single products. The solver reconstructs objectives the
/// same way, so optimal values compare bit-for-bit.
fn objective_of(cost: &SparseCostMatrix, vc: VirtualCosts, assigned: &[Option<usize>]) -> f64 {
    let mut total = 0.0;
    let mut matched = 0usize;
    for (i, j) in assigned.iter().enumerate() {
        if let Some(j) = j {
            total += cost.get(i, *j).expect("assigned pair must be present");
            matched += 1;
        }
    }
    let dangling1 = cost.m - matched;
    let dangling2 = cost.n - matched;
    total + vc.beta * dangling1 as f64 + vc.alpha * dangling2 as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_by_one_prefers_cheap_match() {
        let c = SparseCostMatrix::from_entries(1, 1, vec![(0, 0, 0.5)]).unwrap();
        let s = brute_force_oracle(&c, VirtualCosts::new(1.0, 1.0).unwrap()).unwrap();
        assert_eq!(s.matched, vec![(0, 0)]);
        assert_eq!(s.objective, 0.5);
    }

    #[test]
    fn all_virtual_when_matching_is_too_expensive() {
        // Every c_ij above alpha + beta: two virtual arcs beat any match.
        let c =
            SparseCostMatrix::from_entries(2, 2, vec![(0, 0, 3.0), (0, 1, 3.5), (1, 0, 4.0), (1, 1, 3.2)])
                .unwrap();
        let vc = VirtualCosts::new(0.9, 0.8).unwrap();
        let s = brute_force_oracle(&c, vc).unwrap();
        assert!(s.matched.is_empty());
        assert_eq!(s.dangling1, vec![0, 1]);
        assert_eq!(s.dangling2, vec![0, 1]);
        assert_eq!(s.objective, 0.8 * 2.0 + 0.9 * 2.0);
    }

    #[test]
    fn size_cap_is_enforced() {
        let entries = (0..9).map(|i| (i, 0, 1.0)).collect();
        let c = SparseCostMatrix::from_entries(9, 1, entries).unwrap();
        assert!(brute_force_oracle(&c, VirtualCosts::new(1.0, 1.0).unwrap()).is_err());
    }
}
