//! Semi-constraint optimal transport: instance construction and solvers.
//!
//! One binary indicator exists per sparse cost entry, plus one virtual
//! indicator per real entity on each side; there is no variable linking the
//! two virtual entities. Every real entity is covered exactly once (by a
//! real match or by its virtual arc) while the virtual indicators carry no
//! marginal constraint of their own, which keeps the program feasible for
//! any side sizes.

pub mod baselines;
pub mod matching;
pub mod mip;
pub mod oracle;
pub mod simplex;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cost::{SparseCostMatrix, VirtualCosts};
use crate::error::{Result, SotError};
use mip::{solve_mip, CutGenerator, MipOptions, MipStatus};
use simplex::{LpProblem, LpRow, Sense};

pub use baselines::{daa_match, greedy_match, is_stable, BaselineMatching};
pub use oracle::brute_force_oracle;

/// A transport instance over a sparse cost pattern with virtual arcs priced
/// `alpha` (column side) and `beta` (row side).
#[derive(Debug, Clone)]
pub struct SotInstance<'a> {
    pub cost: &'a SparseCostMatrix,
    pub virtual_costs: VirtualCosts,
}

/// Variable layout of the MIP encoding: entry indicators first, then the
/// per-row virtual indicators, then the per-column ones.
impl<'a> SotInstance<'a> {
    pub fn num_vars(&self) -> usize {
        self.cost.num_entries() + self.cost.m + self.cost.n
    }

    fn row_virtual_var(&self, i: usize) -> usize {
        self.cost.num_entries() + i
    }

    fn col_virtual_var(&self, j: usize) -> usize {
        self.cost.num_entries() + self.cost.m + j
    }

    /// Encode as a mixed integer program: one equality per real entity, all
    /// indicators binary.
    pub fn to_lp(&self) -> LpProblem {
        let e = self.cost.num_entries();
        let (m, n) = (self.cost.m, self.cost.n);
        let mut objective = Vec::with_capacity(self.num_vars());
        for &(_, _, c) in &self.cost.entries {
            objective.push(c);
        }
        objective.extend(std::iter::repeat(self.virtual_costs.beta).take(m));
        objective.extend(std::iter::repeat(self.virtual_costs.alpha).take(n));
        let mut lp = LpProblem::new(objective);
        lp.integer = vec![true; lp.num_vars];

        let mut row_terms: Vec<Vec<(usize, f64)>> = (0..m)
            .map(|i| vec![(self.row_virtual_var(i), 1.0)])
            .collect();
        let mut col_terms: Vec<Vec<(usize, f64)>> = (0..n)
            .map(|j| vec![(self.col_virtual_var(j), 1.0)])
            .collect();
        for (idx, &(i, j, _)) in self.cost.entries.iter().enumerate() {
            row_terms[i].push((idx, 1.0));
            col_terms[j].push((idx, 1.0));
        }
        for terms in row_terms {
            lp.push_row(LpRow::new(terms, Sense::Eq, 1.0));
        }
        for terms in col_terms {
            lp.push_row(LpRow::new(terms, Sense::Eq, 1.0));
        }
        debug_assert_eq!(lp.num_vars, e + m + n);
        lp
    }
}

pub fn build_instance(cost: &SparseCostMatrix, virtual_costs: VirtualCosts) -> SotInstance<'_> {
    SotInstance {
        cost,
        virtual_costs,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    NodeBudgetExceeded,
}

/// Which relaxation engine the solver runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpRoute {
    /// Tableau simplex for desk-scale instances, matching route beyond.
    Auto,
    /// Branch-and-cut over the dense-tableau simplex.
    Simplex,
    /// Successive-shortest-path matching (root relaxation is integral for
    /// this problem class, so the tree never opens).
    Matching,
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub route: LpRoute,
    pub mip: MipOptions,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            route: LpRoute::Auto,
            mip: MipOptions::default(),
        }
    }
}

impl SolveOptions {
    pub fn with_route(route: LpRoute) -> Self {
        SolveOptions {
            route,
            ..Default::default()
        }
    }

    pub fn with_node_budget(mut self, budget: usize) -> Self {
        self.mip.node_budget = budget;
        self
    }
}

/// Joint alignment and dangling solution. Every row index appears exactly
/// once in `matched` or `dangling1`, every column index exactly once in
/// `matched` or `dangling2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentSolution {
    pub matched: Vec<(usize, usize)>,
    pub dangling1: Vec<usize>,
    pub dangling2: Vec<usize>,
    pub objective: f64,
    pub node_count: usize,
    pub status: SolveStatus,
}

impl AssignmentSolution {
    /// Check the exact-cover invariant and that the stored objective equals
    /// its reconstruction from the matched costs and virtual counts.
    pub fn validate(&self, cost: &SparseCostMatrix, vc: VirtualCosts) -> Result<()> {
        let mut row_seen = vec![0usize; cost.m];
        let mut col_seen = vec![0usize; cost.n];
        for &(i, j) in &self.matched {
            if cost.get(i, j).is_none() {
                return Err(SotError::Solver(format!(
                    "matched pair ({i}, {j}) is not a present cost entry"
                )));
            }
            row_seen[i] += 1;
            col_seen[j] += 1;
        }
        for &i in &self.dangling1 {
            row_seen[i] += 1;
        }
        for &j in &self.dangling2 {
            col_seen[j] += 1;
        }
        if row_seen.iter().any(|&c| c != 1) || col_seen.iter().any(|&c| c != 1) {
            return Err(SotError::Solver(
                "solution does not partition the entity sets".into(),
            ));
        }
        let expected = reconstruct_objective(cost, vc, &self.matched);
        if (expected - self.objective).abs() > 1e-9 {
            return Err(SotError::Solver(format!(
                "objective {} differs from reconstruction {}",
                self.objective, expected
            )));
        }
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| SotError::Solver(format!("serializing solution: {e}")))?;
        crate::kg::write_file(path, text.as_bytes())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = crate::kg::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| SotError::parse(path, 0, format!("bad solution JSON: {e}")))
    }
}

/// Matched costs summed in ascending row order plus the two virtual-arc
/// products; the oracle computes its objective the same way so optima agree
/// exactly.
pub fn reconstruct_objective(
    cost: &SparseCostMatrix,
    vc: VirtualCosts,
    matched: &[(usize, usize)],
) -> f64 {
    let mut pairs: Vec<(usize, usize)> = matched.to_vec();
    pairs.sort_unstable();
    let mut total = 0.0;
    for (i, j) in pairs {
        total += cost
            .get(i, j)
            .expect("matched pair must be a present entry");
    }
    let dangling1 = cost.m - matched.len();
    let dangling2 = cost.n - matched.len();
    total + vc.beta * dangling1 as f64 + vc.alpha * dangling2 as f64
}

fn resolve_route(instance: &SotInstance, route: LpRoute) -> LpRoute {
    match route {
        LpRoute::Auto => {
            let sides = instance.cost.m + instance.cost.n;
            if sides <= 200 && instance.num_vars() <= 5_000 {
                LpRoute::Simplex
            } else {
                LpRoute::Matching
            }
        }
        fixed => fixed,
    }
}

/// Solve a transport instance to global optimality.
pub fn branch_and_cut(instance: &SotInstance, opts: &SolveOptions) -> Result<AssignmentSolution> {
    branch_and_cut_with_cuts(instance, opts, None)
}

/// Same, with a cutting-plane hook forwarded to the tree search. The default
/// pipeline passes no generator: the root relaxation of this problem class
/// is already integral, so cuts only matter for externally supplied
/// programs.
pub fn branch_and_cut_with_cuts(
    instance: &SotInstance,
    opts: &SolveOptions,
    cuts: Option<&CutGenerator>,
) -> Result<AssignmentSolution> {
    let vc = instance.virtual_costs;
    let cost = instance.cost;
    match resolve_route(instance, opts.route) {
        LpRoute::Matching => {
            let m = matching::solve_matching(cost, vc);
            let objective = reconstruct_objective(cost, vc, &m.matched);
            let solution = AssignmentSolution {
                matched: m.matched,
                dangling1: m.dangling1,
                dangling2: m.dangling2,
                objective,
                node_count: 1,
                status: SolveStatus::Optimal,
            };
            solution.validate(cost, vc)?;
            Ok(solution)
        }
        _ => {
            let lp = instance.to_lp();
            let result = solve_mip(&lp, &opts.mip, cuts)?;
            let e = cost.num_entries();
            let matched: Vec<(usize, usize)> = cost
                .entries
                .iter()
                .enumerate()
                .filter(|&(idx, _)| result.x[idx] > 0.5)
                .map(|(_, &(i, j, _))| (i, j))
                .collect();
            let dangling1 = (0..cost.m).filter(|&i| result.x[e + i] > 0.5).collect();
            let dangling2 = (0..cost.n)
                .filter(|&j| result.x[e + cost.m + j] > 0.5)
                .collect();
            let objective = reconstruct_objective(cost, vc, &matched);
            let solution = AssignmentSolution {
                matched,
                dangling1,
                dangling2,
                objective,
                node_count: result.node_count,
                status: match result.status {
                    MipStatus::Optimal => SolveStatus::Optimal,
                    MipStatus::NodeBudgetExceeded => SolveStatus::NodeBudgetExceeded,
                },
            };
            solution.validate(cost, vc)?;
            Ok(solution)
        }
    }
}
