//! Branch-and-cut over [`LpProblem`]s with integrality flags.
//!
//! The search keeps an active node list, prunes nodes whose relaxation bound
//! meets the incumbent, accepts integral relaxation solutions, and otherwise
//! branches on the most fractional variable by appending `x <= floor` /
//! `x >= ceil` rows. Cutting planes enter through an optional hook called on
//! every fractional relaxation solution; the default pipeline passes none.

use crate::error::{Result, SotError};
use crate::solver::simplex::{simplex_solve, LpProblem, LpRow, Sense, SimplexOutcome};

/// Generates valid inequalities violated by the given relaxation solution;
/// an empty return ends the cut loop for the node.
pub type CutGenerator<'a> = dyn Fn(&LpProblem, &[f64]) -> Vec<LpRow> + 'a;

#[derive(Debug, Clone)]
pub struct MipOptions {
    pub node_budget: usize,
    pub integrality_tol: f64,
    pub max_cut_rounds: usize,
}

impl Default for MipOptions {
    fn default() -> Self {
        MipOptions {
            node_budget: 1_000_000,
            integrality_tol: 1e-6,
            max_cut_rounds: 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MipStatus {
    Optimal,
    NodeBudgetExceeded,
}

#[derive(Debug, Clone)]
pub struct MipResult {
    pub objective: f64,
    pub x: Vec<f64>,
    pub node_count: usize,
    pub status: MipStatus,
}

struct Node {
    extra_rows: Vec<LpRow>,
    bound: f64,
    depth: usize,
}

fn fractionality(v: f64) -> f64 {
    (v - v.round()).abs()
}

fn most_fractional(x: &[f64], integer: &[bool], tol: f64) -> Option<usize> {
    let mut best: Option<(f64, usize)> = None;
    for (i, &v) in x.iter().enumerate() {
        if !integer[i] {
            continue;
        }
        let f = fractionality(v);
        if f > tol {
            let better = match best {
                None => true,
                Some((bf, _)) => f > bf + 1e-15,
            };
            if better {
                best = Some((f, i));
            }
        }
    }
    best.map(|(_, i)| i)
}

/// Solve a mixed integer program to global optimality, or to the best
/// incumbent when the node budget runs out.
pub fn solve_mip(
    lp: &LpProblem,
    opts: &MipOptions,
    cuts: Option<&CutGenerator>,
) -> Result<MipResult> {
    lp.validate()?;
    let mut active = vec![Node {
        extra_rows: Vec::new(),
        bound: f64::NEG_INFINITY,
        depth: 0,
    }];
    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    let mut node_count = 0usize;

    while let Some(node) = active.pop() {
        if let Some((z_bar, _)) = &incumbent {
            if node.bound >= *z_bar - 1e-12 {
                continue;
            }
        }
        node_count += 1;
        if node_count > opts.node_budget {
            return match incumbent {
                Some((objective, x)) => Ok(MipResult {
                    objective,
                    x,
                    node_count: node_count - 1,
                    status: MipStatus::NodeBudgetExceeded,
                }),
                None => Err(SotError::NodeBudget {
                    budget: opts.node_budget,
                    incumbent: None,
                }),
            };
        }

        let mut local = lp.clone();
        local.rows.extend(node.extra_rows.iter().cloned());
        let mut relaxation = None;
        for round in 0..=opts.max_cut_rounds {
            match simplex_solve(&local)? {
                SimplexOutcome::Optimal { objective, x } => {
                    if let Some(g) = cuts {
                        if round < opts.max_cut_rounds
                            && most_fractional(&x, &local.integer, opts.integrality_tol).is_some()
                        {
                            let new_rows = g(&local, &x);
                            if !new_rows.is_empty() {
                                local.rows.extend(new_rows);
                                continue;
                            }
                        }
                    }
                    relaxation = Some((objective, x));
                }
                SimplexOutcome::Infeasible => {}
                SimplexOutcome::Unbounded => {
                    return Err(SotError::Solver(
                        "relaxation is unbounded; the integer program has no finite optimum"
                            .into(),
                    ));
                }
            }
            break;
        }

        let (z_l, x) = match relaxation {
            Some(r) => r,
            None => continue, // infeasible node
        };
        if let Some((z_bar, _)) = &incumbent {
            if z_l >= *z_bar - 1e-12 {
                continue;
            }
        }

        match most_fractional(&x, &lp.integer, opts.integrality_tol) {
            None => {
                // Integral: new incumbent; sweep dominated nodes.
                incumbent = Some((z_l, x));
                let z_bar = z_l;
                active.retain(|n| n.bound < z_bar - 1e-12);
            }
            Some(var) => {
                let v = x[var];
                let down = Node {
                    extra_rows: {
                        let mut rows = node.extra_rows.clone();
                        rows.push(LpRow::new(vec![(var, 1.0)], Sense::Le, v.floor()));
                        rows
                    },
                    bound: z_l,
                    depth: node.depth + 1,
                };
                let up = Node {
                    extra_rows: {
                        let mut rows = node.extra_rows.clone();
                        rows.push(LpRow::new(vec![(var, 1.0)], Sense::Ge, v.ceil()));
                        rows
                    },
                    bound: z_l,
                    depth: node.depth + 1,
                };
                // Depth-first: explore the rounding-nearest child first.
                if v - v.floor() >= 0.5 {
                    active.push(down);
                    active.push(up);
                } else {
                    active.push(up);
                    active.push(down);
                }
            }
        }
    }

    match incumbent {
        Some((objective, x)) => Ok(MipResult {
            objective,
            x,
            node_count,
            status: MipStatus::Optimal,
        }),
        None => Err(SotError::Solver("integer program is infeasible".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn binary_lp(obj: Vec<f64>, rows: Vec<LpRow>) -> LpProblem {
        let n = obj.len();
        let mut p = LpProblem::new(obj);
        for r in rows {
            p.push_row(r);
        }
        for v in 0..n {
            p.integer[v] = true;
            p.push_row(LpRow::new(vec![(v, 1.0)], Sense::Le, 1.0));
        }
        p
    }

    #[test]
    fn fractional_root_knapsack() {
        // max 8a + 11b + 6c + 4d s.t. 5a + 7b + 4c + 3d <= 14, binary.
        let p = binary_lp(
            vec![-8.0, -11.0, -6.0, -4.0],
            vec![LpRow::new(
                vec![(0, 5.0), (1, 7.0), (2, 4.0), (3, 3.0)],
                Sense::Le,
                14.0,
            )],
        );
        let r = solve_mip(&p, &MipOptions::default(), None).unwrap();
        assert_abs_diff_eq!(r.objective, -21.0, epsilon = 1e-9);
        assert!(r.node_count > 1, "root must have been fractional");
    }

    #[test]
    fn half_integral_pair() {
        // min -x - y s.t. 2x + 2y <= 3: LP root x=y=0.75, IP optimum -1.
        let p = binary_lp(
            vec![-1.0, -1.0],
            vec![LpRow::new(vec![(0, 2.0), (1, 2.0)], Sense::Le, 3.0)],
        );
        let r = solve_mip(&p, &MipOptions::default(), None).unwrap();
        assert_abs_diff_eq!(r.objective, -1.0, epsilon = 1e-9);
    }

    #[test]
    fn odd_cycle_vertex() {
        // min -(x+y+z) over the pairwise-conflict triangle: LP 0.5 each.
        let p = binary_lp(
            vec![-1.0, -1.0, -1.0],
            vec![
                LpRow::new(vec![(0, 1.0), (1, 1.0)], Sense::Le, 1.0),
                LpRow::new(vec![(1, 1.0), (2, 1.0)], Sense::Le, 1.0),
                LpRow::new(vec![(0, 1.0), (2, 1.0)], Sense::Le, 1.0),
            ],
        );
        let r = solve_mip(&p, &MipOptions::default(), None).unwrap();
        assert_abs_diff_eq!(r.objective, -1.0, epsilon = 1e-9);
    }

    #[test]
    fn general_integer_branching() {
        // min -x s.t. 2x <= 7, x integer -> x = 3.
        let mut p = LpProblem::new(vec![-1.0]);
        p.integer[0] = true;
        p.push_row(LpRow::new(vec![(0, 2.0)], Sense::Le, 7.0));
        let r = solve_mip(&p, &MipOptions::default(), None).unwrap();
        assert_abs_diff_eq!(r.objective, -3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(r.x[0], 3.0, epsilon = 1e-6);
    }

    #[test]
    fn infeasible_integer_program() {
        // 0 <= x <= 1 integer with x >= 0.4 and x <= 0.6.
        let mut p = LpProblem::new(vec![1.0]);
        p.integer[0] = true;
        p.push_row(LpRow::new(vec![(0, 1.0)], Sense::Ge, 0.4));
        p.push_row(LpRow::new(vec![(0, 1.0)], Sense::Le, 0.6));
        assert!(solve_mip(&p, &MipOptions::default(), None).is_err());
    }

    #[test]
    fn node_budget_returns_incumbent_with_flag() {
        let p = binary_lp(
            vec![-8.0, -11.0, -6.0, -4.0],
            vec![LpRow::new(
                vec![(0, 5.0), (1, 7.0), (2, 4.0), (3, 3.0)],
                Sense::Le,
                14.0,
            )],
        );
        let opts = MipOptions {
            node_budget: 3,
            ..Default::default()
        };
        match solve_mip(&p, &opts, None) {
            Ok(r) => assert_eq!(r.status, MipStatus::NodeBudgetExceeded),
            Err(SotError::NodeBudget { .. }) => {} // no incumbent found in 3 nodes
            Err(other) => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn cut_hook_closes_fractional_root() {
        // Odd-cycle triangle again; the clique cut x+y+z <= 1 makes the
        // root integral, so a single node suffices.
        let p = binary_lp(
            vec![-1.0, -1.0, -1.0],
            vec![
                LpRow::new(vec![(0, 1.0), (1, 1.0)], Sense::Le, 1.0),
                LpRow::new(vec![(1, 1.0), (2, 1.0)], Sense::Le, 1.0),
                LpRow::new(vec![(0, 1.0), (2, 1.0)], Sense::Le, 1.0),
            ],
        );
        let clique_cut = |_lp: &LpProblem, x: &[f64]| -> Vec<LpRow> {
            if x[0] + x[1] + x[2] > 1.0 + 1e-6 {
                vec![LpRow::new(
                    vec![(0, 1.0), (1, 1.0), (2, 1.0)],
                    Sense::Le,
                    1.0,
                )]
            } else {
                Vec::new()
            }
        };
        let r = solve_mip(&p, &MipOptions::default(), Some(&clique_cut)).unwrap();
        assert_abs_diff_eq!(r.objective, -1.0, epsilon = 1e-9);
        assert_eq!(r.node_count, 1);
    }
}
