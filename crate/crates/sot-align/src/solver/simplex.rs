//! Dense-tableau primal simplex with a two-phase start.
//!
//! Pricing is Dantzig (most negative reduced cost); after a run of
//! degenerate pivots the solver permanently switches to Bland's rule, which
//! guarantees termination. Equality and `>=` rows get artificial variables
//! that phase one drives to zero.

use std::fmt::Write as _;

use crate::error::{Result, SotError};

/// Reduced-cost optimality tolerance.
pub const OPT_TOL: f64 = 1e-9;
/// Smallest usable pivot magnitude.
const PIVOT_EPS: f64 = 1e-10;
/// Phase-one objective above this value means infeasible.
const FEAS_TOL: f64 = 1e-7;
/// Consecutive degenerate pivots tolerated before switching to Bland's rule.
const DEGENERACY_LIMIT: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
pub struct LpRow {
    /// Sparse `(variable, coefficient)` pairs.
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl LpRow {
    pub fn new(coeffs: Vec<(usize, f64)>, sense: Sense, rhs: f64) -> Self {
        LpRow { coeffs, sense, rhs }
    }
}

/// `min c^T x` subject to the rows, with `x >= 0` throughout and per-variable
/// integrality flags consumed by the MIP layer.
#[derive(Debug, Clone)]
pub struct LpProblem {
    pub num_vars: usize,
    pub objective: Vec<f64>,
    pub rows: Vec<LpRow>,
    pub integer: Vec<bool>,
}

impl LpProblem {
    pub fn new(objective: Vec<f64>) -> Self {
        let num_vars = objective.len();
        LpProblem {
            num_vars,
            objective,
            rows: Vec::new(),
            integer: vec![false; num_vars],
        }
    }

    pub fn push_row(&mut self, row: LpRow) {
        self.rows.push(row);
    }

    pub fn validate(&self) -> Result<()> {
        if self.objective.len() != self.num_vars || self.integer.len() != self.num_vars {
            return Err(SotError::Shape(
                "objective/integrality length differs from variable count".into(),
            ));
        }
        for (r, row) in self.rows.iter().enumerate() {
            for &(v, _) in &row.coeffs {
                if v >= self.num_vars {
                    return Err(SotError::Shape(format!(
                        "row {r} references variable {v} outside 0..{}",
                        self.num_vars
                    )));
                }
            }
        }
        Ok(())
    }

    /// Plain text export in MPS-style ROWS/COLUMNS/RHS sections, for
    /// cross-checking against external solvers.
    pub fn to_mps(&self, name: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "NAME          {name}");
        let _ = writeln!(out, "ROWS");
        let _ = writeln!(out, " N  COST");
        for (r, row) in self.rows.iter().enumerate() {
            let tag = match row.sense {
                Sense::Le => 'L',
                Sense::Eq => 'E',
                Sense::Ge => 'G',
            };
            let _ = writeln!(out, " {tag}  R{r}");
        }
        let _ = writeln!(out, "COLUMNS");
        for v in 0..self.num_vars {
            if self.objective[v] != 0.0 {
                let _ = writeln!(out, "    X{v}  COST  {}", self.objective[v]);
            }
            for (r, row) in self.rows.iter().enumerate() {
                for &(var, coef) in &row.coeffs {
                    if var == v && coef != 0.0 {
                        let _ = writeln!(out, "    X{v}  R{r}  {coef}");
                    }
                }
            }
        }
        let _ = writeln!(out, "RHS");
        for (r, row) in self.rows.iter().enumerate() {
            if row.rhs != 0.0 {
                let _ = writeln!(out, "    RHS  R{r}  {}", row.rhs);
            }
        }
        let _ = writeln!(out, "BOUNDS");
        for v in 0..self.num_vars {
            if self.integer[v] {
                let _ = writeln!(out, " LI BND  X{v}  0");
            }
        }
        out.push_str("ENDATA\n");
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SimplexOutcome {
    Optimal { objective: f64, x: Vec<f64> },
    Infeasible,
    Unbounded,
}

struct Tableau {
    // rows x (cols + 1); last column is the RHS.
    a: Vec<Vec<f64>>,
    cost: Vec<f64>, // length cols + 1; last entry is -objective
    basis: Vec<usize>,
    cols: usize,
    banned: Vec<bool>,
    bland: bool,
    degenerate_streak: usize,
}

impl Tableau {
    fn rhs(&self, r: usize) -> f64 {
        self.a[r][self.cols]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let inv = 1.0 / self.a[r][c];
        for v in self.a[r].iter_mut() {
            *v *= inv;
        }
        let pivot_row = self.a[r].clone();
        for (rr, row) in self.a.iter_mut().enumerate() {
            if rr == r {
                continue;
            }
            let factor = row[c];
            if factor != 0.0 {
                for (v, p) in row.iter_mut().zip(&pivot_row) {
                    *v -= factor * p;
                }
                row[c] = 0.0;
            }
        }
        let factor = self.cost[c];
        if factor != 0.0 {
            for (v, p) in self.cost.iter_mut().zip(&pivot_row) {
                *v -= factor * p;
            }
            self.cost[c] = 0.0;
        }
        self.basis[r] = c;
    }

    fn choose_entering(&self) -> Option<usize> {
        if self.bland {
            (0..self.cols).find(|&j| !self.banned[j] && self.cost[j] < -OPT_TOL)
        } else {
            let mut best = None;
            let mut best_val = -OPT_TOL;
            for j in 0..self.cols {
                if !self.banned[j] && self.cost[j] < best_val {
                    best_val = self.cost[j];
                    best = Some(j);
                }
            }
            best
        }
    }

    /// Min-ratio test; ties resolved toward the smallest basic variable
    /// index, which combines with Bland's entering rule to prevent cycling.
    fn choose_leaving(&self, c: usize) -> Option<usize> {
        let mut best: Option<(f64, usize, usize)> = None; // (ratio, basis var, row)
        for r in 0..self.a.len() {
            let coef = self.a[r][c];
            if coef > PIVOT_EPS {
                let ratio = (self.rhs(r).max(0.0)) / coef;
                let key = (ratio, self.basis[r], r);
                let better = match best {
                    None => true,
                    Some((br, bv, _)) => {
                        ratio < br - 1e-12 || ((ratio - br).abs() <= 1e-12 && self.basis[r] < bv)
                    }
                };
                if better {
                    best = Some(key);
                }
            }
        }
        best.map(|(_, _, r)| r)
    }

    fn run(&mut self, max_iters: usize) -> Result<bool> {
        for _ in 0..max_iters {
            let entering = match self.choose_entering() {
                Some(c) => c,
                None => return Ok(true), // optimal
            };
            let leaving = match self.choose_leaving(entering) {
                Some(r) => r,
                None => return Ok(false), // unbounded direction
            };
            let ratio = self.rhs(leaving).max(0.0) / self.a[leaving][entering];
            if ratio <= 1e-12 {
                self.degenerate_streak += 1;
                if self.degenerate_streak > DEGENERACY_LIMIT {
                    self.bland = true;
                }
            } else {
                self.degenerate_streak = 0;
            }
            self.pivot(leaving, entering);
        }
        Err(SotError::Solver("simplex iteration limit exceeded".into()))
    }
}

/// Solve an LP to a vertex optimum. Integrality flags are ignored here; the
/// MIP layer enforces them.
pub fn simplex_solve(lp: &LpProblem) -> Result<SimplexOutcome> {
    lp.validate()?;
    let m = lp.rows.len();
    let n = lp.num_vars;

    // Normalized rows: flip signs so every RHS is nonnegative.
    let mut senses = Vec::with_capacity(m);
    let mut dense_rows: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut rhs = Vec::with_capacity(m);
    for row in &lp.rows {
        let mut dense = vec![0.0; n];
        for &(v, c) in &row.coeffs {
            dense[v] += c;
        }
        let (dense, sense, b) = if row.rhs < 0.0 {
            let flipped = dense.iter().map(|v| -v).collect();
            let sense = match row.sense {
                Sense::Le => Sense::Ge,
                Sense::Eq => Sense::Eq,
                Sense::Ge => Sense::Le,
            };
            (flipped, sense, -row.rhs)
        } else {
            (dense, row.sense, row.rhs)
        };
        dense_rows.push(dense);
        senses.push(sense);
        rhs.push(b);
    }

    let num_slack = senses
        .iter()
        .filter(|s| matches!(s, Sense::Le | Sense::Ge))
        .count();
    let num_art = senses
        .iter()
        .filter(|s| matches!(s, Sense::Eq | Sense::Ge))
        .count();
    let cols = n + num_slack + num_art;

    let mut a = vec![vec![0.0; cols + 1]; m];
    let mut basis = vec![0usize; m];
    let mut art_cols = Vec::with_capacity(num_art);
    let mut next_slack = n;
    let mut next_art = n + num_slack;
    for r in 0..m {
        a[r][..n].copy_from_slice(&dense_rows[r]);
        a[r][cols] = rhs[r];
        match senses[r] {
            Sense::Le => {
                a[r][next_slack] = 1.0;
                basis[r] = next_slack;
                next_slack += 1;
            }
            Sense::Ge => {
                a[r][next_slack] = -1.0;
                next_slack += 1;
                a[r][next_art] = 1.0;
                basis[r] = next_art;
                art_cols.push(next_art);
                next_art += 1;
            }
            Sense::Eq => {
                a[r][next_art] = 1.0;
                basis[r] = next_art;
                art_cols.push(next_art);
                next_art += 1;
            }
        }
    }

    let max_iters = 10_000 + 200 * (m + 1) * (cols + 1).min(10_000);

    // Phase one: minimize the sum of artificials.
    if num_art > 0 {
        let mut cost = vec![0.0; cols + 1];
        for &c in &art_cols {
            cost[c] = 1.0;
        }
        // Zero out the basic (artificial) columns of the cost row.
        for r in 0..m {
            if cost[basis[r]] != 0.0 {
                let factor = cost[basis[r]];
                for j in 0..=cols {
                    cost[j] -= factor * a[r][j];
                }
            }
        }
        let mut t = Tableau {
            a,
            cost,
            basis,
            cols,
            banned: vec![false; cols],
            bland: false,
            degenerate_streak: 0,
        };
        let finished = t.run(max_iters)?;
        if !finished {
            return Err(SotError::Solver(
                "phase-one relaxation reported unbounded".into(),
            ));
        }
        let phase1_obj = -t.cost[cols];
        if phase1_obj > FEAS_TOL {
            return Ok(SimplexOutcome::Infeasible);
        }
        // Drive remaining basic artificials out, or mark their rows redundant.
        let is_art = |c: usize| c >= n + num_slack;
        for r in 0..m {
            if is_art(t.basis[r]) {
                let target = (0..n + num_slack)
                    .find(|&jj| !t.banned[jj] && t.a[r][jj].abs() > PIVOT_EPS);
                if let Some(jj) = target {
                    t.pivot(r, jj);
                }
                // If no pivot exists the row is redundant; the artificial
                // stays basic at value zero and its column stays banned.
            }
        }
        for &c in &art_cols {
            t.banned[c] = true;
        }
        a = t.a;
        basis = t.basis;
    }

    // Phase two: original objective, rebuilt against the current basis.
    let mut cost = vec![0.0; cols + 1];
    cost[..n].copy_from_slice(&lp.objective);
    for r in 0..m {
        let cb = if basis[r] < n { lp.objective[basis[r]] } else { 0.0 };
        if cb != 0.0 {
            for j in 0..=cols {
                cost[j] -= cb * a[r][j];
            }
        }
    }
    let mut banned = vec![false; cols];
    for c in n + num_slack..cols {
        banned[c] = true;
    }
    let mut t = Tableau {
        a,
        cost,
        basis,
        cols,
        banned,
        bland: false,
        degenerate_streak: 0,
    };
    let finished = t.run(max_iters)?;
    if !finished {
        return Ok(SimplexOutcome::Unbounded);
    }

    let mut x = vec![0.0; n];
    for r in 0..m {
        if t.basis[r] < n {
            x[t.basis[r]] = t.rhs(r).max(0.0);
        }
    }
    let objective = lp
        .objective
        .iter()
        .zip(&x)
        .map(|(c, v)| c * v)
        .sum::<f64>();
    Ok(SimplexOutcome::Optimal { objective, x })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn lp(obj: Vec<f64>, rows: Vec<LpRow>) -> LpProblem {
        let mut p = LpProblem::new(obj);
        for r in rows {
            p.push_row(r);
        }
        p
    }

    #[test]
    fn single_equality() {
        let p = lp(
            vec![1.0],
            vec![LpRow::new(vec![(0, 1.0)], Sense::Eq, 1.0)],
        );
        match simplex_solve(&p).unwrap() {
            SimplexOutcome::Optimal { objective, x } => {
                assert_abs_diff_eq!(objective, 1.0, epsilon = 1e-9);
                assert_abs_diff_eq!(x[0], 1.0, epsilon = 1e-9);
            }
            other => panic!("unexpected outcome {other:?}"),
        }
    }

    #[test]
    fn two_variable_vertex() {
        // min 2x + 3y s.t. x + y = 1 -> x = 1, value 2.
        let p = lp(
            vec![2.0, 3.0],
            vec![LpRow::new(vec![(0, 1.0), (1, 1.0)], Sense::Eq, 1.0)],
        );
        match simplex_solve(&p).unwrap() {
            SimplexOutcome::Optimal { objective, x } => {
                assert_abs_diff_eq!(objective, 2.0, epsilon = 1e-9);
                assert_abs_diff_eq!(x[0], 1.0, epsilon = 1e-9);
                assert_abs_diff_eq!(x[1], 0.0, epsilon = 1e-9);
            }
            other => panic!("unexpected outcome {other:?}"),
        }
    }

    #[test]
    fn detects_infeasible() {
        // x <= -1 with x >= 0 can never hold.
        let p = lp(
            vec![1.0],
            vec![LpRow::new(vec![(0, 1.0)], Sense::Le, -1.0)],
        );
        assert_eq!(simplex_solve(&p).unwrap(), SimplexOutcome::Infeasible);
    }

    #[test]
    fn detects_unbounded() {
        // min -x with only x >= 0.
        let p = lp(vec![-1.0], vec![]);
        assert_eq!(simplex_solve(&p).unwrap(), SimplexOutcome::Unbounded);
    }

    #[test]
    fn inequality_mix() {
        // min -x - 2y s.t. x + y <= 4, y <= 3 -> x=1, y=3, obj -7.
        let p = lp(
            vec![-1.0, -2.0],
            vec![
                LpRow::new(vec![(0, 1.0), (1, 1.0)], Sense::Le, 4.0),
                LpRow::new(vec![(1, 1.0)], Sense::Le, 3.0),
            ],
        );
        match simplex_solve(&p).unwrap() {
            SimplexOutcome::Optimal { objective, x } => {
                assert_abs_diff_eq!(objective, -7.0, epsilon = 1e-9);
                assert_abs_diff_eq!(x[0], 1.0, epsilon = 1e-9);
                assert_abs_diff_eq!(x[1], 3.0, epsilon = 1e-9);
            }
            other => panic!("unexpected outcome {other:?}"),
        }
    }

    #[test]
    fn ge_rows_need_phase_one() {
        // min x + y s.t. x + 2y >= 4, 3x + y >= 3 -> intersection (0.4, 1.8), obj 2.2.
        let p = lp(
            vec![1.0, 1.0],
            vec![
                LpRow::new(vec![(0, 1.0), (1, 2.0)], Sense::Ge, 4.0),
                LpRow::new(vec![(0, 3.0), (1, 1.0)], Sense::Ge, 3.0),
            ],
        );
        match simplex_solve(&p).unwrap() {
            SimplexOutcome::Optimal { objective, .. } => {
                assert_abs_diff_eq!(objective, 2.2, epsilon = 1e-9);
            }
            other => panic!("unexpected outcome {other:?}"),
        }
    }

    #[test]
    fn degenerate_problem_terminates() {
        // Classic cycling-prone instance (Beale); Bland fallback must finish.
        let p = lp(
            vec![-0.75, 150.0, -0.02, 6.0],
            vec![
                LpRow::new(
                    vec![(0, 0.25), (1, -60.0), (2, -0.04), (3, 9.0)],
                    Sense::Le,
                    0.0,
                ),
                LpRow::new(
                    vec![(0, 0.5), (1, -90.0), (2, -0.02), (3, 3.0)],
                    Sense::Le,
                    0.0,
                ),
                LpRow::new(vec![(2, 1.0)], Sense::Le, 1.0),
            ],
        );
        match simplex_solve(&p).unwrap() {
            SimplexOutcome::Optimal { objective, .. } => {
                assert_abs_diff_eq!(objective, -0.05, epsilon = 1e-9);
            }
            other => panic!("unexpected outcome {other:?}"),
        }
    }

    #[test]
    fn mps_export_has_sections() {
        let p = lp(
            vec![1.0, 0.0],
            vec![LpRow::new(vec![(0, 1.0), (1, -1.0)], Sense::Eq, 2.0)],
        );
        let text = p.to_mps("toy");
        for section in ["ROWS", "COLUMNS", "RHS", "ENDATA"] {
            assert!(text.contains(section), "missing {section} in {text}");
        }
    }

    #[test]
    fn redundant_equality_rows_are_tolerated() {
        // x + y = 2 stated twice.
        let p = lp(
            vec![1.0, 1.0],
            vec![
                LpRow::new(vec![(0, 1.0), (1, 1.0)], Sense::Eq, 2.0),
                LpRow::new(vec![(0, 1.0), (1, 1.0)], Sense::Eq, 2.0),
            ],
        );
        match simplex_solve(&p).unwrap() {
            SimplexOutcome::Optimal { objective, .. } => {
                assert_abs_diff_eq!(objective, 2.0, epsilon = 1e-9);
            }
            other => panic!("unexpected outcome {other:?}"),
        }
    }
}
