//! Two-phase dense simplex for linear programs `min/max cᵀx, A x ≤ b,
//! lo ≤ x ≤ hi`.
//!
//! The implementation favors robustness over speed: a dense tableau, explicit
//! phase-1 artificials, and Dantzig pricing that permanently switches to
//! Bland's anti-cycling rule if the objective stalls on degenerate pivots.
//! Problem sizes in this crate stay at a few hundred rows/columns, where a
//! dense tableau is entirely adequate.

use thiserror::Error;

use crate::oracle::{ModelSense, Solution};

/// A linear program in inequality form: `sense cᵀx` subject to `A x ≤ b` and
/// per-variable bounds `lo ≤ x ≤ hi` (`hi` may be infinite, `lo` must be
/// finite).
#[derive(Debug, Clone)]
pub struct LpProblem {
    /// Constraint matrix, `k` rows of length `d`.
    pub a: Vec<Vec<f64>>,
    /// Right-hand sides, length `k`.
    pub b: Vec<f64>,
    /// Objective coefficients, length `d`.
    pub c: Vec<f64>,
    pub sense: ModelSense,
    /// Per-variable `[lo, hi]` bounds, length `d`.
    pub bounds: Vec<(f64, f64)>,
}

/// Terminal status of a simplex run.
#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal(Solution),
    Infeasible,
    Unbounded,
}

#[derive(Debug, Error)]
pub enum SimplexError {
    #[error("LP data is inconsistent: {0}")]
    BadProblem(String),
    #[error("simplex iteration limit reached ({0} pivots)")]
    IterationLimit(usize),
}

const PIVOT_EPS: f64 = 1e-10;
const COST_EPS: f64 = 1e-9;
/// Consecutive non-improving pivots before switching to Bland's rule.
const STALL_LIMIT: usize = 50;
const MAX_ITERS: usize = 200_000;

/// Dense tableau: `rows` are the constraint rows (last column = RHS), `obj`
/// is the reduced-cost row (last entry = negated objective value), `basis`
/// maps each row to its basic column.
struct Tableau {
    rows: Vec<Vec<f64>>,
    obj: Vec<f64>,
    basis: Vec<usize>,
    ncols: usize,
    bland: bool,
}

impl Tableau {
    fn rhs(&self, r: usize) -> f64 {
        self.rows[r][self.ncols]
    }

    fn pivot(&mut self, r: usize, col: usize) {
        let piv = self.rows[r][col];
        let inv = 1.0 / piv;
        for v in self.rows[r].iter_mut() {
            *v *= inv;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let factor = row[col];
            if factor != 0.0 {
                for (v, p) in row.iter_mut().zip(&pivot_row) {
                    *v -= factor * p;
                }
            }
        }
        let factor = self.obj[col];
        if factor != 0.0 {
            for (v, p) in self.obj.iter_mut().zip(&pivot_row) {
                *v -= factor * p;
            }
        }
        self.basis[r] = col;
    }

    /// Runs simplex pivots on the current objective row until optimality,
    /// unboundedness, or the iteration limit. Columns in
    /// `allowed[j] == false` never enter the basis.
    fn optimize(&mut self, allowed: &[bool]) -> Result<bool, SimplexError> {
        let mut stall = 0usize;
        let mut last_obj = -self.obj[self.ncols];
        for iter in 0..MAX_ITERS {
            // Entering column: Dantzig (most negative reduced cost) until a
            // stall is detected, then Bland (smallest index).
            let mut entering: Option<usize> = None;
            if self.bland {
                for j in 0..self.ncols {
                    if allowed[j] && self.obj[j] < -COST_EPS {
                        entering = Some(j);
                        break;
                    }
                }
            } else {
                let mut best = -COST_EPS;
                for j in 0..self.ncols {
                    if allowed[j] && self.obj[j] < best {
                        best = self.obj[j];
                        entering = Some(j);
                    }
                }
            }
            let Some(col) = entering else {
                return Ok(true); // optimal
            };

            // Ratio test; ties broken by smallest basic-column index so the
            // pivot sequence (and with Bland, termination) is deterministic.
            let mut leave: Option<usize> = None;
            let mut best_ratio = f64::INFINITY;
            for r in 0..self.rows.len() {
                let a = self.rows[r][col];
                if a > PIVOT_EPS {
                    let ratio = self.rhs(r) / a;
                    let better = ratio < best_ratio - 1e-12
                        || (ratio < best_ratio + 1e-12
                            && leave.is_some_and(|l| self.basis[r] < self.basis[l]));
                    if better {
                        best_ratio = ratio;
                        leave = Some(r);
                    }
                }
            }
            let Some(row) = leave else {
                return Ok(false); // unbounded in this objective
            };

            self.pivot(row, col);

            let obj_now = -self.obj[self.ncols];
            if obj_now < last_obj - 1e-12 {
                stall = 0;
            } else {
                stall += 1;
                if stall >= STALL_LIMIT {
                    self.bland = true;
                }
            }
            last_obj = obj_now;
            let _ = iter;
        }
        Err(SimplexError::IterationLimit(MAX_ITERS))
    }
}

/// Solves an LP with the two-phase simplex method.
///
/// Returns `Optimal` with a primal-optimal basic solution, or the
/// `Infeasible`/`Unbounded` status; these are outcomes, not errors. The
/// returned solution satisfies `A x ≤ b + 1e-7` and its bounds, and the
/// `objective` field is recomputed as `dot(c, x)` in the problem's own sense.
pub fn simplex_solve(problem: &LpProblem) -> Result<LpOutcome, SimplexError> {
    let k = problem.a.len();
    let d = problem.c.len();
    if problem.b.len() != k {
        return Err(SimplexError::BadProblem(format!(
            "{} rows but {} right-hand sides",
            k,
            problem.b.len()
        )));
    }
    if problem.bounds.len() != d {
        return Err(SimplexError::BadProblem(format!(
            "{} variables but {} bound pairs",
            d,
            problem.bounds.len()
        )));
    }
    for row in &problem.a {
        if row.len() != d {
            return Err(SimplexError::BadProblem(
                "constraint row length does not match variable count".into(),
            ));
        }
    }
    for (j, &(lo, hi)) in problem.bounds.iter().enumerate() {
        if !lo.is_finite() || hi < lo {
            return Err(SimplexError::BadProblem(format!(
                "variable {j} has invalid bounds [{lo}, {hi}]"
            )));
        }
    }

    // Minimization convention internally; flip the sign of c for Maximize.
    let obj_sign = match problem.sense {
        ModelSense::Minimize => 1.0,
        ModelSense::Maximize => -1.0,
    };

    // Shift x = lo + x' so x' ≥ 0, then add upper-bound rows for finite hi.
    let mut rows_a: Vec<Vec<f64>> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    for (row, &bi) in problem.a.iter().zip(&problem.b) {
        let shift: f64 = row
            .iter()
            .zip(&problem.bounds)
            .map(|(aij, &(lo, _))| aij * lo)
            .sum();
        rows_a.push(row.clone());
        rhs.push(bi - shift);
    }
    for (j, &(lo, hi)) in problem.bounds.iter().enumerate() {
        if hi.is_finite() && hi - lo > 0.0 {
            let mut row = vec![0.0; d];
            row[j] = 1.0;
            rows_a.push(row);
            rhs.push(hi - lo);
        } else if hi.is_finite() {
            // Fixed variable (hi == lo): x'_j ≤ 0 pins it at the bound.
            let mut row = vec![0.0; d];
            row[j] = 1.0;
            rows_a.push(row);
            rhs.push(0.0);
        }
    }
    let m = rows_a.len();

    // Build the tableau: d structural columns, m slack columns, and one
    // artificial column per negative-RHS row (after negating that row).
    let mut art_cols: Vec<Option<usize>> = vec![None; m];
    let mut n_art = 0usize;
    for r in 0..m {
        if rhs[r] < 0.0 {
            art_cols[r] = Some(n_art);
            n_art += 1;
        }
    }
    let ncols = d + m + n_art;
    let mut rows = vec![vec![0.0; ncols + 1]; m];
    let mut basis = vec![0usize; m];
    for r in 0..m {
        let neg = art_cols[r].is_some();
        let sign = if neg { -1.0 } else { 1.0 };
        for j in 0..d {
            rows[r][j] = sign * rows_a[r][j];
        }
        rows[r][d + r] = sign; // slack
        rows[r][ncols] = sign * rhs[r];
        if let Some(a) = art_cols[r] {
            rows[r][d + m + a] = 1.0;
            basis[r] = d + m + a;
        } else {
            basis[r] = d + r;
        }
    }

    let mut t = Tableau {
        rows,
        obj: vec![0.0; ncols + 1],
        basis,
        ncols,
        bland: false,
    };

    // Phase 1: minimize the sum of artificials, expressed over the non-basic
    // columns by subtracting each artificial's row from the objective.
    if n_art > 0 {
        for j in 0..=ncols {
            let mut v = 0.0;
            if j >= d + m && j < ncols {
                v = 1.0;
            }
            t.obj[j] = v;
        }
        for r in 0..m {
            if art_cols[r].is_some() {
                let row = t.rows[r].clone();
                for (o, x) in t.obj.iter_mut().zip(&row) {
                    *o -= x;
                }
            }
        }
        let allowed = vec![true; ncols];
        let optimal = t.optimize(&allowed)?;
        debug_assert!(optimal, "phase-1 objective is bounded below by zero");
        let phase1 = -t.obj[ncols];
        if phase1 > 1e-7 {
            return Ok(LpOutcome::Infeasible);
        }
        // Pivot any artificial still basic (at value 0) out of the basis, or
        // note its row as redundant if no structural/slack pivot exists.
        for r in 0..m {
            if t.basis[r] >= d + m {
                let col = (0..d + m).find(|&j| t.rows[r][j].abs() > PIVOT_EPS);
                if let Some(col) = col {
                    t.pivot(r, col);
                }
            }
        }
    }

    // Phase 2: rebuild the objective row for the shifted problem and optimize
    // with artificial columns barred from entering.
    let shifted_c: Vec<f64> = problem.c.iter().map(|&cj| obj_sign * cj).collect();
    for j in 0..=ncols {
        t.obj[j] = if j < d { shifted_c[j] } else { 0.0 };
    }
    for r in 0..m {
        let bc = t.basis[r];
        let cb = if bc < d { shifted_c[bc] } else { 0.0 };
        if cb != 0.0 {
            let row = t.rows[r].clone();
            for (o, x) in t.obj.iter_mut().zip(&row) {
                *o -= cb * x;
            }
        }
    }
    let mut allowed = vec![true; ncols];
    for j in d + m..ncols {
        allowed[j] = false;
    }
    // A basic artificial pinned at zero by a fully-redundant row never leaves;
    // its row constrains nothing, so barring it from entering is enough.
    let optimal = t.optimize(&allowed)?;
    if !optimal {
        return Ok(LpOutcome::Unbounded);
    }

    // Read the solution back, unshift, and recompute the objective exactly.
    let mut x = vec![0.0; d];
    for r in 0..m {
        if t.basis[r] < d {
            x[t.basis[r]] = t.rhs(r);
        }
    }
    for (xj, &(lo, _)) in x.iter_mut().zip(&problem.bounds) {
        *xj += lo;
    }
    let objective: f64 = problem.c.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpOutcome::Optimal(Solution::new(x, objective)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn unit_box(d: usize) -> Vec<(f64, f64)> {
        vec![(0.0, f64::INFINITY); d]
    }

    #[test]
    fn two_variable_box_maximum() {
        // max x1 + x2 s.t. x1 ≤ 1, x2 ≤ 1, x ≥ 0 → objective 2.
        let p = LpProblem {
            a: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            b: vec![1.0, 1.0],
            c: vec![1.0, 1.0],
            sense: ModelSense::Maximize,
            bounds: unit_box(2),
        };
        match simplex_solve(&p).unwrap() {
            LpOutcome::Optimal(s) => {
                assert_abs_diff_eq!(s.objective, 2.0, epsilon = 1e-9);
                assert_abs_diff_eq!(s.values[0], 1.0, epsilon = 1e-9);
                assert_abs_diff_eq!(s.values[1], 1.0, epsilon = 1e-9);
            }
            other => panic!("expected optimal, got {other:?}"),
        }
    }

    #[test]
    fn contradictory_rows_are_infeasible() {
        // x1 ≤ −1 with x1 ≥ 0 has no feasible point.
        let p = LpProblem {
            a: vec![vec![1.0]],
            b: vec![-1.0],
            c: vec![1.0],
            sense: ModelSense::Minimize,
            bounds: unit_box(1),
        };
        assert_eq!(simplex_solve(&p).unwrap(), LpOutcome::Infeasible);
    }

    #[test]
    fn free_descent_is_unbounded() {
        let p = LpProblem {
            a: vec![],
            b: vec![],
            c: vec![-1.0],
            sense: ModelSense::Minimize,
            bounds: unit_box(1),
        };
        assert_eq!(simplex_solve(&p).unwrap(), LpOutcome::Unbounded);
    }

    #[test]
    fn three_variable_frozen_instance() {
        // Expected optimum computed with an independent LP solver:
        // obj −17 at x = (3, 2, 0).
        let p = LpProblem {
            a: vec![
                vec![2.0, 1.0, 1.0],
                vec![1.0, 3.0, 2.0],
                vec![-1.0, 1.0, -1.0],
            ],
            b: vec![8.0, 9.0, 1.0],
            c: vec![-3.0, -4.0, -2.0],
            sense: ModelSense::Minimize,
            bounds: vec![(0.0, 4.0); 3],
        };
        match simplex_solve(&p).unwrap() {
            LpOutcome::Optimal(s) => {
                assert_abs_diff_eq!(s.objective, -17.0, epsilon = 1e-7);
                assert_abs_diff_eq!(s.values[0], 3.0, epsilon = 1e-7);
                assert_abs_diff_eq!(s.values[1], 2.0, epsilon = 1e-7);
                assert_abs_diff_eq!(s.values[2], 0.0, epsilon = 1e-7);
            }
            other => panic!("expected optimal, got {other:?}"),
        }
    }

    #[test]
    fn nonzero_lower_bounds_are_shifted() {
        // min x over x ∈ [2, 5] → 2.
        let p = LpProblem {
            a: vec![],
            b: vec![],
            c: vec![1.0],
            sense: ModelSense::Minimize,
            bounds: vec![(2.0, 5.0)],
        };
        match simplex_solve(&p).unwrap() {
            LpOutcome::Optimal(s) => assert_abs_diff_eq!(s.objective, 2.0, epsilon = 1e-9),
            other => panic!("expected optimal, got {other:?}"),
        }
    }

    #[test]
    fn negative_rhs_needs_phase_one() {
        // −x1 − x2 ≤ −3 (i.e. x1 + x2 ≥ 3) with 0 ≤ x ≤ 2: min x1 + 2 x2
        // → x = (2, 1), obj 4.
        let p = LpProblem {
            a: vec![vec![-1.0, -1.0]],
            b: vec![-3.0],
            c: vec![1.0, 2.0],
            sense: ModelSense::Minimize,
            bounds: vec![(0.0, 2.0); 2],
        };
        match simplex_solve(&p).unwrap() {
            LpOutcome::Optimal(s) => {
                assert_abs_diff_eq!(s.objective, 4.0, epsilon = 1e-9);
                assert_abs_diff_eq!(s.values[0], 2.0, epsilon = 1e-9);
            }
            other => panic!("expected optimal, got {other:?}"),
        }
    }

    #[test]
    fn equality_via_inequality_pair() {
        // x1 + x2 = 1 encoded as two rows; max x1 → (1, 0).
        let p = LpProblem {
            a: vec![vec![1.0, 1.0], vec![-1.0, -1.0]],
            b: vec![1.0, -1.0],
            c: vec![1.0, 0.0],
            sense: ModelSense::Maximize,
            bounds: unit_box(2),
        };
        match simplex_solve(&p).unwrap() {
            LpOutcome::Optimal(s) => {
                assert_abs_diff_eq!(s.objective, 1.0, epsilon = 1e-9);
                assert_abs_diff_eq!(s.values[0], 1.0, epsilon = 1e-9);
            }
            other => panic!("expected optimal, got {other:?}"),
        }
    }

    #[test]
    fn feasibility_certificate_on_random_instances() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let d = rng.random_range(2..6);
            let k = rng.random_range(1..5);
            let a: Vec<Vec<f64>> = (0..k)
                .map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect();
            let b: Vec<f64> = (0..k).map(|_| rng.random_range(0.5..4.0)).collect();
            let c: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let p = LpProblem {
                a,
                b,
                c,
                sense: ModelSense::Minimize,
                bounds: vec![(0.0, 3.0); d],
            };
            // b ≥ 0 and x = 0 feasible, bounds finite → always optimal.
            match simplex_solve(&p).unwrap() {
                LpOutcome::Optimal(s) => {
                    for (row, &bi) in p.a.iter().zip(&p.b) {
                        let lhs: f64 = row.iter().zip(&s.values).map(|(a, x)| a * x).sum();
                        assert!(lhs <= bi + 1e-7, "row violated: {lhs} > {bi}");
                    }
                    for (&x, &(lo, hi)) in s.values.iter().zip(&p.bounds) {
                        assert!(x >= lo - 1e-7 && x <= hi + 1e-7);
                    }
                    // Optimality proxy: no sampled feasible point does better.
                    for _ in 0..200 {
                        let y: Vec<f64> =
                            (0..p.c.len()).map(|_| rng.random_range(0.0..3.0)).collect();
                        let ok = p
                            .a
                            .iter()
                            .zip(&p.b)
                            .all(|(row, &bi)| {
                                row.iter().zip(&y).map(|(a, x)| a * x).sum::<f64>() <= bi
                            });
                        if ok {
                            let obj: f64 = p.c.iter().zip(&y).map(|(c, x)| c * x).sum();
                            assert!(obj >= s.objective - 1e-7);
                        }
                    }
                }
                other => panic!("expected optimal, got {other:?}"),
            }
        }
    }
}
