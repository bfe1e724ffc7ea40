//! Dense two-phase primal simplex.
//!
//! Problems are stated over sign-free variables:
//!
//! ```text
//! minimize    c . z
//! subject to  A_ineq z <= b_ineq
//!             A_eq   z  = b_eq
//! ```
//!
//! Internally every variable is split into a nonnegative pair `z = z+ - z-`,
//! inequality rows receive a slack, and phase 1 minimizes the sum of
//! artificials. Pivot choices are deterministic, so a given program always
//! walks the same path and returns the same vertex.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{solve_linear, Matrix, Vector};

/// Default margin used to encode a strict inequality `g < 0` as `g <= -eps`.
pub const DEFAULT_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LpError {
    #[error("malformed linear program: {0}")]
    Dimension(String),
    #[error("non-finite coefficient in {0}")]
    NonFinite(&'static str),
    #[error("simplex iteration limit ({limit}) exceeded")]
    IterationLimit { limit: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// `minimize objective . z` subject to `ineq_lhs z <= ineq_rhs`,
/// `eq_lhs z = eq_rhs`; `z` is sign-free.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    num_vars: usize,
    objective: Vec<f64>,
    ineq: Vec<f64>,
    ineq_rhs: Vec<f64>,
    eq: Vec<f64>,
    eq_rhs: Vec<f64>,
}

impl LinearProgram {
    /// Empty program (zero objective, no constraints) over `num_vars` variables.
    pub fn new(num_vars: usize) -> Self {
        Self {
            num_vars,
            objective: vec![0.0; num_vars],
            ineq: Vec::new(),
            ineq_rhs: Vec::new(),
            eq: Vec::new(),
            eq_rhs: Vec::new(),
        }
    }

    /// Assembles a program from dense blocks, validating shapes.
    pub fn from_parts(
        objective: Vector,
        ineq_lhs: &Matrix,
        ineq_rhs: &[f64],
        eq_lhs: &Matrix,
        eq_rhs: &[f64],
    ) -> Result<Self, LpError> {
        let n = objective.dim();
        for (name, lhs, rhs) in [("inequality", ineq_lhs, ineq_rhs), ("equality", eq_lhs, eq_rhs)] {
            if lhs.rows() > 0 && lhs.cols() != n {
                return Err(LpError::Dimension(format!(
                    "{name} block has {} columns, expected {n}",
                    lhs.cols()
                )));
            }
            if lhs.rows() != rhs.len() {
                return Err(LpError::Dimension(format!(
                    "{name} block has {} rows but {} right-hand sides",
                    lhs.rows(),
                    rhs.len()
                )));
            }
        }
        if objective.iter().chain(ineq_rhs).chain(eq_rhs).any(|v| !v.is_finite()) {
            return Err(LpError::NonFinite("objective or right-hand side"));
        }
        Ok(Self {
            num_vars: n,
            objective: objective.into_inner(),
            ineq: ineq_lhs.as_slice().to_vec(),
            ineq_rhs: ineq_rhs.to_vec(),
            eq: eq_lhs.as_slice().to_vec(),
            eq_rhs: eq_rhs.to_vec(),
        })
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn num_constraints(&self) -> usize {
        self.ineq_rhs.len() + self.eq_rhs.len()
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn ineq_lhs(&self) -> Matrix {
        Matrix::new(self.ineq_rhs.len(), self.num_vars, self.ineq.clone()).expect("validated on insert")
    }

    pub fn ineq_rhs(&self) -> &[f64] {
        &self.ineq_rhs
    }

    pub fn eq_lhs(&self) -> Matrix {
        Matrix::new(self.eq_rhs.len(), self.num_vars, self.eq.clone()).expect("validated on insert")
    }

    pub fn eq_rhs(&self) -> &[f64] {
        &self.eq_rhs
    }

    pub fn set_objective(&mut self, var: usize, coeff: f64) {
        self.objective[var] = coeff;
    }

    fn dense_row(&self, terms: &[(usize, f64)]) -> Vec<f64> {
        let mut row = vec![0.0; self.num_vars];
        for &(j, c) in terms {
            row[j] += c;
        }
        row
    }

    /// Adds `sum coeff * z[var] <= rhs`. Repeated indices accumulate.
    pub fn add_le(&mut self, terms: &[(usize, f64)], rhs: f64) {
        let row = self.dense_row(terms);
        self.ineq.extend_from_slice(&row);
        self.ineq_rhs.push(rhs);
    }

    /// Adds `sum coeff * z[var] >= rhs`.
    pub fn add_ge(&mut self, terms: &[(usize, f64)], rhs: f64) {
        let negated: Vec<(usize, f64)> = terms.iter().map(|&(j, c)| (j, -c)).collect();
        self.add_le(&negated, -rhs);
    }

    pub fn add_eq(&mut self, terms: &[(usize, f64)], rhs: f64) {
        let row = self.dense_row(terms);
        self.eq.extend_from_slice(&row);
        self.eq_rhs.push(rhs);
    }

    /// Worst constraint violation of `z` (0 when feasible).
    pub fn max_violation(&self, z: &[f64]) -> f64 {
        let n = self.num_vars;
        let dot = |row: &[f64]| row.iter().zip(z).map(|(a, b)| a * b).sum::<f64>();
        let ineq = self
            .ineq
            .chunks(n.max(1))
            .zip(&self.ineq_rhs)
            .map(|(row, &b)| (dot(row) - b).max(0.0));
        let eq = self.eq.chunks(n.max(1)).zip(&self.eq_rhs).map(|(row, &b)| (dot(row) - b).abs());
        ineq.chain(eq).fold(0.0, f64::max)
    }

    fn validate(&self) -> Result<(), LpError> {
        if self.objective.len() != self.num_vars {
            return Err(LpError::Dimension("objective length differs from num_vars".into()));
        }
        if self.ineq.len() != self.ineq_rhs.len() * self.num_vars || self.eq.len() != self.eq_rhs.len() * self.num_vars {
            return Err(LpError::Dimension("constraint block shape".into()));
        }
        if self.ineq.iter().chain(&self.eq).any(|v| !v.is_finite()) {
            return Err(LpError::NonFinite("constraint matrix"));
        }
        if self.objective.iter().chain(&self.ineq_rhs).chain(&self.eq_rhs).any(|v| !v.is_finite()) {
            return Err(LpError::NonFinite("objective or right-hand side"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Present iff `status == Optimal`.
    pub primal: Option<Vector>,
    /// Present iff `status == Optimal`.
    pub objective_value: Option<f64>,
    pub iterations: usize,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    fn without_point(status: LpStatus, iterations: usize) -> Self {
        Self {
            status,
            primal: None,
            objective_value: None,
            iterations,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Phase-1 objective above this (relative to the rhs scale) means infeasible.
    pub feasibility_tol: f64,
    /// Reduced costs above `-optimality_tol` are treated as nonnegative.
    pub optimality_tol: f64,
    /// Smallest admissible pivot magnitude.
    pub pivot_tol: f64,
    /// Overrides the default cap of `50 * (num_vars + num_constraints)` pivots.
    pub max_iterations: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            feasibility_tol: 1e-9,
            optimality_tol: 1e-10,
            pivot_tol: 1e-9,
            max_iterations: None,
        }
    }
}

/// Solves `lp` with default options.
pub fn solve(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    solve_with(lp, &SolverOptions::default())
}

/// True iff the constraint set of `lp` is nonempty.
pub fn check_feasible(lp: &LinearProgram) -> Result<bool, LpError> {
    let mut phase1 = lp.clone();
    phase1.objective.iter_mut().for_each(|c| *c = 0.0);
    Ok(solve(&phase1)?.is_optimal())
}

struct Tableau {
    /// `rows x (cols + 1)`; last column is the rhs.
    t: Vec<f64>,
    rows: usize,
    cols: usize,
    /// Reduced-cost row, `cols + 1` wide; last entry is `-objective`.
    cost: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn width(&self) -> usize {
        self.cols + 1
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.width() + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.at(i, self.cols)
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let w = self.width();
        let p = self.t[row * w + col];
        for v in &mut self.t[row * w..(row + 1) * w] {
            *v /= p;
        }
        self.t[row * w + col] = 1.0;
        let pivot_row: Vec<f64> = self.t[row * w..(row + 1) * w].to_vec();
        for i in 0..self.rows {
            if i == row {
                continue;
            }
            let f = self.t[i * w + col];
            if f == 0.0 {
                continue;
            }
            for (v, &pr) in self.t[i * w..(i + 1) * w].iter_mut().zip(&pivot_row) {
                *v -= f * pr;
            }
            self.t[i * w + col] = 0.0;
        }
        let f = self.cost[col];
        if f != 0.0 {
            for (v, &pr) in self.cost.iter_mut().zip(&pivot_row) {
                *v -= f * pr;
            }
            self.cost[col] = 0.0;
        }
        self.basis[row] = col;
    }

    fn load_costs(&mut self, c: &[f64]) {
        let w = self.width();
        self.cost = c.to_vec();
        self.cost.push(0.0);
        for i in 0..self.rows {
            let cb = c[self.basis[i]];
            if cb == 0.0 {
                continue;
            }
            for (v, &a) in self.cost.iter_mut().zip(&self.t[i * w..(i + 1) * w]) {
                *v -= cb * a;
            }
        }
    }

    /// Rebuilds the tableau as `B^-1 [A | b]` from the original rows, which
    /// discards the round-off accumulated across pivots. Leaves the tableau
    /// untouched if the basis matrix is numerically singular.
    fn reinvert(&mut self, original: &[f64]) -> bool {
        let (m, w) = (self.rows, self.width());
        if m == 0 {
            return true;
        }
        let mut basis_matrix = Vec::with_capacity(m * m);
        for i in 0..m {
            basis_matrix.extend(self.basis.iter().map(|&b| original[i * w + b]));
        }
        let (Ok(b), Ok(rhs)) = (Matrix::new(m, m, basis_matrix), Matrix::new(m, w, original.to_vec())) else {
            return false;
        };
        let Ok(fresh) = solve_linear(&b, &rhs) else {
            return false;
        };
        self.t = fresh.as_slice().to_vec();
        for (i, &b) in self.basis.iter().enumerate() {
            for k in 0..m {
                self.t[k * w + b] = if k == i { 1.0 } else { 0.0 };
            }
        }
        true
    }

    /// Most negative basic value.
    fn worst_basic(&self) -> f64 {
        (0..self.rows).map(|i| self.rhs(i)).fold(0.0, f64::min)
    }

    /// Dual simplex pivots on columns `< allowed_cols` until no basic value
    /// is below `-tol`. Returns `false` if it stops early because a negative
    /// row has no admissible entering column.
    fn dual_cleanup(&mut self, allowed_cols: usize, tol: f64, iters: &mut usize, limit: usize) -> Result<bool, LpError> {
        loop {
            let leave = (0..self.rows)
                .filter(|&i| self.rhs(i) < -tol)
                .min_by(|&a, &b| self.rhs(a).total_cmp(&self.rhs(b)).then(a.cmp(&b)));
            let Some(row) = leave else {
                return Ok(true);
            };
            let row_max = (0..allowed_cols).fold(0.0f64, |m, j| m.max(self.at(row, j).abs()));
            let candidates: Vec<(usize, f64)> =
                (0..allowed_cols).map(|j| (j, -self.at(row, j))).filter(|&(_, a)| a > 1e-7 * row_max).collect();
            if candidates.is_empty() {
                return Ok(false);
            }
            let bound = candidates
                .iter()
                .map(|&(j, a)| (self.cost[j].max(0.0) + HARRIS_TOL) / a)
                .fold(f64::INFINITY, f64::min);
            let (col, _) = candidates
                .iter()
                .filter(|&&(j, a)| self.cost[j].max(0.0) / a <= bound)
                .max_by(|x, y| x.1.total_cmp(&y.1).then(y.0.cmp(&x.0)))
                .copied()
                .expect("the minimizing column is always eligible");
            *iters += 1;
            if *iters > limit {
                return Err(LpError::IterationLimit { limit });
            }
            self.pivot(row, col);
        }
    }

    /// Pivots on columns `< allowed_cols` until optimal or unbounded.
    /// Returns `false` on unboundedness.
    ///
    /// Entering columns follow Dantzig's rule; after a run of degenerate
    /// pivots the choice falls back to Bland's rule, which cannot cycle. The
    /// leaving row comes from a two-pass (Harris) ratio test that prefers the
    /// largest pivot among near-minimal ratios.
    fn run(&mut self, allowed_cols: usize, opts: &SolverOptions, iters: &mut usize, limit: usize) -> Result<bool, LpError> {
        let cost_scale = self.cost[..allowed_cols].iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let threshold = -opts.optimality_tol * cost_scale;
        let mut degenerate_run = 0usize;
        loop {
            let enter = if degenerate_run < DEGENERATE_LIMIT {
                (0..allowed_cols)
                    .filter(|&j| self.cost[j] < threshold)
                    .min_by(|&a, &b| self.cost[a].total_cmp(&self.cost[b]).then(a.cmp(&b)))
            } else {
                (0..allowed_cols).find(|&j| self.cost[j] < threshold)
            };
            let Some(enter) = enter else {
                return Ok(true);
            };
            let col_max = (0..self.rows).fold(0.0f64, |m, i| m.max(self.at(i, enter).abs()));
            let min_pivot = opts.pivot_tol.max(1e-7 * col_max);
            let candidates: Vec<(usize, f64)> =
                (0..self.rows).map(|i| (i, self.at(i, enter))).filter(|&(_, a)| a > min_pivot).collect();
            if candidates.is_empty() {
                return Ok(false);
            }
            let bound = candidates
                .iter()
                .map(|&(i, a)| (self.rhs(i).max(0.0) + HARRIS_TOL) / a)
                .fold(f64::INFINITY, f64::min);
            let eligible = candidates.iter().filter(|&&(i, a)| self.rhs(i).max(0.0) / a <= bound);
            let (row, _) = if degenerate_run < DEGENERATE_LIMIT {
                eligible.max_by(|x, y| x.1.total_cmp(&y.1).then(self.basis[y.0].cmp(&self.basis[x.0]))).copied()
            } else {
                // Bland: smallest ratio, ties to the smallest basic index.
                eligible
                    .map(|&(i, a)| (i, self.rhs(i).max(0.0) / a))
                    .min_by(|x, y| x.1.total_cmp(&y.1).then(self.basis[x.0].cmp(&self.basis[y.0])))
            }
            .expect("the minimizing row is always eligible");
            *iters += 1;
            if *iters > limit {
                return Err(LpError::IterationLimit { limit });
            }
            if self.rhs(row).max(0.0) <= opts.feasibility_tol {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            self.pivot(row, enter);
        }
    }
}

/// Basic values below `-CLEAN_TOL` trigger the dual cleanup.
const CLEAN_TOL: f64 = 1e-12;

/// Cleanup rounds after the primal phase.
const CLEANUP_ROUNDS: usize = 3;

/// Width of the near-minimal ratio band in the leaving-row choice.
const HARRIS_TOL: f64 = 1e-12;

/// Consecutive degenerate pivots tolerated before switching to Bland's rule.
const DEGENERATE_LIMIT: usize = 50;

/// Solves `lp` with explicit tolerances.
pub fn solve_with(lp: &LinearProgram, opts: &SolverOptions) -> Result<LpSolution, LpError> {
    lp.validate()?;
    let n = lp.num_vars;
    let limit = opts
        .max_iterations
        .unwrap_or(50 * (lp.num_vars + lp.num_constraints()).max(1));

    // Standard-form rows: (coefficients over split vars, has_slack, rhs).
    let mut rows: Vec<(Vec<f64>, bool, f64)> = Vec::new();
    let ineq_rows = lp.ineq.chunks(n.max(1)).zip(&lp.ineq_rhs).map(|(r, &b)| (r, true, b));
    let eq_rows = lp.eq.chunks(n.max(1)).zip(&lp.eq_rhs).map(|(r, &b)| (r, false, b));
    for (row, is_ineq, b) in ineq_rows.chain(eq_rows) {
        let row = if n == 0 { &[][..] } else { row };
        let scale = row.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            let ok = if is_ineq { b >= -opts.feasibility_tol } else { b.abs() <= opts.feasibility_tol };
            if !ok {
                return Ok(LpSolution::without_point(LpStatus::Infeasible, 0));
            }
            continue;
        }
        let split: Vec<f64> = row.iter().flat_map(|&a| [a / scale, -a / scale]).collect();
        rows.push((split, is_ineq, b / scale));
    }

    let m = rows.len();
    let n_struct = 2 * n;
    let n_slack = rows.iter().filter(|r| r.1).count();
    // An artificial is needed unless the row's own slack can start basic.
    let needs_art: Vec<bool> = rows.iter().map(|(_, is_ineq, b)| !(*is_ineq && *b >= 0.0)).collect();
    let n_art = needs_art.iter().filter(|&&x| x).count();
    let cols = n_struct + n_slack + n_art;
    let w = cols + 1;

    let mut t = vec![0.0; m * w];
    let mut basis = vec![0usize; m];
    let mut slack_idx = n_struct;
    let mut art_idx = n_struct + n_slack;
    for (i, (coeffs, is_ineq, b)) in rows.iter().enumerate() {
        let sign = if *b < 0.0 { -1.0 } else { 1.0 };
        for (j, &a) in coeffs.iter().enumerate() {
            t[i * w + j] = sign * a;
        }
        if *is_ineq {
            t[i * w + slack_idx] = sign;
            if !needs_art[i] {
                basis[i] = slack_idx;
            }
            slack_idx += 1;
        }
        if needs_art[i] {
            t[i * w + art_idx] = 1.0;
            basis[i] = art_idx;
            art_idx += 1;
        }
        t[i * w + cols] = sign * b;
    }
    // Phase-1 residual is measured against the rows that carry artificials.
    let rhs_scale = rows
        .iter()
        .zip(&needs_art)
        .filter(|(_, &art)| art)
        .fold(1.0f64, |s, (r, _)| s.max(r.2.abs()));
    let original = t.clone();

    let mut tab = Tableau {
        t,
        rows: m,
        cols,
        cost: Vec::new(),
        basis,
    };
    let mut iters = 0usize;
    let art_start = n_struct + n_slack;

    if n_art > 0 {
        let mut c1 = vec![0.0; cols];
        c1[art_start..].iter_mut().for_each(|c| *c = 1.0);
        tab.load_costs(&c1);
        tab.run(cols, opts, &mut iters, limit)?;
        tab.reinvert(&original);
        let infeas: f64 = (0..m).filter(|&i| tab.basis[i] >= art_start).map(|i| tab.rhs(i).abs()).sum();
        if infeas > opts.feasibility_tol * rhs_scale {
            return Ok(LpSolution::without_point(LpStatus::Infeasible, iters));
        }
        // Drive zero-level artificials out of the basis where possible.
        for i in 0..m {
            if tab.basis[i] < art_start {
                continue;
            }
            let best = (0..art_start)
                .map(|j| (j, tab.at(i, j).abs()))
                .filter(|&(_, a)| a > opts.pivot_tol)
                .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
            if let Some((j, _)) = best {
                tab.pivot(i, j);
            }
        }
    }

    let mut c2 = vec![0.0; cols];
    for j in 0..n {
        c2[2 * j] = lp.objective[j];
        c2[2 * j + 1] = -lp.objective[j];
    }
    tab.load_costs(&c2);
    if !tab.run(art_start, opts, &mut iters, limit)? {
        return Ok(LpSolution::without_point(LpStatus::Unbounded, iters));
    }
    // Read the vertex off a fresh factorization unless that moves it
    // visibly, which only happens for a numerically singular basis.
    let drifted: Vec<f64> = (0..m).map(|i| tab.rhs(i)).collect();
    let snapshot = tab.t.clone();
    if tab.reinvert(&original) {
        let drift = (0..m).map(|i| (tab.rhs(i) - drifted[i]).abs()).fold(0.0, f64::max);
        if drift > 1e-6 * drifted.iter().fold(1.0f64, |s, v| s.max(v.abs())) {
            tab.t = snapshot;
        }
    }
    // Round-off can leave an exact basis slightly infeasible; a few dual
    // pivots followed by re-optimization repair that. Rounds that do not
    // reduce the infeasibility are undone.
    for _ in 0..CLEANUP_ROUNDS {
        let before = tab.worst_basic();
        if before >= -CLEAN_TOL {
            break;
        }
        let (saved_t, saved_basis, saved_iters) = (tab.t.clone(), tab.basis.clone(), iters);
        tab.load_costs(&c2);
        // A partial repair still counts if it helps.
        tab.dual_cleanup(art_start, CLEAN_TOL, &mut iters, limit)?;
        let repaired = tab.reinvert(&original)
            && {
                tab.load_costs(&c2);
                tab.run(art_start, opts, &mut iters, limit)?
            }
            && tab.reinvert(&original);
        if !repaired || tab.worst_basic() <= before {
            tab.t = saved_t;
            tab.basis = saved_basis;
            iters = saved_iters;
            break;
        }
    }

    let mut split = vec![0.0; cols];
    for (i, &b) in tab.basis.iter().enumerate() {
        split[b] = tab.rhs(i).max(0.0);
    }
    let z: Vec<f64> = (0..n).map(|j| split[2 * j] - split[2 * j + 1]).collect();
    let value = z.iter().zip(&lp.objective).map(|(a, b)| a * b).sum();
    Ok(LpSolution {
        status: LpStatus::Optimal,
        primal: Some(Vector::new(z)),
        objective_value: Some(value),
        iterations: iters,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn single_var() -> LinearProgram {
        LinearProgram::new(1)
    }

    #[test]
    fn lower_bound_is_attained() {
        let mut lp = single_var();
        lp.set_objective(0, 1.0);
        lp.add_ge(&[(0, 1.0)], 3.0);
        let sol = solve(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.primal.unwrap()[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn contradictory_bounds_are_infeasible() {
        let mut lp = single_var();
        lp.add_le(&[(0, 1.0)], -1.0);
        lp.add_ge(&[(0, 1.0)], 1.0);
        assert_eq!(solve(&lp).unwrap().status, LpStatus::Infeasible);
        assert!(!check_feasible(&lp).unwrap());
    }

    #[test]
    fn open_ray_is_unbounded() {
        let mut lp = single_var();
        lp.set_objective(0, -1.0);
        lp.add_ge(&[(0, 1.0)], 0.0);
        assert_eq!(solve(&lp).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn empty_constraint_set_is_feasible() {
        assert!(check_feasible(&LinearProgram::new(3)).unwrap());
        let sol = solve(&LinearProgram::new(2)).unwrap();
        assert_eq!(sol.primal.unwrap().into_inner(), vec![0.0, 0.0]);
    }

    #[test]
    fn metzler_certificate_program_is_feasible() {
        // A mu <= -eps, mu >= 1 for A = [[-2, 1], [3, -5]].
        let mut lp = LinearProgram::new(2);
        lp.add_le(&[(0, -2.0), (1, 1.0)], -1e-6);
        lp.add_le(&[(0, 3.0), (1, -5.0)], -1e-6);
        lp.add_ge(&[(0, 1.0)], 1.0);
        lp.add_ge(&[(1, 1.0)], 1.0);
        assert!(check_feasible(&lp).unwrap());
    }

    #[test]
    fn equality_rows_and_zero_rows() {
        let mut lp = LinearProgram::new(2);
        lp.set_objective(0, 1.0);
        lp.set_objective(1, 2.0);
        lp.add_eq(&[(0, 1.0), (1, 1.0)], 4.0);
        lp.add_ge(&[(0, 1.0)], 0.0);
        lp.add_ge(&[(1, 1.0)], 0.0);
        lp.add_le(&[], 1.0);
        let sol = solve(&lp).unwrap();
        let z = sol.primal.unwrap();
        assert!((z[0] - 4.0).abs() < 1e-12 && z[1].abs() < 1e-12);

        let mut bad = LinearProgram::new(1);
        bad.add_eq(&[], 1.0);
        assert_eq!(solve(&bad).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn malformed_blocks_are_rejected() {
        let err = LinearProgram::from_parts(
            Vector::ones(2),
            &Matrix::zeros(1, 3),
            &[0.0],
            &Matrix::zeros(0, 0),
            &[],
        )
        .unwrap_err();
        assert!(matches!(err, LpError::Dimension(_)));
        let err = LinearProgram::from_parts(Vector::ones(2), &Matrix::zeros(2, 2), &[0.0], &Matrix::zeros(0, 0), &[])
            .unwrap_err();
        assert!(matches!(err, LpError::Dimension(_)));
    }

    #[test]
    fn iteration_limit_is_a_distinct_error() {
        let mut lp = LinearProgram::new(2);
        lp.set_objective(0, -1.0);
        lp.set_objective(1, -1.0);
        lp.add_le(&[(0, 1.0)], 1.0);
        lp.add_le(&[(1, 1.0)], 1.0);
        lp.add_ge(&[(0, 1.0), (1, 1.0)], 0.5);
        let opts = SolverOptions {
            max_iterations: Some(0),
            ..SolverOptions::default()
        };
        assert_eq!(solve_with(&lp, &opts).unwrap_err(), LpError::IterationLimit { limit: 0 });
    }

    #[test]
    fn degenerate_program_terminates() {
        // Classic Beale cycling example; Bland's rule must terminate.
        let mut lp = LinearProgram::new(4);
        for (j, c) in [-0.75, 150.0, -0.02, 6.0].into_iter().enumerate() {
            lp.set_objective(j, c);
            lp.add_ge(&[(j, 1.0)], 0.0);
        }
        lp.add_le(&[(0, 0.25), (1, -60.0), (2, -0.04), (3, 9.0)], 0.0);
        lp.add_le(&[(0, 0.5), (1, -90.0), (2, -0.02), (3, 3.0)], 0.0);
        lp.add_le(&[(2, 1.0)], 1.0);
        let sol = solve(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective_value.unwrap() + 0.05).abs() < 1e-9);
    }

    /// Random bounded program: box |z| <= 10 plus random rows with z = 0
    /// strictly feasible.
    fn random_program(rng: &mut ChaCha8Rng, n: usize, k: usize) -> LinearProgram {
        let mut lp = LinearProgram::new(n);
        for j in 0..n {
            lp.set_objective(j, rng.gen_range(-5.0..5.0));
            lp.add_le(&[(j, 1.0)], 10.0);
            lp.add_le(&[(j, -1.0)], 10.0);
        }
        for _ in 0..k {
            let terms: Vec<(usize, f64)> = (0..n).map(|j| (j, rng.gen_range(-3.0..3.0))).collect();
            lp.add_le(&terms, rng.gen_range(0.5..5.0));
        }
        lp
    }

    /// Dual of `min c.z, A z <= b` (z free): `max -b.y, A^T y = -c, y >= 0`.
    fn dual_of(lp: &LinearProgram) -> LinearProgram {
        let a = lp.ineq_lhs();
        let k = a.rows();
        let mut dual = LinearProgram::new(k);
        for (i, &b) in lp.ineq_rhs().iter().enumerate() {
            dual.set_objective(i, b);
            dual.add_ge(&[(i, 1.0)], 0.0);
        }
        for j in 0..lp.num_vars() {
            let terms: Vec<(usize, f64)> = (0..k).map(|i| (i, a[(i, j)])).collect();
            dual.add_eq(&terms, -lp.objective()[j]);
        }
        dual
    }

    /// Brute force: enumerate every vertex (n active rows), keep the best
    /// feasible one.
    fn vertex_enumeration(lp: &LinearProgram) -> f64 {
        let a = lp.ineq_lhs();
        let b = lp.ineq_rhs();
        let n = lp.num_vars();
        let k = a.rows();
        let mut best = f64::INFINITY;
        let mut idx: Vec<usize> = (0..n).collect();
        loop {
            let rows: Vec<Vec<f64>> = idx.iter().map(|&i| a.row(i).to_vec()).collect();
            let sub = Matrix::from_rows(&rows).unwrap();
            let rhs: Vec<f64> = idx.iter().map(|&i| b[i]).collect();
            if let Ok(x) = solve_linear(&sub, &Matrix::column(&rhs)) {
                let z = x.col(0);
                if lp.max_violation(&z) <= 1e-9 {
                    let v: f64 = z.iter().zip(lp.objective()).map(|(p, q)| p * q).sum();
                    best = best.min(v);
                }
            }
            // next combination
            let mut i = n;
            while i > 0 && idx[i - 1] == k - n + i - 1 {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            idx[i - 1] += 1;
            for j in i..n {
                idx[j] = idx[j - 1] + 1;
            }
        }
        best
    }

    #[test]
    fn matches_vertex_enumeration_on_small_programs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..40 {
            let n = rng.gen_range(1..=3);
            let k = rng.gen_range(1..=5);
            let lp = random_program(&mut rng, n, k);
            let sol = solve(&lp).unwrap();
            let oracle = vertex_enumeration(&lp);
            assert!((sol.objective_value.unwrap() - oracle).abs() <= 1e-7 * (1.0 + oracle.abs()));
        }
    }

    #[test]
    fn strong_duality_on_random_programs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..60 {
            let n = rng.gen_range(1..=10);
            let k = rng.gen_range(1..=8);
            let lp = random_program(&mut rng, n, k);
            let primal = solve(&lp).unwrap();
            let dual = solve(&dual_of(&lp)).unwrap();
            assert_eq!(primal.status, LpStatus::Optimal);
            assert_eq!(dual.status, LpStatus::Optimal);
            let p = primal.objective_value.unwrap();
            let d = -dual.objective_value.unwrap();
            assert!((p - d).abs() <= 1e-6 * (1.0 + p.abs()), "primal {p} dual {d}");
        }
    }

    proptest! {
        #[test]
        fn optimal_points_are_feasible_and_deterministic(seed in 0u64..10_000, n in 1usize..=8, k in 0usize..=10) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut lp = random_program(&mut rng, n, k);
            if seed % 3 == 0 {
                let terms: Vec<(usize, f64)> = (0..n).map(|j| (j, rng.gen_range(-1.0..1.0))).collect();
                lp.add_eq(&terms, 0.0);
            }
            let first = solve(&lp).unwrap();
            let second = solve(&lp.clone()).unwrap();
            prop_assert_eq!(&first, &second);
            prop_assert_eq!(first.status, LpStatus::Optimal);
            let z = first.primal.unwrap();
            prop_assert!(lp.max_violation(&z) <= 1e-8);
        }
    }
}
