//! Optimal interval-observer synthesis by linear programming.
//!
//! Every design problem shares one variable layout: the diagonal `x` of a
//! positive diagonal matrix `X`, the matrix `U = X L` (row-major), an
//! optional diagonal shift `alpha` and the gain bound `gamma`. The gain is
//! recovered as `L = X^-1 U`. Strict inequalities are posed with margin
//! `epsilon`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lp::{self, LinearProgram, LpError, LpStatus, DEFAULT_EPSILON};
use crate::matrix::{LinalgError, Matrix, DEFAULT_STRUCTURE_TOL};
use crate::positive::{
    hurwitz_certificate, linf_gain_closed, metzler_violations, negative_entries, AnalysisError, ContinuousSystem,
    DelaySystem, DiscreteDelaySystem, DiscreteSystem, ErrorDynamics, MembershipViolation,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthesisError {
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("invalid observer specification: {0}")]
    InvalidSpec(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObserverForm {
    /// Observer driven by the disturbance bounds through `E - LF >= 0`.
    #[default]
    Standard,
    /// Observer splitting `E - LF` into positive and negative parts; no sign
    /// condition on `E - LF`.
    Relaxed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObserverSpec {
    #[serde(default)]
    pub form: ObserverForm,
    /// Entrywise lower bound on `L`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain_lower: Option<Matrix>,
    /// Entrywise upper bound on `L`. Entries equal to the lower bound pin `L`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain_upper: Option<Matrix>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

impl Default for ObserverSpec {
    fn default() -> Self {
        Self {
            form: ObserverForm::Standard,
            gain_lower: None,
            gain_upper: None,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

impl ObserverSpec {
    pub fn relaxed() -> Self {
        Self {
            form: ObserverForm::Relaxed,
            ..Self::default()
        }
    }

    pub fn with_bounds(mut self, lower: Matrix, upper: Matrix) -> Self {
        self.gain_lower = Some(lower);
        self.gain_upper = Some(upper);
        self
    }

    /// Symmetric box `-bound <= L <= bound` on an `n x r` gain.
    pub fn with_box(self, n: usize, r: usize, bound: f64) -> Self {
        self.with_bounds(Matrix::filled(n, r, -bound), Matrix::filled(n, r, bound))
    }

    /// Fixes `L` to `gain`.
    pub fn pinned(self, gain: Matrix) -> Self {
        self.with_bounds(gain.clone(), gain)
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn validate(&self, n: usize, r: usize) -> Result<(), SynthesisError> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(SynthesisError::InvalidSpec(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        for (name, bound) in [("gain_lower", &self.gain_lower), ("gain_upper", &self.gain_upper)] {
            if let Some(b) = bound {
                if b.shape() != (n, r) {
                    return Err(SynthesisError::InvalidSpec(format!(
                        "{name} is {}x{}, expected {n}x{r}",
                        b.rows(),
                        b.cols()
                    )));
                }
            }
        }
        if let (Some(lo), Some(hi)) = (&self.gain_lower, &self.gain_upper) {
            for i in 0..n {
                for j in 0..r {
                    if lo[(i, j)] > hi[(i, j)] {
                        return Err(SynthesisError::InvalidSpec(format!(
                            "gain_lower ({i}, {j}) = {} exceeds gain_upper = {}",
                            lo[(i, j)],
                            hi[(i, j)]
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    fn pinned_value(&self, i: usize, j: usize) -> Option<f64> {
        match (&self.gain_lower, &self.gain_upper) {
            (Some(lo), Some(hi)) if lo[(i, j)] == hi[(i, j)] => Some(lo[(i, j)]),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignStatus {
    Optimal,
    Infeasible,
}

/// Closed interval `[lower, upper]` with infinite ends allowed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lower: f64,
    pub upper: f64,
}

/// A gain entry whose admissible values under the sign condition on
/// `E - LF` and under the stability/Metzler conditions do not overlap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryConflict {
    pub row: usize,
    pub col: usize,
    pub nonnegativity: Range,
    pub stability: Range,
    pub summary: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InfeasibilityDiagnostic {
    /// No gain within the bounds makes the error dynamics positive and stable.
    NoStabilizingGain,
    /// Stabilizing gains exist, but none of them keeps `E - LF >= 0`.
    NonnegativityConflict { conflicts: Vec<EntryConflict> },
}

impl std::fmt::Display for InfeasibilityDiagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::NoStabilizingGain => write!(f, "no gain makes the error dynamics positive and stable"),
            Self::NonnegativityConflict { conflicts } if conflicts.is_empty() => {
                write!(f, "E - LF >= 0 conflicts with Hurwitz requirement")
            }
            Self::NonnegativityConflict { conflicts } => {
                let parts: Vec<&str> = conflicts.iter().map(|c| c.summary.as_str()).collect();
                write!(f, "E - LF >= 0 conflicts with Hurwitz requirement: {}", parts.join("; "))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignResult {
    pub status: DesignStatus,
    pub form: ObserverForm,
    pub epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_star: Option<Matrix>,
    /// Certified bound on the gain with output weight `1^T` and no feedthrough.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_star: Option<f64>,
    /// Diagonal of `X`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_star: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_star: Option<Matrix>,
    /// Smallest diagonal shift making `X(A - LC) + alpha I` nonnegative;
    /// absent for discrete-time designs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_star: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<InfeasibilityDiagnostic>,
    pub lp_iterations: usize,
}

impl DesignResult {
    pub fn is_optimal(&self) -> bool {
        self.status == DesignStatus::Optimal
    }

    pub fn x_matrix(&self) -> Option<Matrix> {
        self.x_star.as_deref().map(Matrix::diagonal)
    }
}

/// Any plant the synthesis routines accept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum SystemModel {
    Continuous(ContinuousSystem),
    Discrete(DiscreteSystem),
    Delay(DelaySystem),
    DiscreteDelay(DiscreteDelaySystem),
}

impl SystemModel {
    pub fn dims(&self) -> (usize, usize, usize) {
        match self {
            Self::Continuous(s) => s.dims(),
            Self::Discrete(s) => s.dims(),
            Self::Delay(s) => s.dims(),
            Self::DiscreteDelay(s) => s.dims(),
        }
    }
}

/// How the disturbance enters the gain row of the design program.
#[derive(Clone, Copy)]
enum GainRow<'a> {
    /// `1^T (X E - U F) 1_p`
    Input(&'a Matrix, &'a Matrix),
    /// `1^T X 1_n`: identity input matrix of the relaxed observer.
    Aggregated,
}

/// Constraint blocks of one design program.
struct DesignProgram<'a> {
    n: usize,
    r: usize,
    /// Off-diagonal entries of `XA - UC` nonnegative, diagonal shifted by alpha.
    metzler: Option<(&'a Matrix, &'a Matrix)>,
    /// Every entry of `XA - UC` nonnegative.
    nonnegative: Vec<(&'a Matrix, &'a Matrix)>,
    /// `XE - UF >= 0`.
    input: Option<(&'a Matrix, &'a Matrix)>,
    /// Column sums of `X A_s - U C_s` plus one must be `<= -epsilon`.
    stability: (Matrix, Matrix),
    gain_row: GainRow<'a>,
    spec: &'a ObserverSpec,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Blocks {
    All,
    StabilityOnly,
    InputOnly,
}

impl<'a> DesignProgram<'a> {
    fn x(&self, i: usize) -> usize {
        i
    }

    fn u(&self, i: usize, k: usize) -> usize {
        self.n + i * self.r + k
    }

    fn alpha(&self) -> usize {
        self.n + self.n * self.r
    }

    fn num_vars(&self) -> usize {
        self.alpha() + usize::from(self.metzler.is_some()) + 1
    }

    fn gamma(&self) -> usize {
        self.num_vars() - 1
    }

    /// Coefficients of entry `(i, j)` of `X a - U c`.
    fn entry_terms(&self, a: &Matrix, c: &Matrix, i: usize, j: usize) -> Vec<(usize, f64)> {
        let mut terms = vec![(self.x(i), a[(i, j)])];
        terms.extend((0..self.r).map(|k| (self.u(i, k), -c[(k, j)])));
        terms
    }

    fn build(&self, blocks: Blocks, eps: f64) -> LinearProgram {
        let (n, r) = (self.n, self.r);
        let mut lp = LinearProgram::new(self.num_vars());
        for i in 0..n {
            lp.add_ge(&[(self.x(i), 1.0)], eps);
        }
        if let Some(lo) = &self.spec.gain_lower {
            for i in 0..n {
                for k in 0..r {
                    lp.add_ge(&[(self.u(i, k), 1.0), (self.x(i), -lo[(i, k)])], 0.0);
                }
            }
        }
        if let Some(hi) = &self.spec.gain_upper {
            for i in 0..n {
                for k in 0..r {
                    lp.add_le(&[(self.u(i, k), 1.0), (self.x(i), -hi[(i, k)])], 0.0);
                }
            }
        }
        if blocks != Blocks::InputOnly {
            if let Some((a, c)) = self.metzler {
                let bound = 1e6 * a.norm_inf().max(1.0);
                lp.add_le(&[(self.alpha(), 1.0)], bound);
                lp.add_ge(&[(self.alpha(), 1.0)], -bound);
                for i in 0..n {
                    for j in 0..n {
                        let mut terms = self.entry_terms(a, c, i, j);
                        if i == j {
                            terms.push((self.alpha(), 1.0));
                        }
                        lp.add_ge(&terms, 0.0);
                    }
                }
            }
            for (a, c) in &self.nonnegative {
                for i in 0..n {
                    for j in 0..n {
                        lp.add_ge(&self.entry_terms(a, c, i, j), 0.0);
                    }
                }
            }
            // The output weight only matters for the gain; pure stability
            // rows are homogeneous so that x_i = 1 can be fixed in diagnostics.
            let weight = if blocks == Blocks::All { 1.0 } else { 0.0 };
            let (a_s, c_s) = &self.stability;
            for j in 0..n {
                let terms: Vec<(usize, f64)> = (0..n).flat_map(|i| self.entry_terms(a_s, c_s, i, j)).collect();
                lp.add_le(&terms, -eps - weight);
            }
        }
        if blocks != Blocks::StabilityOnly {
            if let Some((e, f)) = self.input {
                for i in 0..n {
                    for j in 0..e.cols() {
                        lp.add_ge(&self.entry_terms(e, f, i, j), 0.0);
                    }
                }
            }
        }
        if blocks == Blocks::All {
            let mut terms: Vec<(usize, f64)> = match self.gain_row {
                GainRow::Input(e, f) => {
                    let (e_sum, f_sum) = (e.row_sums(), f.row_sums());
                    let mut t: Vec<(usize, f64)> = (0..n).map(|i| (self.x(i), e_sum[i])).collect();
                    for i in 0..n {
                        t.extend((0..r).map(|k| (self.u(i, k), -f_sum[k])));
                    }
                    t
                }
                GainRow::Aggregated => (0..n).map(|i| (self.x(i), 1.0)).collect(),
            };
            terms.push((self.gamma(), -1.0));
            lp.add_le(&terms, -eps);
            lp.set_objective(self.gamma(), 1.0);
        }
        lp
    }

    fn solve(&self) -> Result<DesignResult, SynthesisError> {
        let lp = self.build(Blocks::All, self.spec.epsilon);
        let sol = lp::solve(&lp)?;
        match sol.status {
            LpStatus::Optimal => {}
            LpStatus::Infeasible => {
                return Ok(DesignResult {
                    status: DesignStatus::Infeasible,
                    form: self.form(),
                    epsilon: self.spec.epsilon,
                    l_star: None,
                    gamma_star: None,
                    x_star: None,
                    u_star: None,
                    alpha_star: None,
                    diagnostic: Some(self.diagnose()?),
                    lp_iterations: sol.iterations,
                })
            }
            LpStatus::Unbounded => {
                return Err(SynthesisError::Lp(LpError::Dimension("design program reported unbounded".into())))
            }
        }
        let z = sol.primal.expect("optimal solution carries a primal point");
        let (n, r) = (self.n, self.r);
        let x: Vec<f64> = (0..n).map(|i| z[self.x(i)]).collect();
        let mut u = Matrix::zeros(n, r);
        let mut l = Matrix::zeros(n, r);
        for i in 0..n {
            for k in 0..r {
                u[(i, k)] = z[self.u(i, k)];
                let mut v = self.spec.pinned_value(i, k).unwrap_or(u[(i, k)] / x[i]);
                // Rounding in U / x can step a few ulps outside the box;
                // larger gaps are left for the certifier to judge.
                let ulps = |b: f64| 1e-12 * (1.0 + b.abs());
                if let Some(b) = self.spec.gain_lower.as_ref().map(|lo| lo[(i, k)]) {
                    if v < b && b - v <= ulps(b) {
                        v = b;
                    }
                }
                if let Some(b) = self.spec.gain_upper.as_ref().map(|hi| hi[(i, k)]) {
                    if v > b && v - b <= ulps(b) {
                        v = b;
                    }
                }
                l[(i, k)] = v + 0.0;
            }
        }
        let alpha_star = match self.metzler {
            Some((a, c)) => {
                let xa_cl = Matrix::diagonal(&x).matmul(&a.sub(&l.matmul(c)?)?)?;
                Some((0..n).map(|i| -xa_cl[(i, i)]).fold(f64::NEG_INFINITY, f64::max))
            }
            None => None,
        };
        Ok(DesignResult {
            status: DesignStatus::Optimal,
            form: self.form(),
            epsilon: self.spec.epsilon,
            l_star: Some(l),
            gamma_star: Some(z[self.gamma()]),
            x_star: Some(x),
            u_star: Some(u),
            alpha_star,
            diagnostic: None,
            lp_iterations: sol.iterations,
        })
    }

    fn form(&self) -> ObserverForm {
        match self.gain_row {
            GainRow::Input(..) => ObserverForm::Standard,
            GainRow::Aggregated => ObserverForm::Relaxed,
        }
    }

    /// Explains infeasibility. A second solve without the `XE - UF >= 0`
    /// rows separates "no stabilizing gain" from a sign conflict; per-entry
    /// ranges of `L` (with `x_i = 1` by homogeneity) locate the conflict.
    fn diagnose(&self) -> Result<InfeasibilityDiagnostic, SynthesisError> {
        if !lp::check_feasible(&self.build(Blocks::StabilityOnly, self.spec.epsilon))? {
            return Ok(InfeasibilityDiagnostic::NoStabilizingGain);
        }
        // Ranges use a negligible margin so that reported thresholds are the
        // limits of the open conditions, not shifted by epsilon.
        let stability = self.build(Blocks::StabilityOnly, RANGE_MARGIN);
        let nonneg = self.build(Blocks::InputOnly, RANGE_MARGIN);
        let mut conflicts = Vec::new();
        for i in 0..self.n {
            for k in 0..self.r {
                let s = self.entry_range(&stability, i, k)?;
                let g = self.entry_range(&nonneg, i, k)?;
                let name = if self.r == 1 {
                    format!("l{}", i + 1)
                } else {
                    format!("l{}{}", i + 1, k + 1)
                };
                let summary = if g.upper < s.lower {
                    format!("{name} <= {} (E-LF>=0) vs {name} > {} (Hurwitz)", tidy(g.upper), tidy(s.lower))
                } else if s.upper < g.lower {
                    format!("{name} >= {} (E-LF>=0) vs {name} < {} (Hurwitz)", tidy(g.lower), tidy(s.upper))
                } else {
                    continue;
                };
                conflicts.push(EntryConflict {
                    row: i,
                    col: k,
                    nonnegativity: g,
                    stability: s,
                    summary,
                });
            }
        }
        Ok(InfeasibilityDiagnostic::NonnegativityConflict { conflicts })
    }

    fn entry_range(&self, base: &LinearProgram, i: usize, k: usize) -> Result<Range, SynthesisError> {
        let mut lp = base.clone();
        lp.add_eq(&[(self.x(i), 1.0)], 1.0);
        let mut ends = [0.0; 2];
        for (slot, sign) in [(0, 1.0), (1, -1.0)] {
            let mut probe = lp.clone();
            for v in 0..probe.num_vars() {
                probe.set_objective(v, 0.0);
            }
            probe.set_objective(self.u(i, k), sign);
            let sol = lp::solve(&probe)?;
            ends[slot] = match sol.status {
                LpStatus::Optimal => sign * sol.objective_value.unwrap_or(0.0),
                LpStatus::Unbounded => -sign * f64::INFINITY,
                LpStatus::Infeasible => f64::NAN,
            };
        }
        Ok(Range {
            lower: ends[0],
            upper: ends[1],
        })
    }
}

const RANGE_MARGIN: f64 = 1e-10;

/// Rounds LP noise away for display.
fn tidy(v: f64) -> f64 {
    if !v.is_finite() {
        return v;
    }
    let scale = 1e6;
    (v * scale).round() / scale
}

/// Standard-form (or, by `spec.form`, relaxed) design for a continuous-time plant.
pub fn design_ct(sys: &ContinuousSystem, spec: &ObserverSpec) -> Result<DesignResult, SynthesisError> {
    if spec.form == ObserverForm::Relaxed {
        return design_relaxed(sys, spec);
    }
    sys.validate()?;
    let (n, _, r) = sys.dims();
    spec.validate(n, r)?;
    DesignProgram {
        n,
        r,
        metzler: Some((&sys.a, &sys.c)),
        nonnegative: Vec::new(),
        input: Some((&sys.e, &sys.f)),
        stability: (sys.a.clone(), sys.c.clone()),
        gain_row: GainRow::Input(&sys.e, &sys.f),
        spec,
    }
    .solve()
}

/// Relaxed-form design: no sign condition on `E - LF`; the gain row uses
/// the identity input matrix, so `gamma_star` bounds the n-channel relaxed
/// error system rather than the original p-channel one.
pub fn design_relaxed(sys: &ContinuousSystem, spec: &ObserverSpec) -> Result<DesignResult, SynthesisError> {
    sys.validate()?;
    let (n, _, r) = sys.dims();
    spec.validate(n, r)?;
    DesignProgram {
        n,
        r,
        metzler: Some((&sys.a, &sys.c)),
        nonnegative: Vec::new(),
        input: None,
        stability: (sys.a.clone(), sys.c.clone()),
        gain_row: GainRow::Aggregated,
        spec,
    }
    .solve()
}

fn standard_only(spec: &ObserverSpec, what: &str) -> Result<(), SynthesisError> {
    if spec.form == ObserverForm::Relaxed {
        return Err(SynthesisError::Unsupported(format!("relaxed observer form for {what} plants")));
    }
    Ok(())
}

/// Design for a plant with a constant state delay. Independent of `h`.
pub fn design_delay(sys: &DelaySystem, spec: &ObserverSpec) -> Result<DesignResult, SynthesisError> {
    standard_only(spec, "delay")?;
    sys.validate()?;
    let (n, _, r) = sys.dims();
    spec.validate(n, r)?;
    DesignProgram {
        n,
        r,
        metzler: Some((&sys.a, &sys.c)),
        nonnegative: vec![(&sys.a_h, &sys.c_h)],
        input: Some((&sys.e, &sys.f)),
        stability: (sys.a.add(&sys.a_h)?, sys.c.add(&sys.c_h)?),
        gain_row: GainRow::Input(&sys.e, &sys.f),
        spec,
    }
    .solve()
}

/// Discrete-time design: `A_d - L C_d` must be nonnegative and Schur.
pub fn design_dt(sys: &DiscreteSystem, spec: &ObserverSpec) -> Result<DesignResult, SynthesisError> {
    standard_only(spec, "discrete-time")?;
    ContinuousSystem::new(sys.a.clone(), sys.e.clone(), sys.c.clone(), sys.f.clone())?;
    let (n, _, r) = sys.dims();
    spec.validate(n, r)?;
    DesignProgram {
        n,
        r,
        metzler: None,
        nonnegative: vec![(&sys.a, &sys.c)],
        input: Some((&sys.e, &sys.f)),
        stability: (sys.a.sub(&Matrix::identity(n))?, sys.c.clone()),
        gain_row: GainRow::Input(&sys.e, &sys.f),
        spec,
    }
    .solve()
}

/// Discrete-time design with a delayed state term.
pub fn design_dt_delay(sys: &DiscreteDelaySystem, spec: &ObserverSpec) -> Result<DesignResult, SynthesisError> {
    standard_only(spec, "discrete-time delay")?;
    let (n, _, r) = sys.dims();
    spec.validate(n, r)?;
    let shifted = sys.a.add(&sys.a_h)?.sub(&Matrix::identity(n))?;
    DesignProgram {
        n,
        r,
        metzler: None,
        nonnegative: vec![(&sys.a, &sys.c), (&sys.a_h, &sys.c_h)],
        input: Some((&sys.e, &sys.f)),
        stability: (shifted, sys.c.add(&sys.c_h)?),
        gain_row: GainRow::Input(&sys.e, &sys.f),
        spec,
    }
    .solve()
}

/// Dispatches to the design routine for the plant class.
pub fn design(model: &SystemModel, spec: &ObserverSpec) -> Result<DesignResult, SynthesisError> {
    match model {
        SystemModel::Continuous(s) => design_ct(s, spec),
        SystemModel::Discrete(s) => design_dt(s, spec),
        SystemModel::Delay(s) => design_delay(s, spec),
        SystemModel::DiscreteDelay(s) => design_dt_delay(s, spec),
    }
}

/// Continuous-time generator of the error dynamics closed by `l`, after the
/// membership checks of the model class and observer form. Discrete-time
/// models map through `A - LC - I`, delay models through the aggregate
/// `A + A_h - L(C + C_h)`. The relaxed form has identity input.
pub fn error_dynamics(model: &SystemModel, form: ObserverForm, l: &Matrix) -> Result<ErrorDynamics, SynthesisError> {
    let (n, _, r) = model.dims();
    if l.shape() != (n, r) {
        return Err(SynthesisError::InvalidSpec(format!("L is {}x{}, expected {n}x{r}", l.rows(), l.cols())));
    }
    if form == ObserverForm::Relaxed && !matches!(model, SystemModel::Continuous(_)) {
        return Err(SynthesisError::Unsupported("relaxed observers are continuous-time only".into()));
    }
    let tol = DEFAULT_STRUCTURE_TOL;
    let closed = |a: &Matrix, c: &Matrix| -> Result<Matrix, LinalgError> { a.sub(&l.matmul(c)?) };
    let nonneg = |m: &Matrix, delayed: bool| -> Vec<MembershipViolation> {
        negative_entries(m, tol)
            .map(|(row, col, value)| match delayed {
                true => MembershipViolation::DelayNegative { row, col, value },
                false => MembershipViolation::StateNegative { row, col, value },
            })
            .collect()
    };
    let shift = Matrix::identity(n);
    let (mut v, generator, e_cl) = match model {
        SystemModel::Continuous(s) => {
            let a_cl = closed(&s.a, &s.c)?;
            (metzler_violations(&a_cl, tol), a_cl, closed(&s.e, &s.f)?)
        }
        SystemModel::Delay(s) => {
            let a_cl = closed(&s.a, &s.c)?;
            let ah_cl = closed(&s.a_h, &s.c_h)?;
            let mut v = metzler_violations(&a_cl, tol);
            v.extend(nonneg(&ah_cl, true));
            (v, a_cl.add(&ah_cl)?, closed(&s.e, &s.f)?)
        }
        SystemModel::Discrete(s) => {
            let a_cl = closed(&s.a, &s.c)?;
            (nonneg(&a_cl, false), a_cl.sub(&shift)?, closed(&s.e, &s.f)?)
        }
        SystemModel::DiscreteDelay(s) => {
            let a_cl = closed(&s.a, &s.c)?;
            let ah_cl = closed(&s.a_h, &s.c_h)?;
            let mut v = nonneg(&a_cl, false);
            v.extend(nonneg(&ah_cl, true));
            (v, a_cl.add(&ah_cl)?.sub(&shift)?, closed(&s.e, &s.f)?)
        }
    };
    if v.is_empty() && hurwitz_certificate(&generator)?.is_none() {
        v.push(MembershipViolation::NotHurwitz);
    }
    if form == ObserverForm::Standard {
        v.extend(
            negative_entries(&e_cl, tol).map(|(row, col, value)| MembershipViolation::InputNegative { row, col, value }),
        );
    }
    if !v.is_empty() {
        return Err(AnalysisError::NotAdmissible(v).into());
    }
    let input = match form {
        ObserverForm::Standard => e_cl,
        ObserverForm::Relaxed => shift,
    };
    Ok(ErrorDynamics {
        a_cl: generator,
        e_cl: input,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    NotOptimal,
    GainRecovery,
    GainBounds,
    Metzler,
    StateNonnegative,
    DelayNonnegative,
    InputNonnegative,
    RowCondition,
    IndependentGain,
    Membership,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificationFlag {
    pub check: CheckKind,
    pub detail: String,
    /// Amount by which the constraint is violated.
    pub excess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificationReport {
    pub flags: Vec<CertificationFlag>,
    /// Gain with output weight `1^T`, no feedthrough, computed from `L*`
    /// alone by the closed form.
    pub independent_gain: Option<f64>,
    pub tolerance: f64,
}

impl CertificationReport {
    pub fn is_clean(&self) -> bool {
        self.flags.is_empty()
    }
}

struct Flagger {
    tol: f64,
    flags: Vec<CertificationFlag>,
}

impl Flagger {
    /// Flags `value > limit + tol`.
    fn at_most(&mut self, check: CheckKind, value: f64, limit: f64, what: impl FnOnce() -> String) {
        if value > limit + self.tol || value.is_nan() {
            self.flags.push(CertificationFlag {
                check,
                detail: what(),
                excess: value - limit,
            });
        }
    }

    fn entries_nonnegative(&mut self, check: CheckKind, name: &str, m: &Matrix, skip_diagonal: bool) {
        for i in 0..m.rows() {
            for j in 0..m.cols() {
                if skip_diagonal && i == j {
                    continue;
                }
                let v = m[(i, j)];
                self.at_most(check, -v, 0.0, || format!("{name} entry ({i}, {j}) = {v}"));
            }
        }
    }
}

/// Re-checks every design constraint on the returned solution, using `L*`
/// (not `U*`) wherever the gain enters, and recomputes the gain
/// independently. Violations beyond `10 epsilon` (relative to the scale of
/// the quantity) are flagged.
pub fn certify(result: &DesignResult, model: &SystemModel, spec: &ObserverSpec) -> CertificationReport {
    let tol = 10.0 * spec.epsilon;
    let mut f = Flagger {
        tol,
        flags: Vec::new(),
    };
    let (Some(l), Some(x), Some(u), Some(gamma)) = (&result.l_star, &result.x_star, &result.u_star, result.gamma_star) else {
        f.flags.push(CertificationFlag {
            check: CheckKind::NotOptimal,
            detail: "design did not return a solution".into(),
            excess: f64::INFINITY,
        });
        return CertificationReport {
            flags: f.flags,
            independent_gain: None,
            tolerance: tol,
        };
    };
    let independent_gain = match certify_inner(&mut f, result, model, spec, l, x, u, gamma) {
        Ok(g) => g,
        Err(err) => {
            f.flags.push(CertificationFlag {
                check: CheckKind::Membership,
                detail: err.to_string(),
                excess: f64::INFINITY,
            });
            None
        }
    };
    CertificationReport {
        flags: f.flags,
        independent_gain,
        tolerance: tol,
    }
}

/// Zeroes negative entries no larger than `tol` (off the diagonal when
/// `skip_diagonal`); larger ones are left for the gain routines to reject.
fn snap_signs(m: &Matrix, tol: f64, skip_diagonal: bool) -> Matrix {
    let mut out = m.clone();
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            let v = m[(i, j)];
            if !(skip_diagonal && i == j) && v < 0.0 && v >= -tol {
                out[(i, j)] = 0.0;
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn certify_inner(
    f: &mut Flagger,
    result: &DesignResult,
    model: &SystemModel,
    spec: &ObserverSpec,
    l: &Matrix,
    x: &[f64],
    u: &Matrix,
    gamma: f64,
) -> Result<Option<f64>, SynthesisError> {
    let (n, _, r) = model.dims();
    if l.shape() != (n, r) || x.len() != n || u.shape() != (n, r) {
        return Err(SynthesisError::InvalidSpec("result shapes do not match the plant".into()));
    }
    for (i, &xi) in x.iter().enumerate() {
        f.at_most(CheckKind::GainRecovery, -xi, -spec.epsilon, || format!("x[{i}] = {xi} not positive"));
    }
    for i in 0..n {
        for k in 0..r {
            let recovered = u[(i, k)] / x[i];
            let diff = (recovered - l[(i, k)]).abs();
            if diff > f.tol * (1.0 + l[(i, k)].abs()) {
                f.flags.push(CertificationFlag {
                    check: CheckKind::GainRecovery,
                    detail: format!("L[{i},{k}] = {} but U/X gives {recovered}", l[(i, k)]),
                    excess: diff,
                });
            }
            if let Some(lo) = &spec.gain_lower {
                let b = lo[(i, k)];
                f.at_most(CheckKind::GainBounds, (b - l[(i, k)]) / (1.0 + b.abs()), 0.0, || format!("L[{i},{k}] below lower bound {b}"));
            }
            if let Some(hi) = &spec.gain_upper {
                let b = hi[(i, k)];
                f.at_most(CheckKind::GainBounds, (l[(i, k)] - b) / (1.0 + b.abs()), 0.0, || format!("L[{i},{k}] above upper bound {b}"));
            }
        }
    }
    let xm = Matrix::diagonal(x);
    let closed = |a: &Matrix, c: &Matrix| -> Result<Matrix, LinalgError> { a.sub(&l.matmul(c)?) };
    let eps = spec.epsilon;
    let ones = Matrix::ones_row(n);
    let row_check = |f: &mut Flagger, a_s: &Matrix, name: &str| {
        let sums = xm.matmul(a_s).map(|m| m.col_sums()).unwrap_or_default();
        for (j, s) in sums.into_iter().enumerate() {
            f.at_most(CheckKind::RowCondition, s + 1.0, -eps, || {
                format!("column {j} of X({name}) + 1 = {} is not <= -epsilon", s + 1.0)
            });
        }
    };
    let gain_row = |f: &mut Flagger, e_cl: Option<&Matrix>| {
        let total: f64 = match e_cl {
            Some(e) => xm.matmul(e).map(|m| m.as_slice().iter().sum()).unwrap_or(f64::NAN),
            None => x.iter().sum(),
        };
        f.at_most(CheckKind::RowCondition, total - gamma, -eps, || {
            format!("disturbance row {total} - gamma {gamma} is not <= -epsilon")
        });
    };
    let relaxed = result.form == ObserverForm::Relaxed;
    let gain = match model {
        SystemModel::Continuous(s) => {
            let a_cl = closed(&s.a, &s.c)?;
            let e_cl = closed(&s.e, &s.f)?;
            f.entries_nonnegative(CheckKind::Metzler, "A - LC", &a_cl, true);
            if !relaxed {
                f.entries_nonnegative(CheckKind::InputNonnegative, "E - LF", &e_cl, false);
            }
            row_check(f, &a_cl, "A - LC");
            gain_row(f, (!relaxed).then_some(&e_cl));
            let a_cl = snap_signs(&a_cl, f.tol, true);
            if relaxed {
                linf_gain_closed(&a_cl, &Matrix::identity(n), &ones, &Matrix::zeros(1, n))?
            } else {
                linf_gain_closed(&a_cl, &snap_signs(&e_cl, f.tol, false), &ones, &Matrix::zeros(1, e_cl.cols()))?
            }
        }
        SystemModel::Delay(s) => {
            let a_cl = closed(&s.a, &s.c)?;
            let ah_cl = closed(&s.a_h, &s.c_h)?;
            let e_cl = closed(&s.e, &s.f)?;
            f.entries_nonnegative(CheckKind::Metzler, "A - LC", &a_cl, true);
            f.entries_nonnegative(CheckKind::DelayNonnegative, "A_h - LC_h", &ah_cl, false);
            f.entries_nonnegative(CheckKind::InputNonnegative, "E - LF", &e_cl, false);
            let agg = a_cl.add(&ah_cl)?;
            row_check(f, &agg, "A + A_h - L(C + C_h)");
            gain_row(f, Some(&e_cl));
            let agg = snap_signs(&a_cl, f.tol, true).add(&snap_signs(&ah_cl, f.tol, false))?;
            linf_gain_closed(&agg, &snap_signs(&e_cl, f.tol, false), &ones, &Matrix::zeros(1, e_cl.cols()))?
        }
        SystemModel::Discrete(s) => {
            let a_cl = closed(&s.a, &s.c)?;
            let e_cl = closed(&s.e, &s.f)?;
            f.entries_nonnegative(CheckKind::StateNonnegative, "A_d - LC_d", &a_cl, false);
            f.entries_nonnegative(CheckKind::InputNonnegative, "E_d - LF_d", &e_cl, false);
            let shifted = a_cl.sub(&Matrix::identity(n))?;
            row_check(f, &shifted, "A_d - LC_d - I");
            gain_row(f, Some(&e_cl));
            let shifted = snap_signs(&a_cl, f.tol, false).sub(&Matrix::identity(n))?;
            linf_gain_closed(&shifted, &snap_signs(&e_cl, f.tol, false), &ones, &Matrix::zeros(1, e_cl.cols()))?
        }
        SystemModel::DiscreteDelay(s) => {
            let a_cl = closed(&s.a, &s.c)?;
            let ah_cl = closed(&s.a_h, &s.c_h)?;
            let e_cl = closed(&s.e, &s.f)?;
            f.entries_nonnegative(CheckKind::StateNonnegative, "A_d - LC_d", &a_cl, false);
            f.entries_nonnegative(CheckKind::DelayNonnegative, "A_dh - LC_dh", &ah_cl, false);
            f.entries_nonnegative(CheckKind::InputNonnegative, "E_d - LF_d", &e_cl, false);
            let shifted = a_cl.add(&ah_cl)?.sub(&Matrix::identity(n))?;
            row_check(f, &shifted, "A_d + A_dh - L(C_d + C_dh) - I");
            gain_row(f, Some(&e_cl));
            let shifted = snap_signs(&a_cl, f.tol, false).add(&snap_signs(&ah_cl, f.tol, false))?.sub(&Matrix::identity(n))?;
            linf_gain_closed(&shifted, &snap_signs(&e_cl, f.tol, false), &ones, &Matrix::zeros(1, e_cl.cols()))?
        }
    };
    let slack = f.tol * gamma.abs().max(1.0);
    if gain > gamma + slack {
        f.flags.push(CertificationFlag {
            check: CheckKind::IndependentGain,
            detail: format!("independent gain {gain} exceeds gamma* {gamma}"),
            excess: gain - gamma,
        });
    }
    Ok(Some(gain))
}
