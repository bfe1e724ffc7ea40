//! Analysis of linear positive systems.
//!
//! Positivity is structural (Metzler state matrix, nonnegative input/output
//! matrices). Stability of a Metzler matrix is decided only through a linear
//! certificate: a vector `mu > 0` with `A mu < 0` (or its left counterpart).
//! Peak-to-peak gains use the closed form `max row sum(-Cz A^-1 E + Fz)`,
//! with an LP route kept for certificate extraction and cross-checks.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lp::{self, LinearProgram, LpError, DEFAULT_EPSILON};
use crate::matrix::{
    is_metzler, is_nonnegative, max_row_sum, solve_linear, LinalgError, Matrix, Vector, DEFAULT_STRUCTURE_TOL,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("system is not asymptotically stable (no Hurwitz certificate exists)")]
    Unstable,
    #[error("gain is not admissible: {}", join_violations(.0))]
    NotAdmissible(Vec<MembershipViolation>),
}

fn join_violations(v: &[MembershipViolation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// A reason an observer gain `L` fails to keep the error dynamics positive
/// and stable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Error)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MembershipViolation {
    #[error("A - LC is not Metzler: entry ({row}, {col}) = {value}")]
    NotMetzler { row: usize, col: usize, value: f64 },
    #[error("A - LC is not Hurwitz stable")]
    NotHurwitz,
    #[error("E - LF is not nonnegative: entry ({row}, {col}) = {value}")]
    InputNegative { row: usize, col: usize, value: f64 },
    #[error("delayed state matrix A_h - L C_h is not nonnegative: entry ({row}, {col}) = {value}")]
    DelayNegative { row: usize, col: usize, value: f64 },
    #[error("A_d - L C_d is not nonnegative: entry ({row}, {col}) = {value}")]
    StateNegative { row: usize, col: usize, value: f64 },
}

/// Strictness margin and structural tolerance shared by the analysis routines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Margins {
    /// Strict inequalities `g < 0` are posed as `g <= -epsilon`.
    pub epsilon: f64,
    /// Slack admitted by the Metzler / nonnegativity predicates.
    pub structure_tol: f64,
}

impl Default for Margins {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            structure_tol: DEFAULT_STRUCTURE_TOL,
        }
    }
}

impl Margins {
    pub fn with_epsilon(epsilon: f64) -> Self {
        Self {
            epsilon,
            ..Self::default()
        }
    }
}

fn check_shape(name: &str, m: &Matrix, rows: usize, cols: usize) -> Result<(), AnalysisError> {
    if m.shape() != (rows, cols) {
        return Err(AnalysisError::Dimension(format!(
            "{name} is {}x{}, expected {rows}x{cols}",
            m.rows(),
            m.cols()
        )));
    }
    Ok(())
}

fn square_dim(name: &str, a: &Matrix) -> Result<usize, AnalysisError> {
    if !a.is_square() {
        return Err(AnalysisError::Dimension(format!("{name} must be square, got {}x{}", a.rows(), a.cols())));
    }
    Ok(a.rows())
}

/// `x' = A x + E w`, `y = C x + F w`, with an optional performance output
/// `z = Cz x + Fz w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousSystem {
    pub a: Matrix,
    pub e: Matrix,
    pub c: Matrix,
    pub f: Matrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cz: Option<Matrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fz: Option<Matrix>,
}

impl ContinuousSystem {
    pub fn new(a: Matrix, e: Matrix, c: Matrix, f: Matrix) -> Result<Self, AnalysisError> {
        let sys = Self {
            a,
            e,
            c,
            f,
            cz: None,
            fz: None,
        };
        sys.validate()?;
        Ok(sys)
    }

    pub fn with_performance(mut self, cz: Matrix, fz: Matrix) -> Result<Self, AnalysisError> {
        self.cz = Some(cz);
        self.fz = Some(fz);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), AnalysisError> {
        let n = square_dim("A", &self.a)?;
        let p = self.e.cols();
        let r = self.c.rows();
        check_shape("E", &self.e, n, p)?;
        check_shape("C", &self.c, r, n)?;
        check_shape("F", &self.f, r, p)?;
        match (&self.cz, &self.fz) {
            (Some(cz), Some(fz)) => {
                check_shape("Cz", cz, cz.rows(), n)?;
                check_shape("Fz", fz, cz.rows(), p)?;
            }
            (None, None) => {}
            _ => return Err(AnalysisError::Dimension("Cz and Fz must be given together".into())),
        }
        Ok(())
    }

    /// `(n, p, r)`: states, disturbances, measured outputs.
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.a.rows(), self.e.cols(), self.c.rows())
    }
}

/// `x(k+1) = A_d x(k) + E_d w(k)`, `y(k) = C_d x(k) + F_d w(k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteSystem {
    pub a: Matrix,
    pub e: Matrix,
    pub c: Matrix,
    pub f: Matrix,
}

impl DiscreteSystem {
    pub fn new(a: Matrix, e: Matrix, c: Matrix, f: Matrix) -> Result<Self, AnalysisError> {
        ContinuousSystem::new(a.clone(), e.clone(), c.clone(), f.clone())?;
        Ok(Self { a, e, c, f })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.a.rows(), self.e.cols(), self.c.rows())
    }
}

/// `x' = A x + A_h x(t-h) + E w`, `y = C x + C_h x(t-h) + F w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelaySystem {
    pub a: Matrix,
    pub a_h: Matrix,
    pub e: Matrix,
    pub c: Matrix,
    pub c_h: Matrix,
    pub f: Matrix,
    pub h: f64,
}

impl DelaySystem {
    pub fn new(a: Matrix, a_h: Matrix, e: Matrix, c: Matrix, c_h: Matrix, f: Matrix, h: f64) -> Result<Self, AnalysisError> {
        let sys = Self { a, a_h, e, c, c_h, f, h };
        sys.validate()?;
        Ok(sys)
    }

    pub fn validate(&self) -> Result<(), AnalysisError> {
        ContinuousSystem::new(self.a.clone(), self.e.clone(), self.c.clone(), self.f.clone())?;
        let n = self.a.rows();
        check_shape("A_h", &self.a_h, n, n)?;
        check_shape("C_h", &self.c_h, self.c.rows(), n)?;
        if !(self.h.is_finite() && self.h >= 0.0) {
            return Err(AnalysisError::Precondition(format!("delay h must be finite and >= 0, got {}", self.h)));
        }
        Ok(())
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.a.rows(), self.e.cols(), self.c.rows())
    }

    /// Zero-delay aggregate `(A + A_h, E, C + C_h, F)`.
    pub fn aggregate(&self) -> ContinuousSystem {
        ContinuousSystem {
            a: self.a.add(&self.a_h).expect("validated shapes"),
            e: self.e.clone(),
            c: self.c.add(&self.c_h).expect("validated shapes"),
            f: self.f.clone(),
            cz: None,
            fz: None,
        }
    }
}

/// Discrete-time plant with one constant state delay of `delay_steps` samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDelaySystem {
    pub a: Matrix,
    pub a_h: Matrix,
    pub e: Matrix,
    pub c: Matrix,
    pub c_h: Matrix,
    pub f: Matrix,
    pub delay_steps: usize,
}

impl DiscreteDelaySystem {
    pub fn new(
        a: Matrix,
        a_h: Matrix,
        e: Matrix,
        c: Matrix,
        c_h: Matrix,
        f: Matrix,
        delay_steps: usize,
    ) -> Result<Self, AnalysisError> {
        DelaySystem::new(a.clone(), a_h.clone(), e.clone(), c.clone(), c_h.clone(), f.clone(), 0.0)?;
        Ok(Self {
            a,
            a_h,
            e,
            c,
            c_h,
            f,
            delay_steps,
        })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.a.rows(), self.e.cols(), self.c.rows())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateKind {
    /// `lambda^T A < 0`
    LeftVector,
    /// `A mu < 0`
    RightVector,
}

/// Positive vector proving Hurwitz stability of a Metzler matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityCertificate {
    pub kind: CertificateKind,
    pub vector: Vector,
}

impl StabilityCertificate {
    /// Re-evaluates the certificate against `a`; returns the largest entry
    /// of `A mu` (or `lambda^T A`), which must be negative.
    pub fn worst_decay(&self, a: &Matrix) -> Result<f64, LinalgError> {
        let image = match self.kind {
            CertificateKind::RightVector => a.mul_vec(&self.vector)?,
            CertificateKind::LeftVector => a.left_mul_vec(&self.vector)?,
        };
        Ok(image.into_iter().fold(f64::NEG_INFINITY, f64::max))
    }

    pub fn holds_for(&self, a: &Matrix) -> bool {
        self.vector.iter().all(|&v| v > 0.0) && self.worst_decay(a).is_ok_and(|d| d < 0.0)
    }
}

/// True iff `A` is Metzler and `E`, `Cz`, `Fz` (when present) are nonnegative.
pub fn is_positive_system(sys: &ContinuousSystem, tol: f64) -> bool {
    is_metzler(&sys.a, tol).unwrap_or(false)
        && is_nonnegative(&sys.e, tol)
        && sys.cz.as_ref().map_or(true, |cz| is_nonnegative(cz, tol))
        && sys.fz.as_ref().map_or(true, |fz| is_nonnegative(fz, tol))
}

fn require_metzler(name: &str, a: &Matrix, tol: f64) -> Result<(), AnalysisError> {
    if !is_metzler(a, tol)? {
        return Err(AnalysisError::Precondition(format!("{name} is not Metzler")));
    }
    Ok(())
}

fn require_nonnegative(name: &str, m: &Matrix, tol: f64) -> Result<(), AnalysisError> {
    if !is_nonnegative(m, tol) {
        return Err(AnalysisError::Precondition(format!("{name} is not nonnegative")));
    }
    Ok(())
}

/// Searches for `mu >= 1` with `A mu <= -eps` (minimizing `sum mu`).
/// `None` means the Metzler matrix `A` is not Hurwitz.
pub fn hurwitz_certificate(a: &Matrix) -> Result<Option<StabilityCertificate>, AnalysisError> {
    hurwitz_certificate_with(a, CertificateKind::RightVector, &Margins::default())
}

pub fn hurwitz_certificate_with(
    a: &Matrix,
    kind: CertificateKind,
    margins: &Margins,
) -> Result<Option<StabilityCertificate>, AnalysisError> {
    let n = square_dim("A", a)?;
    require_metzler("A", a, margins.structure_tol)?;
    if n == 0 {
        return Ok(Some(StabilityCertificate {
            kind,
            vector: Vector::zeros(0),
        }));
    }
    let mut lp = LinearProgram::new(n);
    for j in 0..n {
        lp.set_objective(j, 1.0);
        lp.add_ge(&[(j, 1.0)], 1.0);
    }
    for i in 0..n {
        let terms: Vec<(usize, f64)> = match kind {
            CertificateKind::RightVector => (0..n).map(|j| (j, a[(i, j)])).collect(),
            CertificateKind::LeftVector => (0..n).map(|j| (j, a[(j, i)])).collect(),
        };
        lp.add_le(&terms, -margins.epsilon);
    }
    let sol = lp::solve(&lp)?;
    Ok(sol.primal.map(|v| StabilityCertificate { kind, vector: v }))
}

/// Hurwitz test for a Metzler matrix, decided by the certificate LP.
pub fn is_hurwitz_metzler(a: &Matrix) -> Result<bool, AnalysisError> {
    Ok(hurwitz_certificate(a)?.is_some())
}

fn gain_shapes(a: &Matrix, e: &Matrix, cz: &Matrix, fz: &Matrix) -> Result<(usize, usize, usize), AnalysisError> {
    let n = square_dim("A", a)?;
    let p = e.cols();
    let q = cz.rows();
    check_shape("E", e, n, p)?;
    check_shape("Cz", cz, q, n)?;
    check_shape("Fz", fz, q, p)?;
    Ok((n, p, q))
}

/// `-Cz A^-1 E + Fz` for a Metzler, Hurwitz `A` and nonnegative `E, Cz, Fz`.
pub fn linf_gain_matrix(a: &Matrix, e: &Matrix, cz: &Matrix, fz: &Matrix) -> Result<Matrix, AnalysisError> {
    let (_, _, _) = gain_shapes(a, e, cz, fz)?;
    let tol = DEFAULT_STRUCTURE_TOL;
    require_metzler("A", a, tol)?;
    require_nonnegative("E", e, tol)?;
    require_nonnegative("Cz", cz, tol)?;
    require_nonnegative("Fz", fz, tol)?;
    if hurwitz_certificate(a)?.is_none() {
        return Err(AnalysisError::Unstable);
    }
    let neg_inv_e = solve_linear(a, e)?.scale(-1.0);
    Ok(cz.matmul(&neg_inv_e)?.add(fz)?)
}

/// Exact L-infinity (peak-to-peak) gain of a stable positive system.
pub fn linf_gain_closed(a: &Matrix, e: &Matrix, cz: &Matrix, fz: &Matrix) -> Result<f64, AnalysisError> {
    let g = linf_gain_matrix(a, e, cz, fz)?;
    if g.is_empty() {
        return Ok(0.0);
    }
    Ok(max_row_sum(&g)?)
}

/// Gain via the certificate program: minimize `gamma` over `lambda > 0` with
/// `A lambda + E 1 < 0` and `Cz lambda + Fz 1 - gamma 1 < 0`.
pub fn linf_gain_lp(a: &Matrix, e: &Matrix, cz: &Matrix, fz: &Matrix) -> Result<(f64, Vector), AnalysisError> {
    linf_gain_lp_with(a, e, cz, fz, &Margins::default())
}

pub fn linf_gain_lp_with(
    a: &Matrix,
    e: &Matrix,
    cz: &Matrix,
    fz: &Matrix,
    margins: &Margins,
) -> Result<(f64, Vector), AnalysisError> {
    let (n, _, q) = gain_shapes(a, e, cz, fz)?;
    let tol = margins.structure_tol;
    require_metzler("A", a, tol)?;
    require_nonnegative("E", e, tol)?;
    require_nonnegative("Cz", cz, tol)?;
    require_nonnegative("Fz", fz, tol)?;
    let eps = margins.epsilon;
    let gamma = n;
    let mut lp = LinearProgram::new(n + 1);
    lp.set_objective(gamma, 1.0);
    for j in 0..n {
        lp.add_ge(&[(j, 1.0)], eps);
    }
    let e_sum = e.row_sums();
    for i in 0..n {
        let terms: Vec<(usize, f64)> = (0..n).map(|j| (j, a[(i, j)])).collect();
        lp.add_le(&terms, -eps - e_sum[i]);
    }
    let f_sum = fz.row_sums();
    for i in 0..q {
        let mut terms: Vec<(usize, f64)> = (0..n).map(|j| (j, cz[(i, j)])).collect();
        terms.push((gamma, -1.0));
        lp.add_le(&terms, -eps - f_sum[i]);
    }
    if q == 0 {
        lp.add_ge(&[(gamma, 1.0)], 0.0);
    }
    let sol = lp::solve(&lp)?;
    let Some(z) = sol.primal else {
        return Err(AnalysisError::Unstable);
    };
    let z = z.into_inner();
    let gamma_value = if q == 0 { 0.0 } else { z[gamma] };
    Ok((gamma_value, Vector::new(z[..n].to_vec())))
}

/// l-infinity gain of a positive discrete-time system, through the
/// continuous-time system `(A_d - I, E_d, C_d, F_d)`.
pub fn linf_gain_discrete(sys: &DiscreteSystem) -> Result<f64, AnalysisError> {
    let tol = DEFAULT_STRUCTURE_TOL;
    require_nonnegative("A_d", &sys.a, tol)?;
    let shifted = sys.a.sub(&Matrix::identity(sys.a.rows()))?;
    linf_gain_closed(&shifted, &sys.e, &sys.c, &sys.f)
}

/// L-infinity gain of a positive system with a constant delay. The value
/// does not depend on `h`.
pub fn linf_gain_delay(sys: &DelaySystem, cz: &Matrix, fz: &Matrix) -> Result<f64, AnalysisError> {
    sys.validate()?;
    let tol = DEFAULT_STRUCTURE_TOL;
    require_metzler("A", &sys.a, tol)?;
    require_nonnegative("A_h", &sys.a_h, tol)?;
    let aggregate = sys.a.add(&sys.a_h)?;
    linf_gain_closed(&aggregate, &sys.e, cz, fz)
}

/// Closed-loop error dynamics `(A - LC, E - LF)` of an admissible gain.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorDynamics {
    pub a_cl: Matrix,
    pub e_cl: Matrix,
}

impl ErrorDynamics {
    /// Builds `(A - LC, E - LF)` and checks membership: Metzler, Hurwitz,
    /// nonnegative input matrix. Every violated condition is reported.
    pub fn new(a: &Matrix, e: &Matrix, c: &Matrix, f: &Matrix, l: &Matrix) -> Result<Self, AnalysisError> {
        let n = square_dim("A", a)?;
        let (p, r) = (e.cols(), c.rows());
        check_shape("E", e, n, p)?;
        check_shape("C", c, r, n)?;
        check_shape("F", f, r, p)?;
        check_shape("L", l, n, r)?;
        let a_cl = a.sub(&l.matmul(c)?)?;
        let e_cl = e.sub(&l.matmul(f)?)?;
        let mut violations = metzler_violations(&a_cl, DEFAULT_STRUCTURE_TOL);
        if violations.is_empty() && hurwitz_certificate(&a_cl)?.is_none() {
            violations.push(MembershipViolation::NotHurwitz);
        }
        violations.extend(negative_entries(&e_cl, DEFAULT_STRUCTURE_TOL).map(|(row, col, value)| {
            MembershipViolation::InputNegative { row, col, value }
        }));
        if !violations.is_empty() {
            return Err(AnalysisError::NotAdmissible(violations));
        }
        Ok(Self { a_cl, e_cl })
    }

    /// `-(A - LC)^-1 (E - LF)`: the static map from disturbance errors to
    /// state errors.
    pub fn transfer(&self) -> Result<Matrix, AnalysisError> {
        Ok(solve_linear(&self.a_cl, &self.e_cl)?.scale(-1.0))
    }

    /// Gain of `omega -> M xi + N omega` given a precomputed [`Self::transfer`].
    pub fn gain_from_transfer(transfer: &Matrix, m: &Matrix, n: &Matrix) -> Result<f64, AnalysisError> {
        let weighted = m.matmul(transfer)?.add(n)?;
        if weighted.is_empty() {
            return Ok(0.0);
        }
        Ok(max_row_sum(&weighted)?)
    }

    pub fn gain(&self, m: &Matrix, n: &Matrix) -> Result<f64, AnalysisError> {
        check_weights(m, n, self.a_cl.rows(), self.e_cl.cols())?;
        Self::gain_from_transfer(&self.transfer()?, m, n)
    }
}

pub(crate) fn metzler_violations(a: &Matrix, tol: f64) -> Vec<MembershipViolation> {
    let mut out = Vec::new();
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            if i != j && a[(i, j)] < -tol {
                out.push(MembershipViolation::NotMetzler {
                    row: i,
                    col: j,
                    value: a[(i, j)],
                });
            }
        }
    }
    out
}

pub(crate) fn negative_entries(m: &Matrix, tol: f64) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
    (0..m.rows()).flat_map(move |i| {
        (0..m.cols()).filter_map(move |j| (m[(i, j)] < -tol).then(|| (i, j, m[(i, j)])))
    })
}

fn check_weights(m: &Matrix, n: &Matrix, states: usize, inputs: usize) -> Result<(), AnalysisError> {
    check_shape("M", m, m.rows(), states)?;
    check_shape("N", n, m.rows(), inputs)?;
    require_nonnegative("M", m, DEFAULT_STRUCTURE_TOL)?;
    require_nonnegative("N", n, DEFAULT_STRUCTURE_TOL)?;
    Ok(())
}

/// L-infinity gain of `omega -> chi = M xi + N omega` for the error
/// dynamics closed by `L`. Fails with [`AnalysisError::NotAdmissible`] when
/// `L` does not yield positive, stable error dynamics.
pub fn gain_for_output(
    a: &Matrix,
    e: &Matrix,
    c: &Matrix,
    f: &Matrix,
    l: &Matrix,
    m: &Matrix,
    n: &Matrix,
) -> Result<f64, AnalysisError> {
    let dynamics = ErrorDynamics::new(a, e, c, f, l)?;
    check_weights(m, n, a.rows(), e.cols())?;
    linf_gain_closed(&dynamics.a_cl, &dynamics.e_cl, m, n)
}

/// Row-wise test: the gain is below `gamma` iff, for every output row `i`,
/// `[[A - LC, (E - LF) 1], [e_i^T M, e_i^T N 1 - gamma]]` is Metzler and
/// Hurwitz.
#[allow(clippy::too_many_arguments)]
pub fn rowwise_gain_decomposition(
    a: &Matrix,
    e: &Matrix,
    c: &Matrix,
    f: &Matrix,
    l: &Matrix,
    m: &Matrix,
    n: &Matrix,
    gamma: f64,
) -> Result<bool, AnalysisError> {
    if gamma <= 0.0 {
        return Err(AnalysisError::Precondition(format!("gamma must be positive, got {gamma}")));
    }
    let dynamics = ErrorDynamics::new(a, e, c, f, l)?;
    let states = a.rows();
    check_weights(m, n, states, e.cols())?;
    let aggregated_input = dynamics.e_cl.row_sums();
    let n_sums = n.row_sums();
    for i in 0..m.rows() {
        let mut aug = Matrix::zeros(states + 1, states + 1);
        for r in 0..states {
            for s in 0..states {
                aug[(r, s)] = dynamics.a_cl[(r, s)];
            }
            aug[(r, states)] = aggregated_input[r];
            aug[(states, r)] = m[(i, r)];
        }
        aug[(states, states)] = n_sums[i] - gamma;
        if !is_metzler(&aug, DEFAULT_STRUCTURE_TOL)? || hurwitz_certificate(&aug)?.is_none() {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Common certificate `psi > 0` with `(W + u v_i^T) psi < 0` for every `i`.
/// `None` iff some `W + u v_i^T` is not Hurwitz.
pub fn common_certificate_rank_one(w: &Matrix, u: &[f64], vs: &[Vec<f64>]) -> Result<Option<Vector>, AnalysisError> {
    common_certificate_rank_one_with(w, u, vs, &Margins::default())
}

pub fn common_certificate_rank_one_with(
    w: &Matrix,
    u: &[f64],
    vs: &[Vec<f64>],
    margins: &Margins,
) -> Result<Option<Vector>, AnalysisError> {
    let n = square_dim("W", w)?;
    require_metzler("W", w, margins.structure_tol)?;
    if u.len() != n || vs.iter().any(|v| v.len() != n) {
        return Err(AnalysisError::Dimension("u and every v_i must have length n".into()));
    }
    if u.iter().chain(vs.iter().flatten()).any(|&x| x < -margins.structure_tol) {
        return Err(AnalysisError::Precondition("u and v_i must be nonnegative".into()));
    }
    if hurwitz_certificate(w)?.is_none() {
        return Err(AnalysisError::Precondition("W is not Hurwitz".into()));
    }
    let mut lp = LinearProgram::new(n);
    for j in 0..n {
        lp.set_objective(j, 1.0);
        lp.add_ge(&[(j, 1.0)], 1.0);
    }
    for v in vs {
        for i in 0..n {
            let terms: Vec<(usize, f64)> = (0..n).map(|j| (j, w[(i, j)] + u[i] * v[j])).collect();
            lp.add_le(&terms, -margins.epsilon);
        }
    }
    Ok(lp::solve(&lp)?.primal)
}
