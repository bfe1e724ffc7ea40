//! Plant and interval-observer trajectories, inclusion checks and empirical
//! peak-to-peak gains.
//!
//! Continuous-time runs use fixed-step classical Runge-Kutta on the joint
//! state `[x, x_lo, x_hi]`; discrete-time runs evaluate the recursion
//! directly.

mod continuous;
mod discrete;
mod signal;

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{LinalgError, Matrix};
use crate::positive::AnalysisError;

pub use continuous::{simulate_ct, simulate_delay, simulate_population, PopulationModel};
pub use discrete::{simulate_dt, simulate_dt_delay};
pub use signal::{eval_all, Signal};

/// Default fraction of the horizon excluded from empirical gain estimates.
pub const DEFAULT_BURN_IN: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimulationError {
    #[error("invalid simulation setup: {0}")]
    InvalidConfig(String),
    #[error("gain is not admissible for this observer: {0}")]
    InvalidGain(#[source] AnalysisError),
    #[error("disturbance bound violated at t = {t}: component {component}: {lower} <= {value} <= {upper} fails")]
    BoundViolation {
        t: f64,
        component: usize,
        lower: f64,
        value: f64,
        upper: f64,
    },
    #[error("state became non-finite at t = {t}")]
    NonFinite { t: f64 },
    #[error("disturbance error is identically zero; the empirical gain is undefined")]
    UndefinedGain,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// True disturbance and its known bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceModel {
    pub w: Vec<Signal>,
    pub w_lo: Vec<Signal>,
    pub w_hi: Vec<Signal>,
}

/// Disturbance samples at one instant.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct DisturbanceSample {
    pub w: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

const BOUND_TOL: f64 = 1e-12;

pub(crate) fn checked_sample(t: f64, w: Vec<f64>, lo: Vec<f64>, hi: Vec<f64>) -> Result<DisturbanceSample, SimulationError> {
    for i in 0..w.len() {
        let slack = BOUND_TOL * (1.0 + w[i].abs());
        if !(lo[i] <= w[i] + slack && w[i] <= hi[i] + slack) {
            return Err(SimulationError::BoundViolation {
                t,
                component: i,
                lower: lo[i],
                value: w[i],
                upper: hi[i],
            });
        }
    }
    Ok(DisturbanceSample { w, lo, hi })
}

impl DisturbanceModel {
    /// Constant disturbance with constant bounds.
    pub fn constant(w: &[f64], lo: &[f64], hi: &[f64]) -> Self {
        let wrap = |v: &[f64]| v.iter().map(|&x| Signal::constant(x)).collect();
        Self {
            w: wrap(w),
            w_lo: wrap(lo),
            w_hi: wrap(hi),
        }
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn validate(&self, p: usize) -> Result<(), SimulationError> {
        for (name, v) in [("w", &self.w), ("w_lo", &self.w_lo), ("w_hi", &self.w_hi)] {
            if v.len() != p {
                return Err(SimulationError::InvalidConfig(format!("{name} has {} signals, expected {p}", v.len())));
            }
            for s in v {
                s.validate().map_err(|e| SimulationError::InvalidConfig(format!("{name}: {e}")))?;
            }
        }
        Ok(())
    }

    pub(crate) fn sample(&self, t: f64) -> Result<DisturbanceSample, SimulationError> {
        checked_sample(t, eval_all(&self.w, t), eval_all(&self.w_lo, t), eval_all(&self.w_hi, t))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    /// Integration step, or the sampling period for discrete-time plants.
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub x0: Vec<f64>,
    pub x0_lo: Vec<f64>,
    pub x0_hi: Vec<f64>,
    /// Plant history on `[-h, 0]`; defaults to the constant `x0`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub history: Option<Vec<Signal>>,
}

fn default_t_end() -> f64 {
    20.0
}

fn default_dt() -> f64 {
    1e-3
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            t_end: default_t_end(),
            dt: default_dt(),
            x0: Vec::new(),
            x0_lo: Vec::new(),
            x0_hi: Vec::new(),
            history: None,
        }
    }
}

impl SimConfig {
    pub fn new(t_end: f64, dt: f64, x0: Vec<f64>, x0_lo: Vec<f64>, x0_hi: Vec<f64>) -> Self {
        Self {
            t_end,
            dt,
            x0,
            x0_lo,
            x0_hi,
            history: None,
        }
    }

    pub fn validate(&self, n: usize) -> Result<(), SimulationError> {
        let bad = |msg: String| Err(SimulationError::InvalidConfig(msg));
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_end.is_finite() && self.t_end >= 0.0) {
            return bad(format!("t_end must be nonnegative, got {}", self.t_end));
        }
        for (name, v) in [("x0", &self.x0), ("x0_lo", &self.x0_lo), ("x0_hi", &self.x0_hi)] {
            if v.len() != n {
                return bad(format!("{name} has length {}, expected {n}", v.len()));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return bad(format!("{name} is not finite"));
            }
        }
        for i in 0..n {
            if !(self.x0_lo[i] <= self.x0[i] && self.x0[i] <= self.x0_hi[i]) {
                return bad(format!(
                    "initial bounds do not enclose the state in component {i}: {} <= {} <= {}",
                    self.x0_lo[i], self.x0[i], self.x0_hi[i]
                ));
            }
        }
        if let Some(h) = &self.history {
            if h.len() != n {
                return bad(format!("history has {} signals, expected {n}", h.len()));
            }
            for s in h {
                s.validate().map_err(SimulationError::InvalidConfig)?;
            }
        }
        Ok(())
    }

    pub(crate) fn history_at(&self, s: f64) -> Vec<f64> {
        match &self.history {
            Some(h) => eval_all(h, s),
            None => self.x0.clone(),
        }
    }
}

/// Sampled plant and observer trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub times: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub x_lo: Vec<Vec<f64>>,
    pub x_hi: Vec<Vec<f64>>,
    pub w: Vec<Vec<f64>>,
    pub w_lo: Vec<Vec<f64>>,
    pub w_hi: Vec<Vec<f64>>,
    /// Step actually used (may be shortened to fit the horizon or the delay).
    pub dt: f64,
}

impl Trace {
    pub(crate) fn with_capacity(len: usize, dt: f64) -> Self {
        Self {
            times: Vec::with_capacity(len),
            x: Vec::with_capacity(len),
            x_lo: Vec::with_capacity(len),
            x_hi: Vec::with_capacity(len),
            w: Vec::with_capacity(len),
            w_lo: Vec::with_capacity(len),
            w_hi: Vec::with_capacity(len),
            dt,
        }
    }

    pub(crate) fn push(&mut self, t: f64, z: &[f64], d: DisturbanceSample) {
        let n = z.len() / 3;
        self.times.push(t);
        self.x.push(z[..n].to_vec());
        self.x_lo.push(z[n..2 * n].to_vec());
        self.x_hi.push(z[2 * n..].to_vec());
        self.w.push(d.w);
        self.w_lo.push(d.lo);
        self.w_hi.push(d.hi);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    pub fn disturbance_dim(&self) -> usize {
        self.w.first().map_or(0, Vec::len)
    }

    /// `e_hi = x_hi - x` per sample.
    pub fn e_hi(&self) -> Vec<Vec<f64>> {
        diff(&self.x_hi, &self.x)
    }

    /// `e_lo = x - x_lo` per sample.
    pub fn e_lo(&self) -> Vec<Vec<f64>> {
        diff(&self.x, &self.x_lo)
    }

    /// `w_hi - w` per sample.
    pub fn delta_hi(&self) -> Vec<Vec<f64>> {
        diff(&self.w_hi, &self.w)
    }

    /// `w - w_lo` per sample.
    pub fn delta_lo(&self) -> Vec<Vec<f64>> {
        diff(&self.w, &self.w_lo)
    }

    /// Observed outputs `(M e_lo, M e_hi)` per sample.
    pub fn zeta(&self, m: &Matrix) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>), LinalgError> {
        let apply = |es: Vec<Vec<f64>>| es.iter().map(|e| m.mul_vec(e)).collect::<Result<Vec<_>, _>>();
        Ok((apply(self.e_lo())?, apply(self.e_hi())?))
    }

    /// Writes the trace as CSV: `t, x.., xlo.., xhi.., w.., wlo.., whi..`,
    /// numbers with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let (n, p) = (self.state_dim(), self.disturbance_dim());
        let mut header = vec!["t".to_string()];
        for prefix in ["x", "xlo", "xhi"] {
            header.extend((1..=n).map(|i| format!("{prefix}{i}")));
        }
        for prefix in ["w", "wlo", "whi"] {
            header.extend((1..=p).map(|i| format!("{prefix}{i}")));
        }
        writeln!(out, "{}", header.join(","))?;
        for k in 0..self.len() {
            let mut line = format!("{:.16e}", self.times[k]);
            for block in [&self.x, &self.x_lo, &self.x_hi, &self.w, &self.w_lo, &self.w_hi] {
                for v in &block[k] {
                    line.push_str(&format!(",{v:.16e}"));
                }
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("CSV output is ASCII")
    }
}

fn diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter().zip(b).map(|(u, v)| u.iter().zip(v).map(|(p, q)| p - q).collect()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundSide {
    /// `x < x_lo`
    Lower,
    /// `x > x_hi`
    Upper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InclusionViolation {
    pub time: f64,
    pub sample: usize,
    pub component: usize,
    pub side: BoundSide,
    /// Negative margin (`x - x_lo` or `x_hi - x`) found there.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InclusionReport {
    pub clean: bool,
    pub first_violation: Option<InclusionViolation>,
    /// Smallest of all `x - x_lo` and `x_hi - x` entries.
    pub min_margin: f64,
    pub tol: f64,
}

/// Checks `x_lo - tol <= x <= x_hi + tol` at every sample.
pub fn check_inclusion(trace: &Trace, tol: f64) -> InclusionReport {
    let mut first = None;
    let mut min_margin = f64::INFINITY;
    for k in 0..trace.len() {
        for i in 0..trace.x[k].len() {
            for (side, margin) in [
                (BoundSide::Lower, trace.x[k][i] - trace.x_lo[k][i]),
                (BoundSide::Upper, trace.x_hi[k][i] - trace.x[k][i]),
            ] {
                min_margin = min_margin.min(margin);
                if first.is_none() && !(margin >= -tol) {
                    first = Some(InclusionViolation {
                        time: trace.times[k],
                        sample: k,
                        component: i,
                        side,
                        margin,
                    });
                }
            }
        }
    }
    InclusionReport {
        clean: first.is_none(),
        first_violation: first,
        min_margin,
        tol,
    }
}

/// Sampled lower estimate of the peak-to-peak gain from the disturbance
/// errors to `M e`, with the default burn-in.
pub fn empirical_peak_gain(trace: &Trace, m: &Matrix) -> Result<f64, SimulationError> {
    empirical_peak_gain_with(trace, m, DEFAULT_BURN_IN)
}

/// Numerator: largest `|M e_lo|_inf` or `|M e_hi|_inf` over samples with
/// `t >= burn_in * t_final`. Denominator: largest `|w - w_lo|_inf` or
/// `|w_hi - w|_inf` over the whole trace.
pub fn empirical_peak_gain_with(trace: &Trace, m: &Matrix, burn_in: f64) -> Result<f64, SimulationError> {
    if !(0.0..1.0).contains(&burn_in) {
        return Err(SimulationError::InvalidConfig(format!("burn-in fraction must lie in [0, 1), got {burn_in}")));
    }
    if trace.is_empty() {
        return Err(SimulationError::UndefinedGain);
    }
    let peak = |v: &[Vec<f64>]| v.iter().flatten().fold(0.0f64, |acc, x| acc.max(x.abs()));
    let denom = peak(&trace.delta_lo()).max(peak(&trace.delta_hi()));
    if denom == 0.0 {
        return Err(SimulationError::UndefinedGain);
    }
    let t_cut = trace.times[0] + burn_in * (trace.times[trace.len() - 1] - trace.times[0]);
    let start = trace.times.partition_point(|&t| t < t_cut);
    let (z_lo, z_hi) = trace.zeta(m)?;
    let num = peak(&z_lo[start..]).max(peak(&z_hi[start..]));
    Ok(num / denom)
}
