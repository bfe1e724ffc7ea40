use serde::{Deserialize, Serialize};

use super::signal::Signal;
use super::{checked_sample, DisturbanceModel, DisturbanceSample, SimConfig, SimulationError, Trace};
use crate::matrix::{is_metzler, split_pos_neg, Matrix, DEFAULT_STRUCTURE_TOL};
use crate::positive::{
    hurwitz_certificate, metzler_violations, negative_entries, AnalysisError, ContinuousSystem, DelaySystem,
    ErrorDynamics, MembershipViolation,
};
use crate::synthesis::ObserverForm;

/// Paired observer right-hand side. The lower and upper copies share
/// `A - LC` and the output injection `L y`; the disturbance bounds enter
/// through the positive and negative parts of `E - LF`.
struct ObserverPair<'a> {
    n: usize,
    a: &'a Matrix,
    e: &'a Matrix,
    c: &'a Matrix,
    f: &'a Matrix,
    l: &'a Matrix,
    a_cl: Matrix,
    e_pos: Matrix,
    e_neg: Matrix,
    delayed: Option<DelayTerms<'a>>,
}

struct DelayTerms<'a> {
    a_h: &'a Matrix,
    c_h: &'a Matrix,
    ah_cl: Matrix,
}

fn axpy(acc: &mut [f64], m: &Matrix, v: &[f64], sign: f64) -> Result<(), SimulationError> {
    for (a, b) in acc.iter_mut().zip(m.mul_vec(v)?) {
        *a += sign * b;
    }
    Ok(())
}

impl<'a> ObserverPair<'a> {
    fn new(sys: &'a ContinuousSystem, l: &'a Matrix, form: ObserverForm) -> Result<Self, SimulationError> {
        let (n, _, r) = sys.dims();
        if l.shape() != (n, r) {
            return Err(SimulationError::InvalidConfig(format!("L must be {n}x{r}, got {}x{}", l.rows(), l.cols())));
        }
        let a_cl = sys.a.sub(&l.matmul(&sys.c)?)?;
        let e_cl = sys.e.sub(&l.matmul(&sys.f)?)?;
        let (e_pos, e_neg) = match form {
            ObserverForm::Standard => {
                ErrorDynamics::new(&sys.a, &sys.e, &sys.c, &sys.f, l).map_err(SimulationError::InvalidGain)?;
                (e_cl.clone(), Matrix::zeros(n, e_cl.cols()))
            }
            ObserverForm::Relaxed => {
                let mut violations = metzler_violations(&a_cl, DEFAULT_STRUCTURE_TOL);
                if violations.is_empty() && hurwitz_certificate(&a_cl).map_err(SimulationError::InvalidGain)?.is_none() {
                    violations.push(MembershipViolation::NotHurwitz);
                }
                if !violations.is_empty() {
                    return Err(SimulationError::InvalidGain(AnalysisError::NotAdmissible(violations)));
                }
                split_pos_neg(&e_cl)
            }
        };
        Ok(Self {
            n,
            a: &sys.a,
            e: &sys.e,
            c: &sys.c,
            f: &sys.f,
            l,
            a_cl,
            e_pos,
            e_neg,
            delayed: None,
        })
    }

    /// `d/dt [x, x_lo, x_hi]` given the joint state and, for delay plants,
    /// the joint state one delay earlier.
    fn derivative(&self, z: &[f64], zd: Option<&[f64]>, d: &DisturbanceSample) -> Result<Vec<f64>, SimulationError> {
        let n = self.n;
        let (x, lo, hi) = (&z[..n], &z[n..2 * n], &z[2 * n..]);
        let mut y = self.c.mul_vec(x)?;
        axpy(&mut y, self.f, &d.w, 1.0)?;
        let mut dx = self.a.mul_vec(x)?;
        axpy(&mut dx, self.e, &d.w, 1.0)?;
        let ly = self.l.mul_vec(&y)?;

        let mut dlo = self.a_cl.mul_vec(lo)?;
        axpy(&mut dlo, &self.e_pos, &d.lo, 1.0)?;
        axpy(&mut dlo, &self.e_neg, &d.hi, -1.0)?;
        let mut dhi = self.a_cl.mul_vec(hi)?;
        axpy(&mut dhi, &self.e_pos, &d.hi, 1.0)?;
        axpy(&mut dhi, &self.e_neg, &d.lo, -1.0)?;

        if let (Some(dt), Some(zd)) = (&self.delayed, zd) {
            let (xd, lod, hid) = (&zd[..n], &zd[n..2 * n], &zd[2 * n..]);
            axpy(&mut dx, dt.a_h, xd, 1.0)?;
            let yd = dt.c_h.mul_vec(xd)?;
            axpy(&mut dlo, self.l, &yd, 1.0)?;
            axpy(&mut dhi, self.l, &yd, 1.0)?;
            axpy(&mut dlo, &dt.ah_cl, lod, 1.0)?;
            axpy(&mut dhi, &dt.ah_cl, hid, 1.0)?;
        }
        for i in 0..n {
            dlo[i] += ly[i];
            dhi[i] += ly[i];
        }
        dx.extend(dlo);
        dx.extend(dhi);
        Ok(dx)
    }
}

/// One classical Runge-Kutta step. `f(stage, t, z)` receives the stage
/// position in half steps (0, 1 or 2). Returns the new state and the
/// derivative at the start of the step.
fn rk4_step<F>(t: f64, z: &[f64], dt: f64, mut f: F) -> Result<(Vec<f64>, Vec<f64>), SimulationError>
where
    F: FnMut(usize, f64, &[f64]) -> Result<Vec<f64>, SimulationError>,
{
    let shifted = |k: &[f64], h: f64| -> Vec<f64> { z.iter().zip(k).map(|(a, b)| a + h * b).collect() };
    let k1 = f(0, t, z)?;
    let k2 = f(1, t + 0.5 * dt, &shifted(&k1, 0.5 * dt))?;
    let k3 = f(1, t + 0.5 * dt, &shifted(&k2, 0.5 * dt))?;
    let k4 = f(2, t + dt, &shifted(&k3, dt))?;
    let next: Vec<f64> = (0..z.len())
        .map(|i| z[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect();
    if next.iter().any(|v| !v.is_finite()) {
        return Err(SimulationError::NonFinite { t: t + dt });
    }
    Ok((next, k1))
}

fn joint_initial(cfg: &SimConfig) -> Vec<f64> {
    [cfg.x0.as_slice(), &cfg.x0_lo, &cfg.x0_hi].concat()
}

/// Number of steps covering `[0, t_end]` with steps no longer than `dt`.
fn step_count(t_end: f64, dt: f64) -> usize {
    if t_end == 0.0 {
        0
    } else {
        ((t_end / dt) - 1e-9).ceil().max(1.0) as usize
    }
}

fn check_dims(sys: &ContinuousSystem, dist: &DisturbanceModel, cfg: &SimConfig) -> Result<(), SimulationError> {
    sys.validate().map_err(|e| SimulationError::InvalidConfig(e.to_string()))?;
    let (n, p, _) = sys.dims();
    dist.validate(p)?;
    cfg.validate(n)
}

/// Simulates a continuous-time plant with a lower and an upper observer.
pub fn simulate_ct(
    sys: &ContinuousSystem,
    l: &Matrix,
    form: ObserverForm,
    dist: &DisturbanceModel,
    cfg: &SimConfig,
) -> Result<Trace, SimulationError> {
    check_dims(sys, dist, cfg)?;
    let obs = ObserverPair::new(sys, l, form)?;
    let steps = step_count(cfg.t_end, cfg.dt);
    let dt = if steps == 0 { cfg.dt } else { cfg.t_end / steps as f64 };
    integrate(steps, dt, joint_initial(cfg), |t, _| dist.sample(t), |z, d| {
        obs.derivative(z, None, d)
    })
}

/// Shared fixed-step loop for plants without delay. `sample(t, z)` yields
/// the disturbance triple (which may depend on the state).
fn integrate<S, D>(steps: usize, dt: f64, z0: Vec<f64>, sample: S, deriv: D) -> Result<Trace, SimulationError>
where
    S: Fn(f64, &[f64]) -> Result<DisturbanceSample, SimulationError>,
    D: Fn(&[f64], &DisturbanceSample) -> Result<Vec<f64>, SimulationError>,
{
    let mut trace = Trace::with_capacity(steps + 1, dt);
    let mut z = z0;
    trace.push(0.0, &z, sample(0.0, &z)?);
    for k in 0..steps {
        let t = k as f64 * dt;
        let (next, _) = rk4_step(t, &z, dt, |_, s, zz| {
            let d = sample(s, zz)?;
            deriv(zz, &d)
        })?;
        z = next;
        let t_next = (k + 1) as f64 * dt;
        trace.push(t_next, &z, sample(t_next, &z)?);
    }
    Ok(trace)
}

/// Cubic Hermite value at the midpoint of a step.
fn hermite_mid(z0: &[f64], d0: &[f64], z1: &[f64], d1: &[f64], dt: f64) -> Vec<f64> {
    (0..z0.len())
        .map(|i| 0.5 * (z0[i] + z1[i]) + dt / 8.0 * (d0[i] - d1[i]))
        .collect()
}

/// Simulates a plant with constant state delay `h` and its observer pair.
///
/// For `h > 0` the step is shortened to `h / m` with `m >= 4`, so delayed
/// grid values are read directly and half-step values by cubic Hermite
/// interpolation. Observers start from constant histories `x0_lo`, `x0_hi`,
/// which must enclose the plant history.
pub fn simulate_delay(
    sys: &DelaySystem,
    l: &Matrix,
    dist: &DisturbanceModel,
    cfg: &SimConfig,
) -> Result<Trace, SimulationError> {
    sys.validate().map_err(|e| SimulationError::InvalidConfig(e.to_string()))?;
    let (n, p, r) = sys.dims();
    dist.validate(p)?;
    cfg.validate(n)?;
    if l.shape() != (n, r) {
        return Err(SimulationError::InvalidConfig(format!("L must be {n}x{r}")));
    }
    check_delay_membership(sys, l)?;

    let base = ContinuousSystem {
        a: sys.a.clone(),
        e: sys.e.clone(),
        c: sys.c.clone(),
        f: sys.f.clone(),
        cz: None,
        fz: None,
    };
    let mut obs = ObserverPair {
        n,
        a: &base.a,
        e: &base.e,
        c: &base.c,
        f: &base.f,
        l,
        a_cl: base.a.sub(&l.matmul(&base.c)?)?,
        e_pos: base.e.sub(&l.matmul(&base.f)?)?,
        e_neg: Matrix::zeros(n, p),
        delayed: None,
    };
    obs.delayed = Some(DelayTerms {
        a_h: &sys.a_h,
        c_h: &sys.c_h,
        ah_cl: sys.a_h.sub(&l.matmul(&sys.c_h)?)?,
    });

    let h = sys.h;
    let (m, dt) = if h > 0.0 {
        let m = ((h / cfg.dt) - 1e-9).ceil().max(4.0) as usize;
        (m, h / m as f64)
    } else {
        let steps = step_count(cfg.t_end, cfg.dt);
        (0, if steps == 0 { cfg.dt } else { cfg.t_end / steps as f64 })
    };
    let steps = step_count(cfg.t_end, dt);

    let history = |s: f64| -> Vec<f64> { [cfg.history_at(s).as_slice(), &cfg.x0_lo, &cfg.x0_hi].concat() };
    if m > 0 {
        for j in 0..=2 * m {
            let s = -h + j as f64 * 0.5 * dt;
            let phi = cfg.history_at(s);
            for i in 0..n {
                if !(cfg.x0_lo[i] <= phi[i] && phi[i] <= cfg.x0_hi[i]) {
                    return Err(SimulationError::InvalidConfig(format!(
                        "history leaves the initial bounds at s = {s} in component {i}"
                    )));
                }
            }
        }
    }

    let mut trace = Trace::with_capacity(steps + 1, dt);
    trace.push(0.0, &joint_initial(cfg), dist.sample(0.0)?);
    integrate_delay(
        steps,
        m,
        dt,
        joint_initial(cfg),
        history,
        |s, z, zd| obs.derivative(z, Some(zd), &dist.sample(s)?),
        |t, z| {
            trace.push(t, z, dist.sample(t)?);
            Ok(())
        },
    )?;
    Ok(trace)
}

/// Fixed-step loop for `z' = f(t, z, z(t - m dt))`. Delayed grid values are
/// read from the stored states, half-step values by cubic Hermite
/// interpolation, and anything before time zero from `history`. With
/// `m = 0` the delayed argument is the current stage state.
fn integrate_delay<H, F, R>(
    steps: usize,
    m: usize,
    dt: f64,
    z0: Vec<f64>,
    history: H,
    f: F,
    mut record: R,
) -> Result<(), SimulationError>
where
    H: Fn(f64) -> Vec<f64>,
    F: Fn(f64, &[f64], &[f64]) -> Result<Vec<f64>, SimulationError>,
    R: FnMut(f64, &[f64]) -> Result<(), SimulationError>,
{
    let mut states: Vec<Vec<f64>> = Vec::with_capacity(steps + 1);
    let mut derivs: Vec<Vec<f64>> = Vec::with_capacity(steps + 1);
    states.push(z0);
    for k in 0..steps {
        let t = k as f64 * dt;
        let j = k as isize - m as isize;
        let delayed = |stage: usize, zz: &[f64]| -> Vec<f64> {
            if m == 0 {
                return zz.to_vec();
            }
            match stage {
                0 if j >= 0 => states[j as usize].clone(),
                2 if j + 1 >= 0 => states[(j + 1) as usize].clone(),
                1 if j >= 0 => {
                    let (a, b) = (j as usize, j as usize + 1);
                    hermite_mid(&states[a], &derivs[a], &states[b], &derivs[b], dt)
                }
                _ => history((j as f64 + 0.5 * stage as f64) * dt),
            }
        };
        let (next, k1) = rk4_step(t, &states[k], dt, |stage, s, zz| f(s, zz, &delayed(stage, zz)))?;
        derivs.push(k1);
        record((k + 1) as f64 * dt, &next)?;
        states.push(next);
    }
    Ok(())
}

/// Membership for delay observers: `A - LC` Metzler, `A_h - L C_h >= 0`,
/// `E - LF >= 0` and the zero-delay aggregate Hurwitz.
fn check_delay_membership(sys: &DelaySystem, l: &Matrix) -> Result<(), SimulationError> {
    let tol = DEFAULT_STRUCTURE_TOL;
    let a_cl = sys.a.sub(&l.matmul(&sys.c)?)?;
    let ah_cl = sys.a_h.sub(&l.matmul(&sys.c_h)?)?;
    let mut violations = metzler_violations(&a_cl, tol);
    violations.extend(
        negative_entries(&ah_cl, tol).map(|(row, col, value)| MembershipViolation::DelayNegative { row, col, value }),
    );
    let agg = sys.aggregate();
    match ErrorDynamics::new(&agg.a, &agg.e, &agg.c, &agg.f, l) {
        Ok(_) => {}
        Err(AnalysisError::NotAdmissible(v)) => {
            violations.extend(v.into_iter().filter(|x| !matches!(x, MembershipViolation::NotMetzler { .. })))
        }
        Err(e) => return Err(SimulationError::InvalidGain(e)),
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(SimulationError::InvalidGain(AnalysisError::NotAdmissible(violations)))
    }
}

/// Three-stage cascade with saturating recruitment:
/// `x1' = -b1 x1 + a(t) x3 / (b + x3)`, `x2' = a1 x1 - b2 x2`,
/// `x3' = a2 x2 - b3 x3`, with `x3` measured and `a(t)` known to lie in
/// `[a_lo, a_hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationModel {
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub b: f64,
    pub a_lo: f64,
    pub a_hi: f64,
    pub a: Signal,
}

impl PopulationModel {
    /// Parameters of the standard three-stage benchmark with
    /// `a(t) = 1.5 + 0.5 sin(0.1 t)` in `[1, 2]`.
    pub fn benchmark() -> Self {
        Self {
            alpha1: 3.0,
            alpha2: 4.0,
            beta1: 2.0,
            beta2: 2.0,
            beta3: 3.0,
            b: 1.0,
            a_lo: 1.0,
            a_hi: 2.0,
            a: Signal::Sine {
                amplitude: 0.5,
                frequency: 0.1,
                phase: 0.0,
                offset: 1.5,
            },
        }
    }

    pub fn validate(&self) -> Result<(), SimulationError> {
        let params = [self.alpha1, self.alpha2, self.beta1, self.beta2, self.beta3, self.b, self.a_lo, self.a_hi];
        if params.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
            return Err(SimulationError::InvalidConfig("population parameters must be positive".into()));
        }
        if self.a_lo >= self.a_hi {
            return Err(SimulationError::InvalidConfig("population bounds need a_lo < a_hi".into()));
        }
        self.a.validate().map_err(SimulationError::InvalidConfig)
    }

    /// Linear representation with disturbance `w = a(t) x3 / (b + x3)`.
    pub fn linear_system(&self) -> ContinuousSystem {
        let a = Matrix::from_rows(&[
            [-self.beta1, 0.0, 0.0],
            [self.alpha1, -self.beta2, 0.0],
            [0.0, self.alpha2, -self.beta3],
        ])
        .expect("finite parameters");
        ContinuousSystem {
            a,
            e: Matrix::column(&[1.0, 0.0, 0.0]),
            c: Matrix::from_rows(&[[0.0, 0.0, 1.0]]).expect("constant"),
            f: Matrix::zeros(1, 1),
            cz: None,
            fz: None,
        }
    }

    /// Optimal unweighted gain `max{1/b1, a1/(b1 b2)}`, attained by
    /// `L = [0, 0, l3]` for `l3` above [`Self::gain_threshold`].
    pub fn optimal_gain(&self) -> f64 {
        (1.0 / self.beta1).max(self.alpha1 / (self.beta1 * self.beta2))
    }

    /// `a2 max{1, a1/b2} - b3`.
    pub fn gain_threshold(&self) -> f64 {
        self.alpha2 * (1.0f64).max(self.alpha1 / self.beta2) - self.beta3
    }

    fn saturation(&self, x3: f64) -> f64 {
        x3 / (self.b + x3)
    }
}

/// Simulates the nonlinear cascade with the linear observer pair; the
/// disturbance bounds are built online from the measured `x3`.
pub fn simulate_population(model: &PopulationModel, l: &Matrix, cfg: &SimConfig) -> Result<Trace, SimulationError> {
    model.validate()?;
    cfg.validate(3)?;
    let sys = model.linear_system();
    let a_cl = sys.a.sub(&l.matmul(&sys.c).map_err(SimulationError::Linalg)?)?;
    if !is_metzler(&a_cl, DEFAULT_STRUCTURE_TOL)? {
        return Err(SimulationError::InvalidGain(AnalysisError::NotAdmissible(metzler_violations(
            &a_cl,
            DEFAULT_STRUCTURE_TOL,
        ))));
    }
    let obs = ObserverPair::new(&sys, l, ObserverForm::Standard)?;
    let steps = step_count(cfg.t_end, cfg.dt);
    let dt = if steps == 0 { cfg.dt } else { cfg.t_end / steps as f64 };
    let sample = |t: f64, z: &[f64]| -> Result<DisturbanceSample, SimulationError> {
        let x3 = z[2];
        if !(x3 > -model.b) {
            return Err(SimulationError::NonFinite { t });
        }
        let bounds = checked_sample(t, vec![model.a.eval(t)], vec![model.a_lo], vec![model.a_hi])?;
        let s = model.saturation(x3);
        Ok(DisturbanceSample {
            w: vec![bounds.w[0] * s],
            lo: vec![bounds.lo[0] * s],
            hi: vec![bounds.hi[0] * s],
        })
    };
    integrate(steps, dt, joint_initial(cfg), sample, |z, d| obs.derivative(z, None, d))
}
