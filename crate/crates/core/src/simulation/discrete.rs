use super::{DisturbanceModel, SimConfig, SimulationError, Trace};
use crate::matrix::{Matrix, DEFAULT_STRUCTURE_TOL};
use crate::positive::{
    hurwitz_certificate, negative_entries, AnalysisError, DiscreteDelaySystem, DiscreteSystem, MembershipViolation,
};

struct Recursion<'a> {
    a: &'a Matrix,
    a_h: Option<&'a Matrix>,
    e: &'a Matrix,
    c: &'a Matrix,
    c_h: Option<&'a Matrix>,
    f: &'a Matrix,
    l: &'a Matrix,
    delay_steps: usize,
}

fn add(a: &mut [f64], b: &[f64]) {
    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
}

fn sub(a: &mut [f64], b: &[f64]) {
    a.iter_mut().zip(b).for_each(|(x, y)| *x -= y);
}

impl Recursion<'_> {
    fn membership(&self) -> Result<(), SimulationError> {
        let tol = DEFAULT_STRUCTURE_TOL;
        let n = self.a.rows();
        let a_cl = self.a.sub(&self.l.matmul(self.c)?)?;
        let e_cl = self.e.sub(&self.l.matmul(self.f)?)?;
        let mut v: Vec<MembershipViolation> = negative_entries(&a_cl, tol)
            .map(|(row, col, value)| MembershipViolation::StateNegative { row, col, value })
            .collect();
        let mut aggregate = a_cl;
        if let (Some(a_h), Some(c_h)) = (self.a_h, self.c_h) {
            let ah_cl = a_h.sub(&self.l.matmul(c_h)?)?;
            v.extend(negative_entries(&ah_cl, tol).map(|(row, col, value)| MembershipViolation::DelayNegative { row, col, value }));
            aggregate = aggregate.add(&ah_cl)?;
        }
        v.extend(negative_entries(&e_cl, tol).map(|(row, col, value)| MembershipViolation::InputNegative { row, col, value }));
        if v.is_empty() {
            let shifted = aggregate.sub(&Matrix::identity(n))?;
            if hurwitz_certificate(&shifted).map_err(SimulationError::InvalidGain)?.is_none() {
                v.push(MembershipViolation::NotHurwitz);
            }
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(SimulationError::InvalidGain(AnalysisError::NotAdmissible(v)))
        }
    }

    /// `A v + A_h v_d + E u`
    fn state_map(&self, v: &[f64], vd: &[f64], u: &[f64]) -> Result<Vec<f64>, SimulationError> {
        let mut next = self.a.mul_vec(v)?;
        add(&mut next, &self.e.mul_vec(u)?);
        if let Some(a_h) = self.a_h {
            add(&mut next, &a_h.mul_vec(vd)?);
        }
        Ok(next)
    }

    /// `C v + C_h v_d + F u`
    fn output_map(&self, v: &[f64], vd: &[f64], u: &[f64]) -> Result<Vec<f64>, SimulationError> {
        let mut y = self.c.mul_vec(v)?;
        add(&mut y, &self.f.mul_vec(u)?);
        if let Some(c_h) = self.c_h {
            add(&mut y, &c_h.mul_vec(vd)?);
        }
        Ok(y)
    }

    fn run(&self, dist: &DisturbanceModel, cfg: &SimConfig) -> Result<Trace, SimulationError> {
        let n = self.a.rows();
        dist.validate(self.e.cols())?;
        cfg.validate(n)?;
        if self.l.shape() != (n, self.c.rows()) {
            return Err(SimulationError::InvalidConfig(format!("L must be {n}x{}", self.c.rows())));
        }
        self.membership()?;
        let steps = if cfg.t_end == 0.0 { 0 } else { ((cfg.t_end / cfg.dt) - 1e-9).ceil().max(1.0) as usize };
        let d = self.delay_steps;
        let mut trace = Trace::with_capacity(steps + 1, cfg.dt);
        let mut x = vec![cfg.x0.clone()];
        let mut lo = vec![cfg.x0_lo.clone()];
        let mut hi = vec![cfg.x0_hi.clone()];
        for k in 0..=steps {
            let t = k as f64 * cfg.dt;
            let sample = dist.sample(t)?;
            let z = [x[k].as_slice(), &lo[k], &hi[k]].concat();
            if k == steps {
                trace.push(t, &z, sample);
                break;
            }
            let (xd, lod, hid) = if k >= d {
                (x[k - d].clone(), lo[k - d].clone(), hi[k - d].clone())
            } else {
                (cfg.history_at((k as f64 - d as f64) * cfg.dt), cfg.x0_lo.clone(), cfg.x0_hi.clone())
            };
            let y = self.output_map(&x[k], &xd, &sample.w)?;
            let observer = |v: &[f64], vd: &[f64], u: &[f64]| -> Result<Vec<f64>, SimulationError> {
                let mut innovation = y.clone();
                sub(&mut innovation, &self.output_map(v, vd, u)?);
                let mut next = self.state_map(v, vd, u)?;
                add(&mut next, &self.l.mul_vec(&innovation)?);
                Ok(next)
            };
            let x_next = self.state_map(&x[k], &xd, &sample.w)?;
            let lo_next = observer(&lo[k], &lod, &sample.lo)?;
            let hi_next = observer(&hi[k], &hid, &sample.hi)?;
            if x_next.iter().chain(&lo_next).chain(&hi_next).any(|v| !v.is_finite()) {
                return Err(SimulationError::NonFinite { t: t + cfg.dt });
            }
            trace.push(t, &z, sample);
            x.push(x_next);
            lo.push(lo_next);
            hi.push(hi_next);
        }
        Ok(trace)
    }
}

/// Runs the discrete-time plant and observer recursion; sample `k` sits at
/// `t = k dt` and the disturbance signals are read at those instants.
pub fn simulate_dt(
    sys: &DiscreteSystem,
    l: &Matrix,
    dist: &DisturbanceModel,
    cfg: &SimConfig,
) -> Result<Trace, SimulationError> {
    Recursion {
        a: &sys.a,
        a_h: None,
        e: &sys.e,
        c: &sys.c,
        c_h: None,
        f: &sys.f,
        l,
        delay_steps: 0,
    }
    .run(dist, cfg)
}

/// Discrete-time recursion with a state delay of `delay_steps` samples.
/// The plant history is read from `cfg.history` at negative sample times;
/// observers start from constant histories.
pub fn simulate_dt_delay(
    sys: &DiscreteDelaySystem,
    l: &Matrix,
    dist: &DisturbanceModel,
    cfg: &SimConfig,
) -> Result<Trace, SimulationError> {
    Recursion {
        a: &sys.a,
        a_h: Some(&sys.a_h),
        e: &sys.e,
        c: &sys.c,
        c_h: Some(&sys.c_h),
        f: &sys.f,
        l,
        delay_steps: sys.delay_steps,
    }
    .run(dist, cfg)
}
