//! Scalar time signals and their vector bundles.

use serde::{Deserialize, Serialize};

/// Closed-form or sampled scalar signal of time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Signal {
    Constant {
        value: f64,
    },
    /// `offset + amplitude * sin(frequency * t + phase)`
    Sine {
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        phase: f64,
        #[serde(default)]
        offset: f64,
    },
    /// `values[i]` on `[breakpoints[i], breakpoints[i + 1])`; the first value
    /// extends to the left and the last to the right.
    Piecewise {
        breakpoints: Vec<f64>,
        values: Vec<f64>,
    },
    /// Samples `values[k]` at `t0 + k dt`, held constant between samples.
    Sampled {
        #[serde(default)]
        t0: f64,
        dt: f64,
        values: Vec<f64>,
    },
}

impl Signal {
    pub fn constant(value: f64) -> Self {
        Self::Constant { value }
    }

    pub fn sine(amplitude: f64, frequency: f64) -> Self {
        Self::Sine {
            amplitude,
            frequency,
            phase: 0.0,
            offset: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match self {
            Self::Constant { value } if !value.is_finite() => Err("constant signal must be finite".into()),
            Self::Sine {
                amplitude,
                frequency,
                phase,
                offset,
            } if !finite(&[*amplitude, *frequency, *phase, *offset]) => Err("sine parameters must be finite".into()),
            Self::Piecewise { breakpoints, values } => {
                if values.is_empty() || breakpoints.len() != values.len() {
                    return Err("piecewise signal needs one breakpoint per value".into());
                }
                if !finite(breakpoints) || !finite(values) || breakpoints.windows(2).any(|w| w[0] >= w[1]) {
                    return Err("piecewise breakpoints must be finite and increasing".into());
                }
                Ok(())
            }
            Self::Sampled { t0, dt, values } => {
                if values.is_empty() || !(dt.is_finite() && *dt > 0.0) || !t0.is_finite() || !finite(values) {
                    return Err("sampled signal needs a positive step and finite samples".into());
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Self::Constant { value } => *value,
            Self::Sine {
                amplitude,
                frequency,
                phase,
                offset,
            } => offset + amplitude * (frequency * t + phase).sin(),
            Self::Piecewise { breakpoints, values } => {
                let idx = breakpoints.partition_point(|&b| b <= t);
                values[idx.saturating_sub(1)]
            }
            Self::Sampled { t0, dt, values } => {
                let k = ((t - t0) / dt + 1e-9).floor();
                let k = if k < 0.0 { 0 } else { (k as usize).min(values.len() - 1) };
                values[k]
            }
        }
    }
}

/// Evaluates each component signal at `t`.
pub fn eval_all(signals: &[Signal], t: f64) -> Vec<f64> {
    signals.iter().map(|s| s.eval(t)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        assert_eq!(Signal::constant(2.5).eval(100.0), 2.5);
        let s = Signal::Sine {
            amplitude: 2.0,
            frequency: 0.5,
            phase: 1.0,
            offset: -1.0,
        };
        assert!((s.eval(3.0) - (-1.0 + 2.0 * 2.5f64.sin())).abs() < 1e-15);
    }

    #[test]
    fn piecewise_holds_left_value() {
        let s = Signal::Piecewise {
            breakpoints: vec![0.0, 1.0, 2.0],
            values: vec![1.0, -1.0, 3.0],
        };
        assert!(s.validate().is_ok());
        assert_eq!(s.eval(-5.0), 1.0);
        assert_eq!(s.eval(0.5), 1.0);
        assert_eq!(s.eval(1.0), -1.0);
        assert_eq!(s.eval(1.999), -1.0);
        assert_eq!(s.eval(7.0), 3.0);
    }

    #[test]
    fn sampled_zero_order_hold() {
        let s = Signal::Sampled {
            t0: 1.0,
            dt: 0.1,
            values: vec![0.0, 1.0, 2.0],
        };
        assert_eq!(s.eval(0.0), 0.0);
        assert_eq!(s.eval(1.1), 1.0);
        assert_eq!(s.eval(1.15), 1.0);
        assert_eq!(s.eval(1.2), 2.0);
        assert_eq!(s.eval(50.0), 2.0);
    }

    #[test]
    fn invalid_signals() {
        assert!(Signal::constant(f64::NAN).validate().is_err());
        assert!(Signal::Piecewise {
            breakpoints: vec![1.0, 0.0],
            values: vec![1.0, 2.0]
        }
        .validate()
        .is_err());
        assert!(Signal::Sampled {
            t0: 0.0,
            dt: 0.0,
            values: vec![1.0]
        }
        .validate()
        .is_err());
    }
}
