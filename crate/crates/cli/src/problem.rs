//! Problem files: strict JSON descriptions of a plant, an observer
//! specification and an optional simulation scenario.

use obsynth_core::simulation::PopulationModel;
use obsynth_core::synthesis::{ObserverForm, ObserverSpec};
use obsynth_core::{
    ContinuousSystem, DelaySystem, DiscreteDelaySystem, DiscreteSystem, DisturbanceModel, Matrix, SimConfig,
    SystemModel, DEFAULT_EPSILON,
};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SCHEMA_VERSION: &str = "1";
pub const EPSILON_ENV: &str = "OBSYNTH_EPSILON";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemClass {
    Continuous,
    Discrete,
    Delay,
    Population,
}

/// Plant matrices by conventional name.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Matrices {
    #[serde(rename = "A", default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Matrix>,
    #[serde(rename = "E", default, skip_serializing_if = "Option::is_none")]
    pub e: Option<Matrix>,
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Matrix>,
    #[serde(rename = "F", default, skip_serializing_if = "Option::is_none")]
    pub f: Option<Matrix>,
    /// Delayed-state matrix; `A_d` is accepted for discrete-time plants.
    #[serde(rename = "A_h", alias = "A_d", default, skip_serializing_if = "Option::is_none")]
    pub a_h: Option<Matrix>,
    #[serde(rename = "C_h", alias = "C_d", default, skip_serializing_if = "Option::is_none")]
    pub c_h: Option<Matrix>,
}

impl Matrices {
    pub fn is_empty(&self) -> bool {
        *self == Self::default()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserverSection {
    #[serde(default, skip_serializing_if = "is_standard")]
    pub form: ObserverForm,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain_lower: Option<Matrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain_upper: Option<Matrix>,
    /// Shorthand for the box `-b <= L <= b`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain_bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

fn is_standard(form: &ObserverForm) -> bool {
    *form == ObserverForm::Standard
}

impl ObserverSection {
    pub fn is_empty(&self) -> bool {
        *self == Self::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub schema_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub class: ProblemClass,
    #[serde(default, skip_serializing_if = "Matrices::is_empty")]
    pub matrices: Matrices,
    /// Continuous-time delay.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    /// Discrete-time delay in samples; requires `A_h` and `C_h`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delay_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub population: Option<PopulationModel>,
    #[serde(default, skip_serializing_if = "ObserverSection::is_empty")]
    pub observer: ObserverSection,
    /// Fixed observer gain used by `gain`, `simulate` and `check` instead of
    /// a fresh design.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain: Option<Matrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disturbance: Option<DisturbanceModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimConfig>,
}

/// A parsed plant: a linear model, or the nonlinear population cascade
/// together with its linear representation.
#[derive(Debug, Clone, PartialEq)]
pub enum Plant {
    Linear(SystemModel),
    Population(PopulationModel, SystemModel),
}

impl Plant {
    pub fn model(&self) -> &SystemModel {
        match self {
            Self::Linear(m) | Self::Population(_, m) => m,
        }
    }
}

fn input(msg: impl Into<String>) -> CliError {
    CliError::Input(msg.into())
}

impl ProblemFile {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let file: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            input(format!("{path}: {}", e.into_inner()))
        })?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(input(format!(
                "schema_version: unsupported version {:?}, expected {SCHEMA_VERSION:?}",
                file.schema_version
            )));
        }
        Ok(file)
    }

    pub fn read(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| input(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Input(msg) => input(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem files serialize")
    }

    pub fn display_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| "problem".into())
    }

    /// Builds the plant, checking that exactly the fields of the declared
    /// class are present and that the matrices fit together.
    pub fn plant(&self) -> Result<Plant, CliError> {
        let m = &self.matrices;
        let need = |name: &str, v: &Option<Matrix>| v.clone().ok_or_else(|| input(format!("matrices.{name}: missing")));
        let forbid = |name: &str, present: bool| {
            if present {
                Err(input(format!("{name}: not allowed for class {:?}", self.class)))
            } else {
                Ok(())
            }
        };
        let dim = |e: obsynth_core::AnalysisError| input(format!("matrices: {e}"));
        if self.class != ProblemClass::Population {
            forbid("population", self.population.is_some())?;
        }
        if self.class != ProblemClass::Delay {
            forbid("h", self.h.is_some())?;
        }
        if self.class != ProblemClass::Discrete {
            forbid("delay_steps", self.delay_steps.is_some())?;
        }
        let plant = match self.class {
            ProblemClass::Continuous => {
                forbid("matrices.A_h", m.a_h.is_some())?;
                forbid("matrices.C_h", m.c_h.is_some())?;
                let sys = ContinuousSystem::new(need("A", &m.a)?, need("E", &m.e)?, need("C", &m.c)?, need("F", &m.f)?)
                    .map_err(dim)?;
                Plant::Linear(SystemModel::Continuous(sys))
            }
            ProblemClass::Delay => {
                let h = self.h.ok_or_else(|| input("h: missing for class delay"))?;
                let sys = DelaySystem::new(
                    need("A", &m.a)?,
                    need("A_h", &m.a_h)?,
                    need("E", &m.e)?,
                    need("C", &m.c)?,
                    need("C_h", &m.c_h)?,
                    need("F", &m.f)?,
                    h,
                )
                .map_err(dim)?;
                Plant::Linear(SystemModel::Delay(sys))
            }
            ProblemClass::Discrete => match self.delay_steps {
                None => {
                    forbid("matrices.A_h", m.a_h.is_some())?;
                    forbid("matrices.C_h", m.c_h.is_some())?;
                    let sys = DiscreteSystem::new(need("A", &m.a)?, need("E", &m.e)?, need("C", &m.c)?, need("F", &m.f)?)
                        .map_err(dim)?;
                    Plant::Linear(SystemModel::Discrete(sys))
                }
                Some(d) => {
                    let sys = DiscreteDelaySystem::new(
                        need("A", &m.a)?,
                        need("A_h", &m.a_h)?,
                        need("E", &m.e)?,
                        need("C", &m.c)?,
                        need("C_h", &m.c_h)?,
                        need("F", &m.f)?,
                        d,
                    )
                    .map_err(dim)?;
                    Plant::Linear(SystemModel::DiscreteDelay(sys))
                }
            },
            ProblemClass::Population => {
                forbid("matrices", !m.is_empty())?;
                forbid("disturbance", self.disturbance.is_some())?;
                let model = self.population.clone().ok_or_else(|| input("population: missing"))?;
                model.validate().map_err(|e| input(format!("population: {e}")))?;
                let linear = SystemModel::Continuous(model.linear_system());
                Plant::Population(model, linear)
            }
        };
        if let Some(g) = &self.gain {
            let (n, _, r) = plant.model().dims();
            if g.shape() != (n, r) {
                return Err(input(format!("gain: is {}x{}, expected {n}x{r}", g.rows(), g.cols())));
            }
        }
        Ok(plant)
    }

    /// Observer specification with the strictness margin resolved as
    /// flag, then file, then environment, then the built-in default.
    pub fn observer_spec(&self, flag_epsilon: Option<f64>, env_epsilon: Option<f64>) -> Result<ObserverSpec, CliError> {
        let (n, _, r) = self.plant()?.model().dims();
        let o = &self.observer;
        let epsilon = flag_epsilon.or(o.epsilon).or(env_epsilon).unwrap_or(DEFAULT_EPSILON);
        let mut spec = ObserverSpec {
            form: o.form,
            gain_lower: o.gain_lower.clone(),
            gain_upper: o.gain_upper.clone(),
            epsilon,
        };
        if let Some(b) = o.gain_bound {
            if o.gain_lower.is_some() || o.gain_upper.is_some() {
                return Err(input("observer.gain_bound: cannot be combined with gain_lower/gain_upper"));
            }
            if !(b.is_finite() && b >= 0.0) {
                return Err(input(format!("observer.gain_bound: must be finite and nonnegative, got {b}")));
            }
            spec = spec.with_box(n, r, b);
        }
        spec.validate(n, r).map_err(|e| input(format!("observer: {e}")))?;
        Ok(spec)
    }
}

/// Reads the strictness margin from the environment, if set.
pub fn env_epsilon() -> Result<Option<f64>, CliError> {
    match std::env::var(EPSILON_ENV) {
        Ok(v) => v
            .trim()
            .parse::<f64>()
            .map(Some)
            .map_err(|_| input(format!("{EPSILON_ENV}: not a number: {v:?}"))),
        Err(_) => Ok(None),
    }
}
