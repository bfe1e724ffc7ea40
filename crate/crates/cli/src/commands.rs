//! The `design`, `gain`, `simulate` and `check` subcommands and the helpers
//! they share with the benchmark runner.

use std::io::Write;
use std::path::Path;

use obsynth_core::positive::linf_gain_lp;
use obsynth_core::simulation::{
    check_inclusion, empirical_peak_gain, simulate_ct, simulate_delay, simulate_dt, simulate_dt_delay,
    simulate_population, InclusionReport, Trace,
};
use obsynth_core::synthesis::{self, certify, error_dynamics, CertificationReport, DesignResult, ObserverForm};
use obsynth_core::{linf_gain_closed, Matrix, ObserverSpec, SimulationError, SystemModel, Vector};
use serde::Serialize;

use crate::problem::{env_epsilon, Plant, ProblemFile};
use crate::{CliError, CommonArgs, GainArgs, EXIT_INFEASIBLE, EXIT_OK, EXIT_VIOLATION};

/// Inclusion tolerance used by `simulate` and `check`.
pub const INCLUSION_TOL: f64 = 1e-7;
/// Allowed excess of the empirical gain over the certified one.
pub const GAIN_MARGIN: f64 = 1e-3;

pub struct Loaded {
    pub problem: ProblemFile,
    pub plant: Plant,
    pub spec: ObserverSpec,
}

impl Loaded {
    pub fn from_file(path: &Path, flag_epsilon: Option<f64>) -> Result<Self, CliError> {
        let problem = ProblemFile::read(path)?;
        Self::new(problem, flag_epsilon)
    }

    pub fn new(problem: ProblemFile, flag_epsilon: Option<f64>) -> Result<Self, CliError> {
        if let Some(e) = flag_epsilon {
            if !(e.is_finite() && e > 0.0) {
                return Err(CliError::Input(format!("--epsilon must be positive, got {e}")));
            }
        }
        let plant = problem.plant()?;
        let spec = problem.observer_spec(flag_epsilon, env_epsilon()?)?;
        Ok(Self { problem, plant, spec })
    }

    pub fn model(&self) -> &SystemModel {
        self.plant.model()
    }

    pub fn design(&self) -> Result<(DesignResult, Option<CertificationReport>), CliError> {
        let result = synthesis::design(self.model(), &self.spec)?;
        let report = result.is_optimal().then(|| certify(&result, self.model(), &self.spec));
        Ok((result, report))
    }

    /// The file's fixed gain, or a fresh design. `Err` carries the
    /// infeasible design result.
    pub fn gain_or_design(&self) -> Result<Result<GainChoice, DesignResult>, CliError> {
        if let Some(l) = &self.problem.gain {
            return Ok(Ok(GainChoice {
                l: l.clone(),
                design: None,
            }));
        }
        let (result, report) = self.design()?;
        match result.l_star.clone() {
            Some(l) if result.is_optimal() => Ok(Ok(GainChoice {
                l,
                design: Some((result, report.expect("optimal designs are certified"))),
            })),
            _ => Ok(Err(result)),
        }
    }

    pub fn simulate(&self, l: &Matrix) -> Result<Trace, CliError> {
        let cfg = self
            .problem
            .simulation
            .as_ref()
            .ok_or_else(|| CliError::Input("simulation: missing".into()))?;
        let dist = || {
            self.problem
                .disturbance
                .as_ref()
                .ok_or_else(|| CliError::Input("disturbance: missing".into()))
        };
        let form = self.spec.form;
        let trace = match &self.plant {
            Plant::Population(model, _) => simulate_population(model, l, cfg)?,
            Plant::Linear(SystemModel::Continuous(s)) => simulate_ct(s, l, form, dist()?, cfg)?,
            Plant::Linear(_) if form == ObserverForm::Relaxed => {
                return Err(CliError::Input("observer.form: relaxed observers are continuous-time only".into()));
            }
            Plant::Linear(SystemModel::Delay(s)) => simulate_delay(s, l, dist()?, cfg)?,
            Plant::Linear(SystemModel::Discrete(s)) => simulate_dt(s, l, dist()?, cfg)?,
            Plant::Linear(SystemModel::DiscreteDelay(s)) => simulate_dt_delay(s, l, dist()?, cfg)?,
        };
        Ok(trace)
    }
}

pub struct GainChoice {
    pub l: Matrix,
    pub design: Option<(DesignResult, CertificationReport)>,
}

/// Gain of `omega -> M xi + N omega` for the error dynamics closed by `l`.
/// For the relaxed form the error input is the identity.
pub fn error_gain(model: &SystemModel, form: ObserverForm, l: &Matrix, m: &Matrix, n: &Matrix) -> Result<f64, CliError> {
    Ok(error_dynamics(model, form, l)?.gain(m, n)?)
}

/// Certified bound on `|M e|` per unit of disturbance-bound width, the
/// quantity estimated by the empirical peak gain. The relaxed observer is
/// driven through both parts of `E - LF`, so its bound uses `|E - LF|`.
pub fn simulation_bound(model: &SystemModel, form: ObserverForm, l: &Matrix, m: &Matrix) -> Result<f64, CliError> {
    let dynamics = error_dynamics(model, form, l)?;
    let input = match (form, model) {
        (ObserverForm::Relaxed, SystemModel::Continuous(s)) => s.e.sub(&l.matmul(&s.f)?)?.map(f64::abs),
        _ => dynamics.e_cl.clone(),
    };
    let n = Matrix::zeros(m.rows(), input.cols());
    Ok(linf_gain_closed(&dynamics.a_cl, &input, m, &n)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationSummary {
    pub samples: usize,
    pub dt: f64,
    pub inclusion: InclusionReport,
    /// `None` when the disturbance bounds are exact.
    pub empirical_gain: Option<f64>,
    pub certified_gain: f64,
}

impl SimulationSummary {
    pub fn gain_ok(&self, margin: f64) -> bool {
        self.empirical_gain.map_or(true, |g| g <= self.certified_gain + margin)
    }
}

pub fn summarize(loaded: &Loaded, l: &Matrix, trace: &Trace, tol: f64) -> Result<SimulationSummary, CliError> {
    let n = trace.state_dim();
    let identity = Matrix::identity(n);
    let empirical_gain = match empirical_peak_gain(trace, &identity) {
        Ok(g) => Some(g),
        Err(SimulationError::UndefinedGain) => None,
        Err(e) => return Err(e.into()),
    };
    Ok(SimulationSummary {
        samples: trace.len(),
        dt: trace.dt,
        inclusion: check_inclusion(trace, tol),
        empirical_gain,
        certified_gain: simulation_bound(loaded.model(), loaded.spec.form, l, &identity)?,
    })
}

fn emit(path: Option<&Path>, text: &str, out: &mut dyn Write) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("documents serialize");
    s.push('\n');
    s
}

#[derive(Serialize)]
struct DesignDocument<'a> {
    name: String,
    #[serde(flatten)]
    result: &'a DesignResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    diagnostic_message: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    certification: Option<&'a CertificationReport>,
}

pub fn design(args: &CommonArgs, out: &mut dyn Write) -> Result<u8, CliError> {
    let loaded = Loaded::from_file(&args.input, args.epsilon)?;
    let (result, report) = loaded.design()?;
    let doc = DesignDocument {
        name: loaded.problem.display_name(),
        result: &result,
        diagnostic_message: result.diagnostic.as_ref().map(ToString::to_string),
        certification: report.as_ref(),
    };
    emit(args.out.as_deref(), &to_json(&doc), out)?;
    Ok(if result.is_optimal() { EXIT_OK } else { EXIT_INFEASIBLE })
}

/// Parses a weight or gain given on the command line.
pub fn parse_matrix(text: &str, rows: usize, cols: usize, flat_is_column: bool) -> Result<Matrix, CliError> {
    let bad = |msg: String| CliError::Input(msg);
    let m = match text.trim() {
        "I" => {
            if rows != cols {
                return Err(bad(format!("identity needs a square {rows}x{cols} weight")));
            }
            Matrix::identity(rows)
        }
        "ones" => Matrix::filled(rows, cols, 1.0),
        "zeros" => Matrix::zeros(rows, cols),
        json => {
            let value: serde_json::Value =
                serde_json::from_str(json).map_err(|e| bad(format!("not a matrix: {json:?}: {e}")))?;
            if let Ok(flat) = serde_json::from_value::<Vec<f64>>(value.clone()) {
                if flat_is_column {
                    Matrix::column(&flat)
                } else {
                    Matrix::from_rows(&[flat]).map_err(|e| bad(e.to_string()))?
                }
            } else {
                serde_json::from_value::<Matrix>(value).map_err(|e| bad(format!("not a matrix: {json:?}: {e}")))?
            }
        }
    };
    Ok(m)
}

#[derive(Serialize)]
struct GainDocument {
    name: String,
    form: ObserverForm,
    l: Matrix,
    output_matrix: Matrix,
    feedthrough: Matrix,
    gamma_closed: f64,
    gamma_lp: f64,
    /// `lambda > 0` certifying `gamma_lp`.
    certificate: Vector,
}

pub fn gain(args: &GainArgs, out: &mut dyn Write) -> Result<u8, CliError> {
    let loaded = Loaded::from_file(&args.common.input, args.common.epsilon)?;
    let model = loaded.model();
    let (n, _, r) = model.dims();
    let l = match &args.gain {
        Some(text) => parse_matrix(text, n, r, true)?,
        None => loaded.problem.gain.clone().unwrap_or_else(|| Matrix::zeros(n, r)),
    };
    if l.shape() != (n, r) {
        return Err(CliError::Input(format!("--gain: is {}x{}, expected {n}x{r}", l.rows(), l.cols())));
    }
    let form = loaded.spec.form;
    let dynamics = error_dynamics(model, form, &l)?;
    let p = dynamics.e_cl.cols();
    let m = match &args.output_matrix {
        Some(text) => parse_matrix(text, n, n, false)?,
        None => Matrix::identity(n),
    };
    let feed = match &args.feedthrough {
        Some(text) => parse_matrix(text, m.rows(), p, false)?,
        None => Matrix::zeros(m.rows(), p),
    };
    let gamma_closed = dynamics.gain(&m, &feed)?;
    let (gamma_lp, certificate) = linf_gain_lp(&dynamics.a_cl, &dynamics.e_cl, &m, &feed)?;
    let doc = GainDocument {
        name: loaded.problem.display_name(),
        form,
        l,
        output_matrix: m,
        feedthrough: feed,
        gamma_closed,
        gamma_lp,
        certificate,
    };
    emit(args.common.out.as_deref(), &to_json(&doc), out)?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct SimulationDocument<'a> {
    name: String,
    l: &'a Matrix,
    #[serde(flatten)]
    summary: &'a SimulationSummary,
}

pub fn simulate(args: &CommonArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<u8, CliError> {
    let loaded = Loaded::from_file(&args.input, args.epsilon)?;
    let choice = match loaded.gain_or_design()? {
        Ok(c) => c,
        Err(result) => {
            let why = result.diagnostic.map(|d| d.to_string()).unwrap_or_default();
            writeln!(err, "design infeasible: {why}")?;
            return Ok(EXIT_INFEASIBLE);
        }
    };
    let trace = loaded.simulate(&choice.l)?;
    let summary = summarize(&loaded, &choice.l, &trace, INCLUSION_TOL)?;
    let doc = SimulationDocument {
        name: loaded.problem.display_name(),
        l: &choice.l,
        summary: &summary,
    };
    // The CSV takes stdout when no path is given; the report then goes to stderr.
    match &args.out {
        Some(path) => {
            let file = std::fs::File::create(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            trace.write_csv(std::io::BufWriter::new(file))?;
            out.write_all(to_json(&doc).as_bytes())?;
        }
        None => {
            trace.write_csv(&mut *out)?;
            err.write_all(to_json(&doc).as_bytes())?;
        }
    }
    if let Some(v) = &summary.inclusion.first_violation {
        writeln!(
            err,
            "inclusion violated at t = {} (sample {}), component {}, {:?} side, margin {:e}",
            v.time, v.sample, v.component, v.side, v.margin
        )?;
        return Ok(EXIT_VIOLATION);
    }
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct CheckDocument<'a> {
    name: String,
    passed: bool,
    l: Option<&'a Matrix>,
    #[serde(skip_serializing_if = "Option::is_none")]
    design: Option<&'a DesignResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    certification: Option<&'a CertificationReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    simulation: Option<&'a SimulationSummary>,
    failures: Vec<String>,
}

/// Design (or take the fixed gain), certify, and when a scenario is given
/// simulate it and compare the empirical gain with the certified one.
pub fn check(args: &CommonArgs, out: &mut dyn Write) -> Result<u8, CliError> {
    let loaded = Loaded::from_file(&args.input, args.epsilon)?;
    let name = loaded.problem.display_name();
    let choice = match loaded.gain_or_design()? {
        Ok(c) => c,
        Err(result) => {
            let doc = CheckDocument {
                name,
                passed: false,
                l: None,
                design: Some(&result),
                certification: None,
                simulation: None,
                failures: vec![result.diagnostic.as_ref().map(ToString::to_string).unwrap_or_default()],
            };
            emit(args.out.as_deref(), &to_json(&doc), out)?;
            return Ok(EXIT_INFEASIBLE);
        }
    };
    let mut failures = Vec::new();
    if let Some((_, report)) = &choice.design {
        failures.extend(report.flags.iter().map(|f| format!("certification {:?}: {}", f.check, f.detail)));
    } else if let Err(e) = error_dynamics(loaded.model(), loaded.spec.form, &choice.l) {
        failures.push(format!("gain: {e}"));
    }
    let summary = match (&loaded.problem.simulation, failures.is_empty()) {
        (Some(_), true) => {
            let trace = loaded.simulate(&choice.l)?;
            let s = summarize(&loaded, &choice.l, &trace, INCLUSION_TOL)?;
            if let Some(v) = &s.inclusion.first_violation {
                failures.push(format!("inclusion violated at t = {}, component {}", v.time, v.component));
            }
            if !s.gain_ok(GAIN_MARGIN) {
                failures.push(format!(
                    "empirical gain {} exceeds certified {} + {GAIN_MARGIN}",
                    s.empirical_gain.unwrap_or(f64::NAN),
                    s.certified_gain
                ));
            }
            Some(s)
        }
        _ => None,
    };
    let doc = CheckDocument {
        name,
        passed: failures.is_empty(),
        l: Some(&choice.l),
        design: choice.design.as_ref().map(|d| &d.0),
        certification: choice.design.as_ref().map(|d| &d.1),
        simulation: summary.as_ref(),
        failures,
    };
    emit(args.out.as_deref(), &to_json(&doc), out)?;
    Ok(if doc.passed { EXIT_OK } else { EXIT_VIOLATION })
}
