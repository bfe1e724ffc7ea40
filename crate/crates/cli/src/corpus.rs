//! Benchmark corpus: problem files plus one manifest of expected values and
//! tolerances.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use obsynth_core::synthesis::DesignStatus;
use obsynth_core::Matrix;
use serde::{Deserialize, Serialize};

use crate::commands::{error_gain, parse_matrix, summarize, Loaded};
use crate::problem::{ProblemFile, SCHEMA_VERSION};
use crate::{BenchArgs, CliError, EXIT_OK, EXIT_VIOLATION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema_version: String,
    pub cases: Vec<CaseEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseEntry {
    pub name: String,
    /// Problem file, relative to the manifest.
    pub file: String,
    /// Margins to sweep; every run must meet the expectations. Defaults to
    /// the margin resolved from the problem file.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub epsilons: Vec<f64>,
    pub expect: Expectations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Tolerance {
    Uniform(f64),
    PerEntry(Matrix),
}

impl Tolerance {
    fn at(&self, i: usize, j: usize) -> f64 {
        match self {
            Self::Uniform(t) => *t,
            Self::PerEntry(m) => m[(i, j)],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectedMatrix {
    pub value: Matrix,
    pub tol: Tolerance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectedScalar {
    pub value: f64,
    pub tol: f64,
}

/// Expected gain of the error dynamics for one output weighting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectedGain {
    /// `I`, `ones`, or a JSON matrix.
    pub output_matrix: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feedthrough: Option<String>,
    pub value: f64,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationExpectation {
    pub inclusion_tol: f64,
    /// Allowed excess of the empirical gain over the certified one.
    pub gain_margin: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub empirical_gain_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectations {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<DesignStatus>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_star: Option<ExpectedMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_star: Option<ExpectedScalar>,
    /// Substrings the infeasibility diagnostic must contain.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostic_contains: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gains: Vec<ExpectedGain>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationExpectation>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseOutcome {
    pub name: String,
    pub passed: bool,
    pub seconds: f64,
    pub mismatches: Vec<String>,
    /// Headline numbers for the table.
    pub summary: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchSummary {
    pub cases: Vec<CaseOutcome>,
}

impl BenchSummary {
    pub fn all_passed(&self) -> bool {
        self.cases.iter().all(|c| c.passed)
    }

    pub fn table(&self) -> String {
        let width = self.cases.iter().map(|c| c.name.len()).max().unwrap_or(4).max(4);
        let mut s = format!("{:<width$}  {:<6}  {:>9}  details\n", "case", "result", "time [s]");
        for c in &self.cases {
            let verdict = if c.passed { "pass" } else { "FAIL" };
            s += &format!("{:<width$}  {:<6}  {:>9.4}  {}\n", c.name, verdict, c.seconds, c.summary);
            for m in &c.mismatches {
                s += &format!("{:<width$}    mismatch: {m}\n", "");
            }
        }
        let passed = self.cases.iter().filter(|c| c.passed).count();
        s += &format!("{passed}/{} cases passed\n", self.cases.len());
        s
    }
}

/// Default corpus location: `./bench` when present, else the copy shipped
/// with the sources.
pub fn default_manifest() -> PathBuf {
    let local = Path::new("bench/manifest.json");
    if local.exists() {
        return local.to_path_buf();
    }
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../bench/manifest.json")
}

pub fn read_manifest(path: &Path) -> Result<Manifest, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let manifest: Manifest = serde_path_to_error::deserialize(de)
        .map_err(|e| CliError::Input(format!("{}: {}: {}", path.display(), e.path(), e.inner())))?;
    if manifest.schema_version != SCHEMA_VERSION {
        return Err(CliError::Input(format!("{}: unsupported schema_version", path.display())));
    }
    Ok(manifest)
}

fn close(got: f64, want: f64, tol: f64) -> bool {
    (got - want).abs() <= tol
}

/// Runs one case; errors become mismatches so one bad case cannot stop the
/// corpus.
pub fn run_case(entry: &CaseEntry, base: &Path) -> CaseOutcome {
    let start = Instant::now();
    let mut mismatches = Vec::new();
    let mut summary = String::new();
    if let Err(e) = check_case(entry, base, &mut mismatches, &mut summary) {
        mismatches.push(format!("error: {e}"));
    }
    CaseOutcome {
        name: entry.name.clone(),
        passed: mismatches.is_empty(),
        seconds: start.elapsed().as_secs_f64(),
        mismatches,
        summary,
    }
}

fn check_case(entry: &CaseEntry, base: &Path, bad: &mut Vec<String>, summary: &mut String) -> Result<(), CliError> {
    let problem = ProblemFile::read(&base.join(&entry.file))?;
    let epsilons: Vec<Option<f64>> = if entry.epsilons.is_empty() {
        vec![None]
    } else {
        entry.epsilons.iter().copied().map(Some).collect()
    };
    let exp = &entry.expect;
    for eps in epsilons {
        let loaded = Loaded::new(problem.clone(), eps)?;
        let tag = eps.map(|e| format!(" [epsilon {e:e}]")).unwrap_or_default();
        let l = match &problem.gain {
            Some(l) => Some(l.clone()),
            None => {
                let (result, report) = loaded.design()?;
                if let Some(want) = exp.status {
                    if result.status != want {
                        bad.push(format!("status{tag}: got {:?}, expected {want:?}", result.status));
                    }
                }
                if let Some(report) = &report {
                    for f in &report.flags {
                        bad.push(format!("certification{tag}: {:?}: {}", f.check, f.detail));
                    }
                }
                if let Some(d) = &result.diagnostic {
                    let text = d.to_string();
                    *summary = text.clone();
                    for needle in &exp.diagnostic_contains {
                        if !text.contains(needle.as_str()) {
                            bad.push(format!("diagnostic{tag}: {text:?} lacks {needle:?}"));
                        }
                    }
                } else if !exp.diagnostic_contains.is_empty() {
                    bad.push(format!("diagnostic{tag}: none reported"));
                }
                if let Some(want) = &exp.gamma_star {
                    match result.gamma_star {
                        Some(g) if close(g, want.value, want.tol) => {}
                        got => bad.push(format!("gamma_star{tag}: got {got:?}, expected {} (tol {})", want.value, want.tol)),
                    }
                }
                if let Some(l) = &result.l_star {
                    *summary = format!("L* = {:?}", l.to_rows());
                    if let Some(g) = result.gamma_star {
                        *summary += &format!(", gamma* = {g:.6}");
                    }
                }
                result.l_star.clone()
            }
        };
        if let (Some(want), Some(got)) = (&exp.l_star, &l) {
            if want.value.shape() != got.shape() {
                bad.push(format!("l_star{tag}: shape {:?}, expected {:?}", got.shape(), want.value.shape()));
            } else {
                for i in 0..got.rows() {
                    for j in 0..got.cols() {
                        let tol = want.tol.at(i, j);
                        if !close(got[(i, j)], want.value[(i, j)], tol) {
                            bad.push(format!(
                                "l_star[{i},{j}]{tag}: got {}, expected {} (tol {tol})",
                                got[(i, j)],
                                want.value[(i, j)]
                            ));
                        }
                    }
                }
            }
        } else if exp.l_star.is_some() {
            bad.push(format!("l_star{tag}: no gain returned"));
        }
        let Some(l) = l else { continue };
        let model = loaded.model();
        let (n, _, _) = model.dims();
        for g in &exp.gains {
            let dynamics = obsynth_core::error_dynamics(model, loaded.spec.form, &l)?;
            let m = parse_matrix(&g.output_matrix, n, n, false)?;
            let p = dynamics.e_cl.cols();
            let feed = match &g.feedthrough {
                Some(t) => parse_matrix(t, m.rows(), p, false)?,
                None => Matrix::zeros(m.rows(), p),
            };
            let got = error_gain(model, loaded.spec.form, &l, &m, &feed)?;
            if !close(got, g.value, g.tol) {
                bad.push(format!("gain M={}{tag}: got {got}, expected {} (tol {})", g.output_matrix, g.value, g.tol));
            }
        }
        if let Some(sim) = &exp.simulation {
            let trace = loaded.simulate(&l)?;
            let s = summarize(&loaded, &l, &trace, sim.inclusion_tol)?;
            if let Some(v) = &s.inclusion.first_violation {
                bad.push(format!(
                    "inclusion{tag}: violated at t = {}, component {}, margin {:e}",
                    v.time, v.component, v.margin
                ));
            }
            if !s.gain_ok(sim.gain_margin) {
                bad.push(format!(
                    "empirical gain{tag}: {:?} exceeds certified {} + {}",
                    s.empirical_gain, s.certified_gain, sim.gain_margin
                ));
            }
            if let (Some(max), Some(g)) = (sim.empirical_gain_max, s.empirical_gain) {
                if g > max {
                    bad.push(format!("empirical gain{tag}: {g} above {max}"));
                }
            }
            let emp = s.empirical_gain.map_or("n/a".to_string(), |g| format!("{g:.4}"));
            *summary += &format!("{}empirical {emp} <= certified {:.4}", if summary.is_empty() { "" } else { ", " }, s.certified_gain);
        }
    }
    Ok(())
}

/// Runs the selected cases on `jobs` worker threads; results are ordered
/// by case name.
pub fn run_corpus(manifest_path: &Path, filter: Option<&str>, jobs: Option<usize>) -> Result<BenchSummary, CliError> {
    let manifest = read_manifest(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    // An exact name selects one case; otherwise the filter is a substring.
    let exact = filter.is_some_and(|f| manifest.cases.iter().any(|c| c.name == f));
    let selected: Vec<&CaseEntry> = manifest
        .cases
        .iter()
        .filter(|c| match filter {
            None => true,
            Some(f) if exact => c.name == f,
            Some(f) => c.name.contains(f),
        })
        .collect();
    if selected.is_empty() {
        return Err(CliError::Input(format!("no case matches filter {:?}", filter.unwrap_or(""))));
    }
    let workers = jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .clamp(1, selected.len());
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut cases: Vec<CaseOutcome> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                scope.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let k = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                        let Some(entry) = selected.get(k) else { break };
                        done.push(run_case(entry, base));
                    }
                    done
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("bench worker panicked")).collect()
    });
    cases.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(BenchSummary { cases })
}

pub fn bench(args: &BenchArgs, out: &mut dyn Write) -> Result<u8, CliError> {
    let path = match &args.input {
        Some(p) if p.is_dir() => p.join("manifest.json"),
        Some(p) => p.clone(),
        None => default_manifest(),
    };
    let summary = run_corpus(&path, args.filter.as_deref(), args.jobs)?;
    out.write_all(summary.table().as_bytes())?;
    if let Some(p) = &args.out {
        let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
        std::fs::write(p, text + "\n").map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
    }
    Ok(if summary.all_passed() { EXIT_OK } else { EXIT_VIOLATION })
}
