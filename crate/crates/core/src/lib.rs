//! Peak-to-peak optimal interval observers for positive error dynamics.
//!
//! Design problems are posed as small linear programs and solved with the
//! built-in dense simplex in [`lp`]. [`positive`] holds the analysis side
//! (membership tests, stability certificates, gains), [`synthesis`] the
//! observer design programs and [`simulation`] the trajectory generators
//! used to check interval inclusion.

pub mod lp;
pub mod matrix;
pub mod positive;
pub mod simulation;
pub mod synthesis;

pub use lp::DEFAULT_EPSILON;
pub use matrix::{LinalgError, Matrix, Vector};
pub use positive::{
    gain_for_output, linf_gain_closed, linf_gain_delay, linf_gain_discrete, linf_gain_lp, AnalysisError,
    ContinuousSystem, DelaySystem, DiscreteDelaySystem, DiscreteSystem, ErrorDynamics, MembershipViolation,
    StabilityCertificate,
};
pub use simulation::{
    check_inclusion, empirical_peak_gain, DisturbanceModel, InclusionReport, PopulationModel, SimConfig,
    SimulationError, Signal, Trace,
};
pub use synthesis::{
    certify, design, error_dynamics, CertificationReport, DesignResult, DesignStatus, InfeasibilityDiagnostic, ObserverForm,
    ObserverSpec, SynthesisError, SystemModel,
};
