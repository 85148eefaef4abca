//! Sparse bad-data detection for DC power-flow state estimation.
//!
//! Measurements are modelled as `p = Q a + ε`: a signal in the column space
//! of the susceptance matrix plus a sparse error. The error is recovered by
//! ℓ1 minimization over the orthogonal complement.

pub mod bmatrix;
pub mod case;
pub mod error;
pub mod lp;
pub mod recovery;
pub mod scenario;
pub mod subspace;

pub use bmatrix::{
    build_b, injections, line_flows, InjectionVector, StateVector, SusceptanceMatrix,
};
pub use case::{load_case, parse_case, parse_csv_case, Branch, Bus, BusKind, NetworkCase};
pub use error::{Error, Result};
pub use recovery::{
    flag_support, l1_detect, l1_regress, lse, recover_state, reference_to_slack,
    CoefficientEstimate, FlaggedSupport, NoiseEstimate, SolverStatus,
};
pub use scenario::{
    inject_noise, run_scenario, run_scenario_on, sweep_alpha, synth_truth, Detection,
    DetectionReport, Experiment, MeasurementSet, Preset, ScenarioConfig, SparseMagnitude,
    SweepTable,
};
pub use subspace::{
    check_recovery_bound, coherence, decompose, spectrum, CoherenceReport, RecoveryCondition,
    SubspaceBasis,
};
