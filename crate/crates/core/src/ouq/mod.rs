//! Optimal bounds on failure probability over admissible sets of
//! (response, product measure) pairs, and the decisions built on them.

mod coagulation;
mod experiments;
mod problem;
mod solve;

pub use coagulation::{
    coagulation_fragmentation, CoagulationReport, CoagulationStep, MERGE_VALUE_TOL,
};
pub use experiments::{
    most_predictive_experiment, ExperimentFunctional, ExperimentScore, FunctionalKind, OutcomeCell,
};
pub use problem::{
    AdmissibleProblem, Cmp, FailureEvent, Integrand, Interval, MomentConstraint, ResponseMode,
    Scope,
};
pub use solve::{
    certify, classify_outcome, reduce, safe_unsafe_intervals, solve_lower, solve_upper,
    BoundResult, CertificationVerdict, Decision, Direction, ExperimentIntervals, Outcome,
    ReducedProblem, Route, SUPPORT_WEIGHT_TOL, UNSAFE_GAP,
};
