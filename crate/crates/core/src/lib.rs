//! Optimal uncertainty quantification.
//!
//! Failure-probability bounds over sets of product measures constrained by
//! generalized moments, computed on finite Dirac-mass reductions; optimal
//! McDiarmid and Hoeffding bounds in closed form; certification verdicts and
//! experiment ranking.

pub mod error;
pub mod inequalities;
pub mod measure;
pub mod optimizer;
pub mod ouq;
pub mod response;

pub use error::{OuqError, Result};
pub use inequalities::{
    classic_mcdiarmid, hypercube_h, hypercube_oracle, optimal_hoeffding, optimal_mcdiarmid,
    CubicAnalysis, DiameterVector, HoeffdingBound, OptimalBoundResult,
};
pub use measure::{
    decode, effective_support, encode, event_probability, expectation, Marginal, ParamLayout,
    ProductMeasure,
};
pub use optimizer::{
    maximize, maximize_from, repair, ConvergenceTrace, Feasibility, OptimizeOutcome,
    OptimizerConfig, TraceRow,
};
pub use ouq::{
    certify, classify_outcome, coagulation_fragmentation, most_predictive_experiment, reduce,
    safe_unsafe_intervals, solve_lower, solve_upper, AdmissibleProblem, BoundResult,
    CertificationVerdict, Cmp, Decision, Direction, ExperimentFunctional, ExperimentIntervals,
    FailureEvent, FunctionalKind, Integrand, Interval, MomentConstraint, Outcome, ReducedProblem,
    ResponseMode, Route, Scope,
};
pub use response::{
    ballistic_limit, oscillation, parse_expression, perforation_area, Axis, BoxDomain,
    ExpressionAst, ModelKind, OscillationResult, OscillationSearch, ResponseModel, SurrogateParams,
};
