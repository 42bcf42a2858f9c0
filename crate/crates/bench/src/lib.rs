//! Fixtures shared by the benchmarks.

use ouq_core::{
    AdmissibleProblem, BoxDomain, Cmp, FailureEvent, Integrand, MomentConstraint, OptimizerConfig,
    ResponseMode, ResponseModel, Scope, SurrogateParams,
};

pub const REMARK_DIAMETERS: [f64; 3] = [8.86, 7.20, 4.17];

/// Mean perforation area in [5.5, 7.5] on the hypervelocity box.
pub fn a_h() -> AdmissibleProblem {
    AdmissibleProblem::new(
        BoxDomain::hypervelocity(),
        ResponseMode::Known(ResponseModel::surrogate(SurrogateParams::default())),
        vec![MomentConstraint::moment(
            Scope::Global,
            Integrand::Response,
            5.5,
            7.5,
        )],
        FailureEvent {
            direction: Cmp::Le,
            threshold: 0.0,
            strict: false,
        },
        None,
    )
    .expect("fixture is valid")
}

/// Short optimizer budget so a single solve fits a benchmark iteration.
pub fn quick_config(seed: u64) -> OptimizerConfig {
    OptimizerConfig {
        seed,
        max_generations: 60,
        polish_budget: 300,
        ..Default::default()
    }
}
