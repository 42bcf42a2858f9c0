use serde::{Deserialize, Serialize};

use crate::error::{OuqError, Result};
use crate::inequalities::optimal_mcdiarmid;
use crate::measure::{
    decode, effective_support, AxisLayout, Marginal, ParamLayout, ProductMeasure,
};
use crate::optimizer::{maximize, ConvergenceTrace, OptimizerConfig};
use crate::response::ResponseModel;

use super::coagulation::simplify;
use super::experiments::ExperimentFunctional;
use super::problem::{
    AdmissibleProblem, Integrand, Interval, MomentConstraint, ResponseMode, Scope,
};

/// Weight below which an atom does not count toward reported support.
pub const SUPPORT_WEIGHT_TOL: f64 = 1e-4;

/// Gap added to `epsilon` so that `mu[fails] > epsilon` becomes a closed constraint.
pub const UNSAFE_GAP: f64 = 1e-9;

/// Constraint value reported when a moment cannot be evaluated.
const UNEVALUABLE: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Upper,
    Lower,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    /// Finite-support product measures on the input box.
    Measure,
    /// Vertex sets and Bernoulli measures on `{0,1}^m`.
    Hypercube,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReducedProblem {
    /// Atoms per axis (1 for pinned axes).
    pub support_counts: Vec<usize>,
    pub layout: ParamLayout,
    pub problem: AdmissibleProblem,
    pub route: Route,
}

impl ReducedProblem {
    /// Same problem with `k[i]` atoms on every free axis `i`.
    pub fn with_support(&self, k: &[usize]) -> Result<Self> {
        if k.len() != self.support_counts.len() {
            return Err(OuqError::LengthMismatch {
                expected: self.support_counts.len(),
                got: k.len(),
            });
        }
        let axes: Vec<AxisLayout> = self
            .layout
            .axes()
            .iter()
            .zip(k)
            .map(|(a, &k)| AxisLayout { k, ..a.clone() })
            .collect();
        let layout = ParamLayout::new(axes)?;
        Ok(Self {
            support_counts: layout.support_counts(),
            layout,
            problem: self.problem.clone(),
            route: self.route,
        })
    }
}

/// Support counts from the reduction theorem: `k_i = n' + n_i + 1`.
pub fn reduce(problem: &AdmissibleProblem) -> Result<ReducedProblem> {
    let dim = problem.domain.dim();
    let intervals = problem.domain.intervals();
    if let ResponseMode::OscillationClass { .. } = problem.response {
        if !problem.constraints.is_empty() {
            return Err(OuqError::Irreducible {
                index: 0,
                reason: "the hypercube reduction admits only the mean-interval constraint of the \
                         oscillation class"
                    .into(),
            });
        }
        let layout = ParamLayout::uniform(&intervals, &vec![2; dim])?;
        return Ok(ReducedProblem {
            support_counts: vec![2; dim],
            layout,
            problem: problem.clone(),
            route: Route::Hypercube,
        });
    }

    let mut n_global = 0;
    let mut n_factor = vec![0; dim];
    for (i, c) in problem.constraints.iter().enumerate() {
        let MomentConstraint::Moment {
            scope, integrand, ..
        } = c
        else {
            continue;
        };
        let count = integrand.moment_count();
        match (scope, integrand.input_axes()) {
            (Scope::Global, _) if matches!(integrand, Integrand::Variance { .. }) => {
                return Err(OuqError::Irreducible {
                    index: i,
                    reason:
                        "a variance is not a linear moment of the product measure; scope it to its \
                             own factor"
                            .into(),
                });
            }
            (Scope::Global, _) => n_global += count,
            (Scope::Factor(f), Some(axes)) if axes.iter().all(|a| a == f) => n_factor[*f] += count,
            (Scope::Factor(f), _) => {
                return Err(OuqError::Irreducible {
                    index: i,
                    reason: format!(
                        "factor-{f} constraint depends on other inputs or on the response"
                    ),
                })
            }
        }
    }
    let pins = problem.pins();
    let axes: Vec<AxisLayout> = intervals
        .iter()
        .enumerate()
        .map(|(i, &(lo, hi))| AxisLayout {
            lo,
            hi,
            k: n_global + n_factor[i] + 1,
            pinned: pins[i],
        })
        .collect();
    let layout = ParamLayout::new(axes)?;
    Ok(ReducedProblem {
        support_counts: layout.support_counts(),
        layout,
        problem: problem.clone(),
        route: Route::Measure,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundResult {
    pub value: f64,
    pub direction: Direction,
    pub route: Route,
    /// Extremal measure; for the hypercube route, Bernoulli marginals on `{0, 1}`.
    pub extremal_measure: ProductMeasure,
    /// Atoms per axis carrying weight above [`SUPPORT_WEIGHT_TOL`].
    pub support: Vec<usize>,
    pub residual: f64,
    pub trace: ConvergenceTrace,
    pub seed: u64,
}

/// What the optimizer extremizes.
#[derive(Clone, Copy)]
pub(crate) enum Target<'a> {
    Failure,
    Functional(&'a ExperimentFunctional),
}

/// Evaluates moment constraints and objectives on decoded measures.
pub(crate) struct Evaluator<'a> {
    problem: &'a AdmissibleProblem,
    model: &'a ResponseModel,
    moments: Vec<(&'a Integrand, f64, f64)>,
    template: Vec<f64>,
    n_constraints: usize,
}

impl<'a> Evaluator<'a> {
    pub(crate) fn new(problem: &'a AdmissibleProblem) -> Result<Self> {
        let ResponseMode::Known(model) = &problem.response else {
            return Err(OuqError::InvalidArgument(
                "measure-route evaluation needs a known response".into(),
            ));
        };
        let moments: Vec<(&Integrand, f64, f64)> = problem
            .constraints
            .iter()
            .filter_map(|c| match c {
                MomentConstraint::Moment {
                    integrand, lo, hi, ..
                } => Some((integrand, *lo, *hi)),
                MomentConstraint::Pinned { .. } => None,
            })
            .collect();
        let n_constraints = moments
            .iter()
            .map(|(_, lo, hi)| lo.is_finite() as usize + hi.is_finite() as usize)
            .sum();
        Ok(Self {
            problem,
            model,
            moments,
            template: problem
                .domain
                .intervals()
                .iter()
                .map(|(lo, _)| *lo)
                .collect(),
            n_constraints,
        })
    }

    fn response(&self, x: &[f64]) -> Result<f64> {
        self.model.eval(x)
    }

    /// Expectation of an integrand that reads at most one input.
    fn marginal_expectation(
        &self,
        pm: &ProductMeasure,
        ig: &Integrand,
        axis: Option<usize>,
    ) -> Result<f64> {
        let mut x = self.template.clone();
        let Some(axis) = axis else {
            return self.pointwise(ig, &x, None);
        };
        let mg = &pm.marginals()[axis];
        if let Integrand::Variance { .. } = ig {
            return Ok(mg.variance());
        }
        let mut total = 0.0;
        for (p, w) in mg.atoms() {
            x[axis] = p;
            total += w * self.pointwise(ig, &x, None)?;
        }
        Ok(total)
    }

    fn pointwise(&self, ig: &Integrand, x: &[f64], y: Option<f64>) -> Result<f64> {
        let y = || match y {
            Some(y) => Ok(y),
            None => self.response(x),
        };
        Ok(match ig {
            Integrand::Response => y()?,
            Integrand::ResponseFn { expression } => expression.eval(&[y()?])?,
            Integrand::FailureIndicator => self.problem.failure.fails(y()?) as u8 as f64,
            Integrand::Input { expression } => expression.eval(x)?,
            Integrand::InputIndicator { axis, cmp, value } => {
                cmp.holds(x[*axis], *value) as u8 as f64
            }
            Integrand::Variance { .. } => unreachable!("variance is evaluated per marginal"),
        })
    }

    /// Values of all moment constraints, in order.
    pub(crate) fn moment_values(&self, pm: &ProductMeasure) -> Result<Vec<f64>> {
        let mut values = vec![0.0; self.moments.len()];
        let mut joint = Vec::new();
        for (j, (ig, _, _)) in self.moments.iter().enumerate() {
            match ig.input_axes() {
                Some(axes) if axes.len() <= 1 => {
                    values[j] = self.marginal_expectation(pm, ig, axes.first().copied())?
                }
                _ => joint.push(j),
            }
        }
        if !joint.is_empty() {
            let needs_y = joint
                .iter()
                .any(|&j| self.moments[j].0.input_axes().is_none());
            let mut err = None;
            pm.for_each_atom(|x, w| {
                if err.is_some() {
                    return;
                }
                let y = if needs_y {
                    match self.response(x) {
                        Ok(y) => Some(y),
                        Err(e) => {
                            err = Some(e);
                            return;
                        }
                    }
                } else {
                    None
                };
                for &j in &joint {
                    match self.pointwise(self.moments[j].0, x, y) {
                        Ok(v) => values[j] += w * v,
                        Err(e) => {
                            err = Some(e);
                            return;
                        }
                    }
                }
            });
            if let Some(e) = err {
                return Err(e);
            }
        }
        Ok(values)
    }

    /// Signed constraint vector; feasible when every entry is `<= 0`.
    pub(crate) fn constraints(&self, pm: &ProductMeasure) -> Vec<f64> {
        let Ok(values) = self.moment_values(pm) else {
            return vec![UNEVALUABLE; self.n_constraints];
        };
        let mut g = Vec::with_capacity(self.n_constraints);
        for ((_, lo, hi), v) in self.moments.iter().zip(values) {
            let v = if v.is_finite() { v } else { f64::NAN };
            if lo.is_finite() {
                g.push(if v.is_nan() { UNEVALUABLE } else { lo - v });
            }
            if hi.is_finite() {
                g.push(if v.is_nan() { UNEVALUABLE } else { v - hi });
            }
        }
        g
    }

    pub(crate) fn failure_probability(&self, pm: &ProductMeasure) -> Result<f64> {
        let mut total = 0.0;
        let mut err = None;
        pm.for_each_atom(|x, w| {
            if err.is_none() {
                match self.response(x) {
                    Ok(y) => {
                        if self.problem.failure.fails(y) {
                            total += w;
                        }
                    }
                    Err(e) => err = Some(e),
                }
            }
        });
        match err {
            Some(e) => Err(e),
            None => Ok(total.clamp(0.0, 1.0)),
        }
    }

    pub(crate) fn objective(&self, pm: &ProductMeasure, target: Target<'_>) -> Result<f64> {
        match target {
            Target::Failure => self.failure_probability(pm),
            Target::Functional(phi) => phi.value(pm),
        }
    }
}

/// Maximizer output of one measure-route solve, before sign handling.
pub(crate) struct Solved {
    pub measure: ProductMeasure,
    pub value: f64,
    pub residual: f64,
    pub trace: ConvergenceTrace,
}

/// Maximizes `sign * target` over the reduced admissible set.
pub(crate) fn optimize(
    reduced: &ReducedProblem,
    target: Target<'_>,
    sign: f64,
    cfg: &OptimizerConfig,
) -> Result<Solved> {
    let eval = Evaluator::new(&reduced.problem)?;
    let layout = &reduced.layout;
    let score = |pm: &ProductMeasure| match eval.objective(pm, target) {
        Ok(v) if v.is_finite() => sign * v,
        _ => f64::NEG_INFINITY,
    };
    let feas = |v: &[f64]| match decode(v, layout) {
        Ok(pm) => eval.constraints(&pm),
        Err(_) => vec![UNEVALUABLE; eval.n_constraints],
    };

    if layout.is_empty() {
        let pm = decode(&[], layout)?;
        let residual = eval.constraints(&pm).iter().fold(0.0f64, |a, g| a.max(*g));
        if residual > cfg.constraint_tol {
            return Err(OuqError::Infeasible {
                best_residual: residual,
            });
        }
        let value = score(&pm);
        return Ok(Solved {
            measure: pm,
            value,
            residual,
            trace: ConvergenceTrace::default(),
        });
    }

    let out = maximize(
        |v: &[f64]| decode(v, layout).map_or(f64::NEG_INFINITY, |pm| score(&pm)),
        &feas,
        layout,
        cfg,
    )?;
    let pm = decode(&out.best, layout)?;
    let (measure, value) = simplify(reduced, &eval, &score, pm, out.value, cfg);
    let residual = eval
        .constraints(&measure)
        .iter()
        .fold(0.0f64, |a, g| a.max(*g));
    Ok(Solved {
        measure,
        value,
        residual,
        trace: out.trace,
    })
}

fn measure_bound(
    reduced: &ReducedProblem,
    direction: Direction,
    cfg: &OptimizerConfig,
) -> Result<BoundResult> {
    let sign = match direction {
        Direction::Upper => 1.0,
        Direction::Lower => -1.0,
    };
    let s = optimize(reduced, Target::Failure, sign, cfg)?;
    let widths = reduced.problem.domain.widths();
    Ok(BoundResult {
        value: (sign * s.value).clamp(0.0, 1.0),
        direction,
        route: Route::Measure,
        support: effective_support(&s.measure, &widths, SUPPORT_WEIGHT_TOL),
        extremal_measure: s.measure,
        residual: s.residual,
        trace: s.trace,
        seed: cfg.seed,
    })
}

fn hypercube_bound(
    reduced: &ReducedProblem,
    direction: Direction,
    cfg: &OptimizerConfig,
) -> Result<BoundResult> {
    let ResponseMode::OscillationClass { diameters, mean } = &reduced.problem.response else {
        unreachable!("hypercube route is only taken for oscillation classes");
    };
    let failure = &reduced.problem.failure;
    let a = failure.threshold;
    // Margin of the sup of mu[f fails] (upper) or of mu[f does not fail] (lower).
    let lower_tail = !failure.direction.is_upper_tail();
    let margin = match (direction, lower_tail) {
        (Direction::Upper, true) | (Direction::Lower, false) => mean.lo - a,
        (Direction::Upper, false) | (Direction::Lower, true) => a - mean.hi,
    };
    let r = optimal_mcdiarmid(
        if margin.is_nan() {
            f64::INFINITY
        } else {
            margin
        },
        diameters,
    )?;
    let alpha = r
        .alpha
        .clone()
        .unwrap_or_else(|| vec![0.0; diameters.len()]);
    let marginals = alpha
        .iter()
        .map(|&p| Marginal::new(vec![0.0, 1.0], vec![1.0 - p, p]))
        .collect::<Result<Vec<_>>>()?;
    let value = match direction {
        Direction::Upper => r.value,
        Direction::Lower => 1.0 - r.value,
    };
    Ok(BoundResult {
        value: value.clamp(0.0, 1.0),
        direction,
        route: Route::Hypercube,
        support: alpha
            .iter()
            .map(|&p| 1 + (p > 0.0 && p < 1.0) as usize)
            .collect(),
        extremal_measure: ProductMeasure::new(marginals)?,
        residual: 0.0,
        trace: ConvergenceTrace::default(),
        seed: cfg.seed,
    })
}

pub(crate) fn solve_reduced(
    reduced: &ReducedProblem,
    direction: Direction,
    cfg: &OptimizerConfig,
) -> Result<BoundResult> {
    match reduced.route {
        Route::Measure => measure_bound(reduced, direction, cfg),
        Route::Hypercube => hypercube_bound(reduced, direction, cfg),
    }
}

/// `U(A)`: the largest failure probability over admissible scenarios.
pub fn solve_upper(problem: &AdmissibleProblem, cfg: &OptimizerConfig) -> Result<BoundResult> {
    solve_reduced(&reduce(problem)?, Direction::Upper, cfg)
}

/// `L(A)`: the smallest failure probability over admissible scenarios.
pub fn solve_lower(problem: &AdmissibleProblem, cfg: &OptimizerConfig) -> Result<BoundResult> {
    solve_reduced(&reduce(problem)?, Direction::Lower, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Certify,
    Decertify,
    CannotDecide,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificationVerdict {
    pub decision: Decision,
    pub lower: f64,
    pub upper: f64,
    pub epsilon: f64,
}

/// `U <= eps` certifies, `eps < L` decertifies; `L = eps < U` cannot decide.
pub fn certify(lower: f64, upper: f64, epsilon: f64) -> Result<CertificationVerdict> {
    let unit = |v: f64| (0.0..=1.0).contains(&v);
    if !(unit(lower) && unit(upper) && unit(epsilon)) {
        return Err(OuqError::InvalidArgument(format!(
            "bounds and epsilon must lie in [0, 1]: L={lower}, U={upper}, eps={epsilon}"
        )));
    }
    if lower > upper {
        return Err(OuqError::InvalidArgument(format!(
            "lower bound {lower} exceeds upper bound {upper}"
        )));
    }
    let decision = if upper <= epsilon {
        Decision::Certify
    } else if epsilon < lower {
        Decision::Decertify
    } else {
        Decision::CannotDecide
    };
    Ok(CertificationVerdict {
        decision,
        lower,
        upper,
        epsilon,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentIntervals {
    /// `None` when no admissible scenario is safe.
    pub safe: Option<Interval>,
    /// `None` when no admissible scenario is unsafe.
    #[serde(rename = "unsafe")]
    pub unsafe_: Option<Interval>,
}

/// Range of `phi` over safe and over unsafe scenarios.
pub fn safe_unsafe_intervals(
    problem: &AdmissibleProblem,
    phi: &ExperimentFunctional,
    epsilon: f64,
    cfg: &OptimizerConfig,
) -> Result<ExperimentIntervals> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(OuqError::InvalidArgument(format!(
            "epsilon {epsilon} outside [0, 1]"
        )));
    }
    let safe = MomentConstraint::moment(
        Scope::Global,
        Integrand::FailureIndicator,
        f64::NEG_INFINITY,
        epsilon,
    );
    let unsafe_ = MomentConstraint::moment(
        Scope::Global,
        Integrand::FailureIndicator,
        epsilon + UNSAFE_GAP + cfg.constraint_tol,
        f64::INFINITY,
    );
    let mut residual = f64::INFINITY;
    let mut range = |side: MomentConstraint| -> Result<Option<Interval>> {
        let reduced = reduce(&problem.with_constraints([side])?)?;
        if reduced.route != Route::Measure {
            return Err(OuqError::Irreducible {
                index: 0,
                reason: "experiment intervals need a known response".into(),
            });
        }
        let hi = match optimize(&reduced, Target::Functional(phi), 1.0, cfg) {
            Ok(s) => s.value,
            Err(OuqError::Infeasible { best_residual }) => {
                residual = residual.min(best_residual);
                return Ok(None);
            }
            Err(e) => return Err(e),
        };
        let lo = match optimize(&reduced, Target::Functional(phi), -1.0, cfg) {
            Ok(s) => 0.0 - s.value,
            Err(OuqError::Infeasible { .. }) => hi,
            Err(e) => return Err(e),
        };
        Ok(Some(Interval { lo: lo.min(hi), hi }))
    };
    let safe = range(safe)?;
    let unsafe_ = range(unsafe_)?;
    if safe.is_none() && unsafe_.is_none() {
        return Err(OuqError::Infeasible {
            best_residual: residual,
        });
    }
    Ok(ExperimentIntervals { safe, unsafe_ })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    NoConclusion,
    Safe,
    Unsafe,
    FaultyAssumptions,
}

/// What an observed value of the functional implies.
pub fn classify_outcome(value: f64, safe: Option<Interval>, unsafe_: Option<Interval>) -> Outcome {
    let in_safe = safe.is_some_and(|j| j.contains(value));
    let in_unsafe = unsafe_.is_some_and(|j| j.contains(value));
    match (in_safe, in_unsafe) {
        (true, true) => Outcome::NoConclusion,
        (true, false) => Outcome::Safe,
        (false, true) => Outcome::Unsafe,
        (false, false) => Outcome::FaultyAssumptions,
    }
}
