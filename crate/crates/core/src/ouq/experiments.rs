use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{OuqError, Result};
use crate::measure::{expectation, ProductMeasure};
use crate::optimizer::OptimizerConfig;
use crate::response::ExpressionAst;

use super::problem::{AdmissibleProblem, Cmp, Integrand, MomentConstraint, Scope};
use super::solve::{reduce, solve_reduced, Direction};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FunctionalKind {
    /// `mu[x_axis cmp value]`.
    EventProbability {
        axis: usize,
        cmp: Cmp,
        value: f64,
    },
    /// `E[expression(x)]`.
    Mean {
        expression: ExpressionAst,
    },
    Variance {
        axis: usize,
    },
    /// Lower median of one input.
    Median {
        axis: usize,
    },
}

/// A quantity an experiment would measure, with the outcomes to scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentFunctional {
    pub name: String,
    #[serde(flatten)]
    pub kind: FunctionalKind,
    #[serde(default)]
    pub outcomes: Vec<f64>,
}

impl ExperimentFunctional {
    pub fn new(name: impl Into<String>, kind: FunctionalKind, outcomes: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            kind,
            outcomes,
        }
    }

    fn axes(&self) -> Vec<usize> {
        match &self.kind {
            FunctionalKind::EventProbability { axis, .. }
            | FunctionalKind::Variance { axis }
            | FunctionalKind::Median { axis } => vec![*axis],
            FunctionalKind::Mean { expression } => {
                let mut v = expression.root.vars();
                v.sort_unstable();
                v.dedup();
                v
            }
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        match self.axes().into_iter().find(|&a| a >= dim) {
            Some(a) => Err(OuqError::InvalidArgument(format!(
                "experiment `{}` reads axis {a} of a {dim}-axis domain",
                self.name
            ))),
            None => Ok(()),
        }
    }

    pub fn value(&self, pm: &ProductMeasure) -> Result<f64> {
        match &self.kind {
            FunctionalKind::EventProbability { axis, cmp, value } => {
                Ok(pm.marginals()[*axis].probability(|x| cmp.holds(x, *value)))
            }
            FunctionalKind::Mean { expression } => expectation(pm, |x| expression.eval(x)),
            FunctionalKind::Variance { axis } => Ok(pm.marginals()[*axis].variance()),
            FunctionalKind::Median { axis } => {
                let mut atoms: Vec<(f64, f64)> = pm.marginals()[*axis].atoms().collect();
                atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
                let mut cum = 0.0;
                for (x, w) in &atoms {
                    cum += w;
                    if cum >= 0.5 - 1e-12 {
                        return Ok(*x);
                    }
                }
                Ok(atoms.last().map_or(f64::NAN, |a| a.0))
            }
        }
    }

    /// Constraints stating that the experiment returned `c`.
    pub fn outcome_constraints(&self, c: f64) -> Vec<MomentConstraint> {
        match &self.kind {
            FunctionalKind::EventProbability { axis, cmp, value } => {
                vec![MomentConstraint::moment(
                    Scope::Factor(*axis),
                    Integrand::InputIndicator {
                        axis: *axis,
                        cmp: *cmp,
                        value: *value,
                    },
                    c,
                    c,
                )]
            }
            FunctionalKind::Mean { expression } => {
                let axes = self.axes();
                let scope = match axes.as_slice() {
                    [a] => Scope::Factor(*a),
                    _ => Scope::Global,
                };
                vec![MomentConstraint::moment(
                    scope,
                    Integrand::Input {
                        expression: expression.clone(),
                    },
                    c,
                    c,
                )]
            }
            FunctionalKind::Variance { axis } => vec![MomentConstraint::moment(
                Scope::Factor(*axis),
                Integrand::Variance { axis: *axis },
                c,
                c,
            )],
            FunctionalKind::Median { axis } => MomentConstraint::median(*axis, c).to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeCell {
    pub outcome: f64,
    /// `None` when the outcome is impossible under the admissible set.
    pub upper: Option<f64>,
    pub lower: Option<f64>,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentScore {
    pub name: String,
    /// Worst-case gap `sup_c (U - L)` over the outcome grid.
    pub score: f64,
    pub cells: Vec<OutcomeCell>,
}

fn solve_cell(
    problem: &AdmissibleProblem,
    e: &ExperimentFunctional,
    c: f64,
    cfg: &OptimizerConfig,
) -> Result<OutcomeCell> {
    let reduced = reduce(&problem.with_constraints(e.outcome_constraints(c))?)?;
    let infeasible = OutcomeCell {
        outcome: c,
        upper: None,
        lower: None,
        gap: 0.0,
    };
    let upper = match solve_reduced(&reduced, Direction::Upper, cfg) {
        Ok(r) => r.value,
        Err(OuqError::Infeasible { .. }) => return Ok(infeasible),
        Err(e) => return Err(e),
    };
    let lower = match solve_reduced(&reduced, Direction::Lower, cfg) {
        Ok(r) => r.value,
        Err(OuqError::Infeasible { .. }) => return Ok(infeasible),
        Err(e) => return Err(e),
    };
    Ok(OutcomeCell {
        outcome: c,
        upper: Some(upper),
        lower: Some(lower),
        gap: (upper - lower).max(0.0),
    })
}

/// Ranks experiments by worst-case remaining gap, smallest first.
pub fn most_predictive_experiment(
    problem: &AdmissibleProblem,
    experiments: &[ExperimentFunctional],
    cfg: &OptimizerConfig,
) -> Result<Vec<ExperimentScore>> {
    if experiments.is_empty() {
        return Err(OuqError::InvalidArgument("no candidate experiments".into()));
    }
    for e in experiments {
        e.validate(problem.domain.dim())?;
        if e.outcomes.is_empty() {
            return Err(OuqError::InvalidArgument(format!(
                "experiment `{}` has an empty outcome grid",
                e.name
            )));
        }
    }
    let jobs: Vec<(usize, f64)> = experiments
        .iter()
        .enumerate()
        .flat_map(|(i, e)| e.outcomes.iter().map(move |&c| (i, c)))
        .collect();
    let cells = jobs
        .par_iter()
        .map(|&(i, c)| solve_cell(problem, &experiments[i], c, cfg))
        .collect::<Result<Vec<_>>>()?;

    let mut scores: Vec<ExperimentScore> = experiments
        .iter()
        .map(|e| ExperimentScore {
            name: e.name.clone(),
            score: 0.0,
            cells: Vec::with_capacity(e.outcomes.len()),
        })
        .collect();
    for (&(i, _), cell) in jobs.iter().zip(cells) {
        scores[i].score = scores[i].score.max(cell.gap);
        scores[i].cells.push(cell);
    }
    scores.sort_by(|a, b| a.score.total_cmp(&b.score));
    Ok(scores)
}
