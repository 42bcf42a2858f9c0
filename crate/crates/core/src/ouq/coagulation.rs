use serde::{Deserialize, Serialize};

use crate::error::{OuqError, Result};
use crate::measure::{
    decode, effective_support, encode, AxisLayout, Marginal, ParamLayout, ProductMeasure,
};
use crate::optimizer::{repair, OptimizerConfig};

use super::problem::AdmissibleProblem;
use super::solve::{
    reduce, solve_reduced, BoundResult, Direction, Evaluator, ReducedProblem, Route,
};

/// Largest objective loss accepted when merging two atoms.
pub const MERGE_VALUE_TOL: f64 = 1e-4;

/// Greedily merges pairs of atoms on one axis while the merged measure,
/// after repair, stays feasible and within [`MERGE_VALUE_TOL`] of `value`.
pub(crate) fn simplify(
    reduced: &ReducedProblem,
    eval: &Evaluator<'_>,
    score: &(impl Fn(&ProductMeasure) -> f64 + Sync),
    mut pm: ProductMeasure,
    mut value: f64,
    cfg: &OptimizerConfig,
) -> (ProductMeasure, f64) {
    let pins = reduced.problem.pins();
    let attempt = |candidate: &ProductMeasure| -> Option<(ProductMeasure, f64)> {
        let axes: Vec<AxisLayout> = reduced
            .layout
            .axes()
            .iter()
            .zip(candidate.marginals())
            .map(|(a, mg)| AxisLayout {
                k: mg.len(),
                ..a.clone()
            })
            .collect();
        let layout = ParamLayout::new(axes).ok()?;
        let x = encode(candidate, &layout).ok()?;
        let feas = |v: &[f64]| {
            decode(v, &layout).map_or_else(|_| vec![f64::INFINITY], |pm| eval.constraints(&pm))
        };
        let fixed = repair(&x, &feas, &layout, cfg).ok()?;
        let pm = decode(&fixed, &layout).ok()?;
        let v = score(&pm);
        Some((pm, v))
    };

    loop {
        let mut merged = None;
        'axes: for axis in 0..pm.dim() {
            if pins[axis].is_some() || pm.marginals()[axis].len() < 2 {
                continue;
            }
            let atoms: Vec<(f64, f64)> = pm.marginals()[axis].atoms().collect();
            let mut pairs: Vec<(usize, usize)> = (0..atoms.len())
                .flat_map(|j| (j + 1..atoms.len()).map(move |l| (j, l)))
                .collect();
            pairs.sort_by(|p, q| {
                let d = |(j, l): (usize, usize)| (atoms[j].0 - atoms[l].0).abs();
                d(*p).total_cmp(&d(*q))
            });
            for (j, l) in pairs {
                let ((xj, wj), (xl, wl)) = (atoms[j], atoms[l]);
                let w = wj + wl;
                let mut spots = vec![xj, xl];
                if w > 0.0 {
                    spots.push((wj * xj + wl * xl) / w);
                }
                for x in spots {
                    let mut positions = Vec::with_capacity(atoms.len() - 1);
                    let mut weights = Vec::with_capacity(atoms.len() - 1);
                    for (i, &(p, q)) in atoms.iter().enumerate() {
                        if i != j && i != l {
                            positions.push(p);
                            weights.push(q);
                        }
                    }
                    positions.push(x);
                    weights.push(w);
                    let total: f64 = weights.iter().sum();
                    weights.iter_mut().for_each(|q| *q /= total);
                    let Ok(mg) = Marginal::new(positions, weights) else {
                        continue;
                    };
                    let mut marginals = pm.marginals().to_vec();
                    marginals[axis] = mg;
                    let Ok(candidate) = ProductMeasure::new(marginals) else {
                        continue;
                    };
                    if let Some((next, v)) = attempt(&candidate) {
                        if v >= value - MERGE_VALUE_TOL {
                            merged = Some((next, v));
                            break 'axes;
                        }
                    }
                }
            }
        }
        match merged {
            Some((next, v)) => {
                pm = next;
                value = v;
            }
            None => return (pm, value),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoagulationStep {
    pub k: usize,
    /// Atoms allowed per free axis in this solve.
    pub atoms: usize,
    pub value: f64,
    pub support: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoagulationReport {
    pub result: BoundResult,
    /// Effective support per axis of the final extremizer.
    pub support: Vec<usize>,
    /// `false` when the schedule ran out before the support collapsed.
    pub coagulated: bool,
    pub steps: Vec<CoagulationStep>,
}

/// Solves the upper bound with `k + 1` atoms per free axis for each `k` in
/// the schedule, stopping once every axis uses at most `k`.
pub fn coagulation_fragmentation(
    problem: &AdmissibleProblem,
    k_schedule: &[usize],
    weight_tol: f64,
    cfg: &OptimizerConfig,
) -> Result<CoagulationReport> {
    if k_schedule.is_empty() || k_schedule[0] == 0 || k_schedule.windows(2).any(|w| w[0] >= w[1]) {
        return Err(OuqError::InvalidArgument(
            "k schedule must be non-empty, positive and strictly increasing".into(),
        ));
    }
    if !(0.0..1.0).contains(&weight_tol) {
        return Err(OuqError::InvalidArgument(format!(
            "weight tolerance {weight_tol} outside [0, 1)"
        )));
    }
    let base = reduce(problem)?;
    if base.route != Route::Measure {
        return Err(OuqError::InvalidArgument(
            "coagulation applies to measure-route problems only".into(),
        ));
    }
    let widths = problem.domain.widths();
    let mut steps = Vec::new();
    let mut last = None;
    for &k in k_schedule {
        let reduced = base.with_support(&vec![k + 1; problem.domain.dim()])?;
        let result = solve_reduced(&reduced, Direction::Upper, cfg)?;
        let support = effective_support(&result.extremal_measure, &widths, weight_tol);
        steps.push(CoagulationStep {
            k,
            atoms: k + 1,
            value: result.value,
            support: support.clone(),
        });
        let collapsed = support.iter().all(|&s| s < k + 1);
        if collapsed {
            return Ok(CoagulationReport {
                result,
                support,
                coagulated: true,
                steps,
            });
        }
        last = Some((result, support));
    }
    let (result, support) = last.expect("schedule is non-empty");
    Ok(CoagulationReport {
        result,
        support,
        coagulated: false,
        steps,
    })
}
