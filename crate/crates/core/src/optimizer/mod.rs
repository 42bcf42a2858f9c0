//! Differential evolution (rand/1/bin) over flat measure parameters. Every
//! candidate is repaired onto the constraint set before its objective is
//! evaluated.

mod repair;

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{OuqError, Result};
use crate::measure::ParamLayout;

use repair::{repair_counted, residual_of};

/// Signed constraint values; a candidate is feasible when every entry is `<= 0`.
pub trait Feasibility: Sync {
    fn constraints(&self, x: &[f64]) -> Vec<f64>;
}

impl<F: Fn(&[f64]) -> Vec<f64> + Sync> Feasibility for F {
    fn constraints(&self, x: &[f64]) -> Vec<f64> {
        self(x)
    }
}

/// No constraints at all.
pub struct Unconstrained;

impl Feasibility for Unconstrained {
    fn constraints(&self, _x: &[f64]) -> Vec<f64> {
        Vec::new()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub population: usize,
    pub mutation: f64,
    pub crossover: f64,
    pub max_generations: usize,
    pub stagnation_window: usize,
    pub stagnation_tol: f64,
    pub seed: u64,
    /// Absolute tolerance on constraint residuals.
    pub constraint_tol: f64,
    /// Penalty rounds in the repair loop (weight x10 per round).
    pub repair_rounds: usize,
    /// Gauss-Newton steps per penalty round.
    pub repair_steps: usize,
    /// Fresh draws per population slot before giving up on it.
    pub init_attempts: usize,
    /// Coordinate pattern search on the incumbent after the last generation.
    pub polish: bool,
    pub polish_budget: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            population: 40,
            mutation: 0.7,
            crossover: 0.9,
            max_generations: 1000,
            stagnation_window: 100,
            stagnation_tol: 1e-6,
            seed: 0,
            constraint_tol: 1e-9,
            repair_rounds: 6,
            repair_steps: 8,
            init_attempts: 25,
            polish: true,
            polish_budget: 3000,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(OuqError::InvalidArgument(m.to_string()));
        if self.population < 4 {
            return bad("population must be at least 4");
        }
        if !(self.mutation > 0.0 && self.mutation < 2.0) {
            return bad("mutation factor must lie in (0, 2)");
        }
        if !(0.0..=1.0).contains(&self.crossover) {
            return bad("crossover rate must lie in [0, 1]");
        }
        if !(self.stagnation_tol > 0.0 && self.constraint_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        if self.stagnation_window == 0 || self.repair_rounds == 0 || self.init_attempts == 0 {
            return bad("window, repair rounds and init attempts must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub generation: usize,
    pub best_value: f64,
    pub residual: f64,
    pub evals: u64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    pub rows: Vec<TraceRow>,
}

impl ConvergenceTrace {
    /// Rows without the wall-clock column, for reproducibility checks.
    pub fn deterministic_part(&self) -> Vec<(usize, u64, u64, u64)> {
        self.rows
            .iter()
            .map(|r| {
                (
                    r.generation,
                    r.best_value.to_bits(),
                    r.residual.to_bits(),
                    r.evals,
                )
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeOutcome {
    pub best: Vec<f64>,
    pub value: f64,
    pub residual: f64,
    pub trace: ConvergenceTrace,
}

struct Counter<'a, F: ?Sized> {
    inner: &'a F,
    evals: &'a AtomicU64,
}

impl<F: Feasibility + ?Sized> Feasibility for Counter<'_, F> {
    fn constraints(&self, x: &[f64]) -> Vec<f64> {
        self.evals.fetch_add(1, Ordering::Relaxed);
        self.inner.constraints(x)
    }
}

/// Pulls `x` into the search box and onto the constraint set.
pub fn repair<F: Feasibility + ?Sized>(
    x: &[f64],
    feasibility: &F,
    layout: &ParamLayout,
    cfg: &OptimizerConfig,
) -> Result<Vec<f64>> {
    if x.len() != layout.len() {
        return Err(OuqError::LengthMismatch {
            expected: layout.len(),
            got: x.len(),
        });
    }
    let out = repair_counted(x, feasibility, &layout.bounds(), &layout.weight_mask(), cfg);
    if out.ok {
        Ok(out.x)
    } else {
        Err(OuqError::Infeasible {
            best_residual: out.residual,
        })
    }
}

/// Maximizes `objective` over repaired candidates.
pub fn maximize<O, F>(
    objective: O,
    feasibility: &F,
    layout: &ParamLayout,
    cfg: &OptimizerConfig,
) -> Result<OptimizeOutcome>
where
    O: Fn(&[f64]) -> f64 + Sync,
    F: Feasibility + ?Sized,
{
    maximize_from(objective, feasibility, layout, cfg, &[])
}

/// As [`maximize`], with `initial` vectors placed in the first population
/// slots (after repair).
pub fn maximize_from<O, F>(
    objective: O,
    feasibility: &F,
    layout: &ParamLayout,
    cfg: &OptimizerConfig,
    initial: &[Vec<f64>],
) -> Result<OptimizeOutcome>
where
    O: Fn(&[f64]) -> f64 + Sync,
    F: Feasibility + ?Sized,
{
    cfg.validate()?;
    let start = Instant::now();
    let bounds = layout.bounds();
    let mask = layout.weight_mask();
    let dim = bounds.len();
    let np = cfg.population;
    let evals = AtomicU64::new(0);
    let feas = Counter {
        inner: feasibility,
        evals: &evals,
    };
    let score = |x: &[f64]| {
        evals.fetch_add(1, Ordering::Relaxed);
        let v = objective(x);
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // Repair a candidate and score it; `None` when repair fails.
    let assess = |x: &Vec<f64>| -> (Option<(Vec<f64>, f64)>, f64) {
        let r = repair_counted(x, &feas, &bounds, &mask, cfg);
        if r.ok {
            let v = score(&r.x);
            (Some((r.x, v)), r.residual)
        } else {
            (None, r.residual)
        }
    };

    // Initial population.
    let mut pop: Vec<Option<(Vec<f64>, f64)>> = vec![None; np];
    let mut best_residual = f64::INFINITY;
    for (slot, x) in initial.iter().take(np).enumerate() {
        if x.len() != dim {
            return Err(OuqError::LengthMismatch {
                expected: dim,
                got: x.len(),
            });
        }
        let (res, r) = assess(x);
        best_residual = best_residual.min(r);
        pop[slot] = res;
    }
    for _ in 0..cfg.init_attempts {
        let empty: Vec<usize> = (0..np).filter(|&i| pop[i].is_none()).collect();
        if empty.is_empty() {
            break;
        }
        let draws: Vec<Vec<f64>> = empty
            .iter()
            .map(|_| {
                bounds
                    .iter()
                    .map(|&(lo, hi)| sample(&mut rng, lo, hi))
                    .collect()
            })
            .collect();
        let results: Vec<_> = draws.par_iter().map(&assess).collect();
        for (&i, (res, r)) in empty.iter().zip(results) {
            best_residual = best_residual.min(r);
            pop[i] = res;
        }
        // Once some members are feasible, stop spending on hard slots.
        if pop.iter().filter(|p| p.is_some()).count() >= 4.min(np) && !initial.is_empty() {
            continue;
        }
    }
    let filled: Vec<(Vec<f64>, f64)> = pop.iter().flatten().cloned().collect();
    if filled.is_empty() {
        return Err(OuqError::Infeasible { best_residual });
    }
    let mut members: Vec<(Vec<f64>, f64)> = (0..np)
        .map(|i| {
            pop[i]
                .clone()
                .unwrap_or_else(|| filled[i % filled.len()].clone())
        })
        .collect();

    let pick_best = |members: &[(Vec<f64>, f64)]| -> usize {
        let mut b = 0;
        for (i, m) in members.iter().enumerate() {
            if m.1 > members[b].1 {
                b = i;
            }
        }
        b
    };
    let mut best = members[pick_best(&members)].clone();
    let mut trace = ConvergenceTrace::default();
    let push = |trace: &mut ConvergenceTrace, generation: usize, best: &(Vec<f64>, f64)| {
        trace.rows.push(TraceRow {
            generation,
            best_value: best.1,
            residual: residual_of(&feasibility.constraints(&best.0)),
            evals: evals.load(Ordering::Relaxed),
            seconds: start.elapsed().as_secs_f64(),
        });
    };
    push(&mut trace, 0, &best);

    for generation in 1..=cfg.max_generations {
        let trials: Vec<Vec<f64>> = (0..np)
            .map(|i| {
                let (r1, r2, r3) = distinct3(&mut rng, np, i);
                let jrand = rng.gen_range(0..dim.max(1));
                (0..dim)
                    .map(|j| {
                        let cross = rng.gen::<f64>() < cfg.crossover || j == jrand;
                        if cross {
                            let v = members[r1].0[j]
                                + cfg.mutation * (members[r2].0[j] - members[r3].0[j]);
                            v.clamp(bounds[j].0, bounds[j].1)
                        } else {
                            members[i].0[j]
                        }
                    })
                    .collect()
            })
            .collect();
        let results: Vec<_> = trials.par_iter().map(&assess).collect();
        for (i, (res, _)) in results.into_iter().enumerate() {
            if let Some((x, v)) = res {
                if v >= members[i].1 {
                    members[i] = (x, v);
                }
            }
        }
        let b = pick_best(&members);
        if members[b].1 > best.1 {
            best = members[b].clone();
        }
        push(&mut trace, generation, &best);

        let w = cfg.stagnation_window;
        if generation >= w {
            let old = trace.rows[generation - w].best_value;
            if best.1 - old < cfg.stagnation_tol {
                break;
            }
        }
    }

    if cfg.polish && dim > 0 {
        best = pattern_polish(best, &assess, &bounds, cfg.polish_budget);
        let last = trace.rows.last().map_or(0, |r| r.generation);
        push(&mut trace, last + 1, &best);
    }

    let residual = residual_of(&feasibility.constraints(&best.0));
    Ok(OptimizeOutcome {
        value: best.1,
        best: best.0,
        residual,
        trace,
    })
}

fn sample(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.gen_range(lo..=hi)
    } else {
        lo
    }
}

fn distinct3(rng: &mut ChaCha8Rng, n: usize, not: usize) -> (usize, usize, usize) {
    let mut draw = |taken: &[usize]| loop {
        let r = rng.gen_range(0..n);
        if r != not && !taken.contains(&r) {
            return r;
        }
    };
    let a = draw(&[]);
    let b = draw(&[a]);
    let c = draw(&[a, b]);
    (a, b, c)
}

/// Compass search: try +/- step on each coordinate, accept strict
/// improvements, halve steps after a sweep without one.
fn pattern_polish(
    mut best: (Vec<f64>, f64),
    assess: &(impl Fn(&Vec<f64>) -> (Option<(Vec<f64>, f64)>, f64) + Sync),
    bounds: &[(f64, f64)],
    budget: usize,
) -> (Vec<f64>, f64) {
    let mut steps: Vec<f64> = bounds.iter().map(|(lo, hi)| 0.05 * (hi - lo)).collect();
    let floor: Vec<f64> = bounds
        .iter()
        .map(|(lo, hi)| 1e-10 * (hi - lo).max(1e-300))
        .collect();
    let mut spent = 0;
    while spent < budget {
        let moves: Vec<Vec<f64>> = (0..bounds.len())
            .filter(|&j| steps[j] > floor[j])
            .flat_map(|j| {
                [-1.0, 1.0].into_iter().map({
                    let base = &best.0;
                    let steps = &steps;
                    move |sgn| {
                        let mut x = base.clone();
                        x[j] = (x[j] + sgn * steps[j]).clamp(bounds[j].0, bounds[j].1);
                        x
                    }
                })
            })
            .collect();
        if moves.is_empty() {
            break;
        }
        spent += moves.len();
        let results: Vec<_> = moves.par_iter().map(assess).collect();
        let mut improved = false;
        for (res, _) in results {
            if let Some((x, v)) = res {
                if v > best.1 {
                    best = (x, v);
                    improved = true;
                }
            }
        }
        if !improved {
            steps.iter_mut().for_each(|s| *s *= 0.5);
        }
    }
    best
}
