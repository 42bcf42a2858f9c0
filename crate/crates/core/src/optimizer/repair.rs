//! Inner constraint loop: damped Gauss-Newton steps on the violated
//! constraints, i.e. minimization of `|dx|^2 + w |g + J dx|^2` with the
//! penalty weight `w` escalated tenfold per round.

use nalgebra::{DMatrix, DVector};

use super::{Feasibility, OptimizerConfig};

pub(crate) struct RepairOutcome {
    pub x: Vec<f64>,
    pub residual: f64,
    pub ok: bool,
}

pub(crate) fn residual_of(g: &[f64]) -> f64 {
    g.iter().fold(0.0f64, |acc, v| {
        if v.is_nan() {
            f64::INFINITY
        } else {
            acc.max(*v)
        }
    })
}

fn merit(g: &[f64]) -> f64 {
    g.iter().map(|v| v.max(0.0).powi(2)).sum()
}

pub(crate) fn repair_counted<F: Feasibility + ?Sized>(
    x0: &[f64],
    feas: &F,
    bounds: &[(f64, f64)],
    weight_mask: &[bool],
    cfg: &OptimizerConfig,
) -> RepairOutcome {
    let tol = cfg.constraint_tol;
    let eval = |x: &[f64]| feas.constraints(x);

    let mut x: Vec<f64> = x0
        .iter()
        .zip(bounds)
        .map(|(v, (lo, hi))| v.clamp(*lo, *hi))
        .collect();
    let mut g = eval(&x);
    if residual_of(&g) <= tol {
        return RepairOutcome {
            residual: residual_of(&g),
            x,
            ok: true,
        };
    }
    // Aim slightly inside so the repaired point survives rounding.
    let target = -0.25 * tol;

    let weight_cols: Vec<usize> = (0..x.len()).filter(|&i| weight_mask[i]).collect();
    let all_cols: Vec<usize> = (0..x.len()).collect();
    let phases: Vec<&[usize]> = if weight_cols.is_empty() || weight_cols.len() == x.len() {
        vec![&all_cols]
    } else {
        vec![&weight_cols, &all_cols]
    };

    for cols in phases {
        let mut damping: Option<f64> = None;
        for _round in 0..cfg.repair_rounds {
            for _ in 0..cfg.repair_steps {
                if residual_of(&g) <= tol {
                    return RepairOutcome {
                        residual: residual_of(&g),
                        x,
                        ok: true,
                    };
                }
                let active: Vec<usize> = (0..g.len()).filter(|&j| g[j] > -tol).collect();
                let r: Vec<f64> = active.iter().map(|&j| g[j] - target).collect();

                // Forward differences, stepping inward at upper bounds.
                let mut jac = vec![vec![0.0; cols.len()]; active.len()];
                for (c, &i) in cols.iter().enumerate() {
                    let (lo, hi) = bounds[i];
                    let mut h = 1e-7 * (1.0 + x[i].abs()).max((hi - lo) * 1e-6);
                    if x[i] + h > hi {
                        h = -h;
                    }
                    if x[i] + h < lo {
                        continue;
                    }
                    let mut xp = x.clone();
                    xp[i] += h;
                    let gp = eval(&xp);
                    for (row, &j) in active.iter().enumerate() {
                        jac[row][c] = (gp[j] - g[j]) / h;
                    }
                }

                let n = active.len();
                let mut jjt = vec![vec![0.0; n]; n];
                for a in 0..n {
                    for b in a..n {
                        let v: f64 = jac[a].iter().zip(&jac[b]).map(|(p, q)| p * q).sum();
                        jjt[a][b] = v;
                        jjt[b][a] = v;
                    }
                }
                let scale = (0..n).map(|a| jjt[a][a]).sum::<f64>() / n.max(1) as f64;
                if scale.is_nan() || scale <= 0.0 {
                    break;
                }
                let reg = *damping.get_or_insert(scale);
                for (a, row) in jjt.iter_mut().enumerate() {
                    row[a] += reg;
                }
                let Some(y) = solve_spd(jjt, r) else { break };
                let delta: Vec<f64> = (0..cols.len())
                    .map(|c| -(0..n).map(|row| jac[row][c] * y[row]).sum::<f64>())
                    .collect();

                let m0 = merit(&g);
                let mut accepted = false;
                let mut t = 1.0;
                for _ in 0..8 {
                    let mut xt = x.clone();
                    for (c, &i) in cols.iter().enumerate() {
                        let (lo, hi) = bounds[i];
                        xt[i] = (x[i] + t * delta[c]).clamp(lo, hi);
                    }
                    let gt = eval(&xt);
                    if merit(&gt) < m0 || residual_of(&gt) <= tol {
                        x = xt;
                        g = gt;
                        accepted = true;
                        break;
                    }
                    t *= 0.5;
                }
                if !accepted {
                    break;
                }
            }
            // Heavier penalty weight = lighter damping.
            if let Some(d) = damping.as_mut() {
                *d *= 0.1;
            }
        }
        if residual_of(&g) <= tol {
            break;
        }
    }

    RepairOutcome {
        residual: residual_of(&g),
        ok: residual_of(&g) <= tol,
        x,
    }
}

fn solve_spd(a: Vec<Vec<f64>>, b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let m = DMatrix::from_fn(n, n, |i, j| a[i][j]);
    let chol = m.cholesky()?;
    Some(chol.solve(&DVector::from_vec(b)).iter().copied().collect())
}
