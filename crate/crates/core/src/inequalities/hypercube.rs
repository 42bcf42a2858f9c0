//! Brute-force solver for the hypercube form of the bounded-differences
//! problem: maximize `alpha[h^C >= a]` subject to `E_alpha[h^C] <= 0` over
//! vertex sets `C` of `{0,1}^m` and product Bernoulli measures `alpha`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{OuqError, Result};

/// Vertices are bitmasks: bit `i` is coordinate `i`.
pub type Vertex = u32;

pub const MAX_ORACLE_DIM: usize = 4;

/// `max over s in C of (a - sum of D_i over coordinates where s and t differ)`.
pub fn hypercube_h(c: &[Vertex], t: Vertex, a: f64, d: &[f64]) -> f64 {
    c.iter()
        .map(|&s| {
            let diff = s ^ t;
            a - d
                .iter()
                .enumerate()
                .filter(|(i, _)| diff >> i & 1 == 1)
                .map(|(_, di)| di)
                .sum::<f64>()
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub value: f64,
    pub set: Vec<Vertex>,
    /// `alpha[i]` is the probability that coordinate `i` equals 1.
    pub alpha: Vec<f64>,
}

struct SetTable {
    m: usize,
    in_c: Vec<bool>,
    h: Vec<f64>,
}

impl SetTable {
    fn new(members: Vec<Vertex>, a: f64, d: &[f64]) -> Self {
        let m = d.len();
        let n = 1usize << m;
        let mut in_c = vec![false; n];
        for &s in &members {
            in_c[s as usize] = true;
        }
        let h = (0..n as Vertex)
            .map(|t| hypercube_h(&members, t, a, d))
            .collect();
        Self { m, in_c, h }
    }

    /// `(P0, P1, E0, E1)`: probability of `C` and mean of `h` with coordinate
    /// `j` forced to 0 and to 1, the others drawn from `alpha`.
    fn split(&self, alpha: &[f64], j: usize) -> (f64, f64, f64, f64) {
        let mut acc = [0.0f64; 4];
        for t in 0..(1usize << self.m) {
            let mut w = 1.0;
            for (i, &ai) in alpha.iter().enumerate() {
                if i != j {
                    w *= if t >> i & 1 == 1 { ai } else { 1.0 - ai };
                }
            }
            let side = t >> j & 1;
            if self.in_c[t] {
                acc[side] += w;
            }
            acc[2 + side] += w * self.h[t];
        }
        (acc[0], acc[1], acc[2], acc[3])
    }

    /// Best `alpha[j]` with the others held fixed; the problem is affine in it.
    fn solve_coordinate(&self, alpha: &[f64], j: usize) -> Option<(f64, f64)> {
        let (p0, p1, e0, e1) = self.split(alpha, j);
        let tol = 1e-12 * (1.0 + e0.abs().max(e1.abs()));
        let feasible = |x: f64| e0 + (e1 - e0) * x <= tol;
        let mut cands = vec![0.0, 1.0];
        if (e1 - e0).abs() > 0.0 {
            let root = -e0 / (e1 - e0);
            if (0.0..=1.0).contains(&root) {
                cands.push(root);
            }
        }
        cands
            .into_iter()
            .filter(|&x| feasible(x))
            .map(|x| (p0 + (p1 - p0) * x, x))
            .max_by(|u, v| u.0.total_cmp(&v.0))
    }

    fn best(&self, grid: usize) -> (f64, Vec<f64>) {
        let m = self.m;
        let last = m - 1;
        let mut best = (f64::NEG_INFINITY, vec![0.0; m]);
        let cells = grid.pow(last as u32);
        let mut alpha = vec![0.0; m];
        for mut c in 0..cells {
            for a in alpha.iter_mut().take(last) {
                *a = (c % grid) as f64 / (grid - 1) as f64;
                c /= grid;
            }
            if let Some((v, x)) = self.solve_coordinate(&alpha, last) {
                if v > best.0 {
                    alpha[last] = x;
                    best = (v, alpha.clone());
                }
            }
        }
        if best.0 == f64::NEG_INFINITY {
            return (0.0, best.1);
        }
        self.polish(best, 1.0 / (grid - 1) as f64)
    }

    fn polish(&self, mut best: (f64, Vec<f64>), mut radius: f64) -> (f64, Vec<f64>) {
        let m = self.m;
        if m < 2 {
            return best;
        }
        for _ in 0..4 {
            let mut improved = true;
            let mut rounds = 0;
            while improved && rounds < 20 {
                improved = false;
                rounds += 1;
                for j in 0..m {
                    for l in 0..m {
                        if j == l {
                            continue;
                        }
                        for s in 0..=20 {
                            let mut alpha = best.1.clone();
                            alpha[j] =
                                (alpha[j] + radius * (s as f64 / 10.0 - 1.0)).clamp(0.0, 1.0);
                            if let Some((v, x)) = self.solve_coordinate(&alpha, l) {
                                if v > best.0 + 1e-15 {
                                    alpha[l] = x;
                                    best = (v, alpha);
                                    improved = true;
                                }
                            }
                        }
                    }
                }
            }
            radius /= 8.0;
        }
        best
    }
}

fn reflect(mask: u64, r: usize, n: usize) -> u64 {
    let mut out = 0u64;
    for t in 0..n {
        if mask >> t & 1 == 1 {
            out |= 1 << (t ^ r);
        }
    }
    out
}

/// Non-empty vertex sets up to reflection of individual coordinates.
pub fn canonical_sets(m: usize) -> Vec<Vec<Vertex>> {
    let n = 1usize << m;
    let total: u64 = 1 << n;
    (1..total)
        .filter(|&mask| (1..n).all(|r| reflect(mask, r, n) >= mask))
        .map(|mask| (0..n as Vertex).filter(|&t| mask >> t & 1 == 1).collect())
        .collect()
}

/// `{s : sum s_i >= q}`.
pub fn threshold_set(m: usize, q: usize) -> Vec<Vertex> {
    (0..1 << m as Vertex)
        .filter(|t: &Vertex| t.count_ones() as usize >= q)
        .collect()
}

fn validate(d: &[f64], grid: usize) -> Result<()> {
    if d.is_empty() || d.len() > MAX_ORACLE_DIM {
        return Err(OuqError::UnsupportedDimension {
            m: d.len(),
            reason: format!("oracle enumerates vertex sets only for 1 <= m <= {MAX_ORACLE_DIM}"),
        });
    }
    if let Some((i, &v)) = d.iter().enumerate().find(|(_, v)| v.is_nan() || **v < 0.0) {
        return Err(OuqError::NegativeDiameter { index: i, value: v });
    }
    if grid < 2 {
        return Err(OuqError::InvalidArgument(
            "oracle grid needs at least 2 points".into(),
        ));
    }
    Ok(())
}

/// Best value over the given vertex sets. Every reported value is attained by
/// an exactly feasible `alpha`, so this never exceeds the true optimum.
pub fn hypercube_oracle_sets(
    a: f64,
    d: &[f64],
    grid: usize,
    sets: &[Vec<Vertex>],
) -> Result<OracleResult> {
    validate(d, grid)?;
    let results: Vec<(f64, Vec<f64>)> = sets
        .par_iter()
        .map(|c| SetTable::new(c.clone(), a, d).best(grid))
        .collect();
    let mut out = OracleResult {
        value: 0.0,
        set: Vec::new(),
        alpha: vec![0.0; d.len()],
    };
    for (c, (v, alpha)) in sets.iter().zip(results) {
        if v > out.value {
            out = OracleResult {
                value: v,
                set: c.clone(),
                alpha,
            };
        }
    }
    out.value = out.value.clamp(0.0, 1.0);
    Ok(out)
}

/// Exhaustive search over all vertex sets (up to reflections).
pub fn hypercube_oracle_detail(a: f64, d: &[f64], grid: usize) -> Result<OracleResult> {
    validate(d, grid)?;
    hypercube_oracle_sets(a, d, grid, &canonical_sets(d.len()))
}

pub fn hypercube_oracle(a: f64, d: &[f64], grid: usize) -> Result<f64> {
    Ok(hypercube_oracle_detail(a, d, grid)?.value)
}
