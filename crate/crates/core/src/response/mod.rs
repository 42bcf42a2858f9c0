//! Response functions: the hypervelocity perforation surrogate, user
//! expressions, and per-axis oscillation.

mod expr;

pub use expr::{parse_expression, BinOp, Expr, ExpressionAst, Func};

use serde::{Deserialize, Serialize};

use crate::error::{OuqError, Result};

/// Exact length of one mil.
pub const MM_PER_MIL: f64 = 0.0254;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    #[serde(default)]
    pub unit: String,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, unit: impl Into<String>) -> Self {
        Self {
            lo,
            hi,
            unit: unit.into(),
        }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDomain")]
pub struct BoxDomain {
    axes: Vec<Axis>,
}

#[derive(Deserialize)]
struct RawDomain {
    axes: Vec<Axis>,
}

impl TryFrom<RawDomain> for BoxDomain {
    type Error = OuqError;

    fn try_from(raw: RawDomain) -> Result<Self> {
        BoxDomain::new(raw.axes)
    }
}

impl BoxDomain {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() {
            return Err(OuqError::InvalidDomain("no axes".into()));
        }
        for (i, a) in axes.iter().enumerate() {
            if !(a.lo.is_finite() && a.hi.is_finite() && a.lo < a.hi) {
                return Err(OuqError::InvalidDomain(format!(
                    "axis {i}: need finite lo < hi, got [{}, {}]",
                    a.lo, a.hi
                )));
            }
        }
        Ok(Self { axes })
    }

    /// Thickness [60, 105] mils in mm, obliquity [0, pi/6] rad, velocity
    /// [2.1, 2.8] km/s.
    pub fn hypervelocity() -> Self {
        Self {
            axes: vec![
                Axis::new(60.0 * MM_PER_MIL, 105.0 * MM_PER_MIL, "mm"),
                Axis::new(0.0, std::f64::consts::FRAC_PI_6, "rad"),
                Axis::new(2.1, 2.8, "km/s"),
            ],
        }
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.axes.iter().map(Axis::width).collect()
    }

    pub fn intervals(&self) -> Vec<(f64, f64)> {
        self.axes.iter().map(|a| (a.lo, a.hi)).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.axes.len() && self.axes.iter().zip(x).all(|(a, &v)| a.contains(v))
    }
}

/// Fitted constants of the perforation-area surrogate. Lengths in mm,
/// velocities in km/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSurrogate")]
pub struct SurrogateParams {
    pub h0: f64,
    pub s: f64,
    pub n: f64,
    pub k: f64,
    pub p: f64,
    pub u: f64,
    pub m: f64,
    pub dp: f64,
}

#[derive(Deserialize)]
struct RawSurrogate {
    h0: f64,
    s: f64,
    n: f64,
    k: f64,
    p: f64,
    u: f64,
    m: f64,
    dp: f64,
}

impl TryFrom<RawSurrogate> for SurrogateParams {
    type Error = OuqError;

    fn try_from(r: RawSurrogate) -> Result<Self> {
        SurrogateParams::new(r.h0, r.s, r.n, r.k, r.p, r.u, r.m, r.dp)
    }
}

impl Default for SurrogateParams {
    fn default() -> Self {
        Self {
            h0: 0.5794,
            s: 1.4004,
            n: 0.4482,
            k: 10.3936,
            p: 0.4757,
            u: 1.0275,
            m: 0.4682,
            dp: 1.778,
        }
    }
}

impl SurrogateParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(h0: f64, s: f64, n: f64, k: f64, p: f64, u: f64, m: f64, dp: f64) -> Result<Self> {
        let all = [h0, s, n, k, p, u, m, dp];
        if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(OuqError::InvalidArgument(
                "surrogate parameters must be finite and strictly positive".into(),
            ));
        }
        Ok(Self {
            h0,
            s,
            n,
            k,
            p,
            u,
            m,
            dp,
        })
    }
}

/// Impact speed below which the surrogate predicts no perforation.
pub fn ballistic_limit(h: f64, theta: f64, params: &SurrogateParams) -> Result<f64> {
    let c = theta.cos();
    if !(c > 0.0 && theta.abs() < std::f64::consts::FRAC_PI_2) {
        return Err(OuqError::InvalidArgument(format!(
            "obliquity {theta} has cos <= 0"
        )));
    }
    if h.is_nan() || h <= 0.0 {
        return Err(OuqError::InvalidArgument(format!(
            "thickness {h} must be positive"
        )));
    }
    Ok(params.h0 * (h / c.powf(params.n)).powf(params.s))
}

pub fn perforation_area(h: f64, theta: f64, v: f64, params: &SurrogateParams) -> Result<f64> {
    let vbl = ballistic_limit(h, theta, params)?;
    let excess = (v / vbl - 1.0).tanh();
    if excess <= 0.0 {
        return Ok(0.0);
    }
    Ok(params.k
        * (h / params.dp).powf(params.p)
        * theta.cos().powf(params.u)
        * excess.powf(params.m))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    Surrogate {
        #[serde(default)]
        params: SurrogateParams,
    },
    Expression {
        expression: ExpressionAst,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResponseModel {
    kind: ModelKind,
    domain: BoxDomain,
}

impl ResponseModel {
    pub fn new(kind: ModelKind, domain: BoxDomain) -> Result<Self> {
        match &kind {
            ModelKind::Surrogate { .. } if domain.dim() != 3 => {
                return Err(OuqError::InvalidDomain(format!(
                    "surrogate needs 3 axes (thickness, obliquity, velocity), got {}",
                    domain.dim()
                )))
            }
            ModelKind::Surrogate { .. } => {
                let theta = &domain.axes()[1];
                if domain.axes()[0].lo <= 0.0
                    || theta.lo.abs().max(theta.hi.abs()) >= std::f64::consts::FRAC_PI_2
                {
                    return Err(OuqError::InvalidDomain(
                        "surrogate needs positive thickness and |obliquity| < pi/2".into(),
                    ));
                }
            }
            ModelKind::Expression { expression } if expression.arity() > domain.dim() => {
                return Err(OuqError::InvalidDomain(format!(
                    "expression uses x{} but the domain has {} axes",
                    expression.arity(),
                    domain.dim()
                )))
            }
            ModelKind::Expression { .. } => {}
        }
        Ok(Self { kind, domain })
    }

    pub fn surrogate(params: SurrogateParams) -> Self {
        Self {
            kind: ModelKind::Surrogate { params },
            domain: BoxDomain::hypervelocity(),
        }
    }

    pub fn expression(text: &str, domain: BoxDomain) -> Result<Self> {
        Self::new(
            ModelKind::Expression {
                expression: parse_expression(text)?,
            },
            domain,
        )
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        match &self.kind {
            ModelKind::Surrogate { params } => perforation_area(x[0], x[1], x[2], params),
            ModelKind::Expression { expression } => expression.eval(x),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillationSearch {
    /// Grid points per axis for the coarse scan and each refinement.
    pub grid: usize,
    pub refinements: usize,
    pub polish_sweeps: usize,
    /// Upper bound on evaluations per grid pass; the grid is thinned for
    /// high-dimensional boxes.
    pub budget: usize,
}

impl Default for OscillationSearch {
    fn default() -> Self {
        Self {
            grid: 33,
            refinements: 2,
            polish_sweeps: 30,
            budget: 2_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillationResult {
    pub axis: usize,
    pub value: f64,
    /// The pair of points differing only along `axis` that realizes `value`.
    pub point_a: Vec<f64>,
    pub point_b: Vec<f64>,
}

/// Largest change of the response when only coordinate `axis` varies.
///
/// For fixed other coordinates the inner supremum is the range of `f` along
/// the line, so the search runs over `(x_{-i}, t_max, t_min)`: grid scan,
/// shrinking re-scans around the incumbent, then golden-section polish of
/// each coordinate.
pub fn oscillation(
    model: &ResponseModel,
    axis: usize,
    search: &OscillationSearch,
) -> Result<OscillationResult> {
    oscillation_of(|x| model.eval(x), model.domain(), axis, search)
}

pub fn oscillation_of(
    f: impl Fn(&[f64]) -> Result<f64> + Sync,
    domain: &BoxDomain,
    axis: usize,
    search: &OscillationSearch,
) -> Result<OscillationResult> {
    let m = domain.dim();
    if axis >= m {
        return Err(OuqError::InvalidArgument(format!(
            "axis {axis} out of range for {m} axes"
        )));
    }
    let eval = |x: &[f64]| -> Result<f64> {
        let y = f(x)?;
        if y.is_finite() {
            Ok(y)
        } else {
            Err(OuqError::Evaluation {
                point: x.to_vec(),
                reason: format!("non-finite value {y}"),
            })
        }
    };
    let n = thin_grid(search.grid.max(3), m, search.budget);

    // State: full point with x[axis] unused, plus t_hi and t_lo on `axis`.
    let full: Vec<(f64, f64)> = domain.intervals();
    let mut boxes: Vec<(f64, f64)> = full.clone();
    let mut t_boxes = [full[axis], full[axis]];
    let mut best = Incumbent {
        x: full.iter().map(|(lo, _)| *lo).collect(),
        t: [full[axis].0, full[axis].0],
        value: f64::NEG_INFINITY,
    };

    for pass in 0..=search.refinements {
        let cand = scan(&eval, &boxes, axis, t_boxes, n)?;
        if cand.value > best.value {
            best = cand;
        }
        if pass == search.refinements {
            break;
        }
        for (j, b) in boxes.iter_mut().enumerate() {
            if j != axis {
                *b = shrink(*b, best.x[j], full[j], n);
            }
        }
        t_boxes = [
            shrink(t_boxes[0], best.t[0], full[axis], n),
            shrink(t_boxes[1], best.t[1], full[axis], n),
        ];
    }

    // Golden-section polish, one coordinate at a time, inside the last cell.
    let mut radius: Vec<f64> = boxes
        .iter()
        .map(|(lo, hi)| (hi - lo) / (n - 1) as f64)
        .collect();
    let t_radius = [
        (t_boxes[0].1 - t_boxes[0].0) / (n - 1) as f64,
        (t_boxes[1].1 - t_boxes[1].0) / (n - 1) as f64,
    ];
    radius[axis] = 0.0;
    for _ in 0..search.polish_sweeps {
        let before = best.value;
        for j in 0..m {
            if j == axis {
                continue;
            }
            let (lo, hi) = clip(best.x[j], radius[j], full[j]);
            let mut trial = best.clone();
            let g = |v: f64| {
                let mut x = trial.x.clone();
                x[j] = v;
                line_range(&eval, &x, axis, trial.t).unwrap_or(f64::NEG_INFINITY)
            };
            let v = golden_max(g, lo, hi);
            trial.x[j] = v;
            trial.value = line_range(&eval, &trial.x, axis, trial.t)?;
            if trial.value > best.value {
                best = trial;
            }
        }
        for side in 0..2 {
            let (lo, hi) = clip(best.t[side], t_radius[side], full[axis]);
            let mut trial = best.clone();
            let g = |v: f64| {
                let mut t = trial.t;
                t[side] = v;
                line_range(&eval, &trial.x, axis, t).unwrap_or(f64::NEG_INFINITY)
            };
            trial.t[side] = golden_max(g, lo, hi);
            trial.value = line_range(&eval, &trial.x, axis, trial.t)?;
            if trial.value > best.value {
                best = trial;
            }
        }
        if best.value - before <= 1e-13 * before.abs().max(1.0) {
            break;
        }
    }

    let mut point_a = best.x.clone();
    let mut point_b = best.x.clone();
    point_a[axis] = best.t[0];
    point_b[axis] = best.t[1];
    Ok(OscillationResult {
        axis,
        value: best.value.max(0.0),
        point_a,
        point_b,
    })
}

#[derive(Debug, Clone)]
struct Incumbent {
    x: Vec<f64>,
    t: [f64; 2],
    value: f64,
}

fn thin_grid(n: usize, m: usize, budget: usize) -> usize {
    let mut n = n;
    while n > 3 && (n as f64).powi(m as i32 + 1) > budget as f64 {
        n -= 1;
    }
    n
}

fn linspace((lo, hi): (f64, f64), n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |j| {
        if j + 1 == n {
            hi
        } else {
            lo + (hi - lo) * j as f64 / (n - 1) as f64
        }
    })
}

fn shrink(current: (f64, f64), centre: f64, full: (f64, f64), n: usize) -> (f64, f64) {
    let cell = (current.1 - current.0) / (n - 1) as f64;
    clip(centre, 2.0 * cell, full)
}

fn clip(centre: f64, r: f64, full: (f64, f64)) -> (f64, f64) {
    ((centre - r).max(full.0), (centre + r).min(full.1))
}

fn line_range(
    eval: &impl Fn(&[f64]) -> Result<f64>,
    x: &[f64],
    axis: usize,
    t: [f64; 2],
) -> Result<f64> {
    let mut p = x.to_vec();
    p[axis] = t[0];
    let a = eval(&p)?;
    p[axis] = t[1];
    let b = eval(&p)?;
    Ok(a - b)
}

/// Grid over the non-`axis` coordinates; along `axis`, the max of `f` over
/// `t_boxes[0]` minus the min over `t_boxes[1]`.
fn scan(
    eval: &(impl Fn(&[f64]) -> Result<f64> + Sync),
    boxes: &[(f64, f64)],
    axis: usize,
    t_boxes: [(f64, f64); 2],
    n: usize,
) -> Result<Incumbent> {
    use rayon::prelude::*;

    let m = boxes.len();
    let others: Vec<usize> = (0..m).filter(|&j| j != axis).collect();
    let cells = n.pow(others.len() as u32);
    let t_hi: Vec<f64> = linspace(t_boxes[0], n).collect();
    let t_lo: Vec<f64> = linspace(t_boxes[1], n).collect();

    let results: Vec<Result<Incumbent>> = (0..cells)
        .into_par_iter()
        .map(|mut c| {
            let mut x = vec![0.0; m];
            for &j in &others {
                let k = c % n;
                c /= n;
                let (lo, hi) = boxes[j];
                x[j] = if k + 1 == n {
                    hi
                } else {
                    lo + (hi - lo) * k as f64 / (n - 1) as f64
                };
            }
            let mut best_hi = (f64::NEG_INFINITY, t_hi[0]);
            for &t in &t_hi {
                x[axis] = t;
                let y = eval(&x)?;
                if y > best_hi.0 {
                    best_hi = (y, t);
                }
            }
            let mut best_lo = (f64::INFINITY, t_lo[0]);
            for &t in &t_lo {
                x[axis] = t;
                let y = eval(&x)?;
                if y < best_lo.0 {
                    best_lo = (y, t);
                }
            }
            x[axis] = best_hi.1;
            Ok(Incumbent {
                x,
                t: [best_hi.1, best_lo.1],
                value: best_hi.0 - best_lo.0,
            })
        })
        .collect();

    let mut best: Option<Incumbent> = None;
    for r in results {
        let r = r?;
        if best.as_ref().is_none_or(|b| r.value > b.value) {
            best = Some(r);
        }
    }
    Ok(best.expect("grid has at least one cell"))
}

fn golden_max(g: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut g1 = g(x1);
    let mut g2 = g(x2);
    for _ in 0..80 {
        if hi - lo <= 1e-13 * (1.0 + lo.abs().max(hi.abs())) {
            break;
        }
        if g1 >= g2 {
            hi = x2;
            x2 = x1;
            g2 = g1;
            x1 = hi - INV_PHI * (hi - lo);
            g1 = g(x1);
        } else {
            lo = x1;
            x1 = x2;
            g1 = g2;
            x2 = lo + INV_PHI * (hi - lo);
            g2 = g(x2);
        }
    }
    // Endpoints matter for kinks at the boundary.
    let mid = 0.5 * (lo + hi);
    [(g(lo), lo), (g(mid), mid), (g(hi), hi)]
        .into_iter()
        .fold(
            (f64::NEG_INFINITY, mid),
            |acc, c| if c.0 > acc.0 { c } else { acc },
        )
        .1
}
