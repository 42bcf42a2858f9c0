//! Finite-support product measures and their flat parameter encoding.

use serde::{Deserialize, Serialize};

use crate::error::{OuqError, Result};

const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Bound on raw softmax parameters handed to the optimizer.
pub const RAW_WEIGHT_BOUND: f64 = 6.0;

/// Relative merge radius used by [`effective_support`].
pub const MERGE_RADIUS: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMarginal")]
pub struct Marginal {
    positions: Vec<f64>,
    weights: Vec<f64>,
}

#[derive(Deserialize)]
struct RawMarginal {
    positions: Vec<f64>,
    weights: Vec<f64>,
}

impl TryFrom<RawMarginal> for Marginal {
    type Error = OuqError;

    fn try_from(raw: RawMarginal) -> Result<Self> {
        Marginal::new(raw.positions, raw.weights)
    }
}

impl Marginal {
    pub fn new(positions: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if positions.is_empty() {
            return Err(OuqError::InvalidMeasure("marginal has no atoms".into()));
        }
        if positions.len() != weights.len() {
            return Err(OuqError::InvalidMeasure(format!(
                "{} positions but {} weights",
                positions.len(),
                weights.len()
            )));
        }
        if let Some(x) = positions.iter().find(|x| !x.is_finite()) {
            return Err(OuqError::InvalidMeasure(format!("non-finite position {x}")));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(OuqError::InvalidMeasure(format!("invalid weight {w}")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL * weights.len() as f64 {
            return Err(OuqError::InvalidMeasure(format!(
                "weights sum to {total}, not 1"
            )));
        }
        Ok(Self { positions, weights })
    }

    pub fn dirac(x: f64) -> Self {
        Self {
            positions: vec![x],
            weights: vec![1.0],
        }
    }

    /// Equal weights on `positions`.
    pub fn uniform(positions: Vec<f64>) -> Result<Self> {
        let w = 1.0 / positions.len().max(1) as f64;
        let weights = vec![w; positions.len()];
        Self::new(positions, weights)
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.atoms().map(|(x, w)| x * w).sum()
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        self.atoms().map(|(x, w)| w * (x - mean).powi(2)).sum()
    }

    pub fn probability(&self, pred: impl Fn(f64) -> bool) -> f64 {
        self.atoms().filter(|(x, _)| pred(*x)).map(|(_, w)| w).sum()
    }

    pub fn atoms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.positions
            .iter()
            .copied()
            .zip(self.weights.iter().copied())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawProduct")]
pub struct ProductMeasure {
    marginals: Vec<Marginal>,
}

#[derive(Deserialize)]
struct RawProduct {
    marginals: Vec<Marginal>,
}

impl TryFrom<RawProduct> for ProductMeasure {
    type Error = OuqError;

    fn try_from(raw: RawProduct) -> Result<Self> {
        ProductMeasure::new(raw.marginals)
    }
}

impl ProductMeasure {
    pub fn new(marginals: Vec<Marginal>) -> Result<Self> {
        if marginals.is_empty() {
            return Err(OuqError::InvalidMeasure("product of zero marginals".into()));
        }
        Ok(Self { marginals })
    }

    pub fn marginals(&self) -> &[Marginal] {
        &self.marginals
    }

    pub fn dim(&self) -> usize {
        self.marginals.len()
    }

    pub fn support_size(&self) -> usize {
        self.marginals.iter().map(Marginal::len).product()
    }

    /// Visits every point of the product grid with its product weight.
    pub fn for_each_atom(&self, mut visit: impl FnMut(&[f64], f64)) {
        let m = self.marginals.len();
        let mut idx = vec![0usize; m];
        let mut point: Vec<f64> = self.marginals.iter().map(|mg| mg.positions[0]).collect();
        loop {
            let w: f64 = self
                .marginals
                .iter()
                .zip(&idx)
                .map(|(mg, &j)| mg.weights[j])
                .product();
            visit(&point, w);
            let mut axis = m;
            loop {
                if axis == 0 {
                    return;
                }
                axis -= 1;
                idx[axis] += 1;
                if idx[axis] < self.marginals[axis].len() {
                    point[axis] = self.marginals[axis].positions[idx[axis]];
                    break;
                }
                idx[axis] = 0;
                point[axis] = self.marginals[axis].positions[0];
            }
        }
    }
}

/// Exact expectation over the product grid.
pub fn expectation(pm: &ProductMeasure, f: impl Fn(&[f64]) -> Result<f64>) -> Result<f64> {
    let mut acc = 0.0;
    let mut err = None;
    pm.for_each_atom(|x, w| {
        if err.is_some() {
            return;
        }
        match f(x) {
            Ok(y) if y.is_finite() => acc += w * y,
            Ok(y) => {
                err = Some(OuqError::Evaluation {
                    point: x.to_vec(),
                    reason: format!("non-finite value {y}"),
                })
            }
            Err(OuqError::Evaluation { reason, .. }) => {
                err = Some(OuqError::Evaluation {
                    point: x.to_vec(),
                    reason,
                })
            }
            Err(e) => {
                err = Some(OuqError::Evaluation {
                    point: x.to_vec(),
                    reason: e.to_string(),
                })
            }
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(acc),
    }
}

pub fn event_probability(pm: &ProductMeasure, pred: impl Fn(&[f64]) -> bool) -> f64 {
    let mut acc = 0.0;
    pm.for_each_atom(|x, w| {
        if pred(x) {
            acc += w;
        }
    });
    acc.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisLayout {
    pub lo: f64,
    pub hi: f64,
    /// Number of atoms; ignored when `pinned` is set.
    pub k: usize,
    pub pinned: Option<f64>,
}

impl AxisLayout {
    fn n_params(&self) -> usize {
        match self.pinned {
            Some(_) => 0,
            None if self.k == 1 => 1,
            None => 2 * self.k,
        }
    }
}

/// Flat encoding: for every free axis, `k` raw positions followed by `k` raw
/// softmax weights (weights omitted when `k == 1`). Pinned axes take no slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamLayout {
    axes: Vec<AxisLayout>,
}

impl ParamLayout {
    pub fn new(axes: Vec<AxisLayout>) -> Result<Self> {
        if axes.is_empty() {
            return Err(OuqError::InvalidDomain("layout has no axes".into()));
        }
        for (i, a) in axes.iter().enumerate() {
            if !(a.lo.is_finite() && a.hi.is_finite() && a.lo <= a.hi) {
                return Err(OuqError::InvalidDomain(format!(
                    "axis {i}: bad interval [{}, {}]",
                    a.lo, a.hi
                )));
            }
            if a.pinned.is_none() && a.k == 0 {
                return Err(OuqError::InvalidDomain(format!("axis {i}: zero atoms")));
            }
        }
        Ok(Self { axes })
    }

    /// `k[i]` atoms on `[lo_i, hi_i]` for every axis.
    pub fn uniform(intervals: &[(f64, f64)], k: &[usize]) -> Result<Self> {
        Self::new(
            intervals
                .iter()
                .zip(k)
                .map(|(&(lo, hi), &k)| AxisLayout {
                    lo,
                    hi,
                    k,
                    pinned: None,
                })
                .collect(),
        )
    }

    pub fn axes(&self) -> &[AxisLayout] {
        &self.axes
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(AxisLayout::n_params).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Atom count per axis (1 for pinned axes).
    pub fn support_counts(&self) -> Vec<usize> {
        self.axes
            .iter()
            .map(|a| if a.pinned.is_some() { 1 } else { a.k })
            .collect()
    }

    /// Search box for each flat parameter.
    pub fn bounds(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.len());
        for a in &self.axes {
            if a.pinned.is_some() {
                continue;
            }
            out.extend(std::iter::repeat_n((a.lo, a.hi), a.k));
            if a.k > 1 {
                out.extend(std::iter::repeat_n(
                    (-RAW_WEIGHT_BOUND, RAW_WEIGHT_BOUND),
                    a.k,
                ));
            }
        }
        out
    }

    /// Mask of flat indices that encode weights.
    pub fn weight_mask(&self) -> Vec<bool> {
        let mut out = Vec::with_capacity(self.len());
        for a in &self.axes {
            if a.pinned.is_some() {
                continue;
            }
            out.extend(std::iter::repeat_n(false, a.k));
            if a.k > 1 {
                out.extend(std::iter::repeat_n(true, a.k));
            }
        }
        out
    }

    /// Flat index range owned by `axis` (empty for pinned axes).
    pub fn axis_range(&self, axis: usize) -> std::ops::Range<usize> {
        let start: usize = self.axes[..axis].iter().map(AxisLayout::n_params).sum();
        start..start + self.axes[axis].n_params()
    }
}

pub fn encode(pm: &ProductMeasure, layout: &ParamLayout) -> Result<Vec<f64>> {
    if pm.dim() != layout.dim() {
        return Err(OuqError::LengthMismatch {
            expected: layout.dim(),
            got: pm.dim(),
        });
    }
    let mut out = Vec::with_capacity(layout.len());
    for (i, (a, mg)) in layout.axes.iter().zip(pm.marginals()).enumerate() {
        if a.pinned.is_some() {
            continue;
        }
        if mg.len() != a.k {
            return Err(OuqError::InvalidMeasure(format!(
                "axis {i}: {} atoms, layout expects {}",
                mg.len(),
                a.k
            )));
        }
        out.extend_from_slice(mg.positions());
        if a.k > 1 {
            let logs: Vec<f64> = mg.weights().iter().map(|w| w.max(1e-300).ln()).collect();
            let shift = logs.iter().sum::<f64>() / logs.len() as f64;
            out.extend(logs.iter().map(|l| l - shift));
        }
    }
    Ok(out)
}

pub fn decode(v: &[f64], layout: &ParamLayout) -> Result<ProductMeasure> {
    if v.len() != layout.len() {
        return Err(OuqError::LengthMismatch {
            expected: layout.len(),
            got: v.len(),
        });
    }
    let mut marginals = Vec::with_capacity(layout.dim());
    let mut at = 0;
    for a in &layout.axes {
        if let Some(x) = a.pinned {
            marginals.push(Marginal::dirac(x));
            continue;
        }
        let positions: Vec<f64> = v[at..at + a.k]
            .iter()
            .map(|&x| {
                if x.is_nan() {
                    a.lo
                } else {
                    x.clamp(a.lo, a.hi)
                }
            })
            .collect();
        at += a.k;
        let weights = if a.k > 1 {
            let w = softmax(&v[at..at + a.k]);
            at += a.k;
            w
        } else {
            vec![1.0]
        };
        marginals.push(Marginal { positions, weights });
    }
    Ok(ProductMeasure { marginals })
}

fn softmax(raw: &[f64]) -> Vec<f64> {
    let clean: Vec<f64> = raw
        .iter()
        .map(|&z| {
            if z.is_finite() {
                z
            } else if z > 0.0 {
                1e300
            } else {
                -1e300
            }
        })
        .collect();
    let max = clean.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = clean.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|e| e / total).collect()
}

/// Atoms per axis after merging positions within `MERGE_RADIUS * width` and
/// discarding clusters whose total weight is `<= tol`.
pub fn effective_support(pm: &ProductMeasure, widths: &[f64], tol: f64) -> Vec<usize> {
    pm.marginals()
        .iter()
        .enumerate()
        .map(|(i, mg)| {
            let radius = MERGE_RADIUS * widths.get(i).copied().unwrap_or(0.0);
            let mut atoms: Vec<(f64, f64)> = mg.atoms().collect();
            atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut clusters: Vec<(f64, f64)> = Vec::new();
            for (x, w) in atoms {
                match clusters.last_mut() {
                    Some((anchor, mass)) if x - *anchor <= radius => *mass += w,
                    _ => clusters.push((x, w)),
                }
            }
            clusters.iter().filter(|(_, mass)| *mass > tol).count()
        })
        .collect()
}
