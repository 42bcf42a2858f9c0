//! Concentration bounds under bounded-difference assumptions: the classic
//! McDiarmid exponential bound and the optimal (sharp) bounds.

mod cubic;
mod hypercube;

pub use cubic::{real_cubic_roots, CubicAnalysis, CubicRoot};
pub use hypercube::{
    canonical_sets, hypercube_h, hypercube_oracle, hypercube_oracle_detail, hypercube_oracle_sets,
    threshold_set, OracleResult, Vertex, MAX_ORACLE_DIM,
};

use serde::{Deserialize, Serialize};

use crate::error::{OuqError, Result};

/// Grid used by the numerical fallback for m >= 4.
const FALLBACK_GRID: usize = 33;
const FALLBACK_FULL_GRID: usize = 13;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct DiameterVector(Vec<f64>);

impl TryFrom<Vec<f64>> for DiameterVector {
    type Error = OuqError;

    fn try_from(d: Vec<f64>) -> Result<Self> {
        DiameterVector::new(d)
    }
}

impl From<DiameterVector> for Vec<f64> {
    fn from(d: DiameterVector) -> Self {
        d.0
    }
}

impl DiameterVector {
    pub fn new(d: Vec<f64>) -> Result<Self> {
        if let Some((i, &v)) = d
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(OuqError::NegativeDiameter { index: i, value: v });
        }
        Ok(Self(d))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sum_squares(&self) -> f64 {
        self.0.iter().map(|d| d * d).sum()
    }

    /// Indices ordered by decreasing diameter (stable on ties).
    pub fn order_desc(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.0.len()).collect();
        idx.sort_by(|&i, &j| self.0[j].total_cmp(&self.0[i]));
        idx
    }

    pub fn sorted_desc(&self) -> Vec<f64> {
        self.order_desc().into_iter().map(|i| self.0[i]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalBoundResult {
    pub value: f64,
    pub regime: String,
    /// Single-vertex family value (m = 3 name F1).
    pub f1: Option<f64>,
    /// Cubic-root family value (m = 3 only).
    pub f2: Option<f64>,
    /// Margins `a` at which the single-vertex formula switches branch.
    pub branch_boundaries: Vec<f64>,
    /// Extremal Bernoulli parameters in the caller's axis order, when known.
    pub alpha: Option<Vec<f64>>,
    /// Extremal vertex set (bit `i` = coordinate `i`, caller's axis order).
    pub vertex_set: Option<Vec<Vertex>>,
    pub numerical: bool,
}

impl OptimalBoundResult {
    fn exact(value: f64, regime: impl Into<String>) -> Self {
        Self {
            value: value.clamp(0.0, 1.0),
            regime: regime.into(),
            f1: None,
            f2: None,
            branch_boundaries: Vec::new(),
            alpha: None,
            vertex_set: None,
            numerical: false,
        }
    }
}

/// `exp(-2 a^2 / sum D_i^2)` for `a > 0`, 1 for `a <= 0`.
pub fn classic_mcdiarmid(a: f64, d: &DiameterVector) -> f64 {
    if a <= 0.0 {
        return 1.0;
    }
    let s = d.sum_squares();
    if s == 0.0 {
        return 0.0;
    }
    (-2.0 * a * a / s).exp().min(1.0)
}

/// Thresholds `sum_{j<=k} D_j - k D_k` for `k = 1..m` (sorted `d`).
fn single_vertex_thresholds(d: &[f64]) -> Vec<f64> {
    let mut s = 0.0;
    d.iter()
        .enumerate()
        .map(|(k, &dk)| {
            s += dk;
            s - (k + 1) as f64 * dk
        })
        .collect()
}

/// Value and active `k` of the single-vertex formula on sorted positive `d`.
fn single_vertex(a: f64, d: &[f64]) -> (f64, usize) {
    let total: f64 = d.iter().sum();
    if a >= total {
        return (0.0, 0);
    }
    let th = single_vertex_thresholds(d);
    let k = (1..=d.len()).rev().find(|&k| a >= th[k - 1]).unwrap_or(1);
    let sk: f64 = d[..k].iter().sum();
    let prod: f64 = d[..k].iter().product();
    let kf = k as f64;
    (
        ((sk - a).powi(k as i32) / (kf.powi(k as i32) * prod)).clamp(0.0, 1.0),
        k,
    )
}

/// Sharp bound on `P[f - E f >= a]` over all `f` with sub-diameters `D` and
/// independent inputs.
pub fn optimal_mcdiarmid(a: f64, d: &DiameterVector) -> Result<OptimalBoundResult> {
    optimal_mcdiarmid_shifted(a, 0.0, d)
}

/// As [`optimal_mcdiarmid`] with mean constraint `E f <= b`, i.e. margin `a - b`.
pub fn optimal_mcdiarmid_shifted(a: f64, b: f64, d: &DiameterVector) -> Result<OptimalBoundResult> {
    if d.is_empty() {
        return Err(OuqError::UnsupportedDimension {
            m: 0,
            reason: "need at least one diameter".into(),
        });
    }
    let margin = a - b;
    let order: Vec<usize> = d
        .order_desc()
        .into_iter()
        .filter(|&i| d.0[i] > 0.0)
        .collect();
    let ds: Vec<f64> = order.iter().map(|&i| d.0[i]).collect();
    let m_full = d.len();

    if margin <= 0.0 {
        let mut r = OptimalBoundResult::exact(1.0, "nonpositive-margin");
        r.alpha = Some(vec![1.0; m_full]);
        if m_full <= MAX_ORACLE_DIM {
            r.vertex_set = Some((0..1u32 << m_full).collect());
        }
        return Ok(r);
    }
    if ds.is_empty() {
        return Ok(OptimalBoundResult::exact(0.0, "zero-diameters"));
    }

    let m = ds.len();
    let (f1, k) = single_vertex(margin, &ds);
    let mut boundaries = single_vertex_thresholds(&ds);
    boundaries.push(ds.iter().sum());
    boundaries.retain(|t| *t > 0.0);
    boundaries.dedup_by(|x, y| (*x - *y).abs() < 1e-15);

    // Single-vertex extremizer: alpha_j = (S_k - a)/(k D_j) on the k largest.
    let single_alpha = || {
        let mut alpha = vec![1.0; m_full];
        if k > 0 {
            let sk: f64 = ds[..k].iter().sum();
            for (j, &i) in order.iter().take(k).enumerate() {
                alpha[i] = ((sk - margin) / (k as f64 * ds[j])).clamp(0.0, 1.0);
            }
        } else {
            for &i in &order {
                alpha[i] = 0.0;
            }
        }
        alpha
    };
    let all_ones = if m_full <= 31 {
        (1u32 << m_full) - 1
    } else {
        0
    };

    let single_tag = |k: usize| match (m, k) {
        (3, 0) => "m3-F1-branch1".to_string(),
        (3, k) => format!("m3-F1-branch{}", 5 - k),
        (_, 0) => format!("m{m}-zero"),
        (1, _) => "m1-linear".to_string(),
        (2, 1) => "m2-linear".to_string(),
        (2, _) => "m2-quadratic".to_string(),
        (_, k) => format!("m{m}-single-vertex-k{k}"),
    };

    let mut result = OptimalBoundResult {
        value: f1,
        regime: single_tag(k),
        f1: Some(f1),
        f2: None,
        branch_boundaries: boundaries,
        alpha: Some(single_alpha()),
        vertex_set: Some(vec![all_ones]),
        numerical: false,
    };

    match m {
        1 | 2 => Ok(result),
        3 => {
            let cubic = CubicAnalysis::new(margin, ds[1], ds[2]);
            let f2 = cubic.f2();
            result.f2 = Some(f2);
            if f2 > f1 {
                let root = cubic
                    .best()
                    .expect("positive F2 comes from an admissible root");
                let mut alpha = vec![1.0; m_full];
                alpha[order[0]] = root.gamma;
                alpha[order[1]] = root.gamma;
                alpha[order[2]] = root.theta;
                let set: Vec<Vertex> = (0..1u32 << m_full)
                    .filter(|t| order.iter().filter(|&&i| t >> i & 1 == 1).count() >= 2)
                    .collect();
                result.value = f2.min(1.0);
                result.regime = "m3-F2".into();
                result.alpha = Some(alpha);
                result.vertex_set = Some(set);
            }
            Ok(result)
        }
        _ => {
            let exact_from: f64 = ds[..m - 2].iter().sum::<f64>() + ds[m - 1];
            if margin >= exact_from {
                return Ok(result);
            }
            if m > MAX_ORACLE_DIM {
                return Err(OuqError::UnsupportedDimension {
                    m,
                    reason: format!(
                        "margin {margin} is below the exact tail region (>= {exact_from}) and the \
                         numerical search supports m <= {MAX_ORACLE_DIM}"
                    ),
                });
            }
            let family: Vec<Vec<Vertex>> = (1..=m).map(|q| threshold_set(m, q)).collect();
            let mut best = hypercube_oracle_sets(margin, &ds, FALLBACK_GRID, &family)?;
            let mut tag = format!("m{m}-numerical-conjectured-family");
            if 1usize << m <= 16 {
                let full = hypercube_oracle_detail(margin, &ds, FALLBACK_FULL_GRID)?;
                if full.value > best.value + 1e-9 {
                    best = full;
                    tag = format!("m{m}-numerical-full-enumeration");
                }
            }
            if best.value > f1 {
                let mut alpha = vec![1.0; m_full];
                for (j, &i) in order.iter().enumerate() {
                    alpha[i] = best.alpha[j];
                }
                let remap = |t: Vertex| -> Vertex {
                    order
                        .iter()
                        .enumerate()
                        .filter(|(j, _)| t >> j & 1 == 1)
                        .fold(0, |acc, (_, &i)| acc | 1 << i)
                };
                result.value = best.value;
                result.alpha = Some(alpha);
                result.vertex_set = Some(best.set.iter().map(|&t| remap(t)).collect());
            }
            result.regime = tag;
            result.numerical = true;
            Ok(result)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HoeffdingBound {
    /// Sharp bound; coincides with the optimal McDiarmid bound.
    Equal(OptimalBoundResult),
    /// The sharp value is strictly below `upper`, the optimal McDiarmid value.
    StrictlyBelowMcDiarmid { upper: f64 },
}

impl HoeffdingBound {
    /// A valid upper bound in both cases.
    pub fn upper(&self) -> f64 {
        match self {
            HoeffdingBound::Equal(r) => r.value,
            HoeffdingBound::StrictlyBelowMcDiarmid { upper } => *upper,
        }
    }
}

/// Sharp bound for sums of independent bounded variables, m in {2, 3}.
pub fn optimal_hoeffding(a: f64, d: &DiameterVector) -> Result<HoeffdingBound> {
    if !(2..=3).contains(&d.len()) {
        return Err(OuqError::UnsupportedDimension {
            m: d.len(),
            reason: "the sharp sum bound is known for m = 2 and m = 3 only".into(),
        });
    }
    let r = optimal_mcdiarmid(a, d)?;
    match (r.f1, r.f2) {
        (Some(f1), Some(f2)) if f1 < f2 => {
            Ok(HoeffdingBound::StrictlyBelowMcDiarmid { upper: r.value })
        }
        _ => Ok(HoeffdingBound::Equal(r)),
    }
}

/// Bound for the porous-medium pressure problem: two independent inputs
/// (permeability and source) with sub-diameters `d1`, `d2`, threshold margin
/// `a`. Sharp value equals the two-variable bounded-differences bound.
pub fn porous_media_bound(a: f64, d1: f64, d2: f64) -> Result<f64> {
    Ok(optimal_mcdiarmid(a, &DiameterVector::new(vec![d1, d2])?)?.value)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dv(d: &[f64]) -> DiameterVector {
        DiameterVector::new(d.to_vec()).unwrap()
    }

    #[test]
    fn classic_values() {
        let d = dv(&[8.86, 4.17, 7.20]);
        assert!((classic_mcdiarmid(5.5, &d) - 0.663_96).abs() < 1e-4);
        assert_eq!(classic_mcdiarmid(0.0, &d), 1.0);
        assert_eq!(classic_mcdiarmid(1.0, &dv(&[0.0, 0.0])), 0.0);
    }

    #[test]
    fn hypervelocity_diameters() {
        let r = optimal_mcdiarmid(5.5, &dv(&[8.86, 7.20, 4.17])).unwrap();
        assert!((r.value - 0.437_020).abs() < 1e-6);
        assert_eq!(r.regime, "m3-F1-branch3");
        assert!((r.f2.unwrap() - 0.298_439).abs() < 1e-5);
    }

    #[test]
    fn two_variable_branches() {
        let r = optimal_mcdiarmid(1.0, &dv(&[3.0, 1.0])).unwrap();
        assert!((r.value - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.regime, "m2-linear");
        let r = optimal_mcdiarmid(1.0, &dv(&[1.0, 1.0])).unwrap();
        assert!((r.value - 0.25).abs() < 1e-15);
        assert_eq!(optimal_mcdiarmid(2.5, &dv(&[1.0, 1.0])).unwrap().value, 0.0);
    }

    #[test]
    fn one_variable() {
        let r = optimal_mcdiarmid(0.5, &dv(&[1.0])).unwrap();
        assert_eq!(r.value, 0.5);
        assert_eq!(optimal_mcdiarmid(1.5, &dv(&[1.0])).unwrap().value, 0.0);
    }

    #[test]
    fn zero_diameters_dropped() {
        let a = optimal_mcdiarmid(1.0, &dv(&[3.0, 0.0, 1.0])).unwrap();
        let b = optimal_mcdiarmid(1.0, &dv(&[3.0, 1.0])).unwrap();
        assert_eq!(a.value, b.value);
    }

    #[test]
    fn mean_shift() {
        let d = dv(&[3.0, 1.0]);
        let r = optimal_mcdiarmid_shifted(3.0, 2.0, &d).unwrap();
        assert_eq!(r.value, optimal_mcdiarmid(1.0, &d).unwrap().value);
    }

    fn check_extremizer(a: f64, d: &DiameterVector) {
        let r = optimal_mcdiarmid(a, d).unwrap();
        let alpha = r.alpha.unwrap();
        let set = r.vertex_set.unwrap();
        let (mut p, mut e) = (0.0, 0.0);
        for t in 0..8u32 {
            let w: f64 = (0..3)
                .map(|i| {
                    if t >> i & 1 == 1 {
                        alpha[i]
                    } else {
                        1.0 - alpha[i]
                    }
                })
                .product();
            if set.contains(&t) {
                p += w;
            }
            e += w * hypercube_h(&set, t, a, d.as_slice());
        }
        assert!((p - r.value).abs() < 1e-9, "{p} vs {}", r.value);
        assert!(e <= 1e-9, "mean {e}");
    }

    #[test]
    fn extremal_alpha_attains_value() {
        check_extremizer(5.5, &dv(&[8.86, 7.20, 4.17]));
        check_extremizer(5.5, &dv(&[4.17, 8.86, 7.20]));
        check_extremizer(1.0, &dv(&[2.0, 2.0, 2.0]));
        check_extremizer(1.0, &dv(&[1.0, 3.0, 2.9]));
        check_extremizer(0.3, &dv(&[1.0, 3.0, 2.0]));
    }

    #[test]
    fn hoeffding_cases() {
        match optimal_hoeffding(1.0, &dv(&[1.0, 1.0])).unwrap() {
            HoeffdingBound::Equal(r) => assert!((r.value - 0.25).abs() < 1e-15),
            other => panic!("{other:?}"),
        }
        match optimal_hoeffding(5.5, &dv(&[8.86, 7.20, 4.17])).unwrap() {
            HoeffdingBound::Equal(r) => assert!((r.value - 0.437).abs() < 1e-3),
            other => panic!("{other:?}"),
        }
        // Equal diameters well above the margin favour the cubic family.
        match optimal_hoeffding(1.0, &dv(&[2.0, 2.0, 2.0])).unwrap() {
            HoeffdingBound::StrictlyBelowMcDiarmid { upper } => {
                assert_eq!(
                    upper,
                    optimal_mcdiarmid(1.0, &dv(&[2.0, 2.0, 2.0])).unwrap().value
                )
            }
            other => panic!("{other:?}"),
        }
        assert!(optimal_hoeffding(1.0, &dv(&[1.0])).is_err());
    }

    #[test]
    fn four_variable_tail_is_exact() {
        let d = dv(&[4.0, 3.0, 2.0, 1.0]);
        // Exact when a >= D1 + D2 + D4 = 8.
        let r = optimal_mcdiarmid(8.5, &d).unwrap();
        assert!(!r.numerical);
        assert!((r.value - (10.0f64 - 8.5).powi(4) / (256.0 * 24.0)).abs() < 1e-15);
    }

    #[test]
    fn four_variable_interior_is_numerical() {
        let d = dv(&[1.0, 1.0, 1.0, 1.0]);
        let r = optimal_mcdiarmid(1.0, &d).unwrap();
        assert!(r.numerical);
        assert!(r.value >= r.f1.unwrap());
        assert!(r.value <= classic_mcdiarmid(1.0, &d) + 1e-9);
    }

    #[test]
    fn negative_diameter_rejected() {
        assert!(DiameterVector::new(vec![1.0, -0.1]).is_err());
    }
}
