use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{OuqError, Result};
use crate::inequalities::DiameterVector;
use crate::response::{BoxDomain, ExpressionAst, ModelKind, ResponseModel, SurrogateParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cmp {
    #[serde(alias = "<=")]
    Le,
    #[serde(alias = "<")]
    Lt,
    #[serde(alias = ">=")]
    Ge,
    #[serde(alias = ">")]
    Gt,
}

impl Cmp {
    pub fn holds(self, x: f64, value: f64) -> bool {
        match self {
            Cmp::Le => x <= value,
            Cmp::Lt => x < value,
            Cmp::Ge => x >= value,
            Cmp::Gt => x > value,
        }
    }

    pub fn strict(self) -> Self {
        match self {
            Cmp::Le | Cmp::Lt => Cmp::Lt,
            Cmp::Ge | Cmp::Gt => Cmp::Gt,
        }
    }

    pub fn is_upper_tail(self) -> bool {
        matches!(self, Cmp::Ge | Cmp::Gt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Global,
    Factor(usize),
}

/// Function whose expectation a constraint bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Integrand {
    Response,
    /// Function of the response value, written in `x1`.
    ResponseFn {
        expression: ExpressionAst,
    },
    FailureIndicator,
    Input {
        expression: ExpressionAst,
    },
    InputIndicator {
        axis: usize,
        cmp: Cmp,
        value: f64,
    },
    /// Variance of one input; a function of its first two moments.
    Variance {
        axis: usize,
    },
}

impl Integrand {
    /// Input axes the integrand reads; `None` when it needs the response.
    pub fn input_axes(&self) -> Option<Vec<usize>> {
        match self {
            Integrand::Response | Integrand::ResponseFn { .. } | Integrand::FailureIndicator => {
                None
            }
            Integrand::Input { expression } => {
                let mut v = expression.root.vars();
                v.sort_unstable();
                v.dedup();
                Some(v)
            }
            Integrand::InputIndicator { axis, .. } | Integrand::Variance { axis } => {
                Some(vec![*axis])
            }
        }
    }

    /// Moments this integrand contributes toward the support count.
    pub fn moment_count(&self) -> usize {
        match self {
            Integrand::Variance { .. } => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawConstraint", into = "RawConstraint")]
pub enum MomentConstraint {
    /// `lo <= E[integrand] <= hi` (variance for [`Integrand::Variance`]).
    Moment {
        scope: Scope,
        integrand: Integrand,
        lo: f64,
        hi: f64,
    },
    /// Input `axis` equals `value` almost surely.
    Pinned { axis: usize, value: f64 },
}

impl MomentConstraint {
    pub fn moment(scope: Scope, integrand: Integrand, lo: f64, hi: f64) -> Self {
        MomentConstraint::Moment {
            scope,
            integrand,
            lo,
            hi,
        }
    }

    pub fn pinned(axis: usize, value: f64) -> Self {
        MomentConstraint::Pinned { axis, value }
    }

    /// `mu[x_axis <= value] >= 1/2` and `mu[x_axis >= value] >= 1/2`.
    pub fn median(axis: usize, value: f64) -> [Self; 2] {
        [Cmp::Le, Cmp::Ge].map(|cmp| MomentConstraint::Moment {
            scope: Scope::Factor(axis),
            integrand: Integrand::InputIndicator { axis, cmp, value },
            lo: 0.5,
            hi: f64::INFINITY,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct Pin {
    axis: usize,
    value: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConstraint {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scope: Option<Scope>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    integrand: Option<Integrand>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pinned: Option<Pin>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    median: Option<Pin>,
}

impl RawConstraint {
    /// A `median` row becomes two indicator constraints.
    fn expand(self) -> Result<Vec<MomentConstraint>> {
        match self.median {
            Some(m)
                if self.scope.is_none() && self.integrand.is_none() && self.pinned.is_none() =>
            {
                Ok(MomentConstraint::median(m.axis, m.value).to_vec())
            }
            Some(_) => Err(OuqError::InvalidArgument(
                "`median` must appear alone".into(),
            )),
            None => Ok(vec![self.try_into()?]),
        }
    }
}

impl TryFrom<RawConstraint> for MomentConstraint {
    type Error = OuqError;

    fn try_from(raw: RawConstraint) -> Result<Self> {
        if raw.median.is_some() {
            return Err(OuqError::InvalidArgument(
                "a median row expands to two constraints; use it inside a problem".into(),
            ));
        }
        match (raw.pinned, raw.integrand) {
            (Some(p), None) if raw.scope.is_none() && raw.lo.is_none() && raw.hi.is_none() => {
                Ok(MomentConstraint::pinned(p.axis, p.value))
            }
            (None, Some(integrand)) => Ok(MomentConstraint::moment(
                raw.scope.unwrap_or(Scope::Global),
                integrand,
                raw.lo.unwrap_or(f64::NEG_INFINITY),
                raw.hi.unwrap_or(f64::INFINITY),
            )),
            _ => Err(OuqError::InvalidArgument(
                "constraint needs either `integrand` (with optional scope/lo/hi) or `pinned` alone"
                    .into(),
            )),
        }
    }
}

impl From<MomentConstraint> for RawConstraint {
    fn from(c: MomentConstraint) -> Self {
        let finite = |v: f64| v.is_finite().then_some(v);
        match c {
            MomentConstraint::Moment {
                scope,
                integrand,
                lo,
                hi,
            } => RawConstraint {
                scope: Some(scope),
                integrand: Some(integrand),
                lo: finite(lo),
                hi: finite(hi),
                pinned: None,
                median: None,
            },
            MomentConstraint::Pinned { axis, value } => RawConstraint {
                scope: None,
                integrand: None,
                lo: None,
                hi: None,
                pinned: Some(Pin { axis, value }),
                median: None,
            },
        }
    }
}

/// Closed interval; either end may be infinite (`null` in JSON).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    #[serde(
        serialize_with = "ser_bound",
        deserialize_with = "de_lo",
        default = "neg_inf"
    )]
    pub lo: f64,
    #[serde(
        serialize_with = "ser_bound",
        deserialize_with = "de_hi",
        default = "pos_inf"
    )]
    pub hi: f64,
}

fn neg_inf() -> f64 {
    f64::NEG_INFINITY
}

fn pos_inf() -> f64 {
    f64::INFINITY
}

fn ser_bound<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_some(v)
    } else {
        s.serialize_none()
    }
}

fn de_lo<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
}

fn de_hi<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(OuqError::InvalidArgument(format!(
                "bad interval [{lo}, {hi}]"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FailureEvent {
    pub direction: Cmp,
    pub threshold: f64,
    /// Exclude ties with the threshold; by default ties count as failure.
    #[serde(default)]
    pub strict: bool,
}

impl FailureEvent {
    pub fn cmp(&self) -> Cmp {
        if self.strict {
            self.direction.strict()
        } else {
            self.direction
        }
    }

    pub fn fails(&self, y: f64) -> bool {
        self.cmp().holds(y, self.threshold)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ResponseMode {
    Known(ResponseModel),
    /// Any response with the given sub-diameters and mean in `mean`.
    OscillationClass {
        diameters: DiameterVector,
        mean: Interval,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawProblem", into = "RawProblem")]
pub struct AdmissibleProblem {
    pub domain: BoxDomain,
    pub response: ResponseMode,
    pub constraints: Vec<MomentConstraint>,
    pub failure: FailureEvent,
    pub epsilon: Option<f64>,
}

impl AdmissibleProblem {
    pub fn new(
        domain: BoxDomain,
        response: ResponseMode,
        constraints: Vec<MomentConstraint>,
        failure: FailureEvent,
        epsilon: Option<f64>,
    ) -> Result<Self> {
        let p = Self {
            domain,
            response,
            constraints,
            failure,
            epsilon,
        };
        p.validate()?;
        Ok(p)
    }

    /// The same problem with extra constraints appended.
    pub fn with_constraints(
        &self,
        extra: impl IntoIterator<Item = MomentConstraint>,
    ) -> Result<Self> {
        let mut p = self.clone();
        p.constraints.extend(extra);
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        let dim = self.domain.dim();
        if !self.failure.threshold.is_finite() {
            return Err(OuqError::InvalidArgument(
                "failure threshold must be finite".into(),
            ));
        }
        if let Some(eps) = self.epsilon {
            if !(0.0..=1.0).contains(&eps) {
                return Err(OuqError::InvalidArgument(format!(
                    "epsilon {eps} outside [0, 1]"
                )));
            }
        }
        match &self.response {
            ResponseMode::Known(model) => {
                if model.domain() != &self.domain {
                    return Err(OuqError::InvalidDomain(
                        "response model and problem use different domains".into(),
                    ));
                }
            }
            ResponseMode::OscillationClass { diameters, mean } => {
                if diameters.len() != dim {
                    return Err(OuqError::LengthMismatch {
                        expected: dim,
                        got: diameters.len(),
                    });
                }
                Interval::new(mean.lo, mean.hi)?;
            }
        }
        let bad_axis = |i: usize, axis: usize| {
            Err(OuqError::InvalidArgument(format!(
                "constraint {i}: axis {axis} out of range for a {dim}-axis domain"
            )))
        };
        for (i, c) in self.constraints.iter().enumerate() {
            match c {
                MomentConstraint::Pinned { axis, value } => {
                    if *axis >= dim {
                        return bad_axis(i, *axis);
                    }
                    if !self.domain.axes()[*axis].contains(*value) {
                        return Err(OuqError::InvalidArgument(format!(
                            "constraint {i}: pinned value {value} outside axis {axis}"
                        )));
                    }
                    let clash = self.constraints[..i].iter().any(|o| {
                        matches!(o, MomentConstraint::Pinned { axis: a, value: v } if a == axis && v != value)
                    });
                    if clash {
                        return Err(OuqError::InvalidArgument(format!(
                            "constraint {i}: axis {axis} pinned to two different values"
                        )));
                    }
                }
                MomentConstraint::Moment {
                    scope,
                    integrand,
                    lo,
                    hi,
                } => {
                    if lo.is_nan() || hi.is_nan() || lo > hi {
                        return Err(OuqError::InvalidArgument(format!(
                            "constraint {i}: bad interval [{lo}, {hi}]"
                        )));
                    }
                    if let Scope::Factor(f) = scope {
                        if *f >= dim {
                            return bad_axis(i, *f);
                        }
                    }
                    if let Some(axes) = integrand.input_axes() {
                        if let Some(&a) = axes.iter().find(|&&a| a >= dim) {
                            return bad_axis(i, a);
                        }
                    }
                    if let Integrand::ResponseFn { expression } = integrand {
                        if expression.arity() > 1 {
                            return Err(OuqError::InvalidArgument(format!(
                                "constraint {i}: response functions may only use x1"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Axis -> pinned value.
    pub fn pins(&self) -> Vec<Option<f64>> {
        let mut out = vec![None; self.domain.dim()];
        for c in &self.constraints {
            if let MomentConstraint::Pinned { axis, value } = c {
                out[*axis] = Some(*value);
            }
        }
        out
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum RawResponse {
    Surrogate {
        #[serde(default)]
        params: SurrogateParams,
    },
    Expression {
        expression: ExpressionAst,
    },
    OscillationClass {
        diameters: DiameterVector,
        mean: Interval,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProblem {
    domain: BoxDomain,
    response: RawResponse,
    #[serde(default)]
    constraints: Vec<RawConstraint>,
    failure: FailureEvent,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    epsilon: Option<f64>,
}

impl TryFrom<RawProblem> for AdmissibleProblem {
    type Error = OuqError;

    fn try_from(raw: RawProblem) -> Result<Self> {
        let response = match raw.response {
            RawResponse::Surrogate { params } => ResponseMode::Known(ResponseModel::new(
                ModelKind::Surrogate { params },
                raw.domain.clone(),
            )?),
            RawResponse::Expression { expression } => ResponseMode::Known(ResponseModel::new(
                ModelKind::Expression { expression },
                raw.domain.clone(),
            )?),
            RawResponse::OscillationClass { diameters, mean } => {
                ResponseMode::OscillationClass { diameters, mean }
            }
        };
        let mut constraints = Vec::new();
        for (i, c) in raw.constraints.into_iter().enumerate() {
            let expanded = c.expand().map_err(|e| match e {
                OuqError::InvalidArgument(m) => {
                    OuqError::InvalidArgument(format!("constraint {i}: {m}"))
                }
                e => e,
            })?;
            constraints.extend(expanded);
        }
        AdmissibleProblem::new(raw.domain, response, constraints, raw.failure, raw.epsilon)
    }
}

impl From<AdmissibleProblem> for RawProblem {
    fn from(p: AdmissibleProblem) -> Self {
        let response = match p.response {
            ResponseMode::Known(model) => match model.kind().clone() {
                ModelKind::Surrogate { params } => RawResponse::Surrogate { params },
                ModelKind::Expression { expression } => RawResponse::Expression { expression },
            },
            ResponseMode::OscillationClass { diameters, mean } => {
                RawResponse::OscillationClass { diameters, mean }
            }
        };
        RawProblem {
            domain: p.domain,
            response,
            constraints: p.constraints.into_iter().map(RawConstraint::from).collect(),
            failure: p.failure,
            epsilon: p.epsilon,
        }
    }
}
