//! Positive random variables with exact cdf, tail, quantile and mean.
//!
//! All sampling goes through quantile inversion of a uniform draw, so a
//! sample is a deterministic function of the stream position.

use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quad::{self, QuadError};
use crate::rng::RngStream;

/// A value in `[0, +∞]`; infinity is an explicit state, never a sentinel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Extended {
    Finite(f64),
    Infinite,
}

impl Extended {
    pub fn is_finite(&self) -> bool {
        matches!(self, Extended::Finite(_))
    }

    pub fn finite(&self) -> Option<f64> {
        match *self {
            Extended::Finite(v) => Some(v),
            Extended::Infinite => None,
        }
    }

    /// Lossy view as an `f64` (`+∞` maps to `f64::INFINITY`) for arithmetic.
    pub fn to_f64(&self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }
}

impl fmt::Display for Extended {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Extended::Finite(v) => write!(f, "{v}"),
            Extended::Infinite => write!(f, "+inf"),
        }
    }
}

impl Serialize for Extended {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Extended::Finite(v) => s.serialize_f64(*v),
            Extended::Infinite => s.serialize_str("+inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Extended {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Extended;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number or \"+inf\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Extended, E> {
                Ok(Extended::Finite(v))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Extended, E> {
                Ok(Extended::Finite(v as f64))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Extended, E> {
                Ok(Extended::Finite(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Extended, E> {
                match v {
                    "+inf" | "inf" => Ok(Extended::Infinite),
                    _ => Err(E::invalid_value(de::Unexpected::Str(v), &self)),
                }
            }
        }
        d.deserialize_any(V)
    }
}

/// One schema violation, addressed by a dotted field path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl Violation {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistError {
    #[error("invalid distribution: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("probability {0} outside (0, 1)")]
    ProbabilityOutOfRange(f64),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureComponent {
    pub weight: f64,
    pub dist: DistributionSpec,
}

fn unit_scale() -> f64 {
    1.0
}

/// Law of a strictly positive random variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistributionSpec {
    Exponential {
        rate: f64,
    },
    Deterministic {
        value: f64,
    },
    /// Tail `(x/scale)^(-alpha)` above `scale`.
    Pareto {
        alpha: f64,
        #[serde(default = "unit_scale")]
        scale: f64,
    },
    /// Tail `min(1, d1/x)` above the cutoff `x0 ≥ d1`, and 1 below it.
    TruncatedParetoOne {
        d1: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        x0: Option<f64>,
    },
    Uniform {
        lo: f64,
        hi: f64,
    },
    DiscreteUniform {
        support: Vec<f64>,
    },
    Mixture {
        components: Vec<MixtureComponent>,
    },
}

fn positive(path: &str, name: &str, v: f64, errs: &mut Vec<Violation>) {
    if !(v.is_finite() && v > 0.0) {
        errs.push(Violation::new(
            format!("{path}.{name}"),
            format!("must be a positive finite number, got {v}"),
        ));
    }
}

impl DistributionSpec {
    pub fn exponential(rate: f64) -> Result<Self, DistError> {
        Self::Exponential { rate }.checked()
    }

    pub fn deterministic(value: f64) -> Result<Self, DistError> {
        Self::Deterministic { value }.checked()
    }

    pub fn pareto(alpha: f64, scale: f64) -> Result<Self, DistError> {
        Self::Pareto { alpha, scale }.checked()
    }

    pub fn truncated_pareto_one(d1: f64, x0: f64) -> Result<Self, DistError> {
        Self::TruncatedParetoOne { d1, x0: Some(x0) }.checked()
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self, DistError> {
        Self::Uniform { lo, hi }.checked()
    }

    pub fn discrete_uniform(support: Vec<f64>) -> Result<Self, DistError> {
        Self::DiscreteUniform { support }.checked()
    }

    pub fn mixture(components: Vec<(f64, DistributionSpec)>) -> Result<Self, DistError> {
        Self::Mixture {
            components: components
                .into_iter()
                .map(|(weight, dist)| MixtureComponent { weight, dist })
                .collect(),
        }
        .checked()
    }

    /// Validates and normalizes (sorted support, explicit cutoff).
    pub fn checked(self) -> Result<Self, DistError> {
        let mut errs = Vec::new();
        self.validate("dist", &mut errs);
        if errs.is_empty() {
            Ok(self.normalized())
        } else {
            Err(DistError::Invalid(errs))
        }
    }

    /// Appends every parameter violation under `path`.
    pub fn validate(&self, path: &str, errs: &mut Vec<Violation>) {
        match self {
            Self::Exponential { rate } => positive(path, "rate", *rate, errs),
            Self::Deterministic { value } => positive(path, "value", *value, errs),
            Self::Pareto { alpha, scale } => {
                positive(path, "alpha", *alpha, errs);
                positive(path, "scale", *scale, errs);
            }
            Self::TruncatedParetoOne { d1, x0 } => {
                positive(path, "d1", *d1, errs);
                if let Some(x0) = x0 {
                    positive(path, "x0", *x0, errs);
                    if x0 < d1 {
                        errs.push(Violation::new(
                            format!("{path}.x0"),
                            format!("cutoff x0 = {x0} must be at least d1 = {d1}"),
                        ));
                    }
                }
            }
            Self::Uniform { lo, hi } => {
                if !(lo.is_finite() && *lo >= 0.0) {
                    errs.push(Violation::new(
                        format!("{path}.lo"),
                        format!("must be a non-negative finite number, got {lo}"),
                    ));
                }
                positive(path, "hi", *hi, errs);
                if hi <= lo {
                    errs.push(Violation::new(
                        format!("{path}.hi"),
                        format!("must exceed lo = {lo}, got {hi}"),
                    ));
                }
            }
            Self::DiscreteUniform { support } => {
                if support.is_empty() {
                    errs.push(Violation::new(format!("{path}.support"), "must not be empty"));
                }
                for (i, v) in support.iter().enumerate() {
                    positive(&format!("{path}.support"), &i.to_string(), *v, errs);
                }
            }
            Self::Mixture { components } => {
                if components.is_empty() {
                    errs.push(Violation::new(format!("{path}.components"), "must not be empty"));
                }
                let mut total = 0.0;
                for (i, c) in components.iter().enumerate() {
                    let cpath = format!("{path}.components.{i}");
                    if !(c.weight.is_finite() && c.weight >= 0.0) {
                        errs.push(Violation::new(
                            format!("{cpath}.weight"),
                            format!("must be a probability, got {}", c.weight),
                        ));
                    }
                    total += c.weight;
                    c.dist.validate(&format!("{cpath}.dist"), errs);
                }
                if !components.is_empty() && (total - 1.0).abs() > 1e-9 {
                    errs.push(Violation::new(
                        format!("{path}.components"),
                        format!("weights must sum to 1, got {total}"),
                    ));
                }
            }
        }
    }

    /// Fills defaults so that the serialized form is fully explicit.
    pub fn normalized(self) -> Self {
        match self {
            Self::TruncatedParetoOne { d1, x0 } => Self::TruncatedParetoOne {
                d1,
                x0: Some(x0.unwrap_or(d1)),
            },
            Self::DiscreteUniform { mut support } => {
                support.sort_by(f64::total_cmp);
                Self::DiscreteUniform { support }
            }
            Self::Mixture { components } => Self::Mixture {
                components: components
                    .into_iter()
                    .map(|c| MixtureComponent {
                        weight: c.weight,
                        dist: c.dist.normalized(),
                    })
                    .collect(),
            },
            other => other,
        }
    }

    fn tpo_cutoff(d1: f64, x0: Option<f64>) -> f64 {
        x0.unwrap_or(d1)
    }

    /// `P(Y ≤ x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            Self::Exponential { rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-rate * x).exp_m1()
                }
            }
            Self::Deterministic { value } => {
                if x >= *value {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Pareto { alpha, scale } => {
                if x < *scale {
                    0.0
                } else {
                    -(-alpha * (x / scale).ln()).exp_m1()
                }
            }
            Self::TruncatedParetoOne { d1, x0 } => {
                if x < Self::tpo_cutoff(*d1, *x0) {
                    0.0
                } else {
                    1.0 - d1 / x
                }
            }
            Self::Uniform { lo, hi } => {
                if x <= *lo {
                    0.0
                } else if x >= *hi {
                    1.0
                } else {
                    (x - lo) / (hi - lo)
                }
            }
            Self::DiscreteUniform { support } => {
                support.iter().filter(|v| **v <= x).count() as f64 / support.len() as f64
            }
            Self::Mixture { components } => components.iter().map(|c| c.weight * c.dist.cdf(x)).sum(),
        }
    }

    /// `P(Y > x)`, evaluated directly rather than as `1 - cdf`.
    pub fn tail(&self, x: f64) -> f64 {
        match self {
            Self::Exponential { rate } => {
                if x <= 0.0 {
                    1.0
                } else {
                    (-rate * x).exp()
                }
            }
            Self::Deterministic { value } => {
                if x < *value {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Pareto { alpha, scale } => {
                if x < *scale {
                    1.0
                } else {
                    (x / scale).powf(-alpha)
                }
            }
            Self::TruncatedParetoOne { d1, x0 } => {
                if x < Self::tpo_cutoff(*d1, *x0) {
                    1.0
                } else {
                    d1 / x
                }
            }
            Self::Uniform { lo, hi } => {
                if x <= *lo {
                    1.0
                } else if x >= *hi {
                    0.0
                } else {
                    (hi - x) / (hi - lo)
                }
            }
            Self::DiscreteUniform { support } => {
                support.iter().filter(|v| **v > x).count() as f64 / support.len() as f64
            }
            Self::Mixture { components } => components.iter().map(|c| c.weight * c.dist.tail(x)).sum(),
        }
    }

    /// Left limit of the cdf, `P(Y < x)`.
    pub fn cdf_left(&self, x: f64) -> f64 {
        match self {
            Self::Deterministic { value } => {
                if x > *value {
                    1.0
                } else {
                    0.0
                }
            }
            Self::TruncatedParetoOne { d1, x0 } => {
                if x <= Self::tpo_cutoff(*d1, *x0) {
                    0.0
                } else {
                    1.0 - d1 / x
                }
            }
            Self::DiscreteUniform { support } => {
                support.iter().filter(|v| **v < x).count() as f64 / support.len() as f64
            }
            Self::Mixture { components } => components.iter().map(|c| c.weight * c.dist.cdf_left(x)).sum(),
            _ => self.cdf(x),
        }
    }

    /// Generalized inverse `inf{x : cdf(x) ≥ p}` for `p ∈ (0, 1)`.
    pub fn quantile(&self, p: f64) -> Result<f64, DistError> {
        if !(p > 0.0 && p < 1.0) {
            return Err(DistError::ProbabilityOutOfRange(p));
        }
        Ok(self.lower_quantile(p))
    }

    fn lower_quantile(&self, p: f64) -> f64 {
        match self {
            Self::Exponential { rate } => -(-p).ln_1p() / rate,
            Self::DiscreteUniform { support } => discrete_search(support, |v| self.cdf(v) >= p),
            Self::Mixture { .. } => self.mixture_inverse(|x| self.cdf(x) >= p, |d| d.lower_quantile(p)),
            _ => self.upper_quantile(1.0 - p),
        }
    }

    /// `inf{x : tail(x) ≤ q}` for `q ∈ (0, 1)`: the quantile at level `1 - q`,
    /// computed without forming `1 - q` so that deep tails stay accurate.
    pub fn tail_quantile(&self, q: f64) -> Result<f64, DistError> {
        if !(q > 0.0 && q < 1.0) {
            return Err(DistError::ProbabilityOutOfRange(q));
        }
        Ok(self.upper_quantile(q))
    }

    fn upper_quantile(&self, q: f64) -> f64 {
        match self {
            Self::Exponential { rate } => -q.ln() / rate,
            Self::Deterministic { value } => *value,
            Self::Pareto { alpha, scale } => scale * q.powf(-1.0 / alpha),
            Self::TruncatedParetoOne { d1, x0 } => Self::tpo_cutoff(*d1, *x0).max(d1 / q),
            Self::Uniform { lo, hi } => (hi - q * (hi - lo)).max(*lo),
            Self::DiscreteUniform { support } => discrete_search(support, |v| self.tail(v) <= q),
            Self::Mixture { .. } => self.mixture_inverse(|x| self.tail(x) <= q, |d| d.upper_quantile(q)),
        }
    }

    fn mixture_inverse<P, Q>(&self, reached: P, component: Q) -> f64
    where
        P: Fn(f64) -> bool,
        Q: Fn(&DistributionSpec) -> f64,
    {
        let Self::Mixture { components } = self else {
            unreachable!("mixture_inverse on a non-mixture")
        };
        // the answer lies between the extreme component quantiles
        let qs: Vec<f64> = components
            .iter()
            .filter(|c| c.weight > 0.0)
            .map(|c| component(&c.dist))
            .collect();
        let mut lo = qs.iter().cloned().fold(f64::INFINITY, f64::min);
        let mut hi = qs.iter().cloned().fold(0.0, f64::max);
        if reached(lo) {
            return lo;
        }
        loop {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                return hi;
            }
            if reached(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    }

    /// One draw by inversion: `quantile(1 - U)` with `U` uniform on (0, 1).
    #[inline]
    pub fn sample(&self, stream: &mut RngStream) -> f64 {
        let u = stream.uniform();
        match self {
            // fast paths, identical to upper_quantile
            Self::Exponential { rate } => -u.ln() / rate,
            Self::Deterministic { value } => *value,
            Self::Pareto { alpha, scale } => scale * u.powf(-1.0 / alpha),
            _ => self.upper_quantile(u),
        }
    }

    /// `E Y`, infinite exactly when the integral diverges.
    pub fn mean(&self) -> Extended {
        match self {
            Self::Exponential { rate } => Extended::Finite(1.0 / rate),
            Self::Deterministic { value } => Extended::Finite(*value),
            Self::Pareto { alpha, scale } => {
                if *alpha > 1.0 {
                    Extended::Finite(alpha * scale / (alpha - 1.0))
                } else {
                    Extended::Infinite
                }
            }
            Self::TruncatedParetoOne { .. } => Extended::Infinite,
            Self::Uniform { lo, hi } => Extended::Finite(0.5 * (lo + hi)),
            Self::DiscreteUniform { support } => Extended::Finite(support.iter().sum::<f64>() / support.len() as f64),
            Self::Mixture { components } => {
                let mut total = 0.0;
                for c in components.iter().filter(|c| c.weight > 0.0) {
                    match c.dist.mean() {
                        Extended::Finite(m) => total += c.weight * m,
                        Extended::Infinite => return Extended::Infinite,
                    }
                }
                Extended::Finite(total)
            }
        }
    }

    /// `E min(Y, x) = ∫₀ˣ tail(u) du`, in closed form.
    pub fn truncated_mean(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match self {
            Self::Exponential { rate } => -(-rate * x).exp_m1() / rate,
            Self::Deterministic { value } => value.min(x),
            Self::Pareto { alpha, scale } => {
                if x <= *scale {
                    x
                } else if *alpha == 1.0 {
                    scale + scale * (x / scale).ln()
                } else {
                    // σ + σ/(1-α)·((x/σ)^(1-α) - 1)
                    let r = (x / scale).ln();
                    scale + scale * ((1.0 - alpha) * r).exp_m1() / (1.0 - alpha)
                }
            }
            Self::TruncatedParetoOne { d1, x0 } => {
                let c = Self::tpo_cutoff(*d1, *x0);
                if x <= c {
                    x
                } else {
                    c + d1 * (x / c).ln()
                }
            }
            Self::Uniform { lo, hi } => {
                if x <= *lo {
                    x
                } else if x >= *hi {
                    0.5 * (lo + hi)
                } else {
                    let w = hi - lo;
                    lo + (w * w - (hi - x) * (hi - x)) / (2.0 * w)
                }
            }
            Self::DiscreteUniform { support } => support.iter().map(|v| v.min(x)).sum::<f64>() / support.len() as f64,
            Self::Mixture { components } => components.iter().map(|c| c.weight * c.dist.truncated_mean(x)).sum(),
        }
    }

    /// `E min(Y, x)` by adaptive quadrature of the tail, split at the law's
    /// breakpoints. Cross-checks the closed forms.
    pub fn truncated_mean_quadrature(&self, x: f64, rel_tol: f64) -> Result<f64, DistError> {
        if x <= 0.0 {
            return Ok(0.0);
        }
        let mut points = vec![0.0];
        points.extend(self.breakpoints().into_iter().filter(|b| *b > 0.0 && *b < x));
        points.push(x);
        points.sort_by(f64::total_cmp);
        points.dedup();
        Ok(quad::integrate_pieces(|u| self.tail(u), &points, rel_tol)?)
    }

    /// Points where the cdf has an atom or a kink.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            Self::Exponential { .. } => vec![],
            Self::Deterministic { value } => vec![*value],
            Self::Pareto { scale, .. } => vec![*scale],
            Self::TruncatedParetoOne { d1, x0 } => vec![Self::tpo_cutoff(*d1, *x0)],
            Self::Uniform { lo, hi } => vec![*lo, *hi],
            Self::DiscreteUniform { support } => support.clone(),
            Self::Mixture { components } => {
                let mut v: Vec<f64> = components.iter().flat_map(|c| c.dist.breakpoints()).collect();
                v.sort_by(f64::total_cmp);
                v.dedup();
                v
            }
        }
    }

    /// Power-law tail index; `None` for light-tailed or bounded laws.
    pub fn tail_index(&self) -> Option<f64> {
        match self {
            Self::Pareto { alpha, .. } => Some(*alpha),
            Self::TruncatedParetoOne { .. } => Some(1.0),
            Self::Mixture { components } => components
                .iter()
                .filter(|c| c.weight > 0.0)
                .filter_map(|c| c.dist.tail_index())
                .reduce(f64::min),
            _ => None,
        }
    }

    /// Essential supremum; `None` when the support is unbounded.
    pub fn support_max(&self) -> Option<f64> {
        match self {
            Self::Deterministic { value } => Some(*value),
            Self::Uniform { hi, .. } => Some(*hi),
            Self::DiscreteUniform { support } => support.iter().cloned().reduce(f64::max),
            Self::Mixture { components } => {
                let mut m: f64 = 0.0;
                for c in components.iter().filter(|c| c.weight > 0.0) {
                    m = m.max(c.dist.support_max()?);
                }
                Some(m)
            }
            _ => None,
        }
    }

    /// `E g(Y)` by quadrature in the tail-probability variable
    /// (`Y = tail_quantile(e^{-z})`), exact sums for discrete laws.
    ///
    /// `g` must be finite on the support; values beyond `f64::MAX` contribute 0.
    pub fn expect(&self, g: &dyn Fn(f64) -> f64, rel_tol: f64) -> Result<f64, DistError> {
        match self {
            Self::Deterministic { value } => Ok(g(*value)),
            Self::DiscreteUniform { support } => Ok(support.iter().map(|v| g(*v)).sum::<f64>() / support.len() as f64),
            Self::Mixture { components } => {
                let mut total = 0.0;
                for c in components.iter().filter(|c| c.weight > 0.0) {
                    total += c.weight * c.dist.expect(g, rel_tol)?;
                }
                Ok(total)
            }
            Self::Uniform { lo, hi } => Ok(quad::integrate(g, *lo, *hi, rel_tol)? / (hi - lo)),
            Self::TruncatedParetoOne { d1, x0 } => {
                // atom of mass 1 - d1/x0 at the cutoff, then the d1/x tail
                let c = Self::tpo_cutoff(*d1, *x0);
                let atom = (1.0 - d1 / c) * g(c);
                let body = quad::integrate_half_line(
                    |z| {
                        let x = c * z.exp();
                        if x.is_finite() {
                            g(x) * (-z).exp()
                        } else {
                            0.0
                        }
                    },
                    rel_tol,
                )?;
                Ok(atom + d1 / c * body)
            }
            Self::Exponential { .. } | Self::Pareto { .. } => Ok(quad::integrate_half_line(
                |z| {
                    let q = (-z).exp();
                    if q == 0.0 {
                        return 0.0;
                    }
                    let x = self.upper_quantile(q);
                    if x.is_finite() {
                        g(x) * q
                    } else {
                        0.0
                    }
                },
                rel_tol,
            )?),
        }
    }

    /// Laplace transform `E exp(-μ Y)`; closed form where available.
    pub fn laplace(&self, mu: f64) -> Result<f64, DistError> {
        Ok(match self {
            Self::Exponential { rate } => rate / (rate + mu),
            Self::Deterministic { value } => (-mu * value).exp(),
            Self::Uniform { lo, hi } => ((-mu * lo).exp() - (-mu * hi).exp()) / (mu * (hi - lo)),
            Self::DiscreteUniform { support } => {
                support.iter().map(|v| (-mu * v).exp()).sum::<f64>() / support.len() as f64
            }
            Self::Mixture { components } => {
                let mut total = 0.0;
                for c in components.iter().filter(|c| c.weight > 0.0) {
                    total += c.weight * c.dist.laplace(mu)?;
                }
                total
            }
            Self::Pareto { .. } | Self::TruncatedParetoOne { .. } => self.expect(&|x| (-mu * x).exp(), 1e-12)?,
        })
    }
}

/// Smallest element of a sorted support satisfying a monotone predicate.
fn discrete_search<P: Fn(f64) -> bool>(support: &[f64], reached: P) -> f64 {
    let idx = support.partition_point(|v| !reached(*v));
    support[idx.min(support.len() - 1)]
}
