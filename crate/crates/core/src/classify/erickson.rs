//! Drift of the random walk `Γ_n = Σ (s_j - t_{j+1})` behind the single-server queue.
//!
//! With `m₋(x) = E min(t, x)` and `m₊(x) = E min(s, x)`, Erickson's
//! integrals reduce to `J₊ = E[s/m₋(s)]` and `J₋ = E[t/m₊(t)]`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dists::{DistError, DistributionSpec, Extended};
use crate::engine::ModelSpec;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EricksonError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Quadrature(#[from] DistError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WalkVerdict {
    DriftPlusInfinity,
    DriftMinusInfinity,
    Oscillates,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub lo: Extended,
    pub hi: Extended,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EricksonReport {
    pub j_plus: Extended,
    pub j_minus: Extended,
    pub walk_verdict: WalkVerdict,
    /// `E N(s₁)` between `J₊ - 1` and `2J₊ - 1`.
    pub en_s1: Bracket,
    pub mean_abs_xi_finite: bool,
    /// Whether the single-server waiting time is positive recurrent.
    pub single_server_positive_recurrent: bool,
}

/// Power-law index of the tail; `f64::INFINITY` for light or bounded tails.
fn index(d: &DistributionSpec) -> f64 {
    d.tail_index().unwrap_or(f64::INFINITY)
}

/// `E[a/m(a)]` with `m(x) = E min(b, x)` is finite iff the index of `a`
/// exceeds `min(index of b, 1)`.
fn ratio_finite(a: &DistributionSpec, b: &DistributionSpec) -> bool {
    index(a) > index(b).min(1.0)
}

fn ratio_mean(a: &DistributionSpec, b: &DistributionSpec, tol: f64) -> Result<Extended, DistError> {
    if !ratio_finite(a, b) {
        return Ok(Extended::Infinite);
    }
    Ok(Extended::Finite(a.expect(&|x| x / b.truncated_mean(x), tol)?))
}

/// `J₊ = E[s₁/m₋(s₁)]` (infinite when it diverges).
pub fn j_plus(m: &ModelSpec, tol: f64) -> Result<Extended, DistError> {
    ratio_mean(&m.service, &m.interarrival, tol)
}

/// `J₋ = E[t₁/m₊(t₁)]` (infinite when it diverges).
pub fn j_minus(m: &ModelSpec, tol: f64) -> Result<Extended, DistError> {
    ratio_mean(&m.interarrival, &m.service, tol)
}

/// `P(a > b) > 0` for independent `a`, `b`.
fn can_exceed(a: &DistributionSpec, b: &DistributionSpec) -> bool {
    match a.support_max() {
        Some(top) => b.cdf_left(top) > 0.0,
        None => true,
    }
}

pub fn erickson(m: &ModelSpec, quad_tol: f64) -> Result<EricksonReport, EricksonError> {
    if !can_exceed(&m.service, &m.interarrival) {
        return Err(EricksonError::Precondition("P(s₁ > t₁) = 0".into()));
    }
    if !can_exceed(&m.interarrival, &m.service) {
        return Err(EricksonError::Precondition("P(s₁ < t₁) = 0".into()));
    }
    let j_plus = j_plus(m, quad_tol)?;
    let j_minus = j_minus(m, quad_tol)?;
    let (mean_s, mean_t) = (m.service.mean(), m.interarrival.mean());
    let mean_abs_xi_finite = mean_s.is_finite() && mean_t.is_finite();
    let walk_verdict = if mean_abs_xi_finite {
        let drift = mean_s.to_f64() - mean_t.to_f64();
        if drift < 0.0 {
            WalkVerdict::DriftMinusInfinity
        } else if drift > 0.0 {
            WalkVerdict::DriftPlusInfinity
        } else {
            WalkVerdict::Oscillates
        }
    } else {
        match (j_plus.is_finite(), j_minus.is_finite()) {
            (true, false) => WalkVerdict::DriftMinusInfinity,
            (false, true) => WalkVerdict::DriftPlusInfinity,
            (false, false) => WalkVerdict::Oscillates,
            (true, true) => unreachable!("J₊ + J₋ = ∞ when E|ξ| = ∞"),
        }
    };
    let en_s1 = match j_plus {
        Extended::Finite(j) => Bracket {
            lo: Extended::Finite((j - 1.0).max(0.0)),
            hi: Extended::Finite(2.0 * j - 1.0),
        },
        Extended::Infinite => Bracket {
            lo: Extended::Infinite,
            hi: Extended::Infinite,
        },
    };
    let single_server_positive_recurrent = if mean_abs_xi_finite {
        mean_s.to_f64() < mean_t.to_f64()
    } else {
        walk_verdict == WalkVerdict::DriftMinusInfinity
    };
    Ok(EricksonReport {
        j_plus,
        j_minus,
        walk_verdict,
        en_s1,
        mean_abs_xi_finite,
        single_server_positive_recurrent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dists::DistributionSpec as D;

    fn pp(alpha: f64, beta: f64) -> ModelSpec {
        ModelSpec::new(D::pareto(beta, 1.0).unwrap(), D::pareto(alpha, 1.0).unwrap())
    }

    #[test]
    fn pareto_pareto_verdicts() {
        let r = erickson(&pp(0.8, 0.5), 1e-9).unwrap();
        assert!(r.j_plus.is_finite());
        assert!(!r.j_minus.is_finite());
        assert_eq!(r.walk_verdict, WalkVerdict::DriftMinusInfinity);
        assert!(r.single_server_positive_recurrent);
        let r = erickson(&pp(0.5, 0.8), 1e-9).unwrap();
        assert!(!r.j_plus.is_finite());
        assert!(r.j_minus.is_finite());
        assert_eq!(r.walk_verdict, WalkVerdict::DriftPlusInfinity);
        let r = erickson(&pp(0.6, 0.6), 1e-9).unwrap();
        assert_eq!(r.walk_verdict, WalkVerdict::Oscillates);
    }

    #[test]
    fn finite_means_use_drift_sign() {
        let m = ModelSpec::new(D::exponential(1.0).unwrap(), D::exponential(2.0).unwrap());
        let r = erickson(&m, 1e-9).unwrap();
        assert!(r.mean_abs_xi_finite);
        assert!(r.j_plus.is_finite() && r.j_minus.is_finite());
        assert_eq!(r.walk_verdict, WalkVerdict::DriftMinusInfinity);
        assert!(r.single_server_positive_recurrent);
    }

    #[test]
    fn exponential_j_plus_closed_form() {
        // s ~ Exp(1), t = 1: m₋(x) = min(x, 1), J₊ = E max(s, 1) = 1 + e^{-1}
        let m = ModelSpec::new(D::deterministic(1.0).unwrap(), D::exponential(1.0).unwrap());
        let j = j_plus(&m, 1e-10).unwrap().to_f64();
        assert!((j - (1.0 + (-1.0f64).exp())).abs() < 1e-8, "{j}");
    }

    #[test]
    fn deterministic_arrivals_infinite_service_mean() {
        let m = ModelSpec::new(
            D::deterministic(1.0).unwrap(),
            D::truncated_pareto_one(0.5, 0.5).unwrap(),
        );
        let r = erickson(&m, 1e-9).unwrap();
        assert_eq!(r.j_plus, Extended::Infinite);
        assert_eq!(r.en_s1.lo, Extended::Infinite);
        assert_eq!(r.walk_verdict, WalkVerdict::DriftPlusInfinity);
        assert!(!r.single_server_positive_recurrent);
    }

    #[test]
    fn precondition() {
        let m = ModelSpec::new(D::deterministic(3.0).unwrap(), D::uniform(0.5, 2.0).unwrap());
        assert!(matches!(erickson(&m, 1e-9), Err(EricksonError::Precondition(_))));
    }
}
