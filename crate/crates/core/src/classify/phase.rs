//! Closed-form phase diagrams for the solved model families.

use serde::{Deserialize, Serialize};

use super::Verdict;
use crate::dists::DistributionSpec;
use crate::engine::ModelSpec;

/// What the matched pattern asserts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Claim {
    Transient,
    NullRecurrent,
    PositiveRecurrent,
    /// Positive recurrence excluded; transient vs null recurrent left open.
    NotPositiveRecurrent,
}

impl Claim {
    pub fn verdict(self) -> Verdict {
        match self {
            Self::Transient => Verdict::Transient,
            Self::NullRecurrent => Verdict::NullRecurrent,
            Self::PositiveRecurrent => Verdict::PositiveRecurrent,
            Self::NotPositiveRecurrent => Verdict::Inconclusive,
        }
    }

    /// Whether `v` is compatible with the claim.
    pub fn admits(self, v: Verdict) -> bool {
        match self {
            Self::NotPositiveRecurrent => v != Verdict::PositiveRecurrent,
            _ => v == self.verdict(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticFinding {
    pub claim: Claim,
    pub pattern: String,
}

/// Power-law service index for Pareto and `d1/x` tails.
fn service_index(d: &DistributionSpec) -> Option<f64> {
    match d {
        DistributionSpec::Pareto { alpha, .. } => Some(*alpha),
        DistributionSpec::TruncatedParetoOne { .. } => Some(1.0),
        _ => None,
    }
}

/// `d1` when the service tail is exactly `d1/x` far out.
fn unit_index_coefficient(d: &DistributionSpec) -> Option<f64> {
    match d {
        DistributionSpec::TruncatedParetoOne { d1, .. } => Some(*d1),
        DistributionSpec::Pareto { alpha, scale } if *alpha == 1.0 => Some(*scale),
        _ => None,
    }
}

/// Matches the model against the solved cases, most specific first.
pub fn match_phase(m: &ModelSpec) -> Option<AnalyticFinding> {
    let found = |claim, pattern: String| Some(AnalyticFinding { claim, pattern });

    if let DistributionSpec::Deterministic { value: r } = m.interarrival {
        if let Some(d1) = unit_index_coefficient(&m.service) {
            let claim = if d1 > r { Claim::Transient } else { Claim::NullRecurrent };
            return found(
                claim,
                format!("deterministic arrivals r={r}, service tail d1/x with d1={d1}"),
            );
        }
        if let DistributionSpec::Pareto { alpha, .. } = m.service {
            let claim = if alpha < 1.0 {
                Claim::Transient
            } else {
                Claim::PositiveRecurrent
            };
            return found(
                claim,
                format!("deterministic arrivals r={r}, Pareto service alpha={alpha}"),
            );
        }
    }

    if let (Some(alpha), DistributionSpec::Pareto { alpha: beta, .. }) = (service_index(&m.service), &m.interarrival) {
        let beta = *beta;
        if alpha < 2.0 && beta < 2.0 {
            // T_n grows like n^{1/β} for β < 1 and linearly for β > 1
            let growth = beta.min(1.0);
            let pattern = format!("Pareto-type service alpha={alpha}, Pareto arrivals beta={beta}");
            if beta != 1.0 && alpha > growth {
                return found(Claim::PositiveRecurrent, pattern);
            }
            if beta != 1.0 && alpha < growth {
                return found(Claim::NotPositiveRecurrent, pattern);
            }
        }
    }

    if m.service.mean().is_finite() && m.interarrival.mean().is_finite() {
        return found(
            Claim::PositiveRecurrent,
            "finite service and inter-arrival means".into(),
        );
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dists::DistributionSpec as D;

    fn claim(t: D, s: D) -> Option<Claim> {
        match_phase(&ModelSpec::new(t, s)).map(|f| f.claim)
    }

    #[test]
    fn deterministic_arrival_cases() {
        let det = || D::deterministic(1.0).unwrap();
        assert_eq!(claim(det(), D::pareto(0.5, 1.0).unwrap()), Some(Claim::Transient));
        assert_eq!(
            claim(det(), D::pareto(1.5, 1.0).unwrap()),
            Some(Claim::PositiveRecurrent)
        );
        assert_eq!(
            claim(det(), D::truncated_pareto_one(1.0, 1.0).unwrap()),
            Some(Claim::NullRecurrent)
        );
        assert_eq!(
            claim(det(), D::truncated_pareto_one(0.5, 0.5).unwrap()),
            Some(Claim::NullRecurrent)
        );
        assert_eq!(
            claim(det(), D::truncated_pareto_one(2.0, 2.0).unwrap()),
            Some(Claim::Transient)
        );
        assert_eq!(claim(det(), D::pareto(1.0, 3.0).unwrap()), Some(Claim::Transient));
    }

    #[test]
    fn pareto_pareto_diagram() {
        let p = |a| D::pareto(a, 1.0).unwrap();
        assert_eq!(claim(p(0.5), p(0.8)), Some(Claim::PositiveRecurrent));
        assert_eq!(claim(p(0.8), p(0.5)), Some(Claim::NotPositiveRecurrent));
        assert_eq!(claim(p(0.7), p(0.7)), None);
        assert_eq!(claim(p(1.5), p(0.8)), Some(Claim::NotPositiveRecurrent));
        assert_eq!(claim(p(1.8), p(1.2)), Some(Claim::PositiveRecurrent));
        assert_eq!(claim(p(1.2), p(1.8)), Some(Claim::PositiveRecurrent));
    }

    #[test]
    fn finite_means() {
        let e = || D::exponential(1.0).unwrap();
        assert_eq!(claim(e(), e()), Some(Claim::PositiveRecurrent));
        assert_eq!(claim(e(), D::pareto(0.5, 1.0).unwrap()), None);
    }
}
