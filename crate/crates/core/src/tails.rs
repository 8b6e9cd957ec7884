//! Tail asymptotics of the stationary maximum dater.
//!
//! If `F̄(x) ~ δ e^{-μx}` then `P(X̃_∞ > x) ~ δ e^{-μx} Σ_n E e^{-μT_n}`, which
//! for iid inter-arrival times is `δ e^{-μx} / (1 - E e^{-μt})`. If
//! `F̄(x) ~ δ x^{-α}` with `α > 1` then `P(X̃_∞ > x) ~ δ x^{1-α} / (E t (α - 1))`.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{self, ClassifierConfig, Verdict};
use crate::dists::{DistError, DistributionSpec, Extended};
use crate::engine::ModelSpec;
use crate::loynes::{DivergenceCheck, LoynesError, StationarySampler};
use crate::rng::RngStream;
use crate::stats;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TailError {
    #[error("empirical tails need a positive recurrent model, classification gave {0:?}")]
    RefusedNonPositiveRecurrent(Verdict),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error(transparent)]
    Loynes(#[from] LoynesError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "regime", rename_all = "snake_case", deny_unknown_fields)]
pub enum TailRegime {
    ExpTail { delta: f64, mu: f64 },
    ParetoTail { delta: f64, alpha: f64 },
    NotApplicable,
}

impl TailRegime {
    /// Exact-family match on the service law.
    pub fn detect(service: &DistributionSpec) -> Self {
        match service {
            DistributionSpec::Exponential { rate } => Self::ExpTail { delta: 1.0, mu: *rate },
            DistributionSpec::Pareto { alpha, scale } if *alpha > 1.0 => Self::ParetoTail {
                delta: scale.powf(*alpha),
                alpha: *alpha,
            },
            _ => Self::NotApplicable,
        }
    }

    /// Predicted `P(X̃_∞ > x)`, or `None` when no formula applies.
    pub fn predict(&self, arrivals: &DistributionSpec, x: f64) -> Result<Option<f64>, TailError> {
        match *self {
            Self::ExpTail { delta, mu } => Ok(Some(exp_tail_prediction(arrivals, delta, mu, x)?)),
            Self::ParetoTail { delta, alpha } => Ok(Some(pareto_tail_prediction(arrivals.mean(), delta, alpha, x)?)),
            Self::NotApplicable => Ok(None),
        }
    }
}

/// `δ e^{-μx} / (1 - E e^{-μt})`.
pub fn exp_tail_prediction(arrivals: &DistributionSpec, delta: f64, mu: f64, x: f64) -> Result<f64, TailError> {
    if !(delta > 0.0 && mu > 0.0) {
        return Err(TailError::InvalidArgument(format!(
            "need δ > 0 and μ > 0, got δ={delta}, μ={mu}"
        )));
    }
    let laplace = arrivals.laplace(mu)?;
    Ok(delta * (-mu * x).exp() / (1.0 - laplace))
}

/// `δ x^{1-α} / (E t (α - 1))`, clamped to `[0, 1]`.
pub fn pareto_tail_prediction(mean_t: Extended, delta: f64, alpha: f64, x: f64) -> Result<f64, TailError> {
    if alpha <= 1.0 {
        return Err(TailError::InvalidArgument(format!("need α > 1, got {alpha}")));
    }
    let Extended::Finite(mean_t) = mean_t else {
        return Err(TailError::InvalidArgument("inter-arrival mean is infinite".into()));
    };
    Ok((delta / (mean_t * (alpha - 1.0)) * x.powf(1.0 - alpha)).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub regime: TailRegime,
    pub samples: usize,
    pub horizon: usize,
    pub grid: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predicted: Option<Vec<f64>>,
    pub empirical: Vec<f64>,
    /// Wilson 95% interval bounds.
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratio: Option<Vec<f64>>,
    /// Mean estimated probability mass missed by truncating at the horizon.
    pub mean_residual_bound: f64,
}

impl TailReport {
    /// Writes `x,predicted,empirical,lo,hi,ratio`; missing predictions stay empty.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "x,predicted,empirical,lo,hi,ratio")?;
        for i in 0..self.grid.len() {
            let opt = |v: &Option<Vec<f64>>| v.as_ref().map(|v| v[i].to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{}",
                self.grid[i],
                opt(&self.predicted),
                self.empirical[i],
                self.lo[i],
                self.hi[i],
                opt(&self.ratio)
            )?;
        }
        Ok(())
    }

    /// Relative width of the interval at grid point `i`, measured on the ratio scale.
    pub fn ratio_halfwidth(&self, i: usize) -> Option<f64> {
        let p = self.predicted.as_ref()?[i];
        Some(0.5 * (self.hi[i] - self.lo[i]) / p)
    }
}

/// Geometric grid between the empirical `1 - 10⁻²` and `1 - 10⁻⁴` quantiles.
pub fn default_grid(pilot: &[f64], points: usize) -> Vec<f64> {
    let mut sorted = pilot.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q = |p: f64| sorted[((p * sorted.len() as f64) as usize).min(sorted.len() - 1)];
    let (a, b) = (q(0.99).max(f64::MIN_POSITIVE), q(0.9999));
    if points < 2 || b <= a {
        return vec![a];
    }
    (0..points)
        .map(|k| a * (b / a).powf(k as f64 / (points - 1) as f64))
        .collect()
}

/// Empirical tail on stationary draws, refused unless the model classifies
/// as positive recurrent.
pub fn empirical_tail(
    m: &ModelSpec,
    regime: TailRegime,
    grid: &[f64],
    samples: usize,
    horizon: usize,
    classifier: &ClassifierConfig,
    stream: &mut RngStream,
) -> Result<TailReport, TailError> {
    let verdict = classify::classify(m, classifier, stream).verdict;
    if verdict != Verdict::PositiveRecurrent {
        return Err(TailError::RefusedNonPositiveRecurrent(verdict));
    }
    if grid.is_empty() || samples == 0 {
        return Err(TailError::InvalidArgument("empty grid or no samples".into()));
    }
    let sampler = StationarySampler::new(m, horizon, &DivergenceCheck::default(), stream)?;
    let draws = sampler.samples(samples, stream);
    let mut values: Vec<f64> = draws.iter().map(|d| d.value).collect();
    values.sort_by(f64::total_cmp);
    let mean_residual_bound = draws.iter().map(|d| d.residual_bound).sum::<f64>() / samples as f64;

    let n = samples as u64;
    let mut empirical = Vec::with_capacity(grid.len());
    let mut lo = Vec::with_capacity(grid.len());
    let mut hi = Vec::with_capacity(grid.len());
    for &x in grid {
        let above = (values.len() - values.partition_point(|v| *v <= x)) as u64;
        let (l, h) = stats::wilson(above, n, stats::Z95);
        empirical.push(above as f64 / n as f64);
        lo.push(l);
        hi.push(h);
    }
    let predicted: Option<Vec<f64>> = grid
        .iter()
        .map(|x| regime.predict(&m.interarrival, *x))
        .collect::<Result<Option<Vec<f64>>, _>>()?;
    let ratio = predicted
        .as_ref()
        .map(|p| empirical.iter().zip(p).map(|(e, p)| e / p).collect());
    Ok(TailReport {
        regime,
        samples,
        horizon,
        grid: grid.to_vec(),
        predicted,
        empirical,
        lo,
        hi,
        ratio,
        mean_residual_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dists::DistributionSpec as D;

    #[test]
    fn exp_prediction_examples() {
        let e = D::exponential(1.0).unwrap();
        for x in [0.5, 2.0, 7.0] {
            let p = exp_tail_prediction(&e, 1.0, 1.0, x).unwrap();
            assert!((p - 2.0 * (-x).exp()).abs() < 1e-15);
        }
        let d = D::deterministic(1.0).unwrap();
        let p = exp_tail_prediction(&d, 1.0, 1.0, 3.0).unwrap();
        assert!((p - (-3.0f64).exp() / (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        // geometric series Σ φ^n summed directly
        let phi: f64 = 1.0 / 3.0;
        let direct: f64 = (0..200).map(|n| phi.powi(n)).sum();
        let p = exp_tail_prediction(&e, 0.5, 2.0, 1.0).unwrap();
        assert!((p - 0.5 * (-2.0f64).exp() * direct).abs() < 1e-15);
        let big = exp_tail_prediction(&e, 1.0, 1e6, 1e-6).unwrap();
        assert!((big - (-1.0f64).exp()).abs() < 1e-5);
    }

    #[test]
    fn pareto_prediction_examples() {
        let p = pareto_tail_prediction(Extended::Finite(1.0), 1.0, 2.5, 100.0).unwrap();
        assert!((p - 6.6667e-4).abs() < 1e-8);
        let p = pareto_tail_prediction(Extended::Finite(2.0), 1.0, 2.0, 10.0).unwrap();
        assert!((p - 0.05).abs() < 1e-15);
        assert!(pareto_tail_prediction(Extended::Finite(1.0), 1.0, 1.0, 2.0).is_err());
        assert!(pareto_tail_prediction(Extended::Infinite, 1.0, 2.0, 2.0).is_err());
        let xs = [10.0, 1e3, 1e6, 1e12];
        let ps: Vec<f64> = xs
            .iter()
            .map(|x| pareto_tail_prediction(Extended::Finite(1.0), 1.0, 1.5, *x).unwrap())
            .collect();
        assert!(ps.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn regime_detection() {
        assert_eq!(
            TailRegime::detect(&D::exponential(2.0).unwrap()),
            TailRegime::ExpTail { delta: 1.0, mu: 2.0 }
        );
        assert_eq!(
            TailRegime::detect(&D::pareto(2.5, 2.0).unwrap()),
            TailRegime::ParetoTail {
                delta: 2f64.powf(2.5),
                alpha: 2.5
            }
        );
        assert_eq!(
            TailRegime::detect(&D::pareto(0.5, 1.0).unwrap()),
            TailRegime::NotApplicable
        );
    }

    fn quick() -> ClassifierConfig {
        ClassifierConfig {
            n_max: 10_000,
            tail_reps: 100,
            series_reps: 100,
            ..Default::default()
        }
    }

    #[test]
    fn discrete_uniform_empirical_tail() {
        let m = ModelSpec::new(
            D::deterministic(1.0).unwrap(),
            D::discrete_uniform(vec![1.0, 2.0, 3.0]).unwrap(),
        );
        let regime = TailRegime::detect(&m.service);
        assert_eq!(regime, TailRegime::NotApplicable);
        let r = empirical_tail(&m, regime, &[2.0], 20_000, 10, &quick(), &mut RngStream::from_seed(0)).unwrap();
        assert!(r.predicted.is_none());
        let se = (1.0f64 / 3.0 * 2.0 / 3.0 / 20_000.0).sqrt();
        assert!((r.empirical[0] - 1.0 / 3.0).abs() < 3.0 * se, "{}", r.empirical[0]);
    }

    #[test]
    fn refuses_non_positive_recurrent() {
        let m = ModelSpec::new(
            D::deterministic(1.0).unwrap(),
            D::truncated_pareto_one(2.0, 2.0).unwrap(),
        );
        let r = empirical_tail(
            &m,
            TailRegime::NotApplicable,
            &[1.0],
            10,
            10,
            &quick(),
            &mut RngStream::from_seed(0),
        );
        assert!(matches!(
            r,
            Err(TailError::RefusedNonPositiveRecurrent(Verdict::Transient))
        ));
    }

    #[test]
    fn grid_spans_upper_quantiles() {
        let pilot: Vec<f64> = (1..=10_000).map(|i| i as f64).collect();
        let g = default_grid(&pilot, 5);
        assert_eq!(g.len(), 5);
        assert_eq!(g[0], 9901.0);
        assert!((g[4] - 10_000.0).abs() < 1e-9);
    }
}
