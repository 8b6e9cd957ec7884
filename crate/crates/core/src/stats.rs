//! Small statistical helpers shared by the Monte Carlo experiments.

use serde::{Deserialize, Serialize};

/// Two-sided normal quantile for 95% intervals.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Asymptotic Kolmogorov critical coefficient `c(α) = sqrt(-ln(α/2)/2)`.
pub fn kolmogorov_coefficient(alpha: f64) -> f64 {
    (-0.5 * (alpha / 2.0).ln()).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub critical: f64,
}

impl KsResult {
    pub fn passes(&self) -> bool {
        self.statistic <= self.critical
    }
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Two-sample Kolmogorov–Smirnov statistic with its critical value at level `alpha`.
///
/// Ties across samples are handled by advancing through equal values in both
/// samples before comparing the empirical cdfs.
pub fn ks_two_sample(a: &[f64], b: &[f64], alpha: f64) -> KsResult {
    assert!(!a.is_empty() && !b.is_empty());
    let (a, b) = (sorted(a), sorted(b));
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    KsResult {
        statistic: d,
        critical: kolmogorov_coefficient(alpha) * ((n + m) / (n * m)).sqrt(),
    }
}

/// One-sample KS statistic against a cdf given with its left limit.
///
/// For laws with atoms the asymptotic critical value is conservative.
pub fn ks_one_sample<F, G>(sample: &[f64], cdf: F, cdf_left: G, alpha: f64) -> KsResult
where
    F: Fn(f64) -> f64,
    G: Fn(f64) -> f64,
{
    assert!(!sample.is_empty());
    let s = sorted(sample);
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < s.len() {
        let x = s[i];
        let below = i as f64 / n;
        while i < s.len() && s[i] <= x {
            i += 1;
        }
        let at = i as f64 / n;
        d = d.max(at - cdf(x)).max(cdf_left(x) - below);
    }
    KsResult {
        statistic: d,
        critical: kolmogorov_coefficient(alpha) / n.sqrt(),
    }
}

/// Wilson score interval for a binomial proportion.
pub fn wilson(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Sample mean with a normal-theory confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub lo: f64,
    pub hi: f64,
}

pub fn mean_estimate(values: &[f64]) -> MeanEstimate {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let std_error = (var / n).sqrt();
    MeanEstimate {
        mean,
        std_error,
        lo: mean - Z95 * std_error,
        hi: mean + Z95 * std_error,
    }
}

/// Least-squares slope of `ln y` against `ln x` over points with positive coordinates.
///
/// Returns `None` if fewer than two usable points remain.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0 && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

/// Median of a non-empty slice.
pub fn median(values: &[f64]) -> f64 {
    let s = sorted(values);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kolmogorov_99() {
        assert!((kolmogorov_coefficient(0.01) - 1.6276).abs() < 1e-4);
    }

    #[test]
    fn ks_identical_samples() {
        let a: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let r = ks_two_sample(&a, &a, 0.01);
        assert_eq!(r.statistic, 0.0);
    }

    #[test]
    fn ks_disjoint_samples() {
        let a = [1.0, 2.0, 3.0];
        let b = [4.0, 5.0];
        assert_eq!(ks_two_sample(&a, &b, 0.01).statistic, 1.0);
    }

    #[test]
    fn ks_one_sample_point_mass() {
        let r = ks_one_sample(
            &[2.0; 50],
            |x| if x >= 2.0 { 1.0 } else { 0.0 },
            |x| if x > 2.0 { 1.0 } else { 0.0 },
            0.01,
        );
        assert_eq!(r.statistic, 0.0);
    }

    #[test]
    fn wilson_contains_proportion() {
        let (lo, hi) = wilson(30, 100, Z95);
        assert!(lo < 0.3 && hi > 0.3);
        let (lo, hi) = wilson(0, 100, Z95);
        assert!(lo.abs() < 1e-12);
        assert!(hi > 0.0 && hi < 0.05);
    }

    #[test]
    fn slope_of_power_law() {
        let xs: Vec<f64> = (1..20).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x.powf(-1.5)).collect();
        assert!((loglog_slope(&xs, &ys).unwrap() + 1.5).abs() < 1e-12);
    }
}
