//! Backward (Loynes) construction of the stationary maximum dater.
//!
//! Looking back from time 0 with reversed drivers `s̃_j = s_{-j}`,
//! `t̃_j = t_{-j}`, the stationary value is
//! `X̃_∞ = max(0, sup_{j≥1} (s̃_j - T̃_{j-1}))` with `T̃_0 = 0` and
//! `T̃_j = t̃_1 + … + t̃_j`. Truncating the supremum at a horizon `N` gives
//! `X̃_N`, which is non-decreasing in `N`.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{self, ModelSpec};
use crate::rng::RngStream;
use crate::stats;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LoynesError {
    #[error(
        "divergence suspected: running maximum still increasing in the last {window:.0}% of horizon {horizon} \
         for {fraction:.2} of the pilot batch"
    )]
    DivergenceSuspected { horizon: usize, window: f64, fraction: f64 },
}

/// Thresholds of the divergence pilot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DivergenceCheck {
    pub pilot_reps: usize,
    /// Trailing fraction of the horizon inspected for new maxima.
    pub window_fraction: f64,
    /// Fraction of pilot runs with a late new maximum that trips the check.
    pub trip_fraction: f64,
}

impl Default for DivergenceCheck {
    fn default() -> Self {
        Self {
            pilot_reps: 100,
            window_fraction: 0.5,
            trip_fraction: 0.25,
        }
    }
}

/// `X̃_1..X̃_N` with the terms `s̃_j - T̃_{j-1}` that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackwardSample {
    pub horizon: usize,
    pub values: Vec<f64>,
    pub terms: Vec<f64>,
    /// Estimated probability that a term beyond the horizon exceeds `X̃_N`;
    /// only known when the service law is.
    pub residual_bound: Option<f64>,
}

impl BackwardSample {
    pub fn last(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }
}

/// Running maxima of `s̃_j - T̃_{j-1}` for `j = 1..=n` in one pass.
///
/// `s_rev[j-1]` and `t_rev[j-1]` hold `s̃_j` and `t̃_j`.
pub fn backward_maxdater(s_rev: &[f64], t_rev: &[f64], n: usize) -> BackwardSample {
    assert!(
        n <= s_rev.len() && n <= t_rev.len(),
        "horizon exceeds the driver sequences"
    );
    let mut values = Vec::with_capacity(n);
    let mut terms = Vec::with_capacity(n);
    let (mut elapsed, mut best) = (0.0, 0.0f64);
    for j in 0..n {
        let term = s_rev[j] - elapsed;
        best = best.max(term);
        terms.push(term);
        values.push(best);
        elapsed += t_rev[j];
    }
    BackwardSample {
        horizon: n,
        values,
        terms,
        residual_bound: None,
    }
}

/// Draws `n` reversed driver pairs from `model` and runs the backward construction.
pub fn backward_sample(model: &ModelSpec, n: usize, stream: &mut RngStream) -> BackwardSample {
    let mut s = Vec::with_capacity(n);
    let mut t = Vec::with_capacity(n);
    for _ in 0..n {
        let (tj, sj) = model.draw(stream);
        s.push(sj);
        t.push(tj);
    }
    backward_maxdater(&s, &t, n)
}

/// One stationary draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationaryDraw {
    pub value: f64,
    pub residual_bound: f64,
    /// Backward steps taken (exceeds the horizon only for exact bounded-service draws).
    pub steps: usize,
    pub exact: bool,
}

/// Sampler of `X̃_N` with a one-off divergence pilot.
#[derive(Debug, Clone)]
pub struct StationarySampler {
    model: ModelSpec,
    horizon: usize,
    service_bound: Option<f64>,
    probes: Vec<usize>,
}

impl StationarySampler {
    /// Prepares a sampler; for unbounded service laws a pilot batch checks
    /// that the running maximum has settled by the end of the horizon.
    pub fn new(
        model: &ModelSpec,
        horizon: usize,
        check: &DivergenceCheck,
        stream: &mut RngStream,
    ) -> Result<Self, LoynesError> {
        assert!(horizon >= 1);
        let service_bound = model.service.support_max();
        let pilot = stream.fork();
        if service_bound.is_none() && check.pilot_reps > 0 {
            let late_start = ((1.0 - check.window_fraction) * horizon as f64).floor() as usize;
            let late: usize = (0..check.pilot_reps as u64)
                .into_par_iter()
                .map(|i| {
                    let mut s = pilot.stream(i);
                    usize::from(late_record(model, horizon, late_start, &mut s))
                })
                .sum();
            let fraction = late as f64 / check.pilot_reps as f64;
            if fraction >= check.trip_fraction {
                return Err(LoynesError::DivergenceSuspected {
                    horizon,
                    window: 100.0 * check.window_fraction,
                    fraction,
                });
            }
        }
        Ok(Self {
            model: model.clone(),
            horizon,
            service_bound,
            probes: probe_indices(horizon),
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn is_exact(&self) -> bool {
        self.service_bound.is_some()
    }

    /// Draws `X̃_N`, or the exact `X̃_∞` when service times are bounded.
    pub fn sample(&self, stream: &mut RngStream) -> StationaryDraw {
        match self.service_bound {
            Some(bound) => self.sample_bounded(bound, stream),
            None => self.sample_truncated(stream),
        }
    }

    fn sample_bounded(&self, bound: f64, stream: &mut RngStream) -> StationaryDraw {
        // once T̃_{j-1} ≥ sup s every later term is ≤ 0
        let (mut elapsed, mut best, mut steps) = (0.0, 0.0f64, 0usize);
        while elapsed < bound {
            let (t, s) = self.model.draw(stream);
            best = best.max(s - elapsed);
            elapsed += t;
            steps += 1;
        }
        StationaryDraw {
            value: best,
            residual_bound: 0.0,
            steps,
            exact: true,
        }
    }

    fn sample_truncated(&self, stream: &mut RngStream) -> StationaryDraw {
        let n = self.horizon;
        let (mut elapsed, mut best) = (0.0, 0.0f64);
        let mut probe_tails = Vec::with_capacity(self.probes.len());
        let mut next_probe = 0;
        for j in 1..=n {
            let (t, s) = self.model.draw(stream);
            best = best.max(s - elapsed);
            elapsed += t;
            if next_probe < self.probes.len() && self.probes[next_probe] == j {
                probe_tails.push(self.model.service.tail(elapsed));
                next_probe += 1;
            }
        }
        StationaryDraw {
            value: best,
            residual_bound: residual_estimate(&self.probes, &probe_tails, n),
            steps: n,
            exact: false,
        }
    }

    /// `count` independent draws, replication-parallel and schedule-independent.
    pub fn samples(&self, count: usize, stream: &mut RngStream) -> Vec<StationaryDraw> {
        let reps = stream.fork();
        (0..count as u64)
            .into_par_iter()
            .map(|i| self.sample(&mut reps.stream(i)))
            .collect()
    }
}

fn late_record(model: &ModelSpec, horizon: usize, late_start: usize, stream: &mut RngStream) -> bool {
    let (mut elapsed, mut best) = (0.0, 0.0f64);
    let mut late = false;
    for j in 1..=horizon {
        let (t, s) = model.draw(stream);
        let term = s - elapsed;
        if term > best {
            best = term;
            if j > late_start {
                late = true;
            }
        }
        elapsed += t;
    }
    late
}

/// Log-spaced indices in `[N/2, N]` where `F̄(T̃_j)` is recorded.
fn probe_indices(n: usize) -> Vec<usize> {
    let lo = (n / 2).max(1);
    let mut v: Vec<usize> = (0..16)
        .map(|k| {
            let f = k as f64 / 15.0;
            ((lo as f64) * ((n as f64) / lo as f64).powf(f)).round() as usize
        })
        .map(|j| j.clamp(1, n))
        .collect();
    v.dedup();
    v
}

/// Extrapolates `Σ_{j>N} F̄(T̃_j)` from a log-log fit over the probes.
fn residual_estimate(js: &[usize], tails: &[f64], n: usize) -> f64 {
    if tails.iter().all(|v| *v == 0.0) {
        return 0.0;
    }
    let xs: Vec<f64> = js.iter().map(|j| *j as f64).collect();
    let Some(slope) = stats::loglog_slope(&xs, tails) else {
        return tails.last().copied().unwrap_or(1.0).min(1.0);
    };
    if slope >= -1.0 {
        return 1.0;
    }
    // anchor the fitted power law at the last positive probe
    let (j_last, f_last) = js
        .iter()
        .zip(tails)
        .rev()
        .find(|(_, f)| **f > 0.0)
        .map(|(j, f)| (*j as f64, *f))
        .expect("some probe is positive");
    let n = n as f64;
    let log_residual = f_last.ln() + slope * (n / j_last).ln() + n.ln() - (-slope - 1.0).ln();
    if log_residual.is_nan() {
        return 1.0;
    }
    log_residual.exp().clamp(0.0, 1.0)
}

/// One stationary draw at the given horizon (pilot included).
pub fn stationary_sample(
    model: &ModelSpec,
    horizon: usize,
    stream: &mut RngStream,
) -> Result<StationaryDraw, LoynesError> {
    let sampler = StationarySampler::new(model, horizon, &DivergenceCheck::default(), stream)?;
    Ok(sampler.sample(stream))
}

/// Consecutive values `X*_j` of the stationary solution over a shared driver
/// sequence, each built from the `back_horizon` preceding drivers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryWindow {
    pub values: Vec<f64>,
    /// `s_j` and `t_j` for the window indices.
    pub s: Vec<f64>,
    pub t: Vec<f64>,
    /// Whether the entry's construction settled within the first half of the
    /// look-back (its value is unchanged by the older half).
    pub coupled: Vec<bool>,
}

impl StationaryWindow {
    /// Indices `i` where `values[i+1] = max(values[i] - t[i+1], s[i+1])` fails
    /// although entry `i` is coupled.
    pub fn recursion_violations(&self) -> Vec<usize> {
        (0..self.values.len().saturating_sub(1))
            .filter(|&i| self.coupled[i])
            .filter(|&i| self.values[i + 1] != engine::maxdater_step(self.values[i], self.t[i + 1], self.s[i + 1]))
            .collect()
    }
}

/// Builds `X*_j = max_{0≤k≤B} (s_{j-k} - Σ_{ℓ=j-k+1}^{j} t_ℓ)` for `width`
/// consecutive `j`.
///
/// The maximum is evaluated in nested form, oldest term first, so overlapping
/// windows share their rounding and the recursion identity can be checked
/// exactly on coupled entries.
pub fn stationary_window(
    model: &ModelSpec,
    width: usize,
    back_horizon: usize,
    check: &DivergenceCheck,
    stream: &mut RngStream,
) -> Result<StationaryWindow, LoynesError> {
    assert!(width >= 2 && back_horizon >= 2);
    StationarySampler::new(model, back_horizon, check, stream)?;
    let total = back_horizon + width;
    let mut s = Vec::with_capacity(total);
    let mut t = Vec::with_capacity(total);
    for _ in 0..total {
        let (tj, sj) = model.draw(stream);
        s.push(sj);
        t.push(tj);
    }
    let nested = |j: usize, depth: usize| {
        let mut v = s[j - depth];
        for i in j - depth + 1..=j {
            v = engine::maxdater_step(v, t[i], s[i]);
        }
        v
    };
    let half = back_horizon / 2;
    let mut values = Vec::with_capacity(width);
    let mut coupled = Vec::with_capacity(width);
    for j in back_horizon..total {
        let full = nested(j, back_horizon);
        values.push(full);
        coupled.push(full == nested(j, half));
    }
    Ok(StationaryWindow {
        values,
        s: s[back_horizon..].to_vec(),
        t: t[back_horizon..].to_vec(),
        coupled,
    })
}

/// Binned total-variation comparison of `X_n(x0)` against `X_n(0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvReport {
    /// Raw binned TV between the two empirical laws.
    pub tv_raw: f64,
    /// Raw TV minus its permutation-null mean, floored at 0.
    pub tv_estimate: f64,
    /// Mean binned TV between random halves of the pooled sample.
    pub noise_floor: f64,
    /// Standard deviation of the permutation-null TV.
    pub std_error: f64,
    /// Monte Carlo estimate of `P(T_n ≤ x0)`.
    pub bound: f64,
    pub bins: usize,
}

const TV_PERMUTATIONS: usize = 20;

pub fn tv_discrepancy(
    model: &ModelSpec,
    x0: f64,
    n: usize,
    reps: usize,
    bins: usize,
    stream: &mut RngStream,
) -> TvReport {
    assert!(reps > 0 && bins > 0);
    let from_x0 = stream.fork();
    let from_zero = stream.fork();
    let shifted: Vec<(f64, f64)> = (0..reps as u64)
        .into_par_iter()
        .map(|i| engine::simulate_final(model, x0, n, &mut from_x0.stream(i)))
        .collect();
    let base: Vec<f64> = (0..reps as u64)
        .into_par_iter()
        .map(|i| engine::simulate_final(model, 0.0, n, &mut from_zero.stream(i)).0)
        .collect();
    let bound = shifted.iter().filter(|(_, big_t)| *big_t <= x0).count() as f64 / reps as f64;
    let shifted: Vec<f64> = shifted.into_iter().map(|(x, _)| x).collect();

    let edges = equiprobable_edges(&base, bins);
    let tv_raw = binned_tv(&shifted, &base, &edges);

    let mut pooled: Vec<f64> = shifted.iter().chain(&base).copied().collect();
    let mut null = Vec::with_capacity(TV_PERMUTATIONS);
    for _ in 0..TV_PERMUTATIONS {
        for i in (1..pooled.len()).rev() {
            let j = stream.below(i + 1);
            pooled.swap(i, j);
        }
        let (a, b) = pooled.split_at(reps);
        null.push(binned_tv(a, b, &edges));
    }
    let null_est = stats::mean_estimate(&null);
    let std_error = null_est.std_error * (TV_PERMUTATIONS as f64).sqrt();
    TvReport {
        tv_raw,
        tv_estimate: (tv_raw - null_est.mean).max(0.0),
        noise_floor: null_est.mean,
        std_error,
        bound,
        bins: edges.len() + 1,
    }
}

fn equiprobable_edges(sample: &[f64], bins: usize) -> Vec<f64> {
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut edges: Vec<f64> = (1..bins)
        .map(|k| sorted[(k * sorted.len() / bins).min(sorted.len() - 1)])
        .collect();
    edges.dedup();
    edges
}

fn binned_tv(a: &[f64], b: &[f64], edges: &[f64]) -> f64 {
    let hist = |v: &[f64]| {
        let mut h = vec![0usize; edges.len() + 1];
        for x in v {
            h[edges.partition_point(|e| e <= x)] += 1;
        }
        h
    };
    let (ha, hb) = (hist(a), hist(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    0.5 * ha
        .iter()
        .zip(&hb)
        .map(|(p, q)| (*p as f64 / na - *q as f64 / nb).abs())
        .sum::<f64>()
}

/// One value per row, with a header.
pub fn write_values_csv<W: Write>(draws: &[StationaryDraw], mut out: W) -> io::Result<()> {
    writeln!(out, "value")?;
    for d in draws {
        writeln!(out, "{}", d.value)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dists::DistributionSpec;

    fn det(v: f64) -> DistributionSpec {
        DistributionSpec::deterministic(v).unwrap()
    }

    #[test]
    fn backward_examples() {
        let b = backward_maxdater(&[3.0, 5.0, 1.0], &[2.0, 2.0, 2.0], 3);
        assert_eq!(b.values, vec![3.0, 3.0, 3.0]);
        assert_eq!(b.terms, vec![3.0, 3.0, -3.0]);
        assert_eq!(backward_maxdater(&[1.0, 10.0], &[2.0, 2.0], 2).values, vec![1.0, 8.0]);
        assert_eq!(backward_maxdater(&[4.5, 9.0], &[1.0, 1.0], 1).values, vec![4.5]);
    }

    #[test]
    fn backward_matches_quadratic_oracle() {
        let m = ModelSpec::new(
            DistributionSpec::exponential(1.0).unwrap(),
            DistributionSpec::pareto(1.5, 1.0).unwrap(),
        );
        let mut st = RngStream::from_seed(3);
        for _ in 0..200 {
            let n = 1 + st.below(60);
            let mut s = vec![];
            let mut t = vec![];
            for _ in 0..n {
                let (a, b) = m.draw(&mut st);
                t.push(a);
                s.push(b);
            }
            let b = backward_maxdater(&s, &t, n);
            for j in 1..=n {
                let mut oracle = 0.0f64;
                for i in 1..=j {
                    let elapsed: f64 = t[..i - 1].iter().sum();
                    oracle = oracle.max(s[i - 1] - elapsed);
                }
                // prefix sums accumulate identically in both loops
                assert_eq!(b.values[j - 1], oracle);
            }
            assert!(b.values.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn deterministic_stationary_value() {
        let m = ModelSpec::new(det(1.0), det(2.0));
        for h in [1, 5, 100] {
            let d = stationary_sample(&m, h, &mut RngStream::from_seed(1)).unwrap();
            assert_eq!(d.value, 2.0);
            assert_eq!(d.residual_bound, 0.0);
        }
    }

    #[test]
    fn monotone_in_horizon_on_shared_randomness() {
        let m = ModelSpec::new(
            DistributionSpec::exponential(1.0).unwrap(),
            DistributionSpec::pareto(1.2, 1.0).unwrap(),
        );
        let check = DivergenceCheck {
            pilot_reps: 0,
            ..Default::default()
        };
        let mut pilot = RngStream::from_seed(0);
        let samplers: Vec<_> = [10, 100, 1000]
            .iter()
            .map(|h| StationarySampler::new(&m, *h, &check, &mut pilot).unwrap())
            .collect();
        for seed in 0..200 {
            let v: Vec<f64> = samplers
                .iter()
                .map(|s| s.sample(&mut RngStream::from_seed(seed)).value)
                .collect();
            assert!(v[0] <= v[1] && v[1] <= v[2]);
        }
    }

    #[test]
    fn divergence_trips_for_heavier_service() {
        let m = ModelSpec::new(
            DistributionSpec::pareto(0.8, 1.0).unwrap(),
            DistributionSpec::pareto(0.5, 1.0).unwrap(),
        );
        let r = stationary_sample(&m, 10_000, &mut RngStream::from_seed(2));
        assert!(matches!(r, Err(LoynesError::DivergenceSuspected { .. })), "{r:?}");
    }

    #[test]
    fn window_is_constant_for_deterministic_model() {
        let m = ModelSpec::new(det(1.0), det(2.0));
        let w = stationary_window(&m, 10, 8, &DivergenceCheck::default(), &mut RngStream::from_seed(0)).unwrap();
        assert!(w.values.iter().all(|v| *v == 2.0));
        assert!(w.recursion_violations().is_empty());
    }

    #[test]
    fn window_recursion_exact_on_exponential_model() {
        let m = ModelSpec::new(
            DistributionSpec::exponential(1.0).unwrap(),
            DistributionSpec::exponential(1.0).unwrap(),
        );
        let w = stationary_window(&m, 500, 200, &DivergenceCheck::default(), &mut RngStream::from_seed(5)).unwrap();
        assert!(w.coupled.iter().filter(|c| **c).count() > 490);
        assert!(w.recursion_violations().is_empty());
    }

    #[test]
    fn tv_deterministic_arrivals_identical_laws() {
        let m = ModelSpec::new(det(1.0), DistributionSpec::exponential(1.0).unwrap());
        let r = tv_discrepancy(&m, 2.5, 3, 10_000, 64, &mut RngStream::from_seed(3));
        assert_eq!(r.bound, 0.0);
        assert!(r.tv_raw <= r.noise_floor + 3.0 * r.std_error, "{r:?}");
    }

    #[test]
    fn tv_from_zero_is_null() {
        let m = ModelSpec::new(
            DistributionSpec::exponential(1.0).unwrap(),
            DistributionSpec::exponential(1.0).unwrap(),
        );
        let r = tv_discrepancy(&m, 0.0, 4, 10_000, 64, &mut RngStream::from_seed(4));
        assert_eq!(r.bound, 0.0);
        assert!(r.tv_estimate <= 3.0 * r.std_error, "{r:?}");
    }

    #[test]
    fn tv_below_bound_for_exponential_arrivals() {
        let m = ModelSpec::new(
            DistributionSpec::exponential(1.0).unwrap(),
            DistributionSpec::exponential(1.0).unwrap(),
        );
        let r = tv_discrepancy(&m, 1.0, 5, 20_000, 64, &mut RngStream::from_seed(6));
        // P(T_5 ≤ 1) = P(Poisson(1) ≥ 5)
        let exact = 1.0 - (-1.0f64).exp() * (1.0 + 1.0 + 0.5 + 1.0 / 6.0 + 1.0 / 24.0);
        assert!((r.bound - exact).abs() < 4.0 * (exact / 20_000.0).sqrt());
        assert!(r.tv_estimate <= r.bound + 3.0 * r.std_error, "{r:?}");
    }

    #[test]
    fn residual_extrapolation() {
        // F̄(T̃_j) = j^{-2}: Σ_{j>N} ≈ 1/N
        let js: Vec<usize> = (500..=1000).step_by(50).collect();
        let tails: Vec<f64> = js.iter().map(|j| (*j as f64).powi(-2)).collect();
        let r = residual_estimate(&js, &tails, 1000);
        assert!((r - 1e-3).abs() < 1e-6, "{r}");
        let flat = vec![0.5; js.len()];
        assert_eq!(residual_estimate(&js, &flat, 1000), 1.0);
        // e^{-j}: finite and negligible, no overflow in the fitted power
        let light: Vec<f64> = js.iter().map(|j| (-(*j as f64)).exp()).collect();
        let r = residual_estimate(&js, &light, 1000);
        assert!(r.is_finite() && r < 1e-300, "{r}");
    }
}
