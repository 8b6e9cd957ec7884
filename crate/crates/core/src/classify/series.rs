//! Series criteria estimated by simulation of the arrival epochs.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ClassifierConfig;
use crate::dists::DistributionSpec;
use crate::engine::{self, ModelSpec};
use crate::rng::RngStream;
use crate::stats::{self, MeanEstimate};

/// Exponent sums beyond this contribute summands below `e^{-69} ≈ 1e-30`,
/// which are treated as 0.
const EXPONENT_CUTOFF: f64 = 69.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SeriesKind {
    /// `Σ_k F̄(T_k)`.
    TailSeries,
    /// `Σ_n E exp(-Σ_{i<n} F̄(y + T_i))`.
    TransienceSeries,
    /// `Σ_n E exp(-c Σ_{i≤n} F̄(T_i + w0))`.
    RecurrenceSeries,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SeriesVerdict {
    Converges,
    Diverges,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesParams {
    /// `y` for the transience series, `w0` for the recurrence series, 0 otherwise.
    pub shift: f64,
    pub c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Votes {
    pub converges: usize,
    pub diverges: usize,
    pub inconclusive: usize,
}

impl Votes {
    pub fn total(&self) -> usize {
        self.converges + self.diverges + self.inconclusive
    }

    pub fn fraction(&self, verdict: SeriesVerdict) -> f64 {
        let k = match verdict {
            SeriesVerdict::Converges => self.converges,
            SeriesVerdict::Diverges => self.diverges,
            SeriesVerdict::Inconclusive => self.inconclusive,
        };
        k as f64 / self.total().max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesDiagnostic {
    pub kind: SeriesKind,
    pub params: SeriesParams,
    pub grid: Vec<usize>,
    /// `S_n` on the grid: the median trajectory for the tail series, the
    /// trapezoidal sum of the estimated summands otherwise.
    pub partial_sums: Vec<f64>,
    /// Estimated summands on the grid (expectation series only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summands: Option<Vec<f64>>,
    pub verdict: SeriesVerdict,
    /// Log-log growth exponent of `S_n` over the last decade.
    pub slope: Option<f64>,
    /// Log-log exponent of the summands over the last decade.
    pub summand_slope: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub votes: Option<Votes>,
    /// Replications actually simulated (1 when arrivals are deterministic).
    pub reps: usize,
}

impl SeriesDiagnostic {
    /// Writes `n,S_n`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "n,S_n")?;
        for (n, s) in self.grid.iter().zip(&self.partial_sums) {
            writeln!(out, "{n},{s}")?;
        }
        Ok(())
    }
}

/// `1..=16`, then geometric with the given ratio, always ending at `n_max`.
pub fn series_grid(n_max: usize, ratio: f64) -> Vec<usize> {
    assert!(ratio > 1.0);
    let mut grid: Vec<usize> = (1..=n_max.min(16)).collect();
    let mut v = 16.0f64;
    while grid.last().is_some_and(|n| *n < n_max) {
        v *= ratio;
        let k = (v.round() as usize).min(n_max);
        if grid.last().is_some_and(|last| k > *last) {
            grid.push(k);
        }
    }
    grid
}

fn last_decade(grid: &[usize]) -> usize {
    let n_max = *grid.last().expect("grid is non-empty");
    grid.partition_point(|n| n * 10 < n_max)
}

fn fitted_slope(grid: &[usize], values: &[f64]) -> Option<f64> {
    let from = last_decade(grid);
    let xs: Vec<f64> = grid[from..].iter().map(|n| *n as f64).collect();
    stats::loglog_slope(&xs, &values[from..])
}

/// Convergence vote on one partial-sum trajectory.
pub fn vote(grid: &[usize], sums: &[f64], cfg: &ClassifierConfig) -> SeriesVerdict {
    let from = last_decade(grid);
    let tail = &sums[from..];
    if tail.iter().all(|s| *s == 0.0) {
        return SeriesVerdict::Converges;
    }
    match fitted_slope(grid, sums) {
        Some(slope) if slope < cfg.slope_threshold => SeriesVerdict::Converges,
        Some(_) if tail.windows(2).all(|w| w[1] - w[0] > cfg.increment_floor) => SeriesVerdict::Diverges,
        _ => SeriesVerdict::Inconclusive,
    }
}

fn deterministic(d: &DistributionSpec) -> bool {
    matches!(d, DistributionSpec::Deterministic { .. })
}

/// `Σ_{k≤n} F̄(T_k)` on the grid for one path of arrival epochs.
fn tail_trajectory(m: &ModelSpec, grid: &[usize], stream: &mut RngStream) -> Vec<f64> {
    let mut out = Vec::with_capacity(grid.len());
    let (mut elapsed, mut sum) = (0.0, 0.0);
    let mut k = 0;
    for &n in grid {
        while k < n {
            elapsed += m.interarrival.sample(stream);
            let tail = m.service.tail(elapsed);
            if tail == 0.0 {
                // every later summand vanishes too
                k = usize::MAX;
                break;
            }
            sum += tail;
            k += 1;
        }
        out.push(sum);
    }
    out
}

/// Per-replication sums `Σ_{k≤n} F̄(T_k)`, median trajectory and vote.
pub fn tail_series(m: &ModelSpec, cfg: &ClassifierConfig, stream: &mut RngStream) -> SeriesDiagnostic {
    let grid = series_grid(cfg.n_max, cfg.grid_ratio);
    let reps = if deterministic(&m.interarrival) {
        1
    } else {
        cfg.tail_reps
    };
    let streams = stream.fork();
    let paths: Vec<Vec<f64>> = (0..reps as u64)
        .into_par_iter()
        .map(|i| tail_trajectory(m, &grid, &mut streams.stream(i)))
        .collect();
    let mut votes = Votes {
        converges: 0,
        diverges: 0,
        inconclusive: 0,
    };
    for p in &paths {
        match vote(&grid, p, cfg) {
            SeriesVerdict::Converges => votes.converges += 1,
            SeriesVerdict::Diverges => votes.diverges += 1,
            SeriesVerdict::Inconclusive => votes.inconclusive += 1,
        }
    }
    let partial_sums: Vec<f64> = (0..grid.len())
        .map(|j| stats::median(&paths.iter().map(|p| p[j]).collect::<Vec<_>>()))
        .collect();
    let verdict = if votes.fraction(SeriesVerdict::Converges) >= cfg.vote_fraction {
        SeriesVerdict::Converges
    } else if votes.fraction(SeriesVerdict::Diverges) >= cfg.vote_fraction {
        SeriesVerdict::Diverges
    } else {
        SeriesVerdict::Inconclusive
    };
    let increments: Vec<f64> = std::iter::once(partial_sums[0])
        .chain(partial_sums.windows(2).map(|w| w[1] - w[0]))
        .collect();
    SeriesDiagnostic {
        kind: SeriesKind::TailSeries,
        params: SeriesParams { shift: 0.0, c: 1.0 },
        slope: fitted_slope(&grid, &partial_sums),
        summand_slope: fitted_slope(&grid, &increments),
        grid,
        partial_sums,
        summands: None,
        verdict,
        votes: Some(votes),
        reps,
    }
}

/// `exp(-c Σ_{i=1}^{n-lag} F̄(shift + T_i))` at each grid point `n`.
fn exponent_trajectory(
    m: &ModelSpec,
    grid: &[usize],
    shift: f64,
    c: f64,
    lag: usize,
    stream: &mut RngStream,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(grid.len());
    let (mut elapsed, mut sum) = (0.0, 0.0);
    let mut k = 0;
    let mut frozen = false;
    for &n in grid {
        let target = n - lag;
        while !frozen && k < target {
            elapsed += m.interarrival.sample(stream);
            let tail = m.service.tail(shift + elapsed);
            sum += tail;
            k += 1;
            if tail == 0.0 || c * sum > EXPONENT_CUTOFF {
                frozen = true;
            }
        }
        let e = c * sum;
        out.push(if e > EXPONENT_CUTOFF { 0.0 } else { (-e).exp() });
    }
    out
}

fn expectation_series(
    m: &ModelSpec,
    kind: SeriesKind,
    shift: f64,
    c: f64,
    cfg: &ClassifierConfig,
    stream: &mut RngStream,
) -> SeriesDiagnostic {
    let grid = series_grid(cfg.n_max, cfg.grid_ratio);
    let lag = usize::from(kind == SeriesKind::TransienceSeries);
    let reps = if deterministic(&m.interarrival) {
        1
    } else {
        cfg.series_reps
    };
    let streams = stream.fork();
    let paths: Vec<Vec<f64>> = (0..reps as u64)
        .into_par_iter()
        .map(|i| exponent_trajectory(m, &grid, shift, c, lag, &mut streams.stream(i)))
        .collect();
    let summands: Vec<f64> = (0..grid.len())
        .map(|j| paths.iter().map(|p| p[j]).sum::<f64>() / reps as f64)
        .collect();
    let mut partial_sums = Vec::with_capacity(grid.len());
    let mut acc = summands[0] * grid[0] as f64;
    partial_sums.push(acc);
    for j in 1..grid.len() {
        let width = (grid[j] - grid[j - 1]) as f64;
        acc += width * 0.5 * (summands[j - 1] + summands[j]);
        partial_sums.push(acc);
    }
    SeriesDiagnostic {
        kind,
        params: SeriesParams { shift, c },
        verdict: vote(&grid, &partial_sums, cfg),
        slope: fitted_slope(&grid, &partial_sums),
        summand_slope: fitted_slope(&grid, &summands),
        grid,
        partial_sums,
        summands: Some(summands),
        votes: None,
        reps,
    }
}

/// Estimates `a_n = E exp(-Σ_{i=1}^{n-1} F̄(y + T_i))` on the grid and sums it.
pub fn transience_series(m: &ModelSpec, y: f64, cfg: &ClassifierConfig, stream: &mut RngStream) -> SeriesDiagnostic {
    expectation_series(m, SeriesKind::TransienceSeries, y, 1.0, cfg, stream)
}

/// Estimates `b_n = E exp(-c Σ_{i=1}^{n} F̄(T_i + w0))` on the grid and sums it.
pub fn recurrence_series(
    m: &ModelSpec,
    w0: f64,
    c: f64,
    cfg: &ClassifierConfig,
    stream: &mut RngStream,
) -> SeriesDiagnostic {
    assert!(c > 1.0, "the recurrence criterion needs c > 1");
    expectation_series(m, SeriesKind::RecurrenceSeries, w0, c, cfg, stream)
}

/// `E_x Σ_{n≤horizon} I(X_n ≤ y)` with a normal interval.
pub fn occupation_estimate(
    m: &ModelSpec,
    x: f64,
    y: f64,
    horizon: usize,
    reps: usize,
    stream: &mut RngStream,
) -> MeanEstimate {
    let streams = stream.fork();
    let visits: Vec<f64> = (0..reps as u64)
        .into_par_iter()
        .map(|i| {
            let mut s = streams.stream(i);
            m.draw(&mut s);
            let mut cur = x;
            let mut count = usize::from(cur <= y);
            for _ in 0..horizon {
                let (t, sv) = m.draw(&mut s);
                cur = engine::maxdater_step(cur, t, sv);
                count += usize::from(cur <= y);
            }
            count as f64
        })
        .collect();
    stats::mean_estimate(&visits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dists::DistributionSpec as D;
    use proptest::prelude::*;

    fn cfg(n_max: usize) -> ClassifierConfig {
        ClassifierConfig {
            n_max,
            tail_reps: 100,
            series_reps: 100,
            ..Default::default()
        }
    }

    fn tpo(d1: f64) -> ModelSpec {
        ModelSpec::new(D::deterministic(1.0).unwrap(), D::truncated_pareto_one(d1, d1).unwrap())
    }

    #[test]
    fn grid_examples() {
        assert_eq!(series_grid(10, 2.0), (1..=10).collect::<Vec<_>>());
        let g = series_grid(1000, 2.0);
        assert_eq!(&g[16..], &[32, 64, 128, 256, 512, 1000]);
    }

    #[test]
    fn bounded_tail_series_is_exact() {
        let m = ModelSpec::new(D::deterministic(1.0).unwrap(), D::deterministic(2.0).unwrap());
        let d = tail_series(&m, &cfg(1000), &mut RngStream::from_seed(0));
        assert_eq!(*d.partial_sums.last().unwrap(), 1.0);
        assert_eq!(d.verdict, SeriesVerdict::Converges);
    }

    #[test]
    fn exponential_tail_series_converges() {
        let m = ModelSpec::new(D::exponential(1.0).unwrap(), D::exponential(1.0).unwrap());
        let d = tail_series(&m, &cfg(10_000), &mut RngStream::from_seed(1));
        assert_eq!(d.verdict, SeriesVerdict::Converges);
    }

    #[test]
    fn harmonic_tail_series_diverges() {
        let d = tail_series(&tpo(0.5), &cfg(10_000), &mut RngStream::from_seed(0));
        assert_eq!(d.verdict, SeriesVerdict::Diverges);
        // Σ_{k≤n} 0.5/k
        let oracle: f64 = (1..=10_000).map(|k| 0.5 / k as f64).sum();
        assert!((d.partial_sums.last().unwrap() - oracle).abs() < 1e-9);
    }

    #[test]
    fn deterministic_transience_series_matches_direct_sum() {
        let y = 4.0;
        let c = cfg(5000);
        let d = transience_series(&tpo(2.0), y, &c, &mut RngStream::from_seed(0));
        let summands = d.summands.as_ref().unwrap();
        for (n, a) in d.grid.iter().zip(summands) {
            let e: f64 = (1..*n).map(|i| 2.0 / (y + i as f64)).sum();
            assert!((a - (-e).exp()).abs() < 1e-12 * (-e).exp().max(1e-300));
        }
        assert_eq!(d.verdict, SeriesVerdict::Converges);
        assert!((d.summand_slope.unwrap() + 2.0).abs() < 0.05);
    }

    #[test]
    fn bounded_service_never_transient() {
        let m = ModelSpec::new(D::deterministic(1.0).unwrap(), D::deterministic(2.0).unwrap());
        let d = transience_series(&m, 2.0, &cfg(10_000), &mut RngStream::from_seed(0));
        assert!(d.summands.as_ref().unwrap().iter().all(|a| *a == 1.0));
        assert_eq!(d.verdict, SeriesVerdict::Diverges);
        let r = recurrence_series(&m, 2.0, 1.1, &cfg(10_000), &mut RngStream::from_seed(0));
        assert_eq!(r.verdict, SeriesVerdict::Diverges);
    }

    #[test]
    fn recurrence_series_examples() {
        let r = recurrence_series(&tpo(0.5), 1.0, 1.1, &cfg(100_000), &mut RngStream::from_seed(0));
        assert_eq!(r.verdict, SeriesVerdict::Diverges);
        assert!((r.summand_slope.unwrap() + 0.55).abs() < 0.05);
        let r = recurrence_series(&tpo(2.0), 4.0, 1.1, &cfg(100_000), &mut RngStream::from_seed(0));
        assert_eq!(r.verdict, SeriesVerdict::Converges);
        assert!((r.summand_slope.unwrap() + 2.2).abs() < 0.05);
    }

    #[test]
    fn occupation_examples() {
        let m = ModelSpec::new(D::deterministic(1.0).unwrap(), D::deterministic(2.0).unwrap());
        let e = occupation_estimate(&m, 0.0, 3.0, 1000, 10, &mut RngStream::from_seed(0));
        assert_eq!(e.mean, 1001.0);
        let e = occupation_estimate(&m, 0.0, 1.0, 1000, 10, &mut RngStream::from_seed(0));
        assert_eq!(e.mean, 1.0);
    }

    #[test]
    fn transient_occupation_saturates() {
        let m = tpo(2.0);
        let per_step: Vec<f64> = [1000, 10_000, 100_000]
            .iter()
            .map(|h| occupation_estimate(&m, 0.0, 5.0, *h, 200, &mut RngStream::from_seed(3)).mean)
            .collect();
        // growth between the last two horizons is a vanishing fraction of the horizon
        assert!((per_step[2] - per_step[1]) / 90_000.0 < 0.01, "{per_step:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn tail_trajectories_non_decreasing(seed in any::<u64>(), alpha in 0.3f64..2.0, beta in 0.3f64..2.0) {
            let m = ModelSpec::new(D::pareto(beta, 1.0).unwrap(), D::pareto(alpha, 1.0).unwrap());
            let grid = series_grid(2000, 2.0);
            let p = tail_trajectory(&m, &grid, &mut RngStream::from_seed(seed));
            prop_assert!(p.windows(2).all(|w| w[0] <= w[1]));
        }

        #[test]
        fn transience_summand_non_decreasing_in_y(seed in any::<u64>(), y in 0.0f64..5.0, dy in 0.0f64..5.0) {
            let m = ModelSpec::new(D::exponential(1.0).unwrap(), D::pareto(0.7, 1.0).unwrap());
            let grid = series_grid(500, 2.0);
            let a = exponent_trajectory(&m, &grid, y, 1.0, 1, &mut RngStream::from_seed(seed));
            let b = exponent_trajectory(&m, &grid, y + dy, 1.0, 1, &mut RngStream::from_seed(seed));
            prop_assert!(a.iter().zip(&b).all(|(u, v)| u <= v));
        }
    }
}
