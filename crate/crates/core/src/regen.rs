//! Regeneration times of the maximum dater.
//!
//! With `w0` and `m0` chosen so that `P(s ≤ w0) ≥ 1/2` and `P(T_{m0} > w0) ≥ 1/2`,
//! the indicator `Y_n = I(X_{n-m0} ≤ w0, T_n - T_{n-m0} > w0)` marks times at
//! which all earlier work has left before the last block of `m0` arrivals.
//! Checked on multiples of `m0`, these are regeneration times with law `φ`.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dists::{DistributionSpec, Extended};
use crate::engine::{self, ModelSpec, PathSample};
use crate::rng::{mix_seed, RngStream};
use crate::stats;

const PASSAGE_DRAWS: u64 = 100_000;
const PASSAGE_SEED: u64 = 0x6d30_7061_7373;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegenParams {
    pub m0: usize,
    pub w0: f64,
    /// `P(s ≤ w0)`.
    pub p_service: f64,
    /// `P(T_{m0} > w0)`, exact or estimated.
    pub p_gap: f64,
}

/// Smallest median of the service law.
pub fn service_median(service: &DistributionSpec) -> f64 {
    service.quantile(0.5).expect("1/2 is a valid probability")
}

/// Minimal `w0` (the service median) and minimal `m0`.
///
/// For deterministic arrivals `m0` is exact. Otherwise the first-passage count
/// `N = min{m : T_m > w0}` is sampled and `m0` is the smallest `m` whose
/// estimate of `P(N ≤ m)` clears 1/2 by three standard errors.
pub fn find_params(m: &ModelSpec) -> RegenParams {
    let w0 = service_median(&m.service);
    let p_service = m.service.cdf(w0);
    if let DistributionSpec::Deterministic { value } = m.interarrival {
        return RegenParams {
            m0: (w0 / value).floor() as usize + 1,
            w0,
            p_service,
            p_gap: 1.0,
        };
    }
    let reps = crate::rng::Replications::new(mix_seed(PASSAGE_SEED, 0));
    let mut passages: Vec<usize> = (0..PASSAGE_DRAWS)
        .into_par_iter()
        .map(|i| {
            let mut s = reps.stream(i);
            let (mut n, mut elapsed) = (0usize, 0.0);
            while elapsed <= w0 {
                elapsed += m.interarrival.sample(&mut s);
                n += 1;
            }
            n
        })
        .collect();
    passages.sort_unstable();
    let total = passages.len() as f64;
    let mut m0 = passages[0];
    loop {
        let below = passages.partition_point(|n| *n <= m0) as f64;
        let p = below / total;
        let se = (p * (1.0 - p) / total).sqrt();
        if p - 3.0 * se >= 0.5 {
            return RegenParams {
                m0,
                w0,
                p_service,
                p_gap: p,
            };
        }
        m0 += 1;
    }
}

/// Draws from `φ = P_0(X_{m0} ∈ · | T_{m0} > w0)` by rejection.
pub fn phi_sample(m: &ModelSpec, params: &RegenParams, stream: &mut RngStream) -> f64 {
    phi_sample_counted(m, params, stream).0
}

/// As [`phi_sample`], also returning the number of attempts.
pub fn phi_sample_counted(m: &ModelSpec, params: &RegenParams, stream: &mut RngStream) -> (f64, usize) {
    let mut attempts = 0;
    loop {
        attempts += 1;
        let (mut x, mut elapsed) = (0.0, 0.0);
        for _ in 0..params.m0 {
            let (t, s) = m.draw(stream);
            x = engine::maxdater_step(x, t, s);
            elapsed += t;
        }
        if elapsed > params.w0 {
            return (x, attempts);
        }
    }
}

/// Regeneration times found on one path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegenTrace {
    pub m0: usize,
    pub taus: Vec<usize>,
    /// `R_i = Y_{i m0}` for `i = 1..=len/m0`.
    pub r: Vec<bool>,
    /// Single-path estimate `[1, R_1, R_2, …]`.
    pub u_hat: Vec<f64>,
}

impl RegenTrace {
    /// Writes `i,tau_i`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "i,tau_i")?;
        for (i, tau) in self.taus.iter().enumerate() {
            writeln!(out, "{},{}", i + 1, tau)?;
        }
        Ok(())
    }
}

/// `Y_n` on a path, for `n ≥ m0`.
pub fn regeneration_indicator(path: &PathSample, params: &RegenParams, n: usize) -> bool {
    let k = n - params.m0;
    path.x[k] <= params.w0 && path.arrivals[n] - path.arrivals[k] > params.w0
}

/// Scans the multiples of `m0` on the path; a trailing partial block is ignored.
pub fn detect(path: &PathSample, params: &RegenParams) -> RegenTrace {
    let blocks = path.len() / params.m0;
    let r: Vec<bool> = (1..=blocks)
        .map(|i| regeneration_indicator(path, params, i * params.m0))
        .collect();
    let taus = r
        .iter()
        .enumerate()
        .filter(|(_, y)| **y)
        .map(|(i, _)| (i + 1) * params.m0)
        .collect();
    let u_hat = std::iter::once(1.0)
        .chain(r.iter().map(|y| if *y { 1.0 } else { 0.0 }))
        .collect();
    RegenTrace {
        m0: params.m0,
        taus,
        r,
        u_hat,
    }
}

/// Renewal-sequence estimates from replications started in `φ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenewalSummary {
    pub reps: usize,
    pub blocks: usize,
    /// `Σ_{i=0}^{n} û_i` at `n = blocks`.
    pub sum_u: f64,
    /// Log-log growth exponent of the partial sums over the last decade.
    pub sum_u_slope: Option<f64>,
    /// `(1/n) Σ_{i=1}^{n} û_i` at `n = blocks`.
    pub cesaro: f64,
    /// Mean of `τ_1` over replications that regenerated; infinite when more
    /// than 10% are censored.
    pub cycle_mean: Extended,
    pub censored_fraction: f64,
    /// `(n, Σ_{i≤n} û_i)` on a geometric grid of block indices.
    pub partial_sums: Vec<(usize, f64)>,
    #[serde(skip)]
    pub u_hat: Vec<f64>,
    /// `X_{τ_1}` for each replication that regenerated.
    #[serde(skip)]
    pub regenerated_values: Vec<f64>,
}

struct RepOutcome {
    counts: Vec<u32>,
    first: Option<(usize, f64)>,
}

/// Runs `reps` replications from `φ` for `horizon` steps each.
pub fn renewal_tests(
    m: &ModelSpec,
    params: &RegenParams,
    reps: usize,
    horizon: usize,
    stream: &mut RngStream,
) -> RenewalSummary {
    assert!(reps > 0);
    let m0 = params.m0;
    let blocks = horizon / m0;
    let streams = stream.fork();
    // integer counts merge identically under any work split
    let (counts, mut firsts) = (0..reps as u64)
        .into_par_iter()
        .fold(
            || (vec![0u64; blocks], Vec::new()),
            |(mut counts, mut firsts), i| {
                let o = run_from_phi(m, params, blocks, &mut streams.stream(i));
                for (acc, v) in counts.iter_mut().zip(o.counts) {
                    *acc += u64::from(v);
                }
                if let Some(first) = o.first {
                    firsts.push((i, first));
                }
                (counts, firsts)
            },
        )
        .reduce(
            || (vec![0u64; blocks], Vec::new()),
            |(mut a, mut fa), (b, fb)| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                fa.extend(fb);
                (a, fa)
            },
        );
    firsts.sort_by_key(|(i, _)| *i);
    let values: Vec<f64> = firsts.iter().map(|(_, (_, x))| *x).collect();
    let firsts: Vec<f64> = firsts.iter().map(|(_, (tau, _))| *tau as f64).collect();
    let mut u_hat = Vec::with_capacity(blocks + 1);
    u_hat.push(1.0);
    u_hat.extend(counts.iter().map(|c| *c as f64 / reps as f64));

    let mut running = Vec::with_capacity(u_hat.len());
    let mut acc = 0.0;
    for u in &u_hat {
        acc += u;
        running.push(acc);
    }
    let grid = geometric_grid(blocks);
    let partial_sums: Vec<(usize, f64)> = grid.iter().map(|n| (*n, running[*n])).collect();
    let tail: Vec<&(usize, f64)> = partial_sums.iter().filter(|(n, _)| *n * 10 >= blocks).collect();
    let sum_u_slope = stats::loglog_slope(
        &tail.iter().map(|p| p.0 as f64).collect::<Vec<_>>(),
        &tail.iter().map(|p| p.1).collect::<Vec<_>>(),
    );

    let censored_fraction = 1.0 - firsts.len() as f64 / reps as f64;
    let cycle_mean = if censored_fraction > 0.1 || firsts.is_empty() {
        Extended::Infinite
    } else {
        Extended::Finite(firsts.iter().sum::<f64>() / firsts.len() as f64)
    };
    RenewalSummary {
        reps,
        blocks,
        sum_u: acc,
        sum_u_slope,
        cesaro: if blocks > 0 { (acc - 1.0) / blocks as f64 } else { 0.0 },
        cycle_mean,
        censored_fraction,
        partial_sums,
        u_hat,
        regenerated_values: values,
    }
}

fn run_from_phi(m: &ModelSpec, params: &RegenParams, blocks: usize, stream: &mut RngStream) -> RepOutcome {
    let m0 = params.m0;
    let mut counts = vec![0u32; blocks];
    let mut first = None;
    let mut x = phi_sample(m, params, stream);
    for (i, slot) in counts.iter_mut().enumerate() {
        let start = x;
        let mut gap = 0.0;
        for _ in 0..m0 {
            let (t, s) = m.draw(stream);
            x = engine::maxdater_step(x, t, s);
            gap += t;
        }
        if start <= params.w0 && gap > params.w0 {
            *slot = 1;
            if first.is_none() {
                first = Some(((i + 1) * m0, x));
            }
        }
    }
    RepOutcome { counts, first }
}

/// `1..=16` then ratio √2 up to `n`, always ending at `n`.
fn geometric_grid(n: usize) -> Vec<usize> {
    let mut grid: Vec<usize> = (1..=n.min(16)).collect();
    let mut v = 16.0f64;
    while (v as usize) < n {
        v *= std::f64::consts::SQRT_2;
        let k = (v.round() as usize).min(n);
        if grid.last() != Some(&k) {
            grid.push(k);
        }
    }
    grid
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(v: f64) -> DistributionSpec {
        DistributionSpec::deterministic(v).unwrap()
    }
    fn exp(r: f64) -> DistributionSpec {
        DistributionSpec::exponential(r).unwrap()
    }

    #[test]
    fn params_examples() {
        let p = find_params(&ModelSpec::new(det(1.0), exp(1.0)));
        assert!((p.w0 - 2f64.ln()).abs() < 1e-12);
        assert_eq!(p.m0, 1);
        let p = find_params(&ModelSpec::new(det(1.0), det(2.0)));
        assert_eq!((p.w0, p.m0), (2.0, 3));
        let p = find_params(&ModelSpec::new(exp(1.0), DistributionSpec::pareto(0.5, 1.0).unwrap()));
        assert_eq!(p.w0, 4.0);
        assert_eq!(p.m0, 5);
        // Erlang oracle: P(T_m > 4) = P(Poisson(4) ≤ m - 1)
        let erlang = |m: usize| {
            let mut term = (-4.0f64).exp();
            let mut sum = term;
            for k in 1..m {
                term *= 4.0 / k as f64;
                sum += term;
            }
            sum
        };
        assert!((erlang(5) - 0.6288).abs() < 1e-4);
        assert!(erlang(4) < 0.5);
        assert!((p.p_gap - erlang(5)).abs() < 0.01);
        assert!(p.p_service >= 0.5);
    }

    #[test]
    fn phi_deterministic() {
        let m = ModelSpec::new(det(1.0), det(2.0));
        let p = find_params(&m);
        let mut s = RngStream::from_seed(0);
        assert_eq!(phi_sample_counted(&m, &p, &mut s), (2.0, 1));
    }

    #[test]
    fn phi_acceptance_rate() {
        let m = ModelSpec::new(exp(1.0), DistributionSpec::pareto(0.5, 1.0).unwrap());
        let p = find_params(&m);
        let mut s = RngStream::from_seed(4);
        let attempts: usize = (0..10_000).map(|_| phi_sample_counted(&m, &p, &mut s).1).sum();
        let rate = 10_000.0 / attempts as f64;
        let se = (0.25f64 / 10_000.0).sqrt();
        assert!(rate >= 0.5 - 3.0 * se, "{rate}");
    }

    #[test]
    fn phi_matches_conditioned_simulation() {
        let m = ModelSpec::new(exp(1.0), exp(1.0));
        let p = find_params(&m);
        let mut s = RngStream::from_seed(8);
        let phi: Vec<f64> = (0..20_000).map(|_| phi_sample(&m, &p, &mut s)).collect();
        let mut direct = Vec::new();
        while direct.len() < 20_000 {
            let path = engine::simulate_path(&m, 0.0, p.m0, &mut s);
            if path.arrivals[p.m0] > p.w0 {
                direct.push(path.x[p.m0]);
            }
        }
        assert!(stats::ks_two_sample(&phi, &direct, 0.01).passes());
    }

    #[test]
    fn detect_deterministic() {
        let m = ModelSpec::new(det(1.0), det(2.0));
        let p = find_params(&m);
        let path = engine::simulate_path(&m, 0.0, 12, &mut RngStream::from_seed(0));
        let tr = detect(&path, &p);
        assert_eq!(tr.taus, vec![3, 6, 9, 12]);
        assert_eq!(tr.u_hat, vec![1.0; 5]);
        let short = engine::simulate_path(&m, 0.0, 2, &mut RngStream::from_seed(0));
        assert!(detect(&short, &p).taus.is_empty());
    }

    #[test]
    fn detect_rechecked_on_random_path() {
        let m = ModelSpec::new(exp(1.0), exp(1.0));
        let p = find_params(&m);
        let path = engine::simulate_path(&m, 0.0, 5000, &mut RngStream::from_seed(2));
        let tr = detect(&path, &p);
        assert!(!tr.taus.is_empty());
        for tau in &tr.taus {
            assert_eq!(tau % p.m0, 0);
            let gap: f64 = path.t[tau - p.m0..*tau].iter().sum();
            assert!(path.x[tau - p.m0] <= p.w0);
            assert!(gap > p.w0);
        }
        let missed = (1..=5000 / p.m0)
            .map(|i| i * p.m0)
            .filter(|n| !tr.taus.contains(n))
            .filter(|n| path.x[n - p.m0] <= p.w0 && path.t[n - p.m0..*n].iter().sum::<f64>() > p.w0)
            .count();
        assert_eq!(missed, 0);
    }

    #[test]
    fn renewal_deterministic() {
        let m = ModelSpec::new(det(1.0), det(2.0));
        let p = find_params(&m);
        let r = renewal_tests(&m, &p, 1000, 300, &mut RngStream::from_seed(0));
        assert!(r.u_hat.iter().all(|u| *u == 1.0));
        assert_eq!(r.cesaro, 1.0);
        assert_eq!(r.cycle_mean, Extended::Finite(3.0));
        assert_eq!(r.censored_fraction, 0.0);
    }

    #[test]
    fn renewal_exponential_positive() {
        let m = ModelSpec::new(exp(1.0), exp(1.0));
        let p = find_params(&m);
        let r = renewal_tests(&m, &p, 1000, 2000, &mut RngStream::from_seed(1));
        assert!(r.cesaro > 0.05 && r.cesaro <= 1.0);
        assert!(r.cycle_mean.is_finite());
        assert!(r.sum_u_slope.unwrap() > 0.9);
    }

    #[test]
    fn grid_shape() {
        assert_eq!(geometric_grid(5), vec![1, 2, 3, 4, 5]);
        let g = geometric_grid(1000);
        assert_eq!(*g.last().unwrap(), 1000);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }
}
