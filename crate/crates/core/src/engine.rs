//! Forward simulation of the maximum dater and the Lindley waiting time.
//!
//! Both simulators consume the stream in the same layout: for each customer
//! `k = 0, 1, 2, …` one inter-arrival draw `t_k` followed by one service draw
//! `s_k`. The draw `t_0` has no meaning (customer 0 arrives at time 0) but is
//! consumed anyway, so that the two queues see identical `(t_k, s_k)` for
//! every `k ≥ 1` when fed the same seed.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::dists::{DistributionSpec, Violation};
use crate::rng::RngStream;

/// A GI/GI/∞ model: iid inter-arrival times independent of iid service times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub interarrival: DistributionSpec,
    pub service: DistributionSpec,
}

impl ModelSpec {
    pub fn new(interarrival: DistributionSpec, service: DistributionSpec) -> Self {
        Self {
            interarrival: interarrival.normalized(),
            service: service.normalized(),
        }
    }

    pub fn validate(&self, path: &str, errs: &mut Vec<Violation>) {
        self.interarrival.validate(&format!("{path}.interarrival"), errs);
        self.service.validate(&format!("{path}.service"), errs);
    }

    /// Draws `(t_k, s_k)` for the next customer.
    #[inline]
    pub fn draw(&self, stream: &mut RngStream) -> (f64, f64) {
        let t = self.interarrival.sample(stream);
        let s = self.service.sample(stream);
        (t, s)
    }
}

/// `X_{n+1} = max(X_n - t_{n+1}, s_{n+1})`.
#[inline]
pub fn maxdater_step(x: f64, t: f64, s: f64) -> f64 {
    (x - t).max(s)
}

/// `W_{n+1} = max(W_n + s_n - t_{n+1}, 0)`.
#[inline]
pub fn lindley_step(w: f64, s: f64, t: f64) -> f64 {
    (w + s - t).max(0.0)
}

/// A simulated maximum-dater trajectory with its drivers.
///
/// `s[k-1]` and `t[k-1]` hold `s_k` and `t_k`; `arrivals[k]` and `x[k]` hold
/// `T_k` and `X_k` for `k = 0..=n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub x0: f64,
    pub s: Vec<f64>,
    pub t: Vec<f64>,
    pub arrivals: Vec<f64>,
    pub x: Vec<f64>,
}

impl PathSample {
    /// Builds the path from explicit drivers (`s_1..s_n`, `t_1..t_n`).
    pub fn from_drivers(x0: f64, s: Vec<f64>, t: Vec<f64>) -> Self {
        assert_eq!(s.len(), t.len());
        let n = s.len();
        let mut arrivals = Vec::with_capacity(n + 1);
        let mut x = Vec::with_capacity(n + 1);
        arrivals.push(0.0);
        x.push(x0);
        let (mut big_t, mut cur) = (0.0, x0);
        for k in 0..n {
            big_t += t[k];
            cur = maxdater_step(cur, t[k], s[k]);
            arrivals.push(big_t);
            x.push(cur);
        }
        Self { x0, s, t, arrivals, x }
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    /// Writes `n,t_n,s_n,T_n,X_n`; row 0 leaves the driver columns empty.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "n,t_n,s_n,T_n,X_n")?;
        writeln!(out, "0,,,{},{}", self.arrivals[0], self.x[0])?;
        for k in 1..=self.len() {
            writeln!(
                out,
                "{},{},{},{},{}",
                k,
                self.t[k - 1],
                self.s[k - 1],
                self.arrivals[k],
                self.x[k]
            )?;
        }
        Ok(())
    }
}

/// Simulates `X_0 = x0, …, X_n` from fresh iid drivers.
pub fn simulate_path(model: &ModelSpec, x0: f64, n: usize, stream: &mut RngStream) -> PathSample {
    let mut s = Vec::with_capacity(n);
    let mut t = Vec::with_capacity(n);
    // customer 0: t_0 and s_0 are consumed but not used by the dater
    model.draw(stream);
    for _ in 0..n {
        let (tk, sk) = model.draw(stream);
        t.push(tk);
        s.push(sk);
    }
    PathSample::from_drivers(x0, s, t)
}

/// Final value `X_n(x0)` without materializing the path.
pub fn simulate_final(model: &ModelSpec, x0: f64, n: usize, stream: &mut RngStream) -> (f64, f64) {
    model.draw(stream);
    let (mut x, mut big_t) = (x0, 0.0);
    for _ in 0..n {
        let (t, s) = model.draw(stream);
        x = maxdater_step(x, t, s);
        big_t += t;
    }
    (x, big_t)
}

/// Smallest `n ≥ 1` with `T_n > x0`, if it is reached within the horizon.
pub fn coupling_time(x0: f64, arrivals: &[f64]) -> Option<usize> {
    let start = 1.min(arrivals.len());
    let idx = start + arrivals[start..].partition_point(|&a| a <= x0);
    (idx < arrivals.len()).then_some(idx)
}

/// A GI/GI/1 waiting-time path together with the random walk `Γ` and its
/// running maximum.
///
/// `s[k]` is `s_k` for `k = 0..=n`; `t[k]` is `t_k` for `k = 1..=n+1` with
/// `t[0]` unused (zero).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gg1Path {
    pub s: Vec<f64>,
    pub t: Vec<f64>,
    pub w: Vec<f64>,
    pub gamma: Vec<f64>,
    pub m: Vec<f64>,
}

impl Gg1Path {
    /// Builds the path from `s_0..s_n` and `t_0..t_{n+1}` (`t_0` ignored).
    pub fn from_drivers(w0: f64, s: Vec<f64>, t: Vec<f64>) -> Self {
        let n = s.len() - 1;
        assert_eq!(t.len(), n + 2);
        let mut w = Vec::with_capacity(n + 1);
        let mut gamma: Vec<f64> = Vec::with_capacity(n + 1);
        let mut m: Vec<f64> = Vec::with_capacity(n + 1);
        w.push(w0);
        gamma.push(0.0);
        m.push(0.0);
        for k in 0..n {
            w.push(lindley_step(w[k], s[k], t[k + 1]));
            let g = gamma[k] + (s[k + 1] - t[k + 2]);
            gamma.push(g);
            m.push(m[k].max(g));
        }
        Self { s, t, w, gamma, m }
    }

    pub fn len(&self) -> usize {
        self.w.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes `n,s_n,t_{n+1},W_n,Gamma_n,M_n`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "n,s_n,t_next,W_n,Gamma_n,M_n")?;
        for k in 0..=self.len() {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                k,
                self.s[k],
                self.t[k + 1],
                self.w[k],
                self.gamma[k],
                self.m[k]
            )?;
        }
        Ok(())
    }
}

/// Simulates `W_0 = w0, …, W_n` and `Γ_0..Γ_n` from the shared draw layout.
pub fn simulate_gg1(model: &ModelSpec, w0: f64, n: usize, stream: &mut RngStream) -> Gg1Path {
    let mut s = Vec::with_capacity(n + 2);
    let mut t = Vec::with_capacity(n + 2);
    for k in 0..=n + 1 {
        let (tk, sk) = model.draw(stream);
        t.push(if k == 0 { 0.0 } else { tk });
        s.push(sk);
    }
    s.truncate(n + 1);
    Gg1Path::from_drivers(w0, s, t)
}
