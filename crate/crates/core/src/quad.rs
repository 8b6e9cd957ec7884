//! Globally adaptive Gauss–Kronrod (7/15) quadrature.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadError {
    #[error("quadrature did not converge: estimate {estimate}, error {error} after {intervals} subintervals")]
    NoConvergence {
        estimate: f64,
        error: f64,
        intervals: usize,
    },
    #[error("integrand returned a non-finite value at x = {0}")]
    NonFinite(f64),
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_INTERVALS: usize = 4000;

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error.total_cmp(&other.error) == Ordering::Equal
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Result<Segment, QuadError> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    if !fc.is_finite() {
        return Err(QuadError::NonFinite(center));
    }
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let (x1, x2) = (center - dx, center + dx);
        let (f1, f2) = (f(x1), f(x2));
        if !f1.is_finite() {
            return Err(QuadError::NonFinite(x1));
        }
        if !f2.is_finite() {
            return Err(QuadError::NonFinite(x2));
        }
        kron += WGK[j] * (f1 + f2);
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let value = kron * half;
    let error = ((kron - gauss) * half).abs();
    Ok(Segment { a, b, value, error })
}

/// Integrates `f` over `[a, b]` to relative tolerance `rel_tol` (with a tiny
/// absolute floor so that integrals equal to zero terminate).
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> Result<f64, QuadError> {
    if a == b {
        return Ok(0.0);
    }
    let mut heap = BinaryHeap::new();
    let first = kronrod(&f, a, b)?;
    let mut total = first.value;
    let mut total_err = first.error;
    heap.push(first);
    let abs_floor = 1e-300;
    while total_err > (rel_tol * total.abs()).max(abs_floor) {
        if heap.len() >= MAX_INTERVALS {
            return Err(QuadError::NoConvergence {
                estimate: total,
                error: total_err,
                intervals: heap.len(),
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // interval exhausted at machine precision; accept what we have
            heap.push(worst);
            break;
        }
        let left = kronrod(&f, worst.a, mid)?;
        let right = kronrod(&f, mid, worst.b)?;
        total += left.value + right.value - worst.value;
        total_err += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
    }
    // re-sum to shed accumulated cancellation in the running totals
    let value: f64 = heap.iter().map(|s| s.value).sum();
    let error: f64 = heap.iter().map(|s| s.error).sum();
    if error > (rel_tol * value.abs()).max(abs_floor) * 10.0 {
        return Err(QuadError::NoConvergence {
            estimate: value,
            error,
            intervals: heap.len(),
        });
    }
    Ok(value)
}

/// Integrates `f` over a sequence of breakpoints, one adaptive pass per piece.
pub fn integrate_pieces<F: Fn(f64) -> f64>(f: F, points: &[f64], rel_tol: f64) -> Result<f64, QuadError> {
    let mut sum = 0.0;
    for w in points.windows(2) {
        if w[1] > w[0] {
            sum += integrate(&f, w[0], w[1], rel_tol)?;
        }
    }
    Ok(sum)
}

/// Integrates `f` over `[0, ∞)` through the map `z = w / (1 - w)`.
///
/// Suited to integrands that decay at least exponentially in `z`.
pub fn integrate_half_line<F: Fn(f64) -> f64>(f: F, rel_tol: f64) -> Result<f64, QuadError> {
    integrate(
        |w: f64| {
            if w >= 1.0 {
                return 0.0;
            }
            let one_minus = 1.0 - w;
            let z = w / one_minus;
            let v = f(z);
            if v == 0.0 {
                0.0
            } else {
                v / (one_minus * one_minus)
            }
        },
        0.0,
        1.0,
        rel_tol,
    )
}
