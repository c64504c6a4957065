//! Independent reference computations for the integration tests. Nothing here
//! calls into the library's numerics.
#![allow(dead_code)]

use elicit_core::PiecewiseLinearBelief;

/// Composite Simpson with `n` (even) panels.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut sum = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + h * i as f64);
    }
    sum * h / 3.0
}

/// Root of an increasing `f` on `[lo, hi]` by plain bisection.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Beta(2, 5) CDF via the binomial identity `P(Bin(6, x) ≥ 2)`.
pub fn beta25_cdf(x: f64) -> f64 {
    let y = 1.0 - x;
    1.0 - y.powi(6) - 6.0 * x * y.powi(5)
}

pub fn beta25_pdf(x: f64) -> f64 {
    30.0 * x * (1.0 - x).powi(4)
}

pub fn three_knot() -> PiecewiseLinearBelief {
    PiecewiseLinearBelief::through(&[(0.25, 0.4), (0.5, 0.6), (0.8, 0.9)]).unwrap()
}

/// Kolmogorov–Smirnov distance between a sample and a CDF.
pub fn ks_distance(mut sample: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    sample.sort_by(f64::total_cmp);
    let n = sample.len() as f64;
    sample
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

pub mod session_fuzz;
