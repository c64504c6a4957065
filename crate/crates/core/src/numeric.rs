//! Quadrature, root finding and one-dimensional maximization shared by the
//! belief, scoring and mechanism modules.
//!
//! Everything here works on closures over `f64`;
//! the problems are one-dimensional, bounded to `[0, 1]` and smooth except at
//! a handful of known breakpoints.

use crate::error::{Error, Result};

/// Absolute tolerance for generic CDF integrals.
pub const QUADRATURE_TOLERANCE: f64 = 1e-10;

/// Iteration cap for CDF inversion.
pub const ROOT_MAX_ITERATIONS: usize = 200;

/// Bracket width at which CDF inversion stops.
pub const ROOT_BRACKET_WIDTH: f64 = 1e-12;

/// Number of grid intervals used to bracket a maximum before golden-section refinement.
pub const SEARCH_GRID: usize = 1000;

/// Final bracket width of the golden-section refinement.
pub const SEARCH_TOLERANCE: f64 = 1e-8;

const MAX_SIMPSON_DEPTH: u32 = 120;

/// Adaptive Simpson quadrature of `f` over `[a, b]` with absolute tolerance `tol`.
///
/// `breakpoints` inside `(a, b)` split the interval so that kinks and jumps in
/// the integrand (piecewise-linear beliefs) never sit inside a panel. Each
/// panel is mapped through `t = a + (b − a)(10x³ − 15x⁴ + 6x⁵)`, whose
/// Jacobian vanishes to second order at both ends: integrable endpoint
/// singularities up to `t^{-2/3}` become bounded and the integrand is never
/// evaluated exactly on a breakpoint.
pub fn integrate<F>(f: F, a: f64, b: f64, tol: f64, breakpoints: &[f64]) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if b < a {
        return Err(Error::InvalidParameter(format!("integration bounds reversed: [{a}, {b}]")));
    }
    if a == b {
        return Ok(0.0);
    }
    let mut cuts: Vec<f64> = Vec::with_capacity(breakpoints.len() + 2);
    cuts.push(a);
    cuts.extend(breakpoints.iter().copied().filter(|&x| x > a && x < b));
    cuts.push(b);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let pieces = (cuts.len() - 1) as f64;
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let (lo, width) = (w[0], w[1] - w[0]);
        let smootherstep = |x: f64| x * x * x * (10.0 + x * (6.0 * x - 15.0));
        let mapped = |x: f64| {
            let jacobian = 30.0 * x * x * (1.0 - x) * (1.0 - x) * width;
            if jacobian == 0.0 {
                return 0.0;
            }
            let t = if x <= 0.5 { lo + width * smootherstep(x) } else { w[1] - width * smootherstep(1.0 - x) };
            let t = t.clamp(w[0], w[1]);
            let v = f(t);
            // Points that round onto a singular endpoint carry at most an ulp of mass.
            if !v.is_finite() && (t == w[0] || t == w[1]) {
                0.0
            } else {
                v * jacobian
            }
        };
        total += simpson_panel(&mapped, tol / pieces).map_err(|_| Error::Quadrature {
            lower: w[0],
            upper: w[1],
            tolerance: tol / pieces,
        })?;
    }
    Ok(total)
}

fn simpson_panel<F: Fn(f64) -> f64>(f: &F, tol: f64) -> Result<f64> {
    let (fa, fm, fb) = (f(0.0), f(0.5), f(1.0));
    let whole = (fa + 4.0 * fm + fb) / 6.0;
    let mut ok = true;
    let value = simpson_recurse(f, 0.0, 1.0, fa, fm, fb, whole, tol, MAX_SIMPSON_DEPTH, &mut ok);
    if ok && value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Quadrature { lower: 0.0, upper: 1.0, tolerance: tol })
    }
}

#[allow(clippy::too_many_arguments)]
fn simpson_recurse<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    ok: &mut bool,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    if depth == 0 {
        *ok = false;
        return left + right + delta / 15.0;
    }
    simpson_recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, ok)
        + simpson_recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, ok)
}

/// Solves `cdf(x) = target` on `[lower, upper]` for a nondecreasing `cdf`.
///
/// Newton steps from `density` are taken only while they stay inside the
/// current bracket; otherwise the bracket is bisected. Stops once the bracket
/// is narrower than [`ROOT_BRACKET_WIDTH`] or a Newton step no longer moves
/// the iterate, and fails if the final residual exceeds `1e-9`.
pub fn invert_cdf<F, D>(cdf: F, density: D, target: f64, lower: f64, upper: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let (mut lo, mut hi) = (lower, upper);
    let mut x = 0.5 * (lo + hi);
    for _ in 0..ROOT_MAX_ITERATIONS {
        let residual = cdf(x) - target;
        if residual == 0.0 {
            return Ok(x);
        }
        if residual < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo <= ROOT_BRACKET_WIDTH {
            break;
        }
        let slope = density(x);
        let newton = x - residual / slope;
        let next = if slope.is_finite() && slope > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        let stalled = (next - x).abs() <= 4.0 * f64::EPSILON * x.abs();
        x = next;
        if stalled {
            break;
        }
    }
    let residual = cdf(x) - target;
    if residual.abs() <= 1e-9 {
        Ok(x)
    } else {
        Err(Error::Convergence { target, iterations: ROOT_MAX_ITERATIONS, residual })
    }
}

/// Location and value of a maximum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Maximum {
    pub x: f64,
    pub value: f64,
}

/// Maximizes `f` over `[lower, upper]`: a `grid`-interval scan brackets the
/// best point, then golden-section search narrows it to [`SEARCH_TOLERANCE`].
///
/// Returns the maximum together with the scanned curve `(x, f(x))`.
pub fn maximize<F>(f: F, lower: f64, upper: f64, grid: usize) -> (Maximum, Vec<(f64, f64)>)
where
    F: Fn(f64) -> f64,
{
    let grid = grid.max(2);
    let step = (upper - lower) / grid as f64;
    let curve: Vec<(f64, f64)> = (0..=grid)
        .map(|i| {
            let x = if i == grid { upper } else { lower + step * i as f64 };
            (x, f(x))
        })
        .collect();

    let best = curve
        .iter()
        .enumerate()
        .fold(0, |best, (i, p)| if p.1 > curve[best].1 { i } else { best });
    let a = curve[best.saturating_sub(1)].0;
    let b = curve[(best + 1).min(grid)].0;
    let refined = golden_section(&f, a, b, SEARCH_TOLERANCE);

    let grid_best = Maximum { x: curve[best].0, value: curve[best].1 };
    let max = if refined.value >= grid_best.value { refined } else { grid_best };
    (max, curve)
}

/// Golden-section search for a maximum of a unimodal `f` on `[a, b]`.
pub fn golden_section<F>(f: F, mut a: f64, mut b: f64, tol: f64) -> Maximum
where
    F: Fn(f64) -> f64,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    let value = f(x);
    [(x, value), (c, fc), (d, fd)]
        .into_iter()
        .fold(Maximum { x, value }, |m, (x, v)| if v > m.value { Maximum { x, value: v } } else { m })
}
