//! Scoring rules for probabilities of a set and for quantiles.
//!
//! A [`BinaryScoringRule`] pays `g1(β)` when `θ ≤ q` and `g0(β)` otherwise,
//! for a reported probability `β` of the set `[0, q]`. A
//! [`QuantileScoringRule`] pays
//!
//! ```text
//! w(q | β) = β s(q) + (s(θ) − s(q)) 1{θ ≤ q} + h(θ)
//! ```
//!
//! for a reported `β`-quantile `q`, with `s` increasing and `h` arbitrary.
//! With `s(x) = x`, `h(θ) = −βθ` this is the pinball loss
//! `(θ − q)(1{θ ≤ q} − β)`. Both families are maximized in expectation by
//! truthful reports under linear utility; the functions below measure how far
//! the optimum moves once a nonlinear utility is applied.

use std::fmt;
use std::io::{self, Write};
use std::sync::Arc;

use rand::{Rng, RngCore};

use crate::beliefs::Belief;
use crate::error::{check_unit, Error, Result};
use crate::numeric::{integrate, maximize, SEARCH_GRID};
use crate::utility::Utility;

pub type ScoreFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Absolute tolerance of the expectation integrals in [`expected_quantile_score`].
const SCORE_QUADRATURE_TOLERANCE: f64 = 1e-13;

/// Grid used to check monotonicity of rule components.
const MONOTONE_GRID: usize = 100;

/// Default gap allowed between an expected-score argmax and the true quantile.
pub const PROPERNESS_TOLERANCE: f64 = 1e-4;

/// Two values closer than this are treated as a tie when detecting flat optima.
const FLAT_TOLERANCE: f64 = 1e-13;

fn unit_grid(n: usize) -> impl Iterator<Item = f64> {
    (0..=n).map(move |i| i as f64 / n as f64)
}

/// `r(β | q) = g1(β)` if `θ ≤ q`, else `g0(β)`.
#[derive(Clone)]
pub struct BinaryScoringRule {
    name: String,
    g1: ScoreFn,
    g0: ScoreFn,
}

impl fmt::Debug for BinaryScoringRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BinaryScoringRule").field("name", &self.name).finish()
    }
}

impl BinaryScoringRule {
    /// `g1` must be nondecreasing and `g0` nonincreasing on a 0.01 grid.
    pub fn new(name: impl Into<String>, g1: ScoreFn, g0: ScoreFn) -> Result<Self> {
        let name = name.into();
        let grid: Vec<f64> = unit_grid(MONOTONE_GRID).collect();
        for w in grid.windows(2) {
            if g1(w[1]) < g1(w[0]) {
                return Err(Error::InvalidParameter(format!("{name}: g1 decreases near {}", w[0])));
            }
            if g0(w[1]) > g0(w[0]) {
                return Err(Error::InvalidParameter(format!("{name}: g0 increases near {}", w[0])));
            }
        }
        Ok(Self { name, g1, g0 })
    }

    /// Quadratic (Brier) rule in its maximizing orientation:
    /// `g1(β) = −(1 − β)²`, `g0(β) = −β²`.
    pub fn brier() -> Self {
        Self::new("brier", Arc::new(|b: f64| -(1.0 - b) * (1.0 - b)), Arc::new(|b: f64| -b * b))
            .expect("brier components are monotone")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn g1(&self, beta: f64) -> f64 {
        (self.g1)(beta)
    }

    pub fn g0(&self, beta: f64) -> f64 {
        (self.g0)(beta)
    }
}

/// `w(q | β) = β s(q) + (s(θ) − s(q)) 1{θ ≤ q} + h(θ)`.
#[derive(Clone)]
pub struct QuantileScoringRule {
    name: String,
    s: ScoreFn,
    h: ScoreFn,
}

impl fmt::Debug for QuantileScoringRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("QuantileScoringRule").field("name", &self.name).finish()
    }
}

impl QuantileScoringRule {
    /// `s` must be strictly increasing on a 0.01 grid.
    pub fn new(name: impl Into<String>, s: ScoreFn, h: ScoreFn) -> Result<Self> {
        let name = name.into();
        let grid: Vec<f64> = unit_grid(MONOTONE_GRID).collect();
        for w in grid.windows(2) {
            if !(s(w[1]) > s(w[0])) {
                return Err(Error::InvalidParameter(format!(
                    "{name}: s is not strictly increasing near {}",
                    w[0]
                )));
            }
        }
        Ok(Self { name, s, h })
    }

    /// Pinball loss for level `beta`: `s(x) = x`, `h(θ) = −βθ`.
    pub fn pinball(beta: f64) -> Self {
        Self::new(format!("pinball({beta})"), Arc::new(|x: f64| x), Arc::new(move |t: f64| -beta * t))
            .expect("identity is increasing")
    }

    /// `s(x) = x^power` with `h = 0`.
    pub fn power(power: f64) -> Result<Self> {
        if !(power > 0.0) {
            return Err(Error::InvalidParameter(format!("power must be positive, got {power}")));
        }
        Self::new(format!("s=x^{power}"), Arc::new(move |x: f64| x.powf(power)), Arc::new(|_| 0.0))
    }

    /// Same `s`, with `h` shifted by a constant.
    pub fn with_shifted_h(&self, shift: f64) -> Self {
        let h = self.h.clone();
        Self {
            name: format!("{}+{shift}", self.name),
            s: self.s.clone(),
            h: Arc::new(move |t| h(t) + shift),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn s(&self, x: f64) -> f64 {
        (self.s)(x)
    }

    pub fn h(&self, x: f64) -> f64 {
        (self.h)(x)
    }
}

/// One scored report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreSample {
    pub report: f64,
    pub theta: f64,
    pub score: f64,
}

/// A binary score of a reported distribution at a randomly drawn set `[0, endpoint]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalScore {
    pub endpoint: f64,
    pub sample: ScoreSample,
}

pub fn binary_score(rule: &BinaryScoringRule, beta: f64, theta: f64, q: f64) -> Result<f64> {
    check_unit("beta", beta)?;
    check_unit("theta", theta)?;
    check_unit("q", q)?;
    Ok(if theta <= q { rule.g1(beta) } else { rule.g0(beta) })
}

/// `F(q) u(g1(β)) + (1 − F(q)) u(g0(β))`.
pub fn expected_binary_score(
    rule: &BinaryScoringRule,
    belief: &dyn Belief,
    q: f64,
    beta: f64,
    utility: &Utility,
) -> Result<f64> {
    check_unit("q", q)?;
    check_unit("beta", beta)?;
    let f = belief.cdf(q);
    Ok(f * utility.evaluate_score(rule.g1(beta))? + (1.0 - f) * utility.evaluate_score(rule.g0(beta))?)
}

/// The probability report `β ∈ [0, 1]` maximizing [`expected_binary_score`].
///
/// Fails with [`Error::NonUnique`] if the objective is flat across more than
/// `1e-4` around the optimum.
pub fn optimal_probability_report(
    rule: &BinaryScoringRule,
    belief: &dyn Belief,
    q: f64,
    utility: &Utility,
) -> Result<f64> {
    check_unit("q", q)?;
    let f = belief.cdf(q);
    let u1 = |b: f64| utility.evaluate_score(rule.g1(b));
    let u0 = |b: f64| utility.evaluate_score(rule.g0(b));
    // Fail fast on a domain problem rather than maximizing NaN.
    u1(0.5)?;
    u0(0.5)?;
    let objective = |b: f64| match (u1(b), u0(b)) {
        (Ok(a), Ok(c)) => f * a + (1.0 - f) * c,
        _ => f64::NEG_INFINITY,
    };
    let (best, curve) = maximize(objective, 0.0, 1.0, SEARCH_GRID);
    let near: Vec<f64> = curve
        .iter()
        .filter(|(_, v)| (best.value - v).abs() <= FLAT_TOLERANCE)
        .map(|(x, _)| *x)
        .collect();
    if let (Some(lo), Some(hi)) = (near.first(), near.last()) {
        if hi - lo > 1e-4 {
            return Err(Error::NonUnique { lower: *lo, upper: *hi });
        }
    }
    Ok(best.x)
}

/// For a fixed probability `β`, the set endpoint `q` maximizing
/// `F(q) g1(β) + (1 − F(q)) g0(β)` over a grid. Scoring a quantile this way is
/// degenerate: the optimum is an endpoint of `[0, 1]`.
pub fn fixed_probability_endpoint(rule: &BinaryScoringRule, belief: &dyn Belief, beta: f64) -> Result<f64> {
    check_unit("beta", beta)?;
    let (g1, g0) = (rule.g1(beta), rule.g0(beta));
    let best = unit_grid(SEARCH_GRID)
        .map(|q| (q, belief.cdf(q) * g1 + (1.0 - belief.cdf(q)) * g0))
        .fold((0.0, f64::NEG_INFINITY), |best, p| if p.1 > best.1 { p } else { best });
    Ok(best.0)
}

pub fn quantile_score(rule: &QuantileScoringRule, q: f64, theta: f64, beta: f64) -> f64 {
    let indicator = if theta <= q { 1.0 } else { 0.0 };
    beta * rule.s(q) + (rule.s(theta) - rule.s(q)) * indicator + rule.h(theta)
}

/// `E w(q | β) = β s(q) + ∫_0^q (s(θ) − s(q)) f(θ) dθ + ∫_0^1 h(θ) f(θ) dθ`.
pub fn expected_quantile_score(
    rule: &QuantileScoringRule,
    belief: &dyn Belief,
    q: f64,
    beta: f64,
) -> Result<f64> {
    let h_term = expected_h(rule, belief)?;
    Ok(varying_quantile_score(rule, belief, q, beta)? + h_term)
}

fn expected_h(rule: &QuantileScoringRule, belief: &dyn Belief) -> Result<f64> {
    integrate(|t| rule.h(t) * belief.pdf(t), 0.0, 1.0, SCORE_QUADRATURE_TOLERANCE, &belief.breakpoints())
}

/// The `q`-dependent part of the expected quantile score.
fn varying_quantile_score(rule: &QuantileScoringRule, belief: &dyn Belief, q: f64, beta: f64) -> Result<f64> {
    check_unit("q", q)?;
    check_unit("beta", beta)?;
    let sq = rule.s(q);
    let below = integrate(
        |t| (rule.s(t) - sq) * belief.pdf(t),
        0.0,
        q,
        SCORE_QUADRATURE_TOLERANCE,
        &belief.breakpoints(),
    )?;
    Ok(beta * sq + below)
}

/// Outcome of a properness check for one (rule, belief, level) case.
#[derive(Debug, Clone, PartialEq)]
pub struct ProperReport {
    pub argmax: f64,
    pub quantile: f64,
    pub gap: f64,
    pub tolerance: f64,
    /// `(report, expected score)` on the search grid.
    pub curve: Vec<(f64, f64)>,
}

impl ProperReport {
    pub fn passed(&self) -> bool {
        self.gap <= self.tolerance
    }

    /// Writes the expected-score curve with a `report,expected_score` header.
    pub fn write_curve_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "report,expected_score")?;
        for (q, v) in &self.curve {
            writeln!(out, "{q},{v}")?;
        }
        Ok(())
    }
}

/// Locates the maximizer of the expected quantile score and compares it with
/// the belief's `beta`-quantile.
pub fn verify_properness(
    rule: &QuantileScoringRule,
    belief: &dyn Belief,
    beta: f64,
    tolerance: f64,
) -> Result<ProperReport> {
    let truth = belief.quantile(beta)?;
    let h_term = expected_h(rule, belief)?;
    // Quadrature failures are surfaced after the search rather than inside the closure.
    let failure = std::cell::Cell::new(None);
    let objective = |q: f64| match varying_quantile_score(rule, belief, q, beta) {
        Ok(v) => v + h_term,
        Err(e) => {
            failure.set(Some(e));
            f64::NEG_INFINITY
        }
    };
    let (best, curve) = maximize(objective, 0.0, 1.0, SEARCH_GRID);
    if let Some(e) = failure.take() {
        return Err(e);
    }
    Ok(ProperReport { argmax: best.x, quantile: truth, gap: (best.x - truth).abs(), tolerance, curve })
}

/// Scores a reported distribution by drawing a uniform endpoint `q` and
/// applying `rule` to the reported probability of `[0, q]`.
pub fn interval_randomized_distribution_score(
    rule: &BinaryScoringRule,
    reported: &dyn Belief,
    theta: f64,
    rng: &mut dyn RngCore,
) -> Result<IntervalScore> {
    let endpoint: f64 = rng.random();
    let beta = reported.cdf(endpoint).clamp(0.0, 1.0);
    let score = binary_score(rule, beta, theta, endpoint)?;
    Ok(IntervalScore { endpoint, sample: ScoreSample { report: beta, theta, score } })
}
