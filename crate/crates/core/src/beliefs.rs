//! Expert beliefs about an unknown quantity on `[0, 1]`.
//!
//! A [`Belief`] bundles the CDF, density, quantile function, the running
//! integral of the CDF and an inverse-CDF sampler. Three families are
//! provided: [`UniformBelief`], [`BetaBelief`] and [`PiecewiseLinearBelief`].
//! Quantities on other ranges must be mapped onto `[0, 1]` by the caller.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use statrs::function::beta::{beta_reg, ln_beta};

use crate::error::{check_unit, Error, Result};
use crate::numeric::{integrate, invert_cdf, QUADRATURE_TOLERANCE};

/// An expert's coherent uncertainty about `θ ∈ [0, 1]`.
///
/// Implementations are immutable; sampling takes the random stream as an
/// argument so callers own all mutable state.
pub trait Belief: fmt::Debug + Send + Sync {
    /// Short human-readable label, used in reports and CSV output.
    fn label(&self) -> String;

    /// `F(t)`. Arguments outside `[0, 1]` are clamped.
    fn cdf(&self, t: f64) -> f64;

    /// `f(t)`.
    fn pdf(&self, t: f64) -> f64;

    /// Points in `(0, 1)` where the density is not smooth.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }

    /// The `p`-quantile, `F(q) = p`, for `0 < p < 1`.
    fn quantile(&self, p: f64) -> Result<f64> {
        check_open_probability(p)?;
        invert_cdf(|t| self.cdf(t), |t| self.pdf(t), p, 0.0, 1.0)
    }

    /// `∫_a^b F(t) dt` for `0 ≤ a ≤ b ≤ 1`.
    fn cdf_integral(&self, a: f64, b: f64) -> Result<f64> {
        check_interval(a, b)?;
        integrate(|t| self.cdf(t), a, b, QUADRATURE_TOLERANCE, &self.breakpoints())
    }

    /// Inverse-CDF draw of `θ`.
    fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        let u: f64 = rng.random();
        if u <= 0.0 {
            return 0.0;
        }
        self.quantile(u).expect("interior probabilities always invert")
    }
}

/// `F(t)` with a domain check on `t`.
pub fn cdf_eval(belief: &dyn Belief, t: f64) -> Result<f64> {
    check_unit("t", t)?;
    Ok(belief.cdf(t).clamp(0.0, 1.0))
}

pub(crate) fn check_open_probability(p: f64) -> Result<f64> {
    if p > 0.0 && p < 1.0 {
        Ok(p)
    } else {
        Err(Error::Domain { what: "p", value: p, domain: "(0, 1)" })
    }
}

fn check_interval(a: f64, b: f64) -> Result<()> {
    check_unit("a", a)?;
    check_unit("b", b)?;
    if a > b {
        return Err(Error::InvalidParameter(format!("interval [{a}, {b}] is reversed")));
    }
    Ok(())
}

/// The uniform belief on `[0, 1]`, i.e. Beta(1, 1) with exact closed forms.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UniformBelief;

impl Belief for UniformBelief {
    fn label(&self) -> String {
        "uniform".to_string()
    }

    fn cdf(&self, t: f64) -> f64 {
        t.clamp(0.0, 1.0)
    }

    fn pdf(&self, t: f64) -> f64 {
        if (0.0..=1.0).contains(&t) {
            1.0
        } else {
            0.0
        }
    }

    fn quantile(&self, p: f64) -> Result<f64> {
        check_open_probability(p)
    }

    fn cdf_integral(&self, a: f64, b: f64) -> Result<f64> {
        check_interval(a, b)?;
        Ok(0.5 * (b * b - a * a))
    }

    fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        rng.random()
    }
}

/// Beta(`alpha`, `beta`) belief.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaBelief {
    alpha: f64,
    beta: f64,
    ln_norm: f64,
}

impl BetaBelief {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0 && beta.is_finite() && beta > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "beta shapes must be finite and positive, got ({alpha}, {beta})"
            )));
        }
        Ok(Self { alpha, beta, ln_norm: ln_beta(alpha, beta) })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    fn edge_density(&self, shape: f64) -> f64 {
        if shape < 1.0 {
            f64::INFINITY
        } else if shape == 1.0 {
            (-self.ln_norm).exp()
        } else {
            0.0
        }
    }
}

impl Belief for BetaBelief {
    fn label(&self) -> String {
        format!("beta({},{})", self.alpha, self.beta)
    }

    fn cdf(&self, t: f64) -> f64 {
        if t <= 0.0 {
            0.0
        } else if t >= 1.0 {
            1.0
        } else {
            beta_reg(self.alpha, self.beta, t)
        }
    }

    fn pdf(&self, t: f64) -> f64 {
        if !(0.0..=1.0).contains(&t) {
            0.0
        } else if t == 0.0 {
            self.edge_density(self.alpha)
        } else if t == 1.0 {
            self.edge_density(self.beta)
        } else {
            ((self.alpha - 1.0) * t.ln() + (self.beta - 1.0) * (-t).ln_1p() - self.ln_norm).exp()
        }
    }

    /// Closed form: `∫_a^b F = [t F(t)]_a^b − m (I_b(α+1, β) − I_a(α+1, β))`
    /// where `m` is the mean.
    fn cdf_integral(&self, a: f64, b: f64) -> Result<f64> {
        check_interval(a, b)?;
        if a == b {
            return Ok(0.0);
        }
        let shifted = |t: f64| {
            if t <= 0.0 {
                0.0
            } else if t >= 1.0 {
                1.0
            } else {
                beta_reg(self.alpha + 1.0, self.beta, t)
            }
        };
        let value = b * self.cdf(b) - a * self.cdf(a) - self.mean() * (shifted(b) - shifted(a));
        Ok(value.clamp(0.0, b - a))
    }
}

/// A continuous piecewise-linear CDF through `(x, p)` knots.
///
/// Knots start at `(0, 0)`, end at `(1, 1)`, have strictly increasing `x` and
/// nondecreasing `p`. Serializes as the ordered list of `[x, p]` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct PiecewiseLinearBelief {
    knots: Vec<(f64, f64)>,
}

impl PiecewiseLinearBelief {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::InvalidParameter("need at least the (0,0) and (1,1) knots".into()));
        }
        if knots[0] != (0.0, 0.0) || knots[knots.len() - 1] != (1.0, 1.0) {
            return Err(Error::InvalidParameter(
                "knots must start at (0, 0) and end at (1, 1)".into(),
            ));
        }
        for w in knots.windows(2) {
            let ((x0, p0), (x1, p1)) = (w[0], w[1]);
            if !(x1 > x0) {
                return Err(Error::InvalidParameter(format!(
                    "knot x-coordinates must strictly increase: {x0} then {x1}"
                )));
            }
            if !(p1 >= p0) {
                return Err(Error::InvalidParameter(format!(
                    "knot probabilities must not decrease: {p0} then {p1}"
                )));
            }
        }
        Ok(Self { knots })
    }

    /// Interpolates interior `(x, p)` points between the fixed end knots.
    pub fn through(interior: &[(f64, f64)]) -> Result<Self> {
        let mut knots = Vec::with_capacity(interior.len() + 2);
        knots.push((0.0, 0.0));
        knots.extend_from_slice(interior);
        knots.push((1.0, 1.0));
        Self::new(knots)
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    /// Index `i` of the segment `[x_i, x_{i+1}]` containing `t`; knots belong
    /// to the segment on their right, except `t = 1`.
    fn segment(&self, t: f64) -> usize {
        let i = self.knots.partition_point(|k| k.0 <= t);
        i.saturating_sub(1).min(self.knots.len() - 2)
    }
}

impl TryFrom<Vec<(f64, f64)>> for PiecewiseLinearBelief {
    type Error = Error;

    fn try_from(knots: Vec<(f64, f64)>) -> Result<Self> {
        Self::new(knots)
    }
}

impl From<PiecewiseLinearBelief> for Vec<(f64, f64)> {
    fn from(b: PiecewiseLinearBelief) -> Self {
        b.knots
    }
}

impl Belief for PiecewiseLinearBelief {
    fn label(&self) -> String {
        let pts: Vec<String> = self.knots.iter().map(|(x, p)| format!("({x},{p})")).collect();
        format!("piecewise[{}]", pts.join(" "))
    }

    fn cdf(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        if t >= 1.0 {
            return 1.0;
        }
        let i = self.segment(t);
        let ((x0, p0), (x1, p1)) = (self.knots[i], self.knots[i + 1]);
        p0 + (t - x0) / (x1 - x0) * (p1 - p0)
    }

    fn pdf(&self, t: f64) -> f64 {
        if !(0.0..=1.0).contains(&t) {
            return 0.0;
        }
        let i = self.segment(t);
        let ((x0, p0), (x1, p1)) = (self.knots[i], self.knots[i + 1]);
        (p1 - p0) / (x1 - x0)
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.knots[1..self.knots.len() - 1].iter().map(|k| k.0).collect()
    }

    /// Exact inverse on every sloped segment; a flat segment at level `p`
    /// resolves to its left endpoint.
    fn quantile(&self, p: f64) -> Result<f64> {
        check_open_probability(p)?;
        let k = self.knots.partition_point(|k| k.1 < p);
        let (xk, pk) = self.knots[k];
        if pk == p {
            return Ok(xk);
        }
        let (x0, p0) = self.knots[k - 1];
        Ok(x0 + (p - p0) / (pk - p0) * (xk - x0))
    }

    /// Exact trapezoid sums: the CDF is linear between knots.
    fn cdf_integral(&self, a: f64, b: f64) -> Result<f64> {
        check_interval(a, b)?;
        if a == b {
            return Ok(0.0);
        }
        let mut cuts = vec![a];
        cuts.extend(self.breakpoints().into_iter().filter(|&x| x > a && x < b));
        cuts.push(b);
        Ok(cuts
            .windows(2)
            .map(|w| 0.5 * (w[1] - w[0]) * (self.cdf(w[0]) + self.cdf(w[1])))
            .sum())
    }
}

/// Declarative description of a belief, as used in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BeliefSpec {
    Uniform,
    Beta { alpha: f64, beta: f64 },
    PiecewiseLinear { knots: Vec<(f64, f64)> },
}

impl BeliefSpec {
    pub fn build(&self) -> Result<Arc<dyn Belief>> {
        Ok(match self {
            BeliefSpec::Uniform => Arc::new(UniformBelief),
            BeliefSpec::Beta { alpha, beta } => Arc::new(BetaBelief::new(*alpha, *beta)?),
            BeliefSpec::PiecewiseLinear { knots } => {
                Arc::new(PiecewiseLinearBelief::new(knots.clone())?)
            }
        })
    }
}

impl Default for BeliefSpec {
    fn default() -> Self {
        BeliefSpec::Beta { alpha: 2.0, beta: 5.0 }
    }
}
