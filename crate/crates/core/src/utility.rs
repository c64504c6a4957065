//! Utility of monetary payoffs, normalized so that `u(0) = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A strictly increasing utility with `u(0) = 0`.
///
/// * `Linear`: `u(x) = x` (risk neutral).
/// * `Power`: `u(x) = x^γ`, `γ > 0`; risk averse below 1, risk loving above.
///   Defined for `x ≥ 0` only unless `γ = 1`.
/// * `Exponential`: `u(x) = (1 − e^{−ax}) / a`, `a > 0` (constant absolute risk
///   aversion); defined on all of ℝ.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "UtilitySpec", into = "UtilitySpec")]
pub enum Utility {
    #[default]
    Linear,
    Power { exponent: f64 },
    Exponential { aversion: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Linear,
    Power,
    Exponential,
}

/// Serialized form: `{family, parameter}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilitySpec {
    pub family: Family,
    #[serde(default)]
    pub parameter: f64,
}

impl TryFrom<UtilitySpec> for Utility {
    type Error = Error;

    fn try_from(spec: UtilitySpec) -> Result<Self> {
        match spec.family {
            Family::Linear => Ok(Utility::Linear),
            Family::Power => Utility::power(spec.parameter),
            Family::Exponential => Utility::exponential(spec.parameter),
        }
    }
}

impl From<Utility> for UtilitySpec {
    fn from(u: Utility) -> Self {
        match u {
            Utility::Linear => UtilitySpec { family: Family::Linear, parameter: 0.0 },
            Utility::Power { exponent } => UtilitySpec { family: Family::Power, parameter: exponent },
            Utility::Exponential { aversion } => {
                UtilitySpec { family: Family::Exponential, parameter: aversion }
            }
        }
    }
}


impl Utility {
    pub fn power(exponent: f64) -> Result<Self> {
        if exponent > 0.0 && exponent.is_finite() {
            Ok(Utility::Power { exponent })
        } else {
            Err(Error::InvalidParameter(format!("power exponent must be positive and finite, got {exponent}")))
        }
    }

    pub fn exponential(aversion: f64) -> Result<Self> {
        if aversion > 0.0 && aversion.is_finite() {
            Ok(Utility::Exponential { aversion })
        } else {
            Err(Error::InvalidParameter(format!(
                "exponential risk aversion must be positive and finite, got {aversion}"
            )))
        }
    }

    pub fn label(&self) -> String {
        match self {
            Utility::Linear => "linear".to_string(),
            Utility::Power { exponent } => format!("power({exponent})"),
            Utility::Exponential { aversion } => format!("exponential({aversion})"),
        }
    }

    pub fn is_linear(&self) -> bool {
        match self {
            Utility::Linear => true,
            Utility::Power { exponent } => *exponent == 1.0,
            Utility::Exponential { .. } => false,
        }
    }

    /// `u(x)` for a payoff `x ≥ 0`.
    pub fn evaluate(&self, x: f64) -> Result<f64> {
        if !(x >= 0.0) || !x.is_finite() {
            return Err(Error::Domain { what: "payoff", value: x, domain: "[0, ∞)" });
        }
        Ok(self.raw(x))
    }

    /// `u(x)` for a possibly negative score, e.g. a Brier penalty.
    pub fn evaluate_score(&self, x: f64) -> Result<f64> {
        if !x.is_finite() || (x < 0.0 && !self.accepts_negative()) {
            return Err(Error::Domain { what: "score", value: x, domain: "the utility's domain" });
        }
        Ok(self.raw(x))
    }

    /// `u′(x)`.
    pub fn marginal(&self, x: f64) -> Result<f64> {
        let undefined = Error::Domain { what: "x", value: x, domain: "the utility's differentiable domain" };
        if !x.is_finite() {
            return Err(undefined);
        }
        match *self {
            Utility::Linear => Ok(1.0),
            Utility::Exponential { aversion } => Ok((-aversion * x).exp()),
            Utility::Power { exponent: 1.0 } => Ok(1.0),
            Utility::Power { exponent } => {
                if x > 0.0 || (x == 0.0 && exponent > 1.0) {
                    Ok(exponent * x.powf(exponent - 1.0))
                } else {
                    Err(undefined)
                }
            }
        }
    }

    fn accepts_negative(&self) -> bool {
        match self {
            Utility::Linear | Utility::Exponential { .. } => true,
            Utility::Power { exponent } => *exponent == 1.0,
        }
    }

    fn raw(&self, x: f64) -> f64 {
        match *self {
            Utility::Linear => x,
            Utility::Power { exponent } => {
                if exponent == 1.0 {
                    x
                } else {
                    x.powf(exponent)
                }
            }
            Utility::Exponential { aversion } => -(-aversion * x).exp_m1() / aversion,
        }
    }
}
