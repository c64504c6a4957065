use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the numerical and mechanism layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{what} = {value} is outside its domain {domain}")]
    Domain {
        what: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("root finding did not converge for target {target} after {iterations} iterations (residual {residual:e})")]
    Convergence {
        target: f64,
        iterations: usize,
        residual: f64,
    },

    #[error("quadrature did not reach tolerance {tolerance:e} on [{lower}, {upper}]")]
    Quadrature {
        lower: f64,
        upper: f64,
        tolerance: f64,
    },

    #[error("maximizer is not unique: objective is flat on [{lower}, {upper}]")]
    NonUnique { lower: f64, upper: f64 },

    #[error("optimal report {report} misses the true quantile {truth} by {gap:e} (tolerance {tolerance:e})")]
    Untruthful {
        report: f64,
        truth: f64,
        gap: f64,
        tolerance: f64,
        /// (report, expected utility) over the search grid.
        curve: Vec<(f64, f64)>,
    },
}

/// Rejects values outside `[lo, hi]`, including NaN.
pub(crate) fn check_range(what: &'static str, value: f64, lo: f64, hi: f64, domain: &'static str) -> Result<f64> {
    if value >= lo && value <= hi {
        Ok(value)
    } else {
        Err(Error::Domain { what, value, domain })
    }
}

pub(crate) fn check_unit(what: &'static str, value: f64) -> Result<f64> {
    check_range(what, value, 0.0, 1.0, "[0, 1]")
}
