//! The externally randomized quantile mechanism.
//!
//! To elicit the `α`-quantile the elicitor draws `ξ ~ U[0, 1]` and, independently,
//! `d ~ Bernoulli(α)`. The expert reports `q`; after `θ` is realized the expert
//! receives `r·1{θ ≤ ξ}` if `q < ξ` and `r·d` if `q ≥ ξ`.
//!
//! Given `ξ`, the expert faces either the lottery `(r, F(ξ))` or `(r, α)`, so
//! expected utility is `u(r)(F(ξ)1{q < ξ} + α 1{q ≥ ξ})`, and averaging over `ξ`
//!
//! ```text
//! v(q) = u(r) (∫_q^1 F(t) dt + α q),      v'(q) = u(r) (α − F(q)).
//! ```
//!
//! `v` is concave with its maximum at the true quantile for every increasing
//! `u`. Paying `r·α` in place of the Bernoulli draw (the naive variant) gives
//! `u(r)∫_q^1 F + u(rα) q`, whose maximum solves `F(q) = u(rα)/u(r)` and is
//! biased whenever `u` is nonlinear.

use std::io::{self, Write};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::beliefs::Belief;
use crate::error::{check_unit, Error, Result};
use crate::numeric::{maximize, SEARCH_GRID};
use crate::streams::{trial_stream, Purpose};
use crate::utility::Utility;

/// Target level `α` and reward `r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawConfig")]
pub struct MechanismConfig {
    alpha: f64,
    reward: f64,
}

#[derive(Deserialize)]
struct RawConfig {
    alpha: f64,
    reward: f64,
}

impl TryFrom<RawConfig> for MechanismConfig {
    type Error = Error;

    fn try_from(raw: RawConfig) -> Result<Self> {
        MechanismConfig::new(raw.alpha, raw.reward)
    }
}

impl MechanismConfig {
    pub fn new(alpha: f64, reward: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Domain { what: "alpha", value: alpha, domain: "(0, 1)" });
        }
        if !(reward > 0.0 && reward.is_finite()) {
            return Err(Error::Domain { what: "reward", value: reward, domain: "(0, ∞)" });
        }
        Ok(Self { alpha, reward })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn reward(&self) -> f64 {
        self.reward
    }
}

impl Default for MechanismConfig {
    fn default() -> Self {
        Self { alpha: 0.5, reward: 1.0 }
    }
}

/// The genie's external randomization for one elicitation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenieDraw {
    pub xi: f64,
    pub d: u8,
}

impl GenieDraw {
    pub fn new(xi: f64, d: u8) -> Result<Self> {
        check_unit("xi", xi)?;
        if d > 1 {
            return Err(Error::Domain { what: "d", value: d as f64, domain: "{0, 1}" });
        }
        Ok(Self { xi, d })
    }
}

/// Independent streams for `ξ` and `d`.
#[derive(Debug, Clone)]
pub struct GenieStreams {
    xi: ChaCha8Rng,
    d: ChaCha8Rng,
}

impl GenieStreams {
    /// Streams for draw number `index` under `seed`.
    pub fn new(seed: u64, index: u64) -> Self {
        Self {
            xi: trial_stream(seed, index, Purpose::Xi),
            d: trial_stream(seed, index, Purpose::Bernoulli),
        }
    }
}

pub fn draw_genie(config: &MechanismConfig, streams: &mut GenieStreams) -> GenieDraw {
    let xi: f64 = streams.xi.random();
    let u: f64 = streams.d.random();
    GenieDraw { xi, d: u8::from(u < config.alpha) }
}

/// Which payment rule fired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// `q < ξ`: paid `r` if `θ ≤ ξ`.
    Xi,
    /// `q ≥ ξ`: paid `r·d`.
    D,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardOutcome {
    pub payoff: f64,
    pub branch: Branch,
    pub report: f64,
    pub theta: f64,
    pub draw: GenieDraw,
}

/// Applies the reward rule. A report equal to `ξ` takes the `d` branch.
pub fn settle_reward(config: &MechanismConfig, q: f64, draw: GenieDraw, theta: f64) -> Result<RewardOutcome> {
    check_unit("q", q)?;
    check_unit("theta", theta)?;
    let (branch, win) = if q < draw.xi { (Branch::Xi, theta <= draw.xi) } else { (Branch::D, draw.d == 1) };
    let payoff = if win { config.reward } else { 0.0 };
    Ok(RewardOutcome { payoff, branch, report: q, theta, draw })
}

/// `v(q) = u(r) (∫_q^1 F(t) dt + α q)`.
pub fn expected_utility(config: &MechanismConfig, belief: &dyn Belief, utility: &Utility, q: f64) -> Result<f64> {
    check_unit("q", q)?;
    let ur = utility.evaluate(config.reward)?;
    Ok(ur * (belief.cdf_integral(q, 1.0)? + config.alpha * q))
}

/// `v(q | ξ) = u(r) (F(ξ) 1{q < ξ} + α 1{q ≥ ξ})`.
pub fn conditional_expected_utility(
    config: &MechanismConfig,
    belief: &dyn Belief,
    utility: &Utility,
    q: f64,
    xi: f64,
) -> Result<f64> {
    check_unit("q", q)?;
    check_unit("xi", xi)?;
    let ur = utility.evaluate(config.reward)?;
    Ok(if q < xi { ur * belief.cdf(xi) } else { ur * config.alpha })
}

/// `u(r) ∫_q^1 F(t) dt + u(rα) q`: the Bernoulli draw replaced by its mean.
pub fn naive_expected_utility(
    config: &MechanismConfig,
    belief: &dyn Belief,
    utility: &Utility,
    q: f64,
) -> Result<f64> {
    check_unit("q", q)?;
    let ur = utility.evaluate(config.reward)?;
    let ura = utility.evaluate(config.reward * config.alpha)?;
    Ok(ur * belief.cdf_integral(q, 1.0)? + ura * q)
}

/// The report maximizing `v(q)`, checked against the true quantile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalReport {
    pub report: f64,
    pub quantile: f64,
    pub gap: f64,
    pub value: f64,
}

/// Argmax, maximum and the sampled curve.
type Maximized = (f64, f64, Vec<(f64, f64)>);

fn maximize_checked<F>(objective: F) -> Result<Maximized>
where
    F: Fn(f64) -> Result<f64>,
{
    let failure = std::cell::Cell::new(None);
    let (best, curve) = maximize(
        |q| match objective(q) {
            Ok(v) => v,
            Err(e) => {
                failure.set(Some(e));
                f64::NEG_INFINITY
            }
        },
        0.0,
        1.0,
        SEARCH_GRID,
    );
    match failure.take() {
        Some(e) => Err(e),
        None => Ok((best.x, best.value, curve)),
    }
}

/// Maximizes `v(q)` over `[0, 1]`; fails with the full curve attached if the
/// maximizer is farther than `tolerance` from the `α`-quantile.
pub fn optimal_report(
    config: &MechanismConfig,
    belief: &dyn Belief,
    utility: &Utility,
    tolerance: f64,
) -> Result<OptimalReport> {
    let truth = belief.quantile(config.alpha)?;
    let (report, value, curve) = maximize_checked(|q| expected_utility(config, belief, utility, q))?;
    let gap = (report - truth).abs();
    if gap > tolerance {
        return Err(Error::Untruthful { report, truth, gap, tolerance, curve });
    }
    Ok(OptimalReport { report, quantile: truth, gap, value })
}

/// Maximizer of the naive variant and its distance from the true quantile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NaiveReport {
    pub report: f64,
    pub quantile: f64,
    /// `report − quantile`.
    pub bias: f64,
    /// `u(rα) / u(r)`, the level the naive report actually targets.
    pub target_probability: f64,
}

pub fn naive_optimal_report(config: &MechanismConfig, belief: &dyn Belief, utility: &Utility) -> Result<NaiveReport> {
    let truth = belief.quantile(config.alpha)?;
    let target = utility.evaluate(config.reward * config.alpha)? / utility.evaluate(config.reward)?;
    let (report, _, _) = maximize_checked(|q| naive_expected_utility(config, belief, utility, q))?;
    Ok(NaiveReport { report, quantile: truth, bias: report - truth, target_probability: target })
}

/// One row of a utility curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub q: f64,
    pub v: f64,
    pub naive_v: f64,
}

/// `v(q)` and the naive variant over `grid`.
pub fn utility_curve(
    config: &MechanismConfig,
    belief: &dyn Belief,
    utility: &Utility,
    grid: &[f64],
) -> Result<Vec<CurvePoint>> {
    grid.iter()
        .map(|&q| {
            Ok(CurvePoint {
                q,
                v: expected_utility(config, belief, utility, q)?,
                naive_v: naive_expected_utility(config, belief, utility, q)?,
            })
        })
        .collect()
}

pub fn write_curve_csv<W: Write>(points: &[CurvePoint], mut out: W) -> io::Result<()> {
    writeln!(out, "q,v,naive_v")?;
    for p in points {
        writeln!(out, "{},{},{}", p.q, p.v, p.naive_v)?;
    }
    Ok(())
}

/// `(payoff, win probability)`: pays `payoff` with probability `p`, else 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lottery {
    pub payoff: f64,
    pub win_probability: f64,
}

impl Lottery {
    /// First-order stochastic dominance for lotteries sharing a positive payoff.
    pub fn dominates(&self, other: &Lottery) -> bool {
        self.payoff == other.payoff && self.win_probability > other.win_probability
    }
}

/// How a deviating report compares with truth-telling for `ξ` in a region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionOutcome {
    /// Both reports face the same lottery.
    Identical,
    /// Truth-telling's lottery strictly dominates the deviation's.
    TruthDominates,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XiRegion {
    pub lower: f64,
    pub upper: f64,
    pub outcome: RegionOutcome,
}

/// Lotteries faced by each report at one `ξ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub xi: f64,
    pub cdf_at_xi: f64,
    pub truthful: Lottery,
    pub deviation: Lottery,
}

impl Certificate {
    pub fn holds(&self) -> bool {
        self.truthful.dominates(&self.deviation)
    }
}

/// The three `ξ`-regions separating a deviating report from the true quantile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceWitness {
    pub alpha: f64,
    pub reward: f64,
    pub report: f64,
    pub quantile: f64,
    pub regions: Vec<XiRegion>,
}

impl DominanceWitness {
    /// The open interval of `ξ` where the reports' lotteries differ, if any.
    pub fn deviation_region(&self) -> Option<(f64, f64)> {
        self.regions
            .iter()
            .find(|r| r.outcome == RegionOutcome::TruthDominates)
            .map(|r| (r.lower, r.upper))
    }

    pub fn is_empty(&self) -> bool {
        self.deviation_region().is_none()
    }

    /// Lotteries at `ξ` for a truthful and a deviating expert.
    pub fn certify(&self, belief: &dyn Belief, xi: f64) -> Certificate {
        let f = belief.cdf(xi);
        let lottery = |q: f64| Lottery {
            payoff: self.reward,
            win_probability: if q < xi { f } else { self.alpha },
        };
        Certificate { xi, cdf_at_xi: f, truthful: lottery(self.quantile), deviation: lottery(self.report) }
    }

    /// Certificates at `n` points drawn uniformly inside the deviation region.
    pub fn sample_certificates<R: Rng + ?Sized>(&self, belief: &dyn Belief, n: usize, rng: &mut R) -> Vec<Certificate> {
        let Some((lo, hi)) = self.deviation_region() else {
            return Vec::new();
        };
        (0..n)
            .map(|_| {
                let mut xi = lo + (hi - lo) * rng.random::<f64>();
                if xi <= lo {
                    xi = 0.5 * (lo + hi);
                }
                self.certify(belief, xi)
            })
            .collect()
    }
}

/// Reports within this distance of the quantile count as truthful.
pub const WITNESS_TOLERANCE: f64 = 1e-9;

/// Partitions `ξ ∈ [0, 1]` for a deviating report `q`.
///
/// For `q > q_α`, `ξ ∈ (q_α, q]` gives the deviator `(r, α)` and the truthful
/// expert `(r, F(ξ))` with `F(ξ) > α`; elsewhere both face the same lottery.
/// For `q < q_α` the region is `(q, q_α]`, where the deviator gets
/// `(r, F(ξ))` with `F(ξ) < α` and the truthful expert `(r, α)`.
pub fn dominance_witness(config: &MechanismConfig, belief: &dyn Belief, q: f64) -> Result<DominanceWitness> {
    check_unit("q", q)?;
    let truth = belief.quantile(config.alpha)?;
    let (lo, hi) = if q < truth { (q, truth) } else { (truth, q) };
    let regions = if hi - lo <= WITNESS_TOLERANCE {
        vec![
            XiRegion { lower: 0.0, upper: truth, outcome: RegionOutcome::Identical },
            XiRegion { lower: truth, upper: 1.0, outcome: RegionOutcome::Identical },
        ]
    } else {
        vec![
            XiRegion { lower: 0.0, upper: lo, outcome: RegionOutcome::Identical },
            XiRegion { lower: lo, upper: hi, outcome: RegionOutcome::TruthDominates },
            XiRegion { lower: hi, upper: 1.0, outcome: RegionOutcome::Identical },
        ]
    };
    Ok(DominanceWitness { alpha: config.alpha, reward: config.reward, report: q, quantile: truth, regions })
}
