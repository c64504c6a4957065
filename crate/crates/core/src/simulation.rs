//! Monte Carlo harness: simulated experts against the mechanism.
//!
//! Trial `i` of a run with seed `s` draws `θ`, `ξ` and `d` from substreams
//! keyed by `(s, i)`, so every trial is reproducible on its own and results
//! do not depend on execution order. `θ` comes from the agent's own belief.

use std::fmt::Write as _;
use std::io::{self, Write};
use std::sync::Arc;

use chrono::DateTime;
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::beliefs::Belief;
use crate::error::{Error, Result};
use crate::mechanism::{
    draw_genie, expected_utility, naive_expected_utility, optimal_report, settle_reward, Branch, GenieDraw,
    GenieStreams, MechanismConfig,
};
use crate::session::{Entropy, Session};
use crate::streams::{derive_seed, trial_stream, Purpose};
use crate::utility::Utility;

/// How a simulated expert chooses a report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Reports the true `α`-quantile of its belief.
    Truthful,
    /// Maximizes its expected utility numerically.
    Optimizer,
    /// Always reports the given value.
    Fixed(f64),
}

impl Strategy {
    pub fn label(&self) -> String {
        match self {
            Strategy::Truthful => "truthful".into(),
            Strategy::Optimizer => "optimizer".into(),
            Strategy::Fixed(q) => format!("fixed({q})"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExpertAgent {
    pub belief: Arc<dyn Belief>,
    pub utility: Utility,
    pub strategy: Strategy,
}

impl ExpertAgent {
    pub fn new(belief: Arc<dyn Belief>, utility: Utility, strategy: Strategy) -> Result<Self> {
        if let Strategy::Fixed(q) = strategy {
            if !(0.0..=1.0).contains(&q) {
                return Err(Error::Domain { what: "fixed report", value: q, domain: "[0, 1]" });
            }
        }
        Ok(Self { belief, utility, strategy })
    }

    pub fn report(&self, config: &MechanismConfig) -> Result<f64> {
        match self.strategy {
            Strategy::Truthful => self.belief.quantile(config.alpha()),
            Strategy::Optimizer => {
                Ok(optimal_report(config, self.belief.as_ref(), &self.utility, f64::INFINITY)?.report)
            }
            Strategy::Fixed(q) => Ok(q),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub report: f64,
    pub xi: f64,
    pub d: u8,
    pub theta: f64,
    pub branch: Branch,
    pub payoff: f64,
    pub utility: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub n: usize,
    pub mean_utility: f64,
    /// Standard error of the mean; infinite for fewer than two trials.
    pub std_error: f64,
    /// Fraction of trials settled by the Bernoulli branch.
    pub d_branch_fraction: f64,
}

/// Running mean and variance (Welford).
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: usize,
    mean: f64,
    m2: f64,
    d_branch: usize,
}

impl Moments {
    fn push(&mut self, utility: f64, branch: Branch) {
        self.n += 1;
        let delta = utility - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (utility - self.mean);
        if branch == Branch::D {
            self.d_branch += 1;
        }
    }

    fn summary(&self) -> TrialSummary {
        let std_error = if self.n < 2 {
            f64::INFINITY
        } else {
            (self.m2 / (self.n - 1) as f64 / self.n as f64).sqrt()
        };
        TrialSummary {
            n: self.n,
            mean_utility: self.mean,
            std_error,
            d_branch_fraction: self.d_branch as f64 / self.n.max(1) as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialBatch {
    pub config: MechanismConfig,
    pub strategy: Strategy,
    pub seed: u64,
    pub records: Vec<TrialRecord>,
    pub summary: TrialSummary,
}

impl TrialBatch {
    /// Summary recomputed from the stored records.
    pub fn recompute_summary(&self) -> TrialSummary {
        let mut m = Moments::default();
        for r in &self.records {
            m.push(r.utility, r.branch);
        }
        m.summary()
    }

    pub fn write_records_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "trial,report,xi,d,theta,branch,payoff,utility")?;
        for (i, r) in self.records.iter().enumerate() {
            let branch = match r.branch {
                Branch::Xi => "xi",
                Branch::D => "d",
            };
            writeln!(out, "{i},{},{},{},{},{branch},{},{}", r.report, r.xi, r.d, r.theta, r.payoff, r.utility)?;
        }
        Ok(())
    }

    pub fn write_summary_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let s = &self.summary;
        writeln!(out, "strategy,alpha,reward,seed,n,mean_utility,std_error,d_branch_fraction")?;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            self.strategy.label(),
            self.config.alpha(),
            self.config.reward(),
            self.seed,
            s.n,
            s.mean_utility,
            s.std_error,
            s.d_branch_fraction
        )
    }
}

fn simulate_trial(
    config: &MechanismConfig,
    belief: &dyn Belief,
    utility: &Utility,
    report: f64,
    seed: u64,
    index: u64,
) -> Result<TrialRecord> {
    let theta = belief.sample(&mut trial_stream(seed, index, Purpose::Theta));
    let draw = draw_genie(config, &mut GenieStreams::new(seed, index));
    let outcome = settle_reward(config, report, draw, theta)?;
    Ok(TrialRecord {
        report,
        xi: draw.xi,
        d: draw.d,
        theta,
        branch: outcome.branch,
        payoff: outcome.payoff,
        utility: utility.evaluate(outcome.payoff)?,
    })
}

fn summarize_trials(
    config: &MechanismConfig,
    belief: &dyn Belief,
    utility: &Utility,
    report: f64,
    n: usize,
    seed: u64,
) -> Result<TrialSummary> {
    let mut m = Moments::default();
    for i in 0..n as u64 {
        let r = simulate_trial(config, belief, utility, report, seed, i)?;
        m.push(r.utility, r.branch);
    }
    Ok(m.summary())
}

/// Runs `n` independent elicitations of `agent` under `config`.
pub fn run_trials(config: &MechanismConfig, agent: &ExpertAgent, n: usize, seed: u64) -> Result<TrialBatch> {
    if n == 0 {
        return Err(Error::InvalidParameter("trial count must be at least 1".into()));
    }
    let report = agent.report(config)?;
    let records = (0..n as u64)
        .map(|i| simulate_trial(config, agent.belief.as_ref(), &agent.utility, report, seed, i))
        .collect::<Result<Vec<_>>>()?;
    let mut batch = TrialBatch {
        config: *config,
        strategy: agent.strategy,
        seed,
        records,
        summary: Moments::default().summary(),
    };
    batch.summary = batch.recompute_summary();
    Ok(batch)
}

/// Empirical and analytic expected utility at one report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalPoint {
    pub q: f64,
    pub analytic: f64,
    pub naive_analytic: f64,
    pub empirical_mean: f64,
    pub std_error: f64,
}

impl EmpiricalPoint {
    /// `|empirical − analytic|` in standard errors.
    pub fn z_score(&self) -> f64 {
        (self.empirical_mean - self.analytic).abs() / self.std_error
    }
}

/// Monte Carlo `v(q)` at each grid point, `n` trials per point, with the
/// analytic genie and naive curves alongside.
///
/// Every grid point is scored against the same `n` draws of `(θ, ξ, d)`, so
/// differences between neighbouring points carry much less noise than the
/// points themselves.
pub fn payoff_curve(
    config: &MechanismConfig,
    belief: &dyn Belief,
    utility: &Utility,
    grid: &[f64],
    n: usize,
    seed: u64,
) -> Result<Vec<EmpiricalPoint>> {
    if n == 0 {
        return Err(Error::InvalidParameter("trial count must be at least 1".into()));
    }
    let draws: Vec<(f64, GenieDraw)> = (0..n as u64)
        .map(|i| {
            let theta = belief.sample(&mut trial_stream(seed, i, Purpose::Theta));
            (theta, draw_genie(config, &mut GenieStreams::new(seed, i)))
        })
        .collect();
    let win = utility.evaluate(config.reward())?;
    let lose = utility.evaluate(0.0)?;
    grid.iter()
        .map(|&q| {
            let mut m = Moments::default();
            for &(theta, draw) in &draws {
                let outcome = settle_reward(config, q, draw, theta)?;
                m.push(if outcome.payoff > 0.0 { win } else { lose }, outcome.branch);
            }
            let s = m.summary();
            Ok(EmpiricalPoint {
                q,
                analytic: expected_utility(config, belief, utility, q)?,
                naive_analytic: naive_expected_utility(config, belief, utility, q)?,
                empirical_mean: s.mean_utility,
                std_error: s.std_error,
            })
        })
        .collect()
}

pub fn write_payoff_curve_csv<W: Write>(points: &[EmpiricalPoint], mut out: W) -> io::Result<()> {
    writeln!(out, "q,v,naive_v,empirical_mean,std_error")?;
    for p in points {
        writeln!(out, "{},{},{},{},{}", p.q, p.analytic, p.naive_analytic, p.empirical_mean, p.std_error)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TournamentEntry {
    pub rank: usize,
    pub strategy: Strategy,
    pub report: f64,
    pub mean_utility: f64,
    pub std_error: f64,
}

/// Ranks strategies by mean utility. All strategies share the same trial
/// streams, so differences reflect the reports alone.
pub fn strategy_tournament(
    config: &MechanismConfig,
    belief: Arc<dyn Belief>,
    utility: Utility,
    strategies: &[Strategy],
    n: usize,
    seed: u64,
) -> Result<Vec<TournamentEntry>> {
    if strategies.is_empty() {
        return Err(Error::InvalidParameter("a tournament needs at least one strategy".into()));
    }
    let mut entries = strategies
        .iter()
        .map(|&strategy| {
            let agent = ExpertAgent::new(belief.clone(), utility, strategy)?;
            let report = agent.report(config)?;
            let s = summarize_trials(config, belief.as_ref(), &utility, report, n, seed)?;
            Ok(TournamentEntry { rank: 0, strategy, report, mean_utility: s.mean_utility, std_error: s.std_error })
        })
        .collect::<Result<Vec<_>>>()?;
    entries.sort_by(|a, b| b.mean_utility.total_cmp(&a.mean_utility));
    for (i, e) in entries.iter_mut().enumerate() {
        e.rank = i + 1;
    }
    Ok(entries)
}

/// Per-level result of repeated multi-level sessions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub level: f64,
    pub report: f64,
    pub mean_utility: f64,
    pub std_error: f64,
    pub analytic: f64,
}

/// Runs `n` complete sessions (create, truthful reports, reveal, settle) and
/// summarizes the utility earned at each level. One `θ` settles all levels of
/// a session; each level has its own `(ξ, d)`.
pub fn simulate_sessions(
    levels: &[f64],
    reward: f64,
    belief: &dyn Belief,
    utility: &Utility,
    n: usize,
    seed: u64,
) -> Result<Vec<LevelSummary>> {
    let stamp = DateTime::from_timestamp(0, 0).expect("epoch");
    let session_err = |e: crate::session::SessionError| Error::InvalidParameter(e.to_string());
    let template = Session::create(Uuid::nil(), levels, reward, Entropy::Seed(seed), stamp).map_err(session_err)?;
    let sorted = template.levels().to_vec();
    let reports = sorted.iter().map(|&l| belief.quantile(l)).collect::<Result<Vec<_>>>()?;
    let mut moments = vec![Moments::default(); sorted.len()];

    for i in 0..n as u64 {
        let session_seed = derive_seed(seed, i);
        let mut session = Session::create(Uuid::from_u64_pair(seed, i), &sorted, reward, Entropy::Seed(session_seed), stamp)
            .map_err(session_err)?;
        for (&level, &q) in sorted.iter().zip(&reports) {
            session.submit_report(level, q, stamp).map_err(session_err)?;
        }
        session.reveal(stamp).map_err(session_err)?;
        let theta = belief.sample(&mut trial_stream(session_seed, 0, Purpose::Theta));
        let settlement = session.settle(theta, "simulation", stamp).map_err(session_err)?;
        for (m, p) in moments.iter_mut().zip(&settlement.payoffs) {
            m.push(utility.evaluate(p.payoff)?, p.branch);
        }
    }

    sorted
        .iter()
        .zip(&reports)
        .zip(&moments)
        .map(|((&level, &report), m)| {
            let config = MechanismConfig::new(level, reward)?;
            let s = m.summary();
            Ok(LevelSummary {
                level,
                report,
                mean_utility: s.mean_utility,
                std_error: s.std_error,
                analytic: expected_utility(&config, belief, utility, report)?,
            })
        })
        .collect()
}

/// Text table of tournament results.
pub fn format_tournament(entries: &[TournamentEntry]) -> String {
    let mut out = String::from("rank,strategy,report,mean_utility,std_error\n");
    for e in entries {
        let _ = writeln!(out, "{},{},{},{},{}", e.rank, e.strategy.label(), e.report, e.mean_utility, e.std_error);
    }
    out
}
