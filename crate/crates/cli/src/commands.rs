//! `verify`, `curve` and `simulate`. Each writes CSV and is deterministic
//! given its configuration.

use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;

use elicit_core::mechanism::{naive_optimal_report, optimal_report};
use elicit_core::scoring::{verify_properness, QuantileScoringRule};
use elicit_core::simulation::{format_tournament, payoff_curve, strategy_tournament, write_payoff_curve_csv};
use elicit_core::{Belief, BeliefSpec, Error, MechanismConfig, Utility};

use crate::config::{ExperimentConfig, Variant};
use crate::CliError;

/// One line of the verification report.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyRow {
    pub case: String,
    pub argmax: f64,
    pub truth: f64,
    pub gap: f64,
    /// The naive variant with a nonlinear utility is known to miss.
    pub expected_failure: bool,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOutcome {
    pub rows: Vec<VerifyRow>,
}

impl VerifyOutcome {
    pub fn unexpected_failures(&self) -> usize {
        self.rows.iter().filter(|r| !r.passed && !r.expected_failure).count()
    }

    pub fn expected_failures(&self) -> usize {
        self.rows.iter().filter(|r| !r.passed && r.expected_failure).count()
    }

    pub fn max_gap(&self) -> f64 {
        self.rows.iter().filter(|r| !r.expected_failure).map(|r| r.gap).fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "case,argmax,truth,gap,expected_failure,status")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                csv_field(&r.case),
                r.argmax,
                r.truth,
                r.gap,
                r.expected_failure,
                if r.passed { "PASS" } else { "FAIL" }
            )?;
        }
        Ok(())
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

fn standard_beliefs() -> Vec<BeliefSpec> {
    vec![
        BeliefSpec::Uniform,
        BeliefSpec::Beta { alpha: 2.0, beta: 2.0 },
        BeliefSpec::Beta { alpha: 2.0, beta: 5.0 },
        BeliefSpec::Beta { alpha: 5.0, beta: 2.0 },
        BeliefSpec::PiecewiseLinear { knots: vec![(0.0, 0.0), (0.25, 0.4), (0.5, 0.6), (0.8, 0.9), (1.0, 1.0)] },
    ]
}

fn standard_utilities() -> Vec<Utility> {
    vec![Utility::Linear, Utility::Exponential { aversion: 1.0 }, Utility::Exponential { aversion: 3.0 }, Utility::Power {
        exponent: 0.5,
    }]
}

fn push_unique<T: PartialEq>(v: &mut Vec<T>, item: T) {
    if !v.contains(&item) {
        v.push(item);
    }
}

pub fn build_belief(spec: &BeliefSpec) -> Result<Arc<dyn Belief>, CliError> {
    spec.build().map_err(|e| CliError::Config(format!("[belief]: {e}")))
}

#[derive(Debug, Clone, Copy)]
enum RuleKind {
    Pinball,
    Power3,
    Exp3,
}

impl RuleKind {
    fn build(self, beta: f64) -> QuantileScoringRule {
        match self {
            RuleKind::Pinball => QuantileScoringRule::pinball(beta),
            RuleKind::Power3 => QuantileScoringRule::power(3.0).expect("positive power"),
            RuleKind::Exp3 => {
                QuantileScoringRule::new("s=exp(3x)", Arc::new(|x: f64| (3.0 * x).exp()), Arc::new(|_| 0.0))
                    .expect("increasing")
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Job {
    Mechanism { belief: usize, utility: usize, level: f64 },
    Rule { belief: usize, rule: RuleKind, level: f64 },
}

/// Checks every (belief, utility, level) mechanism case and every
/// (belief, scoring rule, level) properness case.
pub fn verify(config: &ExperimentConfig) -> Result<VerifyOutcome, CliError> {
    let tolerance = config.verify.tolerance;
    if !(tolerance > 0.0 && tolerance.is_finite()) {
        return Err(CliError::Config(format!("tolerance must be positive, got {tolerance}")));
    }
    let mut specs = vec![config.belief.clone()];
    let mut utilities = vec![config.utility];
    if config.verify.sweep {
        standard_beliefs().into_iter().for_each(|b| push_unique(&mut specs, b));
        standard_utilities().into_iter().for_each(|u| push_unique(&mut utilities, u));
    }
    let beliefs = specs.iter().map(build_belief).collect::<Result<Vec<_>, _>>()?;
    let mut levels = config.verify.levels.clone();
    push_unique(&mut levels, config.mechanism.alpha);
    for &l in &levels {
        MechanismConfig::new(l, config.mechanism.reward).map_err(|e| CliError::Config(format!("level {l}: {e}")))?;
    }

    let mut jobs = Vec::new();
    for b in 0..beliefs.len() {
        for u in 0..utilities.len() {
            jobs.extend(levels.iter().map(|&level| Job::Mechanism { belief: b, utility: u, level }));
        }
    }
    for b in 0..beliefs.len() {
        for &level in &levels {
            for rule in [RuleKind::Pinball, RuleKind::Power3, RuleKind::Exp3] {
                jobs.push(Job::Rule { belief: b, rule, level });
            }
        }
    }

    let run = |job: Job| -> Result<VerifyRow, CliError> {
        match job {
            Job::Mechanism { belief, utility, level } => {
                let (b, u) = (beliefs[belief].as_ref(), &utilities[utility]);
                let c = MechanismConfig::new(level, config.mechanism.reward)?;
                let name = |variant: &str| format!("{variant} {} {} alpha={level}", b.label(), u.label());
                match config.mechanism.variant {
                    Variant::Genie => match optimal_report(&c, b, u, tolerance) {
                        Ok(r) => Ok(row(name("genie"), r.report, r.quantile, tolerance, false)),
                        Err(Error::Untruthful { report, truth, .. }) => {
                            Ok(row(name("genie"), report, truth, tolerance, false))
                        }
                        Err(e) => Err(e.into()),
                    },
                    Variant::Naive => {
                        let r = naive_optimal_report(&c, b, u)?;
                        Ok(row(name("naive"), r.report, r.quantile, tolerance, !u.is_linear()))
                    }
                }
            }
            Job::Rule { belief, rule, level } => {
                let b = beliefs[belief].as_ref();
                let rule = rule.build(level);
                let r = verify_properness(&rule, b, level, tolerance)?;
                Ok(row(format!("rule {} {} beta={level}", rule.name(), b.label()), r.argmax, r.quantile, tolerance, false))
            }
        }
    };

    let results: Vec<Mutex<Option<Result<VerifyRow, CliError>>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = thread::available_parallelism().map_or(1, |n| n.get()).min(jobs.len().max(1));
    thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&job) = jobs.get(i) else { break };
                *results[i].lock().expect("unpoisoned") = Some(run(job));
            });
        }
    });
    let rows = results
        .into_iter()
        .map(|m| m.into_inner().expect("unpoisoned").expect("every job ran"))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(VerifyOutcome { rows })
}

fn row(case: String, argmax: f64, truth: f64, tolerance: f64, expected_failure: bool) -> VerifyRow {
    let gap = (argmax - truth).abs();
    VerifyRow { case, argmax, truth, gap, expected_failure, passed: gap <= tolerance }
}

/// Analytic and simulated payoff curves over the configured grid.
pub fn curve<W: Write>(config: &ExperimentConfig, out: W) -> Result<usize, CliError> {
    let seed = config.require_seed()?;
    let c = config.mechanism.config()?;
    let belief = build_belief(&config.belief)?;
    let grid = config.grid.values()?;
    let points = payoff_curve(&c, belief.as_ref(), &config.utility, &grid, config.grid.trials, seed)?;
    write_payoff_curve_csv(&points, out)?;
    Ok(points.len())
}

/// Strategy tournament under the configured belief and utility.
pub fn simulate<W: Write>(config: &ExperimentConfig, mut out: W) -> Result<(), CliError> {
    let seed = config.require_seed()?;
    let c = config.mechanism.config()?;
    let belief = build_belief(&config.belief)?;
    let entries =
        strategy_tournament(&c, belief, config.utility, &config.simulate.strategies, config.grid.trials, seed)?;
    out.write_all(format_tournament(&entries).as_bytes())?;
    Ok(())
}
