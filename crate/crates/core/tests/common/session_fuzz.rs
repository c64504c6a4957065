//! Random command sequences against the session state machine.

use chrono::{DateTime, Duration, Utc};
use elicit_core::mechanism::settle_reward;
use elicit_core::session::{Entropy, LogRecord, Session, SessionError, SessionEvent, SessionState};
use elicit_core::streams::substream;
use elicit_core::MechanismConfig;
use rand::seq::IndexedRandom;
use rand::Rng;
use uuid::Uuid;

#[derive(Debug, Clone, Copy)]
enum Op {
    Submit,
    SubmitUnknownLevel,
    SubmitOutOfRange,
    Reveal,
    Settle,
    Fit,
}

const OPS: [Op; 8] =
    [Op::Submit, Op::Submit, Op::Submit, Op::SubmitUnknownLevel, Op::SubmitOutOfRange, Op::Reveal, Op::Settle, Op::Fit];

const LEVEL_POOL: [f64; 7] = [0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95];

#[derive(Debug, Default)]
pub struct FuzzReport {
    pub cases: usize,
    pub steps: usize,
    pub revealed: usize,
    pub settled: usize,
    /// Sessions whose replayed JSON matched the live session byte for byte.
    pub identical_replays: usize,
    /// Pre-reveal views checked for draw or nonce content.
    pub leak_checks: usize,
    pub violations: Vec<String>,
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("serializable")
}

/// Problems with a pre-reveal view, if any.
pub fn leak_in(session: &Session, nonce_hex: &str) -> Option<String> {
    let view = to_json(&session.view());
    if view.contains("\"draws\"") || view.contains("\"nonce\"") || view.contains(nonce_hex) {
        return Some(format!("draw fields in pre-reveal view: {view}"));
    }
    session
        .draws()
        .iter()
        .find(|d| view.contains(&d.xi.to_string()))
        .map(|d| format!("xi {} appears in pre-reveal view", d.xi))
}

fn created_nonce(records: &[LogRecord]) -> String {
    match &records[0].event {
        SessionEvent::Created { nonce, .. } => nonce.clone(),
        other => panic!("first event is {}", other.kind()),
    }
}

pub fn run(cases: u64, seed: u64) -> FuzzReport {
    let mut rng = substream(seed, 0);
    let mut report = FuzzReport::default();
    let start: DateTime<Utc> = DateTime::from_timestamp(1_700_000_000, 0).expect("valid timestamp");

    for case in 0..cases {
        let mut fail = |msg: String| report.violations.push(format!("case {case}: {msg}"));
        let k = rng.random_range(1..=5);
        let levels: Vec<f64> = LEVEL_POOL.choose_multiple(&mut rng, k).copied().collect();
        let reward = rng.random_range(0.1..10.0);
        let mut now = start;
        let mut session = match Session::create(Uuid::from_u64_pair(seed, case), &levels, reward, Entropy::Seed(case), now) {
            Ok(s) => s,
            Err(e) => {
                fail(format!("create failed: {e}"));
                continue;
            }
        };
        let mut log = session.take_pending();
        let nonce = created_nonce(&log);
        if session.state() != SessionState::Reporting {
            fail(format!("new session is {}", session.state()));
        }

        for _ in 0..rng.random_range(1..30) {
            report.steps += 1;
            now += Duration::seconds(1);
            let before = session.state();
            let version = session.version();
            let op = *OPS.choose(&mut rng).expect("nonempty");
            let result: Result<(), SessionError> = match op {
                Op::Submit => {
                    let level = *session.levels().choose(&mut rng).expect("nonempty");
                    session.submit_report(level, rng.random(), now).map(|_| ())
                }
                Op::SubmitUnknownLevel => session.submit_report(0.333, 0.5, now).map(|_| ()),
                Op::SubmitOutOfRange => {
                    let level = session.levels()[0];
                    session.submit_report(level, 1.5, now).map(|_| ())
                }
                Op::Reveal => session.reveal(now),
                Op::Settle => session.settle(rng.random(), "fuzz", now).map(|_| ()),
                Op::Fit => session.fitted_cdf().map(|_| ()),
            };
            let emitted = session.take_pending();
            let after = session.state();

            match (&result, op) {
                (Ok(()), Op::Submit) => {
                    if before != SessionState::Reporting || after != SessionState::Reporting || emitted.len() != 1 {
                        fail(format!("submit moved {before} -> {after} with {} events", emitted.len()));
                    }
                }
                (Ok(()), Op::Reveal) => {
                    report.revealed += 1;
                    if (before, after) != (SessionState::Reporting, SessionState::Revealed) {
                        fail(format!("reveal moved {before} -> {after}"));
                    }
                    if session.reports().count() != session.levels().len() {
                        fail("revealed with missing reports".into());
                    }
                }
                (Ok(()), Op::Settle) => {
                    report.settled += 1;
                    if (before, after) != (SessionState::Revealed, SessionState::Settled) {
                        fail(format!("settle moved {before} -> {after}"));
                    }
                    let s = session.settlement().expect("settled");
                    for (p, (draw, r)) in s.payoffs.iter().zip(session.draws().iter().zip(session.reports())) {
                        let c = MechanismConfig::new(p.level, reward).expect("valid");
                        let expected = settle_reward(&c, r.value, *draw, s.theta).expect("valid");
                        if p.payoff != expected.payoff {
                            fail(format!("level {} paid {} instead of {}", p.level, p.payoff, expected.payoff));
                        }
                    }
                }
                (Ok(()), Op::Fit) => {
                    let values: Vec<f64> = session.reports().map(|r| r.value).collect();
                    if !emitted.is_empty() || !values.windows(2).all(|w| w[0] < w[1]) {
                        fail(format!("fit accepted reports {values:?}"));
                    }
                }
                (Ok(()), op) => fail(format!("{op:?} succeeded")),
                (Err(_), _) => {
                    if !emitted.is_empty() || before != after || version != session.version() {
                        fail(format!("failed {op:?} changed the session"));
                    }
                }
            }
            if session.version() != (log.len() + emitted.len()) as u64 {
                fail(format!("version {} with {} records", session.version(), log.len() + emitted.len()));
            }
            log.extend(emitted);

            if matches!(after, SessionState::Created | SessionState::Reporting) {
                report.leak_checks += 1;
                if let Some(leak) = leak_in(&session, &nonce) {
                    fail(leak);
                }
            } else if session.view().draws.is_none() {
                fail(format!("draws hidden in state {after}"));
            }
        }

        let live = to_json(&session);
        let reserialized: Vec<LogRecord> =
            log.iter().map(|r| serde_json::from_str(&to_json(r)).expect("log record parses")).collect();
        match Session::replay(&reserialized) {
            Ok(replayed) if to_json(&replayed) == live => report.identical_replays += 1,
            Ok(_) => fail("replay differs from the live session".into()),
            Err(e) => fail(format!("replay failed: {e}")),
        }
        report.cases += 1;
    }
    report
}
