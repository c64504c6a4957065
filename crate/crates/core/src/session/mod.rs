//! Live elicitation sessions.
//!
//! A session elicits several quantile levels from one expert under the
//! randomized mechanism. All `(ξ, d)` draws are generated at creation and only
//! a hash commitment is published; reports are accepted (and may be revised)
//! while the draws stay hidden, then the draws are revealed and checked
//! against the commitment, and finally every level is settled against a single
//! realized `θ`.
//!
//! The session is event sourced: every state change is a [`LogRecord`] and
//! [`Session::replay`] rebuilds an identical session from its records.

pub mod commitment;
mod events;
mod log;
mod store;

use chrono::{DateTime, Utc};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

use crate::beliefs::PiecewiseLinearBelief;
use crate::mechanism::{draw_genie, settle_reward, Branch, GenieDraw, GenieStreams, MechanismConfig};
use crate::streams::{trial_stream, Purpose};
use commitment::NONCE_LEN;

pub use events::{LogRecord, SessionEvent};
pub use log::EventLog;
pub use store::SessionStore;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SessionError {
    #[error("session {0} not found")]
    NotFound(Uuid),
    #[error("cannot {action} while the session is {state}")]
    WrongState { action: &'static str, state: SessionState },
    #[error("invalid levels: {0}")]
    InvalidLevels(String),
    #[error("invalid reward {0}: must be positive and finite")]
    InvalidReward(f64),
    #[error("level {0} is not part of this session")]
    UnknownLevel(f64),
    #[error("{what} {value} is outside [0, 1]")]
    OutOfRange { what: &'static str, value: f64 },
    #[error("levels {0:?} have no report")]
    MissingReports(Vec<f64>),
    #[error("revealed draws do not match the published commitment; session voided")]
    CommitmentMismatch,
    #[error("reports must strictly increase with the level before fitting: {0}")]
    CrossingReports(String),
    #[error("corrupt event log: {0}")]
    Replay(String),
    #[error("event log I/O failed: {0}")]
    Io(String),
}

pub type SessionResult<T> = Result<T, SessionError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    Created,
    Reporting,
    Revealed,
    Settled,
    Voided,
}

impl std::fmt::Display for SessionState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SessionState::Created => "created",
            SessionState::Reporting => "reporting",
            SessionState::Revealed => "revealed",
            SessionState::Settled => "settled",
            SessionState::Voided => "voided",
        };
        f.write_str(s)
    }
}

/// Where the hidden draws and nonce come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Entropy {
    /// Reproducible draws and nonce.
    Seed(u64),
    /// Fresh operating-system randomness.
    Os,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Revision {
    pub value: f64,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub level: f64,
    pub value: f64,
    pub timestamp: DateTime<Utc>,
    /// Superseded values, oldest first.
    pub revisions: Vec<Revision>,
}

/// Two reported quantiles out of order: `lower_level < higher_level` but
/// `lower_report > higher_report`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossingWarning {
    pub lower_level: f64,
    pub lower_report: f64,
    pub higher_level: f64,
    pub higher_report: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelPayoff {
    pub level: f64,
    pub report: f64,
    pub xi: f64,
    pub d: u8,
    pub branch: Branch,
    pub payoff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettlementRecord {
    pub theta: f64,
    pub payoffs: Vec<LevelPayoff>,
    pub total: f64,
    pub entered_by: String,
    pub timestamp: DateTime<Utc>,
}

/// A draw as disclosed after reveal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelDraw {
    pub level: f64,
    pub xi: f64,
    pub d: u8,
}

/// What the session API exposes. Draws and nonce appear only once revealed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: Uuid,
    pub state: SessionState,
    pub levels: Vec<f64>,
    pub reward: f64,
    pub commitment: String,
    pub created_at: DateTime<Utc>,
    pub reports: Vec<ReportRecord>,
    pub warnings: Vec<CrossingWarning>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub draws: Option<Vec<LevelDraw>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub nonce: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub settlement: Option<SettlementRecord>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub void_reason: Option<String>,
}

/// Full server-side session state, including the hidden draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    id: Uuid,
    levels: Vec<f64>,
    reward: f64,
    state: SessionState,
    commitment: String,
    draws: Vec<GenieDraw>,
    nonce: String,
    reports: Vec<Option<ReportRecord>>,
    settlement: Option<SettlementRecord>,
    void_reason: Option<String>,
    created_at: DateTime<Utc>,
    version: u64,
    #[serde(skip)]
    pending: Vec<LogRecord>,
}

fn validate_levels(levels: &[f64]) -> SessionResult<Vec<f64>> {
    if levels.is_empty() {
        return Err(SessionError::InvalidLevels("at least one level is required".into()));
    }
    if let Some(bad) = levels.iter().find(|l| !(**l > 0.0 && **l < 1.0)) {
        return Err(SessionError::InvalidLevels(format!("{bad} is not strictly inside (0, 1)")));
    }
    let mut sorted = levels.to_vec();
    sorted.sort_by(f64::total_cmp);
    if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
        return Err(SessionError::InvalidLevels(format!("{} appears more than once", w[0])));
    }
    Ok(sorted)
}

fn decode_nonce(hex_nonce: &str) -> Option<[u8; NONCE_LEN]> {
    hex::decode(hex_nonce).ok()?.try_into().ok()
}

impl Session {
    /// Creates a session: draws are generated, committed to, and reporting opens.
    ///
    /// Levels are stored in ascending order; draw `i` belongs to level `i`.
    pub fn create(
        id: Uuid,
        levels: &[f64],
        reward: f64,
        entropy: Entropy,
        now: DateTime<Utc>,
    ) -> SessionResult<Session> {
        let levels = validate_levels(levels)?;
        if !(reward > 0.0 && reward.is_finite()) {
            return Err(SessionError::InvalidReward(reward));
        }
        let (seed, nonce) = match entropy {
            Entropy::Seed(seed) => {
                let mut nonce = [0u8; NONCE_LEN];
                trial_stream(seed, 0, Purpose::Aux).fill_bytes(&mut nonce);
                (seed, nonce)
            }
            Entropy::Os => (rand::random::<u64>(), rand::random::<[u8; NONCE_LEN]>()),
        };
        let draws: Vec<GenieDraw> = levels
            .iter()
            .enumerate()
            .map(|(i, &alpha)| {
                let config = MechanismConfig::new(alpha, reward).expect("levels and reward validated");
                draw_genie(&config, &mut GenieStreams::new(seed, i as u64))
            })
            .collect();
        let commitment = commitment::commit(&draws, &nonce);
        let created = LogRecord {
            session_id: id,
            seq: 1,
            timestamp: now,
            event: SessionEvent::Created {
                levels,
                reward,
                draws,
                nonce: hex::encode(nonce),
                commitment,
            },
        };
        let mut session = Session::from_created(&created)?;
        session.pending.push(created);
        session.record(SessionEvent::ReportingOpened {}, now)?;
        Ok(session)
    }

    fn from_created(record: &LogRecord) -> SessionResult<Session> {
        let SessionEvent::Created { levels, reward, draws, nonce, commitment } = &record.event else {
            return Err(SessionError::Replay(format!("first event is {}, not created", record.event.kind())));
        };
        if record.seq != 1 {
            return Err(SessionError::Replay(format!("created event has seq {}", record.seq)));
        }
        if validate_levels(levels)? != *levels {
            return Err(SessionError::Replay("levels are not in canonical order".into()));
        }
        if draws.len() != levels.len() || decode_nonce(nonce).is_none() {
            return Err(SessionError::Replay("created payload is malformed".into()));
        }
        Ok(Session {
            id: record.session_id,
            levels: levels.clone(),
            reward: *reward,
            state: SessionState::Created,
            commitment: commitment.clone(),
            draws: draws.clone(),
            nonce: nonce.clone(),
            reports: vec![None; levels.len()],
            settlement: None,
            void_reason: None,
            created_at: record.timestamp,
            version: 1,
            pending: Vec::new(),
        })
    }

    /// Rebuilds a session from its log records, in order.
    pub fn replay<'a, I>(records: I) -> SessionResult<Session>
    where
        I: IntoIterator<Item = &'a LogRecord>,
    {
        let mut iter = records.into_iter();
        let first = iter.next().ok_or_else(|| SessionError::Replay("no events".into()))?;
        let mut session = Session::from_created(first)?;
        for record in iter {
            session.apply(record)?;
        }
        Ok(session)
    }

    fn record(&mut self, event: SessionEvent, now: DateTime<Utc>) -> SessionResult<()> {
        let record = LogRecord { session_id: self.id, seq: self.version + 1, timestamp: now, event };
        self.apply(&record)?;
        self.pending.push(record);
        Ok(())
    }

    /// Applies one event. Rejects anything the state machine does not allow,
    /// so a tampered or reordered log fails to replay.
    fn apply(&mut self, record: &LogRecord) -> SessionResult<()> {
        if record.session_id != self.id {
            return Err(SessionError::Replay(format!("event for {} applied to {}", record.session_id, self.id)));
        }
        if record.seq != self.version + 1 {
            return Err(SessionError::Replay(format!("expected seq {}, got {}", self.version + 1, record.seq)));
        }
        match &record.event {
            SessionEvent::Created { .. } => {
                return Err(SessionError::Replay("duplicate created event".into()));
            }
            SessionEvent::ReportingOpened {} => {
                self.require(SessionState::Created, "open reporting")?;
                self.state = SessionState::Reporting;
            }
            SessionEvent::ReportSubmitted { level, value } => {
                self.require(SessionState::Reporting, "submit a report")?;
                let idx = self.level_index(*level)?;
                check_unit_value("report", *value)?;
                let slot = &mut self.reports[idx];
                match slot {
                    Some(existing) => {
                        existing.revisions.push(Revision { value: existing.value, timestamp: existing.timestamp });
                        existing.value = *value;
                        existing.timestamp = record.timestamp;
                    }
                    None => {
                        *slot = Some(ReportRecord {
                            level: self.levels[idx],
                            value: *value,
                            timestamp: record.timestamp,
                            revisions: Vec::new(),
                        });
                    }
                }
            }
            SessionEvent::Revealed {} => {
                self.require(SessionState::Reporting, "reveal")?;
                self.require_all_reported()?;
                if !self.commitment_holds() {
                    return Err(SessionError::CommitmentMismatch);
                }
                self.state = SessionState::Revealed;
            }
            SessionEvent::Voided { reason } => {
                if matches!(self.state, SessionState::Settled | SessionState::Voided) {
                    return Err(SessionError::WrongState { action: "void", state: self.state });
                }
                self.state = SessionState::Voided;
                self.void_reason = Some(reason.clone());
            }
            SessionEvent::Settled { theta, entered_by } => {
                self.require(SessionState::Revealed, "settle")?;
                check_unit_value("theta", *theta)?;
                let mut payoffs = Vec::with_capacity(self.levels.len());
                for (i, &level) in self.levels.iter().enumerate() {
                    let report = self.reports[i].as_ref().expect("revealed sessions are fully reported").value;
                    let config = MechanismConfig::new(level, self.reward).expect("validated at creation");
                    let outcome = settle_reward(&config, report, self.draws[i], *theta)
                        .map_err(|e| SessionError::Replay(e.to_string()))?;
                    payoffs.push(LevelPayoff {
                        level,
                        report,
                        xi: self.draws[i].xi,
                        d: self.draws[i].d,
                        branch: outcome.branch,
                        payoff: outcome.payoff,
                    });
                }
                let total = payoffs.iter().map(|p| p.payoff).sum();
                self.settlement = Some(SettlementRecord {
                    theta: *theta,
                    payoffs,
                    total,
                    entered_by: entered_by.clone(),
                    timestamp: record.timestamp,
                });
                self.state = SessionState::Settled;
            }
        }
        self.version = record.seq;
        Ok(())
    }

    fn require(&self, state: SessionState, action: &'static str) -> SessionResult<()> {
        if self.state == state {
            Ok(())
        } else {
            Err(SessionError::WrongState { action, state: self.state })
        }
    }

    fn require_all_reported(&self) -> SessionResult<()> {
        let missing: Vec<f64> = self
            .levels
            .iter()
            .zip(&self.reports)
            .filter(|(_, r)| r.is_none())
            .map(|(l, _)| *l)
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(SessionError::MissingReports(missing))
        }
    }

    fn level_index(&self, level: f64) -> SessionResult<usize> {
        self.levels.iter().position(|&l| l == level).ok_or(SessionError::UnknownLevel(level))
    }

    fn commitment_holds(&self) -> bool {
        decode_nonce(&self.nonce).is_some_and(|n| commitment::verify(&self.commitment, &self.draws, &n))
    }

    /// Records or revises the report for `level`. Out-of-order reports across
    /// levels are accepted; the returned warnings describe them.
    pub fn submit_report(&mut self, level: f64, value: f64, now: DateTime<Utc>) -> SessionResult<Vec<CrossingWarning>> {
        self.require(SessionState::Reporting, "submit a report")?;
        self.level_index(level)?;
        check_unit_value("report", value)?;
        self.record(SessionEvent::ReportSubmitted { level, value }, now)?;
        Ok(self.crossing_warnings())
    }

    /// Discloses the draws once every level is reported. A commitment mismatch
    /// voids the session.
    pub fn reveal(&mut self, now: DateTime<Utc>) -> SessionResult<()> {
        self.require(SessionState::Reporting, "reveal")?;
        self.require_all_reported()?;
        if !self.commitment_holds() {
            self.record(SessionEvent::Voided { reason: "commitment mismatch".into() }, now)?;
            return Err(SessionError::CommitmentMismatch);
        }
        self.record(SessionEvent::Revealed {}, now)
    }

    /// Settles every level against the realized `theta`.
    pub fn settle(&mut self, theta: f64, entered_by: &str, now: DateTime<Utc>) -> SessionResult<&SettlementRecord> {
        self.require(SessionState::Revealed, "settle")?;
        check_unit_value("theta", theta)?;
        self.record(SessionEvent::Settled { theta, entered_by: entered_by.to_string() }, now)?;
        Ok(self.settlement.as_ref().expect("just settled"))
    }

    /// Piecewise-linear CDF through `(0,0)`, every `(q_α, α)` and `(1,1)`.
    pub fn fitted_cdf(&self) -> SessionResult<PiecewiseLinearBelief> {
        self.require_all_reported()?;
        let points: Vec<(f64, f64)> = self
            .reports
            .iter()
            .flatten()
            .map(|r| (r.value, r.level))
            .collect();
        let mut prev = 0.0;
        for &(q, level) in &points {
            if !(q > prev) {
                return Err(SessionError::CrossingReports(format!(
                    "report {q} for level {level} does not exceed the previous report {prev}"
                )));
            }
            prev = q;
        }
        if prev >= 1.0 {
            return Err(SessionError::CrossingReports("the highest report must be below 1".into()));
        }
        PiecewiseLinearBelief::through(&points).map_err(|e| SessionError::CrossingReports(e.to_string()))
    }

    pub fn crossing_warnings(&self) -> Vec<CrossingWarning> {
        let reported: Vec<&ReportRecord> = self.reports.iter().flatten().collect();
        let mut out = Vec::new();
        for (i, lo) in reported.iter().enumerate() {
            for hi in &reported[i + 1..] {
                if lo.value > hi.value {
                    out.push(CrossingWarning {
                        lower_level: lo.level,
                        lower_report: lo.value,
                        higher_level: hi.level,
                        higher_report: hi.value,
                    });
                }
            }
        }
        out
    }

    /// Records produced since the last call, for appending to the event log.
    pub fn take_pending(&mut self) -> Vec<LogRecord> {
        std::mem::take(&mut self.pending)
    }

    pub fn view(&self) -> SessionView {
        let disclosed = matches!(self.state, SessionState::Revealed | SessionState::Settled);
        SessionView {
            id: self.id,
            state: self.state,
            levels: self.levels.clone(),
            reward: self.reward,
            commitment: self.commitment.clone(),
            created_at: self.created_at,
            reports: self.reports.iter().flatten().cloned().collect(),
            warnings: self.crossing_warnings(),
            draws: disclosed.then(|| {
                self.levels
                    .iter()
                    .zip(&self.draws)
                    .map(|(&level, d)| LevelDraw { level, xi: d.xi, d: d.d })
                    .collect()
            }),
            nonce: disclosed.then(|| self.nonce.clone()),
            settlement: self.settlement.clone(),
            void_reason: self.void_reason.clone(),
        }
    }

    pub fn id(&self) -> Uuid {
        self.id
    }

    pub fn state(&self) -> SessionState {
        self.state
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn reward(&self) -> f64 {
        self.reward
    }

    pub fn commitment(&self) -> &str {
        &self.commitment
    }

    /// The hidden draws. Server-side only; never part of a pre-reveal response.
    pub fn draws(&self) -> &[GenieDraw] {
        &self.draws
    }

    pub fn reports(&self) -> impl Iterator<Item = &ReportRecord> {
        self.reports.iter().flatten()
    }

    pub fn settlement(&self) -> Option<&SettlementRecord> {
        self.settlement.as_ref()
    }

    /// Sequence number of the last applied event.
    pub fn version(&self) -> u64 {
        self.version
    }

    #[cfg(test)]
    pub(crate) fn draws_mut(&mut self) -> &mut Vec<GenieDraw> {
        &mut self.draws
    }
}

fn check_unit_value(what: &'static str, value: f64) -> SessionResult<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(SessionError::OutOfRange { what, value })
    }
}
