use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::mechanism::GenieDraw;

/// State-changing events of a session. Serialized adjacently tagged so that a
/// [`LogRecord`] line reads `{..., "event_type": "...", "payload": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event_type", content = "payload", rename_all = "snake_case")]
pub enum SessionEvent {
    Created {
        levels: Vec<f64>,
        reward: f64,
        draws: Vec<GenieDraw>,
        /// Lowercase hex of the 16-byte nonce.
        nonce: String,
        commitment: String,
    },
    ReportingOpened {},
    ReportSubmitted {
        level: f64,
        value: f64,
    },
    Revealed {},
    Voided {
        reason: String,
    },
    Settled {
        theta: f64,
        entered_by: String,
    },
}

impl SessionEvent {
    pub fn kind(&self) -> &'static str {
        match self {
            SessionEvent::Created { .. } => "created",
            SessionEvent::ReportingOpened {} => "reporting_opened",
            SessionEvent::ReportSubmitted { .. } => "report_submitted",
            SessionEvent::Revealed {} => "revealed",
            SessionEvent::Voided { .. } => "voided",
            SessionEvent::Settled { .. } => "settled",
        }
    }
}

/// One line of the append-only event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub session_id: Uuid,
    /// 1-based, contiguous per session.
    pub seq: u64,
    pub timestamp: DateTime<Utc>,
    #[serde(flatten)]
    pub event: SessionEvent,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_line_shape() {
        let rec = LogRecord {
            session_id: Uuid::nil(),
            seq: 3,
            timestamp: DateTime::from_timestamp(1_700_000_000, 0).unwrap(),
            event: SessionEvent::ReportSubmitted { level: 0.5, value: 0.3 },
        };
        let line = serde_json::to_string(&rec).unwrap();
        assert_eq!(
            line,
            r#"{"session_id":"00000000-0000-0000-0000-000000000000","seq":3,"timestamp":"2023-11-14T22:13:20Z","event_type":"report_submitted","payload":{"level":0.5,"value":0.3}}"#
        );
        let back: LogRecord = serde_json::from_str(&line).unwrap();
        assert_eq!(back, rec);

        let opened = LogRecord { event: SessionEvent::ReportingOpened {}, ..rec };
        let line = serde_json::to_string(&opened).unwrap();
        assert!(line.ends_with(r#""event_type":"reporting_opened","payload":{}}"#), "{line}");
        assert_eq!(serde_json::from_str::<LogRecord>(&line).unwrap(), opened);
    }
}
