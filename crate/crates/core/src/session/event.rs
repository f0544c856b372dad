use serde::{Deserialize, Serialize};

use crate::api::{Role, SessionConfig, SessionStatus, WireMove};
use crate::protocol::{LocutionId, ParticipantId, Violation};

/// One line of a session's event log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub seq: u64,
    pub session: String,
    #[serde(flatten)]
    pub body: EventBody,
    /// Milliseconds since the Unix epoch. Not part of replayed state.
    pub ts: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum EventBody {
    Created {
        config: SessionConfig,
    },
    Joined {
        participant: ParticipantId,
        role: Role,
        position: usize,
    },
    /// Moves are stored with every category spelled out, targets as submitted.
    TurnAccepted {
        turn: usize,
        speaker: ParticipantId,
        moves: Vec<WireMove>,
        locutions: Vec<LocutionId>,
    },
    TurnRejected {
        speaker: ParticipantId,
        moves: Vec<WireMove>,
        code: String,
        #[serde(default)]
        violations: Vec<Violation>,
    },
    StageChanged {
        #[serde(default)]
        turn: Option<usize>,
        from: SessionStatus,
        to: SessionStatus,
    },
    Closed {
        agreement: Vec<String>,
    },
}

impl EventBody {
    pub fn kind(&self) -> &'static str {
        match self {
            EventBody::Created { .. } => "Created",
            EventBody::Joined { .. } => "Joined",
            EventBody::TurnAccepted { .. } => "TurnAccepted",
            EventBody::TurnRejected { .. } => "TurnRejected",
            EventBody::StageChanged { .. } => "StageChanged",
            EventBody::Closed { .. } => "Closed",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn log_lines_use_the_fixed_field_names() {
        let ev = SessionEvent {
            seq: 3,
            session: "s1".into(),
            body: EventBody::Joined {
                participant: ParticipantId::new("ann").unwrap(),
                role: Role::Initiator,
                position: 0,
            },
            ts: 17,
        };
        let v: Value = serde_json::to_value(&ev).unwrap();
        let mut keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        keys.sort();
        assert_eq!(keys, ["kind", "payload", "seq", "session", "ts"]);
        assert_eq!(v["kind"], "Joined");
        assert_eq!(serde_json::from_value::<SessionEvent>(v).unwrap(), ev);
    }
}
