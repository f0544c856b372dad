use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use edg_core::api::{
    ClosureView, LocutionView, ObligationView, ParticipantView, SessionConfig, SessionStatus, Snapshot, TurnAccepted,
};
use edg_core::content::parse_formula;
use edg_core::corpus::Corpus;
use edg_core::{Formula, LocutionId, ParticipantId, Violation};

use crate::CliError;

/// Everything observable after each accepted turn of a scripted run. Built
/// only from public snapshots, so a local and a remote run of one script
/// serialize to the same bytes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub script: String,
    pub corpus: String,
    pub config: SessionConfig,
    pub participants: Vec<ParticipantView>,
    pub turns: Vec<TraceTurn>,
    pub status: SessionStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub closure: Option<ClosureView>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rejected: Option<Rejection>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceTurn {
    pub label: String,
    pub speaker: ParticipantId,
    pub locutions: Vec<LocutionView>,
    pub status: SessionStatus,
    pub next_speakers: Vec<ParticipantId>,
    pub commitments: BTreeMap<ParticipantId, Vec<String>>,
    pub agreement: Vec<String>,
    pub obligations: Vec<ObligationView>,
    pub prompt_pending: BTreeSet<LocutionId>,
    pub consent: BTreeSet<ParticipantId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub turn: String,
    pub code: String,
    pub message: String,
    #[serde(default)]
    pub violations: Vec<Violation>,
}

impl Trace {
    pub fn new(script: &str, corpus: &str, config: &SessionConfig) -> Self {
        Self {
            script: script.to_string(),
            corpus: corpus.to_string(),
            config: config.clone(),
            participants: Vec::new(),
            turns: Vec::new(),
            status: SessionStatus::Lobby,
            closure: None,
            rejected: None,
        }
    }

    pub fn push(
        &mut self,
        label: &str,
        speaker: &str,
        accepted: &TurnAccepted,
        snap: &Snapshot,
    ) -> Result<(), CliError> {
        let locutions = accepted
            .locutions
            .iter()
            .map(|id| {
                snap.history
                    .iter()
                    .find(|l| l.id == *id)
                    .cloned()
                    .ok_or_else(|| CliError::Driver(format!("{label}: locution {id} missing from snapshot")))
            })
            .collect::<Result<_, _>>()?;
        let speaker = ParticipantId::new(speaker).map_err(CliError::Driver)?;
        self.turns.push(TraceTurn {
            label: label.to_string(),
            speaker,
            locutions,
            status: snap.status,
            next_speakers: snap.next_speakers.clone(),
            commitments: snap.commitments.clone(),
            agreement: snap.agreement.clone(),
            obligations: snap.obligations.clone(),
            prompt_pending: snap.prompt_pending.clone(),
            consent: snap.consent.clone(),
        });
        self.finish(snap);
        Ok(())
    }

    pub fn finish(&mut self, snap: &Snapshot) {
        self.participants = snap.participants.clone();
        self.status = snap.status;
        self.closure = snap.closure.clone();
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("traces always serialize");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::TraceParse(e.to_string()))
    }

    pub fn corpus(&self) -> Result<Corpus, CliError> {
        Corpus::parse(&self.corpus).map_err(|e| CliError::TraceParse(format!("corpus: {e}")))
    }

    /// Fails with the rejection, if the run stopped early.
    pub fn ensure_complete(&self) -> Result<(), CliError> {
        match &self.rejected {
            Some(r) => Err(CliError::RejectedAt {
                turn: r.turn.clone(),
                code: r.code.clone(),
                violations: r.violations.clone(),
            }),
            None => Ok(()),
        }
    }
}

/// Parses rendered formulas back into a set.
pub fn formulas(rendered: &[String]) -> Result<BTreeSet<Formula>, CliError> {
    rendered.iter().map(|s| parse_formula(s).map_err(|e| CliError::TraceParse(format!("`{s}`: {e}")))).collect()
}
