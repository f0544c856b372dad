//! Dialogue rules: locutions, moves, turns, reply legality, the stage machine
//! and politeness obligations.

mod kind;
mod state;
mod validate;
mod violation;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::content::{Formula, Statement};

pub use kind::{is_legal_reply, legal_replies, promptable, LocutionClass, LocutionKind};
pub use state::{
    DialogueConfig, DialogueStage, DialogueState, PolitenessObligation, StageTransition, TurnOrder, TurnRecord,
    TurnRejection,
};
pub use validate::validate_opening;
pub use violation::{Violation, ViolationCode};

/// Participant identity: the display name chosen at join time, unique per session.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ParticipantId(String);

impl ParticipantId {
    pub fn new(name: impl Into<String>) -> Result<Self, String> {
        let name = name.into();
        let trimmed = name.trim();
        if trimmed.is_empty() || trimmed.len() > 64 || trimmed != name {
            return Err(format!("invalid participant name `{name}`"));
        }
        if name.chars().any(char::is_control) {
            return Err("participant names may not contain control characters".into());
        }
        Ok(Self(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for ParticipantId {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        ParticipantId::new(s)
    }
}

impl From<ParticipantId> for String {
    fn from(p: ParticipantId) -> String {
        p.0
    }
}

impl fmt::Display for ParticipantId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Sequence number of a locution within its dialogue, starting at 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LocutionId(pub u64);

impl fmt::Display for LocutionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// A move as submitted: the new locution plus the locution it replies to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Move {
    pub kind: LocutionKind,
    pub content: Vec<Statement>,
    pub target: Option<LocutionId>,
    pub prompt_targets: BTreeSet<LocutionId>,
}

impl Move {
    pub fn new(kind: LocutionKind, content: Vec<Statement>, target: Option<LocutionId>) -> Self {
        Self { kind, content: normalize_content(content), target, prompt_targets: BTreeSet::new() }
    }

    pub fn pass() -> Self {
        Self::new(LocutionKind::Pass, Vec::new(), None)
    }

    pub fn end() -> Self {
        Self::new(LocutionKind::End, Vec::new(), None)
    }

    pub fn prompt(targets: impl IntoIterator<Item = LocutionId>) -> Self {
        Self {
            kind: LocutionKind::Prompt,
            content: Vec::new(),
            target: None,
            prompt_targets: targets.into_iter().collect(),
        }
    }

    pub fn formulas(&self) -> BTreeSet<Formula> {
        self.content.iter().map(|s| s.formula.clone()).collect()
    }
}

/// One participant's batch of moves, closed by a pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Turn {
    pub speaker: ParticipantId,
    pub moves: Vec<Move>,
}

impl Turn {
    pub fn new(speaker: ParticipantId, moves: Vec<Move>) -> Self {
        Self { speaker, moves }
    }
}

/// An accepted move as recorded in the dialogue history.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Locution {
    pub id: LocutionId,
    pub turn: usize,
    pub speaker: ParticipantId,
    pub kind: LocutionKind,
    pub content: Vec<Statement>,
    pub target: Option<LocutionId>,
    pub prompt_targets: BTreeSet<LocutionId>,
}

impl Locution {
    pub fn formulas(&self) -> BTreeSet<Formula> {
        self.content.iter().map(|s| s.formula.clone()).collect()
    }

    pub fn contains(&self, f: &Formula) -> bool {
        self.content.iter().any(|s| &s.formula == f)
    }
}

/// Sorts by formula and drops exact duplicates. Differing categories for one
/// formula are kept so validation can report them.
pub(crate) fn normalize_content(mut content: Vec<Statement>) -> Vec<Statement> {
    content.sort();
    content.dedup();
    content
}
