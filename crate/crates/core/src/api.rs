//! JSON wire types shared by the service and its clients. Field names are
//! frozen; see `docs/api.md` in the repository.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::content::{parse_tagged, Category, Formula, Statement};
use crate::ledger::{ClosureMode, ExclusionReason};
use crate::protocol::{
    DialogueStage, LocutionId, LocutionKind, Move, ParticipantId, TurnOrder, Violation, ViolationCode,
};

/// Lifecycle of a session; the dialogue stages plus the lobby before start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Lobby,
    Commencement,
    Progress,
    Termination,
    Closed,
}

impl From<DialogueStage> for SessionStatus {
    fn from(s: DialogueStage) -> Self {
        match s {
            DialogueStage::Commencement => SessionStatus::Commencement,
            DialogueStage::Progress => SessionStatus::Progress,
            DialogueStage::Termination => SessionStatus::Termination,
            DialogueStage::Closed => SessionStatus::Closed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Initiator,
    Participant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartPolicy {
    /// Start as soon as `min_participants` have joined, one of them the initiator.
    #[default]
    Quorum,
    /// Wait for an explicit start request.
    Manual,
}

fn two() -> usize {
    2
}

fn yes() -> bool {
    true
}

/// Session parameters as sent by clients and recorded in the event log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    #[serde(default = "two")]
    pub min_participants: usize,
    #[serde(default)]
    pub start: StartPolicy,
    #[serde(default)]
    pub turn_order: TurnOrder,
    #[serde(default = "yes")]
    pub relatedness_enforced: bool,
    #[serde(default)]
    pub allow_assert_on_advise: bool,
    /// Sets of positive atoms that exclude each other at closure.
    #[serde(default)]
    pub exclusion_groups: Vec<Vec<String>>,
    #[serde(default)]
    pub closure_mode: ClosureMode,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            min_participants: 2,
            start: StartPolicy::Quorum,
            turn_order: TurnOrder::Cyclic,
            relatedness_enforced: true,
            allow_assert_on_advise: false,
            exclusion_groups: Vec::new(),
            closure_mode: ClosureMode::ChallengeAware,
        }
    }
}

/// A move on the wire. Content items are `formula @category` strings; the
/// category may be omitted for rules and for formulas already uttered.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireMove {
    pub kind: LocutionKind,
    #[serde(default)]
    pub content: Vec<String>,
    #[serde(default)]
    pub target: Option<LocutionId>,
    #[serde(default)]
    pub prompt_targets: Vec<LocutionId>,
}

impl WireMove {
    pub fn pass() -> Self {
        Self { kind: LocutionKind::Pass, content: Vec::new(), target: None, prompt_targets: Vec::new() }
    }

    /// Encodes a kernel move with every category spelled out.
    pub fn from_move(mv: &Move) -> Self {
        Self {
            kind: mv.kind,
            content: mv.content.iter().map(Statement::to_string).collect(),
            target: mv.target,
            prompt_targets: mv.prompt_targets.iter().copied().collect(),
        }
    }

    /// Decodes into a kernel move, filling in categories from `lexicon`.
    pub fn to_move(&self, lexicon: &BTreeMap<Formula, Category>) -> Result<Move, Violation> {
        let mut content = Vec::new();
        for item in &self.content {
            let (formulas, category) = parse_tagged(item)
                .map_err(|e| Violation::new(ViolationCode::ContentSyntax, format!("`{item}`: {e}")))?;
            for f in formulas {
                let category = category
                    .or_else(|| lexicon.get(&f).copied())
                    .or_else(|| f.is_rule().then_some(Category::Rule))
                    .ok_or_else(|| {
                        Violation::new(ViolationCode::CategoryRequired, format!("`{f}` needs a category"))
                    })?;
                content.push(Statement::new(f, category));
            }
        }
        let mut mv = Move::new(self.kind, content, self.target);
        mv.prompt_targets = self.prompt_targets.iter().copied().collect();
        Ok(mv)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreateSessionRequest {
    #[serde(default)]
    pub config: SessionConfig,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreateSessionResponse {
    pub session: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JoinRequest {
    pub name: String,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JoinResponse {
    pub participant: ParticipantId,
    pub position: usize,
    pub status: SessionStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StartResponse {
    pub status: SessionStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitTurnRequest {
    pub speaker: String,
    pub moves: Vec<WireMove>,
}

/// Outcome of an accepted turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnAccepted {
    pub turn: usize,
    pub locutions: Vec<LocutionId>,
    pub status: SessionStatus,
    pub next_speakers: Vec<ParticipantId>,
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LegalReply {
    pub kind: LocutionKind,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LegalRepliesResponse {
    pub target: LocutionId,
    pub target_kind: LocutionKind,
    pub replies: Vec<LegalReply>,
}

/// Structured error body returned with every non-2xx response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParticipantView {
    pub name: ParticipantId,
    pub role: Role,
    pub position: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocutionView {
    pub id: LocutionId,
    pub turn: usize,
    pub speaker: ParticipantId,
    pub kind: LocutionKind,
    pub content: Vec<String>,
    #[serde(default)]
    pub target: Option<LocutionId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub prompt_targets: Vec<LocutionId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObligationView {
    pub debtor: ParticipantId,
    pub request: LocutionId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionView {
    pub formula: String,
    pub reason: ExclusionReason,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClosureView {
    pub added: Vec<String>,
    pub excluded: Vec<ExclusionView>,
}

/// Everything a participant may see. Formulas are rendered canonically.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snapshot {
    pub session: String,
    pub status: SessionStatus,
    pub participants: Vec<ParticipantView>,
    pub next_speakers: Vec<ParticipantId>,
    pub turns: usize,
    pub history: Vec<LocutionView>,
    pub commitments: BTreeMap<ParticipantId, Vec<String>>,
    pub agreement: Vec<String>,
    pub agreement_closed: bool,
    pub obligations: Vec<ObligationView>,
    pub prompt_pending: BTreeSet<LocutionId>,
    pub consent: BTreeSet<ParticipantId>,
    #[serde(default)]
    pub closure: Option<ClosureView>,
    pub seq: u64,
}
