use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::validate::{self, Target};
use super::{
    normalize_content, Locution, LocutionClass, LocutionId, LocutionKind, Move, ParticipantId, Turn, Violation,
};
use crate::content::{Category, ConflictPolicy, Formula};
use crate::ledger::{ClosureMode, CommitmentLedger, LedgerDelta};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DialogueStage {
    Commencement,
    Progress,
    Termination,
    Closed,
}

impl DialogueStage {
    /// The permitted stage transitions.
    pub fn can_move_to(self, next: DialogueStage) -> bool {
        use DialogueStage::*;
        matches!(
            (self, next),
            (Commencement, Progress) | (Progress, Termination) | (Termination, Progress) | (Termination, Closed)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TurnOrder {
    /// Participants speak in join order, round robin.
    #[default]
    Cyclic,
    /// Anyone may take the next turn except whoever took the previous one.
    Open,
}

/// Rules that vary between deployments of the game.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DialogueConfig {
    pub turn_order: TurnOrder,
    pub relatedness_enforced: bool,
    /// Admit `assert` as a reply to `advise`.
    pub allow_assert_on_advise: bool,
    pub conflict_policy: ConflictPolicy,
    pub closure_mode: ClosureMode,
}

impl Default for DialogueConfig {
    fn default() -> Self {
        Self {
            turn_order: TurnOrder::Cyclic,
            relatedness_enforced: true,
            allow_assert_on_advise: false,
            conflict_policy: ConflictPolicy::default(),
            closure_mode: ClosureMode::default(),
        }
    }
}

/// A reply owed by `debtor` to the wh-request `request`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolitenessObligation {
    pub debtor: ParticipantId,
    pub request: LocutionId,
    pub discharged: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TurnRecord {
    pub speaker: ParticipantId,
    pub locutions: Vec<LocutionId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageTransition {
    /// Index of the turn that caused it.
    pub turn: usize,
    pub from: DialogueStage,
    pub to: DialogueStage,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TurnRejection {
    DialogueClosed,
    UnknownSpeaker(ParticipantId),
    NotYourTurn { speaker: ParticipantId, eligible: Vec<ParticipantId> },
    Violations(Vec<Violation>),
}

impl TurnRejection {
    pub fn violations(&self) -> &[Violation] {
        match self {
            TurnRejection::Violations(v) => v,
            _ => &[],
        }
    }
}

/// Immutable dialogue value; [`DialogueState::apply_turn`] returns a successor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DialogueState {
    config: DialogueConfig,
    participants: Vec<ParticipantId>,
    stage: DialogueStage,
    history: Vec<Locution>,
    turns: Vec<TurnRecord>,
    obligations: Vec<PolitenessObligation>,
    consent: BTreeSet<ParticipantId>,
    lexicon: BTreeMap<Formula, Category>,
    ledger: CommitmentLedger,
    transitions: Vec<StageTransition>,
}

impl DialogueState {
    /// `participants[0]` is the initiator.
    pub fn new(config: DialogueConfig, participants: Vec<ParticipantId>) -> Result<Self, String> {
        if participants.len() < 2 {
            return Err("a dialogue needs at least two participants".into());
        }
        let unique: BTreeSet<_> = participants.iter().collect();
        if unique.len() != participants.len() {
            return Err("participant names must be unique".into());
        }
        Ok(Self {
            ledger: CommitmentLedger::new(&participants),
            config,
            participants,
            stage: DialogueStage::Commencement,
            history: Vec::new(),
            turns: Vec::new(),
            obligations: Vec::new(),
            consent: BTreeSet::new(),
            lexicon: BTreeMap::new(),
            transitions: Vec::new(),
        })
    }

    pub fn config(&self) -> &DialogueConfig {
        &self.config
    }

    pub fn participants(&self) -> &[ParticipantId] {
        &self.participants
    }

    pub fn initiator(&self) -> &ParticipantId {
        &self.participants[0]
    }

    pub fn stage(&self) -> DialogueStage {
        self.stage
    }

    pub fn history(&self) -> &[Locution] {
        &self.history
    }

    pub fn turns(&self) -> &[TurnRecord] {
        &self.turns
    }

    pub fn ledger(&self) -> &CommitmentLedger {
        &self.ledger
    }

    pub fn consent(&self) -> &BTreeSet<ParticipantId> {
        &self.consent
    }

    pub fn lexicon(&self) -> &BTreeMap<Formula, Category> {
        &self.lexicon
    }

    pub fn transitions(&self) -> &[StageTransition] {
        &self.transitions
    }

    pub fn obligations(&self) -> &[PolitenessObligation] {
        &self.obligations
    }

    pub fn locution(&self, id: LocutionId) -> Option<&Locution> {
        let idx = usize::try_from(id.0).ok()?.checked_sub(1)?;
        self.history.get(idx)
    }

    fn next_id(&self) -> LocutionId {
        LocutionId(self.history.len() as u64 + 1)
    }

    /// Speakers allowed to take the next turn.
    pub fn eligible_speakers(&self) -> Vec<ParticipantId> {
        if self.stage == DialogueStage::Closed {
            return Vec::new();
        }
        if self.turns.is_empty() {
            return vec![self.initiator().clone()];
        }
        match self.config.turn_order {
            TurnOrder::Cyclic => {
                vec![self.participants[self.turns.len() % self.participants.len()].clone()]
            }
            TurnOrder::Open => {
                let last = &self.turns[self.turns.len() - 1].speaker;
                self.participants.iter().filter(|p| *p != last).cloned().collect()
            }
        }
    }

    /// The single next speaker under cyclic order.
    pub fn current_speaker(&self) -> Option<ParticipantId> {
        match self.eligible_speakers().as_slice() {
            [only] => Some(only.clone()),
            _ => None,
        }
    }

    /// Undischarged obligations of `p`, oldest first.
    pub fn open_obligations(&self, p: &ParticipantId) -> Vec<PolitenessObligation> {
        self.obligations.iter().filter(|o| !o.discharged && &o.debtor == p).cloned().collect()
    }

    /// Prompted locutions still awaiting a reply made after the prompt.
    pub fn prompt_pending(&self) -> BTreeSet<LocutionId> {
        let mut pending: BTreeMap<LocutionId, LocutionId> = BTreeMap::new();
        for loc in &self.history {
            if loc.kind == LocutionKind::Prompt {
                for t in &loc.prompt_targets {
                    pending.entry(*t).or_insert(loc.id);
                }
            } else if let Some(t) = loc.target {
                if pending.get(&t).is_some_and(|prompt| loc.id > *prompt) {
                    pending.remove(&t);
                }
            }
        }
        pending.into_keys().collect()
    }

    /// Validates one move against this state, as if it were the next move of
    /// `speaker`'s turn.
    pub fn validate_move(&self, speaker: &ParticipantId, mv: &Move) -> Vec<Violation> {
        validate::validate_move(self, speaker, mv).1
    }

    /// Validates and applies a whole turn atomically.
    pub fn apply_turn(&self, turn: &Turn) -> Result<DialogueState, TurnRejection> {
        if self.stage == DialogueStage::Closed {
            return Err(TurnRejection::DialogueClosed);
        }
        if !self.participants.contains(&turn.speaker) {
            return Err(TurnRejection::UnknownSpeaker(turn.speaker.clone()));
        }
        let eligible = self.eligible_speakers();
        if !eligible.contains(&turn.speaker) {
            return Err(TurnRejection::NotYourTurn { speaker: turn.speaker.clone(), eligible });
        }
        let shape = validate::validate_shape(turn);
        if !shape.is_empty() {
            return Err(TurnRejection::Violations(shape));
        }

        let mut next = self.clone();
        let turn_index = next.turns.len();
        next.turns.push(TurnRecord { speaker: turn.speaker.clone(), locutions: Vec::new() });
        let mut violations = Vec::new();

        if self.stage == DialogueStage::Commencement {
            violations.extend(validate::validate_opening_in(self, turn));
            if violations.is_empty() {
                for mv in &turn.moves {
                    next.record(&turn.speaker, mv.clone(), None);
                }
                next.transition(turn_index, DialogueStage::Progress);
            }
        } else {
            for (i, mv) in turn.moves.iter().enumerate() {
                if mv.kind == LocutionKind::Pass {
                    next.record(&turn.speaker, mv.clone(), None);
                    continue;
                }
                let (resolved, errs) = validate::validate_move(&next, &turn.speaker, mv);
                if errs.is_empty() {
                    next.apply_move(turn_index, &turn.speaker, mv.clone(), resolved);
                } else {
                    violations.extend(errs.into_iter().map(|v| v.at(i)));
                }
            }
        }

        if !violations.is_empty() {
            return Err(TurnRejection::Violations(violations));
        }
        Ok(next)
    }

    fn transition(&mut self, turn: usize, to: DialogueStage) {
        debug_assert!(self.stage.can_move_to(to), "{:?} -> {:?}", self.stage, to);
        self.transitions.push(StageTransition { turn, from: self.stage, to });
        self.stage = to;
    }

    fn record(&mut self, speaker: &ParticipantId, mv: Move, target: Option<Target>) -> (LocutionId, LedgerDelta) {
        let id = self.next_id();
        let content = normalize_content(mv.content);
        for s in &content {
            self.lexicon.entry(s.formula.clone()).or_insert(s.category);
        }
        let formulas: BTreeSet<Formula> = content.iter().map(|s| s.formula.clone()).collect();
        let delta = if mv.kind.class() == LocutionClass::Management {
            LedgerDelta::default()
        } else {
            self.ledger
                .apply_commitment_effects(speaker, mv.kind, &formulas)
                .expect("validated move against an open ledger")
        };
        let turn = self.turns.len() - 1;
        self.history.push(Locution {
            id,
            turn,
            speaker: speaker.clone(),
            kind: mv.kind,
            content,
            target: target.map(|t| t.id),
            prompt_targets: mv.prompt_targets,
        });
        self.turns[turn].locutions.push(id);
        (id, delta)
    }

    fn apply_move(&mut self, turn: usize, speaker: &ParticipantId, mv: Move, target: Option<Target>) {
        let kind = mv.kind;
        let (id, _) = self.record(speaker, mv, target.clone());

        if let Some(t) = &target {
            // A reply by the debtor discharges the matching obligation.
            for o in self.obligations.iter_mut() {
                if !o.discharged && o.request == t.id && &o.debtor == speaker {
                    o.discharged = true;
                }
            }
            if kind.is_request() {
                self.obligations.push(PolitenessObligation {
                    debtor: t.speaker.clone(),
                    request: id,
                    discharged: false,
                });
            }
        }

        match kind {
            LocutionKind::End => {
                if self.stage == DialogueStage::Progress {
                    self.transition(turn, DialogueStage::Termination);
                }
                self.consent.insert(speaker.clone());
                if self.consent.len() == self.participants.len() {
                    self.transition(turn, DialogueStage::Closed);
                    let DialogueConfig { conflict_policy, closure_mode, .. } = &self.config;
                    self.ledger
                        .close(&self.history, DialogueStage::Closed, conflict_policy, *closure_mode)
                        .expect("closing a terminated dialogue");
                }
            }
            LocutionKind::Prompt if self.stage == DialogueStage::Termination => {
                self.consent.clear();
                self.transition(turn, DialogueStage::Progress);
            }
            _ => {}
        }
    }
}
