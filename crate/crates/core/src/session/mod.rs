//! Sessions: registration, the turn pipeline and event sourcing.
//!
//! Every change is expressed as [`SessionEvent`]s. [`Session::decide`] turns a
//! command into events without touching state, the caller persists them, and
//! [`Session::apply`] folds them in. Replay is the same fold over a stored log.

mod event;
mod store;

use std::collections::BTreeSet;

use thiserror::Error;

pub use event::{EventBody, SessionEvent};
pub use store::{parse_log, valid_session_id, EventStore, FileEventStore, MemoryEventStore};

use crate::api::{
    ClosureView, ExclusionView, JoinResponse, LegalRepliesResponse, LegalReply, LocutionView, ObligationView,
    ParticipantView, Role, SessionConfig, SessionStatus, Snapshot, StartPolicy, StartResponse, TurnAccepted, WireMove,
};
use crate::content::{parse_formula, ConflictPolicy, Formula};
use crate::labels::LabelTable;
use crate::protocol::{
    legal_replies, DialogueConfig, DialogueState, LocutionId, LocutionKind, Move, ParticipantId, Turn, TurnRejection,
    Violation,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SessionError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{0}")]
    InvalidName(String),
    #[error("the session already has an initiator")]
    SecondInitiator,
    #[error("the session has already started")]
    SessionStarted,
    #[error("`{0}` is already taken")]
    DuplicateName(String),
    #[error("no initiator has joined")]
    NoInitiator,
    #[error("need {needed} participants, have {have}")]
    NotEnoughParticipants { needed: usize, have: usize },
    #[error("the session has not started")]
    NotStarted,
    #[error("the session is closed")]
    Closed,
    #[error("`{0}` has not joined this session")]
    UnknownParticipant(String),
    #[error("no locution {0}")]
    UnknownLocution(LocutionId),
    #[error("corrupt event log at seq {seq}: {reason}")]
    CorruptLog { seq: u64, reason: String },
    #[error("storage failure: {0}")]
    Storage(String),
}

impl SessionError {
    pub fn code(&self) -> &'static str {
        match self {
            SessionError::InvalidConfig(_) => "INVALID_CONFIG",
            SessionError::InvalidName(_) => "INVALID_NAME",
            SessionError::SecondInitiator => "SECOND_INITIATOR",
            SessionError::SessionStarted => "SESSION_STARTED",
            SessionError::DuplicateName(_) => "DUPLICATE_NAME",
            SessionError::NoInitiator => "NO_INITIATOR",
            SessionError::NotEnoughParticipants { .. } => "NOT_ENOUGH_PARTICIPANTS",
            SessionError::NotStarted => "SESSION_NOT_STARTED",
            SessionError::Closed => "SESSION_CLOSED",
            SessionError::UnknownParticipant(_) => "UNKNOWN_PARTICIPANT",
            SessionError::UnknownLocution(_) => "UNKNOWN_LOCUTION",
            SessionError::CorruptLog { .. } => "CORRUPT_LOG",
            SessionError::Storage(_) => "STORAGE",
        }
    }
}

/// Requests a session can act on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Command {
    Join { name: String, role: Role },
    Start,
    SubmitTurn { speaker: String, moves: Vec<WireMove> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Joined(JoinResponse),
    Started(StartResponse),
    Accepted(TurnAccepted),
    /// The turn was refused; `code` is `NOT_YOUR_TURN` or `TURN_REJECTED`.
    Rejected {
        code: String,
        message: String,
        violations: Vec<Violation>,
    },
}

/// Translates session parameters into kernel rules.
pub fn dialogue_config(config: &SessionConfig) -> Result<DialogueConfig, SessionError> {
    if config.min_participants < 2 {
        return Err(SessionError::InvalidConfig("min_participants must be at least 2".into()));
    }
    let mut groups = Vec::new();
    for g in &config.exclusion_groups {
        let mut atoms = BTreeSet::new();
        for text in g {
            match parse_formula(text) {
                Ok(Formula::Atom(a)) => {
                    atoms.insert(a);
                }
                Ok(_) => return Err(SessionError::InvalidConfig(format!("`{text}` is not a positive atom"))),
                Err(e) => return Err(SessionError::InvalidConfig(format!("`{text}`: {e}"))),
            }
        }
        groups.push(atoms);
    }
    let conflict_policy = if groups.is_empty() {
        ConflictPolicy::negation_only()
    } else {
        ConflictPolicy::with_exclusion_groups(groups).map_err(SessionError::InvalidConfig)?
    };
    Ok(DialogueConfig {
        turn_order: config.turn_order,
        relatedness_enforced: config.relatedness_enforced,
        allow_assert_on_advise: config.allow_assert_on_advise,
        conflict_policy,
        closure_mode: config.closure_mode,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Session {
    id: String,
    config: SessionConfig,
    rules: DialogueConfig,
    /// Join order.
    joined: Vec<(ParticipantId, Role)>,
    dialogue: Option<DialogueState>,
    seq: u64,
}

impl Session {
    /// A lobby session that has not yet recorded its `Created` event.
    fn blank(id: &str) -> Self {
        let config = SessionConfig::default();
        Self {
            id: id.to_string(),
            rules: dialogue_config(&config).expect("default config is valid"),
            config,
            joined: Vec::new(),
            dialogue: None,
            seq: 0,
        }
    }

    /// Creates a session and returns it with its first event.
    pub fn create(id: &str, config: SessionConfig, ts: u64) -> Result<(Session, SessionEvent), SessionError> {
        if !valid_session_id(id) {
            return Err(SessionError::InvalidConfig(format!("invalid session id `{id}`")));
        }
        dialogue_config(&config)?;
        let mut s = Session::blank(id);
        let ev = SessionEvent { seq: 1, session: id.to_string(), body: EventBody::Created { config }, ts };
        s.apply(&ev)?;
        Ok((s, ev))
    }

    /// Rebuilds a session from its log. An empty log yields a lobby session
    /// with the default configuration.
    pub fn replay(id: &str, events: &[SessionEvent]) -> Result<Session, SessionError> {
        let mut s = Session::blank(id);
        for ev in events {
            s.apply(ev)?;
        }
        Ok(s)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    /// Sequence number of the last applied event.
    pub fn seq(&self) -> u64 {
        self.seq
    }

    pub fn dialogue(&self) -> Option<&DialogueState> {
        self.dialogue.as_ref()
    }

    pub fn status(&self) -> SessionStatus {
        self.dialogue.as_ref().map_or(SessionStatus::Lobby, |d| d.stage().into())
    }

    /// Participants in speaking order: the initiator first, then join order.
    pub fn participants(&self) -> Vec<(ParticipantId, Role)> {
        let mut out: Vec<_> = self.joined.iter().filter(|(_, r)| *r == Role::Initiator).cloned().collect();
        out.extend(self.joined.iter().filter(|(_, r)| *r == Role::Participant).cloned());
        out
    }

    fn has_initiator(&self) -> bool {
        self.joined.iter().any(|(_, r)| *r == Role::Initiator)
    }

    fn event(&self, offset: u64, body: EventBody, ts: u64) -> SessionEvent {
        SessionEvent { seq: self.seq + offset, session: self.id.clone(), body, ts }
    }

    fn start_event(&self, offset: u64, ts: u64) -> SessionEvent {
        self.event(
            offset,
            EventBody::StageChanged { turn: None, from: SessionStatus::Lobby, to: SessionStatus::Commencement },
            ts,
        )
    }

    /// Computes the events a command produces. State is not modified.
    pub fn decide(&self, cmd: &Command, ts: u64) -> Result<(Outcome, Vec<SessionEvent>), SessionError> {
        if self.seq == 0 {
            return Err(SessionError::CorruptLog { seq: 1, reason: "session was never created".into() });
        }
        match cmd {
            Command::Join { name, role } => self.decide_join(name, *role, ts),
            Command::Start => self.decide_start(ts),
            Command::SubmitTurn { speaker, moves } => self.decide_turn(speaker, moves, ts),
        }
    }

    /// Decides, persists through `persist`, then applies.
    pub fn execute(
        &mut self,
        cmd: &Command,
        ts: u64,
        persist: impl FnOnce(&[SessionEvent]) -> Result<(), SessionError>,
    ) -> Result<(Outcome, Vec<SessionEvent>), SessionError> {
        let (outcome, events) = self.decide(cmd, ts)?;
        persist(&events)?;
        for ev in &events {
            self.apply(ev)?;
        }
        Ok((outcome, events))
    }

    fn decide_join(&self, name: &str, role: Role, ts: u64) -> Result<(Outcome, Vec<SessionEvent>), SessionError> {
        if self.dialogue.is_some() {
            return Err(SessionError::SessionStarted);
        }
        let participant = ParticipantId::new(name).map_err(SessionError::InvalidName)?;
        if self.joined.iter().any(|(p, _)| *p == participant) {
            return Err(SessionError::DuplicateName(name.to_string()));
        }
        if role == Role::Initiator && self.has_initiator() {
            return Err(SessionError::SecondInitiator);
        }
        let mut after = self.clone();
        after.joined.push((participant.clone(), role));
        let position = after.participants().iter().position(|(p, _)| *p == participant).expect("just joined");
        let mut events =
            vec![self.event(1, EventBody::Joined { participant: participant.clone(), role, position }, ts)];
        let quorum = after.joined.len() >= self.config.min_participants && after.has_initiator();
        let mut status = SessionStatus::Lobby;
        if self.config.start == StartPolicy::Quorum && quorum {
            events.push(self.start_event(2, ts));
            status = SessionStatus::Commencement;
        }
        Ok((Outcome::Joined(JoinResponse { participant, position, status }), events))
    }

    fn decide_start(&self, ts: u64) -> Result<(Outcome, Vec<SessionEvent>), SessionError> {
        if self.dialogue.is_some() {
            return Err(SessionError::SessionStarted);
        }
        if !self.has_initiator() {
            return Err(SessionError::NoInitiator);
        }
        if self.joined.len() < self.config.min_participants {
            return Err(SessionError::NotEnoughParticipants {
                needed: self.config.min_participants,
                have: self.joined.len(),
            });
        }
        let events = vec![self.start_event(1, ts)];
        Ok((Outcome::Started(StartResponse { status: SessionStatus::Commencement }), events))
    }

    fn decide_turn(
        &self,
        speaker: &str,
        moves: &[WireMove],
        ts: u64,
    ) -> Result<(Outcome, Vec<SessionEvent>), SessionError> {
        let Some(state) = &self.dialogue else {
            return Err(SessionError::NotStarted);
        };
        let speaker = ParticipantId::new(speaker)
            .ok()
            .filter(|p| self.joined.iter().any(|(q, _)| q == p))
            .ok_or_else(|| SessionError::UnknownParticipant(speaker.to_string()))?;
        if state.stage() == crate::DialogueStage::Closed {
            return Err(SessionError::Closed);
        }

        let reject = |code: &str, message: String, violations: Vec<Violation>| {
            let body = EventBody::TurnRejected {
                speaker: speaker.clone(),
                moves: moves.to_vec(),
                code: code.to_string(),
                violations: violations.clone(),
            };
            let outcome = Outcome::Rejected { code: code.to_string(), message, violations };
            Ok((outcome, vec![self.event(1, body, ts)]))
        };

        let mut decoded = Vec::with_capacity(moves.len());
        let mut bad = Vec::new();
        for (i, w) in moves.iter().enumerate() {
            match w.to_move(state.lexicon()) {
                Ok(m) => decoded.push(m),
                Err(v) => bad.push(v.at(i)),
            }
        }
        if !bad.is_empty() {
            return reject("TURN_REJECTED", "the turn breaks the protocol".into(), bad);
        }
        let turn = Turn::new(speaker.clone(), decoded);
        let next = match state.apply_turn(&turn) {
            Ok(next) => next,
            Err(TurnRejection::NotYourTurn { eligible, .. }) => {
                let names: Vec<&str> = eligible.iter().map(ParticipantId::as_str).collect();
                return reject("NOT_YOUR_TURN", format!("waiting for {}", names.join(" or ")), Vec::new());
            }
            Err(TurnRejection::DialogueClosed) => return Err(SessionError::Closed),
            Err(TurnRejection::UnknownSpeaker(p)) => return Err(SessionError::UnknownParticipant(p.to_string())),
            Err(TurnRejection::Violations(v)) => {
                return reject("TURN_REJECTED", "the turn breaks the protocol".into(), v)
            }
        };

        let index = state.turns().len();
        let locutions = next.turns()[index].locutions.clone();
        let mut events = vec![self.event(
            1,
            EventBody::TurnAccepted {
                turn: index,
                speaker: speaker.clone(),
                moves: turn.moves.iter().map(WireMove::from_move).collect(),
                locutions: locutions.clone(),
            },
            ts,
        )];
        for t in next.transitions().iter().filter(|t| t.turn == index) {
            let body = EventBody::StageChanged { turn: Some(index), from: t.from.into(), to: t.to.into() };
            events.push(self.event(events.len() as u64 + 1, body, ts));
        }
        if next.stage() == crate::DialogueStage::Closed {
            let agreement = next.ledger().agreement().entries.iter().map(Formula::to_string).collect();
            events.push(self.event(events.len() as u64 + 1, EventBody::Closed { agreement }, ts));
        }
        let accepted = TurnAccepted {
            turn: index,
            locutions,
            status: next.stage().into(),
            next_speakers: next.eligible_speakers(),
            seq: self.seq + events.len() as u64,
        };
        Ok((Outcome::Accepted(accepted), events))
    }

    /// Folds one event into the session, checking it is the expected next one.
    pub fn apply(&mut self, ev: &SessionEvent) -> Result<(), SessionError> {
        let corrupt = |reason: String| SessionError::CorruptLog { seq: ev.seq, reason };
        if ev.seq != self.seq + 1 {
            return Err(SessionError::CorruptLog {
                seq: self.seq + 1,
                reason: format!("expected seq {}, found {}", self.seq + 1, ev.seq),
            });
        }
        if ev.session != self.id {
            return Err(corrupt(format!("event belongs to session `{}`", ev.session)));
        }
        if self.seq == 0 && !matches!(ev.body, EventBody::Created { .. }) {
            return Err(corrupt("log must start with Created".into()));
        }
        match &ev.body {
            EventBody::Created { config } => {
                if self.seq != 0 {
                    return Err(corrupt("duplicate Created".into()));
                }
                self.rules = dialogue_config(config).map_err(|e| corrupt(e.to_string()))?;
                self.config = config.clone();
            }
            EventBody::Joined { participant, role, position } => {
                if self.dialogue.is_some() {
                    return Err(corrupt("join after start".into()));
                }
                if self.joined.iter().any(|(p, _)| p == participant)
                    || (*role == Role::Initiator && self.has_initiator())
                {
                    return Err(corrupt(format!("invalid join of `{participant}`")));
                }
                self.joined.push((participant.clone(), *role));
                if self.participants().get(*position).map(|(p, _)| p) != Some(participant) {
                    return Err(corrupt("join position mismatch".into()));
                }
            }
            EventBody::StageChanged { turn: None, from: SessionStatus::Lobby, to: SessionStatus::Commencement } => {
                if self.dialogue.is_some() || !self.has_initiator() {
                    return Err(corrupt("cannot start".into()));
                }
                let order = self.participants().into_iter().map(|(p, _)| p).collect();
                self.dialogue = Some(DialogueState::new(self.rules.clone(), order).map_err(corrupt)?);
            }
            EventBody::StageChanged { turn, from, to } => {
                let state = self.dialogue.as_ref().ok_or_else(|| corrupt("stage change before start".into()))?;
                let known = state.transitions().iter().any(|t| {
                    Some(t.turn) == *turn && SessionStatus::from(t.from) == *from && SessionStatus::from(t.to) == *to
                });
                if !known {
                    return Err(corrupt(format!("unexpected stage change {from:?} -> {to:?}")));
                }
            }
            EventBody::TurnAccepted { turn, speaker, moves, locutions } => {
                let state = self.dialogue.as_ref().ok_or_else(|| corrupt("turn before start".into()))?;
                if *turn != state.turns().len() {
                    return Err(corrupt(format!("turn {turn} out of order")));
                }
                let decoded: Result<Vec<Move>, _> = moves.iter().map(|m| m.to_move(state.lexicon())).collect();
                let decoded = decoded.map_err(|v| corrupt(v.to_string()))?;
                let next = state
                    .apply_turn(&Turn::new(speaker.clone(), decoded))
                    .map_err(|e| corrupt(format!("recorded turn no longer applies: {e:?}")))?;
                if &next.turns()[*turn].locutions != locutions {
                    return Err(corrupt("locution ids differ".into()));
                }
                self.dialogue = Some(next);
            }
            EventBody::TurnRejected { .. } => {
                if self.dialogue.is_none() {
                    return Err(corrupt("turn before start".into()));
                }
            }
            EventBody::Closed { agreement } => {
                let state = self.dialogue.as_ref().ok_or_else(|| corrupt("close before start".into()))?;
                let actual: Vec<String> = state.ledger().agreement().entries.iter().map(Formula::to_string).collect();
                if state.stage() != crate::DialogueStage::Closed || &actual != agreement {
                    return Err(corrupt("closure does not match the replayed dialogue".into()));
                }
            }
        }
        self.seq = ev.seq;
        Ok(())
    }

    /// The reply kinds a participant may choose against `target`.
    pub fn legal_replies(&self, target: LocutionId, labels: &LabelTable) -> Result<LegalRepliesResponse, SessionError> {
        let state = self.dialogue.as_ref().ok_or(SessionError::UnknownLocution(target))?;
        let loc = state.locution(target).ok_or(SessionError::UnknownLocution(target))?;
        let mut kinds: Vec<LocutionKind> = legal_replies(loc.kind).to_vec();
        if state.config().allow_assert_on_advise && loc.kind == LocutionKind::Advise {
            kinds.push(LocutionKind::Assert);
        }
        let replies =
            kinds.into_iter().map(|kind| LegalReply { kind, label: labels.label(kind).to_string() }).collect();
        Ok(LegalRepliesResponse { target, target_kind: loc.kind, replies })
    }

    pub fn snapshot(&self) -> Snapshot {
        let participants = self
            .participants()
            .into_iter()
            .enumerate()
            .map(|(position, (name, role))| ParticipantView { name, role, position })
            .collect();
        let mut snap = Snapshot {
            session: self.id.clone(),
            status: self.status(),
            participants,
            next_speakers: Vec::new(),
            turns: 0,
            history: Vec::new(),
            commitments: Default::default(),
            agreement: Vec::new(),
            agreement_closed: false,
            obligations: Vec::new(),
            prompt_pending: BTreeSet::new(),
            consent: BTreeSet::new(),
            closure: None,
            seq: self.seq,
        };
        let Some(state) = &self.dialogue else {
            return snap;
        };
        let render = |set: &BTreeSet<Formula>| set.iter().map(Formula::to_string).collect::<Vec<_>>();
        snap.next_speakers = state.eligible_speakers();
        snap.turns = state.turns().len();
        snap.history = state
            .history()
            .iter()
            .map(|l| LocutionView {
                id: l.id,
                turn: l.turn,
                speaker: l.speaker.clone(),
                kind: l.kind,
                content: l.content.iter().map(ToString::to_string).collect(),
                target: l.target,
                prompt_targets: l.prompt_targets.iter().copied().collect(),
            })
            .collect();
        snap.commitments = state.ledger().stores().map(|(p, cs)| (p.clone(), render(cs))).collect();
        snap.agreement = render(&state.ledger().agreement().entries);
        snap.agreement_closed = state.ledger().agreement().closed;
        snap.obligations = state
            .obligations()
            .iter()
            .filter(|o| !o.discharged)
            .map(|o| ObligationView { debtor: o.debtor.clone(), request: o.request })
            .collect();
        snap.prompt_pending = state.prompt_pending();
        snap.consent = state.consent().clone();
        snap.closure = state.ledger().closure_report().map(|r| ClosureView {
            added: render(&r.added),
            excluded: r
                .excluded
                .iter()
                .map(|(f, reason)| ExclusionView { formula: f.to_string(), reason: *reason })
                .collect(),
        });
        snap
    }
}
