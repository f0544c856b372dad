//! Random generation of legal dialogues for property tests.
//!
//! Candidate moves are drawn from a small vocabulary with overlapping
//! predicates and kept only when the kernel accepts them, so every generated
//! history is legal by construction.

use std::collections::BTreeSet;

use rand::rngs::StdRng;
use rand::seq::{IndexedRandom, IteratorRandom, SliceRandom};
use rand::{Rng, SeedableRng};

use crate::api::{Role, SessionConfig, StartPolicy, WireMove};
use crate::content::{parse_tagged, CategorySet, Formula, Statement};
use crate::ledger::ClosureMode;
use crate::protocol::{
    legal_replies, promptable, DialogueStage, DialogueState, Locution, LocutionId, LocutionKind, Move, ParticipantId,
    Turn, TurnOrder,
};
use crate::session::{dialogue_config, Command, Outcome, Session, SessionError, SessionEvent};

const VOCABULARY: &[&str] = &[
    "sym(a) @observation",
    "sym(b) @observation",
    "sym(c) @observation",
    "age(50) @observation",
    "dx(p) @verdict",
    "dx(q) @verdict",
    "dx(r) @verdict",
    "test(x) @evaluative",
    "test(y) @evaluative",
    "rest @remedial",
    "diet @remedial",
    "risk(h) @concern",
    "risk(k) @concern",
    "sym(d) @fact",
    "lab(z) @fact",
    "sym(a) -> dx(p) @rule",
    "sym(b) & sym(c) -> dx(q) @rule",
    "dx(p) -> test(x) @rule",
    "dx(q) & !sym(a) -> test(y) @rule",
    "risk(h) -> rest @rule",
    "lab(z) & age(50) -> dx(r) @rule",
];

/// A generated dialogue with the state after every accepted turn.
#[derive(Debug, Clone)]
pub struct Dialogue {
    pub config: SessionConfig,
    pub participants: Vec<ParticipantId>,
    pub turns: Vec<Turn>,
    /// `states[0]` is the fresh dialogue, `states[i + 1]` follows `turns[i]`.
    pub states: Vec<DialogueState>,
}

impl Dialogue {
    pub fn last(&self) -> &DialogueState {
        self.states.last().expect("at least the initial state")
    }
}

pub struct Fuzz {
    rng: StdRng,
    vocabulary: Vec<Statement>,
}

impl Fuzz {
    pub fn new(seed: u64) -> Self {
        let vocabulary = VOCABULARY
            .iter()
            .map(|t| {
                let (mut fs, cat) = parse_tagged(t).expect("vocabulary parses");
                Statement::new(fs.remove(0), cat.expect("tagged"))
            })
            .collect();
        Self { rng: StdRng::seed_from_u64(seed), vocabulary }
    }

    pub fn rng(&mut self) -> &mut StdRng {
        &mut self.rng
    }

    pub fn config(&mut self) -> SessionConfig {
        let exclusion_groups = if self.rng.random_bool(0.5) {
            vec![vec!["dx(p)".into(), "dx(q)".into(), "dx(r)".into()]]
        } else {
            Vec::new()
        };
        SessionConfig {
            min_participants: 2,
            start: StartPolicy::Quorum,
            turn_order: if self.rng.random_bool(0.5) { TurnOrder::Cyclic } else { TurnOrder::Open },
            relatedness_enforced: self.rng.random_bool(0.7),
            allow_assert_on_advise: self.rng.random_bool(0.2),
            exclusion_groups,
            closure_mode: if self.rng.random_bool(0.7) {
                ClosureMode::ChallengeAware
            } else {
                ClosureMode::UnionMinusConflicts
            },
        }
    }

    pub fn participants(&mut self, max: usize) -> Vec<ParticipantId> {
        let n = self.rng.random_range(2..=max.max(2));
        (0..n).map(|i| ParticipantId::new(format!("p{i}")).expect("valid name")).collect()
    }

    fn of(&self, set: CategorySet) -> Vec<Statement> {
        self.vocabulary.iter().filter(|s| set.contains(s.category)).cloned().collect()
    }

    fn pick_some(&mut self, pool: &[Statement], max: usize) -> Vec<Statement> {
        if pool.is_empty() {
            return Vec::new();
        }
        let n = self.rng.random_range(1..=max.min(pool.len()));
        pool.choose_multiple(&mut self.rng, n).cloned().collect()
    }

    pub fn opening(&mut self, initiator: &ParticipantId) -> Turn {
        let mut moves = Vec::new();
        for kind in LocutionKind::OPENING {
            let pool = self.of(kind.content_categories());
            let content = self.pick_some(&pool, 3);
            moves.push(Move::new(kind, content, None));
        }
        moves.push(Move::pass());
        Turn::new(initiator.clone(), moves)
    }

    /// Picks the next speaker among those allowed.
    pub fn speaker(&mut self, state: &DialogueState) -> Option<ParticipantId> {
        state.eligible_speakers().choose(&mut self.rng).cloned()
    }

    fn statements_for(&self, state: &DialogueState, formulas: impl IntoIterator<Item = Formula>) -> Vec<Statement> {
        formulas.into_iter().filter_map(|f| state.lexicon().get(&f).map(|c| Statement::new(f, *c))).collect()
    }

    fn content_for(
        &mut self,
        state: &DialogueState,
        speaker: &ParticipantId,
        target: &Locution,
        kind: LocutionKind,
    ) -> Vec<Statement> {
        use LocutionKind::*;
        let target_content = target.formulas();
        match kind {
            Agree => {
                let pool: Vec<Formula> =
                    target_content.iter().filter(|f| state.ledger().committed_by_other(speaker, f)).cloned().collect();
                let n = if pool.is_empty() { 0 } else { self.rng.random_range(1..=pool.len()) };
                let chosen: Vec<Formula> = pool.choose_multiple(&mut self.rng, n).cloned().collect();
                self.statements_for(state, chosen)
            }
            Retract => {
                let mine: Vec<Formula> = target_content
                    .iter()
                    .filter(|f| state.ledger().store_of(speaker).is_ok_and(|cs| cs.entries.contains(*f)))
                    .cloned()
                    .collect();
                self.statements_for(state, mine.into_iter().take(1))
            }
            WhExplain | WhJustify | WhClarify => {
                let allowed = kind.content_categories();
                let pool: Vec<Statement> = target
                    .content
                    .iter()
                    .filter(|s| allowed.contains(s.category) || self.rng.random_bool(0.1))
                    .cloned()
                    .collect();
                if pool.is_empty() {
                    let any = self.of(allowed.union(CategorySet::F));
                    self.pick_some(&any, 1)
                } else {
                    self.pick_some(&pool, 2)
                }
            }
            Explain | Justify | Clarify => {
                let pool = self.of(kind.content_categories());
                let mut out = self.pick_some(&pool, 1);
                if self.rng.random_bool(0.3) {
                    out.extend(self.pick_some(&self.vocabulary.clone(), 1));
                }
                out
            }
            Assert => {
                let pool: Vec<Statement> =
                    self.of(CategorySet::F).into_iter().filter(|s| !target_content.contains(&s.formula)).collect();
                self.pick_some(&pool, 2)
            }
            Observation | Verdict | Advise | Concern => {
                let pool = self.of(kind.content_categories());
                self.pick_some(&pool, 2)
            }
            Prompt | End | Pass => Vec::new(),
        }
    }

    /// A reply candidate for `speaker`; may be illegal.
    pub fn candidate(&mut self, state: &DialogueState, speaker: &ParticipantId) -> Option<Move> {
        use LocutionKind::*;
        let history = state.history();
        if state.stage() == DialogueStage::Termination || self.rng.random_bool(0.04) {
            if !state.consent().contains(speaker) && self.rng.random_bool(0.7) {
                return Some(Move::end());
            }
            let targets: Vec<LocutionId> = history.iter().filter(|l| promptable(l.kind)).map(|l| l.id).collect();
            let n = self.rng.random_range(1..=2.min(targets.len().max(1)));
            let chosen: Vec<LocutionId> = targets.choose_multiple(&mut self.rng, n).copied().collect();
            return (!chosen.is_empty()).then(|| Move::prompt(chosen));
        }
        let open = state.open_obligations(speaker);
        let target = if !open.is_empty() && self.rng.random_bool(0.9) {
            let req = open.choose(&mut self.rng)?.request;
            state.locution(req)?.clone()
        } else {
            history.iter().filter(|l| !legal_replies(l.kind).is_empty()).choose(&mut self.rng)?.clone()
        };
        let target = if target.kind == Prompt {
            let id = *target.prompt_targets.iter().choose(&mut self.rng)?;
            state.locution(id)?.clone()
        } else {
            target
        };
        let kind = *legal_replies(target.kind).choose(&mut self.rng)?;
        if matches!(kind, End | Prompt) {
            return None;
        }
        let content = self.content_for(state, speaker, &target, kind);
        Some(Move::new(kind, content, Some(target.id)))
    }

    /// Builds an acceptable turn for `speaker`, if one is found quickly.
    pub fn turn(&mut self, state: &DialogueState, speaker: &ParticipantId) -> Option<Turn> {
        if state.stage() == DialogueStage::Commencement {
            return Some(self.opening(speaker));
        }
        for _ in 0..12 {
            let want = self.rng.random_range(1..=3);
            let mut moves: Vec<Move> = Vec::new();
            for _ in 0..want * 3 {
                if moves.len() == want {
                    break;
                }
                if let Some(mv) = self.candidate(state, speaker) {
                    if state.validate_move(speaker, &mv).is_empty() && !moves.contains(&mv) {
                        moves.push(mv);
                    }
                }
            }
            // Moves that only fail in sequence are dropped one at a time.
            while !moves.is_empty() {
                let mut with_pass = moves.clone();
                with_pass.push(Move::pass());
                let turn = Turn::new(speaker.clone(), with_pass);
                match state.apply_turn(&turn) {
                    Ok(_) => return Some(turn),
                    Err(e) => {
                        let bad = e.violations().iter().find_map(|v| v.move_index).unwrap_or(moves.len() - 1);
                        moves.remove(bad.min(moves.len() - 1));
                    }
                }
            }
        }
        None
    }

    /// A random legal dialogue of at most `max_turns` turns.
    pub fn dialogue(&mut self, max_participants: usize, max_turns: usize) -> Dialogue {
        let mut config = self.config();
        let participants = self.participants(max_participants);
        config.min_participants = participants.len();
        let rules = dialogue_config(&config).expect("generated config is valid");
        let mut states = vec![DialogueState::new(rules, participants.clone()).expect("valid roster")];
        let mut turns = Vec::new();
        while turns.len() < max_turns {
            let state = states.last().expect("non-empty");
            if state.stage() == DialogueStage::Closed {
                break;
            }
            let Some(speaker) = self.speaker(state) else { break };
            let Some(turn) = self.turn(state, &speaker) else { break };
            let next = state.apply_turn(&turn).expect("generated turns are legal");
            turns.push(turn);
            states.push(next);
        }
        Dialogue { config, participants, turns, states }
    }

    /// A move by `speaker` that is legal except that it ignores an open
    /// wh-request addressed to them.
    pub fn impolite_move(&mut self, state: &DialogueState, speaker: &ParticipantId) -> Option<Move> {
        let open: BTreeSet<LocutionId> = state.open_obligations(speaker).iter().map(|o| o.request).collect();
        if open.is_empty() {
            return None;
        }
        for _ in 0..20 {
            let mut mv = match self.candidate(state, speaker) {
                Some(m) => m,
                None => continue,
            };
            if mv.kind == LocutionKind::End {
                continue;
            }
            // Replies to a prompt are redirected to what it prompted.
            let redirected = mv.target.and_then(|t| state.locution(t)).is_some_and(|l| l.kind == LocutionKind::Prompt);
            if redirected || mv.target.is_some_and(|t| open.contains(&t)) {
                let other = state
                    .history()
                    .iter()
                    .filter(|l| {
                        !open.contains(&l.id) && l.kind != LocutionKind::Prompt && !legal_replies(l.kind).is_empty()
                    })
                    .choose(&mut self.rng)?;
                let kind = *legal_replies(other.kind).choose(&mut self.rng)?;
                if matches!(kind, LocutionKind::End | LocutionKind::Prompt) {
                    continue;
                }
                let content = self.content_for(state, speaker, other, kind);
                mv = Move::new(kind, content, Some(other.id));
            }
            return Some(mv);
        }
        let any = state.history().iter().find(|l| !open.contains(&l.id) && promptable(l.kind))?;
        Some(Move::prompt([any.id]))
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.rng);
    }
}

/// Runs a generated dialogue through a session, returning the session after
/// every applied event together with the full log.
pub fn run_as_session(id: &str, d: &Dialogue) -> Result<(Vec<Session>, Vec<SessionEvent>), SessionError> {
    let (mut session, created) = Session::create(id, d.config.clone(), 0)?;
    let mut after_each = vec![session.clone()];
    let mut log = vec![created];
    let run = |session: &mut Session, cmd: Command, log: &mut Vec<SessionEvent>, after: &mut Vec<Session>| {
        let (outcome, events) = session.decide(&cmd, log.len() as u64)?;
        for ev in &events {
            session.apply(ev)?;
            after.push(session.clone());
        }
        log.extend(events);
        Ok::<Outcome, SessionError>(outcome)
    };
    for (i, p) in d.participants.iter().enumerate() {
        let role = if i == 0 { Role::Initiator } else { Role::Participant };
        run(&mut session, Command::Join { name: p.to_string(), role }, &mut log, &mut after_each)?;
    }
    for turn in &d.turns {
        let moves = turn.moves.iter().map(WireMove::from_move).collect();
        let out = run(
            &mut session,
            Command::SubmitTurn { speaker: turn.speaker.to_string(), moves },
            &mut log,
            &mut after_each,
        )?;
        if let Outcome::Rejected { code, violations, .. } = out {
            return Err(SessionError::CorruptLog { seq: session.seq(), reason: format!("{code}: {violations:?}") });
        }
    }
    Ok((after_each, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::content::Category;

    #[test]
    fn generated_dialogues_are_reproducible() {
        let a = Fuzz::new(7).dialogue(4, 20);
        let b = Fuzz::new(7).dialogue(4, 20);
        assert_eq!(a.turns, b.turns);
        assert!(a.turns.len() > 1);
    }

    #[test]
    fn vocabulary_categories_match_shapes() {
        let f = Fuzz::new(0);
        for s in &f.vocabulary {
            assert_eq!(s.formula.is_rule(), s.category == Category::Rule, "{s}");
        }
    }
}
