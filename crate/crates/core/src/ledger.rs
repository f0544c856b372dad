//! Commitment stores, the multilateral agreement store and closure.
//!
//! Effects per locution class:
//!
//! | kinds                               | CS(speaker)  | AS                 |
//! |-------------------------------------|--------------|--------------------|
//! | L1, explain, justify, clarify       | += content   | –                  |
//! | agree                               | += content   | += content         |
//! | wh-requests                         | –            | −= exact matches   |
//! | prompt, end, pass                   | –            | –                  |
//! | retract                             | −= content   | −= content         |
//!
//! At closure the union of all stores, minus conflicting and (by default)
//! unresolved-challenged formulas, is merged into the agreement store.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::content::{ConflictPolicy, Formula};
use crate::protocol::{DialogueStage, Locution, LocutionClass, LocutionId, LocutionKind, ParticipantId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("unknown participant `{0}`")]
    UnknownParticipant(ParticipantId),
    #[error("the agreement store is closed")]
    Closed,
    #[error("closure requested before the dialogue terminated")]
    ClosureBeforeTermination,
}

impl LedgerError {
    pub fn code(&self) -> &'static str {
        match self {
            LedgerError::UnknownParticipant(_) => "UNKNOWN_PARTICIPANT",
            LedgerError::Closed => "LEDGER_CLOSED",
            LedgerError::ClosureBeforeTermination => "CLOSURE_BEFORE_TERMINATION",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ClosureMode {
    UnionMinusConflicts,
    #[default]
    ChallengeAware,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommitmentStore {
    pub owner: ParticipantId,
    pub entries: BTreeSet<Formula>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AgreementStore {
    pub entries: BTreeSet<Formula>,
    pub closed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ExclusionReason {
    UnresolvedChallenge,
    ConflictsWithAgreement,
    MutualConflict,
}

/// What closure added to the agreement store and what it left out.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ClosureReport {
    pub added: BTreeSet<Formula>,
    pub excluded: BTreeMap<Formula, ExclusionReason>,
}

/// Changes one move made to the ledger.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LedgerDelta {
    pub cs_added: BTreeSet<Formula>,
    pub cs_removed: BTreeSet<Formula>,
    pub as_added: BTreeSet<Formula>,
    pub as_removed: BTreeSet<Formula>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommitmentLedger {
    stores: BTreeMap<ParticipantId, BTreeSet<Formula>>,
    agreement: AgreementStore,
    closure: Option<ClosureReport>,
}

impl CommitmentLedger {
    pub fn new<'a>(participants: impl IntoIterator<Item = &'a ParticipantId>) -> Self {
        Self {
            stores: participants.into_iter().map(|p| (p.clone(), BTreeSet::new())).collect(),
            agreement: AgreementStore::default(),
            closure: None,
        }
    }

    pub fn apply_commitment_effects(
        &mut self,
        speaker: &ParticipantId,
        kind: LocutionKind,
        content: &BTreeSet<Formula>,
    ) -> Result<LedgerDelta, LedgerError> {
        if self.agreement.closed {
            return Err(LedgerError::Closed);
        }
        let store = self.stores.get_mut(speaker).ok_or_else(|| LedgerError::UnknownParticipant(speaker.clone()))?;
        let mut delta = LedgerDelta::default();
        match kind.class() {
            LocutionClass::Management => {}
            LocutionClass::Request => {
                for f in content {
                    if self.agreement.entries.remove(f) {
                        delta.as_removed.insert(f.clone());
                    }
                }
            }
            _ if kind == LocutionKind::Retract => {
                for f in content {
                    if store.remove(f) {
                        delta.cs_removed.insert(f.clone());
                    }
                    if self.agreement.entries.remove(f) {
                        delta.as_removed.insert(f.clone());
                    }
                }
            }
            _ => {
                for f in content {
                    if store.insert(f.clone()) {
                        delta.cs_added.insert(f.clone());
                    }
                    if kind == LocutionKind::Agree && self.agreement.entries.insert(f.clone()) {
                        delta.as_added.insert(f.clone());
                    }
                }
            }
        }
        Ok(delta)
    }

    pub fn store_of(&self, p: &ParticipantId) -> Result<CommitmentStore, LedgerError> {
        self.stores
            .get(p)
            .map(|entries| CommitmentStore { owner: p.clone(), entries: entries.clone() })
            .ok_or_else(|| LedgerError::UnknownParticipant(p.clone()))
    }

    pub(crate) fn entries_of(&self, p: &ParticipantId) -> Option<&BTreeSet<Formula>> {
        self.stores.get(p)
    }

    pub fn stores(&self) -> impl Iterator<Item = (&ParticipantId, &BTreeSet<Formula>)> {
        self.stores.iter()
    }

    pub fn agreement(&self) -> &AgreementStore {
        &self.agreement
    }

    pub fn closure_report(&self) -> Option<&ClosureReport> {
        self.closure.as_ref()
    }

    /// Whether any participant's store holds `f`.
    pub fn committed_by_anyone(&self, f: &Formula) -> bool {
        self.stores.values().any(|s| s.contains(f))
    }

    /// Whether a participant other than `who` holds `f`.
    pub fn committed_by_other(&self, who: &ParticipantId, f: &Formula) -> bool {
        self.stores.iter().any(|(p, s)| p != who && s.contains(f))
    }

    pub fn union(&self) -> BTreeSet<Formula> {
        self.stores.values().flatten().cloned().collect()
    }

    /// Number of stores holding `f`.
    pub fn holders(&self, f: &Formula) -> usize {
        self.stores.values().filter(|s| s.contains(f)).count()
    }

    /// Runs closure once; later calls return the stored result unchanged.
    pub fn close(
        &mut self,
        history: &[Locution],
        stage: DialogueStage,
        policy: &ConflictPolicy,
        mode: ClosureMode,
    ) -> Result<&ClosureReport, LedgerError> {
        if self.closure.is_none() {
            let (store, report) = close_ledger(self, history, stage, policy, mode)?;
            self.agreement = store;
            self.closure = Some(report);
        }
        Ok(self.closure.as_ref().expect("closure computed"))
    }
}

/// Computes the closed agreement store without mutating the ledger.
///
/// Candidates are union members not yet agreed. In challenge-aware mode those
/// with an unresolved challenge are dropped first. The rest are dropped if they
/// conflict with an agreed entry (agreed entries take precedence) or with
/// another surviving candidate (both go).
pub fn close_ledger(
    ledger: &CommitmentLedger,
    history: &[Locution],
    stage: DialogueStage,
    policy: &ConflictPolicy,
    mode: ClosureMode,
) -> Result<(AgreementStore, ClosureReport), LedgerError> {
    if ledger.agreement.closed {
        let report = ledger.closure.clone().unwrap_or_default();
        return Ok((ledger.agreement.clone(), report));
    }
    if stage != DialogueStage::Closed {
        return Err(LedgerError::ClosureBeforeTermination);
    }
    let agreed = &ledger.agreement.entries;
    let mut report = ClosureReport::default();
    let mut candidates: BTreeSet<Formula> = ledger.union().into_iter().filter(|f| !agreed.contains(f)).collect();

    if mode == ClosureMode::ChallengeAware {
        let unresolved: BTreeSet<Formula> =
            challenge_records(history).into_iter().filter(|r| !r.resolved).map(|r| r.formula).collect();
        candidates.retain(|f| {
            let keep = !unresolved.contains(f);
            if !keep {
                report.excluded.insert(f.clone(), ExclusionReason::UnresolvedChallenge);
            }
            keep
        });
    }

    candidates.retain(|f| {
        let keep = !agreed.iter().any(|a| policy.in_conflict(f, a));
        if !keep {
            report.excluded.insert(f.clone(), ExclusionReason::ConflictsWithAgreement);
        }
        keep
    });

    let mutual: BTreeSet<Formula> =
        candidates.iter().filter(|f| candidates.iter().any(|g| policy.in_conflict(f, g))).cloned().collect();
    for f in mutual {
        candidates.remove(&f);
        report.excluded.insert(f, ExclusionReason::MutualConflict);
    }

    let mut store = ledger.agreement.clone();
    store.entries.extend(candidates.iter().cloned());
    store.closed = true;
    report.added = candidates;
    Ok((store, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChallengeKind {
    /// A wh-request on the formula.
    Request,
    /// An assertion answering an explanation that contained the formula.
    Rebuttal,
}

/// A formula someone explicitly challenged.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChallengeRecord {
    pub formula: Formula,
    pub challenged_by: ParticipantId,
    pub via: LocutionId,
    pub kind: ChallengeKind,
    pub resolved: bool,
}

/// Derives every challenge from the history and decides whether it was resolved.
///
/// A challenge is resolved when a later agree covers the formula. A wh-request
/// is also resolved when one of its answers was agreed to by a participant
/// other than the answerer and no rebuttal of that answer was itself agreed to.
pub fn challenge_records(history: &[Locution]) -> Vec<ChallengeRecord> {
    let by_id: BTreeMap<LocutionId, &Locution> = history.iter().map(|l| (l.id, l)).collect();
    let agreed_after = |f: &Formula, after: LocutionId| {
        history.iter().any(|l| l.id > after && l.kind == LocutionKind::Agree && l.contains(f))
    };
    let endorsed = |target: &Locution| {
        history
            .iter()
            .any(|l| l.kind == LocutionKind::Agree && l.target == Some(target.id) && l.speaker != target.speaker)
    };
    let upheld = |answer: &Locution| {
        endorsed(answer)
            && !history.iter().any(|l| l.kind == LocutionKind::Assert && l.target == Some(answer.id) && endorsed(l))
    };

    let mut out = Vec::new();
    for loc in history {
        let Some(target) = loc.target.and_then(|t| by_id.get(&t).copied()) else {
            continue;
        };
        if loc.kind.is_request() {
            let answered = history.iter().any(|l| l.target == Some(loc.id) && l.kind.is_explanatory() && upheld(l));
            for s in &loc.content {
                out.push(ChallengeRecord {
                    formula: s.formula.clone(),
                    challenged_by: loc.speaker.clone(),
                    via: loc.id,
                    kind: ChallengeKind::Request,
                    resolved: answered || agreed_after(&s.formula, loc.id),
                });
            }
        } else if loc.kind == LocutionKind::Assert && target.kind.is_explanatory() {
            for s in &target.content {
                out.push(ChallengeRecord {
                    formula: s.formula.clone(),
                    challenged_by: loc.speaker.clone(),
                    via: loc.id,
                    kind: ChallengeKind::Rebuttal,
                    resolved: agreed_after(&s.formula, loc.id),
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::content::parse_formula;

    fn pid(s: &str) -> ParticipantId {
        ParticipantId::new(s).unwrap()
    }

    fn set(items: &[&str]) -> BTreeSet<Formula> {
        items.iter().map(|s| parse_formula(s).unwrap()).collect()
    }

    #[test]
    fn agree_adds_to_both_stores_once() {
        let (a, b) = (pid("a"), pid("b"));
        let mut l = CommitmentLedger::new([&a, &b]);
        l.apply_commitment_effects(&a, LocutionKind::Advise, &set(&["x", "y"])).unwrap();
        let d = l.apply_commitment_effects(&b, LocutionKind::Agree, &set(&["x", "y"])).unwrap();
        assert_eq!(d.as_added, set(&["x", "y"]));
        let d = l.apply_commitment_effects(&a, LocutionKind::Agree, &set(&["x"])).unwrap();
        assert!(d.as_added.is_empty());
    }

    #[test]
    fn requests_remove_exact_matches_from_agreement_only() {
        let (a, b) = (pid("a"), pid("b"));
        let mut l = CommitmentLedger::new([&a, &b]);
        l.apply_commitment_effects(&a, LocutionKind::Advise, &set(&["x"])).unwrap();
        l.apply_commitment_effects(&b, LocutionKind::Agree, &set(&["x"])).unwrap();
        let d = l.apply_commitment_effects(&a, LocutionKind::WhExplain, &set(&["x"])).unwrap();
        assert_eq!(d.as_removed, set(&["x"]));
        assert!(d.cs_added.is_empty() && d.cs_removed.is_empty());
        assert!(l.store_of(&a).unwrap().entries.contains(&parse_formula("x").unwrap()));
    }

    #[test]
    fn retract_removes_from_speaker_and_agreement() {
        let (a, b) = (pid("a"), pid("b"));
        let mut l = CommitmentLedger::new([&a, &b]);
        l.apply_commitment_effects(&a, LocutionKind::Verdict, &set(&["d"])).unwrap();
        l.apply_commitment_effects(&b, LocutionKind::Agree, &set(&["d"])).unwrap();
        let d = l.apply_commitment_effects(&a, LocutionKind::Retract, &set(&["d"])).unwrap();
        assert_eq!(d.cs_removed, set(&["d"]));
        assert_eq!(d.as_removed, set(&["d"]));
        assert!(l.agreement().entries.is_empty());
    }

    #[test]
    fn management_locutions_change_nothing() {
        let a = pid("a");
        let mut l = CommitmentLedger::new([&a]);
        let before = l.clone();
        for k in [LocutionKind::Prompt, LocutionKind::End, LocutionKind::Pass] {
            assert_eq!(l.apply_commitment_effects(&a, k, &BTreeSet::new()).unwrap(), LedgerDelta::default());
        }
        assert_eq!(l, before);
    }

    #[test]
    fn unknown_participant_is_reported() {
        let l = CommitmentLedger::new([&pid("a")]);
        assert_eq!(l.store_of(&pid("z")), Err(LedgerError::UnknownParticipant(pid("z"))));
    }

    #[test]
    fn closure_requires_termination_and_is_idempotent() {
        let (a, b) = (pid("a"), pid("b"));
        let mut l = CommitmentLedger::new([&a, &b]);
        l.apply_commitment_effects(&a, LocutionKind::Observation, &set(&["h"])).unwrap();
        let policy = ConflictPolicy::negation_only();
        assert_eq!(
            l.close(&[], DialogueStage::Progress, &policy, ClosureMode::ChallengeAware).unwrap_err(),
            LedgerError::ClosureBeforeTermination
        );
        let first = l.close(&[], DialogueStage::Closed, &policy, ClosureMode::ChallengeAware).unwrap().clone();
        assert_eq!(first.added, set(&["h"]));
        let snapshot = l.clone();
        l.close(&[], DialogueStage::Closed, &policy, ClosureMode::UnionMinusConflicts).unwrap();
        assert_eq!(l, snapshot);
        assert_eq!(l.apply_commitment_effects(&a, LocutionKind::Observation, &set(&["z"])), Err(LedgerError::Closed));
    }

    #[test]
    fn closure_drops_conflicts() {
        let (a, b) = (pid("a"), pid("b"));
        let mut l = CommitmentLedger::new([&a, &b]);
        l.apply_commitment_effects(&a, LocutionKind::Observation, &set(&["p", "q"])).unwrap();
        l.apply_commitment_effects(&b, LocutionKind::Agree, &set(&["p"])).unwrap();
        l.apply_commitment_effects(&b, LocutionKind::Assert, &set(&["!p", "!q"])).unwrap();
        let policy = ConflictPolicy::negation_only();
        let (store, report) =
            close_ledger(&l, &[], DialogueStage::Closed, &policy, ClosureMode::UnionMinusConflicts).unwrap();
        assert_eq!(store.entries, set(&["p"]));
        assert_eq!(report.excluded[&parse_formula("!p").unwrap()], ExclusionReason::ConflictsWithAgreement);
        assert_eq!(report.excluded[&parse_formula("q").unwrap()], ExclusionReason::MutualConflict);
        assert_eq!(report.excluded[&parse_formula("!q").unwrap()], ExclusionReason::MutualConflict);
    }
}
