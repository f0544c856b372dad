use std::collections::{BTreeMap, BTreeSet};

use super::kind::{is_legal_reply, promptable};
use super::state::DialogueState;
use super::ViolationCode as V;
use super::{normalize_content, Locution, LocutionId, LocutionKind, Move, ParticipantId, Turn, Violation};
use crate::content::{related, Category, CategorySet, Formula, Statement};
use crate::protocol::DialogueStage;

use LocutionKind::*;

/// The locution a move ends up replying to, after prompt redirection.
#[derive(Debug, Clone)]
pub(crate) struct Target {
    pub id: LocutionId,
    pub speaker: ParticipantId,
}

pub(crate) fn validate_shape(turn: &Turn) -> Vec<Violation> {
    let passes = turn.moves.iter().filter(|m| m.kind == Pass).count();
    let ends_in_pass = turn.moves.last().is_some_and(|m| m.kind == Pass);
    if passes != 1 || !ends_in_pass || turn.moves.len() < 2 {
        return vec![Violation::new(V::TurnShape, "a turn is one or more moves followed by a single pass")];
    }
    let pass = &turn.moves[turn.moves.len() - 1];
    if !pass.content.is_empty() || pass.target.is_some() || !pass.prompt_targets.is_empty() {
        return vec![Violation::new(V::TargetNotNull, "pass carries no content or target").at(turn.moves.len() - 1)];
    }
    Vec::new()
}

/// Checks the commencement turn: observation, verdict, advise and concern in
/// that order, untargeted, then pass.
pub fn validate_opening(turn: &Turn) -> Vec<Violation> {
    let mut out = validate_shape(turn);
    if !out.is_empty() {
        return out;
    }
    let body = &turn.moves[..turn.moves.len() - 1];
    for (i, mv) in body.iter().enumerate() {
        if mv.target.is_some() || !mv.prompt_targets.is_empty() {
            out.push(Violation::new(V::TargetNotNull, "opening moves reply to nothing").at(i));
        }
        if !LocutionKind::OPENING.contains(&mv.kind) {
            out.push(Violation::new(V::Stage, format!("{} cannot be moved in the opening turn", mv.kind)).at(i));
        }
    }
    let kinds: Vec<LocutionKind> = body.iter().map(|m| m.kind).collect();
    for k in LocutionKind::OPENING {
        if !kinds.contains(&k) {
            out.push(Violation::new(V::MissingOpeningLocution, format!("missing {k}")));
        }
    }
    let opening: Vec<LocutionKind> = kinds.iter().copied().filter(|k| LocutionKind::OPENING.contains(k)).collect();
    if opening.len() == 4 && opening != LocutionKind::OPENING {
        out.push(Violation::new(V::OrderViolation, "opening locutions must be observation, verdict, advise, concern"));
    } else if opening.len() > 4 {
        out.push(Violation::new(V::OrderViolation, "each opening locution is moved once"));
    } else if opening.len() < 4 && !is_ordered_subsequence(&opening) {
        out.push(Violation::new(V::OrderViolation, "opening locutions must be observation, verdict, advise, concern"));
    }
    for (i, mv) in body.iter().enumerate() {
        if LocutionKind::OPENING.contains(&mv.kind) {
            out.extend(check_statements(None, mv, mv.kind.content_categories()).into_iter().map(|v| v.at(i)));
        }
    }
    out
}

fn is_ordered_subsequence(kinds: &[LocutionKind]) -> bool {
    let pos = |k: &LocutionKind| LocutionKind::OPENING.iter().position(|o| o == k);
    kinds.windows(2).all(|w| pos(&w[0]) < pos(&w[1]))
}

pub(crate) fn validate_opening_in(state: &DialogueState, turn: &Turn) -> Vec<Violation> {
    let mut out = validate_opening(turn);
    let mut seen = state.lexicon().clone();
    for (i, mv) in turn.moves.iter().enumerate() {
        out.extend(lexicon_conflicts(&mut seen, &mv.content).into_iter().map(|v| v.at(i)));
    }
    out
}

/// Validates a single non-pass move against `state`. Returns the resolved
/// target alongside any violations.
pub(crate) fn validate_move(
    state: &DialogueState,
    speaker: &ParticipantId,
    mv: &Move,
) -> (Option<Target>, Vec<Violation>) {
    let mut out = Vec::new();

    match state.stage() {
        DialogueStage::Closed => {
            return (None, vec![Violation::new(V::Stage, "the dialogue is closed")]);
        }
        DialogueStage::Commencement => {
            return (None, vec![Violation::new(V::Stage, "the opening turn is validated as a whole")]);
        }
        DialogueStage::Termination if !matches!(mv.kind, End | Prompt | Pass) => {
            out.push(Violation::new(
                V::Stage,
                format!("only end or prompt may be moved during termination, not {}", mv.kind),
            ));
        }
        _ => {}
    }

    // Management locutions.
    if matches!(mv.kind, Prompt | End | Pass) {
        if mv.target.is_some() {
            out.push(Violation::new(V::TargetNotNull, format!("{} has no target", mv.kind)));
        }
        if !mv.content.is_empty() {
            out.push(Violation::new(V::ContentCategory, format!("{} carries no formulas", mv.kind)));
        }
        match mv.kind {
            Prompt => out.extend(check_prompt(state, mv)),
            End if state.consent().contains(speaker) => {
                out.push(Violation::new(V::AlreadyConsented, "already consented to end"))
            }
            _ => {}
        }
        if mv.kind != End && mv.kind != Pass {
            out.extend(check_politeness(state, speaker, None));
            out.extend(check_repeat(state, speaker, mv, None));
        }
        return (None, out);
    }
    if !mv.prompt_targets.is_empty() {
        out.push(Violation::new(V::PromptTarget, "only prompt carries prompt targets"));
    }

    let Some(target_id) = mv.target else {
        out.push(Violation::new(V::TargetRequired, format!("{} must reply to an earlier locution", mv.kind)));
        out.extend(check_politeness(state, speaker, None));
        return (None, out);
    };
    let Some(raw) = state.locution(target_id) else {
        out.push(Violation::new(V::UnknownTarget, format!("no locution {target_id}")));
        out.extend(check_politeness(state, speaker, None));
        return (None, out);
    };
    let target = resolve_prompt(state, raw, mv.kind);
    let resolved = Target { id: target.id, speaker: target.speaker.clone() };

    if !reply_allowed(state, target.kind, mv.kind) {
        out.push(Violation::new(V::Table3Reply, format!("{} is not a legal reply to {}", mv.kind, target.kind)));
        out.extend(check_politeness(state, speaker, Some(target)));
        return (Some(resolved), out);
    }
    if mv.kind.is_request() && &target.speaker == speaker {
        out.push(Violation::new(V::SelfRequest, "a wh-request must address another participant"));
    }

    let own = mv.kind.content_categories().union(context_categories(target.kind, mv.kind));
    out.extend(check_statements(Some(state), mv, own));
    if !out.iter().any(|v| matches!(v.code, V::EmptyContent)) {
        out.extend(check_table3_content(state, speaker, mv, target));
        out.extend(check_provenance(state, speaker, mv));
    }
    out.extend(check_politeness(state, speaker, Some(target)));
    out.extend(check_repeat(state, speaker, mv, Some(target.id)));
    (Some(resolved), out)
}

fn reply_allowed(state: &DialogueState, target: LocutionKind, reply: LocutionKind) -> bool {
    is_legal_reply(target, reply) || (state.config().allow_assert_on_advise && target == Advise && reply == Assert)
}

/// A reply aimed at a prompt answers the prompted locution it legally fits.
fn resolve_prompt<'s>(state: &'s DialogueState, target: &'s Locution, reply: LocutionKind) -> &'s Locution {
    if target.kind != Prompt {
        return target;
    }
    target
        .prompt_targets
        .iter()
        .filter_map(|id| state.locution(*id))
        .find(|l| reply_allowed(state, l.kind, reply))
        .unwrap_or(target)
}

/// Categories a reply may use in one specific position, beyond its own.
fn context_categories(target: LocutionKind, reply: LocutionKind) -> CategorySet {
    match (target, reply) {
        (Advise | Concern, WhClarify) => CategorySet::F,
        (Clarify, WhExplain) => CategorySet::K.union(CategorySet::F),
        (Clarify, WhJustify) => CategorySet::F,
        _ => CategorySet::EMPTY,
    }
}

fn check_prompt(state: &DialogueState, mv: &Move) -> Vec<Violation> {
    if mv.prompt_targets.is_empty() {
        return vec![Violation::new(V::PromptTarget, "prompt must name at least one locution")];
    }
    let mut out = Vec::new();
    for id in &mv.prompt_targets {
        match state.locution(*id) {
            None => out.push(Violation::new(V::PromptTarget, format!("no locution {id}"))),
            Some(l) if !promptable(l.kind) => {
                out.push(Violation::new(V::PromptTarget, format!("{} at {id} admits no reply to wait for", l.kind)))
            }
            Some(_) => {}
        }
    }
    out
}

/// Category, emptiness and consistency checks on the move's own content.
fn check_statements(state: Option<&DialogueState>, mv: &Move, allowed: CategorySet) -> Vec<Violation> {
    let mut out = Vec::new();
    if mv.content.is_empty() {
        out.push(Violation::new(V::EmptyContent, format!("{} needs content", mv.kind)));
        return out;
    }
    for s in &mv.content {
        if s.formula.is_rule() != (s.category == Category::Rule) {
            out.push(Violation::new(
                V::ContentCategory,
                format!("`{}` cannot have category {}", s.formula, s.category),
            ));
        }
    }
    let explanatory = mv.kind.is_explanatory();
    let in_set = mv.content.iter().filter(|s| allowed.contains(s.category)).count();
    if explanatory {
        // The answer proper must be in the set; further elements are premises.
        if in_set == 0 {
            out.push(Violation::new(
                V::ContentCategory,
                format!("{} needs at least one statement in {allowed}", mv.kind),
            ));
        }
    } else {
        for s in mv.content.iter().filter(|s| !allowed.contains(s.category)) {
            out.push(Violation::new(
                V::ContentCategory,
                format!("{} content must be in {allowed}, got `{s}`", mv.kind),
            ));
        }
    }
    if let Some(state) = state {
        let mut seen = state.lexicon().clone();
        out.extend(lexicon_conflicts(&mut seen, &mv.content));
    } else {
        out.extend(lexicon_conflicts(&mut BTreeMap::new(), &mv.content));
    }
    out
}

fn lexicon_conflicts(seen: &mut BTreeMap<Formula, Category>, content: &[Statement]) -> Vec<Violation> {
    let mut out = Vec::new();
    for s in normalize_content(content.to_vec()) {
        match seen.get(&s.formula) {
            Some(c) if *c != s.category => {
                out.push(Violation::new(V::CategoryConflict, format!("`{}` is already categorised as {c}", s.formula)))
            }
            Some(_) => {}
            None => {
                seen.insert(s.formula, s.category);
            }
        }
    }
    out
}

/// Content constraints that depend on the target.
fn check_table3_content(
    state: &DialogueState,
    speaker: &ParticipantId,
    mv: &Move,
    target: &Locution,
) -> Vec<Violation> {
    let mut out = Vec::new();
    let content = mv.formulas();
    let target_content = target.formulas();
    let subset = |of: &BTreeSet<Formula>, what: &str| {
        let extra: Vec<String> = content.difference(of).map(|f| format!("`{f}`")).collect();
        (!extra.is_empty()).then(|| {
            Violation::new(V::ContentSubset, format!("{} content must be within {what}: {}", mv.kind, extra.join(", ")))
        })
    };
    let disjoint = |what: &str| {
        (!content.is_disjoint(&target_content))
            .then(|| Violation::new(V::ContentSubset, format!("{} must add content beyond {what}", mv.kind)))
    };

    match (target.kind, mv.kind) {
        (_, Agree) => {
            let thread = thread_content(state, target);
            out.extend(subset(&thread, "the agreed locution"));
        }
        (Verdict | Advise | Concern, WhExplain | WhJustify) | (Observation, WhClarify) => {
            out.extend(subset(&target_content, "the questioned locution"));
        }
        (WhJustify, Retract) => {
            out.extend(subset(&target_content, "the wh-justify"));
        }
        (Assert | Explain | Justify | Clarify, Assert) => {
            out.extend(disjoint("the target"));
        }
        (Explain, Explain) | (Justify, Justify) | (Clarify, Clarify) => {
            if &target.speaker == speaker {
                out.push(Violation::new(
                    V::Table3Reply,
                    format!("a supplementary {} comes from another participant", mv.kind),
                ));
            }
            if mv.kind != Explain {
                out.extend(disjoint("the target"));
            }
        }
        _ => {}
    }

    let needs_relation = matches!(
        (target.kind, mv.kind),
        (Advise | Concern | Explain, WhClarify) | (Justify, WhExplain | WhClarify) | (Clarify, WhExplain | WhJustify)
    );
    if needs_relation && state.config().relatedness_enforced {
        for f in &content {
            if !target_content.iter().any(|t| related(f, t)) {
                out.push(Violation::new(V::Relatedness, format!("`{f}` is unrelated to the target")));
            }
        }
    }
    out
}

/// The target's content plus same-kind replies to it.
fn thread_content(state: &DialogueState, target: &Locution) -> BTreeSet<Formula> {
    let mut out = target.formulas();
    for l in state.history() {
        if l.target == Some(target.id) && l.kind == target.kind {
            out.extend(l.formulas());
        }
    }
    out
}

fn check_provenance(state: &DialogueState, speaker: &ParticipantId, mv: &Move) -> Vec<Violation> {
    let ledger = state.ledger();
    let mut out = Vec::new();
    for f in mv.formulas() {
        let ok = match mv.kind {
            Agree => ledger.committed_by_other(speaker, &f),
            k if k.is_request() => ledger.committed_by_anyone(&f),
            Retract => ledger.entries_of(speaker).is_some_and(|cs| cs.contains(&f)),
            _ => true,
        };
        if !ok {
            let code = if mv.kind == Retract { V::P3Retract } else { V::P2Provenance };
            let whose = match mv.kind {
                Agree => "another participant's commitments",
                Retract => "the speaker's commitments",
                _ => "any commitment store",
            };
            out.push(Violation::new(code, format!("`{f}` is not in {whose}")));
        }
    }
    out
}

fn check_politeness(state: &DialogueState, speaker: &ParticipantId, target: Option<&Locution>) -> Vec<Violation> {
    let open = state.open_obligations(speaker);
    if open.is_empty() {
        return Vec::new();
    }
    if target.is_some_and(|t| open.iter().any(|o| o.request == t.id)) {
        return Vec::new();
    }
    let ids: Vec<String> = open.iter().map(|o| o.request.to_string()).collect();
    vec![Violation::new(V::PolitenessBlock, format!("{speaker} must first answer {}", ids.join(", ")))]
}

fn check_repeat(
    state: &DialogueState,
    speaker: &ParticipantId,
    mv: &Move,
    target: Option<LocutionId>,
) -> Vec<Violation> {
    let content = mv.formulas();
    let repeated = state.history().iter().any(|l| {
        &l.speaker == speaker
            && l.kind == mv.kind
            && l.target == target
            && l.prompt_targets == mv.prompt_targets
            && l.formulas() == content
    });
    if repeated {
        vec![Violation::new(V::RepeatMove, format!("{speaker} already made this {} move", mv.kind))]
    } else {
        Vec::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::content::parse_formula;

    fn st(f: &str, c: Category) -> Statement {
        Statement::new(parse_formula(f).unwrap(), c)
    }

    fn opening() -> Vec<Move> {
        vec![
            Move::new(Observation, vec![st("symptom(fatigue)", Category::Observation)], None),
            Move::new(Verdict, vec![st("diagnosis(x)", Category::Verdict)], None),
            Move::new(Advise, vec![st("test(tsh)", Category::Remedial)], None),
            Move::new(Concern, vec![st("risk(y)", Category::Concern)], None),
            Move::pass(),
        ]
    }

    fn codes(v: &[Violation]) -> Vec<V> {
        v.iter().map(|v| v.code).collect()
    }

    #[test]
    fn opening_in_order_is_accepted() {
        let t = Turn::new(ParticipantId::new("a").unwrap(), opening());
        assert!(validate_opening(&t).is_empty());
    }

    #[test]
    fn swapped_opening_is_an_order_violation() {
        let mut moves = opening();
        moves.swap(0, 1);
        let t = Turn::new(ParticipantId::new("a").unwrap(), moves);
        assert_eq!(codes(&validate_opening(&t)), vec![V::OrderViolation]);
    }

    #[test]
    fn missing_concern_is_reported() {
        let mut moves = opening();
        moves.remove(3);
        let t = Turn::new(ParticipantId::new("a").unwrap(), moves);
        assert_eq!(codes(&validate_opening(&t)), vec![V::MissingOpeningLocution]);
    }

    #[test]
    fn targeted_opening_move_is_rejected() {
        let mut moves = opening();
        moves[1].target = Some(LocutionId(1));
        let t = Turn::new(ParticipantId::new("a").unwrap(), moves);
        assert_eq!(codes(&validate_opening(&t)), vec![V::TargetNotNull]);
    }

    #[test]
    fn turn_without_pass_has_bad_shape() {
        let mut moves = opening();
        moves.pop();
        let t = Turn::new(ParticipantId::new("a").unwrap(), moves);
        assert_eq!(codes(&validate_shape(&t)), vec![V::TurnShape]);
        let t = Turn::new(ParticipantId::new("a").unwrap(), vec![Move::pass()]);
        assert_eq!(codes(&validate_shape(&t)), vec![V::TurnShape]);
    }
}
