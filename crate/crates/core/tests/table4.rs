//! Replays the three-expert example turn by turn at the kernel level and
//! checks the commitment and agreement columns.

use std::collections::BTreeSet;

use edg_core::corpus::Corpus;
use edg_core::ledger::ClosureMode;
use edg_core::protocol::TurnRejection;
use edg_core::{
    ConflictPolicy, DialogueConfig, DialogueStage, DialogueState, Formula, LocutionId, LocutionKind as K, Move,
    ParticipantId, Statement, Turn, TurnOrder, ViolationCode,
};

const CORPUS: &str = include_str!("../../../fixtures/table2.edg");

struct Fx {
    corpus: Corpus,
    a: ParticipantId,
    b: ParticipantId,
    g: ParticipantId,
}

impl Fx {
    fn new() -> Self {
        Self {
            corpus: Corpus::parse(CORPUS).unwrap(),
            a: ParticipantId::new("alpha").unwrap(),
            b: ParticipantId::new("beta").unwrap(),
            g: ParticipantId::new("gamma").unwrap(),
        }
    }

    fn st(&self, ids: &[&str]) -> Vec<Statement> {
        ids.iter().flat_map(|id| self.corpus.resolve(id).unwrap()).collect()
    }

    fn set(&self, ids: &[&str]) -> BTreeSet<Formula> {
        self.st(ids).into_iter().map(|s| s.formula).collect()
    }

    fn mv(&self, kind: K, ids: &[&str], target: u64) -> Move {
        Move::new(kind, self.st(ids), Some(LocutionId(target)))
    }

    fn config() -> DialogueConfig {
        let group = ["d1", "d2", "d3", "d4"];
        let corpus = Corpus::parse(CORPUS).unwrap();
        let atoms = group
            .iter()
            .map(|id| match &corpus.get(id).unwrap().formulas[0] {
                Formula::Atom(a) => a.clone(),
                other => panic!("{other:?}"),
            })
            .collect();
        DialogueConfig {
            turn_order: TurnOrder::Open,
            conflict_policy: ConflictPolicy::with_exclusion_groups(vec![atoms]).unwrap(),
            closure_mode: ClosureMode::ChallengeAware,
            ..DialogueConfig::default()
        }
    }
}

fn turn(who: &ParticipantId, mut moves: Vec<Move>) -> Turn {
    moves.push(Move::pass());
    Turn::new(who.clone(), moves)
}

fn step(s: &DialogueState, t: Turn) -> DialogueState {
    match s.apply_turn(&t) {
        Ok(n) => n,
        Err(e) => panic!("turn {} by {} rejected: {e:?}", s.turns().len() + 1, t.speaker),
    }
}

fn cs(s: &DialogueState, p: &ParticipantId) -> BTreeSet<Formula> {
    s.ledger().store_of(p).unwrap().entries
}

fn agreement(s: &DialogueState) -> BTreeSet<Formula> {
    s.ledger().agreement().entries.clone()
}

#[test]
fn table4_full_replay() {
    let x = Fx::new();
    let (a, b, g) = (&x.a, &x.b, &x.g);
    let s0 = DialogueState::new(Fx::config(), vec![a.clone(), b.clone(), g.clone()]).unwrap();

    // T1: locutions 1..4
    let s = step(
        &s0,
        turn(
            a,
            vec![
                Move::new(K::Observation, x.st(&["h1", "h2", "h3", "h4", "h5", "h6", "h7"]), None),
                Move::new(K::Verdict, x.st(&["d1"]), None),
                Move::new(K::Advise, x.st(&["r1", "r2"]), None),
                Move::new(K::Concern, x.st(&["c1"]), None),
            ],
        ),
    );
    assert_eq!(s.stage(), DialogueStage::Progress);
    assert_eq!(cs(&s, a), x.set(&["h1", "h2", "h3", "h4", "h5", "h6", "h7", "d1", "r1", "r2", "c1"]));
    // pass is locution 5

    // T2: wh-justify(d1) on verdict(d1) = 6
    let s = step(&s, turn(b, vec![x.mv(K::WhJustify, &["d1"], 2)]));
    assert!(cs(&s, b).is_empty());
    assert_eq!(s.open_obligations(a).len(), 1);

    // Beta cannot speak twice in a row.
    let err = s.apply_turn(&turn(b, vec![x.mv(K::WhJustify, &["d1"], 2)])).unwrap_err();
    assert!(matches!(err, TurnRejection::NotYourTurn { .. }));

    // T3: gamma verdict(d3) on verdict(d1) = 8
    let s = step(&s, turn(g, vec![x.mv(K::Verdict, &["d3"], 2)]));
    assert_eq!(cs(&s, g), x.set(&["d3"]));

    // Beta repeating the T2 move is rejected.
    let err = s.apply_turn(&turn(b, vec![x.mv(K::WhJustify, &["d1"], 2)])).unwrap_err();
    assert_eq!(err.violations()[0].code, ViolationCode::RepeatMove);

    // Alpha may not assert while owing a justify.
    let blocked = s.apply_turn(&turn(a, vec![x.mv(K::Verdict, &["d2"], 8)])).unwrap_err();
    assert!(blocked.violations().iter().any(|v| v.code == ViolationCode::PolitenessBlock));

    // T4: justify(f1) on wh-justify(d1) = 10
    let s = step(&s, turn(a, vec![x.mv(K::Justify, &["f1"], 6)]));
    assert!(s.open_obligations(a).is_empty());

    // T5: assert(!f2) on justify(f1) = 12
    let s = step(&s, turn(g, vec![x.mv(K::Assert, &["!f2"], 10)]));
    assert_eq!(cs(&s, g), x.set(&["d3", "!f2"]));

    // T6: wh-justify(d3) on verdict(d3) = 14
    let s = step(&s, turn(b, vec![x.mv(K::WhJustify, &["d3"], 8)]));
    // T7: justify(h7, c1, f10) on 14 = 16
    let s = step(&s, turn(g, vec![x.mv(K::Justify, &["h7", "c1", "f10"], 14)]));
    // T8: agree(h7, c1, f10) = 18, advise(e1, e2, e3) on advise(r1, r2) = 19
    let s = step(&s, turn(a, vec![x.mv(K::Agree, &["h7", "c1", "f10"], 16), x.mv(K::Advise, &["e1", "e2", "e3"], 3)]));
    assert_eq!(agreement(&s), x.set(&["h7", "c1", "f10"]));
    // T9: agree(e1, e2, e3) = 21, advise(e4) = 22, assert(f3) on justify = 23
    let s = step(
        &s,
        turn(
            b,
            vec![x.mv(K::Agree, &["e1", "e2", "e3"], 19), x.mv(K::Advise, &["e4"], 19), x.mv(K::Assert, &["f3"], 16)],
        ),
    );
    assert_eq!(cs(&s, b), x.set(&["e1", "e2", "e3", "e4", "f3"]));
    assert_eq!(agreement(&s), x.set(&["h7", "c1", "f10", "e1", "e2", "e3"]));
    // T10: agree(e1, e2, e4) = 25, end = 26
    let s = step(&s, turn(g, vec![x.mv(K::Agree, &["e1", "e2", "e4"], 19), Move::end()]));
    assert_eq!(s.stage(), DialogueStage::Termination);
    assert_eq!(agreement(&s), x.set(&["h7", "c1", "f10", "e1", "e2", "e3", "e4"]));
    // T11: end = 28
    let s = step(&s, turn(b, vec![Move::end()]));
    assert_eq!(s.consent().len(), 2);
    // T12: prompt(advise(e1, e2, e3)) = 30
    let s = step(&s, turn(a, vec![Move::prompt([LocutionId(19)])]));
    assert_eq!(s.stage(), DialogueStage::Progress);
    assert!(s.consent().is_empty());
    assert_eq!(s.prompt_pending(), BTreeSet::from([LocutionId(19)]));
    // T13: wh-explain(e3) aimed at the prompt, answered against advise = 32
    let s = step(&s, turn(g, vec![x.mv(K::WhExplain, &["e3"], 30)]));
    assert!(s.prompt_pending().is_empty());
    assert_eq!(s.locution(LocutionId(32)).unwrap().target, Some(LocutionId(19)));
    assert_eq!(agreement(&s), x.set(&["h7", "c1", "f10", "e1", "e2", "e4"]));
    // T14: explain(f12) = 34
    let s = step(&s, turn(a, vec![x.mv(K::Explain, &["f12"], 32)]));
    // T15: agree(f12) = 36
    let s = step(&s, turn(b, vec![x.mv(K::Agree, &["f12"], 34)]));
    // T16: assert(f4, f7, f11) on explain(f12) = 38
    let s = step(&s, turn(g, vec![x.mv(K::Assert, &["f4", "f7", "f11"], 34)]));
    // T17: agree(f4, f7, f11) = 40, end = 41
    let s = step(&s, turn(a, vec![x.mv(K::Agree, &["f4", "f7", "f11"], 38), Move::end()]));
    let as17 = x.set(&["h7", "c1", "f10", "e1", "e2", "e4", "f12", "f4", "f7", "f11"]);
    assert_eq!(agreement(&s), as17);
    // T18, T19
    let s = step(&s, turn(b, vec![Move::end()]));
    let s = step(&s, turn(g, vec![Move::end()]));
    assert_eq!(s.stage(), DialogueStage::Closed);

    let fin = agreement(&s);
    let mut expected = as17.clone();
    expected.extend(x.set(&["h1", "h2", "h3", "h4", "h5", "h6", "r1", "r2", "d3", "f3", "!f2"]));
    assert_eq!(fin, expected);
    assert!(!fin.contains(&x.set(&["d1"]).pop_first().unwrap()));
}
