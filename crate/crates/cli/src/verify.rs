//! Compares a trace with an expectation file turn by turn.
//!
//! Expected changes are written with corpus ids, in the `CS ∪ {...}` style:
//! after a turn each store must equal its previous value plus `*_added` minus
//! `*_removed`. A participant absent from `cs_added`/`cs_removed` is expected
//! to be unchanged.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use edg_core::api::SessionStatus;
use edg_core::corpus::Corpus;
use edg_core::session::dialogue_config;
use edg_core::{Formula, LocutionKind, ParticipantId};

use crate::trace::{formulas, Trace};
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectation {
    pub name: String,
    #[serde(default)]
    pub status: Option<SessionStatus>,
    pub turns: Vec<ExpectedTurn>,
    /// Exact final agreement store, modulo allowed deviations.
    pub final_as: Vec<String>,
    #[serde(default)]
    pub final_as_excludes: Vec<String>,
    #[serde(default)]
    pub documented_deviations: BTreeMap<String, Deviation>,
    #[serde(default)]
    pub allow_documented_deviations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectedTurn {
    pub turn: String,
    #[serde(default)]
    pub speaker: Option<String>,
    #[serde(default)]
    pub cs_added: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub cs_removed: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub as_added: Vec<String>,
    #[serde(default)]
    pub as_removed: Vec<String>,
}

/// Extra entries a documented deviation allows on top of the expected values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Deviation {
    pub description: String,
    #[serde(default)]
    pub turn: Option<String>,
    #[serde(default)]
    pub cs_added: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub as_added: Vec<String>,
    #[serde(default)]
    pub final_as: Vec<String>,
}

impl Expectation {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::ExpectationParse(e.to_string()))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Report {
    pub lines: Vec<String>,
    pub warnings: Vec<String>,
    pub deviations_used: BTreeSet<String>,
    /// Label of the first turn that did not match (`final` for the closure).
    pub first_failure: Option<String>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.first_failure.is_none()
    }

    fn fail(&mut self, at: &str, line: String) {
        if self.first_failure.is_none() {
            self.first_failure = Some(at.to_string());
        }
        self.lines.push(format!("FAIL {line}"));
    }

    fn ok(&mut self, line: String) {
        self.lines.push(format!("ok   {line}"));
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.lines {
            writeln!(f, "{l}")?;
        }
        for w in &self.warnings {
            writeln!(f, "warn {w}")?;
        }
        if !self.deviations_used.is_empty() {
            let ids: Vec<&str> = self.deviations_used.iter().map(String::as_str).collect();
            writeln!(f, "deviations: {}", ids.join(", "))?;
        }
        match &self.first_failure {
            None => writeln!(f, "PASS"),
            Some(at) => writeln!(f, "FAIL at {at}"),
        }
    }
}

struct Ids<'a> {
    corpus: &'a Corpus,
}

impl Ids<'_> {
    fn set(&self, ids: &[String]) -> Result<BTreeSet<Formula>, CliError> {
        let mut out = BTreeSet::new();
        for id in ids {
            let sts = self.corpus.resolve(id).map_err(|e| CliError::ExpectationParse(e.to_string()))?;
            out.extend(sts.into_iter().map(|s| s.formula));
        }
        Ok(out)
    }

    fn show(&self, set: &BTreeSet<Formula>) -> String {
        format!("{{{}}}", self.corpus.describe(set).join(", "))
    }
}

/// Checks `after == before ∪ add − remove`, tolerating `allowed` extras.
fn compare(
    actual: &BTreeSet<Formula>,
    expected: &BTreeSet<Formula>,
    allowed: &BTreeSet<Formula>,
) -> Result<BTreeSet<Formula>, (BTreeSet<Formula>, BTreeSet<Formula>)> {
    let missing: BTreeSet<_> = expected.difference(actual).cloned().collect();
    let extra: BTreeSet<_> = actual.difference(expected).cloned().collect();
    let unexplained: BTreeSet<_> = extra.difference(allowed).cloned().collect();
    if missing.is_empty() && unexplained.is_empty() {
        Ok(extra)
    } else {
        Err((missing, unexplained))
    }
}

struct StoreCheck<'a> {
    name: String,
    before: &'a BTreeSet<Formula>,
    after: &'a BTreeSet<Formula>,
}

impl StoreCheck<'_> {
    #[allow(clippy::too_many_arguments)]
    fn check(
        &self,
        label: &str,
        ids: &Ids,
        add: &BTreeSet<Formula>,
        remove: &BTreeSet<Formula>,
        allowed: &BTreeSet<Formula>,
        sources: &[&str],
        notes: &mut Vec<String>,
        report: &mut Report,
    ) -> bool {
        let expected: BTreeSet<Formula> = self.before.union(add).filter(|f| !remove.contains(f)).cloned().collect();
        match compare(self.after, &expected, allowed) {
            Ok(used) => {
                if !used.is_empty() {
                    report.deviations_used.extend(sources.iter().map(|s| s.to_string()));
                    notes.push(format!("{} +{} by deviation {}", self.name, ids.show(&used), sources.join(",")));
                }
                true
            }
            Err((missing, unexplained)) => {
                report.fail(
                    label,
                    format!(
                        "{label}: {} missing {}, unexpected {}",
                        self.name,
                        ids.show(&missing),
                        ids.show(&unexplained)
                    ),
                );
                false
            }
        }
    }
}

pub fn verify(trace: &Trace, expect: &Expectation) -> Result<Report, CliError> {
    let corpus = trace.corpus()?;
    let ids = Ids { corpus: &corpus };
    let mut report = Report::default();

    for id in &expect.allow_documented_deviations {
        if !expect.documented_deviations.contains_key(id) {
            return Err(CliError::ExpectationParse(format!("deviation `{id}` is not documented")));
        }
    }
    let allowed: Vec<(&String, &Deviation)> =
        expect.documented_deviations.iter().filter(|(id, _)| expect.allow_documented_deviations.contains(id)).collect();

    if let Some(r) = &trace.rejected {
        report.fail(&r.turn, format!("{}: rejected with {}: {}", r.turn, r.code, r.message));
    }

    let by_label: BTreeMap<&str, &ExpectedTurn> = expect.turns.iter().map(|t| (t.turn.as_str(), t)).collect();
    let participants: Vec<ParticipantId> = trace.participants.iter().map(|p| p.name.clone()).collect();
    let mut cs_before: BTreeMap<ParticipantId, BTreeSet<Formula>> =
        participants.iter().map(|p| (p.clone(), BTreeSet::new())).collect();
    let mut as_before = BTreeSet::new();

    for turn in &trace.turns {
        let label = turn.label.as_str();
        let mut cs_after = BTreeMap::new();
        for p in &participants {
            cs_after.insert(p.clone(), formulas(turn.commitments.get(p).map_or(&[][..], Vec::as_slice))?);
        }
        let as_after = formulas(&turn.agreement)?;
        let Some(exp) = by_label.get(label) else {
            report.fail(label, format!("{label}: no expectation for this turn"));
            cs_before = cs_after;
            as_before = as_after;
            continue;
        };
        if let Some(sp) = &exp.speaker {
            if sp != turn.speaker.as_str() {
                report.fail(label, format!("{label}: speaker {} (expected {sp})", turn.speaker));
            }
        }
        let mut turn_ok = true;
        let mut notes = Vec::new();
        for p in &participants {
            let name = p.as_str().to_string();
            let add = ids.set(exp.cs_added.get(&name).map_or(&[][..], Vec::as_slice))?;
            let remove = ids.set(exp.cs_removed.get(&name).map_or(&[][..], Vec::as_slice))?;
            let mut allowed_extra = BTreeSet::new();
            let mut sources = Vec::new();
            for (id, d) in &allowed {
                if let (Some(t), Some(extra)) = (&d.turn, d.cs_added.get(&name)) {
                    if t == label {
                        allowed_extra.extend(ids.set(extra)?);
                        sources.push(id.as_str());
                    }
                }
            }
            let store = StoreCheck { name: format!("CS({name})"), before: &cs_before[p], after: &cs_after[p] };
            turn_ok &= store.check(label, &ids, &add, &remove, &allowed_extra, &sources, &mut notes, &mut report);
        }
        let add = ids.set(&exp.as_added)?;
        let remove = ids.set(&exp.as_removed)?;
        let mut allowed_extra = BTreeSet::new();
        let mut sources = Vec::new();
        for (id, d) in &allowed {
            if d.turn.as_deref() == Some(label) && !d.as_added.is_empty() {
                allowed_extra.extend(ids.set(&d.as_added)?);
                sources.push(id.as_str());
            }
        }
        let store = StoreCheck { name: "AS".into(), before: &as_before, after: &as_after };
        turn_ok &= store.check(label, &ids, &add, &remove, &allowed_extra, &sources, &mut notes, &mut report);
        if turn_ok {
            let suffix = if notes.is_empty() { String::new() } else { format!(" ({})", notes.join("; ")) };
            report.ok(format!("{label}{suffix}"));
        }
        cs_before = cs_after;
        as_before = as_after;
    }

    let seen: BTreeSet<&str> = trace.turns.iter().map(|t| t.label.as_str()).collect();
    for t in &expect.turns {
        if !seen.contains(t.turn.as_str()) && trace.rejected.is_none() {
            report.fail(&t.turn, format!("{}: expected turn missing from the trace", t.turn));
        }
    }

    if let Some(status) = expect.status {
        if trace.status != status {
            report.fail("final", format!("final: status {:?} expected {:?}", trace.status, status));
        }
    }
    let mut final_extra = BTreeSet::new();
    let mut sources = Vec::new();
    for (id, d) in &allowed {
        if !d.final_as.is_empty() {
            final_extra.extend(ids.set(&d.final_as)?);
            sources.push(id.as_str());
        }
    }
    let exp_final = ids.set(&expect.final_as)?;
    match compare(&as_before, &exp_final, &final_extra) {
        Ok(used) => {
            if !used.is_empty() {
                report.deviations_used.extend(sources.iter().map(|s| s.to_string()));
            }
            report.ok(format!("final AS {}", ids.show(&as_before)));
        }
        Err((missing, unexplained)) => report
            .fail("final", format!("final AS missing {}, unexpected {}", ids.show(&missing), ids.show(&unexplained))),
    }
    let excluded = ids.set(&expect.final_as_excludes)?;
    let present: BTreeSet<_> = excluded.intersection(&as_before).cloned().collect();
    if !present.is_empty() {
        report.fail("final", format!("final AS contains excluded {}", ids.show(&present)));
    }

    report.warnings = end_warnings(trace, &ids)?;
    Ok(report)
}

/// Flags scripted `end` moves made while the speaker's commitments conflict
/// with the agreement store.
fn end_warnings(trace: &Trace, ids: &Ids) -> Result<Vec<String>, CliError> {
    let policy = dialogue_config(&trace.config).map_err(|e| CliError::TraceParse(e.to_string()))?.conflict_policy;
    let mut out = Vec::new();
    for turn in &trace.turns {
        if !turn.locutions.iter().any(|l| l.kind == LocutionKind::End) {
            continue;
        }
        let cs = formulas(turn.commitments.get(&turn.speaker).map_or(&[][..], Vec::as_slice))?;
        let agreed = formulas(&turn.agreement)?;
        for c in &cs {
            for a in &agreed {
                if policy.in_conflict(c, a) {
                    out.push(format!(
                        "{}: {} ends while committed to {} against agreed {}",
                        turn.label,
                        turn.speaker,
                        ids.show(&BTreeSet::from([c.clone()])),
                        ids.show(&BTreeSet::from([a.clone()]))
                    ));
                }
            }
        }
    }
    Ok(out)
}
