//! Script files: participants, a corpus and the turns to submit.
//!
//! ```json
//! {
//!   "name": "demo",
//!   "corpus": "table2.edg",
//!   "config": { "turn_order": "open", "exclusion_groups": [["d1", "d2"]] },
//!   "participants": [{ "name": "α", "role": "initiator" }, { "name": "β", "role": "participant" }],
//!   "turns": [
//!     { "label": "T1", "speaker": "α", "moves": [{ "kind": "observation", "content": ["h1"] }, ...] },
//!     { "label": "T2", "speaker": "β", "moves": [{ "kind": "wh-justify", "content": ["d1"], "target": "T1.2" }] }
//!   ]
//! }
//! ```
//!
//! Content entries are corpus ids (`d1`, `!f2`) or literal formulas with an
//! optional `@category`. Targets name an earlier move as `<turn label>.<n>`
//! (1-based), by its `ref` alias, or by raw locution id as `#<id>`. A trailing
//! pass is appended to every turn that does not end with one.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use edg_core::api::{Role, SessionConfig, StartPolicy, WireMove};
use edg_core::corpus::Corpus;
use edg_core::{LocutionId, LocutionKind};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Script {
    pub name: String,
    /// Corpus file, relative to the script.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus: Option<String>,
    /// Inline corpus text, used when `corpus` is absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus_text: Option<String>,
    #[serde(default)]
    pub config: SessionConfig,
    pub participants: Vec<ScriptParticipant>,
    pub turns: Vec<ScriptTurn>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptParticipant {
    pub name: String,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptTurn {
    pub label: String,
    pub speaker: String,
    pub moves: Vec<ScriptMove>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptMove {
    pub kind: LocutionKind,
    #[serde(default)]
    pub content: Vec<String>,
    #[serde(default)]
    pub target: Option<String>,
    #[serde(default)]
    pub prompt: Vec<String>,
    /// Alias other moves can target.
    #[serde(default, rename = "ref")]
    pub alias: Option<String>,
    /// Free-form annotation, ignored by the driver.
    #[serde(default)]
    pub note: Option<String>,
}

/// A script with its corpus loaded and checked.
#[derive(Debug, Clone)]
pub struct LoadedScript {
    pub script: Script,
    pub corpus: Corpus,
    pub corpus_text: String,
}

fn parse_err(msg: impl Into<String>) -> CliError {
    CliError::ScriptParse(msg.into())
}

impl LoadedScript {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| parse_err(format!("{}: {e}", path.display())))?;
        let script: Script = serde_json::from_str(&text).map_err(|e| parse_err(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let corpus_text = match (&script.corpus, &script.corpus_text) {
            (Some(file), _) => {
                let p = base.join(file);
                std::fs::read_to_string(&p).map_err(|e| parse_err(format!("{}: {e}", p.display())))?
            }
            (None, Some(text)) => text.clone(),
            (None, None) => String::new(),
        };
        Self::new(script, corpus_text)
    }

    pub fn new(mut script: Script, corpus_text: String) -> Result<Self, CliError> {
        let corpus = Corpus::parse(&corpus_text).map_err(|e| parse_err(format!("corpus: {e}")))?;
        script.config.exclusion_groups = script
            .config
            .exclusion_groups
            .iter()
            .map(|g| g.iter().map(|f| expand(&corpus, f)).collect())
            .collect::<Result<_, _>>()?;
        let loaded = Self { script, corpus, corpus_text };
        loaded.check()?;
        Ok(loaded)
    }

    /// Replaces the session configuration, expanding corpus ids in exclusion groups.
    pub fn with_config(self, config: SessionConfig) -> Result<Self, CliError> {
        let script = Script { config, ..self.script };
        Self::new(script, self.corpus_text)
    }

    fn check(&self) -> Result<(), CliError> {
        if self.script.participants.len() < 2 {
            return Err(parse_err("a script needs at least two participants"));
        }
        let cfg = &self.script.config;
        if cfg.start == StartPolicy::Quorum && cfg.min_participants != self.script.participants.len() {
            return Err(parse_err(format!(
                "quorum start with min_participants {} but {} participants listed",
                cfg.min_participants,
                self.script.participants.len()
            )));
        }
        let mut labels = BTreeMap::new();
        for (i, t) in self.script.turns.iter().enumerate() {
            if labels.insert(t.label.as_str(), i).is_some() {
                return Err(parse_err(format!("duplicate turn label `{}`", t.label)));
            }
            if !self.script.participants.iter().any(|p| p.name == t.speaker) {
                return Err(parse_err(format!("{}: unknown speaker `{}`", t.label, t.speaker)));
            }
            for m in &t.moves {
                for c in &m.content {
                    self.content(c).map_err(|e| parse_err(format!("{}: {e}", t.label)))?;
                }
            }
        }
        Ok(())
    }

    /// Expands one content entry to wire statements.
    pub fn content(&self, entry: &str) -> Result<Vec<String>, String> {
        match self.corpus.resolve(entry.trim()) {
            Ok(sts) => Ok(sts.iter().map(ToString::to_string).collect()),
            Err(_) if looks_like_id(entry.trim()) => Err(format!("unknown corpus id `{entry}`")),
            Err(_) => Ok(vec![entry.to_string()]),
        }
    }
}

/// An exclusion-group member: a corpus id naming one formula, or formula text.
fn expand(corpus: &Corpus, entry: &str) -> Result<String, CliError> {
    match corpus.resolve(entry) {
        Ok(sts) if sts.len() == 1 => Ok(sts[0].formula.to_string()),
        Ok(_) => Err(parse_err(format!("`{entry}` names several formulas"))),
        Err(_) if looks_like_id(entry) => Err(parse_err(format!("unknown corpus id `{entry}`"))),
        Err(_) => Ok(entry.to_string()),
    }
}

/// `d1`, `!f12`: a letter followed by digits.
fn looks_like_id(s: &str) -> bool {
    let s = s.strip_prefix('!').unwrap_or(s);
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase()) && s.len() > 1 && chars.all(|c| c.is_ascii_digit())
}

/// Tracks which locution ids script references point to.
#[derive(Debug, Default)]
pub struct Refs {
    ids: BTreeMap<String, LocutionId>,
}

impl Refs {
    pub fn resolve(&self, turn: &str, reference: &str) -> Result<LocutionId, CliError> {
        if let Some(raw) = reference.strip_prefix('#') {
            return raw
                .parse()
                .map(LocutionId)
                .map_err(|_| parse_err(format!("{turn}: bad locution id `{reference}`")));
        }
        self.ids.get(reference).copied().ok_or_else(|| parse_err(format!("{turn}: unresolved reference `{reference}`")))
    }

    /// Records the ids assigned to an accepted turn.
    pub fn record(&mut self, turn: &ScriptTurn, locutions: &[LocutionId]) {
        for (i, (m, id)) in turn.moves.iter().zip(locutions).enumerate() {
            self.ids.insert(format!("{}.{}", turn.label, i + 1), *id);
            if let Some(alias) = &m.alias {
                self.ids.insert(alias.clone(), *id);
            }
        }
    }

    /// The wire moves for `turn`, with the trailing pass.
    pub fn wire_moves(&self, script: &LoadedScript, turn: &ScriptTurn) -> Result<Vec<WireMove>, CliError> {
        let mut out = Vec::with_capacity(turn.moves.len() + 1);
        for m in &turn.moves {
            let mut content = Vec::new();
            for c in &m.content {
                content.extend(script.content(c).map_err(|e| parse_err(format!("{}: {e}", turn.label)))?);
            }
            let target = m.target.as_deref().map(|r| self.resolve(&turn.label, r)).transpose()?;
            let prompt_targets =
                m.prompt.iter().map(|r| self.resolve(&turn.label, r)).collect::<Result<Vec<_>, _>>()?;
            out.push(WireMove { kind: m.kind, content, target, prompt_targets });
        }
        if out.last().map(|m| m.kind) != Some(LocutionKind::Pass) {
            out.push(WireMove::pass());
        }
        Ok(out)
    }
}
