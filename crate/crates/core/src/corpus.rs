//! Corpus files: one `id: formula @category` entry per line.
//!
//! `#` starts a comment. A rule with a conjunctive consequent keeps its id and
//! maps to several single-consequent rules.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::content::{self, Category, Formula, Statement};
use crate::protocol::ParticipantId;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CorpusError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: duplicate id `{id}`")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: formula `{formula}` already defined as `{existing}`")]
    DuplicateFormula { line: usize, formula: String, existing: String },
    #[error("unknown corpus id `{0}`")]
    UnknownId(String),
    #[error("`{0}` denotes several formulas and cannot be negated as one")]
    NegateGroup(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusEntry {
    pub id: String,
    pub formulas: Vec<Formula>,
    pub category: Category,
}

impl CorpusEntry {
    pub fn statements(&self) -> impl Iterator<Item = Statement> + '_ {
        self.formulas.iter().map(|f| Statement::new(f.clone(), self.category))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    entries: Vec<CorpusEntry>,
    by_id: BTreeMap<String, usize>,
}

impl Corpus {
    pub fn parse(text: &str) -> Result<Self, CorpusError> {
        let mut corpus = Corpus::default();
        let mut seen: BTreeMap<Formula, String> = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let syntax = |message: String| CorpusError::Syntax { line, message };
            let (id, rest) = body.split_once(':').ok_or_else(|| syntax("expected `id: formula @category`".into()))?;
            let id = id.trim();
            if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(syntax(format!("invalid id `{id}`")));
            }
            let (formulas, category) = content::parse_tagged(rest).map_err(|e| syntax(e.to_string()))?;
            let category = category.ok_or_else(|| syntax("missing `@category`".into()))?;
            if formulas.iter().any(Formula::is_rule) != (category == Category::Rule) {
                return Err(syntax("rules and only rules belong to the `rule` category".into()));
            }
            if corpus.by_id.contains_key(id) {
                return Err(CorpusError::DuplicateId { line, id: id.to_string() });
            }
            for f in &formulas {
                if let Some(existing) = seen.insert(f.clone(), id.to_string()) {
                    return Err(CorpusError::DuplicateFormula { line, formula: f.to_string(), existing });
                }
            }
            corpus.by_id.insert(id.to_string(), corpus.entries.len());
            corpus.entries.push(CorpusEntry { id: id.to_string(), formulas, category });
        }
        Ok(corpus)
    }

    pub fn get(&self, id: &str) -> Option<&CorpusEntry> {
        self.by_id.get(id).map(|&i| &self.entries[i])
    }

    pub fn entries(&self) -> &[CorpusEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Resolves `id` or `!id` (negation of a single-formula entry).
    pub fn resolve(&self, reference: &str) -> Result<Vec<Statement>, CorpusError> {
        let (negated, id) = match reference.strip_prefix('!') {
            Some(id) => (true, id),
            None => (false, reference),
        };
        let entry = self.get(id).ok_or_else(|| CorpusError::UnknownId(id.to_string()))?;
        if !negated {
            return Ok(entry.statements().collect());
        }
        match entry.formulas.as_slice() {
            [single] => Ok(vec![Statement::new(single.negate(), entry.category)]),
            _ => Err(CorpusError::NegateGroup(id.to_string())),
        }
    }

    /// Reverse lookup: the id whose formulas include `f`, with `!` for negations.
    pub fn id_of(&self, f: &Formula) -> Option<String> {
        for e in &self.entries {
            if e.formulas.contains(f) {
                return Some(e.id.clone());
            }
            if e.formulas.len() == 1 && e.formulas[0].negate() == *f {
                return Some(format!("!{}", e.id));
            }
        }
        None
    }

    /// Renders a formula set compactly: whole multi-rule entries collapse to
    /// their id, rules are shown by id, atoms by their text.
    pub fn describe(&self, formulas: &BTreeSet<Formula>) -> Vec<String> {
        let mut remaining = formulas.clone();
        let mut out = Vec::new();
        for e in &self.entries {
            if e.formulas.len() > 1 && e.formulas.iter().all(|f| remaining.contains(f)) {
                for f in &e.formulas {
                    remaining.remove(f);
                }
                out.push(e.id.clone());
            }
        }
        for f in remaining {
            match (f.is_rule(), self.id_of(&f)) {
                (true, Some(id)) => out.push(id),
                _ => out.push(f.to_string()),
            }
        }
        out
    }
}

/// A participant's private knowledge base. Never sent over the wire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnowledgeBase {
    owner: ParticipantId,
    entries: BTreeMap<Formula, Category>,
}

impl KnowledgeBase {
    pub fn new(owner: ParticipantId) -> Self {
        Self { owner, entries: BTreeMap::new() }
    }

    pub fn from_ids<'a>(
        owner: ParticipantId,
        corpus: &Corpus,
        ids: impl IntoIterator<Item = &'a str>,
    ) -> Result<Self, CorpusError> {
        let mut kb = Self::new(owner);
        for id in ids {
            for s in corpus.resolve(id)? {
                kb.insert(s).map_err(|_| CorpusError::UnknownId(id.to_string()))?;
            }
        }
        Ok(kb)
    }

    pub fn owner(&self) -> &ParticipantId {
        &self.owner
    }

    /// Rejects a formula already filed under a different category.
    pub fn insert(&mut self, s: Statement) -> Result<bool, Category> {
        match self.entries.get(&s.formula) {
            Some(&existing) if existing != s.category => Err(existing),
            Some(_) => Ok(false),
            None => {
                self.entries.insert(s.formula, s.category);
                Ok(true)
            }
        }
    }

    pub fn contains(&self, f: &Formula) -> bool {
        self.entries.contains_key(f)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
