//! Ground content language: categorized atoms, negation and single-consequent rules.
//!
//! Textual syntax:
//!
//! ```text
//! symptom(fatigue)                      positive atom
//! !symptom(headache)                    negated atom
//! skin(dry) & !age(48) -> diagnosis(x)  rule (antecedent literals joined by `&`)
//! !(a & b -> c)                         negated rule
//! ```
//!
//! A rule written with a conjunctive consequent (`a -> b & c`) is split into one
//! rule per consequent atom by [`parse_formulas`].

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at byte {position}: {message}")]
pub struct SyntaxError {
    pub position: usize,
    pub message: String,
}

impl SyntaxError {
    fn new(position: usize, message: impl Into<String>) -> Self {
        Self { position, message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Const(String),
    Number(i64),
    /// One level of nesting only, e.g. `diagnosis(autoimmune_disorder)`.
    Compound {
        functor: String,
        args: Vec<Term>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Atom {
    predicate: String,
    args: Vec<Term>,
}

impl Atom {
    pub fn new(predicate: impl Into<String>, args: Vec<Term>) -> Result<Self, SyntaxError> {
        let predicate = predicate.into();
        if !is_predicate(&predicate) {
            return Err(SyntaxError::new(0, format!("invalid predicate `{predicate}`")));
        }
        for arg in &args {
            if let Term::Compound { args: inner, .. } = arg {
                if inner.iter().any(|t| matches!(t, Term::Compound { .. })) {
                    return Err(SyntaxError::new(0, "terms nest at most one level"));
                }
            }
        }
        Ok(Self { predicate, args })
    }

    pub fn predicate(&self) -> &str {
        &self.predicate
    }

    pub fn args(&self) -> &[Term] {
        &self.args
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Literal {
    pub negated: bool,
    pub atom: Atom,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rule {
    antecedent: Vec<Literal>,
    consequent: Atom,
}

impl Rule {
    /// Builds a canonical rule; fails on an empty antecedent.
    pub fn new(antecedent: Vec<Literal>, consequent: Atom) -> Result<Self, SyntaxError> {
        if antecedent.is_empty() {
            return Err(SyntaxError::new(0, "rule antecedent must contain at least one literal"));
        }
        let mut rule = Self { antecedent, consequent };
        rule.normalize();
        Ok(rule)
    }

    pub fn antecedent(&self) -> &[Literal] {
        &self.antecedent
    }

    pub fn consequent(&self) -> &Atom {
        &self.consequent
    }

    fn normalize(&mut self) {
        let mut keyed: Vec<(String, Literal)> = self.antecedent.drain(..).map(|l| (render_literal(&l), l)).collect();
        keyed.sort_by(|a, b| a.0.cmp(&b.0));
        keyed.dedup_by(|a, b| a.0 == b.0);
        self.antecedent = keyed.into_iter().map(|(_, l)| l).collect();
    }
}

/// A formula of the content language. Equality is always over canonical forms.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Formula {
    Atom(Atom),
    NegatedAtom(Atom),
    Rule(Rule),
    /// Assertable denial of a rule; never used for inference.
    NegatedRule(Rule),
}

impl Formula {
    pub fn is_rule(&self) -> bool {
        matches!(self, Formula::Rule(_) | Formula::NegatedRule(_))
    }

    /// Logical negation; `negate(negate(f)) == f`.
    pub fn negate(&self) -> Formula {
        match self {
            Formula::Atom(a) => Formula::NegatedAtom(a.clone()),
            Formula::NegatedAtom(a) => Formula::Atom(a.clone()),
            Formula::Rule(r) => Formula::NegatedRule(r.clone()),
            Formula::NegatedRule(r) => Formula::Rule(r.clone()),
        }
    }

    /// Top-level predicate symbols, including those inside rule bodies.
    pub fn predicates(&self) -> BTreeSet<&str> {
        match self {
            Formula::Atom(a) | Formula::NegatedAtom(a) => BTreeSet::from([a.predicate()]),
            Formula::Rule(r) | Formula::NegatedRule(r) => r
                .antecedent
                .iter()
                .map(|l| l.atom.predicate())
                .chain(std::iter::once(r.consequent.predicate()))
                .collect(),
        }
    }
}

/// Returns the canonical form of `f`. Idempotent.
pub fn canonicalize(f: &Formula) -> Formula {
    match f {
        Formula::Rule(r) => {
            let mut r = r.clone();
            r.normalize();
            Formula::Rule(r)
        }
        Formula::NegatedRule(r) => {
            let mut r = r.clone();
            r.normalize();
            Formula::NegatedRule(r)
        }
        other => other.clone(),
    }
}

/// True iff the formulas share at least one predicate symbol.
pub fn related(a: &Formula, b: &Formula) -> bool {
    let pa = a.predicates();
    b.predicates().iter().any(|p| pa.contains(p))
}

/// Category of a statement, mirroring the sets H, D, E, T, C, K and F.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Observation,
    Verdict,
    Evaluative,
    Remedial,
    Concern,
    Fact,
    Rule,
}

impl Category {
    pub const ALL: [Category; 7] = [
        Category::Observation,
        Category::Verdict,
        Category::Evaluative,
        Category::Remedial,
        Category::Concern,
        Category::Fact,
        Category::Rule,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Observation => "observation",
            Category::Verdict => "verdict",
            Category::Evaluative => "evaluative",
            Category::Remedial => "remedial",
            Category::Concern => "concern",
            Category::Fact => "fact",
            Category::Rule => "rule",
        }
    }

    /// Advice: evaluative or remedial measures.
    pub fn is_advice(self) -> bool {
        matches!(self, Category::Evaluative | Category::Remedial)
    }

    /// Topics: verdicts, advice and concerns.
    pub fn is_topic(self) -> bool {
        matches!(self, Category::Verdict | Category::Concern) || self.is_advice()
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::ALL.into_iter().find(|c| c.as_str() == s).ok_or_else(|| format!("unknown category `{s}`"))
    }
}

/// A set of categories, used to express the content constraints of reply rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CategorySet(u8);

impl CategorySet {
    pub const EMPTY: CategorySet = CategorySet(0);
    pub const H: CategorySet = CategorySet::of(Category::Observation);
    pub const D: CategorySet = CategorySet::of(Category::Verdict);
    pub const C: CategorySet = CategorySet::of(Category::Concern);
    pub const K: CategorySet = CategorySet::of(Category::Fact);
    pub const F: CategorySet = CategorySet::of(Category::Rule);
    pub const A: CategorySet = CategorySet::of(Category::Evaluative).union(CategorySet::of(Category::Remedial));
    pub const O: CategorySet = CategorySet::D.union(CategorySet::A).union(CategorySet::C);
    pub const ANY: CategorySet = CategorySet(0x7f);

    pub const fn of(c: Category) -> CategorySet {
        CategorySet(1 << c as u8)
    }

    pub const fn union(self, other: CategorySet) -> CategorySet {
        CategorySet(self.0 | other.0)
    }

    pub const fn contains(self, c: Category) -> bool {
        self.0 & (1 << c as u8) != 0
    }
}

impl fmt::Display for CategorySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<_> = Category::ALL.into_iter().filter(|c| self.contains(*c)).map(Category::as_str).collect();
        write!(f, "{{{}}}", names.join(", "))
    }
}

/// A formula together with the category its speaker files it under.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Statement {
    pub formula: Formula,
    pub category: Category,
}

impl Statement {
    pub fn new(formula: Formula, category: Category) -> Self {
        Self { formula: canonicalize(&formula), category }
    }
}

impl fmt::Display for Statement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} @{}", self.formula, self.category)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConflictMode {
    LogicalNegationOnly,
    #[default]
    NegationPlusExclusionGroups,
}

/// Decides which formula pairs count as conflicting at closure.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConflictPolicy {
    mode: ConflictMode,
    groups: Vec<BTreeSet<Atom>>,
}

impl ConflictPolicy {
    pub fn negation_only() -> Self {
        Self { mode: ConflictMode::LogicalNegationOnly, groups: Vec::new() }
    }

    /// Groups must be pairwise disjoint and hold at least two atoms each.
    pub fn with_exclusion_groups(groups: Vec<BTreeSet<Atom>>) -> Result<Self, String> {
        for (i, g) in groups.iter().enumerate() {
            if g.len() < 2 {
                return Err(format!("exclusion group {i} has fewer than two atoms"));
            }
            for other in &groups[i + 1..] {
                if let Some(shared) = g.intersection(other).next() {
                    return Err(format!("atom `{}` appears in two exclusion groups", render_atom(shared)));
                }
            }
        }
        Ok(Self { mode: ConflictMode::NegationPlusExclusionGroups, groups })
    }

    pub fn mode(&self) -> &ConflictMode {
        &self.mode
    }

    pub fn groups(&self) -> &[BTreeSet<Atom>] {
        &self.groups
    }

    /// Symmetric and irreflexive.
    pub fn in_conflict(&self, a: &Formula, b: &Formula) -> bool {
        if a == b {
            return false;
        }
        if a.negate() == *b {
            return true;
        }
        match (&self.mode, a, b) {
            (ConflictMode::NegationPlusExclusionGroups, Formula::Atom(x), Formula::Atom(y)) => {
                self.groups.iter().any(|g| g.contains(x) && g.contains(y))
            }
            _ => false,
        }
    }
}

pub fn in_conflict(a: &Formula, b: &Formula, policy: &ConflictPolicy) -> bool {
    policy.in_conflict(a, b)
}

fn is_predicate(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase()) && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

// ---------------------------------------------------------------------------
// rendering

fn render_term(t: &Term, out: &mut String) {
    match t {
        Term::Const(s) => out.push_str(s),
        Term::Number(n) => out.push_str(&n.to_string()),
        Term::Compound { functor, args } => {
            out.push_str(functor);
            render_args(args, out);
        }
    }
}

fn render_args(args: &[Term], out: &mut String) {
    if args.is_empty() {
        return;
    }
    out.push('(');
    for (i, a) in args.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        render_term(a, out);
    }
    out.push(')');
}

fn render_atom(a: &Atom) -> String {
    let mut out = a.predicate.clone();
    render_args(&a.args, &mut out);
    out
}

fn render_literal(l: &Literal) -> String {
    if l.negated {
        format!("!{}", render_atom(&l.atom))
    } else {
        render_atom(&l.atom)
    }
}

fn render_rule(r: &Rule) -> String {
    let body: Vec<_> = r.antecedent.iter().map(render_literal).collect();
    format!("{} -> {}", body.join(" & "), render_atom(&r.consequent))
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_atom(self))
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_rule(self))
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::Atom(a) => write!(f, "{a}"),
            Formula::NegatedAtom(a) => write!(f, "!{a}"),
            Formula::Rule(r) => write!(f, "{r}"),
            Formula::NegatedRule(r) => write!(f, "!({r})"),
        }
    }
}

pub fn render(f: &Formula) -> String {
    f.to_string()
}

// ---------------------------------------------------------------------------
// parsing

/// Parses a single formula. Rules with a conjunctive consequent are rejected
/// here; use [`parse_formulas`] for those.
pub fn parse_formula(text: &str) -> Result<Formula, SyntaxError> {
    let mut all = parse_formulas(text)?;
    if all.len() != 1 {
        return Err(SyntaxError::new(text.find("->").unwrap_or(0), "conjunctive consequent denotes several rules"));
    }
    Ok(all.pop().expect("one formula"))
}

/// Parses a formula, splitting `a -> b & c` into `a -> b` and `a -> c`.
pub fn parse_formulas(text: &str) -> Result<Vec<Formula>, SyntaxError> {
    let mut p = Parser { src: text, pos: 0 };
    p.skip_ws();
    if p.at_end() {
        return Err(SyntaxError::new(0, "empty formula"));
    }
    let out = p.formula()?;
    p.skip_ws();
    if !p.at_end() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(out)
}

impl FromStr for Formula {
    type Err = SyntaxError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_formula(s)
    }
}

/// Parses `formula @category`; the category suffix is optional.
pub fn parse_tagged(text: &str) -> Result<(Vec<Formula>, Option<Category>), SyntaxError> {
    match text.rfind('@') {
        Some(at) => {
            let cat = text[at + 1..].trim();
            let category = cat.parse::<Category>().map_err(|m| SyntaxError::new(at + 1, m))?;
            Ok((parse_formulas(&text[..at])?, Some(category)))
        }
        None => Ok((parse_formulas(text)?, None)),
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn error(&self, message: impl Into<String>) -> SyntaxError {
        SyntaxError::new(self.pos, message)
    }

    fn eat(&mut self, token: &str) -> bool {
        self.skip_ws();
        if self.rest().starts_with(token) {
            self.pos += token.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, token: &str) -> Result<(), SyntaxError> {
        if self.eat(token) {
            Ok(())
        } else {
            Err(self.error(format!("expected `{token}`")))
        }
    }

    fn formula(&mut self) -> Result<Vec<Formula>, SyntaxError> {
        self.skip_ws();
        if self.rest().starts_with("!(") {
            self.pos += 2;
            let start = self.pos;
            let inner = self.formula()?;
            self.expect(")")?;
            return match inner.as_slice() {
                [Formula::Rule(r)] => Ok(vec![Formula::NegatedRule(r.clone())]),
                [Formula::Atom(a)] => Ok(vec![Formula::NegatedAtom(a.clone())]),
                [_] => Err(SyntaxError::new(start, "double negation is not supported")),
                _ => Err(SyntaxError::new(start, "cannot negate a conjunctive consequent")),
            };
        }
        let mut literals = vec![self.literal()?];
        while self.eat("&") {
            literals.push(self.literal()?);
        }
        if !self.eat("->") {
            return match literals.as_slice() {
                [single] => Ok(vec![literal_formula(single.clone())]),
                _ => Err(self.error("a conjunction must be the antecedent of a rule")),
            };
        }
        let mut consequents = vec![self.atom()?];
        while self.eat("&") {
            consequents.push(self.atom()?);
        }
        consequents.into_iter().map(|c| Rule::new(literals.clone(), c).map(Formula::Rule)).collect()
    }

    fn literal(&mut self) -> Result<Literal, SyntaxError> {
        self.skip_ws();
        let negated = self.eat("!");
        Ok(Literal { negated, atom: self.atom()? })
    }

    fn atom(&mut self) -> Result<Atom, SyntaxError> {
        self.skip_ws();
        let start = self.pos;
        let name = self.ident()?;
        if !is_predicate(&name) {
            return Err(SyntaxError::new(start, format!("predicate `{name}` must match [a-z][a-zA-Z0-9_]*")));
        }
        let args = self.args(0)?;
        Atom::new(name, args).map_err(|e| SyntaxError::new(start, e.message))
    }

    fn args(&mut self, depth: usize) -> Result<Vec<Term>, SyntaxError> {
        if !self.rest().starts_with('(') {
            return Ok(Vec::new());
        }
        self.pos += 1;
        let mut args = Vec::new();
        if self.eat(")") {
            return Ok(args);
        }
        loop {
            args.push(self.term(depth)?);
            if self.eat(")") {
                return Ok(args);
            }
            self.expect(",")?;
        }
    }

    fn term(&mut self, depth: usize) -> Result<Term, SyntaxError> {
        self.skip_ws();
        let start = self.pos;
        match self.peek() {
            Some(c) if c.is_ascii_digit() || c == '-' => {
                self.pos += 1;
                while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                    self.pos += 1;
                }
                self.src[start..self.pos]
                    .parse::<i64>()
                    .map(Term::Number)
                    .map_err(|_| SyntaxError::new(start, "invalid integer"))
            }
            _ => {
                let name = self.ident()?;
                if self.rest().starts_with('(') {
                    if depth >= 1 {
                        return Err(SyntaxError::new(start, "terms nest at most one level"));
                    }
                    let args = self.args(depth + 1)?;
                    Ok(Term::Compound { functor: name, args })
                } else {
                    Ok(Term::Const(name))
                }
            }
        }
    }

    fn ident(&mut self) -> Result<String, SyntaxError> {
        self.skip_ws();
        let start = self.pos;
        match self.peek() {
            Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
            _ => return Err(self.error("expected identifier")),
        }
        while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == '_') {
            self.pos += 1;
        }
        Ok(self.src[start..self.pos].to_string())
    }
}

fn literal_formula(l: Literal) -> Formula {
    if l.negated {
        Formula::NegatedAtom(l.atom)
    } else {
        Formula::Atom(l.atom)
    }
}
