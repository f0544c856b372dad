use std::fmt;

use serde::{Deserialize, Serialize};

/// Stable rule identifiers attached to rejected moves. The serialized names
/// are part of the wire contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViolationCode {
    /// Turn does not end with exactly one pass preceded by at least one move.
    TurnShape,
    OrderViolation,
    MissingOpeningLocution,
    TargetNotNull,
    TargetRequired,
    UnknownTarget,
    #[serde(rename = "TABLE3_REPLY")]
    Table3Reply,
    ContentCategory,
    ContentSubset,
    Relatedness,
    EmptyContent,
    CategoryConflict,
    CategoryRequired,
    ContentSyntax,
    #[serde(rename = "P2_PROVENANCE")]
    P2Provenance,
    #[serde(rename = "P3_RETRACT")]
    P3Retract,
    RepeatMove,
    PolitenessBlock,
    Stage,
    PromptTarget,
    AlreadyConsented,
    SelfRequest,
}

impl ViolationCode {
    pub const ALL: [ViolationCode; 22] = [
        ViolationCode::TurnShape,
        ViolationCode::OrderViolation,
        ViolationCode::MissingOpeningLocution,
        ViolationCode::TargetNotNull,
        ViolationCode::TargetRequired,
        ViolationCode::UnknownTarget,
        ViolationCode::Table3Reply,
        ViolationCode::ContentCategory,
        ViolationCode::ContentSubset,
        ViolationCode::Relatedness,
        ViolationCode::EmptyContent,
        ViolationCode::CategoryConflict,
        ViolationCode::CategoryRequired,
        ViolationCode::ContentSyntax,
        ViolationCode::P2Provenance,
        ViolationCode::P3Retract,
        ViolationCode::RepeatMove,
        ViolationCode::PolitenessBlock,
        ViolationCode::Stage,
        ViolationCode::PromptTarget,
        ViolationCode::AlreadyConsented,
        ViolationCode::SelfRequest,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ViolationCode::TurnShape => "TURN_SHAPE",
            ViolationCode::OrderViolation => "ORDER_VIOLATION",
            ViolationCode::MissingOpeningLocution => "MISSING_OPENING_LOCUTION",
            ViolationCode::TargetNotNull => "TARGET_NOT_NULL",
            ViolationCode::TargetRequired => "TARGET_REQUIRED",
            ViolationCode::UnknownTarget => "UNKNOWN_TARGET",
            ViolationCode::Table3Reply => "TABLE3_REPLY",
            ViolationCode::ContentCategory => "CONTENT_CATEGORY",
            ViolationCode::ContentSubset => "CONTENT_SUBSET",
            ViolationCode::Relatedness => "RELATEDNESS",
            ViolationCode::EmptyContent => "EMPTY_CONTENT",
            ViolationCode::CategoryConflict => "CATEGORY_CONFLICT",
            ViolationCode::CategoryRequired => "CATEGORY_REQUIRED",
            ViolationCode::ContentSyntax => "CONTENT_SYNTAX",
            ViolationCode::P2Provenance => "P2_PROVENANCE",
            ViolationCode::P3Retract => "P3_RETRACT",
            ViolationCode::RepeatMove => "REPEAT_MOVE",
            ViolationCode::PolitenessBlock => "POLITENESS_BLOCK",
            ViolationCode::Stage => "STAGE",
            ViolationCode::PromptTarget => "PROMPT_TARGET",
            ViolationCode::AlreadyConsented => "ALREADY_CONSENTED",
            ViolationCode::SelfRequest => "SELF_REQUEST",
        }
    }
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One broken rule. `move_index` is the 0-based position in the submitted
/// turn, absent for turn-level problems.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub move_index: Option<usize>,
    pub message: String,
}

impl Violation {
    pub fn new(code: ViolationCode, message: impl Into<String>) -> Self {
        Self { code, move_index: None, message: message.into() }
    }

    pub fn at(mut self, index: usize) -> Self {
        self.move_index = Some(index);
        self
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.move_index {
            Some(i) => write!(f, "{} (move {}): {}", self.code, i, self.message),
            None => write!(f, "{}: {}", self.code, self.message),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn serialized_codes_match_as_str() {
        for code in ViolationCode::ALL {
            assert_eq!(serde_json::to_string(&code).unwrap(), format!("\"{}\"", code.as_str()));
        }
    }
}
