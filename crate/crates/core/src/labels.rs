//! Natural-language labels for locution kinds, as shown to human participants.

use std::collections::BTreeMap;

use crate::protocol::LocutionKind;

/// A swappable table of display labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelTable {
    labels: BTreeMap<LocutionKind, String>,
}

impl LabelTable {
    /// The clinical wording used by the reference prototype.
    pub fn medical() -> Self {
        use LocutionKind::*;
        let pairs = [
            (Observation, "Patient history is"),
            (Verdict, "I diagnose"),
            (Advise, "I recommend"),
            (Concern, "I note"),
            (Assert, "I assert"),
            (WhExplain, "Can you explain"),
            (WhJustify, "Can you justify"),
            (WhClarify, "Can you clarify"),
            (Explain, "I explain"),
            (Justify, "I justify"),
            (Clarify, "I clarify"),
            (Agree, "I agree"),
            (Retract, "I retract"),
            (Prompt, "Awaiting response on"),
            (End, "I think we can close the discussion"),
            (Pass, "Finish turn"),
        ];
        Self { labels: pairs.into_iter().map(|(k, s)| (k, s.to_string())).collect() }
    }

    /// Overrides one label, e.g. for a non-medical deployment.
    pub fn with(mut self, kind: LocutionKind, label: impl Into<String>) -> Self {
        self.labels.insert(kind, label.into());
        self
    }

    pub fn label(&self, kind: LocutionKind) -> &str {
        self.labels.get(&kind).map(String::as_str).unwrap_or(kind.as_str())
    }

    /// Whether the label reads as a question.
    pub fn is_question(&self, kind: LocutionKind) -> bool {
        kind.is_request()
    }
}

impl Default for LabelTable {
    fn default() -> Self {
        Self::medical()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_kind_has_a_label() {
        let t = LabelTable::medical();
        for k in LocutionKind::ALL {
            assert_ne!(t.label(k), k.as_str(), "{k}");
        }
        assert_eq!(t.label(LocutionKind::WhJustify), "Can you justify");
    }

    #[test]
    fn overrides_replace_a_single_label() {
        let t = LabelTable::medical().with(LocutionKind::Observation, "Background is");
        assert_eq!(t.label(LocutionKind::Observation), "Background is");
        assert_eq!(t.label(LocutionKind::Verdict), "I diagnose");
    }
}
