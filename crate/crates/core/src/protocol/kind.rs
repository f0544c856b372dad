use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::content::CategorySet;

/// The sixteen speech acts of the game.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LocutionKind {
    Observation,
    Verdict,
    Advise,
    Concern,
    Assert,
    WhExplain,
    WhJustify,
    WhClarify,
    Explain,
    Justify,
    Clarify,
    Agree,
    Retract,
    Prompt,
    End,
    Pass,
}

/// The four disjoint locution subsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LocutionClass {
    /// L1: observation, verdict, advise, concern, assert.
    Informational,
    /// L2: the wh-requests.
    Request,
    /// L3: explain, justify, clarify, agree, retract.
    Reply,
    /// L4: prompt, end, pass.
    Management,
}

use LocutionKind::*;

impl LocutionKind {
    pub const ALL: [LocutionKind; 16] = [
        Observation,
        Verdict,
        Advise,
        Concern,
        Assert,
        WhExplain,
        WhJustify,
        WhClarify,
        Explain,
        Justify,
        Clarify,
        Agree,
        Retract,
        Prompt,
        End,
        Pass,
    ];

    /// The four locutions of the opening turn, in their mandatory order.
    pub const OPENING: [LocutionKind; 4] = [Observation, Verdict, Advise, Concern];

    pub fn class(self) -> LocutionClass {
        match self {
            Observation | Verdict | Advise | Concern | Assert => LocutionClass::Informational,
            WhExplain | WhJustify | WhClarify => LocutionClass::Request,
            Explain | Justify | Clarify | Agree | Retract => LocutionClass::Reply,
            Prompt | End | Pass => LocutionClass::Management,
        }
    }

    /// Identifier such as `L2.2`.
    pub fn code(self) -> &'static str {
        match self {
            Observation => "L1.1",
            Verdict => "L1.2",
            Advise => "L1.3",
            Concern => "L1.4",
            Assert => "L1.5",
            WhExplain => "L2.1",
            WhJustify => "L2.2",
            WhClarify => "L2.3",
            Explain => "L3.1",
            Justify => "L3.2",
            Clarify => "L3.3",
            Agree => "L3.4",
            Retract => "L3.5",
            Prompt => "L4.1",
            End => "L4.2",
            Pass => "L4.3",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Observation => "observation",
            Verdict => "verdict",
            Advise => "advise",
            Concern => "concern",
            Assert => "assert",
            WhExplain => "wh-explain",
            WhJustify => "wh-justify",
            WhClarify => "wh-clarify",
            Explain => "explain",
            Justify => "justify",
            Clarify => "clarify",
            Agree => "agree",
            Retract => "retract",
            Prompt => "prompt",
            End => "end",
            Pass => "pass",
        }
    }

    pub fn is_request(self) -> bool {
        self.class() == LocutionClass::Request
    }

    /// Explain, justify and clarify: the answers to wh-requests.
    pub fn is_explanatory(self) -> bool {
        matches!(self, Explain | Justify | Clarify)
    }

    /// Kinds whose content is a formula set.
    pub fn carries_formulas(self) -> bool {
        !matches!(self, Prompt | End | Pass)
    }

    /// Categories admissible in the locution's own content.
    pub fn content_categories(self) -> CategorySet {
        match self {
            Observation => CategorySet::H,
            Verdict => CategorySet::D,
            Advise => CategorySet::A,
            Concern => CategorySet::C,
            Assert => CategorySet::F,
            WhExplain | WhClarify => CategorySet::H.union(CategorySet::O),
            WhJustify => CategorySet::O,
            Explain => CategorySet::K.union(CategorySet::F),
            Justify => CategorySet::F,
            Clarify => CategorySet::H.union(CategorySet::F),
            Agree => CategorySet::ANY,
            Retract => CategorySet::O,
            Prompt | End | Pass => CategorySet::EMPTY,
        }
    }
}

impl fmt::Display for LocutionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LocutionKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LocutionKind::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| format!("unknown locution kind `{s}`"))
    }
}

/// The reply column of the combination-rule table.
///
/// A prompt's replies are those entailed by the prompted locutions, so its row
/// is the union over every kind a prompt may point at.
pub fn legal_replies(kind: LocutionKind) -> &'static [LocutionKind] {
    match kind {
        Observation => &[Agree, Observation, Assert, WhClarify],
        Verdict => &[Agree, WhExplain, WhJustify, Verdict],
        Advise => &[Agree, WhExplain, WhJustify, WhClarify, Advise],
        Concern => &[Agree, WhJustify, WhExplain, WhClarify],
        Assert => &[Agree, Assert],
        WhExplain => &[Explain],
        WhJustify => &[Justify, Retract],
        WhClarify => &[Clarify],
        Explain => &[Agree, Assert, WhClarify, Explain],
        Justify => &[Agree, Assert, WhExplain, WhClarify, Justify],
        Clarify => &[Agree, Assert, WhExplain, WhJustify, Clarify],
        Agree | Retract | Pass => &[],
        Prompt => &[
            Agree,
            Observation,
            Assert,
            WhClarify,
            WhExplain,
            WhJustify,
            Verdict,
            Advise,
            Explain,
            Justify,
            Retract,
            Clarify,
        ],
        End => &[End, Prompt],
    }
}

pub fn is_legal_reply(target: LocutionKind, reply: LocutionKind) -> bool {
    legal_replies(target).contains(&reply)
}

/// Whether a prompt may point at a locution of this kind: only locutions that
/// admit a formula-bearing reply.
pub fn promptable(kind: LocutionKind) -> bool {
    !matches!(kind, Prompt | End | Pass | Agree | Retract)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_replies() {
        let mut got = legal_replies(Verdict).to_vec();
        got.sort();
        assert_eq!(got, vec![Verdict, WhExplain, WhJustify, Agree]);
    }

    #[test]
    fn terminal_kinds_have_no_replies() {
        for k in [Agree, Retract, Pass] {
            assert!(legal_replies(k).is_empty(), "{k}");
        }
    }

    #[test]
    fn classes_partition_all_kinds() {
        let count = |c| LocutionKind::ALL.iter().filter(|k| k.class() == c).count();
        assert_eq!(count(LocutionClass::Informational), 5);
        assert_eq!(count(LocutionClass::Request), 3);
        assert_eq!(count(LocutionClass::Reply), 5);
        assert_eq!(count(LocutionClass::Management), 3);
    }

    #[test]
    fn kind_names_round_trip() {
        for k in LocutionKind::ALL {
            assert_eq!(k.as_str().parse::<LocutionKind>().unwrap(), k);
            let json = serde_json::to_string(&k).unwrap();
            assert_eq!(json, format!("\"{}\"", k.as_str()));
        }
    }
}
