use std::collections::BTreeSet;

use clap::ValueEnum;

use edg_core::content::parse_tagged;
use edg_core::corpus::Corpus;
use edg_core::labels::LabelTable;
use edg_core::{Formula, LocutionKind};

use crate::trace::Trace;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Style {
    Plain,
    Markdown,
}

/// Renders every non-pass locution as `speaker: label — content`. Rules are
/// shown by corpus id, atoms as written.
pub fn export_transcript(trace: &Trace, style: Style, labels: &LabelTable) -> Result<String, CliError> {
    if trace.turns.is_empty() {
        return Ok(String::new());
    }
    let corpus = trace.corpus()?;
    let mut out = String::new();
    if style == Style::Markdown {
        out.push_str(&format!("# {}\n\n| Turn | Speaker | Move |\n|---|---|---|\n", trace.script));
    }
    for turn in &trace.turns {
        for loc in turn.locutions.iter().filter(|l| l.kind != LocutionKind::Pass) {
            let mut text = labels.label(loc.kind).to_string();
            let body = match loc.kind {
                LocutionKind::Prompt => {
                    let targets: Vec<String> = loc.prompt_targets.iter().map(|t| format!("#{}", t.0)).collect();
                    targets.join(", ")
                }
                _ => describe(&corpus, &loc.content)?,
            };
            if !body.is_empty() {
                text.push_str(" — ");
                text.push_str(&body);
            }
            if labels.is_question(loc.kind) {
                text.push('?');
            }
            match style {
                Style::Plain => out.push_str(&format!("{}: {text}\n", turn.speaker)),
                Style::Markdown => out.push_str(&format!(
                    "| {} | {} | {} |\n",
                    escape(&turn.label),
                    escape(turn.speaker.as_str()),
                    escape(&text)
                )),
            }
        }
    }
    Ok(out)
}

fn describe(corpus: &Corpus, content: &[String]) -> Result<String, CliError> {
    let mut set = BTreeSet::<Formula>::new();
    for s in content {
        let (fs, _) = parse_tagged(s).map_err(|e| CliError::TraceParse(format!("`{s}`: {e}")))?;
        set.extend(fs);
    }
    Ok(corpus.describe(&set).join(", "))
}

fn escape(s: &str) -> String {
    s.replace('|', "\\|")
}
