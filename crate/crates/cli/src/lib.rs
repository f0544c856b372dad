//! Scripted dialogue runs: load a script, drive it locally or against the
//! service, verify the trace against an expectation file and export
//! transcripts.

pub mod driver;
pub mod script;
pub mod trace;
pub mod transcript;
pub mod verify;

use edg_core::Violation;

pub use driver::{run_script, Driver, LocalDriver, RemoteDriver};
pub use script::{LoadedScript, Script};
pub use trace::Trace;
pub use transcript::{export_transcript, Style};
pub use verify::{verify, Expectation, Report};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("SCRIPT_PARSE: {0}")]
    ScriptParse(String),
    #[error("REJECTED_AT({turn}, {code}){}", render_violations(.violations))]
    RejectedAt { turn: String, code: String, violations: Vec<Violation> },
    #[error("TRACE_PARSE: {0}")]
    TraceParse(String),
    #[error("EXPECTATION_PARSE: {0}")]
    ExpectationParse(String),
    #[error("driver: {0}")]
    Driver(String),
}

fn render_violations(vs: &[Violation]) -> String {
    vs.iter()
        .map(|v| match v.move_index {
            Some(i) => format!("\n  move {i}: {} {}", v.code, v.message),
            None => format!("\n  {} {}", v.code, v.message),
        })
        .collect()
}

/// Runs a script in-process.
pub fn run_local(script: &LoadedScript) -> Result<Trace, CliError> {
    let mut driver = LocalDriver::new();
    block_on(run_script(&mut driver, script))
}

/// The local driver never awaits anything, so a single poll completes it.
fn block_on<F: std::future::Future>(fut: F) -> F::Output {
    use std::task::{Context, Poll, Waker};
    let mut fut = std::pin::pin!(fut);
    match fut.as_mut().poll(&mut Context::from_waker(Waker::noop())) {
        Poll::Ready(v) => v,
        Poll::Pending => unreachable!("local runs do not suspend"),
    }
}
