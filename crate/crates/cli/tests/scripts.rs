use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;

use edg_cli::{
    export_transcript, run_local, run_script, verify, Expectation, LoadedScript, RemoteDriver, Style, Trace,
};
use edg_core::labels::LabelTable;
use edg_core::session::MemoryEventStore;
use edg_server::AppState;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn load(name: &str) -> LoadedScript {
    LoadedScript::from_file(&root().join(format!("{name}.script.json"))).unwrap()
}

fn expectation(name: &str) -> Expectation {
    Expectation::from_json(&std::fs::read_to_string(root().join(format!("{name}.expect.json"))).unwrap()).unwrap()
}

#[test]
fn table4_matches_its_expectation() {
    let trace = run_local(&load("table4")).unwrap();
    assert!(trace.rejected.is_none());
    assert_eq!(trace.turns.len(), 19);
    let report = verify(&trace, &expectation("table4")).unwrap();
    assert!(report.passed(), "{report}");
    let used: Vec<&str> = report.deviations_used.iter().map(String::as_str).collect();
    assert_eq!(used, ["CLOSURE_RESIDUALS", "T16_F4"]);
}

#[test]
fn table6_matches_its_expectation() {
    let trace = run_local(&load("table6")).unwrap();
    assert_eq!(trace.turns.len(), 16);
    let report = verify(&trace, &expectation("table6")).unwrap();
    assert!(report.passed(), "{report}");
}

#[test]
fn a_lost_agreement_removal_fails_at_that_turn() {
    let mut trace = run_local(&load("table4")).unwrap();
    let t12 = trace.turns.iter().position(|t| t.label == "T12").unwrap();
    trace.turns[t12 + 1].agreement = trace.turns[t12].agreement.clone();
    assert_eq!(trace.turns[t12 + 1].label, "T13");
    let report = verify(&trace, &expectation("table4")).unwrap();
    assert_eq!(report.first_failure.as_deref(), Some("T13"));
    assert!(report.to_string().ends_with("FAIL at T13\n"), "{report}");
}

#[test]
fn undocumented_deviations_are_not_tolerated() {
    let trace = run_local(&load("table4")).unwrap();
    let mut expect = expectation("table4");
    expect.allow_documented_deviations.retain(|d| d != "T16_F4");
    let report = verify(&trace, &expect).unwrap();
    assert_eq!(report.first_failure.as_deref(), Some("T16"));

    let mut expect = expectation("table4");
    expect.allow_documented_deviations.push("NOPE".into());
    assert!(verify(&trace, &expect).is_err());
}

#[test]
fn transcripts_read_naturally() {
    let trace = run_local(&load("table4")).unwrap();
    let text = export_transcript(&trace, Style::Plain, &LabelTable::medical()).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines.contains(&"β: Can you justify — diagnosis(depression)?"), "{text}");
    assert!(lines.contains(&"α: I justify — f1"), "{text}");
    let md = export_transcript(&trace, Style::Markdown, &LabelTable::medical()).unwrap();
    assert!(md.starts_with("# table4\n"));

    let mut empty = trace.clone();
    empty.turns.clear();
    assert_eq!(export_transcript(&empty, Style::Plain, &LabelTable::medical()).unwrap(), "");
}

#[test]
fn traces_round_trip_through_json() {
    let trace = run_local(&load("table6")).unwrap();
    let text = trace.to_json();
    assert_eq!(Trace::from_json(&text).unwrap(), trace);
    assert!(!text.contains("\"ts\""));
}

#[test]
fn every_fault_script_triggers_exactly_its_code() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/faults");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let code = path.file_stem().unwrap().to_str().unwrap().to_string();
        let trace = run_local(&LoadedScript::from_file(&path).unwrap()).unwrap();
        let rej = trace.rejected.unwrap_or_else(|| panic!("{code}: accepted"));
        assert_eq!(rej.code, code);
        let codes: Vec<&str> = rej.violations.iter().map(|v| v.code.as_str()).collect();
        assert!(codes.iter().all(|c| *c == code), "{code}: {codes:?}");
        seen += 1;
    }
    assert_eq!(seen, 22);
}

#[test]
fn local_and_remote_runs_produce_identical_traces() {
    let rt = tokio::runtime::Runtime::new().unwrap();
    let script = load("table4");
    let local = run_local(&script).unwrap().to_json();
    let remote = rt.block_on(async {
        let state = AppState::recover(Arc::new(MemoryEventStore::new())).unwrap();
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let server = tokio::spawn(edg_server::serve_with_shutdown(listener, state, async {
            let _ = rx.await;
        }));
        let mut driver = RemoteDriver::new(&base).unwrap();
        let trace = run_script(&mut driver, &script).await.unwrap();
        let _ = tx.send(());
        let _ = server.await;
        trace.to_json()
    });
    assert_eq!(local, remote);
}

fn edg(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_edg")).args(args).output().unwrap()
}

#[test]
fn the_binary_reports_rejections_and_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t4.json");
    let script = root().join("table4.script.json");
    let run = edg(&["run", "--script", script.to_str().unwrap(), "--trace-out", out.to_str().unwrap()]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));

    let expect = root().join("table4.expect.json");
    let v = edg(&["verify", "--trace", out.to_str().unwrap(), "--expect", expect.to_str().unwrap()]);
    assert!(v.status.success());
    assert!(String::from_utf8_lossy(&v.stdout).contains("PASS"));

    let fault = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/faults/ORDER_VIOLATION.json");
    let bad = edg(&["run", "--script", fault.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).starts_with("REJECTED_AT(T1, ORDER_VIOLATION)"));

    let missing = edg(&["run", "--script", "/nonexistent.json"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("SCRIPT_PARSE"));
}
