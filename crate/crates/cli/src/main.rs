use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use edg_cli::{
    export_transcript, run_script, verify, CliError, Expectation, LoadedScript, LocalDriver, RemoteDriver, Style, Trace,
};
use edg_core::api::SessionConfig;
use edg_core::labels::LabelTable;

#[derive(Parser)]
#[command(name = "edg", version, about = "Run, verify and transcribe expert dialogue sessions")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Submit a script's turns and write the resulting trace.
    Run {
        #[arg(long)]
        script: PathBuf,
        /// Session configuration overriding the script's.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Service base URL; runs in-process when absent.
        #[arg(long)]
        remote: Option<String>,
        /// Where to write the trace; stdout when absent.
        #[arg(long)]
        trace_out: Option<PathBuf>,
    },
    /// Compare a trace with an expectation file.
    Verify {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        expect: PathBuf,
    },
    /// Render a trace as a readable transcript.
    Transcript {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, value_enum, default_value = "plain")]
        style: Style,
    },
    /// Start the session service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "edg-logs")]
        log_dir: PathBuf,
        #[arg(long, default_value = "127.0.0.1")]
        bind: std::net::IpAddr,
    },
}

fn read(path: &Path) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

#[tokio::main]
async fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Cmd::Run { script, config, remote, trace_out } => {
            run(&script, config.as_deref(), remote.as_deref(), trace_out.as_deref()).await
        }
        Cmd::Verify { trace, expect } => {
            let result = (|| {
                let trace = Trace::from_json(&read(&trace).map_err(CliError::TraceParse)?)?;
                let expect = Expectation::from_json(&read(&expect).map_err(CliError::ExpectationParse)?)?;
                verify(&trace, &expect)
            })();
            match result {
                Ok(report) => {
                    print!("{report}");
                    if report.passed() {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::FAILURE
                    }
                }
                Err(e) => fail(e),
            }
        }
        Cmd::Transcript { trace, style } => {
            let result = read(&trace)
                .map_err(CliError::TraceParse)
                .and_then(|t| Trace::from_json(&t))
                .and_then(|t| export_transcript(&t, style, &LabelTable::medical()));
            match result {
                Ok(text) => {
                    print!("{text}");
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
        Cmd::Serve { port, log_dir, bind } => {
            tracing_subscriber::fmt()
                .with_env_filter(
                    tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
                )
                .init();
            match edg_server::run(SocketAddr::new(bind, port), &log_dir).await {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::FAILURE
                }
            }
        }
    }
}

fn fail(e: CliError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(2)
}

async fn run(script: &Path, config: Option<&Path>, remote: Option<&str>, trace_out: Option<&Path>) -> ExitCode {
    let loaded = LoadedScript::from_file(script).and_then(|s| match config {
        None => Ok(s),
        Some(path) => {
            let text = read(path).map_err(CliError::ScriptParse)?;
            let cfg: SessionConfig =
                serde_json::from_str(&text).map_err(|e| CliError::ScriptParse(format!("{}: {e}", path.display())))?;
            s.with_config(cfg)
        }
    });
    let loaded = match loaded {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    let trace = match remote {
        None => run_script(&mut LocalDriver::new(), &loaded).await,
        Some(url) => match RemoteDriver::new(url) {
            Ok(mut d) => run_script(&mut d, &loaded).await,
            Err(e) => Err(e),
        },
    };
    let trace = match trace {
        Ok(t) => t,
        Err(e) => return fail(e),
    };
    let json = trace.to_json();
    match trace_out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, &json) {
                eprintln!("error: {}: {e}", path.display());
                return ExitCode::from(2);
            }
        }
        None => print!("{json}"),
    }
    match trace.ensure_complete() {
        Ok(()) => {
            eprintln!("{}: {} turns accepted, status {:?}", trace.script, trace.turns.len(), trace.status);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::FAILURE
        }
    }
}
