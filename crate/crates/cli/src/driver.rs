//! Runs a script against an in-process session or a remote service.

use edg_client::{Client, ClientError, Subscription};
use edg_core::api::{Role, SessionConfig, Snapshot, StartPolicy, TurnAccepted, WireMove};
use edg_core::session::{Command, EventBody, Outcome, Session, SessionError, SessionEvent};
use edg_core::Violation;

use crate::script::{LoadedScript, Refs};
use crate::trace::{Rejection, Trace};
use crate::CliError;

pub enum Submitted {
    Accepted(TurnAccepted),
    Rejected { code: String, message: String, violations: Vec<Violation> },
}

/// The session operations a script run needs.
#[allow(async_fn_in_trait)]
pub trait Driver {
    async fn create(&mut self, config: &SessionConfig) -> Result<(), CliError>;
    async fn join(&mut self, name: &str, role: Role) -> Result<(), CliError>;
    async fn start(&mut self) -> Result<(), CliError>;
    async fn submit(&mut self, speaker: &str, moves: &[WireMove]) -> Result<Submitted, CliError>;
    async fn snapshot(&mut self) -> Result<Snapshot, CliError>;
}

/// The code reported for a rejected turn: its first violation, if any.
fn rejection_code(code: String, violations: &[Violation]) -> String {
    violations.first().map_or(code, |v| v.code.as_str().to_string())
}

/// Submits every turn in order and records the trace. Stops at the first
/// rejection, which is recorded in the trace rather than returned.
pub async fn run_script<D: Driver>(driver: &mut D, script: &LoadedScript) -> Result<Trace, CliError> {
    let s = &script.script;
    driver.create(&s.config).await?;
    for p in &s.participants {
        driver.join(&p.name, p.role).await?;
    }
    if s.config.start == StartPolicy::Manual {
        driver.start().await?;
    }
    let mut trace = Trace::new(&s.name, &script.corpus_text, &s.config);
    let mut refs = Refs::default();
    for turn in &s.turns {
        let moves = refs.wire_moves(script, turn)?;
        match driver.submit(&turn.speaker, &moves).await? {
            Submitted::Accepted(acc) => {
                refs.record(turn, &acc.locutions);
                let snap = driver.snapshot().await?;
                trace.push(&turn.label, &turn.speaker, &acc, &snap)?;
            }
            Submitted::Rejected { code, message, violations } => {
                trace.rejected = Some(Rejection { turn: turn.label.clone(), code, message, violations });
                break;
            }
        }
    }
    let snap = driver.snapshot().await?;
    trace.finish(&snap);
    Ok(trace)
}

/// Drives a [`Session`] directly, keeping its event log.
#[derive(Default)]
pub struct LocalDriver {
    session: Option<Session>,
    events: Vec<SessionEvent>,
}

impl LocalDriver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn events(&self) -> &[SessionEvent] {
        &self.events
    }

    pub fn session(&self) -> Option<&Session> {
        self.session.as_ref()
    }

    fn session_mut(&mut self) -> Result<&mut Session, CliError> {
        self.session.as_mut().ok_or_else(|| CliError::Driver("no session".into()))
    }

    fn execute(&mut self, cmd: Command) -> Result<Outcome, SessionError> {
        let session = self.session.as_mut().ok_or(SessionError::NotStarted)?;
        let (outcome, evs) = session.execute(&cmd, 0, |_| Ok(()))?;
        self.events.extend(evs);
        Ok(outcome)
    }
}

fn driver_err(e: impl std::fmt::Display) -> CliError {
    CliError::Driver(e.to_string())
}

impl Driver for LocalDriver {
    async fn create(&mut self, config: &SessionConfig) -> Result<(), CliError> {
        let (session, created) = Session::create("local", config.clone(), 0).map_err(driver_err)?;
        self.session = Some(session);
        self.events = vec![created];
        Ok(())
    }

    async fn join(&mut self, name: &str, role: Role) -> Result<(), CliError> {
        self.execute(Command::Join { name: name.into(), role }).map(drop).map_err(driver_err)
    }

    async fn start(&mut self) -> Result<(), CliError> {
        self.execute(Command::Start).map(drop).map_err(driver_err)
    }

    async fn submit(&mut self, speaker: &str, moves: &[WireMove]) -> Result<Submitted, CliError> {
        match self.execute(Command::SubmitTurn { speaker: speaker.into(), moves: moves.to_vec() }) {
            Ok(Outcome::Accepted(acc)) => Ok(Submitted::Accepted(acc)),
            Ok(Outcome::Rejected { code, message, violations }) => {
                Ok(Submitted::Rejected { code: rejection_code(code, &violations), message, violations })
            }
            Ok(other) => Err(driver_err(format!("unexpected outcome {other:?}"))),
            Err(SessionError::Storage(e)) => Err(driver_err(e)),
            Err(e) => Ok(Submitted::Rejected { code: e.code().into(), message: e.to_string(), violations: Vec::new() }),
        }
    }

    async fn snapshot(&mut self) -> Result<Snapshot, CliError> {
        Ok(self.session_mut()?.snapshot())
    }
}

/// Drives a session on a running service and follows its event feed, checking
/// that every accepted turn is also pushed.
pub struct RemoteDriver {
    client: Client,
    session: Option<String>,
    feed: Option<Subscription>,
}

impl RemoteDriver {
    pub fn new(base_url: &str) -> Result<Self, CliError> {
        Ok(Self { client: Client::new(base_url).map_err(driver_err)?, session: None, feed: None })
    }

    pub fn session_id(&self) -> Option<&str> {
        self.session.as_deref()
    }

    fn id(&self) -> Result<&str, CliError> {
        self.session.as_deref().ok_or_else(|| driver_err("no session"))
    }
}

impl Driver for RemoteDriver {
    async fn create(&mut self, config: &SessionConfig) -> Result<(), CliError> {
        let id = self.client.create_session(config).await.map_err(driver_err)?;
        self.feed = Some(self.client.subscribe(&id, 0).await.map_err(driver_err)?);
        self.session = Some(id);
        Ok(())
    }

    async fn join(&mut self, name: &str, role: Role) -> Result<(), CliError> {
        self.client.join(self.id()?, name, role).await.map(drop).map_err(driver_err)
    }

    async fn start(&mut self) -> Result<(), CliError> {
        self.client.start(self.id()?).await.map(drop).map_err(driver_err)
    }

    async fn submit(&mut self, speaker: &str, moves: &[WireMove]) -> Result<Submitted, CliError> {
        let id = self.id()?.to_string();
        match self.client.submit_turn(&id, speaker, moves).await {
            Ok(acc) => {
                let feed = self.feed.as_mut().ok_or_else(|| driver_err("no event feed"))?;
                let events = feed.until(acc.seq).await.map_err(driver_err)?;
                let pushed = events.iter().any(|e| {
                    matches!(&e.body, EventBody::TurnAccepted { turn, locutions, .. }
                        if *turn == acc.turn && *locutions == acc.locutions)
                });
                if !pushed {
                    return Err(driver_err(format!("turn {} was accepted but never pushed", acc.turn)));
                }
                Ok(Submitted::Accepted(acc))
            }
            Err(ClientError::Api { status, body }) if status.is_client_error() => {
                Ok(Submitted::Rejected { code: body.code, message: body.message, violations: body.violations })
            }
            Err(e) => Err(driver_err(e)),
        }
    }

    async fn snapshot(&mut self) -> Result<Snapshot, CliError> {
        self.client.snapshot(self.id()?).await.map_err(driver_err)
    }
}
