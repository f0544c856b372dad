//! Thin async client for the session service.
//!
//! Every POST carries a fresh `Idempotency-Key`; transport failures are retried
//! with the same key, so a retried turn is applied at most once.

use std::time::Duration;

use futures::StreamExt;
use reqwest::StatusCode;
use serde::de::DeserializeOwned;
use serde::Serialize;
use tokio_tungstenite::tungstenite::protocol::frame::coding::CloseCode;
use tokio_tungstenite::tungstenite::Message;

use edg_core::api::{
    CreateSessionRequest, CreateSessionResponse, ErrorBody, JoinRequest, JoinResponse, LegalRepliesResponse, Role,
    SessionConfig, Snapshot, StartResponse, SubmitTurnRequest, TurnAccepted, WireMove,
};
use edg_core::session::SessionEvent;
use edg_core::LocutionId;

const RETRIES: u32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    /// The service answered with a structured error.
    #[error("{status}: {} ({})", .body.code, .body.message)]
    Api { status: StatusCode, body: ErrorBody },
    #[error("transport: {0}")]
    Transport(String),
    #[error("unexpected response: {0}")]
    Decode(String),
}

impl ClientError {
    /// The service error code, if the service answered.
    pub fn code(&self) -> Option<&str> {
        match self {
            ClientError::Api { body, .. } => Some(&body.code),
            _ => None,
        }
    }
}

type Result<T> = std::result::Result<T, ClientError>;

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    /// `base` is the service root, e.g. `http://127.0.0.1:8080`.
    pub fn new(base: &str) -> Result<Self> {
        let base = base.trim_end_matches('/').to_string();
        if !(base.starts_with("http://") || base.starts_with("https://")) {
            return Err(ClientError::Transport(format!("unsupported url `{base}`")));
        }
        let http = reqwest::Client::builder()
            .timeout(Duration::from_secs(30))
            .build()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        Ok(Self { base, http })
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    pub async fn create_session(&self, config: &SessionConfig) -> Result<String> {
        let resp: CreateSessionResponse =
            self.post("/sessions", &CreateSessionRequest { config: config.clone() }).await?;
        Ok(resp.session)
    }

    pub async fn join(&self, session: &str, name: &str, role: Role) -> Result<JoinResponse> {
        self.post(&format!("/sessions/{session}/join"), &JoinRequest { name: name.into(), role }).await
    }

    pub async fn start(&self, session: &str) -> Result<StartResponse> {
        self.post(&format!("/sessions/{session}/start"), &serde_json::json!({})).await
    }

    /// Submits a complete turn; `moves` must already end with a pass.
    pub async fn submit_turn(&self, session: &str, speaker: &str, moves: &[WireMove]) -> Result<TurnAccepted> {
        let req = SubmitTurnRequest { speaker: speaker.into(), moves: moves.to_vec() };
        self.post(&format!("/sessions/{session}/turns"), &req).await
    }

    pub async fn snapshot(&self, session: &str) -> Result<Snapshot> {
        self.get(&format!("/sessions/{session}/snapshot")).await
    }

    pub async fn legal_replies(&self, session: &str, target: LocutionId) -> Result<LegalRepliesResponse> {
        self.get(&format!("/sessions/{session}/replies?target={}", target.0)).await
    }

    /// Opens the push channel, starting after event `after` (0 for everything).
    pub async fn subscribe(&self, session: &str, after: u64) -> Result<Subscription> {
        let mut sub = Subscription { url: self.ws_url(session), last: after, socket: None };
        sub.connect().await?;
        Ok(sub)
    }

    fn ws_url(&self, session: &str) -> String {
        let base = self.base.replacen("http", "ws", 1);
        format!("{base}/sessions/{session}/events")
    }

    async fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T> {
        let key = uuid::Uuid::new_v4().to_string();
        let url = format!("{}{path}", self.base);
        let mut attempt = 0;
        loop {
            let sent = self.http.post(&url).header("Idempotency-Key", &key).json(body).send().await;
            match sent {
                Ok(resp) if resp.status().is_server_error() && attempt + 1 < RETRIES => {}
                Ok(resp) => return decode(resp).await,
                Err(e) if attempt + 1 >= RETRIES || !(e.is_connect() || e.is_timeout()) => {
                    return Err(ClientError::Transport(e.to_string()))
                }
                Err(_) => {}
            }
            attempt += 1;
            tokio::time::sleep(Duration::from_millis(50 << attempt)).await;
        }
    }

    async fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T> {
        let resp = self
            .http
            .get(format!("{}{path}", self.base))
            .send()
            .await
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        decode(resp).await
    }
}

async fn decode<T: DeserializeOwned>(resp: reqwest::Response) -> Result<T> {
    let status = resp.status();
    let bytes = resp.bytes().await.map_err(|e| ClientError::Transport(e.to_string()))?;
    if status.is_success() {
        serde_json::from_slice(&bytes).map_err(|e| ClientError::Decode(e.to_string()))
    } else {
        let body = serde_json::from_slice(&bytes).unwrap_or_else(|_| ErrorBody {
            code: format!("HTTP_{}", status.as_u16()),
            message: String::from_utf8_lossy(&bytes).into_owned(),
            violations: Vec::new(),
        });
        Err(ClientError::Api { status, body })
    }
}

type Socket = tokio_tungstenite::WebSocketStream<tokio_tungstenite::MaybeTlsStream<tokio::net::TcpStream>>;

/// A live event feed. Reconnects after drops, resuming from the last seen seq.
pub struct Subscription {
    url: String,
    last: u64,
    socket: Option<Socket>,
}

impl Subscription {
    /// Seq of the last event returned.
    pub fn last_seq(&self) -> u64 {
        self.last
    }

    async fn connect(&mut self) -> Result<()> {
        let url = format!("{}?after={}", self.url, self.last);
        let (socket, _) = tokio_tungstenite::connect_async(url).await.map_err(|e| match e {
            tokio_tungstenite::tungstenite::Error::Http(resp) => {
                let status = StatusCode::from_u16(resp.status().as_u16()).unwrap_or(StatusCode::BAD_GATEWAY);
                let body = resp.body().as_deref().and_then(|b| serde_json::from_slice(b).ok()).unwrap_or_else(|| {
                    ErrorBody { code: "NOT_FOUND".into(), message: String::new(), violations: vec![] }
                });
                ClientError::Api { status, body }
            }
            other => ClientError::Transport(other.to_string()),
        })?;
        self.socket = Some(socket);
        Ok(())
    }

    /// The next event in seq order. Returns `None` once the server closes the
    /// feed normally; a dropped or lagging feed is resumed transparently.
    pub async fn next(&mut self) -> Option<Result<SessionEvent>> {
        let mut reconnects = 0;
        loop {
            let socket = match self.socket.as_mut() {
                Some(s) => s,
                None => {
                    if let Err(e) = self.connect().await {
                        return Some(Err(e));
                    }
                    continue;
                }
            };
            match socket.next().await {
                Some(Ok(Message::Text(text))) => {
                    let ev: SessionEvent = match serde_json::from_str(&text) {
                        Ok(ev) => ev,
                        Err(e) => return Some(Err(ClientError::Decode(e.to_string()))),
                    };
                    if ev.seq <= self.last {
                        continue;
                    }
                    self.last = ev.seq;
                    return Some(Ok(ev));
                }
                Some(Ok(Message::Close(frame))) => {
                    self.socket = None;
                    let normal = frame.as_ref().is_none_or(|f| f.code == CloseCode::Normal);
                    if normal {
                        return None;
                    }
                }
                Some(Ok(_)) => continue,
                Some(Err(_)) | None => self.socket = None,
            }
            reconnects += 1;
            if reconnects > RETRIES {
                return Some(Err(ClientError::Transport("event feed keeps dropping".into())));
            }
            tokio::time::sleep(Duration::from_millis(50 << reconnects)).await;
        }
    }

    /// Collects events until `seq` (inclusive) has been seen.
    pub async fn until(&mut self, seq: u64) -> Result<Vec<SessionEvent>> {
        let mut out = Vec::new();
        while self.last < seq {
            match self.next().await {
                Some(ev) => out.push(ev?),
                None => return Err(ClientError::Transport("event feed closed".into())),
            }
        }
        Ok(out)
    }
}
