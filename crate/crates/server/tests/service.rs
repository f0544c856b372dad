use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use edg_core::api::{ErrorBody, LegalRepliesResponse, Snapshot, TurnAccepted};
use edg_core::session::{EventStore, FileEventStore, MemoryEventStore, SessionError, SessionEvent};
use edg_core::LocutionKind as K;
use edg_server::{AppState, IDEMPOTENCY_HEADER};
use futures::StreamExt;
use reqwest::StatusCode;
use serde_json::{json, Value};
use tokio::net::TcpListener;
use tokio_tungstenite::tungstenite::Message;

static KEYS: AtomicU64 = AtomicU64::new(0);

fn fresh_key() -> String {
    format!("k{}", KEYS.fetch_add(1, Ordering::Relaxed))
}

struct Server {
    base: String,
    http: reqwest::Client,
    _stop: tokio::sync::oneshot::Sender<()>,
}

async fn spawn(store: Arc<dyn EventStore>) -> Server {
    let state = AppState::recover(store).unwrap();
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    tokio::spawn(edg_server::serve_with_shutdown(listener, state, async {
        let _ = rx.await;
    }));
    Server { base: format!("http://{addr}"), http: reqwest::Client::new(), _stop: tx }
}

impl Server {
    async fn post_with(&self, path: &str, key: Option<&str>, body: &Value) -> (StatusCode, String) {
        let mut req = self.http.post(format!("{}{path}", self.base)).json(body);
        if let Some(k) = key {
            req = req.header(IDEMPOTENCY_HEADER, k);
        }
        let resp = req.send().await.unwrap();
        (resp.status(), resp.text().await.unwrap())
    }

    async fn post(&self, path: &str, body: Value) -> (StatusCode, String) {
        self.post_with(path, Some(&fresh_key()), &body).await
    }

    async fn get(&self, path: &str) -> (StatusCode, String) {
        let resp = self.http.get(format!("{}{path}", self.base)).send().await.unwrap();
        (resp.status(), resp.text().await.unwrap())
    }

    async fn create(&self) -> String {
        let (status, body) = self.post("/sessions", json!({ "config": { "min_participants": 3 } })).await;
        assert_eq!(status, StatusCode::CREATED, "{body}");
        serde_json::from_str::<Value>(&body).unwrap()["session"].as_str().unwrap().to_string()
    }

    async fn three_party(&self) -> String {
        let id = self.create().await;
        for (name, role) in [("alpha", "initiator"), ("beta", "participant"), ("gamma", "participant")] {
            let (status, body) =
                self.post(&format!("/sessions/{id}/join"), json!({ "name": name, "role": role })).await;
            assert_eq!(status, StatusCode::OK, "{body}");
        }
        id
    }

    async fn snapshot(&self, id: &str) -> Snapshot {
        let (status, body) = self.get(&format!("/sessions/{id}/snapshot")).await;
        assert_eq!(status, StatusCode::OK);
        serde_json::from_str(&body).unwrap()
    }

    async fn turn(&self, id: &str, speaker: &str, moves: &[Value]) -> (StatusCode, String) {
        let mut moves = moves.to_vec();
        moves.push(json!({ "kind": "pass" }));
        self.post(&format!("/sessions/{id}/turns"), json!({ "speaker": speaker, "moves": moves })).await
    }
}

fn mv(kind: &str, content: &[&str], target: Option<u64>) -> Value {
    json!({ "kind": kind, "content": content, "target": target })
}

fn opening() -> Vec<Value> {
    vec![
        mv("observation", &["symptom(fatigue) @observation"], None),
        mv("verdict", &["diagnosis(depression) @verdict"], None),
        mv("advise", &["exercise @remedial"], None),
        mv("concern", &["risk(x) @concern"], None),
    ]
}

fn error(body: &str) -> ErrorBody {
    serde_json::from_str(body).unwrap()
}

#[tokio::test]
async fn sessions_are_created_joined_and_started() {
    let srv = spawn(Arc::new(MemoryEventStore::new())).await;
    let a = srv.create().await;
    let b = srv.create().await;
    assert_ne!(a, b);

    let snap = srv.snapshot(&a).await;
    assert_eq!(snap.status, edg_core::api::SessionStatus::Lobby);
    assert!(snap.history.is_empty());

    let id = srv.three_party().await;
    let snap = srv.snapshot(&id).await;
    assert_eq!(snap.status, edg_core::api::SessionStatus::Commencement);
    let names: Vec<&str> = snap.participants.iter().map(|p| p.name.as_str()).collect();
    assert_eq!(names, ["alpha", "beta", "gamma"]);

    let (status, body) =
        srv.post(&format!("/sessions/{id}/join"), json!({ "name": "delta", "role": "participant" })).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(error(&body).code, "SESSION_STARTED");

    let (status, body) = srv.post("/sessions", json!({ "config": { "min_participants": 1 } })).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(error(&body).code, "INVALID_CONFIG");

    let (status, body) = srv.post("/sessions", json!({ "config": { "bogus": 1 } })).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(error(&body).code, "BAD_REQUEST");

    let (status, body) = srv.get("/sessions/nope/snapshot").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(error(&body).code, "NOT_FOUND");
}

#[tokio::test]
async fn manual_start() {
    let srv = spawn(Arc::new(MemoryEventStore::new())).await;
    let (_, body) = srv.post("/sessions", json!({ "config": { "start": "manual" } })).await;
    let id = serde_json::from_str::<Value>(&body).unwrap()["session"].as_str().unwrap().to_string();
    let (status, body) = srv.post(&format!("/sessions/{id}/start"), json!({})).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(error(&body).code, "NO_INITIATOR");
    srv.post(&format!("/sessions/{id}/join"), json!({ "name": "ann", "role": "initiator" })).await;
    srv.post(&format!("/sessions/{id}/join"), json!({ "name": "bob", "role": "participant" })).await;
    let (status, body) = srv.post(&format!("/sessions/{id}/start"), json!({})).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body, r#"{"status":"commencement"}"#);
}

#[tokio::test]
async fn idempotency_keys_replay_the_original_bytes() {
    let srv = spawn(Arc::new(MemoryEventStore::new())).await;

    let (status, body) = srv.post_with("/sessions", None, &json!({})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(error(&body).code, "IDEMPOTENCY_KEY_REQUIRED");

    let first = srv.post_with("/sessions", Some("create-1"), &json!({})).await;
    let again = srv.post_with("/sessions", Some("create-1"), &json!({})).await;
    assert_eq!(first, again);
    let other = srv.post_with("/sessions", Some("create-1"), &json!({ "config": { "min_participants": 4 } })).await;
    assert_eq!(other.0, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(error(&other.1).code, "IDEMPOTENCY_KEY_REUSED");

    let id = srv.three_party().await;
    let path = format!("/sessions/{id}/turns");
    let mut moves = opening();
    moves.push(json!({ "kind": "pass" }));
    let body = json!({ "speaker": "alpha", "moves": moves });
    let first = srv.post_with(&path, Some("t1"), &body).await;
    assert_eq!(first.0, StatusCode::OK, "{}", first.1);
    let again = srv.post_with(&path, Some("t1"), &body).await;
    assert_eq!(first, again);
    assert_eq!(srv.snapshot(&id).await.turns, 1);

    // Rejections are remembered too.
    let bad = json!({ "speaker": "alpha", "moves": [{ "kind": "pass" }] });
    let r1 = srv.post_with(&path, Some("t2"), &bad).await;
    let r2 = srv.post_with(&path, Some("t2"), &bad).await;
    assert_eq!(r1, r2);
    assert_eq!(r1.0, StatusCode::CONFLICT);

    // Concurrent duplicates run once.
    let moves = vec![mv("wh-justify", &["diagnosis(depression)"], Some(2)), json!({ "kind": "pass" })];
    let body = json!({ "speaker": "beta", "moves": moves });
    let results = futures::future::join_all((0..8).map(|_| srv.post_with(&path, Some("t3"), &body))).await;
    assert!(results.iter().all(|r| *r == results[0]));
    assert_eq!(results[0].0, StatusCode::OK, "{}", results[0].1);
    assert_eq!(srv.snapshot(&id).await.turns, 2);
}

#[tokio::test]
async fn turn_errors_are_structured() {
    let srv = spawn(Arc::new(MemoryEventStore::new())).await;
    let id = srv.three_party().await;

    let (status, body) = srv.turn(&id, "beta", &opening()).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(error(&body).code, "NOT_YOUR_TURN");

    let (status, body) = srv.turn(&id, "alpha", &opening()).await;
    assert_eq!(status, StatusCode::OK);
    let acc: TurnAccepted = serde_json::from_str(&body).unwrap();
    assert_eq!(acc.locutions.len(), 5);
    assert_eq!(acc.next_speakers[0].as_str(), "beta");

    let (status, _) = srv.turn(&id, "beta", &[mv("wh-justify", &["diagnosis(depression)"], Some(2))]).await;
    assert_eq!(status, StatusCode::OK);
    let before = srv.snapshot(&id).await;
    assert_eq!(before.obligations.len(), 1);

    // gamma answers, then alpha tries to sidestep the request.
    srv.turn(&id, "gamma", &[mv("verdict", &["diagnosis(anaemia) @verdict"], Some(2))]).await;
    let before = srv.snapshot(&id).await;
    let (status, body) = srv.turn(&id, "alpha", &[mv("agree", &["risk(x)"], Some(4))]).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let err = error(&body);
    assert!(err.violations.iter().any(|v| v.code.as_str() == "POLITENESS_BLOCK"), "{body}");
    let after = srv.snapshot(&id).await;
    assert_eq!(after.history, before.history);
    assert_eq!(after.commitments, before.commitments);
    assert_eq!(after.seq, before.seq + 1);

    let (status, body) = srv.turn(&id, "alpha", &[mv("justify", &["zzz @rule"], Some(6))]).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(!error(&body).violations.is_empty());

    let (status, body) = srv.turn(&id, "nobody", &[]).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(error(&body).code, "UNKNOWN_PARTICIPANT");

    let (status, body) = srv.post(&format!("/sessions/{id}/turns"), json!({ "speaker": "alpha" })).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(error(&body).code, "BAD_REQUEST");
}

#[tokio::test]
async fn replies_carry_labels() {
    let srv = spawn(Arc::new(MemoryEventStore::new())).await;
    let id = srv.three_party().await;
    srv.turn(&id, "alpha", &opening()).await;

    let (status, body) = srv.get(&format!("/sessions/{id}/replies?target=2")).await;
    assert_eq!(status, StatusCode::OK);
    let replies: LegalRepliesResponse = serde_json::from_str(&body).unwrap();
    assert_eq!(replies.target_kind, K::Verdict);
    let expected = edg_core::protocol::legal_replies(K::Verdict);
    let kinds: Vec<K> = replies.replies.iter().map(|r| r.kind).collect();
    assert_eq!(kinds, expected);
    let wj = replies.replies.iter().find(|r| r.kind == K::WhJustify).unwrap();
    assert_eq!(wj.label, "Can you justify");

    let (status, body) = srv.get(&format!("/sessions/{id}/replies?target=77")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(error(&body).code, "UNKNOWN_LOCUTION");
    let (status, _) = srv.get(&format!("/sessions/{id}/replies")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

async fn subscribe(
    srv: &Server,
    id: &str,
    after: u64,
) -> tokio_tungstenite::WebSocketStream<tokio_tungstenite::MaybeTlsStream<tokio::net::TcpStream>> {
    let url = format!("{}/sessions/{id}/events?after={after}", srv.base.replace("http", "ws"));
    tokio_tungstenite::connect_async(url).await.unwrap().0
}

async fn next_event<S>(ws: &mut S) -> SessionEvent
where
    S: futures::Stream<Item = Result<Message, tokio_tungstenite::tungstenite::Error>> + Unpin,
{
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(5), ws.next()).await.unwrap().unwrap().unwrap();
        if let Message::Text(t) = msg {
            return serde_json::from_str(&t).unwrap();
        }
    }
}

#[tokio::test]
async fn events_are_pushed_in_order_and_gaps_replay() {
    let srv = spawn(Arc::new(MemoryEventStore::new())).await;
    let id = srv.three_party().await;

    let mut subs = vec![subscribe(&srv, &id, 0).await, subscribe(&srv, &id, 0).await, subscribe(&srv, &id, 0).await];
    for ws in &mut subs {
        for want in 1..=5 {
            assert_eq!(next_event(ws).await.seq, want);
        }
    }
    srv.turn(&id, "alpha", &opening()).await;
    srv.turn(&id, "beta", &[mv("wh-justify", &["diagnosis(depression)"], Some(2))]).await;
    for ws in &mut subs {
        let ev = next_event(ws).await;
        assert_eq!((ev.seq, ev.body.kind()), (6, "TurnAccepted"));
        assert_eq!(next_event(ws).await.seq, 7);
        let ev = next_event(ws).await;
        assert_eq!((ev.seq, ev.body.kind()), (8, "TurnAccepted"));
    }

    // Reconnect after seq 5 gets exactly the gap, then live events.
    let mut late = subscribe(&srv, &id, 5).await;
    for want in 6..=8 {
        assert_eq!(next_event(&mut late).await.seq, want);
    }
    srv.turn(&id, "gamma", &[mv("verdict", &["diagnosis(anaemia) @verdict"], Some(2))]).await;
    assert_eq!(next_event(&mut late).await.seq, 9);

    // Snapshot and events agree on the last seq.
    assert_eq!(srv.snapshot(&id).await.seq, 9);

    let (status, body) = srv.get("/sessions/nope/events").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(error(&body).code, "NOT_FOUND");
    let url = format!("{}/sessions/nope/events", srv.base.replace("http", "ws"));
    assert!(tokio_tungstenite::connect_async(url).await.is_err());
    let (status, _) = srv.get(&format!("/sessions/{id}/events")).await;
    assert_eq!(status, StatusCode::UPGRADE_REQUIRED);
}

#[tokio::test]
async fn sessions_survive_a_restart() {
    let dir = tempfile::tempdir().unwrap();
    let (id, before) = {
        let srv = spawn(Arc::new(FileEventStore::open(dir.path()).unwrap())).await;
        let id = srv.three_party().await;
        srv.turn(&id, "alpha", &opening()).await;
        srv.turn(&id, "beta", &[mv("wh-justify", &["diagnosis(depression)"], Some(2))]).await;
        let snap = srv.snapshot(&id).await;
        (id, snap)
    };
    let srv = spawn(Arc::new(FileEventStore::open(dir.path()).unwrap())).await;
    assert_eq!(srv.snapshot(&id).await, before);
    let (status, _) = srv.turn(&id, "gamma", &[mv("verdict", &["diagnosis(anaemia) @verdict"], Some(2))]).await;
    assert_eq!(status, StatusCode::OK);
}

/// Fails every append after the first `ok` calls.
struct FlakyStore {
    inner: MemoryEventStore,
    ok: AtomicU64,
}

impl EventStore for FlakyStore {
    fn append(&self, session: &str, events: &[SessionEvent]) -> Result<(), SessionError> {
        if self.ok.load(Ordering::SeqCst) == 0 {
            return Err(SessionError::Storage("disk full".into()));
        }
        self.ok.fetch_sub(1, Ordering::SeqCst);
        self.inner.append(session, events)
    }
    fn load(&self, session: &str) -> Result<Vec<SessionEvent>, SessionError> {
        self.inner.load(session)
    }
    fn sessions(&self) -> Result<Vec<String>, SessionError> {
        self.inner.sessions()
    }
}

#[tokio::test]
async fn storage_faults_are_5xx_and_retryable() {
    let store = Arc::new(FlakyStore { inner: MemoryEventStore::new(), ok: AtomicU64::new(2) });
    let srv = spawn(store.clone()).await;
    let (_, body) = srv.post("/sessions", json!({})).await;
    let id = serde_json::from_str::<Value>(&body).unwrap()["session"].as_str().unwrap().to_string();
    srv.post(&format!("/sessions/{id}/join"), json!({ "name": "ann", "role": "initiator" })).await;

    let path = format!("/sessions/{id}/join");
    let body = json!({ "name": "bob", "role": "participant" });
    let (status, text) = srv.post_with(&path, Some("j"), &body).await;
    assert_eq!(status, StatusCode::INTERNAL_SERVER_ERROR);
    assert_eq!(error(&text).code, "STORAGE");
    assert_eq!(srv.snapshot(&id).await.participants.len(), 1);

    store.ok.store(10, Ordering::SeqCst);
    let (status, text) = srv.post_with(&path, Some("j"), &body).await;
    assert_eq!(status, StatusCode::OK, "{text}");
    assert_eq!(srv.snapshot(&id).await.participants.len(), 2);
}

#[tokio::test]
async fn independent_sessions_run_in_parallel() {
    let srv = Arc::new(spawn(Arc::new(MemoryEventStore::new())).await);
    let tasks: Vec<_> = (0..8)
        .map(|_| {
            let srv = srv.clone();
            tokio::spawn(async move {
                let id = srv.three_party().await;
                let (status, _) = srv.turn(&id, "alpha", &opening()).await;
                assert_eq!(status, StatusCode::OK);
                for who in ["beta", "gamma"] {
                    let (status, _) = srv.turn(&id, who, &[json!({ "kind": "end" })]).await;
                    assert_eq!(status, StatusCode::OK);
                }
                let (status, _) = srv.turn(&id, "alpha", &[json!({ "kind": "end" })]).await;
                assert_eq!(status, StatusCode::OK);
                srv.snapshot(&id).await
            })
        })
        .collect();
    for t in tasks {
        let snap = t.await.unwrap();
        assert_eq!(snap.status, edg_core::api::SessionStatus::Closed);
        assert!(snap.agreement_closed);
    }
}
