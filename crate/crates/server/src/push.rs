use std::sync::Arc;

use axum::extract::ws::rejection::WebSocketUpgradeRejection;
use axum::extract::ws::{CloseFrame, Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use serde::Deserialize;
use tokio::sync::broadcast::error::RecvError;

use edg_core::session::SessionEvent;

use crate::{ApiError, AppState, Slot};

/// Close code sent to a subscriber that fell too far behind.
pub const CLOSE_LAGGED: u16 = 4000;

#[derive(Deserialize)]
pub struct SubscribeQuery {
    #[serde(default)]
    after: u64,
}

pub async fn subscribe(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<SubscribeQuery>,
    ws: Result<WebSocketUpgrade, WebSocketUpgradeRejection>,
) -> Response {
    let slot = match state.slot(&id) {
        Ok(s) => s,
        Err(e) => return e.into_response(),
    };
    match ws {
        Ok(ws) => ws.on_upgrade(move |socket| stream(socket, state, id, slot, q.after)),
        Err(_) => ApiError::new(StatusCode::UPGRADE_REQUIRED, "UPGRADE_REQUIRED", "connect with a WebSocket upgrade")
            .into_response(),
    }
}

fn frame(ev: &SessionEvent) -> Message {
    Message::Text(serde_json::to_string(ev).expect("events always serialize").into())
}

/// Sends every event after `after`, then follows the live feed. The backlog
/// is read and the live feed joined under the session lock, so nothing is
/// missed or delivered twice.
async fn stream(mut socket: WebSocket, state: AppState, id: String, slot: Arc<Slot>, after: u64) {
    let (backlog, mut rx) = {
        let _session = slot.session.lock().await;
        let rx = slot.tx.subscribe();
        match state.load(&id).await {
            Ok(evs) => (evs, rx),
            Err(e) => {
                tracing::error!(session = %id, error = %e, "cannot load backlog");
                let _ =
                    socket.send(Message::Close(Some(CloseFrame { code: 1011, reason: "storage fault".into() }))).await;
                return;
            }
        }
    };
    let mut last = after;
    for ev in backlog.iter().filter(|e| e.seq > after) {
        if socket.send(frame(ev)).await.is_err() {
            return;
        }
        last = ev.seq;
    }
    loop {
        tokio::select! {
            ev = rx.recv() => match ev {
                Ok(ev) if ev.seq <= last => {}
                Ok(ev) => {
                    if socket.send(frame(&ev)).await.is_err() {
                        return;
                    }
                    last = ev.seq;
                }
                Err(RecvError::Lagged(n)) => {
                    tracing::warn!(session = %id, skipped = n, "dropping slow subscriber");
                    let close = CloseFrame { code: CLOSE_LAGGED, reason: format!("lagged; resubscribe with after={last}").into() };
                    let _ = socket.send(Message::Close(Some(close))).await;
                    return;
                }
                Err(RecvError::Closed) => return,
            },
            msg = socket.recv() => match msg {
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
                Some(Ok(_)) => {}
            },
        }
    }
}
