use std::collections::{HashMap, VecDeque};
use std::future::Future;
use std::sync::{Arc, Mutex};

use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use bytes::Bytes;
use serde::Serialize;
use tokio::sync::OnceCell;

use crate::ApiError;

pub const IDEMPOTENCY_HEADER: &str = "idempotency-key";

/// Keys remembered before the oldest are forgotten.
const CAPACITY: usize = 100_000;

/// A fully rendered response, replayed verbatim for duplicate keys.
#[derive(Debug, Clone)]
pub struct Cached {
    status: StatusCode,
    body: Bytes,
}

impl Cached {
    pub fn json<T: Serialize>(status: StatusCode, value: &T) -> Self {
        let body = serde_json::to_vec(value).expect("wire types always serialize");
        Self { status, body: body.into() }
    }
}

impl From<ApiError> for Cached {
    fn from(e: ApiError) -> Self {
        Cached::json(e.status, &e.body)
    }
}

impl IntoResponse for Cached {
    fn into_response(self) -> Response {
        let mut resp = (self.status, self.body).into_response();
        resp.headers_mut().insert(header::CONTENT_TYPE, HeaderValue::from_static("application/json"));
        resp
    }
}

pub fn key(headers: &HeaderMap) -> Result<String, ApiError> {
    let missing = || {
        ApiError::new(
            StatusCode::BAD_REQUEST,
            "IDEMPOTENCY_KEY_REQUIRED",
            "POST requests need an Idempotency-Key header",
        )
    };
    let value = headers.get(IDEMPOTENCY_HEADER).ok_or_else(missing)?;
    let key = value.to_str().map_err(|_| missing())?.trim();
    if key.is_empty() || key.len() > 200 {
        return Err(missing());
    }
    Ok(key.to_string())
}

struct Entry {
    request: Bytes,
    response: OnceCell<Cached>,
}

#[derive(Default)]
pub struct IdempotencyCache {
    inner: Mutex<Inner>,
}

#[derive(Default)]
struct Inner {
    entries: HashMap<String, Arc<Entry>>,
    order: VecDeque<String>,
}

impl IdempotencyCache {
    /// Runs `f` the first time `key` is seen; later calls with the same key
    /// wait for and return the same bytes. Server errors are not remembered,
    /// so a retry after a storage fault runs again.
    pub async fn run<F, Fut>(&self, key: String, request: Bytes, f: F) -> Cached
    where
        F: FnOnce(Bytes) -> Fut,
        Fut: Future<Output = Cached>,
    {
        let entry = {
            let mut inner = self.inner.lock().expect("idempotency cache poisoned");
            match inner.entries.get(&key) {
                Some(e) => e.clone(),
                None => {
                    let e = Arc::new(Entry { request: request.clone(), response: OnceCell::new() });
                    inner.entries.insert(key.clone(), e.clone());
                    inner.order.push_back(key.clone());
                    while inner.order.len() > CAPACITY {
                        if let Some(old) = inner.order.pop_front() {
                            inner.entries.remove(&old);
                        }
                    }
                    e
                }
            }
        };
        if entry.request != request {
            return ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "IDEMPOTENCY_KEY_REUSED",
                "this Idempotency-Key was already used with a different request body",
            )
            .into();
        }
        let result = entry
            .response
            .get_or_try_init(|| async {
                let c = f(request).await;
                if c.status.is_server_error() {
                    Err(c)
                } else {
                    Ok(c)
                }
            })
            .await;
        match result {
            Ok(c) => c.clone(),
            Err(c) => c,
        }
    }
}
