//! HTTP routes of the play service.
//!
//! | method | path | body / reply |
//! |---|---|---|
//! | POST | /v1/sessions | `CreateRequest` → `Created` |
//! | GET | /v1/sessions/{id}/observation | `Observation` |
//! | POST | /v1/sessions/{id}/actions | `SubmitRequest` → `SubmitOutcome` (409 when rejected) |
//! | GET | /v1/sessions/{id}/events?after=n | server-sent events, one `StreamItem` per message |
//! | GET | /v1/sessions/{id}/transcript | canonical `.mjlog.jsonl` of finished subgames |
//! | GET | /v1/models | `ModelList` |

use std::convert::Infallible;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream, StreamExt};
use serde::Deserialize;
use tokio::sync::broadcast::error::RecvError;

use crate::session::{Service, ServiceError};
use crate::wire::*;

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/v1/sessions", post(create))
        .route("/v1/sessions/{id}/observation", get(observe))
        .route("/v1/sessions/{id}/actions", post(submit))
        .route("/v1/sessions/{id}/events", get(events))
        .route("/v1/sessions/{id}/transcript", get(transcript))
        .route("/v1/models", get(models))
        .with_state(service)
}

struct ApiError(StatusCode, String);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        let code = match e {
            ServiceError::UnknownSession(_) => StatusCode::NOT_FOUND,
            ServiceError::Config(_) | ServiceError::MissingKey => StatusCode::BAD_REQUEST,
        };
        ApiError(code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            v: API_VERSION,
            layout: layout(),
            error: self.1,
            legal: None,
        };
        (self.0, Json(body)).into_response()
    }
}

/// Session work is CPU-bound (bots think inside it); keep it off the reactor.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> T {
    tokio::task::spawn_blocking(f).await.expect("session task panicked")
}

async fn create(State(svc): State<Arc<Service>>, Json(req): Json<CreateRequest>) -> Result<Json<Created>, ApiError> {
    Ok(Json(blocking(move || svc.create(&req)).await?))
}

async fn observe(State(svc): State<Arc<Service>>, Path(id): Path<String>) -> Result<Json<Observation>, ApiError> {
    Ok(Json(blocking(move || svc.observe(&id)).await?))
}

async fn submit(State(svc): State<Arc<Service>>, Path(id): Path<String>, Json(req): Json<SubmitRequest>) -> Result<Response, ApiError> {
    let s = blocking(move || svc.submit(&id, &req)).await?;
    let code = if s.outcome.accepted { StatusCode::OK } else { StatusCode::CONFLICT };
    Ok((code, Json(s.outcome)).into_response())
}

#[derive(Deserialize)]
struct After {
    #[serde(default)]
    after: u64,
}

fn sse_event(item: &StreamItem) -> Result<Event, Infallible> {
    Ok(Event::default().id(item.seq.to_string()).data(serde_json::to_string(item).expect("events serialize")))
}

async fn events(State(svc): State<Arc<Service>>, Path(id): Path<String>, Query(q): Query<After>) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ApiError> {
    let session = svc.session(&id)?;
    // History and subscription are taken under one lock: nothing is missed
    // or sent twice.
    let (past, rx) = session.lock().unwrap().subscribe(q.after);
    let last = past.last().map_or(q.after, |e| e.seq);
    let live = stream::unfold((rx, last), |(mut rx, last)| async move {
        loop {
            match rx.recv().await {
                Ok(item) if item.seq > last => {
                    let seq = item.seq;
                    return Some((item, (rx, seq)));
                }
                Ok(_) => continue,
                // A lagging subscriber ends its stream; it reconnects with `after`.
                Err(RecvError::Lagged(_)) | Err(RecvError::Closed) => return None,
            }
        }
    });
    let all = stream::iter(past).chain(live).map(|item| sse_event(&item));
    Ok(Sse::new(all).keep_alive(KeepAlive::default()))
}

async fn transcript(State(svc): State<Arc<Service>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let bytes = svc.transcript(&id)?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], bytes).into_response())
}

async fn models(State(svc): State<Arc<Service>>) -> Json<ModelList> {
    Json(svc.models())
}
