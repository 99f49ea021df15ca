//! `POST /score` over an immutable [`Scorer`] snapshot.
//!
//! Request: `{"query": {"city", "map_center", "stay_length", "guest_count"},
//! "candidates": [{"listing_id", "dynamic_features"}]}`.
//! Response: `{"scores": [...], "order": [...]}`. Malformed input gets a 400
//! with a message; unknown listing ids get a 422 naming them.

use std::net::SocketAddr;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use rankforge::serve::{Candidate, ScoreQuery, Scorer};
use rankforge::Error;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreRequest {
    pub query: ScoreQuery,
    pub candidates: Vec<Candidate>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreReply {
    pub scores: Vec<f64>,
    pub order: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReply {
    pub error: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unknown_listing_ids: Vec<u64>,
}

/// Current scorer snapshot. Readers clone the inner `Arc`; [`swap`](Self::swap)
/// replaces the whole model at once.
#[derive(Clone, Debug)]
pub struct ScorerHandle(Arc<RwLock<Arc<Scorer>>>);

impl ScorerHandle {
    pub fn new(scorer: Scorer) -> Self {
        Self(Arc::new(RwLock::new(Arc::new(scorer))))
    }

    pub fn snapshot(&self) -> Arc<Scorer> {
        self.0.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn swap(&self, scorer: Scorer) {
        *self.0.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(scorer);
    }
}

fn reject(status: StatusCode, error: String, unknown_listing_ids: Vec<u64>) -> Response {
    (
        status,
        Json(ErrorReply {
            error,
            unknown_listing_ids,
        }),
    )
        .into_response()
}

/// Scores one request against `scorer`; shared by the route and by callers
/// that want the HTTP semantics without a socket.
pub fn handle_request(scorer: &Scorer, body: &[u8]) -> Result<ScoreReply, (StatusCode, ErrorReply)> {
    let bad = |status, error: String, ids| {
        Err((
            status,
            ErrorReply {
                error,
                unknown_listing_ids: ids,
            },
        ))
    };
    let req: ScoreRequest = match serde_json::from_slice(body) {
        Ok(r) => r,
        Err(e) => return bad(StatusCode::BAD_REQUEST, format!("malformed request: {e}"), vec![]),
    };
    let resp = match scorer.score_batch(&req.query, &req.candidates) {
        Ok(r) => r,
        Err(e) => return bad(StatusCode::BAD_REQUEST, e.to_string(), vec![]),
    };
    if !resp.errors.is_empty() {
        let unknown: Vec<u64> = resp
            .errors
            .iter()
            .filter(|e| scorer.store().row_of(e.listing_id).is_none())
            .map(|e| e.listing_id)
            .collect();
        if unknown.is_empty() {
            return bad(StatusCode::BAD_REQUEST, resp.errors[0].message.clone(), vec![]);
        }
        let err = Error::UnknownListing(unknown[0]);
        return bad(
            StatusCode::UNPROCESSABLE_ENTITY,
            format!("{err} ({} unknown)", unknown.len()),
            unknown,
        );
    }
    Ok(ScoreReply {
        scores: resp.scores.into_iter().map(|s| s.expect("no errors")).collect(),
        order: resp.order,
    })
}

async fn score(State(handle): State<ScorerHandle>, body: Bytes) -> Response {
    let scorer = handle.snapshot();
    match tokio::task::spawn_blocking(move || handle_request(&scorer, &body)).await {
        Ok(Ok(reply)) => Json(reply).into_response(),
        Ok(Err((status, e))) => reject(status, e.error, e.unknown_listing_ids),
        Err(e) => reject(StatusCode::INTERNAL_SERVER_ERROR, e.to_string(), vec![]),
    }
}

pub fn router(handle: ScorerHandle) -> Router {
    Router::new().route("/score", post(score)).with_state(handle)
}

/// Binds `addr` and returns the bound address plus the server future.
pub async fn bind(
    handle: ScorerHandle,
    addr: SocketAddr,
) -> std::io::Result<(SocketAddr, impl std::future::Future<Output = std::io::Result<()>>)> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    log::info!("scoring endpoint listening on http://{local}/score");
    Ok((local, async move { axum::serve(listener, router(handle)).await }))
}

/// Serves until the process receives ctrl-c.
pub async fn serve_endpoint(handle: ScorerHandle, addr: SocketAddr) -> std::io::Result<()> {
    let (_, server) = bind(handle, addr).await?;
    tokio::select! {
        r = server => r,
        _ = tokio::signal::ctrl_c() => Ok(()),
    }
}
