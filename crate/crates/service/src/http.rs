//! Read-only HTTP side: epoch discovery, revealed boards and node status.

use std::sync::Arc;

use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

use crate::runtime::Shared;

pub fn router(shared: Arc<Shared>) -> Router {
    Router::new()
        .route("/epoch", get(epoch))
        .route("/board", get(board))
        .route("/status", get(status))
        .with_state(shared)
}

async fn epoch(State(s): State<Arc<Shared>>) -> Json<serde_json::Value> {
    let st = s.status.lock().unwrap();
    Json(json!({ "epoch": st.epoch, "state": st.state }))
}

#[derive(Deserialize)]
struct BoardQuery {
    epoch: Option<u64>,
}

/// `{row, status, message}` per line for the requested (default: latest)
/// revealed epoch.
async fn board(State(s): State<Arc<Shared>>, Query(q): Query<BoardQuery>) -> Response {
    let boards = s.boards.lock().unwrap();
    let report = match q.epoch {
        Some(e) => boards.get(&e),
        None => boards.values().next_back(),
    };
    match report {
        Some(r) => ([(header::CONTENT_TYPE, "application/x-ndjson")], r.board_ndjson()).into_response(),
        None => (StatusCode::NOT_FOUND, "no revealed board\n").into_response(),
    }
}

async fn status(State(s): State<Arc<Shared>>) -> Json<serde_json::Value> {
    Json(serde_json::to_value(&*s.status.lock().unwrap()).expect("status serializes"))
}
