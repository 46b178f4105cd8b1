// SPDX-License-Identifier: Apache-2.0

//! HTTP front end for a [`RegistryStore`].
//!
//! | method | path | success |
//! |---|---|---|
//! | GET  | `/agents/{agent_id}/facts`         | 200 head revision, detached signatures, freshness |
//! | GET  | `/agents/{agent_id}/facts/{seq}`   | 200 historical revision |
//! | GET  | `/agents/{agent_id}/chain`         | 200 version links |
//! | POST | `/agents/{agent_id}/facts`         | 200 ack; 409 on chain mismatch |
//! | POST | `/agents/{agent_id}/subscriptions` | 201 subscription id |
//! | GET  | `/authorities`                     | 200 authority registry |
//! | POST | `/revocations`                     | 201 accepted |
//!
//! Bodies are compact JSON. Errors are `{"error": <code>, "message": <text>}`.

use std::net::SocketAddr;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::{Deserialize, Serialize};

use super::{PublishRequest, RegistryError, RegistryStore};
use crate::lifecycle::{FreshnessReport, VersionLink};
use crate::model::AgentFactsDoc;
use crate::signing::{RevocationEntry, SignatureBlock};
use crate::units::Timestamp;

pub type Clock = Arc<dyn Fn() -> Timestamp + Send + Sync>;

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<RwLock<RegistryStore>>,
    pub clock: Clock,
}

impl AppState {
    pub fn new(store: RegistryStore, clock: Clock) -> Self {
        AppState {
            store: Arc::new(RwLock::new(store)),
            clock,
        }
    }

    pub fn fixed_clock(at: Timestamp) -> Clock {
        Arc::new(move || at)
    }

    pub fn system_clock() -> Clock {
        Arc::new(Timestamp::now)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactsResponse {
    pub agent_id: String,
    pub head_seq: u64,
    pub doc: AgentFactsDoc,
    pub signatures: Vec<SignatureBlock>,
    pub freshness: FreshnessReport,
    pub cached_at: Timestamp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VersionResponse {
    pub agent_id: String,
    pub seq: u64,
    pub doc: AgentFactsDoc,
    pub signatures: Vec<SignatureBlock>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainResponse {
    pub agent_id: String,
    pub head_seq: u64,
    pub links: Vec<VersionLink>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubscribeRequest {
    pub webhook_url: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubscribeResponse {
    pub subscription_id: u64,
    pub agent_id: String,
    pub webhook_url: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevocationAck {
    pub accepted: bool,
    pub revocations: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

fn json_response<T: Serialize>(status: StatusCode, body: &T) -> Response {
    let bytes = serde_json::to_vec(body).expect("responses serialize");
    (status, [(header::CONTENT_TYPE, "application/json")], bytes).into_response()
}

fn error_response(status: StatusCode, code: &str, message: impl Into<String>) -> Response {
    json_response(
        status,
        &ErrorBody {
            error: code.into(),
            message: message.into(),
        },
    )
}

fn registry_error(e: RegistryError) -> Response {
    let (status, code) = match &e {
        RegistryError::UnknownAgent(_) => (StatusCode::NOT_FOUND, "unknown_agent"),
        RegistryError::ChainMismatch(_) => (StatusCode::CONFLICT, "chain_mismatch"),
        RegistryError::ValidationFailed(_) => {
            (StatusCode::UNPROCESSABLE_ENTITY, "validation_failed")
        }
        RegistryError::BadUrl(_) => (StatusCode::UNPROCESSABLE_ENTITY, "bad_url"),
        RegistryError::BadRevocation => (StatusCode::UNPROCESSABLE_ENTITY, "bad_revocation"),
        RegistryError::Policy(_) => (StatusCode::BAD_REQUEST, "bad_policy"),
        RegistryError::Storage(_) => (StatusCode::INTERNAL_SERVER_ERROR, "storage"),
    };
    error_response(status, code, e.to_string())
}

#[allow(clippy::result_large_err)]
fn parse_body<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T, Response> {
    serde_json::from_slice(body)
        .map_err(|e| error_response(StatusCode::BAD_REQUEST, "bad_request", e.to_string()))
}

async fn get_facts(State(app): State<AppState>, Path(agent_id): Path<String>) -> Response {
    let now = (app.clock)();
    let store = app.store.read().expect("store lock");
    let Some(record) = store.record(&agent_id) else {
        return registry_error(RegistryError::UnknownAgent(agent_id));
    };
    let head = record.head().clone();
    let signatures = record.signatures.last().cloned().unwrap_or_default();
    let freshness = match store.head(&agent_id, now) {
        Ok(r) => r.freshness,
        Err(e) => return registry_error(e),
    };
    json_response(
        StatusCode::OK,
        &FactsResponse {
            head_seq: head.identity.version_seq,
            agent_id,
            doc: head,
            signatures,
            freshness,
            cached_at: record.cached_at,
        },
    )
}

async fn get_version(
    State(app): State<AppState>,
    Path((agent_id, seq)): Path<(String, u64)>,
) -> Response {
    let store = app.store.read().expect("store lock");
    let Some(record) = store.record(&agent_id) else {
        return registry_error(RegistryError::UnknownAgent(agent_id));
    };
    let Some(idx) = record
        .versions
        .iter()
        .position(|d| d.identity.version_seq == seq)
    else {
        return error_response(
            StatusCode::NOT_FOUND,
            "unknown_version",
            format!("no revision {seq} of {agent_id}"),
        );
    };
    json_response(
        StatusCode::OK,
        &VersionResponse {
            agent_id,
            seq,
            doc: record.versions[idx].clone(),
            signatures: record.signatures[idx].clone(),
        },
    )
}

async fn get_chain(State(app): State<AppState>, Path(agent_id): Path<String>) -> Response {
    let store = app.store.read().expect("store lock");
    let Some(record) = store.record(&agent_id) else {
        return registry_error(RegistryError::UnknownAgent(agent_id));
    };
    json_response(
        StatusCode::OK,
        &ChainResponse {
            head_seq: record.head_seq(),
            agent_id,
            links: record.links.clone(),
        },
    )
}

async fn post_facts(
    State(app): State<AppState>,
    Path(agent_id): Path<String>,
    body: Bytes,
) -> Response {
    let req: PublishRequest = match parse_body(&body) {
        Ok(r) => r,
        Err(resp) => return resp,
    };
    if req.doc.identity.agent_id != agent_id {
        return error_response(
            StatusCode::BAD_REQUEST,
            "agent_mismatch",
            format!(
                "document is for {}, path names {agent_id}",
                req.doc.identity.agent_id
            ),
        );
    }
    let now = (app.clock)();
    let mut store = app.store.write().expect("store lock");
    match store.publish(req, now) {
        Ok(ack) => json_response(StatusCode::OK, &ack),
        Err(e) => registry_error(e),
    }
}

async fn post_subscription(
    State(app): State<AppState>,
    Path(agent_id): Path<String>,
    body: Bytes,
) -> Response {
    let req: SubscribeRequest = match parse_body(&body) {
        Ok(r) => r,
        Err(resp) => return resp,
    };
    let mut store = app.store.write().expect("store lock");
    match store.subscribe(&agent_id, &req.webhook_url) {
        Ok(id) => json_response(
            StatusCode::CREATED,
            &SubscribeResponse {
                subscription_id: id,
                agent_id,
                webhook_url: req.webhook_url,
            },
        ),
        Err(e) => registry_error(e),
    }
}

async fn get_authorities(State(app): State<AppState>) -> Response {
    let store = app.store.read().expect("store lock");
    json_response(StatusCode::OK, store.authorities())
}

async fn post_revocation(State(app): State<AppState>, body: Bytes) -> Response {
    let entry: RevocationEntry = match parse_body(&body) {
        Ok(r) => r,
        Err(resp) => return resp,
    };
    let mut store = app.store.write().expect("store lock");
    match store.add_revocation(entry) {
        Ok(n) => json_response(
            StatusCode::CREATED,
            &RevocationAck {
                accepted: true,
                revocations: n,
            },
        ),
        Err(e) => registry_error(e),
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/agents/:agent_id/facts", get(get_facts).post(post_facts))
        .route("/agents/:agent_id/facts/:seq", get(get_version))
        .route("/agents/:agent_id/chain", get(get_chain))
        .route("/agents/:agent_id/subscriptions", post(post_subscription))
        .route("/authorities", get(get_authorities))
        .route("/revocations", post(post_revocation))
        .with_state(state)
}

/// Binds and serves until the process is stopped. `on_bound` receives the
/// actual address (useful with port 0).
pub async fn serve(
    state: AppState,
    addr: SocketAddr,
    on_bound: impl FnOnce(SocketAddr),
) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    on_bound(listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
