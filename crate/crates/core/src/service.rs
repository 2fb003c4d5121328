//! HTTP JSON service over one plan and one event log.
//!
//! Reads take a snapshot under a shared lock. Mutations are serialized by
//! the log writer's mutex: the event is prepared against the current state,
//! appended and synced to the log, and only then applied and acknowledged.
//! The ledger lock is not held during the disk write, so reads stay
//! responsive while a mutation is in flight.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use chrono::Utc;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::{
    AdmissionDecision, CandidateSite, EventLog, LedgerError, LedgerEvent, LockMode, ProgressReport,
    RecruitmentLedger,
};
use crate::plan::{load_plan_file, save_plan, PlanError, QuotaPlan};

fn default_bind() -> String {
    "127.0.0.1:8080".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceConfig {
    pub plan: PathBuf,
    pub event_log: PathBuf,
    #[serde(default = "default_bind")]
    pub bind: String,
    #[serde(default)]
    pub read_only: bool,
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("service config {path}: {message}")]
    Config { path: String, message: String },
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },
    #[error("server error: {0}")]
    Server(#[source] std::io::Error),
}

impl ServiceConfig {
    pub fn load(path: &std::path::Path) -> Result<Self, ServiceError> {
        let config_err = |message: String| ServiceError::Config {
            path: path.display().to_string(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| config_err(e.to_string()))?;
        let mut config: ServiceConfig =
            serde_json::from_str(&text).map_err(|e| config_err(e.to_string()))?;
        // Relative paths are relative to the config file.
        if let Some(dir) = path.parent() {
            if config.plan.is_relative() {
                config.plan = dir.join(&config.plan);
            }
            if config.event_log.is_relative() {
                config.event_log = dir.join(&config.event_log);
            }
        }
        Ok(config)
    }
}

/// Shared state behind the router.
pub struct AppState {
    plan: Arc<QuotaPlan>,
    plan_document: String,
    ledger: RwLock<RecruitmentLedger>,
    /// `None` in read-only mode.
    writer: Option<Mutex<EventLog>>,
    pub warnings: Vec<String>,
}

impl AppState {
    /// Loads the plan, locks the log and replays it. A log written under a
    /// different plan, or one that fails to replay, is refused.
    pub fn open(config: &ServiceConfig) -> Result<Self, ServiceError> {
        let (plan, warnings) = load_plan_file(&config.plan)?;
        let plan = Arc::new(plan);
        let mode = if config.read_only {
            LockMode::Read
        } else {
            LockMode::Write
        };
        let log = EventLog::open(&config.event_log, mode)?;
        let ledger = RecruitmentLedger::replay(plan.clone(), log.read()?)?;
        Ok(AppState {
            plan_document: save_plan(&plan),
            plan,
            ledger: RwLock::new(ledger),
            writer: (!config.read_only).then(|| Mutex::new(log)),
            warnings,
        })
    }

    pub fn plan(&self) -> &QuotaPlan {
        &self.plan
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, RecruitmentLedger> {
        self.ledger.read().unwrap_or_else(|e| e.into_inner())
    }

    pub fn status(&self) -> ProgressReport {
        self.read().status()
    }

    pub fn events_since(&self, since: u64) -> Vec<LedgerEvent> {
        self.read().events_since(since).to_vec()
    }

    pub fn what_if(&self, site: &CandidateSite) -> Result<AdmissionDecision, ApiError> {
        Ok(self.read().what_if(site)?)
    }

    fn mutate<T>(
        &self,
        prepare: impl FnOnce(&RecruitmentLedger) -> Result<(LedgerEvent, T), LedgerError>,
    ) -> Result<T, ApiError> {
        let writer = self.writer.as_ref().ok_or_else(ApiError::read_only)?;
        let mut log = writer.lock().unwrap_or_else(|e| e.into_inner());
        let (event, out) = prepare(&self.read())?;
        log.append(&event)?;
        self.ledger
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .apply(event)?;
        Ok(out)
    }

    pub fn admit(&self, site: &CandidateSite) -> Result<AdmissionDecision, ApiError> {
        self.mutate(|ledger| ledger.prepare_admit(site, Utc::now()))
    }

    pub fn withdraw(&self, site_id: &str) -> Result<WithdrawalAck, ApiError> {
        self.mutate(|ledger| {
            let event = ledger.prepare_withdraw(site_id, Utc::now())?;
            let ack = WithdrawalAck {
                site_id: site_id.to_owned(),
                seq: event.seq,
                profile: event.profile.clone(),
            };
            Ok((event, ack))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WithdrawalAck {
    pub site_id: String,
    pub seq: u64,
    pub profile: crate::ledger::CategoryProfile,
}

/// Error body: `{code, message, detail}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default)]
    pub detail: serde_json::Value,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                code: code.into(),
                message: message.into(),
                detail: serde_json::Value::Null,
            },
        }
    }

    fn read_only() -> Self {
        ApiError::new(StatusCode::FORBIDDEN, "read_only", "service is running read-only")
    }
}

impl From<LedgerError> for ApiError {
    fn from(e: LedgerError) -> Self {
        let message = e.to_string();
        let (status, code) = match &e {
            e if e.is_classification() => (StatusCode::UNPROCESSABLE_ENTITY, "classification_failed"),
            LedgerError::DuplicateSite(_) => (StatusCode::CONFLICT, "duplicate_site"),
            LedgerError::UnknownSite(_) => (StatusCode::NOT_FOUND, "unknown_site"),
            LedgerError::Io { .. } => (StatusCode::INTERNAL_SERVER_ERROR, "log_write_failed"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "ledger_error"),
        };
        let mut err = ApiError::new(status, code, message);
        err.body.detail = match e {
            LedgerError::MissingResponse(m)
            | LedgerError::ExpectedLevel(m)
            | LedgerError::ExpectedNumber(m)
            | LedgerError::NonFinite { moderator: m } => serde_json::json!({ "moderator": m }),
            LedgerError::UnknownLevel { moderator, level } => {
                serde_json::json!({ "moderator": moderator, "level": level })
            }
            LedgerError::DuplicateSite(id) | LedgerError::UnknownSite(id) => {
                serde_json::json!({ "site_id": id })
            }
            _ => serde_json::Value::Null,
        };
        err
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "invalid_body", e.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "invalid_query", e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type Shared = Arc<AppState>;

async fn get_plan(State(state): State<Shared>) -> Response {
    (
        [(axum::http::header::CONTENT_TYPE, "application/json")],
        state.plan_document.clone(),
    )
        .into_response()
}

async fn get_status(State(state): State<Shared>) -> Json<ProgressReport> {
    Json(state.status())
}

async fn post_whatif(
    State(state): State<Shared>,
    body: Result<Json<CandidateSite>, JsonRejection>,
) -> Result<Json<AdmissionDecision>, ApiError> {
    let Json(site) = body?;
    Ok(Json(state.what_if(&site)?))
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
    })?
}

async fn post_site(
    State(state): State<Shared>,
    body: Result<Json<CandidateSite>, JsonRejection>,
) -> Result<Json<AdmissionDecision>, ApiError> {
    let Json(site) = body?;
    Ok(Json(blocking(move || state.admit(&site)).await?))
}

async fn delete_site(
    State(state): State<Shared>,
    Path(id): Path<String>,
) -> Result<Json<WithdrawalAck>, ApiError> {
    Ok(Json(blocking(move || state.withdraw(&id)).await?))
}

#[derive(Debug, Deserialize)]
struct EventsQuery {
    #[serde(default)]
    since: u64,
}

async fn get_events(
    State(state): State<Shared>,
    query: Result<Query<EventsQuery>, QueryRejection>,
) -> Result<Json<Vec<LedgerEvent>>, ApiError> {
    let Query(q) = query?;
    Ok(Json(state.events_since(q.since)))
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/plan", get(get_plan))
        .route("/status", get(get_status))
        .route("/whatif", post(post_whatif))
        .route("/sites", post(post_site))
        .route("/sites/{id}", delete(delete_site))
        .route("/events", get(get_events))
        .fallback(not_found)
        .with_state(state)
}

/// Opens the state, binds, calls `on_ready` with the bound address and
/// serves until ctrl-c.
pub async fn serve(
    config: &ServiceConfig,
    on_ready: impl FnOnce(SocketAddr, &AppState),
) -> Result<(), ServiceError> {
    let state = Arc::new(AppState::open(config)?);
    let listener = tokio::net::TcpListener::bind(&config.bind)
        .await
        .map_err(|source| ServiceError::Bind {
            addr: config.bind.clone(),
            source,
        })?;
    let addr = listener.local_addr().map_err(ServiceError::Server)?;
    on_ready(addr, &state);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(ServiceError::Server)
}
