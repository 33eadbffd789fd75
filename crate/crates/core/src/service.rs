//! JSON API under `/api/v1`, optionally serving a static UI bundle.
//!
//! Reads clone the current state `Arc` and never wait on a writer. Writes
//! take the writer lock, run the mutation on a blocking thread, persist the
//! new snapshot and only then publish it.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex;
use tower_http::services::ServeDir;

use crate::casebook::Case;
use crate::config::EngineConfig;
use crate::confirmation::Response as MeetingResponse;
use crate::domain::{Client, Terminal, Visitor};
use crate::engine::{self, Applied, Engine, Mutation, OptimizerChoice, ViewKind};
use crate::error::{ApiError, EngineError};
use crate::scheduler;
use crate::store::{EngineState, SnapshotStore};

pub struct Shared {
    current: RwLock<Arc<EngineState>>,
    writer: Mutex<Option<SnapshotStore>>,
    config: Arc<EngineConfig>,
}

pub type AppState = Arc<Shared>;

impl Shared {
    pub fn new(engine: Engine) -> AppState {
        Arc::new(Shared {
            current: RwLock::new(Arc::new(engine.state().clone())),
            writer: Mutex::new(engine.store().cloned()),
            config: Arc::new(engine.config().clone()),
        })
    }

    pub fn snapshot(&self) -> Arc<EngineState> {
        self.current.read().expect("state lock").clone()
    }

    async fn mutate(&self, mutation: Mutation) -> Result<MutationResponse, EngineError> {
        let store = self.writer.lock().await;
        let state = self.snapshot();
        let config = self.config.clone();
        let store_copy = store.clone();
        let (next, result) = tokio::task::spawn_blocking(move || {
            let (next, applied) = engine::apply(&state, mutation, &config)?;
            if let Some(s) = &store_copy {
                s.save(&next)?;
            }
            Ok::<_, EngineError>((next, applied))
        })
        .await
        .expect("mutation task panicked")?;
        let revision = next.revision;
        *self.current.write().expect("state lock") = Arc::new(next);
        drop(store);
        Ok(MutationResponse { revision, result })
    }
}

#[derive(Debug, Serialize)]
pub struct MutationResponse {
    pub revision: u64,
    #[serde(flatten)]
    pub result: Applied,
}

struct Failure(EngineError);

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        Failure(e)
    }
}

fn status_for(code: &str) -> StatusCode {
    match code {
        "not_found" | "unknown_candidate" => StatusCode::NOT_FOUND,
        "not_generated" | "illegal_transition" | "already_exists" => StatusCode::CONFLICT,
        "rank_out_of_range" | "validation_failed" | "window_overflow" | "unranked_client" | "not_evaluated"
        | "terminal_ownership" | "invalid_case" | "failed_case" => StatusCode::UNPROCESSABLE_ENTITY,
        "io_error" | "snapshot_parse" | "unsupported_version" => StatusCode::INTERNAL_SERVER_ERROR,
        _ => StatusCode::BAD_REQUEST,
    }
}

impl IntoResponse for Failure {
    fn into_response(self) -> Response {
        let body: ApiError = self.0.to_api();
        (status_for(&body.code), Json(body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, Failure>;

fn body<T>(json: Result<Json<T>, JsonRejection>) -> Result<T, Failure> {
    json.map(|Json(v)| v).map_err(|e| Failure(EngineError::bad_request("body", e.body_text())))
}

fn query<T>(q: Result<Query<T>, QueryRejection>) -> Result<T, Failure> {
    q.map(|Query(v)| v).map_err(|e| Failure(EngineError::bad_request("query", e.body_text())))
}

#[derive(Debug, Deserialize)]
pub struct ClientBody {
    pub client_id: Option<String>,
    pub name: Option<String>,
    #[serde(default)]
    pub country: String,
    #[serde(default)]
    pub city: String,
    pub rank: Option<u8>,
    #[serde(default)]
    pub teu: u64,
}

impl ClientBody {
    fn into_client(self, id: Option<String>) -> Result<Client, Failure> {
        let client_id = id
            .or(self.client_id)
            .ok_or_else(|| Failure(EngineError::bad_request("client_id", "client_id required")))?;
        Ok(Client {
            name: self.name.unwrap_or_else(|| client_id.clone()),
            client_id,
            country: self.country,
            city: self.city,
            rank: self.rank,
            teu: self.teu,
            terminal_ids: Vec::new(),
        })
    }
}

#[derive(Debug, Deserialize)]
pub struct DeleteQuery {
    #[serde(default)]
    pub confirm: bool,
}

async fn list_clients(State(app): State<AppState>) -> Json<Vec<Client>> {
    Json(app.snapshot().roster.clone())
}

async fn get_client(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Client> {
    app.snapshot()
        .client(&id)
        .cloned()
        .map(Json)
        .ok_or(Failure(EngineError::NotFound { entity: "client", id }))
}

async fn create_client(
    State(app): State<AppState>,
    json: Result<Json<ClientBody>, JsonRejection>,
) -> Result<(StatusCode, Json<MutationResponse>), Failure> {
    let client = body(json)?.into_client(None)?;
    let r = app.mutate(Mutation::CreateClient(client)).await?;
    Ok((StatusCode::CREATED, Json(r)))
}

async fn update_client(
    State(app): State<AppState>,
    Path(id): Path<String>,
    json: Result<Json<ClientBody>, JsonRejection>,
) -> ApiResult<MutationResponse> {
    let client = body(json)?.into_client(Some(id))?;
    Ok(Json(app.mutate(Mutation::UpdateClient(client)).await?))
}

async fn delete_client(
    State(app): State<AppState>,
    Path(id): Path<String>,
    q: Result<Query<DeleteQuery>, QueryRejection>,
) -> ApiResult<MutationResponse> {
    let confirm = query(q)?.confirm;
    Ok(Json(app.mutate(Mutation::DeleteClient { client_id: id, confirm }).await?))
}

async fn list_terminals(State(app): State<AppState>) -> Json<Vec<Terminal>> {
    Json(app.snapshot().terminals.clone())
}

async fn get_terminal(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Terminal> {
    app.snapshot()
        .terminals
        .iter()
        .find(|t| t.terminal_id == id)
        .cloned()
        .map(Json)
        .ok_or(Failure(EngineError::NotFound { entity: "terminal", id }))
}

async fn create_terminal(
    State(app): State<AppState>,
    json: Result<Json<Terminal>, JsonRejection>,
) -> Result<(StatusCode, Json<MutationResponse>), Failure> {
    let r = app.mutate(Mutation::CreateTerminal(body(json)?)).await?;
    Ok((StatusCode::CREATED, Json(r)))
}

async fn update_terminal(
    State(app): State<AppState>,
    Path(id): Path<String>,
    json: Result<Json<Terminal>, JsonRejection>,
) -> ApiResult<MutationResponse> {
    let terminal = Terminal { terminal_id: id, ..body(json)? };
    Ok(Json(app.mutate(Mutation::UpdateTerminal(terminal)).await?))
}

async fn delete_terminal(
    State(app): State<AppState>,
    Path(id): Path<String>,
    q: Result<Query<DeleteQuery>, QueryRejection>,
) -> ApiResult<MutationResponse> {
    let confirm = query(q)?.confirm;
    Ok(Json(app.mutate(Mutation::DeleteTerminal { terminal_id: id, confirm }).await?))
}

async fn list_visitors(State(app): State<AppState>) -> Json<Vec<Visitor>> {
    Json(app.snapshot().visitors.clone())
}

async fn get_visitor(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Visitor> {
    app.snapshot()
        .visitors
        .iter()
        .find(|v| v.visitor_id == id)
        .cloned()
        .map(Json)
        .ok_or(Failure(EngineError::NotFound { entity: "visitor", id }))
}

async fn create_visitor(
    State(app): State<AppState>,
    json: Result<Json<Visitor>, JsonRejection>,
) -> Result<(StatusCode, Json<MutationResponse>), Failure> {
    let r = app.mutate(Mutation::CreateVisitor(body(json)?)).await?;
    Ok((StatusCode::CREATED, Json(r)))
}

async fn update_visitor(
    State(app): State<AppState>,
    Path(id): Path<String>,
    json: Result<Json<Visitor>, JsonRejection>,
) -> ApiResult<MutationResponse> {
    let visitor = Visitor { visitor_id: id, ..body(json)? };
    Ok(Json(app.mutate(Mutation::UpdateVisitor(visitor)).await?))
}

async fn delete_visitor(
    State(app): State<AppState>,
    Path(id): Path<String>,
    q: Result<Query<DeleteQuery>, QueryRejection>,
) -> ApiResult<MutationResponse> {
    let confirm = query(q)?.confirm;
    Ok(Json(app.mutate(Mutation::DeleteVisitor { visitor_id: id, confirm }).await?))
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankMode {
    Manual,
    Calculated,
}

#[derive(Debug, Deserialize)]
pub struct RankBody {
    pub mode: RankMode,
    pub value: Option<u8>,
}

async fn set_rank(
    State(app): State<AppState>,
    Path(id): Path<String>,
    json: Result<Json<RankBody>, JsonRejection>,
) -> ApiResult<MutationResponse> {
    let req = body(json)?;
    let mutation = match req.mode {
        RankMode::Manual => {
            let rank = req.value.ok_or(Failure(EngineError::bad_request("value", "manual mode needs a value")))?;
            Mutation::SetRank { client_id: id, rank }
        }
        RankMode::Calculated => Mutation::CalculateRank { client_id: id },
    };
    Ok(Json(app.mutate(mutation).await?))
}

#[derive(Debug, Deserialize)]
pub struct SuggestionQuery {
    pub variation_threshold_pct: Option<f64>,
}

async fn rank_suggestions(
    State(app): State<AppState>,
    q: Result<Query<SuggestionQuery>, QueryRejection>,
) -> ApiResult<Vec<crate::ranking::RankSuggestion>> {
    let pct = query(q)?.variation_threshold_pct;
    Ok(Json(engine::rank_suggestions(&app.snapshot(), &app.config, pct)?))
}

#[derive(Debug, Deserialize)]
pub struct GenerateBody {
    #[serde(default)]
    pub optimizer: OptimizerChoice,
    #[serde(default)]
    pub seed: u64,
}

async fn generate(
    State(app): State<AppState>,
    json: Result<Json<GenerateBody>, JsonRejection>,
) -> ApiResult<MutationResponse> {
    let req = body(json)?;
    Ok(Json(app.mutate(Mutation::GenerateSchedule { optimizer: req.optimizer, seed: req.seed }).await?))
}

#[derive(Debug, Deserialize)]
pub struct ViewQuery {
    pub view: Option<ViewKind>,
    pub horizon: Option<u32>,
}

async fn schedule_view(
    State(app): State<AppState>,
    q: Result<Query<ViewQuery>, QueryRejection>,
) -> ApiResult<engine::ScheduleView> {
    let q = query(q)?;
    let view = q.view.unwrap_or(ViewKind::ByDate);
    let horizon = q.horizon.unwrap_or(app.config.schedule.horizon_days);
    Ok(Json(engine::schedule_view(&app.snapshot(), &app.config, view, horizon)?))
}

async fn pending(State(app): State<AppState>) -> ApiResult<Vec<engine::DateRow>> {
    Ok(Json(engine::pending_meetings(&app.snapshot())?))
}

async fn budget(State(app): State<AppState>) -> ApiResult<scheduler::FeasibilityReport> {
    let state = app.snapshot();
    let report = scheduler::budget_check(&state.roster, &app.config.schedule).map_err(EngineError::from)?;
    Ok(Json(report))
}

#[derive(Debug, Deserialize)]
pub struct ResponseBody {
    pub status: MeetingResponse,
}

async fn respond(
    State(app): State<AppState>,
    Path(id): Path<String>,
    json: Result<Json<ResponseBody>, JsonRejection>,
) -> ApiResult<MutationResponse> {
    let req = body(json)?;
    Ok(Json(app.mutate(Mutation::RespondToMeeting { meeting_id: id, response: req.status }).await?))
}

async fn list_cases(State(app): State<AppState>) -> Json<Vec<Case>> {
    Json(app.snapshot().case_base.cases().to_vec())
}

#[derive(Debug, Deserialize, Default)]
pub struct RetainBody {
    #[serde(default)]
    pub notes: String,
}

async fn retain_case(
    State(app): State<AppState>,
    json: Result<Json<RetainBody>, JsonRejection>,
) -> ApiResult<MutationResponse> {
    let notes = body(json)?.notes;
    Ok(Json(app.mutate(Mutation::RetainCase { notes }).await?))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RevisionBody {
    pub revision: u64,
}

async fn revision(State(app): State<AppState>) -> Json<RevisionBody> {
    Json(RevisionBody { revision: app.snapshot().revision })
}

async fn unknown_route() -> Failure {
    Failure(EngineError::NotFound { entity: "route", id: String::new() })
}

pub fn api_router(app: AppState) -> Router {
    let api = Router::new()
        .route("/clients", get(list_clients).post(create_client))
        .route("/clients/{id}", get(get_client).put(update_client).delete(delete_client))
        .route("/clients/{id}/rank", post(set_rank))
        .route("/terminals", get(list_terminals).post(create_terminal))
        .route("/terminals/{id}", get(get_terminal).put(update_terminal).delete(delete_terminal))
        .route("/visitors", get(list_visitors).post(create_visitor))
        .route("/visitors/{id}", get(get_visitor).put(update_visitor).delete(delete_visitor))
        .route("/rank-suggestions", get(rank_suggestions))
        .route("/schedule", get(schedule_view))
        .route("/schedule/generate", post(generate))
        .route("/schedule/pending", get(pending))
        .route("/schedule/check", get(budget))
        .route("/schedule/meetings/{id}/response", post(respond))
        .route("/cases", get(list_cases).post(retain_case))
        .route("/state/revision", get(revision))
        .fallback(unknown_route)
        .with_state(app);
    Router::new().nest("/api/v1", api)
}

/// The API plus, when given, a static UI directory at `/`.
pub fn router(app: AppState, ui_dir: Option<PathBuf>) -> Router {
    let api = api_router(app);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

pub async fn serve(engine: Engine, addr: SocketAddr, ui_dir: Option<PathBuf>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(Shared::new(engine), ui_dir)).await
}
