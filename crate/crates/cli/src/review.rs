//! Review HTTP API over a workspace, plus optional static UI files.

use std::collections::HashMap;
use std::path::{Component, Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{SecondsFormat, Utc};
use serde::Deserialize;
use serde_json::{json, Value};

use ruleflex_core::review::{ReviewAction, ReviewDecision};
use ruleflex_core::workspace::{EntryKind, Workspace, WorkspaceError};
use ruleflex_core::{serialize_dsl, RuleSet};
use ruleflex_gateway::GenerationRun;

use crate::commands::{self, Comparison, GenerateArgs};
use crate::{ApiError, CliError};

pub struct ReviewState {
    pub workspace: Workspace,
    /// Replay fixture directory for `POST /api/generate`; live provider when absent.
    pub replay: Option<PathBuf>,
    pub ui_dir: Option<PathBuf>,
    locks: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
    /// Generation extends the shared registry config; one at a time.
    generate_lock: tokio::sync::Mutex<()>,
}

impl ReviewState {
    pub fn new(workspace: Workspace, replay: Option<PathBuf>, ui_dir: Option<PathBuf>) -> Self {
        ReviewState { workspace, replay, ui_dir, locks: Mutex::default(), generate_lock: tokio::sync::Mutex::new(()) }
    }

    fn lock_for(&self, id: &str) -> Arc<tokio::sync::Mutex<()>> {
        self.locks.lock().expect("lock map poisoned").entry(id.to_string()).or_default().clone()
    }
}

pub fn router(state: ReviewState) -> Router {
    Router::new()
        .route("/api/rulesets", get(list_rulesets))
        .route("/api/rulesets/{id}", get(get_ruleset))
        .route("/api/rulesets/{id}/review", post(review))
        .route("/api/compare", get(compare))
        .route("/api/generate", post(generate))
        .route("/api/runs", get(list_runs))
        .route("/api/runs/{id}", get(get_run))
        .fallback(static_file)
        .with_state(Arc::new(state))
}

type Shared = State<Arc<ReviewState>>;

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    payload.map(|Json(v)| v).map_err(|e| ApiError::bad_request(e.body_text()))
}

fn cli_error(e: CliError) -> ApiError {
    match e {
        CliError::Usage(m) => ApiError::bad_request(m),
        CliError::Domain(m) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "DOMAIN_ERROR", m),
    }
}

async fn list_rulesets(State(s): Shared) -> Result<Json<Value>, ApiError> {
    let mut out = Vec::new();
    for entry in s.workspace.list(EntryKind::Ruleset)? {
        let rs: RuleSet = entry.decode()?;
        out.push(json!({
            "id": rs.id,
            "name": rs.name,
            "domain": rs.domain,
            "provenance": rs.provenance,
            "rule_count": rs.rules.len(),
            "condition_count": rs.condition_count(),
            "created_at": entry.created_at,
        }));
    }
    Ok(Json(Value::Array(out)))
}

async fn get_ruleset(State(s): Shared, UrlPath(id): UrlPath<String>) -> Result<Json<Value>, ApiError> {
    let entry = s.workspace.load_kind(EntryKind::Ruleset, &id)?;
    let rs: RuleSet = entry.decode()?;
    Ok(Json(json!({
        "id": rs.id,
        "created_at": entry.created_at,
        "ruleset": rs,
        "dsl": serialize_dsl(std::slice::from_ref(&rs)),
        "children": s.workspace.children(&rs.id)?,
    })))
}

#[derive(Deserialize)]
struct CompareQuery {
    candidate: String,
    reference: String,
}

async fn compare(State(s): Shared, query: Result<Query<CompareQuery>, axum::extract::rejection::QueryRejection>) -> Result<Json<Value>, ApiError> {
    let Query(q) = query.map_err(|e| ApiError::bad_request(e.body_text()))?;
    // Lookup failures map to 404 here rather than as a generic domain error.
    s.workspace.load(&q.candidate)?;
    s.workspace.load(&q.reference)?;
    let value = match commands::compare_ids(&s.workspace, &[q.candidate], &[q.reference]).map_err(cli_error)? {
        Comparison::Pair(r) => serde_json::to_value(r),
        Comparison::Corpus(c) => serde_json::to_value(c),
    };
    Ok(Json(value.map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "INTERNAL", e.to_string()))?))
}

#[derive(Deserialize)]
struct GenerateBody {
    domain: Option<String>,
    objective: Option<String>,
    strategy: String,
    #[serde(default = "one")]
    runs: usize,
    model: Option<String>,
}

fn one() -> usize {
    1
}

async fn generate(State(s): Shared, payload: Result<Json<GenerateBody>, JsonRejection>) -> Result<Response, ApiError> {
    let b = body(payload)?;
    let args = GenerateArgs {
        domain: b.domain,
        objective: b.objective,
        strategy: b.strategy,
        model: b.model,
        runs: b.runs,
        replay: s.replay.is_some(),
        fixtures: s.replay.clone(),
        ..GenerateArgs::default()
    };
    let _guard = s.generate_lock.lock().await;
    let runs = commands::generate(&s.workspace, &args).await.map_err(cli_error)?;
    let out: Vec<Value> = runs.iter().map(|r| commands::run_summary(&r.id, &r.run)).collect();
    Ok((StatusCode::CREATED, Json(Value::Array(out))).into_response())
}

#[derive(Deserialize)]
struct ReviewBody {
    #[serde(default)]
    actions: Vec<ReviewAction>,
    #[serde(default)]
    reviewer: Option<String>,
    #[serde(default)]
    timestamp: Option<String>,
}

async fn review(
    State(s): Shared,
    UrlPath(id): UrlPath<String>,
    payload: Result<Json<ReviewBody>, JsonRejection>,
) -> Result<Response, ApiError> {
    let b = body(payload)?;
    let parent = s.workspace.load_kind(EntryKind::Ruleset, &id)?;
    let lock = s.lock_for(&parent.id);
    let _guard = lock.lock().await;
    let decision = ReviewDecision {
        ruleset_id: parent.id.clone(),
        resulting_ruleset_id: None,
        actions: b.actions,
        reviewer: b.reviewer.unwrap_or_else(|| "anonymous".into()),
        timestamp: b.timestamp.unwrap_or_else(|| Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true)),
    };
    match s.workspace.apply_review(&decision) {
        Ok(edited) => Ok((StatusCode::CREATED, Json(json!({"new_id": edited.id, "diagnostics": []}))).into_response()),
        Err(WorkspaceError::ValidationFailed(diags)) => Err(ApiError {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            code: "VALIDATION_FAILED",
            message: format!("the edited rule set has {} problem(s)", diags.len()),
            diagnostics: serde_json::to_value(diags).ok(),
        }),
        Err(e) => Err(e.into()),
    }
}

async fn list_runs(State(s): Shared) -> Result<Json<Value>, ApiError> {
    let mut out = Vec::new();
    for entry in s.workspace.list(EntryKind::Run)? {
        out.push(commands::run_summary(&entry.id, &entry.decode::<GenerationRun>()?));
    }
    Ok(Json(Value::Array(out)))
}

async fn get_run(State(s): Shared, UrlPath(id): UrlPath<String>) -> Result<Json<Value>, ApiError> {
    let entry = s.workspace.load_kind(EntryKind::Run, &id)?;
    Ok(Json(json!({"id": entry.id, "created_at": entry.created_at, "run": entry.payload})))
}

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("html") => "text/html; charset=utf-8",
        Some("js" | "mjs") => "text/javascript; charset=utf-8",
        Some("css") => "text/css; charset=utf-8",
        Some("json" | "map") => "application/json",
        Some("svg") => "image/svg+xml",
        Some("png") => "image/png",
        Some("ico") => "image/x-icon",
        Some("woff2") => "font/woff2",
        _ => "application/octet-stream",
    }
}

/// Files under `ui_dir`; unknown non-API paths fall back to `index.html`.
async fn static_file(State(s): Shared, uri: Uri) -> Response {
    let not_found = || ApiError::new(StatusCode::NOT_FOUND, "NOT_FOUND", format!("no route for {}", uri.path())).into_response();
    let Some(root) = &s.ui_dir else { return not_found() };
    if uri.path().starts_with("/api/") {
        return not_found();
    }
    let rel = Path::new(uri.path().trim_start_matches('/'));
    if rel.components().any(|c| !matches!(c, Component::Normal(_))) {
        return not_found();
    }
    let mut path = root.join(rel);
    if !path.is_file() {
        path = root.join("index.html");
    }
    match tokio::fs::read(&path).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, content_type(&path))], bytes).into_response(),
        Err(_) => not_found(),
    }
}
