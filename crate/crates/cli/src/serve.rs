//! Evaluation service for one approved rule set.

use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::{json, Value};

use ruleflex_core::apigen::{generate_descriptor, ApiGenError};
use ruleflex_core::{evaluate, EvalError, Record, RuleSet, VariableRegistry};

use crate::ApiError;

/// Routes `POST /evaluate` and `GET /health`. Refuses unreviewed rule sets.
pub fn router(rs: RuleSet, registry: &VariableRegistry) -> Result<Router, ApiGenError> {
    generate_descriptor(&rs, registry)?;
    Ok(Router::new()
        .route("/evaluate", post(evaluate_record))
        .route("/health", get(health))
        .with_state(Arc::new(rs)))
}

async fn health(State(rs): State<Arc<RuleSet>>) -> Json<Value> {
    Json(json!({"status": "ok", "ruleset_id": rs.id}))
}

async fn evaluate_record(
    State(rs): State<Arc<RuleSet>>,
    body: Result<Json<Value>, JsonRejection>,
) -> Result<Json<Value>, ApiError> {
    let Json(body) = body.map_err(|e| ApiError::bad_request(e.body_text()))?;
    if !body.is_object() {
        return Err(ApiError::bad_request("request body must be a JSON object of variable values"));
    }
    let record: Record = serde_json::from_value(body).map_err(|e| ApiError::bad_request(e.to_string()))?;
    match evaluate(&rs, &record) {
        Ok(trace) => Ok(Json(json!({"outcome": trace.outcome, "matched_rule": trace.matched_rule}))),
        Err(e) => {
            let code = match e {
                EvalError::MissingVariable(_) => "MISSING_VARIABLE",
                EvalError::TypeMismatch(_) => "TYPE_MISMATCH",
            };
            Err(ApiError::new(StatusCode::BAD_REQUEST, code, e.to_string()))
        }
    }
}
