use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};

use ruleflex_core::prompt::{render_prompt, PromptStrategy, TRIAGE_OBJECTIVE};
use ruleflex_core::workspace::{EntryKind, Workspace};
use ruleflex_core::{OutcomeSpec, Provenance};
use ruleflex_gateway::*;

const RESPONSE: &str = "```python
def triage(body_temperature, cough):
    if body_temperature >= 38 and cough == True:
        status = 'RED'
    elif body_temperature >= 37.5:
        status = 'AMBER'
    else:
        status = 'GREEN'
```";

fn request(runs: usize) -> GenerateRequest {
    GenerateRequest {
        strategy: PromptStrategy::FewShot,
        domain: "Medical".into(),
        objective: TRIAGE_OBJECTIVE.into(),
        runs,
        outcome: Some(OutcomeSpec::triage()),
    }
}

fn prompt_hash() -> String {
    render_prompt(PromptStrategy::FewShot, "Medical", TRIAGE_OBJECTIVE).unwrap().hash()
}

#[derive(Clone)]
struct Mock {
    calls: Arc<AtomicUsize>,
    fail_on: Option<usize>,
}

async fn completions(State(mock): State<Mock>, headers: HeaderMap, Json(body): Json<Value>) -> (StatusCode, Json<Value>) {
    let n = mock.calls.fetch_add(1, Ordering::SeqCst);
    assert_eq!(headers["authorization"], "Bearer sk-test");
    assert_eq!(body["temperature"], 1.0);
    assert_eq!(body["max_tokens"], 3000);
    assert_eq!(body["messages"][0]["role"], "user");
    if Some(n) == mock.fail_on {
        return (StatusCode::TOO_MANY_REQUESTS, Json(json!({"error": {"message": "slow down"}})));
    }
    (StatusCode::OK, Json(json!({"choices": [{"message": {"role": "assistant", "content": RESPONSE}}]})))
}

async fn spawn_mock(fail_on: Option<usize>) -> (String, Arc<AtomicUsize>) {
    let calls = Arc::new(AtomicUsize::new(0));
    let app = Router::new()
        .route("/v1/chat/completions", post(completions))
        .with_state(Mock { calls: calls.clone(), fail_on });
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    (format!("http://{addr}/v1/chat/completions"), calls)
}

fn http_config(endpoint: String, env: &str) -> ProviderConfig {
    ProviderConfig { endpoint, credential_env: env.into(), ..ProviderConfig::default() }
}

#[tokio::test]
async fn http_provider_runs_and_parses() {
    let (endpoint, calls) = spawn_mock(None).await;
    std::env::set_var("RULEFLEX_TEST_KEY_OK", "sk-test");
    let dir = tempfile::tempdir().unwrap();
    let ws = Workspace::open(dir.path()).unwrap();
    let runs = generate(&HttpProvider::new(), &http_config(endpoint, "RULEFLEX_TEST_KEY_OK"), &request(3), &ws)
        .await
        .unwrap();
    assert_eq!(calls.load(Ordering::SeqCst), 3);
    assert_eq!(runs.iter().map(|r| r.run.run_index).collect::<Vec<_>>(), vec![0, 1, 2]);
    let run = &runs[0].run;
    assert_eq!(run.response.as_deref(), Some(RESPONSE));
    assert_eq!(run.ruleset_ids.len(), 1);
    let rs = ws.load_ruleset(&run.ruleset_ids[0]).unwrap();
    assert_eq!(rs.rules.len(), 3);
    assert_eq!(rs.provenance, Provenance::Generated { run: run.run_key.clone() });

    let stored = ws.load_kind(EntryKind::Run, &runs[0].id).unwrap();
    assert!(!stored.payload.to_string().contains("sk-test"));
    assert_eq!(ws.list(EntryKind::Run).unwrap().len(), 3);
}

#[tokio::test]
async fn provider_error_is_recorded_and_other_runs_proceed() {
    let (endpoint, _) = spawn_mock(Some(0)).await;
    std::env::set_var("RULEFLEX_TEST_KEY_ERR", "sk-test");
    let dir = tempfile::tempdir().unwrap();
    let ws = Workspace::open(dir.path()).unwrap();
    let runs = generate(&HttpProvider::new(), &http_config(endpoint, "RULEFLEX_TEST_KEY_ERR"), &request(2), &ws)
        .await
        .unwrap();
    let failed: Vec<&GenerationRun> = runs.iter().map(|r| &r.run).filter(|r| r.error.is_some()).collect();
    assert_eq!(failed.len(), 1);
    assert_eq!(failed[0].error.as_ref().unwrap().status, Some(429));
    assert!(failed[0].error.as_ref().unwrap().message.contains("slow down"));
    assert!(failed[0].ruleset_ids.is_empty());
    assert_eq!(runs.iter().filter(|r| r.run.response.is_some()).count(), 1);
}

#[tokio::test]
async fn missing_credential_makes_no_calls() {
    let (endpoint, calls) = spawn_mock(None).await;
    let dir = tempfile::tempdir().unwrap();
    let ws = Workspace::open(dir.path()).unwrap();
    let err = generate(&HttpProvider::new(), &http_config(endpoint, "RULEFLEX_TEST_KEY_UNSET"), &request(2), &ws)
        .await
        .unwrap_err();
    assert!(matches!(err, GatewayError::CredentialMissing(_)));
    assert_eq!(calls.load(Ordering::SeqCst), 0);
    assert!(ws.list(EntryKind::Run).unwrap().is_empty());
}

#[tokio::test]
async fn transport_failure_is_recorded() {
    std::env::set_var("RULEFLEX_TEST_KEY_DOWN", "sk-test");
    // Nothing listens on a freshly released port.
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let dir = tempfile::tempdir().unwrap();
    let ws = Workspace::open(dir.path()).unwrap();
    let config = http_config(format!("http://127.0.0.1:{port}/v1/chat/completions"), "RULEFLEX_TEST_KEY_DOWN");
    let runs = generate(&HttpProvider::new(), &config, &request(1), &ws).await.unwrap();
    assert!(runs[0].run.error.as_ref().unwrap().message.contains("transport"));
}

fn replay_dir(runs: usize) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let model_dir = dir.path().join("gpt-4");
    std::fs::create_dir_all(&model_dir).unwrap();
    for i in 0..runs {
        let text = RESPONSE.replace("37.5", &format!("37.{i}"));
        std::fs::write(model_dir.join(format!("{}.{i}.txt", prompt_hash())), text).unwrap();
    }
    dir
}

#[tokio::test]
async fn replay_serves_fixtures_in_run_order() {
    let fixtures = replay_dir(10);
    let dir = tempfile::tempdir().unwrap();
    let ws = Workspace::open(dir.path()).unwrap();
    let provider = ReplayProvider::new(fixtures.path());
    let runs = generate(&provider, &ProviderConfig::default(), &request(10), &ws).await.unwrap();
    assert_eq!(runs.iter().map(|r| r.run.run_index).collect::<Vec<_>>(), (0..10).collect::<Vec<_>>());
    for r in &runs {
        let path = fixtures.path().join("gpt-4").join(format!("{}.{}.txt", prompt_hash(), r.run.run_index));
        assert_eq!(r.run.response.as_deref().unwrap().as_bytes(), std::fs::read(path).unwrap().as_slice());
    }
}

#[tokio::test]
async fn replay_is_deterministic_across_workspaces() {
    let fixtures = replay_dir(3);
    let provider = ReplayProvider::new(fixtures.path());
    let mut ids = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        let ws = Workspace::open(dir.path()).unwrap();
        let runs = generate(&provider, &ProviderConfig::default(), &request(3), &ws).await.unwrap();
        ids.push(runs.iter().flat_map(|r| r.run.ruleset_ids.clone()).collect::<Vec<_>>());
    }
    assert_eq!(ids[0].len(), 3);
    assert_eq!(ids[0], ids[1]);
}

#[tokio::test]
async fn replay_miss_is_a_hard_error() {
    let fixtures = replay_dir(2);
    let dir = tempfile::tempdir().unwrap();
    let ws = Workspace::open(dir.path()).unwrap();
    let err = generate(&ReplayProvider::new(fixtures.path()), &ProviderConfig::default(), &request(3), &ws)
        .await
        .unwrap_err();
    assert!(matches!(err, GatewayError::FixtureMissing { .. }));
    assert!(ws.list(EntryKind::Run).unwrap().is_empty());
}

#[tokio::test]
async fn unshared_fixture_falls_back_to_plain_hash() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join(format!("{}.txt", prompt_hash())), RESPONSE).unwrap();
    let ws_dir = tempfile::tempdir().unwrap();
    let ws = Workspace::open(ws_dir.path()).unwrap();
    let runs = generate(&ReplayProvider::new(dir.path()), &ProviderConfig::default(), &request(2), &ws).await.unwrap();
    assert_eq!(runs[0].run.response, runs[1].run.response);
    // Same response, different run index: distinct run keys, distinct rule set ids.
    assert_ne!(runs[0].run.run_key, runs[1].run.run_key);
    assert_ne!(runs[0].run.ruleset_ids, runs[1].run.ruleset_ids);
}

#[test]
fn objective_levels_select_the_outcome() {
    assert!(outcome_for_objective(TRIAGE_OBJECTIVE, &OutcomeSpec::triage()).is_some());
    assert!(outcome_for_objective("Fraud detection", &OutcomeSpec::triage()).is_none());
}
