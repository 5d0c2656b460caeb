use chrono::{SecondsFormat, Utc};
use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};

use ruleflex_core::canonical::sha256_hex;
use ruleflex_core::code::{parse_response, ParseDiagnostic};
use ruleflex_core::prompt::{render_prompt, PromptStrategy, RenderedPrompt};
use ruleflex_core::workspace::{EntryKind, Workspace, WorkspaceError};
use ruleflex_core::{Diagnostic, OutcomeSpec, Provenance, VariableSpec};

use crate::provider::{CompletionRequest, Provider};
use crate::{GatewayError, ProviderConfig};

const MAX_IN_FLIGHT: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunFailure {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<u16>,
    pub message: String,
}

/// A parsed rule set the workspace refused to store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedRuleSet {
    pub name: String,
    pub diagnostics: Vec<Diagnostic>,
}

/// One prompt/response interaction and what was recovered from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRun {
    /// Stable key over model, strategy, prompt and response; the `run` of
    /// every rule set parsed from this response.
    pub run_key: String,
    pub run_index: usize,
    pub strategy: PromptStrategy,
    pub provider: String,
    pub config: ProviderConfig,
    pub domain: String,
    pub objective: String,
    pub prompt: RenderedPrompt,
    pub prompt_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<RunFailure>,
    pub started_at: String,
    pub finished_at: String,
    pub ruleset_ids: Vec<String>,
    pub diagnostics: Vec<ParseDiagnostic>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rejected: Vec<RejectedRuleSet>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub new_variables: Vec<VariableSpec>,
}

#[derive(Debug, Clone)]
pub struct GenerateRequest {
    pub strategy: PromptStrategy,
    pub domain: String,
    pub objective: String,
    pub runs: usize,
    /// Outcome levels responses must use; inferred per response when absent.
    pub outcome: Option<OutcomeSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredRun {
    /// Workspace id of the run entry.
    pub id: String,
    pub run: GenerationRun,
}

/// `spec` when the objective names every one of its levels, as the triage
/// objective does ("GREEN, AMBER, RED").
pub fn outcome_for_objective(objective: &str, spec: &OutcomeSpec) -> Option<OutcomeSpec> {
    let words: Vec<&str> = objective.split(|c: char| !c.is_alphanumeric() && c != '_').collect();
    spec.levels.iter().all(|l| words.contains(&l.as_str())).then(|| spec.clone())
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

fn run_key(config: &ProviderConfig, strategy: PromptStrategy, prompt_hash: &str, run_index: usize, outcome: &str) -> String {
    sha256_hex(format!("{}\n{}\n{}\n{}\n{}", config.model, strategy.as_str(), prompt_hash, run_index, outcome).as_bytes())
}

/// Calls the provider `request.runs` times (up to four in flight), parses each
/// response and persists rule sets and runs in run order. A failed call is
/// recorded on its run and the remaining runs still proceed.
pub async fn generate(
    provider: &dyn Provider,
    config: &ProviderConfig,
    request: &GenerateRequest,
    workspace: &Workspace,
) -> Result<Vec<StoredRun>, GatewayError> {
    if request.runs == 0 {
        return Err(GatewayError::InvalidConfig("runs must be at least 1".into()));
    }
    config.validate()?;
    provider.ready(config)?;
    let prompt = render_prompt(request.strategy, &request.domain, &request.objective)?;
    let prompt_hash = prompt.hash();

    let calls = stream::iter(0..request.runs)
        .map(|run_index| {
            let prompt = &prompt;
            let prompt_hash = &prompt_hash;
            async move {
                let started_at = now();
                let req = CompletionRequest { messages: &prompt.messages, config, prompt_hash, run_index };
                let result = provider.complete(&req).await;
                (run_index, started_at, result, now())
            }
        })
        .buffered(MAX_IN_FLIGHT)
        .collect::<Vec<_>>()
        .await;

    // A missing fixture aborts before anything is persisted.
    if let Some(pos) = calls.iter().position(|c| matches!(c.2, Err(GatewayError::FixtureMissing { .. }))) {
        let (_, _, result, _) = calls.into_iter().nth(pos).expect("position is in range");
        return Err(result.expect_err("matched as an error"));
    }

    let mut out = Vec::with_capacity(calls.len());
    for (run_index, started_at, result, finished_at) in calls {
        let (response, error) = match result {
            Ok(text) => (Some(text), None),
            Err(GatewayError::Provider { status, body }) => {
                (None, Some(RunFailure { status: Some(status), message: body }))
            }
            Err(e) => (None, Some(RunFailure { status: None, message: e.to_string() })),
        };
        let outcome_hash = match (&response, &error) {
            (Some(text), _) => sha256_hex(text.as_bytes()),
            (_, Some(f)) => sha256_hex(format!("error:{:?}:{}", f.status, f.message).as_bytes()),
            _ => unreachable!(),
        };
        let key = run_key(config, request.strategy, &prompt_hash, run_index, &outcome_hash);
        let mut run = GenerationRun {
            run_key: key.clone(),
            run_index,
            strategy: request.strategy,
            provider: provider.kind().to_string(),
            config: config.clone(),
            domain: request.domain.clone(),
            objective: request.objective.clone(),
            prompt: prompt.clone(),
            prompt_hash: prompt_hash.clone(),
            response,
            error,
            started_at,
            finished_at,
            ruleset_ids: Vec::new(),
            diagnostics: Vec::new(),
            rejected: Vec::new(),
            new_variables: Vec::new(),
        };
        if let Some(text) = &run.response {
            let parsed = parse_response(
                text,
                &workspace.registry()?,
                request.outcome.as_ref(),
                &request.domain,
                &request.objective,
                &Provenance::Generated { run: key },
            );
            workspace.extend_registry(&parsed.new_variables)?;
            for rs in &parsed.rulesets {
                match workspace.store_ruleset(rs) {
                    Ok(id) => run.ruleset_ids.push(id),
                    Err(WorkspaceError::ValidationFailed(diagnostics)) => {
                        run.rejected.push(RejectedRuleSet { name: rs.name.clone(), diagnostics })
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            run.diagnostics = parsed.diagnostics;
            run.new_variables = parsed.new_variables;
        }
        let id = workspace.store_value(EntryKind::Run, &run)?;
        out.push(StoredRun { id, run });
    }
    Ok(out)
}
