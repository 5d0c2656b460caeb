//! Chat-completion providers, replay fixtures and generation runs.

mod config;
pub mod provider;
mod run;

use thiserror::Error;

use ruleflex_core::prompt::PromptError;
use ruleflex_core::workspace::WorkspaceError;

pub use config::{ProviderConfig, DEFAULT_CREDENTIAL_ENV};
pub use provider::{CompletionRequest, HttpProvider, Provider, ReplayProvider};
pub use run::{generate, outcome_for_objective, GenerateRequest, GenerationRun, RejectedRuleSet, RunFailure, StoredRun};

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("no credential: environment variable {0} is unset or empty")]
    CredentialMissing(String),
    #[error("invalid provider configuration: {0}")]
    InvalidConfig(String),
    #[error("provider returned HTTP {status}: {body}")]
    Provider { status: u16, body: String },
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("malformed provider response: {0}")]
    MalformedResponse(String),
    #[error("no replay fixture for prompt {prompt_hash} (tried {})", .tried.join(", "))]
    FixtureMissing { prompt_hash: String, tried: Vec<String> },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Workspace(#[from] WorkspaceError),
}
