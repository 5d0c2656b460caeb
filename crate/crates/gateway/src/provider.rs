use std::path::{Path, PathBuf};
use std::time::Duration;

use async_trait::async_trait;
use serde_json::{json, Value};

use ruleflex_core::prompt::Message;

use crate::{GatewayError, ProviderConfig};

/// One chat-completion call.
#[derive(Debug, Clone)]
pub struct CompletionRequest<'a> {
    pub messages: &'a [Message],
    pub config: &'a ProviderConfig,
    /// sha256 of the rendered prompt text.
    pub prompt_hash: &'a str,
    pub run_index: usize,
}

#[async_trait]
pub trait Provider: Send + Sync {
    fn kind(&self) -> &'static str;

    /// Checked once before any call is made.
    fn ready(&self, _config: &ProviderConfig) -> Result<(), GatewayError> {
        Ok(())
    }

    async fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, GatewayError>;
}

const BODY_EXCERPT: usize = 500;

pub struct HttpProvider {
    client: reqwest::Client,
}

impl HttpProvider {
    pub fn new() -> Self {
        HttpProvider::with_timeout(Duration::from_secs(120))
    }

    pub fn with_timeout(timeout: Duration) -> Self {
        let client = reqwest::Client::builder().timeout(timeout).build().expect("TLS backend available");
        HttpProvider { client }
    }

    async fn send(&self, url: &str, key: &str, body: &Value) -> Result<reqwest::Response, reqwest::Error> {
        self.client.post(url).bearer_auth(key).json(body).send().await
    }
}

impl Default for HttpProvider {
    fn default() -> Self {
        HttpProvider::new()
    }
}

#[async_trait]
impl Provider for HttpProvider {
    fn kind(&self) -> &'static str {
        "http"
    }

    fn ready(&self, config: &ProviderConfig) -> Result<(), GatewayError> {
        config.credential().map(|_| ())
    }

    async fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, GatewayError> {
        let config = request.config;
        let key = config.credential()?;
        let body = json!({
            "model": config.model,
            "temperature": config.temperature,
            "max_tokens": config.max_response_tokens,
            "messages": request.messages,
        });
        // One retry for transport failures; HTTP error statuses are final.
        let response = match self.send(&config.endpoint, &key, &body).await {
            Ok(r) => r,
            Err(_) => self
                .send(&config.endpoint, &key, &body)
                .await
                .map_err(|e| GatewayError::Transport(e.to_string()))?,
        };
        let status = response.status();
        let text = response.text().await.map_err(|e| GatewayError::Transport(e.to_string()))?;
        if !status.is_success() {
            let excerpt: String = text.chars().take(BODY_EXCERPT).collect();
            return Err(GatewayError::Provider { status: status.as_u16(), body: excerpt });
        }
        let value: Value =
            serde_json::from_str(&text).map_err(|e| GatewayError::MalformedResponse(e.to_string()))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| GatewayError::MalformedResponse("no choices[0].message.content".into()))
    }
}

/// Serves recorded responses keyed by prompt hash.
///
/// Looked up in order: `<dir>/<model>/<hash>.<run>.txt`, `<dir>/<model>/<hash>.txt`,
/// `<dir>/<hash>.<run>.txt`, `<dir>/<hash>.txt`. A miss is an error.
#[derive(Debug, Clone)]
pub struct ReplayProvider {
    dir: PathBuf,
}

impl ReplayProvider {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        ReplayProvider { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn candidates(&self, model: &str, prompt_hash: &str, run_index: usize) -> Vec<PathBuf> {
        let per_model = self.dir.join(model);
        vec![
            per_model.join(format!("{prompt_hash}.{run_index}.txt")),
            per_model.join(format!("{prompt_hash}.txt")),
            self.dir.join(format!("{prompt_hash}.{run_index}.txt")),
            self.dir.join(format!("{prompt_hash}.txt")),
        ]
    }
}

#[async_trait]
impl Provider for ReplayProvider {
    fn kind(&self) -> &'static str {
        "replay"
    }

    async fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, GatewayError> {
        let tried = self.candidates(&request.config.model, request.prompt_hash, request.run_index);
        for path in &tried {
            match std::fs::read(path) {
                Ok(bytes) => {
                    return String::from_utf8(bytes)
                        .map_err(|_| GatewayError::MalformedResponse(format!("{} is not UTF-8", path.display())))
                }
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => continue,
                Err(e) => return Err(GatewayError::Transport(format!("{}: {e}", path.display()))),
            }
        }
        Err(GatewayError::FixtureMissing {
            prompt_hash: request.prompt_hash.to_string(),
            tried: tried.iter().map(|p| p.display().to_string()).collect(),
        })
    }
}
