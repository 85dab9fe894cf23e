//! Chat-completion providers behind one blocking interface.

mod cassette;
mod http;
mod scripted;

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use cassette::{request_digest, Cassette, CassetteMode, CassetteProvider};
pub use http::{HttpConfig, HttpProvider};
pub use scripted::{builtin_script, ScriptEntry, ScriptTable, ScriptedProvider, BUILTIN_SCRIPTS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn user(content: impl Into<String>) -> Message {
        Message { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Message {
        Message { role: Role::Assistant, content: content.into() }
    }
}

/// Which prompt a request carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    #[default]
    Act,
    Verify,
    Safeguard,
}

/// Structured facts about a request that scripted providers match on. Not
/// part of the wire request or its digest.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RequestMeta {
    pub instruction: String,
    /// 1-based iteration the request is for.
    pub iteration: u32,
    /// Feedback from the previous iteration, if any.
    pub last_error: Option<String>,
    pub phase: Phase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system: String,
    pub messages: Vec<Message>,
    pub model_name: String,
    pub temperature: f64,
    pub max_output: u32,
    #[serde(skip)]
    pub meta: RequestMeta,
}

impl ChatRequest {
    pub fn validate(&self) -> Result<(), LlmError> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(LlmError::Config(format!("temperature must be >= 0, got {}", self.temperature)));
        }
        if self.messages.windows(2).any(|w| w[0].role == Role::Assistant && w[1].role == Role::Assistant) {
            return Err(LlmError::Config("two consecutive assistant turns".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LlmError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("request rejected: {0}")]
    Rejected(String),
    #[error("call budget of {0} exceeded")]
    BudgetExceeded(u32),
    #[error("no script entry matches (instruction {instruction:?}, iteration {iteration})")]
    NoMatch { instruction: String, iteration: u32 },
    #[error("cassette: {0}")]
    Cassette(String),
    #[error("provider configuration: {0}")]
    Config(String),
}

/// A chat-completion backend. Implementations are shareable across threads.
pub trait Provider: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, req: &ChatRequest) -> Result<String, LlmError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    /// `scripted` or `openai` (any OpenAI-compatible endpoint).
    pub kind: String,
    pub model: String,
    pub endpoint: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    /// Script table for `scripted`.
    pub script: Option<PathBuf>,
    pub cassette_dir: Option<PathBuf>,
    pub cassette_mode: Option<CassetteMode>,
    pub max_retries: u32,
    pub temperature: f64,
    pub max_output: u32,
    pub timeout_ms: u64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            kind: "scripted".into(),
            model: "scripted".into(),
            endpoint: "https://api.openai.com/v1".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            script: None,
            cassette_dir: None,
            cassette_mode: None,
            max_retries: 3,
            temperature: 0.0,
            max_output: 2048,
            timeout_ms: 60_000,
        }
    }
}

/// Builds the provider described by `cfg`, wrapped in a cassette when one
/// is configured. Replay needs no inner provider.
pub fn build_provider(cfg: &ProviderConfig) -> Result<Arc<dyn Provider>, LlmError> {
    if let (Some(dir), Some(CassetteMode::Replay)) = (&cfg.cassette_dir, cfg.cassette_mode) {
        return Ok(Arc::new(CassetteProvider::replay(Cassette::new(dir))));
    }
    let inner: Arc<dyn Provider> = match cfg.kind.as_str() {
        "scripted" => {
            let table = match &cfg.script {
                Some(p) => ScriptTable::load(p)?,
                None => return Err(LlmError::Config("scripted provider needs a script table".into())),
            };
            Arc::new(ScriptedProvider::new(table))
        }
        "openai" => Arc::new(HttpProvider::new(HttpConfig {
            endpoint: cfg.endpoint.clone(),
            api_key_env: cfg.api_key_env.clone(),
            max_retries: cfg.max_retries,
            timeout_ms: cfg.timeout_ms,
            backoff_ms: 250,
        })?),
        other => return Err(LlmError::Config(format!("unknown provider kind '{other}'"))),
    };
    match (&cfg.cassette_dir, cfg.cassette_mode) {
        (Some(dir), Some(CassetteMode::Record)) => Ok(Arc::new(CassetteProvider::record(Cassette::new(dir), inner))),
        (None, Some(_)) => Err(LlmError::Config("cassette mode set without a cassette directory".into())),
        _ => Ok(inner),
    }
}
