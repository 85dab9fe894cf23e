use std::thread;
use std::time::Duration;

use serde_json::{json, Value as Json};

use super::{ChatRequest, LlmError, Provider, Role};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpConfig {
    /// Base URL; `/chat/completions` is appended.
    pub endpoint: String,
    pub api_key_env: String,
    pub max_retries: u32,
    pub timeout_ms: u64,
    /// First retry delay; doubles on each further retry.
    pub backoff_ms: u64,
}

/// Client for OpenAI-compatible chat-completion endpoints.
pub struct HttpProvider {
    cfg: HttpConfig,
    client: reqwest::blocking::Client,
}

impl HttpProvider {
    pub fn new(cfg: HttpConfig) -> Result<HttpProvider, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(cfg.timeout_ms))
            .build()
            .map_err(|e| LlmError::Config(e.to_string()))?;
        Ok(HttpProvider { cfg, client })
    }

    fn body(req: &ChatRequest) -> Json {
        let mut messages = vec![json!({"role": "system", "content": req.system})];
        messages.extend(req.messages.iter().map(|m| {
            json!({"role": match m.role { Role::User => "user", Role::Assistant => "assistant" }, "content": m.content})
        }));
        json!({
            "model": req.model_name,
            "messages": messages,
            "temperature": req.temperature,
            "max_tokens": req.max_output,
        })
    }

    fn attempt(&self, url: &str, key: Option<&str>, body: &Json) -> Result<String, (bool, LlmError)> {
        let mut rb = self.client.post(url).json(body);
        if let Some(k) = key {
            rb = rb.bearer_auth(k);
        }
        let resp = rb.send().map_err(|e| (true, LlmError::Transport(e.to_string())))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| (true, LlmError::Transport(e.to_string())))?;
        match status.as_u16() {
            200..=299 => {
                let v: Json = serde_json::from_str(&text)
                    .map_err(|e| (false, LlmError::Rejected(format!("malformed response body: {e}"))))?;
                v.pointer("/choices/0/message/content")
                    .and_then(Json::as_str)
                    .map(String::from)
                    .ok_or((false, LlmError::Rejected("response has no choices[0].message.content".into())))
            }
            401 | 403 => Err((false, LlmError::Auth(format!("HTTP {status}: {text}")))),
            408 | 429 | 500..=599 => Err((true, LlmError::Transport(format!("HTTP {status}")))),
            _ => Err((false, LlmError::Rejected(format!("HTTP {status}: {text}")))),
        }
    }
}

impl Provider for HttpProvider {
    fn name(&self) -> &str {
        "openai"
    }

    fn complete(&self, req: &ChatRequest) -> Result<String, LlmError> {
        req.validate()?;
        let key = std::env::var(&self.cfg.api_key_env).ok();
        let url = format!("{}/chat/completions", self.cfg.endpoint.trim_end_matches('/'));
        let body = Self::body(req);
        let mut delay = self.cfg.backoff_ms;
        let mut tries = 0;
        loop {
            match self.attempt(&url, key.as_deref(), &body) {
                Ok(t) => return Ok(t),
                Err((true, e)) if tries < self.cfg.max_retries => {
                    tracing::warn!(attempt = tries + 1, error = %e, "retrying chat completion");
                    thread::sleep(Duration::from_millis(delay));
                    delay *= 2;
                    tries += 1;
                }
                Err((_, e)) => return Err(e),
            }
        }
    }
}
