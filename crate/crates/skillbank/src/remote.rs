//! Chat-completion backend over HTTP, plus a request audit wrapper.

use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use skillbank_core::backend::{BackendError, ChatBackend, ChatRequest, Role};

use crate::io::IoError;

pub const ENV_URL: &str = "BACKEND_URL";
pub const ENV_API_KEY: &str = "BACKEND_API_KEY";
pub const ENV_MODEL: &str = "BACKEND_MODEL";

#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    /// Full endpoint, e.g. `https://host/v1/chat/completions`.
    pub url: String,
    pub model: String,
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub backoff_ms: u64,
}

impl std::fmt::Debug for RemoteConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteConfig")
            .field("url", &self.url)
            .field("model", &self.model)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .field("timeout_secs", &self.timeout_secs)
            .field("max_retries", &self.max_retries)
            .field("backoff_ms", &self.backoff_ms)
            .finish()
    }
}

impl RemoteConfig {
    pub fn new(url: impl Into<String>, model: impl Into<String>) -> Self {
        RemoteConfig {
            url: url.into(),
            model: model.into(),
            api_key: None,
            timeout_secs: 120,
            max_retries: 3,
            backoff_ms: 1000,
        }
    }
}

pub struct RemoteBackend {
    config: RemoteConfig,
    agent: ureq::Agent,
}

fn retryable(e: &BackendError) -> bool {
    match e {
        BackendError::Http { status, .. } => *status == 429 || *status >= 500,
        BackendError::Timeout | BackendError::Transport(_) => true,
        _ => false,
    }
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        RemoteBackend { config, agent }
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    pub fn request_body(&self, req: &ChatRequest) -> Value {
        let mut messages = vec![json!({"role": "system", "content": req.system})];
        for m in &req.messages {
            let role = match m.role {
                Role::User => "user",
                Role::Assistant => "assistant",
            };
            messages.push(json!({"role": role, "content": m.content}));
        }
        json!({
            "model": self.config.model,
            "messages": messages,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        })
    }

    fn call_once(&self, body: &Value) -> Result<String, BackendError> {
        let mut call = self
            .agent
            .post(&self.config.url)
            .header("Content-Type", "application/json");
        if let Some(key) = &self.config.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = call.send_json(body).map_err(|e| match e {
            ureq::Error::Timeout(_) => BackendError::Timeout,
            other => BackendError::Transport(other.to_string()),
        })?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(BackendError::Http { status, body: text });
        }
        let v: Value =
            serde_json::from_str(&text).map_err(|e| BackendError::Transport(format!("bad response body: {e}")))?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| BackendError::Transport("response has no choices[0].message.content".into()))
    }
}

impl ChatBackend for RemoteBackend {
    fn complete(&self, req: &ChatRequest) -> Result<String, BackendError> {
        req.validate()?;
        let body = self.request_body(req);
        let mut attempt = 0;
        loop {
            match self.call_once(&body) {
                Err(e) if retryable(&e) && attempt < self.config.max_retries => {
                    let wait = self.config.backoff_ms.saturating_mul(1 << attempt.min(16));
                    std::thread::sleep(Duration::from_millis(wait));
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

/// Appends one line per call (request, response or error) to a log file.
/// Any occurrence of the secret is replaced before writing.
pub struct AuditedBackend<B> {
    inner: B,
    sink: Mutex<File>,
    secret: Option<String>,
}

impl<B: ChatBackend> AuditedBackend<B> {
    pub fn create(inner: B, path: &Path, secret: Option<String>) -> Result<Self, IoError> {
        let file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| IoError::io(path, e))?;
        Ok(AuditedBackend {
            inner,
            sink: Mutex::new(file),
            secret: secret.filter(|s| !s.is_empty()),
        })
    }

    fn redact(&self, text: String) -> String {
        match &self.secret {
            Some(s) => text.replace(s.as_str(), "<redacted>"),
            None => text,
        }
    }
}

impl<B: ChatBackend> ChatBackend for AuditedBackend<B> {
    fn complete(&self, req: &ChatRequest) -> Result<String, BackendError> {
        let result = self.inner.complete(req);
        let record = json!({
            "tag": req.tag,
            "turn": req.turn,
            "request": req,
            "response": result.as_ref().ok(),
            "error": result.as_ref().err().map(|e| e.to_string()),
        });
        let line = self.redact(record.to_string());
        if let Ok(mut f) = self.sink.lock() {
            let _ = writeln!(f, "{line}");
        }
        result
    }
}
