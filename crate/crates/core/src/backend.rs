//! Chat-completion port shared by every model-driven step.
//!
//! Implementations live outside the core (scripted fixtures, HTTP clients);
//! the core only builds [`ChatRequest`]s and consumes raw reply text.
//!
//! Request tags are stable, slash-separated paths that identify the call
//! site, e.g. `agent/<run>/<profile_id>` or `generate/<skill>/<attempt>`.
//! Together with [`ChatRequest::turn`] they let a scripted backend answer
//! every call deterministically.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

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

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub tag: String,
    /// Call index within the tag (conversation turn; 0 for one-shot calls).
    pub turn: u32,
}

pub const DEFAULT_MAX_TOKENS: u32 = 4096;

impl ChatRequest {
    /// One-shot request: system prompt plus a single user message.
    pub fn single(tag: impl Into<String>, system: impl Into<String>, user: impl Into<String>) -> Self {
        ChatRequest {
            system: system.into(),
            messages: alloc::vec![Message {
                role: Role::User,
                content: user.into(),
            }],
            temperature: 0.0,
            max_tokens: DEFAULT_MAX_TOKENS,
            tag: tag.into(),
            turn: 0,
        }
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn with_turn(mut self, turn: u32) -> Self {
        self.turn = turn;
        self
    }

    /// Nonempty system prompt; messages alternate user/assistant starting with user.
    pub fn validate(&self) -> Result<(), BackendError> {
        if self.system.trim().is_empty() {
            return Err(BackendError::InvalidRequest("empty system prompt".into()));
        }
        if !(self.temperature >= 0.0) {
            return Err(BackendError::InvalidRequest("negative temperature".into()));
        }
        for (i, m) in self.messages.iter().enumerate() {
            let expected = if i % 2 == 0 { Role::User } else { Role::Assistant };
            if m.role != expected {
                return Err(BackendError::InvalidRequest(alloc::format!(
                    "message {i} should be from {expected:?}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("script exhausted for tag {tag:?} at turn {turn}")]
    ScriptExhausted { tag: String, turn: u32 },
    #[error("http error {status}: {body}")]
    Http { status: u16, body: String },
    #[error("request timed out")]
    Timeout,
    #[error("transport error: {0}")]
    Transport(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("backend not configured: {0}")]
    Unavailable(String),
}

/// A chat-completion endpoint. Must tolerate concurrent calls.
pub trait ChatBackend: Sync {
    fn complete(&self, req: &ChatRequest) -> Result<String, BackendError>;
}

impl<T: ChatBackend + ?Sized> ChatBackend for &T {
    fn complete(&self, req: &ChatRequest) -> Result<String, BackendError> {
        (**self).complete(req)
    }
}

/// A backend that refuses every call; stands in when a run needs no model.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoBackend;

impl ChatBackend for NoBackend {
    fn complete(&self, req: &ChatRequest) -> Result<String, BackendError> {
        Err(BackendError::Unavailable(alloc::format!("no backend for {}", req.tag)))
    }
}

/// The three model roles of a simulated conversation, plus the analyst
/// used for analysis, consolidation and skill generation.
#[derive(Clone, Copy)]
pub struct Backends<'a> {
    pub agent: &'a dyn ChatBackend,
    pub seeker: &'a dyn ChatBackend,
    pub scorer: &'a dyn ChatBackend,
    pub analyst: &'a dyn ChatBackend,
}

impl<'a> Backends<'a> {
    pub fn uniform(backend: &'a dyn ChatBackend) -> Self {
        Backends {
            agent: backend,
            seeker: backend,
            scorer: backend,
            analyst: backend,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_validation() {
        let ok = ChatRequest::single("t", "sys", "hi");
        assert!(ok.validate().is_ok());
        let mut empty = ok.clone();
        empty.system = "  ".into();
        assert!(empty.validate().is_err());
        let mut bad = ok.clone();
        bad.messages.push(Message {
            role: Role::User,
            content: "again".into(),
        });
        assert!(bad.validate().is_err());
        let mut neg = ok;
        neg.temperature = -1.0;
        assert!(neg.validate().is_err());
    }
}
