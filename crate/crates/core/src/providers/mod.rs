//! Chat-completion providers: the uniform interface behind every agent and
//! the condenser, with a live HTTP implementation and deterministic
//! stand-ins for offline runs and protocol tests.

pub mod http;
pub mod scripted;

use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::TokenUsage;

pub use http::{HttpProvider, HttpReply, HttpTransport, ReqwestTransport, RetryPolicy};
pub use scripted::{Expectation, FnProvider, ScriptedProvider, TranscriptEntry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

/// The last user message of a conversation, if any.
pub fn last_user_message(messages: &[ChatMessage]) -> Option<&str> {
    messages
        .iter()
        .rev()
        .find(|m| m.role == Role::User)
        .map(|m| m.content.as_str())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatSettings {
    pub model: String,
    pub temperature: f32,
    pub max_tokens: u32,
}

impl ChatSettings {
    pub fn new(model: impl Into<String>, temperature: f32) -> Self {
        Self {
            model: model.into(),
            temperature,
            max_tokens: 2048,
        }
    }

    /// Same model, different temperature (used for reflection calls).
    pub fn with_temperature(&self, temperature: f32) -> Self {
        Self {
            temperature,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProviderResponse {
    /// Completion text; empty only when the upstream returned nothing.
    pub text: String,
    pub usage: TokenUsage,
    pub latency: Duration,
    /// Requests issued, including retries.
    pub attempts: u32,
}

impl ProviderResponse {
    pub fn immediate(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            usage: TokenUsage::default(),
            latency: Duration::ZERO,
            attempts: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProviderError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("authentication rejected (HTTP {status})")]
    Auth { status: u16 },
    #[error("rate limited after {attempts} attempt(s)")]
    RateLimited { attempts: u32 },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("scripted provider has no replies left (call #{0})")]
    ScriptExhausted(usize),
    #[error("transcript mismatch at entry #{index}: {reason}")]
    TranscriptMismatch { index: usize, reason: String },
    #[error("{0}")]
    Other(String),
}

impl ProviderError {
    pub fn is_auth(&self) -> bool {
        matches!(self, ProviderError::Auth { .. })
    }
}

/// A chat-completion backend. Implementations must tolerate concurrent
/// calls; the orchestrator issues one call per agent in parallel.
pub trait ChatProvider: Send + Sync {
    fn chat(
        &self,
        messages: &[ChatMessage],
        settings: &ChatSettings,
    ) -> Result<ProviderResponse, ProviderError>;
}

impl<P: ChatProvider + ?Sized> ChatProvider for std::sync::Arc<P> {
    fn chat(
        &self,
        messages: &[ChatMessage],
        settings: &ChatSettings,
    ) -> Result<ProviderResponse, ProviderError> {
        (**self).chat(messages, settings)
    }
}

/// Checks the request shape every provider requires.
pub fn validate_messages(messages: &[ChatMessage]) -> Result<(), ProviderError> {
    let Some(first) = messages.first() else {
        return Err(ProviderError::InvalidRequest("no messages".into()));
    };
    if first.role == Role::Assistant {
        return Err(ProviderError::InvalidRequest(
            "first message must be system or user".into(),
        ));
    }
    if let Some(m) = messages
        .iter()
        .find(|m| m.role != Role::Assistant && m.content.trim().is_empty())
    {
        return Err(ProviderError::InvalidRequest(format!(
            "empty {} message",
            m.role
        )));
    }
    Ok(())
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_shape_is_validated() {
        assert!(validate_messages(&[]).is_err());
        assert!(validate_messages(&[ChatMessage::assistant("hi")]).is_err());
        assert!(validate_messages(&[ChatMessage::user("  ")]).is_err());
        assert!(validate_messages(&[ChatMessage::system("s"), ChatMessage::user("u")]).is_ok());
    }

    #[test]
    fn finds_last_user_message() {
        let msgs = [
            ChatMessage::user("a"),
            ChatMessage::assistant("b"),
            ChatMessage::user("c"),
            ChatMessage::assistant("d"),
        ];
        assert_eq!(last_user_message(&msgs), Some("c"));
    }
}
