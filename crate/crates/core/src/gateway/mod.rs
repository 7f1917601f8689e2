//! Chat-completion gateway.
//!
//! All model calls go through [`Gateway::complete`], which validates the
//! request, dispatches it to a provider, and appends the exchange to a
//! [`TraceLog`]. Two providers exist: an OpenAI-compatible HTTP client and a
//! deterministic rule-based script used for offline runs and tests.

mod remote;
mod scripted;
mod trace;

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use remote::RemoteProvider;
pub use scripted::{Matcher, Script, ScriptRule, ScriptedProvider};
pub use trace::{TraceEntry, TraceLog};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("provider returned HTTP {status} after {attempts} attempt(s): {body}")]
    Provider {
        status: u16,
        attempts: u32,
        body: String,
    },
    #[error("scripted provider has no rule matching request tagged {tag:?}")]
    ScriptMiss { tag: String },
    #[error("provider returned an empty completion")]
    EmptyCompletion,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("provider configuration: {0}")]
    Config(String),
}

impl GatewayError {
    pub fn kind(&self) -> &'static str {
        match self {
            GatewayError::Transport(_) => "transport_error",
            GatewayError::Provider { .. } => "provider_error",
            GatewayError::ScriptMiss { .. } => "script_miss",
            GatewayError::EmptyCompletion => "empty_completion",
            GatewayError::InvalidRequest(_) => "invalid_request",
            GatewayError::Config(_) => "config_error",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChatRole {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: ChatRole,
    pub text: String,
}

impl ChatMessage {
    pub fn user(text: impl Into<String>) -> Self {
        Self {
            role: ChatRole::User,
            text: text.into(),
        }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Self {
            role: ChatRole::Assistant,
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<String>,
    #[serde(default)]
    pub messages: Vec<ChatMessage>,
    pub temperature: f32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_output_chars: Option<usize>,
    /// Caller label, e.g. `master` or `reflect`.
    pub tag: String,
}

impl ChatRequest {
    pub fn new(tag: impl Into<String>, temperature: f32) -> Self {
        Self {
            system: None,
            messages: Vec::new(),
            temperature,
            max_output_chars: None,
            tag: tag.into(),
        }
    }

    pub fn with_system(mut self, system: impl Into<String>) -> Self {
        self.system = Some(system.into());
        self
    }

    pub fn with_user(mut self, text: impl Into<String>) -> Self {
        self.messages.push(ChatMessage::user(text));
        self
    }

    pub fn with_messages(mut self, messages: impl IntoIterator<Item = ChatMessage>) -> Self {
        self.messages.extend(messages);
        self
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        let has_system = self.system.as_deref().is_some_and(|s| !s.trim().is_empty());
        if self.messages.is_empty() && !has_system {
            return Err(GatewayError::InvalidRequest(
                "request needs a system prompt or at least one message".into(),
            ));
        }
        if !(0.0..=2.0).contains(&self.temperature) || self.temperature.is_nan() {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        Ok(())
    }

    /// Flat text form used for script matching and trace excerpts.
    pub fn render(&self) -> String {
        let mut out = String::new();
        if let Some(system) = &self.system {
            out.push_str("[system]\n");
            out.push_str(system);
            out.push('\n');
        }
        for m in &self.messages {
            out.push_str(match m.role {
                ChatRole::User => "[user]\n",
                ChatRole::Assistant => "[assistant]\n",
            });
            out.push_str(&m.text);
            out.push('\n');
        }
        out
    }

    pub fn last_user_message(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == ChatRole::User)
            .map(|m| m.text.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryConfig {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
}

impl Default for RetryConfig {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_delay_ms: 500,
        }
    }
}

impl RetryConfig {
    /// Delay before retry number `attempt` (1-based), doubling each time.
    pub fn delay_ms(&self, attempt: u32) -> u64 {
        self.base_delay_ms
            .saturating_mul(1u64 << attempt.saturating_sub(1).min(20))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    Remote,
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_env_var: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script_path: Option<PathBuf>,
    #[serde(default)]
    pub retry: RetryConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timeout_ms: Option<u64>,
}

impl ProviderConfig {
    pub fn remote(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            kind: ProviderKind::Remote,
            base_url: Some(base_url.into()),
            model_name: Some(model_name.into()),
            auth_env_var: None,
            script_path: None,
            retry: RetryConfig::default(),
            timeout_ms: None,
        }
    }

    pub fn scripted(script_path: impl Into<PathBuf>) -> Self {
        Self {
            kind: ProviderKind::Scripted,
            base_url: None,
            model_name: None,
            auth_env_var: None,
            script_path: Some(script_path.into()),
            retry: RetryConfig::default(),
            timeout_ms: None,
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        match self.kind {
            ProviderKind::Remote => {
                if self.base_url.as_deref().is_none_or(str::is_empty) {
                    return Err(GatewayError::Config("remote provider needs base_url".into()));
                }
                if self.model_name.as_deref().is_none_or(str::is_empty) {
                    return Err(GatewayError::Config("remote provider needs model_name".into()));
                }
            }
            ProviderKind::Scripted => {
                if self.script_path.is_none() {
                    return Err(GatewayError::Config("scripted provider needs script_path".into()));
                }
            }
        }
        if self.retry.max_attempts == 0 {
            return Err(GatewayError::Config("retry.max_attempts must be at least 1".into()));
        }
        Ok(())
    }

    /// Reads a JSON config file. A relative `script_path` is resolved against
    /// the config file's directory.
    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: ProviderConfig = serde_json::from_str(&text)
            .map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
        if let (Some(script), Some(dir)) = (&cfg.script_path, path.parent()) {
            if script.is_relative() {
                cfg.script_path = Some(dir.join(script));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// A chat-completion backend.
#[async_trait]
pub trait ChatProvider: Send + Sync {
    async fn complete(&self, request: &ChatRequest) -> Result<String, GatewayError>;
}

/// Cheaply clonable handle to a provider plus its trace log.
#[derive(Clone)]
pub struct Gateway {
    provider: Arc<dyn ChatProvider>,
    trace: Arc<TraceLog>,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway").finish_non_exhaustive()
    }
}

impl Gateway {
    pub fn new(provider: Arc<dyn ChatProvider>) -> Self {
        Self {
            provider,
            trace: Arc::new(TraceLog::default()),
        }
    }

    pub fn with_trace(mut self, trace: Arc<TraceLog>) -> Self {
        self.trace = trace;
        self
    }

    pub fn scripted(script: Script) -> Self {
        Self::new(Arc::new(ScriptedProvider::new(script)))
    }

    pub fn from_config(config: &ProviderConfig) -> Result<Self, GatewayError> {
        config.validate()?;
        let provider: Arc<dyn ChatProvider> = match config.kind {
            ProviderKind::Remote => Arc::new(RemoteProvider::new(config)?),
            ProviderKind::Scripted => {
                let path = config.script_path.as_deref().expect("validated");
                Arc::new(ScriptedProvider::new(Script::load(path)?))
            }
        };
        Ok(Self::new(provider))
    }

    pub fn trace(&self) -> &Arc<TraceLog> {
        &self.trace
    }

    pub async fn complete(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        request.validate()?;
        let started = Instant::now();
        let result = self
            .provider
            .complete(request)
            .await
            .and_then(|text| {
                if text.trim().is_empty() {
                    Err(GatewayError::EmptyCompletion)
                } else {
                    Ok(text)
                }
            })
            .map(|text| match request.max_output_chars {
                Some(limit) if text.chars().count() > limit => text.chars().take(limit).collect(),
                _ => text,
            });
        self.trace.record(request, &result, started.elapsed());
        if let Err(e) = &result {
            tracing::warn!(tag = %request.tag, error = %e, "completion failed");
        }
        result
    }
}

/// Gateways for the two sides of a simulated conversation. Both may share
/// one provider.
#[derive(Clone, Debug)]
pub struct Gateways {
    /// Agent side: master routing, agent replies, tutor lines.
    pub pca: Gateway,
    /// Student side: interpret, reflect, respond.
    pub student: Gateway,
}

impl Gateways {
    pub fn shared(gateway: Gateway) -> Self {
        Self {
            pca: gateway.clone(),
            student: gateway,
        }
    }
}
