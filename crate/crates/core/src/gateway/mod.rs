//! Completion backends and prompt plumbing.
//!
//! Every LLM call in the crate goes through a [`Gateway`], which wraps one
//! [`CompletionBackend`]: either the HTTP chat-completion client or the
//! scripted backend used for deterministic runs.

mod extract;
mod http;
pub mod prompts;
mod scripted;

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use extract::{extract_plan, ExtractError};
pub use http::{HttpBackend, HttpStats, RetryPolicy};
pub use prompts::{
    render_actor_prompt, render_contrastor_prompt, ContrastLine, PromptError, PromptTemplate, TemplateRole,
    ACTOR_TEMPLATE, CONTRASTOR_TEMPLATE,
};
pub use scripted::{ScriptEntry, ScriptedBackend};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Actor,
    Contrastor,
    /// LLM-class tools invoked from inside a plan.
    Tool,
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Role::Actor => "actor",
            Role::Contrastor => "contrastor",
            Role::Tool => "tool",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompletionRequest {
    pub role: Role,
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: Option<u32>,
    pub iteration: u32,
    pub attempt: u32,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GatewayError {
    #[error("authentication failed (HTTP {status}): {message}")]
    Auth { status: u16, message: String },
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed reply: {0}")]
    MalformedReply(String),
    #[error("script has no entry for role {role}, iteration {iteration}, attempt {attempt}")]
    ScriptExhausted { role: Role, iteration: u32, attempt: u32 },
    #[error("backend configuration: {0}")]
    Config(String),
}

pub trait CompletionBackend: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<String, GatewayError>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Http,
    Scripted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub model: Option<String>,
    /// Name of the environment variable holding the bearer token.
    #[serde(default)]
    pub auth_env: Option<String>,
    #[serde(default = "default_max_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_base_backoff_ms")]
    pub base_backoff_ms: u64,
    #[serde(default = "default_request_cap")]
    pub max_concurrent_requests: usize,
    #[serde(default = "default_request_timeout_ms")]
    pub request_timeout_ms: u64,
    #[serde(default)]
    pub script: Option<PathBuf>,
    #[serde(default)]
    pub actor_temperature: Option<f64>,
    #[serde(default)]
    pub contrastor_temperature: Option<f64>,
    #[serde(default)]
    pub max_tokens: Option<u32>,
}

fn default_max_attempts() -> u32 {
    4
}
fn default_base_backoff_ms() -> u64 {
    500
}
fn default_request_cap() -> usize {
    4
}
fn default_request_timeout_ms() -> u64 {
    120_000
}

impl BackendConfig {
    pub fn scripted(script: impl Into<PathBuf>) -> Self {
        Self {
            kind: BackendKind::Scripted,
            endpoint: None,
            model: None,
            auth_env: None,
            max_attempts: default_max_attempts(),
            base_backoff_ms: default_base_backoff_ms(),
            max_concurrent_requests: default_request_cap(),
            request_timeout_ms: default_request_timeout_ms(),
            script: Some(script.into()),
            actor_temperature: None,
            contrastor_temperature: None,
            max_tokens: None,
        }
    }

    pub fn http(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            kind: BackendKind::Http,
            endpoint: Some(endpoint.into()),
            model: Some(model.into()),
            script: None,
            ..Self::scripted("")
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        match self.kind {
            BackendKind::Http => {
                if self.endpoint.as_deref().is_none_or(str::is_empty) {
                    return Err(GatewayError::Config("http backend requires an endpoint".into()));
                }
                if self.model.as_deref().is_none_or(str::is_empty) {
                    return Err(GatewayError::Config("http backend requires a model".into()));
                }
            }
            BackendKind::Scripted => {
                if self.script.as_ref().is_none_or(|p| p.as_os_str().is_empty()) {
                    return Err(GatewayError::Config("scripted backend requires a script path".into()));
                }
            }
        }
        if self.max_attempts == 0 {
            return Err(GatewayError::Config("max_attempts must be positive".into()));
        }
        if self.max_concurrent_requests == 0 {
            return Err(GatewayError::Config("max_concurrent_requests must be positive".into()));
        }
        Ok(())
    }

    /// Temperatures per role: 0 for scripted runs; 0.7 actor and 0.2 contrastor over HTTP.
    pub fn temperature(&self, role: Role) -> f64 {
        let (actor, contrastor) = match self.kind {
            BackendKind::Scripted => (0.0, 0.0),
            BackendKind::Http => (0.7, 0.2),
        };
        match role {
            Role::Actor => self.actor_temperature.unwrap_or(actor),
            Role::Contrastor => self.contrastor_temperature.unwrap_or(contrastor),
            Role::Tool => 0.0,
        }
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_attempts: self.max_attempts,
            base_backoff: Duration::from_millis(self.base_backoff_ms),
            ..RetryPolicy::default()
        }
    }
}

/// One recorded call, kept when recording is enabled.
#[derive(Clone, Debug, PartialEq)]
pub struct RecordedCall {
    pub request: CompletionRequest,
    pub reply: Result<String, GatewayError>,
}

pub struct Gateway {
    backend: Box<dyn CompletionBackend>,
    config: Option<BackendConfig>,
    calls: AtomicUsize,
    recording: Option<Mutex<Vec<RecordedCall>>>,
}

impl Gateway {
    pub fn new(backend: impl CompletionBackend + 'static) -> Self {
        Self { backend: Box::new(backend), config: None, calls: AtomicUsize::new(0), recording: None }
    }

    /// Builds the backend a config describes. Relative script paths resolve against `base_dir`.
    pub fn from_config(config: &BackendConfig, base_dir: Option<&std::path::Path>) -> Result<Self, GatewayError> {
        config.validate()?;
        let backend: Box<dyn CompletionBackend> = match config.kind {
            BackendKind::Scripted => {
                let mut path = config.script.clone().unwrap_or_default();
                if let (true, Some(base)) = (path.is_relative(), base_dir) {
                    path = base.join(path);
                }
                Box::new(ScriptedBackend::load(&path)?)
            }
            BackendKind::Http => Box::new(HttpBackend::from_config(config)?),
        };
        Ok(Self { backend, config: Some(config.clone()), calls: AtomicUsize::new(0), recording: None })
    }

    pub fn with_recording(mut self) -> Self {
        self.recording = Some(Mutex::new(Vec::new()));
        self
    }

    /// Builds a request with the configured temperature for `role`.
    pub fn request(&self, role: Role, prompt: String, iteration: u32, attempt: u32) -> CompletionRequest {
        let temperature = self.config.as_ref().map_or(0.0, |c| c.temperature(role));
        let max_tokens = self.config.as_ref().and_then(|c| c.max_tokens);
        CompletionRequest { role, prompt, temperature, max_tokens, iteration, attempt }
    }

    pub fn complete(&self, request: &CompletionRequest) -> Result<String, GatewayError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let reply = self.backend.complete(request);
        if let Some(rec) = &self.recording {
            rec.lock().unwrap_or_else(|e| e.into_inner()).push(RecordedCall {
                request: request.clone(),
                reply: reply.clone(),
            });
        }
        reply
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn recorded(&self) -> Vec<RecordedCall> {
        self.recording
            .as_ref()
            .map(|m| m.lock().unwrap_or_else(|e| e.into_inner()).clone())
            .unwrap_or_default()
    }
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway").field("calls", &self.calls()).finish_non_exhaustive()
    }
}
