//! Uniform clients for the three external model capabilities: embedder,
//! captioner, answerer.
//!
//! [`OfflineGateway`] serves deterministic mocks (same request, byte-identical
//! response, across processes); [`HttpGateway`] speaks the canonical wire
//! protocol with retries and exponential backoff. Callers depend only on the
//! [`ModelGateway`] trait.

mod http;
mod offline;

pub use http::{HttpGateway, HttpReply, HttpTransport, ReqwestTransport};
pub use offline::OfflineGateway;

use std::fmt;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Environment variable names for the live endpoints and auth token.
pub const ENV_EMBED_URL: &str = "MMVIR_EMBED_URL";
pub const ENV_CAPTION_URL: &str = "MMVIR_CAPTION_URL";
pub const ENV_ANSWER_URL: &str = "MMVIR_ANSWER_URL";
pub const ENV_API_TOKEN: &str = "MMVIR_API_TOKEN";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Capability {
    Embed,
    Caption,
    Answer,
}

impl fmt::Display for Capability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Capability::Embed => write!(f, "embed"),
            Capability::Caption => write!(f, "caption"),
            Capability::Answer => write!(f, "answer"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PayloadKind {
    Text,
    Image,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub kind: PayloadKind,
    /// Text to embed, or a frame locator for `kind: image`.
    pub payload: String,
    pub model_hint: String,
}

impl EmbedRequest {
    pub fn text(payload: impl Into<String>) -> Self {
        Self {
            kind: PayloadKind::Text,
            payload: payload.into(),
            model_hint: String::new(),
        }
    }

    pub fn image(locator: impl Into<String>) -> Self {
        Self {
            kind: PayloadKind::Image,
            payload: locator.into(),
            model_hint: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub vector: Vec<f64>,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionRequest {
    /// Ordered frame locators.
    pub frames: Vec<String>,
    pub prompt: String,
    pub max_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionResponse {
    pub text: String,
}

/// One block of answerer context, order-preserving on the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum ContextBlock {
    Text(String),
    Frame(String),
}

impl ContextBlock {
    pub fn payload(&self) -> &str {
        match self {
            ContextBlock::Text(s) | ContextBlock::Frame(s) => s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerRequest {
    pub context: Vec<ContextBlock>,
    pub question: String,
    pub options: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerResponse {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatewayConfig {
    pub embed_url: Option<String>,
    pub caption_url: Option<String>,
    pub answer_url: Option<String>,
    /// Name of the environment variable holding the bearer token.
    pub token_env: String,
    pub timeout_s: f64,
    pub max_retries: u32,
    /// First backoff delay; doubles per retry.
    pub backoff_base_s: f64,
    pub offline: bool,
    pub embed_dim: usize,
    pub max_context_blocks: usize,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            embed_url: None,
            caption_url: None,
            answer_url: None,
            token_env: ENV_API_TOKEN.to_string(),
            timeout_s: 120.0,
            max_retries: 3,
            backoff_base_s: 1.0,
            offline: true,
            embed_dim: 128,
            max_context_blocks: 4096,
        }
    }
}

impl GatewayConfig {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.offline
            && (self.embed_url.is_some() || self.caption_url.is_some() || self.answer_url.is_some())
        {
            return Err(GatewayError::Precondition(
                "offline mode requires no endpoints".into(),
            ));
        }
        if self.embed_dim == 0 {
            return Err(GatewayError::Precondition("embed_dim must be positive".into()));
        }
        Ok(())
    }

    /// Fill endpoint URLs from the conventional environment variables. Only
    /// unset fields are touched.
    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) {
        if self.embed_url.is_none() {
            self.embed_url = get(ENV_EMBED_URL);
        }
        if self.caption_url.is_none() {
            self.caption_url = get(ENV_CAPTION_URL);
        }
        if self.answer_url.is_none() {
            self.answer_url = get(ENV_ANSWER_URL);
        }
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("{capability} transport failed after {attempts} attempt(s): {message}")]
    Transport {
        capability: Capability,
        attempts: u32,
        message: String,
    },
    #[error("{capability} service error: {message}")]
    Service {
        capability: Capability,
        message: String,
    },
    #[error("embedder returned dimension {got}, configured {want}")]
    DimensionMismatch { got: usize, want: usize },
    #[error("context holds {got} blocks, limit is {limit}")]
    BlockLimit { got: usize, limit: usize },
    #[error("correlation id mismatch: sent {sent}, got {got}")]
    Correlation { sent: String, got: String },
}

/// One completed gateway call, as recorded in the call log.
#[derive(Debug, Clone, PartialEq)]
pub struct CallRecord {
    pub capability: Capability,
    /// Prompt text for captions, payload for embeds, question for answers.
    pub detail: String,
    /// Requests actually issued, retries included.
    pub attempts: u32,
}

#[derive(Debug, Default)]
pub(crate) struct CallLog {
    records: Mutex<Vec<CallRecord>>,
}

impl CallLog {
    pub fn push(&self, record: CallRecord) {
        self.records.lock().expect("call log poisoned").push(record);
    }

    pub fn snapshot(&self) -> Vec<CallRecord> {
        self.records.lock().expect("call log poisoned").clone()
    }
}

/// Shared handle to the three model capabilities.
pub trait ModelGateway: Send + Sync {
    fn embed(&self, req: &EmbedRequest) -> Result<EmbedResponse, GatewayError>;
    fn caption(&self, req: &CaptionRequest) -> Result<CaptionResponse, GatewayError>;
    fn answer(&self, req: &AnswerRequest) -> Result<AnswerResponse, GatewayError>;
    /// Every completed call with its attempt count, in completion order.
    fn call_log(&self) -> Vec<CallRecord>;
    /// Identifies the embedder backing this gateway; recorded in indexes so
    /// incompatible embeddings never merge.
    fn embedder_fingerprint(&self) -> String;
}

pub(crate) fn l2_normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offline_config_rejects_endpoints() {
        let config = GatewayConfig {
            embed_url: Some("http://localhost:9".into()),
            ..GatewayConfig::default()
        };
        assert!(matches!(
            config.validate(),
            Err(GatewayError::Precondition(_))
        ));
    }

    #[test]
    fn apply_env_fills_only_unset_urls() {
        let mut config = GatewayConfig {
            offline: false,
            caption_url: Some("http://keep".into()),
            ..GatewayConfig::default()
        };
        config.apply_env(|name| match name {
            ENV_EMBED_URL => Some("http://embed".into()),
            ENV_CAPTION_URL => Some("http://lose".into()),
            _ => None,
        });
        assert_eq!(config.embed_url.as_deref(), Some("http://embed"));
        assert_eq!(config.caption_url.as_deref(), Some("http://keep"));
        assert_eq!(config.answer_url, None);
    }
}
