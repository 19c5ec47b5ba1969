//! Model backends. Anything that turns a [`PromptBundle`] into reply text.

use std::collections::HashMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::prompt::{chat_request, ImageMode, PromptBundle};
use crate::corpus::CorpusManifest;
use crate::sgrid::DEFAULT_JPEG_QUALITY;
use crate::types::{ItemId, QueryId};

pub const ENV_ENDPOINT: &str = "VIC_ENDPOINT_URL";
pub const ENV_API_KEY: &str = "VIC_API_KEY";
pub const ENV_MODEL: &str = "VIC_MODEL";

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("unusable reply: {0}")]
    InvalidReply(String),
    #[error("request could not be built: {0}")]
    Request(String),
}

impl BackendError {
    /// Transport failures and server errors are worth another attempt.
    pub fn is_retryable(&self) -> bool {
        match self {
            BackendError::Transport(_) => true,
            BackendError::Http { status, .. } => *status >= 500,
            BackendError::InvalidReply(_) | BackendError::Request(_) => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Http,
    /// Gold-aware oracle, see [`mock_oracle`].
    Mock,
    /// Always answers with the input order.
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    #[serde(default)]
    pub kind: BackendKind,
    #[serde(default)]
    pub endpoint_url: String,
    #[serde(default)]
    pub model_id: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default)]
    pub temperature: f64,
    /// First retry delay; doubles on every further attempt.
    #[serde(default = "default_backoff")]
    pub backoff_secs: f64,
    #[serde(default = "default_quality")]
    pub jpeg_quality: u8,
    /// Concurrent rerank requests.
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<String>,
    /// Never serialized, so it stays out of reports and fingerprints.
    #[serde(default, skip_serializing)]
    pub api_key: Option<String>,
}

fn default_timeout() -> f64 {
    120.0
}
fn default_retries() -> u32 {
    2
}
fn default_backoff() -> f64 {
    1.0
}
fn default_quality() -> u8 {
    DEFAULT_JPEG_QUALITY
}
fn default_in_flight() -> usize {
    4
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::default(),
            endpoint_url: String::new(),
            model_id: String::new(),
            timeout_secs: default_timeout(),
            max_retries: default_retries(),
            temperature: 0.0,
            backoff_secs: default_backoff(),
            jpeg_quality: default_quality(),
            max_in_flight: default_in_flight(),
            template: None,
            api_key: None,
        }
    }
}

impl BackendConfig {
    pub fn of_kind(kind: BackendKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            return Err(crate::Error::Config("backend timeout must be positive".into()));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(crate::Error::Config("temperature must be non-negative".into()));
        }
        if !(self.backoff_secs.is_finite() && self.backoff_secs >= 0.0) {
            return Err(crate::Error::Config("backoff must be non-negative".into()));
        }
        if self.max_in_flight == 0 {
            return Err(crate::Error::Config("max_in_flight must be at least 1".into()));
        }
        if self.kind == BackendKind::Http && self.endpoint_url.is_empty() {
            return Err(crate::Error::Config(format!(
                "http backend needs an endpoint_url (or {ENV_ENDPOINT})"
            )));
        }
        Ok(())
    }

    /// Fills fields the config left empty from the environment.
    pub fn fill_from_env(&mut self) {
        if self.endpoint_url.is_empty() {
            if let Ok(v) = std::env::var(ENV_ENDPOINT) {
                self.endpoint_url = v;
            }
        }
        if self.model_id.is_empty() {
            if let Ok(v) = std::env::var(ENV_MODEL) {
                self.model_id = v;
            }
        }
        if self.api_key.is_none() {
            self.api_key = std::env::var(ENV_API_KEY).ok().filter(|k| !k.is_empty());
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }

    pub fn backoff(&self, attempt: u32) -> Duration {
        Duration::from_secs_f64(self.backoff_secs * 2f64.powi(attempt as i32))
    }
}

/// A list-wise model. Implementations must tolerate concurrent calls.
pub trait Backend: Send + Sync {
    fn tag(&self) -> String;
    fn complete(&self, bundle: &PromptBundle, cfg: &BackendConfig) -> Result<String, BackendError>;

    /// Whether transcripts should carry the inline image payloads.
    fn sends_images(&self) -> bool {
        false
    }
}

/// OpenAI-style chat-completions client.
pub struct HttpBackend {
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(cfg: &BackendConfig) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(cfg.timeout())
            .build()
            .map_err(|e| BackendError::Request(e.to_string()))?;
        Ok(Self { client })
    }
}

/// Content of the first choice of a chat-completion reply.
pub fn reply_content(body: &Value) -> Result<String, BackendError> {
    let content = &body["choices"][0]["message"]["content"];
    match content {
        Value::String(s) => Ok(s.clone()),
        // some servers return content as a list of text parts
        Value::Array(parts) => Ok(parts
            .iter()
            .filter_map(|p| p["text"].as_str())
            .collect::<Vec<_>>()
            .join("")),
        _ => Err(BackendError::InvalidReply(format!(
            "no choices[0].message.content in {}",
            truncate(&body.to_string(), 200)
        ))),
    }
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

impl Backend for HttpBackend {
    fn tag(&self) -> String {
        "http".into()
    }

    fn sends_images(&self) -> bool {
        true
    }

    fn complete(&self, bundle: &PromptBundle, cfg: &BackendConfig) -> Result<String, BackendError> {
        let body = chat_request(
            bundle,
            &cfg.model_id,
            cfg.temperature,
            ImageMode::Inline {
                quality: cfg.jpeg_quality,
            },
        )
        .map_err(|e| BackendError::Request(e.to_string()))?;
        let mut req = self.client.post(&cfg.endpoint_url).json(&body);
        if let Some(key) = &cfg.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| BackendError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(BackendError::Http {
                status: status.as_u16(),
                body: truncate(&text, 500).to_string(),
            });
        }
        let json: Value =
            serde_json::from_str(&text).map_err(|e| BackendError::InvalidReply(format!("reply is not JSON: {e}")))?;
        reply_content(&json)
    }
}

/// Ranks labels by descending relevance of their items. Slots of the same
/// item stay adjacent in label order; remaining ties go to the lower label.
pub fn mock_oracle(bundle: &PromptBundle, relevance: &HashMap<(QueryId, ItemId), f64>) -> String {
    let rel = |item: &ItemId| {
        relevance
            .get(&(bundle.query.clone(), item.clone()))
            .copied()
            .unwrap_or(0.0)
    };
    let mut first_label: HashMap<&ItemId, usize> = HashMap::new();
    for c in &bundle.candidates {
        first_label.entry(&c.item).or_insert(c.label);
    }
    let mut labels: Vec<(f64, usize, usize)> = bundle
        .candidates
        .iter()
        .map(|c| (rel(&c.item), first_label[&c.item], c.label))
        .collect();
    labels.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let parts: Vec<String> = labels.iter().map(|(_, _, l)| l.to_string()).collect();
    format!("[{}]", parts.join(", "))
}

/// Test double for a perfect-ish model that knows the relevance table.
#[derive(Debug, Clone, Default)]
pub struct MockOracle {
    relevance: HashMap<(QueryId, ItemId), f64>,
}

impl MockOracle {
    pub fn new(relevance: HashMap<(QueryId, ItemId), f64>) -> Self {
        Self { relevance }
    }

    /// Relevance 1 for every gold item of the manifest, 0 otherwise.
    pub fn gold_aware(manifest: &CorpusManifest) -> Self {
        let relevance = manifest
            .gold
            .iter()
            .flat_map(|(q, items)| items.iter().map(move |i| ((q.clone(), i.clone()), 1.0)))
            .collect();
        Self { relevance }
    }
}

impl Backend for MockOracle {
    fn tag(&self) -> String {
        "mock".into()
    }

    fn complete(&self, bundle: &PromptBundle, _cfg: &BackendConfig) -> Result<String, BackendError> {
        Ok(mock_oracle(bundle, &self.relevance))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityBackend;

impl Backend for IdentityBackend {
    fn tag(&self) -> String {
        "identity".into()
    }

    fn complete(&self, bundle: &PromptBundle, _cfg: &BackendConfig) -> Result<String, BackendError> {
        let labels: Vec<String> = (1..=bundle.k()).map(|l| l.to_string()).collect();
        Ok(format!("[{}]", labels.join(", ")))
    }
}

/// Builds the backend a config asks for.
pub fn make_backend(cfg: &BackendConfig, manifest: &CorpusManifest) -> Result<Box<dyn Backend>, BackendError> {
    Ok(match cfg.kind {
        BackendKind::Http => Box::new(HttpBackend::new(cfg)?),
        BackendKind::Mock => Box::new(MockOracle::gold_aware(manifest)),
        BackendKind::Identity => Box::new(IdentityBackend),
    })
}

