//! Text-generation client: prompt templates, a scripted backend for offline
//! runs, and an OpenAI-compatible remote backend.

mod remote;
mod scripted;
mod template;

use std::collections::BTreeMap;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub use remote::{post_with_retries, HttpResponse, RemoteBackend, RemoteConfig, ReqwestTransport, Transport, TransportError};
pub use scripted::{Responder, ScriptedBackend};
pub use template::{hash_vars, render_prompt, template_checksum, template_ids, FixtureKey, PromptBundle};

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("unknown template {0:?}")]
    UnknownTemplate(String),
    #[error("template {template} needs variable {variable:?}")]
    MissingVariable { template: String, variable: String },
    #[error("no fixture for {0}")]
    FixtureMiss(FixtureKey),
    #[error("fixture {0} registered twice")]
    DuplicateKey(FixtureKey),
    #[error("provider error: {0}")]
    ProviderError(String),
    #[error("request timed out")]
    Timeout,
    #[error("authentication rejected (HTTP {0})")]
    AuthError(u16),
    #[error("fixture io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            model: "gpt-4".into(),
            temperature: 0.0,
            max_tokens: 4096,
            seed: None,
        }
    }
}

impl GenerationParams {
    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature.max(0.0);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    #[serde(default)]
    pub provider_meta: BTreeMap<String, Value>,
    pub latency_ms: u64,
}

/// Something that turns a prompt into text.
pub trait Backend: Send + Sync {
    /// Short identifier recorded in run metadata.
    fn id(&self) -> &str;
    fn complete(&self, bundle: &PromptBundle, params: &GenerationParams) -> Result<Completion, LlmError>;
}

/// Counting semaphore for blocking callers (rayon workers).
#[derive(Debug)]
struct Semaphore {
    permits: Mutex<usize>,
    freed: Condvar,
}

impl Semaphore {
    fn new(n: usize) -> Self {
        Self {
            permits: Mutex::new(n.max(1)),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.permits.lock().unwrap_or_else(|e| e.into_inner());
        while *n == 0 {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Semaphore);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.freed.notify_one();
    }
}

/// Thread-safe handle shared by all stages. Caps the number of in-flight
/// requests regardless of how many threads call it.
#[derive(Clone)]
pub struct LlmClient {
    backend: Arc<dyn Backend>,
    limit: Arc<Semaphore>,
    max_in_flight: usize,
}

impl std::fmt::Debug for LlmClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LlmClient")
            .field("backend", &self.backend.id())
            .field("max_in_flight", &self.max_in_flight)
            .finish()
    }
}

impl LlmClient {
    pub fn new(backend: Arc<dyn Backend>, max_in_flight: usize) -> Self {
        Self {
            backend,
            limit: Arc::new(Semaphore::new(max_in_flight)),
            max_in_flight: max_in_flight.max(1),
        }
    }

    pub fn backend_id(&self) -> &str {
        self.backend.id()
    }

    pub fn complete(&self, bundle: &PromptBundle, params: &GenerationParams) -> Result<Completion, LlmError> {
        let _permit = self.limit.acquire();
        let started = Instant::now();
        let mut out = self.backend.complete(bundle, params)?;
        if out.latency_ms == 0 {
            out.latency_ms = started.elapsed().as_millis() as u64;
        }
        tracing::debug!(
            template = %bundle.template_id,
            key = %bundle.fixture_key(),
            latency_ms = out.latency_ms,
            "completion"
        );
        Ok(out)
    }

    /// Renders `template_id` and completes it in one call.
    pub fn complete_template<K, V>(
        &self,
        template_id: &str,
        variables: impl IntoIterator<Item = (K, V)>,
        params: &GenerationParams,
    ) -> Result<(PromptBundle, Completion), LlmError>
    where
        K: Into<String>,
        V: Into<String>,
    {
        let bundle = render_prompt(template_id, variables)?;
        let completion = self.complete(&bundle, params)?;
        Ok((bundle, completion))
    }
}
