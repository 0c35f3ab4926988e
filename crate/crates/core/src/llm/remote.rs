use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde_json::{json, Value};
use thiserror::Error;

use super::{Backend, Completion, GenerationParams, LlmError, PromptBundle};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("timed out")]
    Timeout,
    #[error("{0}")]
    Other(String),
}

/// Minimal HTTP POST used by the remote backend and the embedding scorer.
/// Swappable so retry and error mapping can be tested without a network.
pub trait Transport: Send + Sync {
    fn post_json(
        &self,
        url: &str,
        headers: &[(String, String)],
        body: &Value,
        timeout: Duration,
    ) -> Result<HttpResponse, TransportError>;
}

#[derive(Debug, Default)]
pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Transport for ReqwestTransport {
    fn post_json(
        &self,
        url: &str,
        headers: &[(String, String)],
        body: &Value,
        timeout: Duration,
    ) -> Result<HttpResponse, TransportError> {
        let mut req = self.client.post(url).timeout(timeout).json(body);
        for (k, v) in headers {
            req = req.header(k.as_str(), v.as_str());
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                TransportError::Timeout
            } else {
                TransportError::Other(e.to_string())
            }
        })?;
        let status = resp.status().as_u16();
        let body = resp.text().map_err(|e| TransportError::Other(e.to_string()))?;
        Ok(HttpResponse { status, body })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteConfig {
    /// Base URL of an OpenAI-compatible API, e.g. `https://api.openai.com/v1`.
    pub base_url: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub max_retries: u32,
    pub backoff_base: Duration,
    pub backoff_max: Duration,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            api_key: None,
            timeout: Duration::from_secs(120),
            max_retries: 4,
            backoff_base: Duration::from_millis(500),
            backoff_max: Duration::from_secs(20),
        }
    }
}

impl RemoteConfig {
    /// Reads `CONVTEST_BASE_URL` and `CONVTEST_API_KEY` (falling back to
    /// `OPENAI_API_KEY`).
    pub fn from_env() -> Self {
        let mut cfg = Self::default();
        if let Ok(url) = std::env::var("CONVTEST_BASE_URL") {
            cfg.base_url = url;
        }
        cfg.api_key = std::env::var("CONVTEST_API_KEY")
            .or_else(|_| std::env::var("OPENAI_API_KEY"))
            .ok();
        cfg
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt).unwrap_or(u32::MAX);
        self.backoff_base.saturating_mul(factor).min(self.backoff_max)
    }

    pub(crate) fn headers(&self) -> Vec<(String, String)> {
        self.api_key
            .iter()
            .map(|k| ("Authorization".to_string(), format!("Bearer {k}")))
            .collect()
    }
}

/// Chat-completions client. Retries HTTP 429, 5xx and transport errors with
/// exponential backoff; 401/403 fail immediately.
pub struct RemoteBackend {
    config: RemoteConfig,
    transport: Box<dyn Transport>,
}

impl std::fmt::Debug for RemoteBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteBackend").field("base_url", &self.config.base_url).finish()
    }
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Self {
        Self::with_transport(config, Box::new(ReqwestTransport::new()))
    }

    pub fn with_transport(config: RemoteConfig, transport: Box<dyn Transport>) -> Self {
        Self { config, transport }
    }

    fn request_body(bundle: &PromptBundle, params: &GenerationParams) -> Value {
        let mut body = json!({
            "model": params.model,
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
            "messages": [
                {"role": "system", "content": bundle.system},
                {"role": "user", "content": bundle.user},
            ],
        });
        if let Some(seed) = params.seed {
            body["seed"] = json!(seed);
        }
        body
    }
}

/// POSTs `body` and returns the 2xx response body, retrying 429, 5xx and
/// transport failures with bounded exponential backoff.
pub fn post_with_retries(
    transport: &dyn Transport,
    config: &RemoteConfig,
    url: &str,
    body: &Value,
) -> Result<String, LlmError> {
    let headers = config.headers();
    let mut attempt = 0;
    loop {
        let failure = match transport.post_json(url, &headers, body, config.timeout) {
            Ok(resp) if (200..300).contains(&resp.status) => return Ok(resp.body),
            Ok(resp) if resp.status == 401 || resp.status == 403 => return Err(LlmError::AuthError(resp.status)),
            Ok(resp) if resp.status == 429 || resp.status >= 500 => {
                LlmError::ProviderError(format!("HTTP {}: {}", resp.status, truncate(&resp.body)))
            }
            Ok(resp) => {
                return Err(LlmError::ProviderError(format!(
                    "HTTP {}: {}",
                    resp.status,
                    truncate(&resp.body)
                )))
            }
            Err(TransportError::Timeout) => LlmError::Timeout,
            Err(TransportError::Other(e)) => LlmError::ProviderError(e),
        };
        if attempt >= config.max_retries {
            return Err(failure);
        }
        let wait = config.backoff(attempt);
        tracing::warn!(attempt, ?wait, error = %failure, "retrying request");
        std::thread::sleep(wait);
        attempt += 1;
    }
}

fn truncate(s: &str) -> &str {
    match s.char_indices().nth(200) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

impl Backend for RemoteBackend {
    fn id(&self) -> &str {
        "remote"
    }

    fn complete(&self, bundle: &PromptBundle, params: &GenerationParams) -> Result<Completion, LlmError> {
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let started = Instant::now();
        let raw = post_with_retries(self.transport.as_ref(), &self.config, &url, &Self::request_body(bundle, params))?;
        let parsed: Value =
            serde_json::from_str(&raw).map_err(|e| LlmError::ProviderError(format!("bad response json: {e}")))?;
        let text = parsed["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| LlmError::ProviderError("response has no choices[0].message.content".into()))?
            .to_string();
        let mut meta = BTreeMap::new();
        for k in ["id", "model", "usage"] {
            if let Some(v) = parsed.get(k) {
                meta.insert(k.to_string(), v.clone());
            }
        }
        Ok(Completion {
            text,
            provider_meta: meta,
            latency_ms: started.elapsed().as_millis() as u64,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::render_prompt;
    use std::sync::Mutex;

    struct Script {
        replies: Mutex<Vec<Result<HttpResponse, TransportError>>>,
        calls: Mutex<usize>,
    }

    impl Script {
        fn new(mut replies: Vec<Result<HttpResponse, TransportError>>) -> Self {
            replies.reverse();
            Self {
                replies: Mutex::new(replies),
                calls: Mutex::new(0),
            }
        }
    }

    impl Transport for &'static Script {
        fn post_json(&self, _: &str, _: &[(String, String)], _: &Value, _: Duration) -> Result<HttpResponse, TransportError> {
            *self.calls.lock().unwrap() += 1;
            self.replies.lock().unwrap().pop().expect("unexpected extra request")
        }
    }

    fn ok(text: &str) -> Result<HttpResponse, TransportError> {
        Ok(HttpResponse {
            status: 200,
            body: json!({"choices": [{"message": {"content": text}}], "model": "m"}).to_string(),
        })
    }

    fn status(code: u16) -> Result<HttpResponse, TransportError> {
        Ok(HttpResponse {
            status: code,
            body: "nope".into(),
        })
    }

    fn backend(script: &'static Script, retries: u32) -> RemoteBackend {
        let config = RemoteConfig {
            max_retries: retries,
            backoff_base: Duration::from_millis(1),
            api_key: Some("k".into()),
            ..RemoteConfig::default()
        };
        RemoteBackend::with_transport(config, Box::new(script))
    }

    fn run(b: &RemoteBackend) -> Result<Completion, LlmError> {
        let bundle = render_prompt("convgraph", [("flowgraph", "x")]).unwrap();
        b.complete(&bundle, &GenerationParams::default())
    }

    #[test]
    fn retries_429_then_succeeds() {
        let script: &'static Script = Box::leak(Box::new(Script::new(vec![status(429), ok("done")])));
        let out = run(&backend(script, 3)).unwrap();
        assert_eq!(out.text, "done");
        assert_eq!(*script.calls.lock().unwrap(), 2);
    }

    #[test]
    fn auth_errors_are_not_retried() {
        let script: &'static Script = Box::leak(Box::new(Script::new(vec![status(401)])));
        assert!(matches!(run(&backend(script, 3)), Err(LlmError::AuthError(401))));
        assert_eq!(*script.calls.lock().unwrap(), 1);
    }

    #[test]
    fn gives_up_after_retries() {
        let script: &'static Script = Box::leak(Box::new(Script::new(vec![status(503), status(502), status(500)])));
        assert!(matches!(run(&backend(script, 2)), Err(LlmError::ProviderError(_))));
        assert_eq!(*script.calls.lock().unwrap(), 3);
    }

    #[test]
    fn timeout_surfaces() {
        let script: &'static Script = Box::leak(Box::new(Script::new(vec![Err(TransportError::Timeout)])));
        assert!(matches!(run(&backend(script, 0)), Err(LlmError::Timeout)));
    }

    #[test]
    fn backoff_is_bounded() {
        let cfg = RemoteConfig::default();
        assert_eq!(cfg.backoff(0), Duration::from_millis(500));
        assert_eq!(cfg.backoff(2), Duration::from_secs(2));
        assert_eq!(cfg.backoff(40), cfg.backoff_max);
    }
}
