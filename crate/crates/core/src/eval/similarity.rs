use std::collections::HashMap;
use std::time::Duration;

use serde_json::{json, Value};

use super::EvalError;
use crate::llm::{RemoteConfig, ReqwestTransport, Transport};

/// Scores how close a predicted reply is to the gold reply, in `[0, 1]`.
pub trait SimilarityScorer: Send + Sync {
    /// Recorded in every report so scores from different backends are never
    /// mixed silently.
    fn id(&self) -> &str;

    fn raw_score(&self, predicted: &str, gold: &str) -> Result<f64, EvalError>;

    /// Checks inputs, short-circuits identical strings to 1.0 and clamps.
    fn score(&self, predicted: &str, gold: &str) -> Result<f64, EvalError> {
        if predicted.trim().is_empty() || gold.trim().is_empty() {
            return Err(EvalError::EmptyText);
        }
        if predicted == gold {
            return Ok(1.0);
        }
        Ok(self.raw_score(predicted, gold)?.clamp(0.0, 1.0))
    }
}

/// Lowercased alphanumeric tokens.
pub fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// F1 over token multisets.
pub fn token_f1(predicted: &str, gold: &str) -> f64 {
    let p = tokens(predicted);
    let g = tokens(gold);
    if p.is_empty() || g.is_empty() {
        return 0.0;
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &g {
        *counts.entry(t).or_default() += 1;
    }
    let mut overlap = 0usize;
    for t in &p {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / p.len() as f64;
    let recall = overlap as f64 / g.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Deterministic lexical scorer.
#[derive(Debug, Clone, Copy, Default)]
pub struct TokenF1;

impl SimilarityScorer for TokenF1 {
    fn id(&self) -> &str {
        "token-f1"
    }

    fn raw_score(&self, predicted: &str, gold: &str) -> Result<f64, EvalError> {
        Ok(token_f1(predicted, gold))
    }
}

/// Cosine similarity of embeddings from an OpenAI-compatible
/// `/embeddings` endpoint. Negative cosines are clamped to 0.
pub struct EmbeddingScorer {
    config: RemoteConfig,
    model: String,
    transport: Box<dyn Transport>,
    id: String,
}

impl EmbeddingScorer {
    pub fn new(config: RemoteConfig, model: impl Into<String>) -> Self {
        Self::with_transport(config, model, Box::new(ReqwestTransport::new()))
    }

    pub fn with_transport(config: RemoteConfig, model: impl Into<String>, transport: Box<dyn Transport>) -> Self {
        let model = model.into();
        Self {
            id: format!("embedding-cosine:{model}"),
            config,
            model,
            transport,
        }
    }

    fn embed(&self, texts: [&str; 2]) -> Result<[Vec<f64>; 2], EvalError> {
        let url = format!("{}/embeddings", self.config.base_url.trim_end_matches('/'));
        let body = json!({"model": self.model, "input": texts});
        let raw = crate::llm::post_with_retries(self.transport.as_ref(), &self.config, &url, &body)
            .map_err(|e| EvalError::BackendUnavailable(e.to_string()))?;
        let v: Value = serde_json::from_str(&raw).map_err(|e| EvalError::BackendUnavailable(e.to_string()))?;
        let vec_at = |i: usize| -> Result<Vec<f64>, EvalError> {
            v["data"][i]["embedding"]
                .as_array()
                .map(|a| a.iter().filter_map(Value::as_f64).collect())
                .ok_or_else(|| EvalError::BackendUnavailable("response has no embeddings".into()))
        };
        Ok([vec_at(0)?, vec_at(1)?])
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

impl SimilarityScorer for EmbeddingScorer {
    fn id(&self) -> &str {
        &self.id
    }

    fn raw_score(&self, predicted: &str, gold: &str) -> Result<f64, EvalError> {
        let [a, b] = self.embed([predicted, gold])?;
        if a.len() != b.len() || a.is_empty() {
            return Err(EvalError::BackendUnavailable("embedding sizes differ".into()));
        }
        Ok(cosine(&a, &b))
    }
}

/// Embedding scorer if `CONVTEST_EMBEDDING_MODEL` is set, token F1
/// otherwise.
pub fn default_scorer() -> Box<dyn SimilarityScorer> {
    match std::env::var("CONVTEST_EMBEDDING_MODEL") {
        Ok(model) if !model.is_empty() => {
            let mut cfg = RemoteConfig::from_env();
            cfg.timeout = Duration::from_secs(30);
            Box::new(EmbeddingScorer::new(cfg, model))
        }
        _ => Box::new(TokenF1),
    }
}
