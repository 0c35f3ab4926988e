//! Scoring agents against extracted tests.
//!
//! An agent answers each test with a JSON action. The action is classified
//! ([`classify_action`]), compared with the expected action
//! ([`evaluate_test`]) and the per-test flags are aggregated into seven
//! ratios ([`aggregate_metrics`]).

mod agents;
mod classify;
mod compare;
mod metrics;
mod similarity;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use agents::{
    agent_prompt, available_actions, reply_action_spec, run_agent_suite, AgentAdapter, AlwaysReplyAgent,
    FixedOutputAgent, GoldReplayAgent, LlmAgent, SuiteResult,
};
pub use classify::{action_json, classify_action, ActionKind, AgentAction, REPLY_ACTION};
pub use compare::{compare_reports, pearson, render_table, Comparison, PairedValue, TableFormat};
pub use metrics::{
    aggregate_metrics, evaluate_test, params_match, values_match, Metric, MetricsReport, OutcomeFlags,
    ParamMatchMode, Ratio, TestOutcome,
};
pub use similarity::{cosine, default_scorer, token_f1, tokens, EmbeddingScorer, SimilarityScorer, TokenF1};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("similarity inputs must be nonempty")]
    EmptyText,
    #[error("similarity backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("no outcomes to aggregate")]
    EmptyOutcomes,
    #[error("reports do not cover the same agents: {0}")]
    MismatchedAgents(String),
    #[error("need at least 2 agents, got {0}")]
    TooFewAgents(usize),
    #[error("metric is constant across agents")]
    ZeroVariance,
    #[error("similarity threshold {0} is outside (0, 1)")]
    BadThreshold(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Minimum similarity for a reply to count as correct.
    pub similarity_threshold: f64,
    pub param_match_mode: ParamMatchMode,
    /// Treat output that contains no JSON object as a reply.
    #[serde(default)]
    pub plain_text_as_reply: bool,
    /// Tests evaluated concurrently.
    pub max_parallel: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            similarity_threshold: 0.55,
            param_match_mode: ParamMatchMode::Normalized,
            plain_text_as_reply: false,
            max_parallel: 8,
        }
    }
}

impl EvalConfig {
    pub fn check(&self) -> Result<(), EvalError> {
        let t = self.similarity_threshold;
        if t > 0.0 && t < 1.0 {
            Ok(())
        } else {
            Err(EvalError::BadThreshold(t))
        }
    }
}
