use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{action_json, aggregate_metrics, classify_action, evaluate_test, AgentAction, EvalConfig, EvalError};
use super::{MetricsReport, SimilarityScorer, TestOutcome, REPLY_ACTION};
use crate::llm::{render_prompt, GenerationParams, LlmClient, LlmError, PromptBundle};
use crate::model::{ApiSpec, Message, TestCase};

/// Agent under test. Returns its raw output for one test.
pub trait AgentAdapter: Send + Sync {
    fn id(&self) -> &str;
    fn act(&self, test: &TestCase) -> Result<String, String>;
}

/// Returns the expected action verbatim.
#[derive(Debug, Clone, Copy, Default)]
pub struct GoldReplayAgent;

impl AgentAdapter for GoldReplayAgent {
    fn id(&self) -> &str {
        "gold-replay"
    }

    fn act(&self, test: &TestCase) -> Result<String, String> {
        Ok(action_json(&test.expected).to_string())
    }
}

/// Always replies with the same message.
#[derive(Debug, Clone)]
pub struct AlwaysReplyAgent {
    pub message: String,
}

impl Default for AlwaysReplyAgent {
    fn default() -> Self {
        Self {
            message: "Could you tell me more about your issue?".into(),
        }
    }
}

impl AgentAdapter for AlwaysReplyAgent {
    fn id(&self) -> &str {
        "always-reply"
    }

    fn act(&self, _: &TestCase) -> Result<String, String> {
        Ok(json!({"type": REPLY_ACTION, "parameters": {"message": self.message}}).to_string())
    }
}

/// Emits the same raw text for every test, whatever it is.
#[derive(Debug, Clone)]
pub struct FixedOutputAgent {
    pub output: String,
}

impl AgentAdapter for FixedOutputAgent {
    fn id(&self) -> &str {
        "fixed-output"
    }

    fn act(&self, _: &TestCase) -> Result<String, String> {
        Ok(self.output.clone())
    }
}

/// The reply action as advertised to agents next to the real APIs.
pub fn reply_action_spec() -> Value {
    json!({
        "name": REPLY_ACTION,
        "desc": "Send a message to the user.",
        "params": [{"name": "message", "type": "str"}],
    })
}

/// JSON list of the actions an agent may take for a test.
pub fn available_actions(apis: &[ApiSpec]) -> String {
    let mut list: Vec<Value> = apis.iter().map(|a| serde_json::to_value(a).unwrap_or(Value::Null)).collect();
    list.push(reply_action_spec());
    serde_json::to_string_pretty(&list).unwrap_or_default()
}

fn conversation_text(context: &[Message]) -> String {
    let msgs: Vec<Value> = context
        .iter()
        .map(|m| json!({"role": m.role.as_str(), "content": m.content}))
        .collect();
    serde_json::to_string_pretty(&msgs).unwrap_or_default()
}

/// Prompt given to an LLM agent for one test.
pub fn agent_prompt(test: &TestCase) -> Result<PromptBundle, LlmError> {
    render_prompt(
        "agent",
        [
            ("procedure", test.procedure_text.clone()),
            ("available_actions", available_actions(&test.apis)),
            ("conversation", conversation_text(&test.context)),
        ],
    )
}

/// An LLM prompted with the agent template.
pub struct LlmAgent {
    id: String,
    client: LlmClient,
    params: GenerationParams,
}

impl LlmAgent {
    pub fn new(id: impl Into<String>, client: LlmClient, params: GenerationParams) -> Self {
        Self {
            id: id.into(),
            client,
            params,
        }
    }
}

impl AgentAdapter for LlmAgent {
    fn id(&self) -> &str {
        &self.id
    }

    fn act(&self, test: &TestCase) -> Result<String, String> {
        let bundle = agent_prompt(test).map_err(|e| e.to_string())?;
        self.client
            .complete(&bundle, &self.params)
            .map(|c| c.text)
            .map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub agent_id: String,
    pub report: MetricsReport,
    pub outcomes: Vec<TestOutcome>,
}

/// Runs `agent` on every test, classifies and scores its outputs, and
/// aggregates. Adapter failures count as malformed output. Outcomes keep
/// the order of `tests`.
pub fn run_agent_suite(
    tests: &[TestCase],
    agent: &dyn AgentAdapter,
    config: &EvalConfig,
    scorer: &dyn SimilarityScorer,
) -> Result<SuiteResult, EvalError> {
    config.check()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.max_parallel.max(1))
        .build()
        .map_err(|e| EvalError::BackendUnavailable(e.to_string()))?;
    let outcomes: Vec<TestOutcome> = pool.install(|| {
        use rayon::prelude::*;
        tests
            .par_iter()
            .map(|t| {
                let action = match agent.act(t) {
                    Ok(raw) => classify_action(&raw, &t.apis, config.plain_text_as_reply),
                    Err(e) => {
                        tracing::warn!(test = %t.id, error = %e, "agent failed");
                        AgentAction::malformed(format!("agent error: {e}"))
                    }
                };
                evaluate_test(t, &action, config, scorer)
            })
            .collect::<Result<Vec<_>, _>>()
    })?;
    let mut report = aggregate_metrics(&outcomes)?;
    report.similarity_backend = Some(scorer.id().to_string());
    Ok(SuiteResult {
        agent_id: agent.id().to_string(),
        report,
        outcomes,
    })
}
