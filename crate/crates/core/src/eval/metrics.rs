use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{ActionKind, AgentAction, EvalConfig, EvalError, SimilarityScorer};
use crate::model::{ExpectedAction, TestCase};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamMatchMode {
    /// Case-insensitive, whitespace-trimmed string comparison; numbers and
    /// numeric strings compare by value.
    #[default]
    Normalized,
    /// Exact JSON equality.
    Strict,
}

fn as_number(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse::<f64>().ok().filter(|x| x.is_finite()),
        _ => None,
    }
}

fn as_text(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.trim().to_lowercase()),
        Value::Bool(b) => Some(b.to_string()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

/// Compares two parameter values under `mode`.
pub fn values_match(expected: &Value, predicted: &Value, mode: ParamMatchMode) -> bool {
    if mode == ParamMatchMode::Strict {
        return expected == predicted;
    }
    if let (Some(a), Some(b)) = (as_number(expected), as_number(predicted)) {
        return (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0);
    }
    match (expected, predicted) {
        (Value::Array(a), Value::Array(b)) => {
            a.len() == b.len() && a.iter().zip(b).all(|(x, y)| values_match(x, y, mode))
        }
        (Value::Object(a), Value::Object(b)) => {
            a.len() == b.len() && a.iter().all(|(k, x)| b.get(k).is_some_and(|y| values_match(x, y, mode)))
        }
        _ => match (as_text(expected), as_text(predicted)) {
            (Some(a), Some(b)) => a == b,
            _ => expected == predicted,
        },
    }
}

/// Same non-null parameter names with matching values.
pub fn params_match(expected: &IndexMap<String, Value>, predicted: &IndexMap<String, Value>, mode: ParamMatchMode) -> bool {
    let present = |m: &IndexMap<String, Value>| -> Vec<String> {
        let mut keys: Vec<String> = m.iter().filter(|(_, v)| !v.is_null()).map(|(k, _)| k.clone()).collect();
        keys.sort();
        keys
    };
    if mode == ParamMatchMode::Strict {
        return present(expected) == present(predicted)
            && expected.iter().filter(|(_, v)| !v.is_null()).all(|(k, v)| predicted.get(k) == Some(v));
    }
    let norm = |keys: Vec<String>| -> Vec<String> { keys.into_iter().map(|k| k.to_lowercase()).collect() };
    if norm(present(expected)) != norm(present(predicted)) {
        return false;
    }
    expected.iter().filter(|(_, v)| !v.is_null()).all(|(k, v)| {
        predicted
            .iter()
            .find(|(pk, _)| pk.eq_ignore_ascii_case(k))
            .is_some_and(|(_, pv)| values_match(v, pv, mode))
    })
}

/// Per-test flags. `None` means the dimension does not apply to this test.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeFlags {
    pub reply_recall_hit: Option<bool>,
    pub reply_correct: Option<bool>,
    pub api_recall_hit: Option<bool>,
    pub api_name_correct: Option<bool>,
    pub api_params_correct: Option<bool>,
    pub test_correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub test_id: String,
    pub conversation_id: String,
    pub expected_kind: ActionKind,
    pub predicted_kind: ActionKind,
    pub flags: OutcomeFlags,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub similarity_score: Option<f64>,
    pub action: AgentAction,
}

/// Scores one classified action against a test's expected action.
///
/// * reply recall applies when a reply is expected;
/// * reply correctness when a reply is expected and predicted;
/// * API recall when a call is expected;
/// * API name correctness when a call is expected and predicted;
/// * parameter correctness when the expected API is the one called.
///
/// Malformed output fails every dimension that applies to the expected
/// kind. Only scorer failures are errors.
pub fn evaluate_test(
    test: &TestCase,
    action: &AgentAction,
    config: &EvalConfig,
    scorer: &dyn SimilarityScorer,
) -> Result<TestOutcome, EvalError> {
    let mut flags = OutcomeFlags::default();
    let mut similarity = None;
    let expected_kind = match &test.expected {
        ExpectedAction::Reply { reply_text } => {
            let is_reply = action.kind == ActionKind::Reply;
            flags.reply_recall_hit = Some(is_reply);
            if is_reply {
                let predicted = action.reply_text.as_deref().unwrap_or_default();
                let s = scorer.score(predicted, reply_text)?;
                similarity = Some(s);
                flags.reply_correct = Some(s >= config.similarity_threshold);
            }
            flags.test_correct = flags.reply_correct == Some(true);
            ActionKind::Reply
        }
        ExpectedAction::ApiCall {
            api_name,
            param_bindings,
        } => {
            let is_call = action.kind == ActionKind::ApiCall;
            flags.api_recall_hit = Some(is_call);
            if is_call {
                let same = action.api_name.as_deref() == Some(api_name.as_str());
                flags.api_name_correct = Some(same);
                if same {
                    flags.api_params_correct =
                        Some(params_match(param_bindings, &action.param_bindings, config.param_match_mode));
                }
            }
            flags.test_correct = flags.api_name_correct == Some(true) && flags.api_params_correct == Some(true);
            ActionKind::ApiCall
        }
    };
    Ok(TestOutcome {
        test_id: test.id.clone(),
        conversation_id: test.conversation_id.clone(),
        expected_kind,
        predicted_kind: action.kind,
        flags,
        similarity_score: similarity,
        action: action.clone(),
    })
}

/// `numerator / denominator`; `value` is `None` when nothing was counted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ratio {
    pub numerator: usize,
    pub denominator: usize,
    pub value: Option<f64>,
}

impl Ratio {
    pub fn new(numerator: usize, denominator: usize) -> Self {
        Self {
            numerator,
            denominator,
            value: (denominator > 0).then(|| numerator as f64 / denominator as f64),
        }
    }

    fn count<'a>(flags: impl Iterator<Item = Option<bool>> + 'a) -> Self {
        let (mut num, mut den) = (0, 0);
        for f in flags.flatten() {
            den += 1;
            num += f as usize;
        }
        Self::new(num, den)
    }
}

impl std::fmt::Display for Ratio {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.value {
            Some(v) => write!(f, "{:.1}", v * 100.0),
            None => f.write_str("n/a"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    ReplyRecall,
    ReplyCorrect,
    ApiRecall,
    ApiCorrect,
    ApiParamsCorrect,
    TestCorrect,
    ConversationCorrect,
}

impl Metric {
    pub const ALL: [Metric; 7] = [
        Metric::ReplyRecall,
        Metric::ReplyCorrect,
        Metric::ApiRecall,
        Metric::ApiCorrect,
        Metric::ApiParamsCorrect,
        Metric::TestCorrect,
        Metric::ConversationCorrect,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Metric::ReplyRecall => "Reply Recall",
            Metric::ReplyCorrect => "Reply Correct",
            Metric::ApiRecall => "API Recall",
            Metric::ApiCorrect => "API Correct",
            Metric::ApiParamsCorrect => "API Correct params",
            Metric::TestCorrect => "Test Correct",
            Metric::ConversationCorrect => "Conversation Correct",
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Metric::ReplyRecall => "reply_recall",
            Metric::ReplyCorrect => "reply_correct",
            Metric::ApiRecall => "api_recall",
            Metric::ApiCorrect => "api_correct",
            Metric::ApiParamsCorrect => "api_params_correct",
            Metric::TestCorrect => "test_correct",
            Metric::ConversationCorrect => "conversation_correct",
        }
    }

    /// Accepts the snake_case name or the table label, ignoring case and
    /// punctuation.
    pub fn parse(s: &str) -> Option<Metric> {
        let squash = |t: &str| -> String { t.chars().filter(|c| c.is_alphanumeric()).collect::<String>().to_lowercase() };
        let key = squash(s);
        Metric::ALL
            .into_iter()
            .find(|m| squash(m.label()) == key || squash(m.as_str()) == key)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub reply_recall: Ratio,
    pub reply_correct: Ratio,
    pub api_recall: Ratio,
    pub api_correct: Ratio,
    pub api_params_correct: Ratio,
    pub test_correct: Ratio,
    pub conversation_correct: Ratio,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub similarity_backend: Option<String>,
}

impl MetricsReport {
    pub fn get(&self, metric: Metric) -> &Ratio {
        match metric {
            Metric::ReplyRecall => &self.reply_recall,
            Metric::ReplyCorrect => &self.reply_correct,
            Metric::ApiRecall => &self.api_recall,
            Metric::ApiCorrect => &self.api_correct,
            Metric::ApiParamsCorrect => &self.api_params_correct,
            Metric::TestCorrect => &self.test_correct,
            Metric::ConversationCorrect => &self.conversation_correct,
        }
    }
}

/// Aggregates outcomes into the seven ratios. A conversation counts as
/// correct when every one of its tests is correct.
pub fn aggregate_metrics(outcomes: &[TestOutcome]) -> Result<MetricsReport, EvalError> {
    if outcomes.is_empty() {
        return Err(EvalError::EmptyOutcomes);
    }
    let flags = || outcomes.iter().map(|o| o.flags);
    let mut by_conv: IndexMap<&str, bool> = IndexMap::new();
    for o in outcomes {
        let e = by_conv.entry(o.conversation_id.as_str()).or_insert(true);
        *e &= o.flags.test_correct;
    }
    Ok(MetricsReport {
        reply_recall: Ratio::count(flags().map(|f| f.reply_recall_hit)),
        reply_correct: Ratio::count(flags().map(|f| f.reply_correct)),
        api_recall: Ratio::count(flags().map(|f| f.api_recall_hit)),
        api_correct: Ratio::count(flags().map(|f| f.api_name_correct)),
        api_params_correct: Ratio::count(flags().map(|f| f.api_params_correct)),
        test_correct: Ratio::count(flags().map(|f| Some(f.test_correct))),
        conversation_correct: Ratio::count(by_conv.values().map(|c| Some(*c))),
        similarity_backend: None,
    })
}
