use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::generators::extract_json;
use crate::model::{ApiSpec, ExpectedAction};

/// Action type that agents use to send a message to the customer.
pub const REPLY_ACTION: &str = "reply";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Reply,
    ApiCall,
    Malformed,
}

/// An agent's output after classification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentAction {
    pub kind: ActionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_name: Option<String>,
    #[serde(default, skip_serializing_if = "IndexMap::is_empty")]
    pub param_bindings: IndexMap<String, Value>,
    pub raw_output: String,
}

impl AgentAction {
    pub fn malformed(raw: impl Into<String>) -> Self {
        Self {
            kind: ActionKind::Malformed,
            reply_text: None,
            api_name: None,
            param_bindings: IndexMap::new(),
            raw_output: raw.into(),
        }
    }

    fn reply(text: String, raw: &str) -> Self {
        Self {
            kind: ActionKind::Reply,
            reply_text: Some(text),
            api_name: None,
            param_bindings: IndexMap::new(),
            raw_output: raw.to_string(),
        }
    }
}

/// Renders an expected action as the JSON an ideal agent would emit.
pub fn action_json(expected: &ExpectedAction) -> Value {
    match expected {
        ExpectedAction::Reply { reply_text } => json!({"type": REPLY_ACTION, "parameters": {"message": reply_text}}),
        ExpectedAction::ApiCall {
            api_name,
            param_bindings,
        } => json!({"type": api_name, "parameters": param_bindings}),
    }
}

/// Classifies raw agent output.
///
/// The output must be a `{"type": ..., "parameters": {...}}` object. Type
/// `reply` with a nonempty `parameters.message` is a reply; a type naming one
/// of `apis` with an object (or missing) `parameters` is an API call.
/// Everything else is malformed, unless `plain_text_as_reply` is set, in
/// which case output without any JSON object is taken as a reply.
pub fn classify_action(raw: &str, apis: &[ApiSpec], plain_text_as_reply: bool) -> AgentAction {
    let value = match extract_json(raw) {
        Ok(Value::Object(obj)) => obj,
        Ok(_) => return AgentAction::malformed(raw),
        Err(_) => {
            let text = raw.trim();
            if plain_text_as_reply && !text.is_empty() && !text.starts_with('{') {
                return AgentAction::reply(text.to_string(), raw);
            }
            return AgentAction::malformed(raw);
        }
    };
    let Some(kind) = value.get("type").and_then(Value::as_str).map(str::trim) else {
        return AgentAction::malformed(raw);
    };
    let params = match value.get("parameters") {
        Some(Value::Object(p)) => Some(p.clone()),
        None | Some(Value::Null) => Some(Default::default()),
        Some(_) => None,
    };
    let Some(params) = params else {
        return AgentAction::malformed(raw);
    };
    if kind == REPLY_ACTION {
        return match params.get("message").and_then(Value::as_str) {
            Some(m) if !m.trim().is_empty() => AgentAction::reply(m.to_string(), raw),
            _ => AgentAction::malformed(raw),
        };
    }
    if apis.iter().any(|a| a.name == kind) {
        return AgentAction {
            kind: ActionKind::ApiCall,
            reply_text: None,
            api_name: Some(kind.to_string()),
            param_bindings: params.into_iter().collect(),
            raw_output: raw.to_string(),
        };
    }
    AgentAction::malformed(raw)
}
