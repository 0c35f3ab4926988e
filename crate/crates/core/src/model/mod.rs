//! Canonical records passed between pipeline stages.
//!
//! Every type here is a plain value object. They serialize to one JSON
//! object per line in the artifact store.

mod api;
mod call;

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use indexmap::IndexMap;
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::report::{Rule, ValidationReport, Violation};

pub use api::{is_snake_case, validate_api_spec, ApiParam, ApiSpec};
pub use call::{parse_literal, ApiCall};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("malformed API json: {0}")]
    MalformedApiJson(String),
    #[error("API name {0:?} is not snake_case")]
    BadName(String),
    #[error("parameter {param:?} of {api} has an empty type")]
    EmptyParamType { api: String, param: String },
    #[error("parameter {param:?} of {api} is declared twice")]
    DuplicateParam { api: String, param: String },
    #[error("unknown role {0:?}")]
    UnknownRole(String),
    #[error("message content is empty")]
    EmptyContent,
    #[error("cannot parse API call {surface:?}: {reason}")]
    BadCall { surface: String, reason: String },
}

/// Speaker of a conversation message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    #[serde(alias = "customer")]
    User,
    #[serde(alias = "agent")]
    Assistant,
    Api,
    ApiOutput,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::User => "user",
            Role::Assistant => "assistant",
            Role::Api => "api",
            Role::ApiOutput => "api_output",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = ModelError;

    /// Accepts the canonical names plus the `agent`/`customer` aliases.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "user" | "customer" => Ok(Role::User),
            "assistant" | "agent" => Ok(Role::Assistant),
            "api" => Ok(Role::Api),
            "api_output" => Ok(Role::ApiOutput),
            other => Err(ModelError::UnknownRole(other.to_string())),
        }
    }
}

/// One conversation turn. For `api` messages `content` keeps the original
/// call expression and `call` holds its parsed form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMessage")]
pub struct Message {
    pub role: Role,
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub call: Option<ApiCall>,
}

#[derive(Deserialize)]
struct RawMessage {
    role: Role,
    content: String,
    #[serde(default)]
    call: Option<ApiCall>,
}

impl TryFrom<RawMessage> for Message {
    type Error = ModelError;

    fn try_from(raw: RawMessage) -> Result<Self, Self::Error> {
        match raw.call {
            Some(call) if raw.role == Role::Api => {
                if raw.content.trim().is_empty() {
                    return Err(ModelError::EmptyContent);
                }
                Ok(Message {
                    role: raw.role,
                    content: raw.content,
                    call: Some(call),
                })
            }
            _ => Message::new(raw.role, raw.content),
        }
    }
}

impl Message {
    pub fn new(role: Role, content: impl Into<String>) -> Result<Self, ModelError> {
        let content = content.into();
        if content.trim().is_empty() {
            return Err(ModelError::EmptyContent);
        }
        let call = match role {
            Role::Api => Some(ApiCall::parse(&content)?),
            _ => None,
        };
        Ok(Self { role, content, call })
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::new(Role::User, content).expect("user message must be nonempty")
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self::new(Role::Assistant, content).expect("assistant message must be nonempty")
    }

    pub fn api(content: impl Into<String>) -> Result<Self, ModelError> {
        Self::new(Role::Api, content)
    }

    pub fn api_output(content: impl Into<String>) -> Self {
        Self::new(Role::ApiOutput, content).expect("api output must be nonempty")
    }
}

/// Seed customer issue.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Intent {
    pub id: String,
    pub client: String,
    pub issue: String,
    pub name: String,
}

/// Step list an agent follows to resolve an intent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Procedure {
    pub id: String,
    pub intent_id: String,
    pub text: String,
    pub word_count: usize,
    pub step_count: usize,
}

fn step_line() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    // "3.", "4.2.", "7)" at the start of a line
    RE.get_or_init(|| Regex::new(r"(?m)^\s*\d+(?:\.\d+)*[.)]\s").unwrap())
}

/// Counting rule for procedure steps: lines that start with an enumeration
/// token such as `4.`, `4.2.` or `4)`.
pub const STEP_COUNT_RULE: &str = r"lines matching ^\s*\d+(\.\d+)*[.)]\s";

impl Procedure {
    pub fn new(id: impl Into<String>, intent_id: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        Self {
            id: id.into(),
            intent_id: intent_id.into(),
            word_count: text.split_whitespace().count(),
            step_count: step_line().find_iter(&text).count(),
            text,
        }
    }
}

/// APIs extracted for one procedure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcedureApis {
    pub procedure_id: String,
    pub apis: Vec<ApiSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conversation {
    pub id: String,
    /// Absent for conversations generated directly from a procedure.
    pub conv_graph_id: Option<String>,
    pub procedure_id: String,
    #[serde(default)]
    pub path: Vec<String>,
    pub messages: Vec<Message>,
}

/// What the agent under test should do next.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExpectedAction {
    Reply {
        reply_text: String,
    },
    ApiCall {
        api_name: String,
        #[serde(default)]
        param_bindings: IndexMap<String, Value>,
    },
}

impl ExpectedAction {
    pub fn is_reply(&self) -> bool {
        matches!(self, ExpectedAction::Reply { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestCase {
    pub id: String,
    pub conversation_id: String,
    pub step_index: usize,
    pub context: Vec<Message>,
    pub expected: ExpectedAction,
    pub procedure_text: String,
    pub apis: Vec<ApiSpec>,
}

/// Checks the message-order rules of a generated conversation.
///
/// Violations are report entries; the function never fails.
pub fn validate_conversation(messages: &[Message]) -> ValidationReport {
    let mut report = ValidationReport::default();
    let (first, last) = match (messages.first(), messages.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => {
            report.push(Violation::new(Rule::EmptyConversation, None, "conversation has no messages"));
            return report;
        }
    };
    if first.role != Role::User {
        report.push(Violation::new(
            Rule::FirstMessageUser,
            Some("0".to_string()),
            format!("first message has role {}", first.role),
        ));
    }
    if last.role != Role::Assistant {
        report.push(Violation::new(
            Rule::LastMessageAssistant,
            Some((messages.len() - 1).to_string()),
            format!("last message has role {}", last.role),
        ));
    }
    for (i, pair) in messages.windows(2).enumerate() {
        let (cur, next) = (pair[0].role, pair[1].role);
        let broken = match cur {
            Role::Api if next != Role::ApiOutput => Some((Rule::ApiThenOutput, "api not followed by api_output")),
            Role::Assistant if next != Role::User => Some((Rule::AssistantThenUser, "assistant not followed by user")),
            Role::User if !matches!(next, Role::Assistant | Role::Api) => {
                Some((Rule::UserThenAction, "user not followed by assistant or api"))
            }
            Role::ApiOutput if next != Role::Assistant => {
                Some((Rule::OutputThenAssistant, "api_output not followed by assistant"))
            }
            _ => None,
        };
        if let Some((rule, msg)) = broken {
            report.push(Violation::new(rule, Some(i.to_string()), format!("{msg} (next is {next})")));
        }
    }
    report
}
