//! Rule-based validation reports shared by the graph and conversation checkers.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Identifier of a structural rule. Serialized as the variant name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Rule {
    // flowgraph rules
    RootUniqueness,
    EndNodeLeaf,
    EdgeDescription,
    NodeTypeAlphabet,
    WeakConnectivity,
    // conversation graph rules
    RootAssistant,
    UserFollower,
    AssistantFollower,
    ApiFollower,
    EdgeLabel,
    LeafAssistant,
    // warnings only
    Unreachable,
    UnknownApiNode,
    // conversation message sequence rules
    EmptyConversation,
    FirstMessageUser,
    LastMessageAssistant,
    ApiThenOutput,
    AssistantThenUser,
    UserThenAction,
    OutputThenAssistant,
}

impl Rule {
    pub fn as_str(&self) -> &'static str {
        match self {
            Rule::RootUniqueness => "RootUniqueness",
            Rule::EndNodeLeaf => "EndNodeLeaf",
            Rule::EdgeDescription => "EdgeDescription",
            Rule::NodeTypeAlphabet => "NodeTypeAlphabet",
            Rule::WeakConnectivity => "WeakConnectivity",
            Rule::RootAssistant => "RootAssistant",
            Rule::UserFollower => "UserFollower",
            Rule::AssistantFollower => "AssistantFollower",
            Rule::ApiFollower => "ApiFollower",
            Rule::EdgeLabel => "EdgeLabel",
            Rule::LeafAssistant => "LeafAssistant",
            Rule::Unreachable => "Unreachable",
            Rule::UnknownApiNode => "UnknownApiNode",
            Rule::EmptyConversation => "EmptyConversation",
            Rule::FirstMessageUser => "FirstMessageUser",
            Rule::LastMessageAssistant => "LastMessageAssistant",
            Rule::ApiThenOutput => "ApiThenOutput",
            Rule::AssistantThenUser => "AssistantThenUser",
            Rule::UserThenAction => "UserThenAction",
            Rule::OutputThenAssistant => "OutputThenAssistant",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One rule failure, optionally pinned to a node, edge or message index.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Violation {
    pub rule: Rule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
    pub message: String,
}

impl Violation {
    pub fn new(rule: Rule, subject: impl Into<Option<String>>, message: impl Into<String>) -> Self {
        Self {
            rule,
            subject: subject.into(),
            message: message.into(),
        }
    }
}

/// Outcome of a validator. An empty `violations` list means the input is
/// accepted; warnings never cause rejection.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn push(&mut self, violation: Violation) {
        self.violations.push(violation);
    }

    pub fn warn(&mut self, warning: Violation) {
        self.warnings.push(warning);
    }

    /// Distinct rule ids among the violations, sorted.
    pub fn rules(&self) -> Vec<Rule> {
        let mut rules: Vec<Rule> = self.violations.iter().map(|v| v.rule).collect();
        rules.sort();
        rules.dedup();
        rules
    }

    /// Sorts entries so the report does not depend on declaration order.
    pub(crate) fn normalized(mut self) -> Self {
        self.violations.sort();
        self.violations.dedup();
        self.warnings.sort();
        self.warnings.dedup();
        self
    }

    /// Compact one-line summary used as a discard reason.
    pub fn summary(&self) -> String {
        self.rules()
            .iter()
            .map(Rule::as_str)
            .collect::<Vec<_>>()
            .join(",")
    }
}
