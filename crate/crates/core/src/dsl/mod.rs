//! The line-oriented graph format shared by flowgraphs and conversation
//! graphs:
//!
//! ```text
//! [N0](start_message){Greet the customer}
//! [E0](N0, N1){Didn't receive my order}
//! ```
//!
//! A line whose id starts with `N` declares a node, `E` declares an edge.

mod parse;
mod validate;

use std::collections::BTreeMap;
use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

pub use parse::{parse_graph, serialize_graph, strip_flow_block, to_flow_block, ParseError};
pub use validate::{validate_conversation_graph, validate_flowgraph, validate_graph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphKind {
    Flow,
    Conversation,
}

impl fmt::Display for GraphKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GraphKind::Flow => "flow",
            GraphKind::Conversation => "conversation",
        })
    }
}

/// Node types of both alphabets. Unrecognized type strings are kept so the
/// validators can report them instead of the parser failing.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum NodeType {
    StartMessage,
    Message,
    EndMessage,
    Assistant,
    User,
    Api,
    Other(String),
}

impl NodeType {
    /// Reads a type token. `agent` and `customer` are accepted as aliases
    /// of `assistant` and `user`.
    pub fn parse(token: &str) -> Self {
        match token.trim() {
            "start_message" => NodeType::StartMessage,
            "message" => NodeType::Message,
            "end_message" => NodeType::EndMessage,
            "assistant" | "agent" => NodeType::Assistant,
            "user" | "customer" => NodeType::User,
            "api" => NodeType::Api,
            other => NodeType::Other(other.to_string()),
        }
    }

    pub fn as_str(&self) -> &str {
        match self {
            NodeType::StartMessage => "start_message",
            NodeType::Message => "message",
            NodeType::EndMessage => "end_message",
            NodeType::Assistant => "assistant",
            NodeType::User => "user",
            NodeType::Api => "api",
            NodeType::Other(s) => s,
        }
    }

    pub fn belongs_to(&self, kind: GraphKind) -> bool {
        match kind {
            GraphKind::Flow => matches!(
                self,
                NodeType::StartMessage | NodeType::Message | NodeType::EndMessage | NodeType::Api
            ),
            GraphKind::Conversation => matches!(self, NodeType::Assistant | NodeType::User | NodeType::Api),
        }
    }
}

impl fmt::Display for NodeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for NodeType {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for NodeType {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(NodeType::parse(&s))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: String,
    pub node_type: NodeType,
    pub description: String,
}

/// An edge. `id` is the surface id as written, which may repeat; `key` is
/// the internal position and is always unique.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub key: usize,
    pub id: String,
    pub source: String,
    pub target: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Graph {
    pub kind: GraphKind,
    /// Nodes in declaration order.
    pub nodes: IndexMap<String, GraphNode>,
    pub edges: Vec<GraphEdge>,
}

impl Graph {
    pub fn new(kind: GraphKind) -> Self {
        Self {
            kind,
            nodes: IndexMap::new(),
            edges: Vec::new(),
        }
    }

    pub fn node(&self, id: &str) -> Option<&GraphNode> {
        self.nodes.get(id)
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes.get_index_of(id)
    }

    pub fn outgoing<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a GraphEdge> + 'a {
        self.edges.iter().filter(move |e| e.source == id)
    }

    pub fn incoming<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a GraphEdge> + 'a {
        self.edges.iter().filter(move |e| e.target == id)
    }

    /// Distinct child ids in edge declaration order.
    pub fn children(&self, id: &str) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for e in self.edges.iter().filter(|e| e.source == id) {
            if !out.contains(&e.target.as_str()) {
                out.push(&e.target);
            }
        }
        out
    }

    pub fn is_leaf(&self, id: &str) -> bool {
        self.outgoing(id).next().is_none()
    }

    /// Nodes with no incoming edge, in declaration order.
    pub fn roots(&self) -> Vec<&GraphNode> {
        self.nodes
            .values()
            .filter(|n| self.incoming(&n.id).next().is_none())
            .collect()
    }

    /// The unique parentless node, if there is exactly one.
    pub fn root(&self) -> Option<&GraphNode> {
        match self.roots().as_slice() {
            [only] => Some(*only),
            _ => None,
        }
    }

    /// Description of the first edge `source -> target`, if any.
    pub fn edge_between(&self, source: &str, target: &str) -> Option<&GraphEdge> {
        self.edges.iter().find(|e| e.source == source && e.target == target)
    }

    /// Largest integer used in `N<k>` ids, if any.
    pub fn max_node_number(&self) -> Option<u64> {
        self.nodes.keys().filter_map(|id| id[1..].parse().ok()).max()
    }

    pub fn max_edge_number(&self) -> Option<u64> {
        self.edges.iter().filter_map(|e| e.id[1..].parse().ok()).max()
    }

    pub fn add_node(&mut self, id: impl Into<String>, node_type: NodeType, description: impl Into<String>) {
        let id = id.into();
        self.nodes.insert(
            id.clone(),
            GraphNode {
                id,
                node_type,
                description: description.into(),
            },
        );
    }

    pub fn add_edge(
        &mut self,
        id: impl Into<String>,
        source: impl Into<String>,
        target: impl Into<String>,
        description: impl Into<String>,
    ) {
        let key = self.edges.len();
        self.edges.push(GraphEdge {
            key,
            id: id.into(),
            source: source.into(),
            target: target.into(),
            description: description.into(),
        });
    }

    /// Same node ids, types and descriptions, and the same multiset of
    /// `(id, source, target, description)` edges. Declaration order is
    /// ignored.
    pub fn is_isomorphic(&self, other: &Graph) -> bool {
        if self.kind != other.kind || self.nodes.len() != other.nodes.len() {
            return false;
        }
        let same_nodes = self.nodes.values().all(|n| other.nodes.get(&n.id) == Some(n));
        same_nodes && self.edge_multiset() == other.edge_multiset()
    }

    fn edge_multiset(&self) -> BTreeMap<(&str, &str, &str, &str), usize> {
        let mut m = BTreeMap::new();
        for e in &self.edges {
            *m.entry((e.id.as_str(), e.source.as_str(), e.target.as_str(), e.description.as_str()))
                .or_insert(0) += 1;
        }
        m
    }
}
