use std::sync::OnceLock;

use regex::Regex;
use thiserror::Error;

use super::{Graph, GraphKind, NodeType};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("graph text is empty")]
    EmptyInput,
    #[error("line {line}: {message}")]
    SyntaxError { line: usize, message: String },
    #[error("line {line}: node {id} declared twice")]
    DuplicateNodeId { id: String, line: usize },
    #[error("edge {edge} references missing node {node}")]
    DanglingEdge { edge: String, node: String },
}

fn node_id_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^N[0-9]+$").unwrap())
}

fn edge_id_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^E[0-9]+$").unwrap())
}

/// Returns the text between the first `<flow>` and the next `</flow>`,
/// together with the number of lines skipped before it. Text without the
/// wrapper is returned unchanged.
pub fn strip_flow_block(text: &str) -> (&str, usize) {
    const OPEN: &str = "<flow>";
    const CLOSE: &str = "</flow>";
    match text.find(OPEN) {
        Some(start) => {
            let body_start = start + OPEN.len();
            let body_end = text[body_start..]
                .find(CLOSE)
                .map(|i| body_start + i)
                .unwrap_or(text.len());
            let skipped = text[..body_start].matches('\n').count();
            (&text[body_start..body_end], skipped)
        }
        None => (text, 0),
    }
}

/// Parses graph text of the given kind.
///
/// Blank lines and `<flow>`/`</flow>` wrapper tags are skipped; every other
/// line must be a node or edge statement. Repeated edge ids are kept (each
/// edge gets its own internal key); repeated node ids are an error. Edges may
/// reference nodes declared later in the text.
pub fn parse_graph(text: &str, kind: GraphKind) -> Result<Graph, ParseError> {
    let (body, offset) = strip_flow_block(text);
    if body.trim().is_empty() {
        return Err(ParseError::EmptyInput);
    }
    let mut graph = Graph::new(kind);
    for (i, raw) in body.lines().enumerate() {
        let line_no = offset + i + 1;
        let line = raw.trim();
        if line.is_empty() || line == "<flow>" || line == "</flow>" {
            continue;
        }
        let stmt = split_statement(line).map_err(|message| ParseError::SyntaxError {
            line: line_no,
            message: message.to_string(),
        })?;
        if node_id_re().is_match(stmt.id) {
            if graph.nodes.contains_key(stmt.id) {
                return Err(ParseError::DuplicateNodeId {
                    id: stmt.id.to_string(),
                    line: line_no,
                });
            }
            let ty = stmt.middle.trim();
            if ty.is_empty() {
                return Err(ParseError::SyntaxError {
                    line: line_no,
                    message: "node type is empty".into(),
                });
            }
            graph.add_node(stmt.id, NodeType::parse(ty), stmt.description);
        } else if edge_id_re().is_match(stmt.id) {
            let (source, target) = match stmt.middle.split(',').map(str::trim).collect::<Vec<_>>()[..] {
                [s, t] if node_id_re().is_match(s) && node_id_re().is_match(t) => (s, t),
                _ => {
                    return Err(ParseError::SyntaxError {
                        line: line_no,
                        message: format!("edge endpoints {:?} are not (N<a>, N<b>)", stmt.middle),
                    })
                }
            };
            graph.add_edge(stmt.id, source, target, stmt.description);
        } else {
            return Err(ParseError::SyntaxError {
                line: line_no,
                message: format!("id {:?} is neither N<int> nor E<int>", stmt.id),
            });
        }
    }
    if graph.nodes.is_empty() && graph.edges.is_empty() {
        return Err(ParseError::EmptyInput);
    }
    for e in &graph.edges {
        for end in [&e.source, &e.target] {
            if !graph.nodes.contains_key(end.as_str()) {
                return Err(ParseError::DanglingEdge {
                    edge: e.id.clone(),
                    node: end.clone(),
                });
            }
        }
    }
    Ok(graph)
}

struct Statement<'a> {
    id: &'a str,
    middle: &'a str,
    description: &'a str,
}

// `[id](middle){description}` with free whitespace between the groups.
// The description runs from the first `{` to the last `}`.
fn split_statement(line: &str) -> Result<Statement<'_>, &'static str> {
    let rest = line.strip_prefix('[').ok_or("statement must start with '['")?;
    let close = rest.find(']').ok_or("missing ']'")?;
    let id = rest[..close].trim();
    let rest = rest[close + 1..].trim_start();
    let rest = rest.strip_prefix('(').ok_or("missing '(' after id")?;
    let close = rest.find(')').ok_or("missing ')'")?;
    let middle = &rest[..close];
    let rest = rest[close + 1..].trim_start();
    let rest = rest.strip_prefix('{').ok_or("missing '{' description")?;
    let description = rest.strip_suffix('}').ok_or("description must end with '}'")?;
    Ok(Statement { id, middle, description })
}

/// Writes a graph back to the line format: nodes first, then edges, each in
/// declaration order. Empty descriptions are written as `{}`.
pub fn serialize_graph(graph: &Graph) -> String {
    let mut out = String::new();
    for n in graph.nodes.values() {
        out.push_str(&format!("[{}]({}){{{}}}\n", n.id, n.node_type, n.description));
    }
    for e in &graph.edges {
        out.push_str(&format!("[{}]({}, {}){{{}}}\n", e.id, e.source, e.target, e.description));
    }
    out
}

/// `serialize_graph` wrapped in `<flow>` tags.
pub fn to_flow_block(graph: &Graph) -> String {
    format!("<flow>\n{}</flow>", serialize_graph(graph))
}
