use std::collections::{HashSet, VecDeque};

use super::{Graph, GraphKind, NodeType};
use crate::report::{Rule, ValidationReport, Violation};

/// Runs the validator matching `graph.kind`.
pub fn validate_graph(graph: &Graph) -> ValidationReport {
    match graph.kind {
        GraphKind::Flow => validate_flowgraph(graph),
        GraphKind::Conversation => validate_conversation_graph(graph),
    }
}

/// Structural rules for flowgraphs:
///
/// * `RootUniqueness`: exactly one parentless node, of type `start_message`,
///   and no other `start_message` node.
/// * `EndNodeLeaf`: `end_message` nodes have no outgoing edges.
/// * `EdgeDescription`: every edge carries a description (customer reply,
///   or API output for edges leaving `api` nodes).
/// * `NodeTypeAlphabet`: node types come from the flowgraph alphabet.
/// * `WeakConnectivity`: the graph is one weakly connected component.
///
/// Nodes not reachable from the root are reported as `Unreachable` warnings.
pub fn validate_flowgraph(graph: &Graph) -> ValidationReport {
    let mut report = ValidationReport::default();
    check_alphabet(graph, GraphKind::Flow, &mut report);

    let roots = graph.roots();
    match roots.as_slice() {
        [] => report.push(Violation::new(Rule::RootUniqueness, None, "graph has no parentless node")),
        [root] if root.node_type != NodeType::StartMessage => report.push(Violation::new(
            Rule::RootUniqueness,
            Some(root.id.clone()),
            format!("root node has type {}, expected start_message", root.node_type),
        )),
        [_] => {}
        many => report.push(Violation::new(
            Rule::RootUniqueness,
            None,
            format!(
                "{} parentless nodes: {}",
                many.len(),
                many.iter().map(|n| n.id.as_str()).collect::<Vec<_>>().join(", ")
            ),
        )),
    }
    let starts: Vec<&str> = graph
        .nodes
        .values()
        .filter(|n| n.node_type == NodeType::StartMessage)
        .map(|n| n.id.as_str())
        .collect();
    if starts.len() > 1 {
        report.push(Violation::new(
            Rule::RootUniqueness,
            None,
            format!("{} start_message nodes: {}", starts.len(), starts.join(", ")),
        ));
    }

    for n in graph.nodes.values().filter(|n| n.node_type == NodeType::EndMessage) {
        if let Some(e) = graph.outgoing(&n.id).next() {
            report.push(Violation::new(
                Rule::EndNodeLeaf,
                Some(n.id.clone()),
                format!("end_message node has outgoing edge {}", e.id),
            ));
        }
    }

    for e in &graph.edges {
        if e.description.trim().is_empty() {
            let from_api = graph.node(&e.source).is_some_and(|n| n.node_type == NodeType::Api);
            let what = if from_api { "API output" } else { "customer reply" };
            report.push(Violation::new(
                Rule::EdgeDescription,
                Some(edge_subject(e)),
                format!("edge {} -> {} has no {what}", e.source, e.target),
            ));
        }
    }

    check_connectivity(graph, &mut report);
    report.normalized()
}

/// Structural rules for conversation graphs:
///
/// * `RootAssistant`: exactly one parentless node, of type `assistant`.
/// * `UserFollower`: user nodes are followed only by assistant or api nodes.
/// * `AssistantFollower`: assistant nodes are followed only by user nodes.
/// * `ApiFollower`: api nodes are followed only by api or assistant nodes.
/// * `EdgeLabel`: only edges leaving api nodes may carry a description.
/// * `LeafAssistant`: every leaf is an assistant node.
/// * `NodeTypeAlphabet`: node types come from the conversation alphabet.
pub fn validate_conversation_graph(graph: &Graph) -> ValidationReport {
    let mut report = ValidationReport::default();
    check_alphabet(graph, GraphKind::Conversation, &mut report);

    let roots = graph.roots();
    match roots.as_slice() {
        [root] if root.node_type == NodeType::Assistant => {}
        [root] => report.push(Violation::new(
            Rule::RootAssistant,
            Some(root.id.clone()),
            format!("root node has type {}, expected assistant", root.node_type),
        )),
        other => report.push(Violation::new(
            Rule::RootAssistant,
            None,
            format!("expected one parentless node, found {}", other.len()),
        )),
    }

    for e in &graph.edges {
        let (Some(src), Some(dst)) = (graph.node(&e.source), graph.node(&e.target)) else {
            continue;
        };
        let subject = Some(edge_subject(e));
        let follower = match src.node_type {
            NodeType::User if !matches!(dst.node_type, NodeType::Assistant | NodeType::Api) => {
                Some((Rule::UserFollower, "user"))
            }
            NodeType::Assistant if dst.node_type != NodeType::User => Some((Rule::AssistantFollower, "assistant")),
            NodeType::Api if !matches!(dst.node_type, NodeType::Api | NodeType::Assistant) => {
                Some((Rule::ApiFollower, "api"))
            }
            _ => None,
        };
        if let Some((rule, what)) = follower {
            report.push(Violation::new(
                rule,
                subject.clone(),
                format!("{what} node {} followed by {} node {}", src.id, dst.node_type, dst.id),
            ));
        }
        if src.node_type != NodeType::Api && !e.description.trim().is_empty() {
            report.push(Violation::new(
                Rule::EdgeLabel,
                subject,
                format!("edge from {} node {} has a description", src.node_type, src.id),
            ));
        }
    }

    for n in graph.nodes.values() {
        if graph.is_leaf(&n.id) && n.node_type != NodeType::Assistant {
            report.push(Violation::new(
                Rule::LeafAssistant,
                Some(n.id.clone()),
                format!("leaf node has type {}", n.node_type),
            ));
        }
    }

    check_unreachable(graph, &mut report);
    report.normalized()
}

fn edge_subject(e: &super::GraphEdge) -> String {
    format!("{}({},{})", e.id, e.source, e.target)
}

fn check_alphabet(graph: &Graph, kind: GraphKind, report: &mut ValidationReport) {
    for n in graph.nodes.values() {
        if !n.node_type.belongs_to(kind) {
            report.push(Violation::new(
                Rule::NodeTypeAlphabet,
                Some(n.id.clone()),
                format!("type {:?} is not allowed in a {kind} graph", n.node_type.as_str()),
            ));
        }
    }
}

fn check_connectivity(graph: &Graph, report: &mut ValidationReport) {
    let Some(first) = graph.nodes.keys().next() else {
        return;
    };
    // undirected BFS
    let mut seen: HashSet<&str> = HashSet::from([first.as_str()]);
    let mut queue = VecDeque::from([first.as_str()]);
    while let Some(id) = queue.pop_front() {
        for e in &graph.edges {
            let next = if e.source == id {
                e.target.as_str()
            } else if e.target == id {
                e.source.as_str()
            } else {
                continue;
            };
            if seen.insert(next) {
                queue.push_back(next);
            }
        }
    }
    if seen.len() != graph.nodes.len() {
        let mut detached: Vec<&str> = graph
            .nodes
            .keys()
            .map(String::as_str)
            .filter(|id| !seen.contains(id))
            .collect();
        detached.sort();
        report.push(Violation::new(
            Rule::WeakConnectivity,
            None,
            format!("nodes disconnected from {first}: {}", detached.join(", ")),
        ));
    }
    check_unreachable(graph, report);
}

fn check_unreachable(graph: &Graph, report: &mut ValidationReport) {
    let Some(root) = graph.root() else {
        return;
    };
    let reachable = reachable_from(graph, &root.id);
    for id in graph.nodes.keys() {
        if !reachable.contains(id.as_str()) {
            report.warn(Violation::new(
                Rule::Unreachable,
                Some(id.clone()),
                format!("not reachable from root {}", root.id),
            ));
        }
    }
}

pub(crate) fn reachable_from<'a>(graph: &'a Graph, start: &'a str) -> HashSet<&'a str> {
    let mut seen: HashSet<&str> = HashSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some(id) = queue.pop_front() {
        for e in graph.outgoing(id) {
            if seen.insert(e.target.as_str()) {
                queue.push_back(e.target.as_str());
            }
        }
    }
    seen
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_graph;
    use crate::samples::{CONVERSATION_PROMPT_GRAPH, CONVGRAPH_EXEMPLAR, FLOWGRAPH_EXEMPLAR, SIMPLE_FLOWGRAPH};

    fn flow(text: &str) -> ValidationReport {
        validate_flowgraph(&parse_graph(text, GraphKind::Flow).unwrap())
    }

    fn conv(text: &str) -> ValidationReport {
        validate_conversation_graph(&parse_graph(text, GraphKind::Conversation).unwrap())
    }

    #[test]
    fn exemplars_are_clean() {
        assert_eq!(flow(FLOWGRAPH_EXEMPLAR), ValidationReport::default());
        assert_eq!(flow(SIMPLE_FLOWGRAPH), ValidationReport::default());
        assert_eq!(conv(CONVGRAPH_EXEMPLAR), ValidationReport::default());
        assert_eq!(conv(CONVERSATION_PROMPT_GRAPH), ValidationReport::default());
    }

    #[test]
    fn two_start_nodes() {
        let r = flow("[N0](start_message){a}\n[N1](start_message){b}\n[N2](end_message){c}\n[E0](N0, N2){x}\n[E1](N1, N2){y}");
        assert_eq!(r.rules(), vec![Rule::RootUniqueness]);
    }

    #[test]
    fn end_node_with_child() {
        let r = flow("[N0](start_message){a}\n[N1](end_message){b}\n[N2](end_message){c}\n[E0](N0, N1){x}\n[E1](N1, N2){y}");
        assert_eq!(r.rules(), vec![Rule::EndNodeLeaf]);
    }

    #[test]
    fn assistant_after_assistant() {
        let r = conv("[N0](assistant){a}\n[N1](assistant){b}\n[E0](N0, N1){}");
        assert_eq!(r.rules(), vec![Rule::AssistantFollower]);
    }

    #[test]
    fn leaf_user() {
        let r = conv("[N0](assistant){a}\n[N1](user){b}\n[E0](N0, N1){}");
        assert_eq!(r.rules(), vec![Rule::LeafAssistant]);
    }

    #[test]
    fn unreachable_is_only_a_warning() {
        // N2 -> N3 cycle hangs off N1 via an incoming edge only
        let r = flow(
            "[N0](start_message){a}\n[N1](end_message){b}\n[N2](message){c}\n[N3](message){d}\n\
             [E0](N0, N1){x}\n[E1](N2, N1){y}\n[E2](N3, N2){z}\n[E3](N2, N3){w}",
        );
        assert!(r.is_clean(), "{r:?}");
        let warned: Vec<_> = r.warnings.iter().filter_map(|w| w.subject.clone()).collect();
        assert_eq!(warned, ["N2", "N3"]);
    }

    #[test]
    fn report_ignores_edge_order() {
        let a = "[N0](assistant){a}\n[N1](assistant){b}\n[N2](user){c}\n[E0](N0, N1){}\n[E1](N0, N2){d}";
        let b = "[N0](assistant){a}\n[N1](assistant){b}\n[N2](user){c}\n[E1](N0, N2){d}\n[E0](N0, N1){}";
        assert_eq!(conv(a), conv(b));
        assert!(!conv(a).is_clean());
    }
}
