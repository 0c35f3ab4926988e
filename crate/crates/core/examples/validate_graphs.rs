//! Parse the bundled graphs, validate them, and show what a broken graph
//! reports.

use convtest::dsl::{parse_graph, serialize_graph, validate_graph, GraphKind};
use convtest::samples::{CONVGRAPH_EXEMPLAR, FLOWGRAPH_EXEMPLAR};

fn main() -> anyhow::Result<()> {
    for (name, text, kind) in [
        ("flowgraph", FLOWGRAPH_EXEMPLAR, GraphKind::Flow),
        ("conversation graph", CONVGRAPH_EXEMPLAR, GraphKind::Conversation),
    ] {
        let graph = parse_graph(text, kind)?;
        let report = validate_graph(&graph);
        println!(
            "{name}: {} nodes, {} edges, {} violations, {} warnings",
            graph.nodes.len(),
            graph.edges.len(),
            report.violations.len(),
            report.warnings.len()
        );
    }

    let broken = "[N0](assistant){Hi}\n[N1](assistant){Hello again}\n[N2](user){Bye}\n\
                  [E0](N0, N1){}\n[E1](N0, N2){unexpected label}";
    let graph = parse_graph(broken, GraphKind::Conversation)?;
    println!("\n{}", serialize_graph(&graph));
    for v in validate_graph(&graph).violations {
        println!("{:<18} {:<8} {}", v.rule, v.subject.unwrap_or_default(), v.message);
    }
    Ok(())
}
