//! Draw paths from the order-support conversation graph and show how the
//! weights spread the walks over its branches.

use convtest::augment::{derive_rng, sample_paths, SamplerConfig};
use convtest::dsl::{parse_graph, GraphKind};
use convtest::samples::CONVGRAPH_EXEMPLAR;

fn main() -> anyhow::Result<()> {
    let graph = parse_graph(CONVGRAPH_EXEMPLAR, GraphKind::Conversation)?;
    let paths: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(8);
    let config = SamplerConfig {
        paths,
        ..SamplerConfig::default()
    };
    let state = sample_paths(&graph, &config, &mut derive_rng(7, "example"))?;
    for p in &state.paths {
        println!("{}", p.join(" -> "));
    }
    println!("\n{} walks, {} abandoned", state.walks, state.abandoned);
    println!("final weights:");
    for (id, w) in &state.weights {
        println!("  {id:<4} {w:>3}  {}", graph.node(id).map(|n| n.description.as_str()).unwrap_or(""));
    }
    Ok(())
}
