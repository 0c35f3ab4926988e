//! Add off-topic detours to a conversation graph.

use convtest::augment::{inject_noise, noise_eligible, NoiseConfig};
use convtest::dsl::{parse_graph, to_flow_block, validate_conversation_graph, GraphKind};
use convtest::samples::CONVGRAPH_EXEMPLAR;

fn main() -> anyhow::Result<()> {
    let graph = parse_graph(CONVGRAPH_EXEMPLAR, GraphKind::Conversation)?;
    println!("eligible assistant nodes: {}", noise_eligible(&graph).join(", "));
    let config = NoiseConfig {
        probability: 0.5,
        rng_seed: 3,
        ..NoiseConfig::default()
    };
    let noisy = inject_noise(&graph, &config, "order-cg")?;
    println!(
        "{} -> {} nodes, clean: {}\n",
        graph.nodes.len(),
        noisy.nodes.len(),
        validate_conversation_graph(&noisy).is_clean()
    );
    println!("{}", to_flow_block(&noisy));
    Ok(())
}
