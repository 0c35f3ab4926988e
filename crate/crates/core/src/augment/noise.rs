use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{derive_rng, AugmentError};
use crate::dsl::{Graph, NodeType};
use crate::samples::NOISE_POOL;

/// Description of the assistant turn that follows every noise message.
pub const RECOVERY_MESSAGE: &str = "Say you're only here to help with the original issue.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    OutOfProcedure,
    Attack,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseMessage {
    pub kind: NoiseKind,
    pub text: String,
}

/// The bundled pool of noise messages.
pub fn default_pool() -> Vec<NoiseMessage> {
    NOISE_POOL
        .iter()
        .map(|(kind, text)| NoiseMessage {
            kind: if *kind == "attack" {
                NoiseKind::Attack
            } else {
                NoiseKind::OutOfProcedure
            },
            text: text.to_string(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Chance that an eligible assistant node gets a noise detour.
    pub probability: f64,
    pub pool: Vec<NoiseMessage>,
    pub rng_seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            probability: 0.2,
            pool: default_pool(),
            rng_seed: 0,
        }
    }
}

/// Assistant nodes that can take a noise detour: every assistant node with
/// at least one child, in declaration order.
pub fn noise_eligible(graph: &Graph) -> Vec<String> {
    graph
        .nodes
        .values()
        .filter(|n| n.node_type == NodeType::Assistant && !graph.is_leaf(&n.id))
        .map(|n| n.id.clone())
        .collect()
}

/// Adds noise detours to a conversation graph.
///
/// For each eligible assistant node A, with probability `p`, a user node U
/// with a pool message and an assistant node R with [`RECOVERY_MESSAGE`]
/// are appended as `A -> U -> R`, and R is linked to every user child of A
/// so the conversation can resume. Existing nodes and edges are not
/// modified. `graph_id` keys the random stream together with the seed.
pub fn inject_noise(graph: &Graph, config: &NoiseConfig, graph_id: &str) -> Result<Graph, AugmentError> {
    if !(0.0..=1.0).contains(&config.probability) {
        return Err(AugmentError::BadProbability(config.probability));
    }
    if config.probability > 0.0 && config.pool.is_empty() {
        return Err(AugmentError::EmptyPool);
    }
    let mut out = graph.clone();
    if config.probability == 0.0 {
        return Ok(out);
    }
    let mut rng = derive_rng(config.rng_seed, &format!("noise:{graph_id}"));
    let mut next_node = graph.max_node_number().map_or(0, |n| n + 1);
    let mut next_edge = graph.max_edge_number().map_or(0, |n| n + 1);
    let mut edge_id = || {
        let id = format!("E{next_edge}");
        next_edge += 1;
        id
    };
    for a in noise_eligible(graph) {
        if !rng.gen_bool(config.probability) {
            continue;
        }
        let msg = &config.pool[rng.gen_range(0..config.pool.len())];
        let resume: Vec<String> = graph
            .children(&a)
            .into_iter()
            .filter(|c| graph.node(c).is_some_and(|n| n.node_type == NodeType::User))
            .map(str::to_string)
            .collect();
        let u = format!("N{next_node}");
        let r = format!("N{}", next_node + 1);
        next_node += 2;
        out.add_node(&u, NodeType::User, &msg.text);
        out.add_node(&r, NodeType::Assistant, RECOVERY_MESSAGE);
        out.add_edge(edge_id(), &a, &u, "");
        out.add_edge(edge_id(), &u, &r, "");
        for c in resume {
            out.add_edge(edge_id(), &r, c, "");
        }
    }
    Ok(out)
}
