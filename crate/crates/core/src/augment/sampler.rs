use indexmap::IndexMap;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::AugmentError;
use crate::dsl::Graph;

/// Node ids from the root to a leaf.
pub type Path = Vec<String>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Number of paths to collect per graph.
    pub paths: usize,
    /// Walks longer than this many nodes are abandoned. Defaults to four
    /// times the node count.
    #[serde(default)]
    pub max_steps: Option<usize>,
    /// Total walk budget. Defaults to `20 * paths`.
    #[serde(default)]
    pub max_attempts: Option<usize>,
    /// Skip paths identical to one already collected.
    #[serde(default)]
    pub dedupe: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            paths: 5,
            max_steps: None,
            max_attempts: None,
            dedupe: false,
        }
    }
}

/// Weights and counters left behind by a sampling run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerState {
    /// Every node starts at 1 and gains 1 each time it is sampled.
    pub weights: IndexMap<String, u64>,
    pub paths: Vec<Path>,
    pub walks: usize,
    pub abandoned: usize,
}

impl SamplerState {
    pub fn new(graph: &Graph) -> Self {
        Self {
            weights: graph.nodes.keys().map(|k| (k.clone(), 1)).collect(),
            paths: Vec::new(),
            walks: 0,
            abandoned: 0,
        }
    }

    pub fn weight(&self, id: &str) -> u64 {
        self.weights.get(id).copied().unwrap_or(1)
    }
}

/// Picks the next node of a walk.
///
/// With an empty path this is the root. Otherwise a child `c` of the last
/// node is drawn with probability `(1 / w_c) / sum over children (1 / w_s)`.
pub fn sample_node<R: Rng + ?Sized>(
    graph: &Graph,
    path: &[String],
    weights: &IndexMap<String, u64>,
    rng: &mut R,
) -> Result<String, AugmentError> {
    let Some(last) = path.last() else {
        return graph
            .root()
            .map(|n| n.id.clone())
            .ok_or(AugmentError::NoRoot);
    };
    let children = graph.children(last);
    if children.is_empty() {
        return Err(AugmentError::NoChildren(last.clone()));
    }
    let inv: Vec<f64> = children
        .iter()
        .map(|c| 1.0 / weights.get(*c).copied().unwrap_or(1).max(1) as f64)
        .collect();
    let total: f64 = inv.iter().sum();
    let mut x = rng.gen::<f64>() * total;
    for (c, w) in children.iter().zip(&inv) {
        if x < *w {
            return Ok(c.to_string());
        }
        x -= w;
    }
    Ok(children[children.len() - 1].to_string())
}

/// Weighted random-walk path sampling.
///
/// Each walk starts at the root and repeatedly calls [`sample_node`],
/// incrementing the weight of every sampled node (revisits included), until
/// it reaches a leaf. Walks that exceed `max_steps` are abandoned; their
/// weight increments stay. Sampling stops once `paths` walks have finished.
pub fn sample_paths<R: Rng + ?Sized>(
    graph: &Graph,
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<SamplerState, AugmentError> {
    if config.paths == 0 {
        return Err(AugmentError::ZeroPaths);
    }
    let max_steps = config.max_steps.unwrap_or(4 * graph.nodes.len()).max(1);
    let max_attempts = config.max_attempts.unwrap_or(20 * config.paths).max(1);
    let mut state = SamplerState::new(graph);
    while state.paths.len() < config.paths {
        if state.walks >= max_attempts {
            if config.dedupe && !state.paths.is_empty() {
                break;
            }
            return Err(AugmentError::NonTerminating {
                attempts: state.walks,
                collected: state.paths.len(),
            });
        }
        state.walks += 1;
        let mut path: Path = Vec::new();
        let finished = loop {
            if path.len() >= max_steps {
                break false;
            }
            let n = sample_node(graph, &path, &state.weights, rng)?;
            *state.weights.entry(n.clone()).or_insert(1) += 1;
            let leaf = graph.is_leaf(&n);
            path.push(n);
            if leaf {
                break true;
            }
        };
        if !finished {
            state.abandoned += 1;
            continue;
        }
        if config.dedupe && state.paths.contains(&path) {
            continue;
        }
        state.paths.push(path);
    }
    Ok(state)
}

/// Every simple-or-looping path from the root to a leaf with at most
/// `max_len` nodes. Exponential; meant for checking samplers on small graphs.
pub fn enumerate_paths(graph: &Graph, max_len: usize) -> Vec<Path> {
    fn go(graph: &Graph, path: &mut Path, max_len: usize, out: &mut Vec<Path>) {
        let last = path.last().unwrap().clone();
        if graph.is_leaf(&last) {
            out.push(path.clone());
            return;
        }
        if path.len() >= max_len {
            return;
        }
        for c in graph.children(&last) {
            path.push(c.to_string());
            go(graph, path, max_len, out);
            path.pop();
        }
    }
    let mut out = Vec::new();
    if let Some(root) = graph.root() {
        go(graph, &mut vec![root.id.clone()], max_len, &mut out);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::derive_rng;
    use crate::dsl::{parse_graph, GraphKind};
    use crate::samples::CONVGRAPH_EXEMPLAR;

    fn graph(text: &str) -> Graph {
        parse_graph(text, GraphKind::Conversation).unwrap()
    }

    #[test]
    fn linear_chain() {
        let g = graph("[N0](assistant){a}\n[N1](user){b}\n[N2](assistant){c}\n[E0](N0, N1){}\n[E1](N1, N2){}");
        let cfg = SamplerConfig {
            paths: 1,
            ..SamplerConfig::default()
        };
        let s = sample_paths(&g, &cfg, &mut derive_rng(1, "g")).unwrap();
        assert_eq!(s.paths, vec![vec!["N0", "N1", "N2"]]);
        assert_eq!(s.weights.values().copied().collect::<Vec<_>>(), [2, 2, 2]);
    }

    #[test]
    fn empty_path_gives_root() {
        let g = graph(CONVGRAPH_EXEMPLAR);
        let w = SamplerState::new(&g).weights;
        assert_eq!(sample_node(&g, &[], &w, &mut derive_rng(0, "x")).unwrap(), "N0");
        assert!(matches!(
            sample_node(&g, &["N10".into()], &w, &mut derive_rng(0, "x")),
            Err(AugmentError::NoChildren(_))
        ));
    }

    #[test]
    fn paths_follow_edges_and_end_at_leaves() {
        let g = graph(CONVGRAPH_EXEMPLAR);
        let cfg = SamplerConfig {
            paths: 30,
            ..SamplerConfig::default()
        };
        let s = sample_paths(&g, &cfg, &mut derive_rng(3, "g")).unwrap();
        for p in &s.paths {
            assert_eq!(p[0], "N0");
            assert!(g.is_leaf(p.last().unwrap()));
            for pair in p.windows(2) {
                assert!(g.edge_between(&pair[0], &pair[1]).is_some());
            }
        }
    }

    #[test]
    fn pure_cycle_does_not_terminate() {
        let g = graph("[N0](assistant){a}\n[N1](user){b}\n[N2](assistant){c}\n[E0](N0, N1){}\n[E1](N1, N2){}\n[E2](N2, N1){}");
        let cfg = SamplerConfig {
            paths: 2,
            max_attempts: Some(5),
            ..SamplerConfig::default()
        };
        assert!(matches!(
            sample_paths(&g, &cfg, &mut derive_rng(0, "g")),
            Err(AugmentError::NonTerminating { attempts: 5, .. })
        ));
    }

    #[test]
    fn enumerate_small_graph() {
        let g = graph(CONVGRAPH_EXEMPLAR);
        let paths = enumerate_paths(&g, 11);
        assert!(paths.contains(&["N0", "N1", "N2", "N3", "N4", "N5", "N8", "N9", "N10"].map(String::from).to_vec()));
        // one retry loop adds three nodes, so 11 admits only the two direct paths
        assert_eq!(paths.len(), 2);
        assert_eq!(enumerate_paths(&g, 12).len(), 4);
    }
}
