use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::store::{self, ArtifactStore};
use super::PipelineError;
use crate::dsl::GraphKind;
use crate::generators::Stage;
use crate::model::{Conversation, Intent, Procedure, ProcedureApis, TestCase};

/// Id under which the API list of a procedure is tracked.
pub fn apis_id(procedure_id: &str) -> String {
    format!("{procedure_id}-apis")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub id: String,
    pub stage: Stage,
    /// The artifact this one was generated from. Intents have none.
    pub parent: Option<String>,
    /// Produced locally from another artifact of the same stage (noised
    /// graph variants). Not counted in stage statistics.
    #[serde(default)]
    pub derived: bool,
}

/// Parent links for every artifact of a run.
///
/// Chains: test → conversation → (noised) conversation graph → flowgraph →
/// procedure APIs → procedure → intent. Direct conversations hang off the
/// procedure APIs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactIndex {
    pub entries: IndexMap<String, ArtifactEntry>,
}

impl ArtifactIndex {
    pub fn load(store: &ArtifactStore) -> Result<Self, PipelineError> {
        let mut idx = Self::default();
        for i in store.read_jsonl::<Intent>(store::INTENTS)? {
            idx.insert(i.id, Stage::Intents, None);
        }
        for p in store.read_jsonl::<Procedure>(store::PROCEDURES)? {
            idx.insert(p.id, Stage::Procedures, Some(p.intent_id));
        }
        for a in store.read_jsonl::<ProcedureApis>(store::APIS)? {
            idx.insert(apis_id(&a.procedure_id), Stage::Apis, Some(a.procedure_id));
        }
        for g in store.read_graphs(GraphKind::Flow)? {
            idx.insert(g.id, Stage::Flowgraphs, Some(apis_id(&g.procedure_id)));
        }
        for g in store.read_graphs(GraphKind::Conversation)? {
            let noise = g.noise;
            idx.insert(g.id.clone(), Stage::Convgraphs, Some(g.source_id));
            if noise {
                if let Some(e) = idx.entries.get_mut(&g.id) {
                    e.derived = true;
                }
            }
        }
        for c in store.read_jsonl::<Conversation>(store::CONVERSATIONS)? {
            let parent = c.conv_graph_id.clone().unwrap_or_else(|| apis_id(&c.procedure_id));
            idx.insert(c.id, Stage::Conversations, Some(parent));
        }
        for t in store.read_jsonl::<TestCase>(store::TESTS)? {
            idx.insert(t.id, Stage::Tests, Some(t.conversation_id));
        }
        Ok(idx)
    }

    pub fn insert(&mut self, id: String, stage: Stage, parent: Option<String>) {
        self.entries.insert(
            id.clone(),
            ArtifactEntry {
                id,
                stage,
                parent,
                derived: false,
            },
        );
    }

    pub fn get(&self, id: &str) -> Option<&ArtifactEntry> {
        self.entries.get(id)
    }

    /// Parent ids from the nearest up. Stops at a missing parent or a cycle.
    pub fn ancestors(&self, id: &str) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        let mut cur = self.entries.get(id).and_then(|e| e.parent.clone());
        while let Some(p) = cur {
            if out.contains(&p) || p == id {
                break;
            }
            cur = self.entries.get(&p).and_then(|e| e.parent.clone());
            out.push(p);
        }
        out
    }

    /// True if the parent chain ends at a known intent.
    pub fn reaches_intent(&self, id: &str) -> bool {
        let root = self.ancestors(id).pop().unwrap_or_else(|| id.to_string());
        self.entries.get(&root).is_some_and(|e| e.stage == Stage::Intents)
    }

    pub fn children(&self, id: &str) -> Vec<&str> {
        self.entries
            .values()
            .filter(|e| e.parent.as_deref() == Some(id))
            .map(|e| e.id.as_str())
            .collect()
    }

    /// All transitive descendants, breadth first.
    pub fn descendants(&self, id: &str) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        let mut frontier = vec![id.to_string()];
        while let Some(cur) = frontier.pop() {
            for c in self.children(&cur) {
                if c != id && !out.iter().any(|o| o == c) {
                    out.push(c.to_string());
                    frontier.push(c.to_string());
                }
            }
        }
        out
    }
}
