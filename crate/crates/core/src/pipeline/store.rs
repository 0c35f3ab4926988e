use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::dsl::{parse_graph, to_flow_block, GraphKind};
use crate::generators::{Discard, GraphArtifact, Stage};
use crate::report::ValidationReport;

/// Metadata written next to each `.flow` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSidecar {
    pub id: String,
    pub kind: GraphKind,
    pub procedure_id: String,
    pub source_id: String,
    pub noise: bool,
    pub node_count: usize,
    pub edge_count: usize,
    pub validation_report: ValidationReport,
    pub template_checksum: String,
}

/// One directory per run under a root, holding JSONL tables, graph files
/// and reports. Every write goes to a temp file in the same directory and
/// is renamed into place. Files whose content would not change are left
/// untouched.
#[derive(Debug, Clone)]
pub struct ArtifactStore {
    dir: PathBuf,
}

pub const INTENTS: &str = "intents.jsonl";
pub const PROCEDURES: &str = "procedures.jsonl";
pub const APIS: &str = "apis.jsonl";
pub const PATHS: &str = "paths.jsonl";
pub const CONVERSATIONS: &str = "conversations.jsonl";
pub const TESTS: &str = "tests.jsonl";
pub const CONFIG: &str = "config.json";
pub const MANIFEST: &str = "manifest.json";
pub const STATS: &str = "stats.json";
pub const FLOWGRAPHS: &str = "flowgraphs";
pub const CONVGRAPHS: &str = "convgraphs";

impl ArtifactStore {
    /// Store for `run_id` under `root`. Nothing is created until the first
    /// write.
    pub fn new(root: impl AsRef<Path>, run_id: &str) -> Self {
        Self {
            dir: root.as_ref().join(run_id),
        }
    }

    /// Store for an existing run.
    pub fn open(root: impl AsRef<Path>, run_id: &str) -> Result<Self, PipelineError> {
        let store = Self::new(root, run_id);
        if !store.dir.join(CONFIG).is_file() {
            return Err(PipelineError::UnknownRun(run_id.to_string()));
        }
        Ok(store)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    pub fn exists(&self, rel: &str) -> bool {
        self.dir.join(rel).exists()
    }

    /// Atomically replaces `rel` with `bytes` unless it already holds them.
    pub fn write_bytes(&self, rel: &str, bytes: &[u8]) -> Result<(), PipelineError> {
        let target = self.dir.join(rel);
        if fs::read(&target).is_ok_and(|old| old == bytes) {
            return Ok(());
        }
        let parent = target.parent().unwrap_or(&self.dir).to_path_buf();
        fs::create_dir_all(&parent).map_err(|e| PipelineError::io(&parent, e))?;
        let mut tmp = tempfile::NamedTempFile::new_in(&parent).map_err(|e| PipelineError::io(&parent, e))?;
        tmp.write_all(bytes).map_err(|e| PipelineError::io(&target, e))?;
        tmp.persist(&target).map_err(|e| PipelineError::io(&target, e.error))?;
        Ok(())
    }

    pub fn write_json<T: Serialize>(&self, rel: &str, value: &T) -> Result<(), PipelineError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| PipelineError::json(self.path(rel), e))?;
        text.push('\n');
        self.write_bytes(rel, text.as_bytes())
    }

    pub fn read_json<T: DeserializeOwned>(&self, rel: &str) -> Result<T, PipelineError> {
        let path = self.path(rel);
        let text = fs::read_to_string(&path).map_err(|e| PipelineError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| PipelineError::json(path, e))
    }

    pub fn write_jsonl<T: Serialize>(&self, rel: &str, items: &[T]) -> Result<(), PipelineError> {
        let mut out = String::new();
        for item in items {
            out.push_str(&serde_json::to_string(item).map_err(|e| PipelineError::json(self.path(rel), e))?);
            out.push('\n');
        }
        self.write_bytes(rel, out.as_bytes())
    }

    /// Reads a JSONL table. A missing file is an empty table.
    pub fn read_jsonl<T: DeserializeOwned>(&self, rel: &str) -> Result<Vec<T>, PipelineError> {
        let path = self.path(rel);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(PipelineError::io(&path, e)),
        };
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| PipelineError::json(&path, e)))
            .collect()
    }

    fn graph_dir(kind: GraphKind) -> &'static str {
        match kind {
            GraphKind::Flow => FLOWGRAPHS,
            GraphKind::Conversation => CONVGRAPHS,
        }
    }

    /// Writes `<dir>/<id>.flow` and `<dir>/<id>.json` for each graph and
    /// removes graph files of the same kind that are not in `graphs`.
    pub fn write_graphs(&self, kind: GraphKind, graphs: &[GraphArtifact]) -> Result<(), PipelineError> {
        let dir = Self::graph_dir(kind);
        let mut keep = std::collections::HashSet::new();
        for g in graphs {
            let sidecar = GraphSidecar {
                id: g.id.clone(),
                kind: g.kind,
                procedure_id: g.procedure_id.clone(),
                source_id: g.source_id.clone(),
                noise: g.noise,
                node_count: g.graph.nodes.len(),
                edge_count: g.graph.edges.len(),
                validation_report: g.validation_report.clone(),
                template_checksum: g.template_checksum.clone(),
            };
            let mut flow = to_flow_block(&g.graph);
            flow.push('\n');
            self.write_bytes(&format!("{dir}/{}.flow", g.id), flow.as_bytes())?;
            self.write_json(&format!("{dir}/{}.json", g.id), &sidecar)?;
            keep.insert(format!("{}.flow", g.id));
            keep.insert(format!("{}.json", g.id));
        }
        let full = self.dir.join(dir);
        if let Ok(entries) = fs::read_dir(&full) {
            for entry in entries.flatten() {
                let name = entry.file_name().to_string_lossy().into_owned();
                if !keep.contains(&name) && (name.ends_with(".flow") || name.ends_with(".json")) {
                    fs::remove_file(entry.path()).map_err(|e| PipelineError::io(entry.path(), e))?;
                }
            }
        }
        Ok(())
    }

    /// Loads every graph of `kind`, ordered by id.
    pub fn read_graphs(&self, kind: GraphKind) -> Result<Vec<GraphArtifact>, PipelineError> {
        let dir = self.dir.join(Self::graph_dir(kind));
        let mut ids: Vec<String> = match fs::read_dir(&dir) {
            Ok(entries) => entries
                .flatten()
                .filter_map(|e| e.file_name().to_str()?.strip_suffix(".json").map(str::to_string))
                .collect(),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(PipelineError::io(&dir, e)),
        };
        ids.sort();
        ids.into_iter().map(|id| self.read_graph(kind, &id)).collect()
    }

    pub fn read_graph(&self, kind: GraphKind, id: &str) -> Result<GraphArtifact, PipelineError> {
        let dir = Self::graph_dir(kind);
        let sidecar: GraphSidecar = self.read_json(&format!("{dir}/{id}.json"))?;
        let flow_path = self.path(&format!("{dir}/{id}.flow"));
        let text = fs::read_to_string(&flow_path).map_err(|e| PipelineError::io(&flow_path, e))?;
        let graph = parse_graph(&text, kind).map_err(|e| PipelineError::CorruptArtifact {
            path: flow_path.clone(),
            detail: e.to_string(),
        })?;
        Ok(GraphArtifact {
            id: sidecar.id,
            kind,
            procedure_id: sidecar.procedure_id,
            source_id: sidecar.source_id,
            graph,
            validation_report: sidecar.validation_report,
            noise: sidecar.noise,
            template_checksum: sidecar.template_checksum,
        })
    }

    pub fn discard_file(stage: Stage) -> String {
        format!("discards/{}.jsonl", stage.as_str())
    }

    pub fn write_discards(&self, stage: Stage, discards: &[Discard]) -> Result<(), PipelineError> {
        self.write_jsonl(&Self::discard_file(stage), discards)
    }

    pub fn read_discards(&self, stage: Stage) -> Result<Vec<Discard>, PipelineError> {
        self.read_jsonl(&Self::discard_file(stage))
    }

    /// Every file under the run directory with its bytes, sorted by
    /// relative path.
    pub fn snapshot(&self) -> Result<Vec<(String, Vec<u8>)>, PipelineError> {
        fn walk(base: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) -> std::io::Result<()> {
            for entry in fs::read_dir(dir)? {
                let entry = entry?;
                let p = entry.path();
                if p.is_dir() {
                    walk(base, &p, out)?;
                } else {
                    let rel = p.strip_prefix(base).unwrap_or(&p).to_string_lossy().replace('\\', "/");
                    out.push((rel, fs::read(&p)?));
                }
            }
            Ok(())
        }
        let mut out = Vec::new();
        walk(&self.dir, &self.dir, &mut out).map_err(|e| PipelineError::io(&self.dir, e))?;
        out.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(out)
    }
}
