use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use convtest::dsl::{to_flow_block, GraphKind};
use convtest::generators::{GraphArtifact, Stage};
use convtest::model::{Conversation, Intent, Procedure, ProcedureApis, TestCase};
use convtest::pipeline::{apis_id, store, ArtifactIndex, ArtifactStore, PipelineError, RunStats};
use convtest::report::ValidationReport;

use crate::status::{compute_statuses, CurationStatus, Status, Verdict};
use crate::CurationError;

const VERDICTS: &str = "curation/verdicts.jsonl";
const CURATED_STATS: &str = "curation/stats.json";
const CURATED_TESTS: &str = "curation/tests.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurationConfig {
    /// Accepts needed before an artifact counts as accepted.
    pub required_annotators: usize,
    /// Stages whose artifacts must all be judged before export.
    pub reviewed_stages: Vec<Stage>,
    pub page_size: usize,
}

impl Default for CurationConfig {
    fn default() -> Self {
        Self {
            required_annotators: 2,
            reviewed_stages: vec![
                Stage::Procedures,
                Stage::Apis,
                Stage::Flowgraphs,
                Stage::Convgraphs,
                Stage::Conversations,
            ],
            page_size: 50,
        }
    }
}

/// Stored content of one artifact.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", content = "data", rename_all = "snake_case")]
pub enum ArtifactContent {
    Intent(Intent),
    Procedure(Procedure),
    Apis(ProcedureApis),
    Graph(GraphArtifact),
    Conversation(Conversation),
    Test(TestCase),
}

impl ArtifactContent {
    fn summary(&self) -> String {
        match self {
            ArtifactContent::Intent(i) => format!("{}: {}", i.name, i.issue),
            ArtifactContent::Procedure(p) => {
                let title = p.text.lines().next().unwrap_or_default().trim_start_matches('#').trim();
                format!("{title} ({} steps, {} words)", p.step_count, p.word_count)
            }
            ArtifactContent::Apis(a) => {
                let names: Vec<&str> = a.apis.iter().map(|s| s.name.as_str()).collect();
                format!("{} APIs: {}", names.len(), names.join(", "))
            }
            ArtifactContent::Graph(g) => format!(
                "{} graph, {} nodes, {} edges{}",
                g.kind,
                g.graph.nodes.len(),
                g.graph.edges.len(),
                if g.noise { ", with noise" } else { "" }
            ),
            ArtifactContent::Conversation(c) => format!("{} messages", c.messages.len()),
            ArtifactContent::Test(t) => {
                let kind = if t.expected.is_reply() { "reply" } else { "api call" };
                format!("{} context messages, expects {kind}", t.context.len())
            }
        }
    }

    fn validation_report(&self) -> Option<&ValidationReport> {
        match self {
            ArtifactContent::Graph(g) => Some(&g.validation_report),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArtifactSummary {
    pub id: String,
    pub run_id: String,
    pub stage: Stage,
    pub parent: Option<String>,
    /// Ancestors from the nearest up to the intent.
    pub lineage: Vec<String>,
    pub status: CurationStatus,
    pub summary: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validation_report: Option<ValidationReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArtifactPage {
    pub run_id: String,
    pub page: usize,
    pub page_size: usize,
    pub total: usize,
    pub items: Vec<ArtifactSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArtifactDetail {
    #[serde(flatten)]
    pub summary: ArtifactSummary,
    pub content: ArtifactContent,
    /// Graph text for flowgraphs and conversation graphs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flow: Option<String>,
    pub children: Vec<String>,
    /// Full verdict history for this artifact.
    pub verdicts: Vec<Verdict>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
pub struct ListQuery {
    pub stage: Option<Stage>,
    pub status: Option<Status>,
    /// Zero-based.
    #[serde(default)]
    pub page: usize,
    pub page_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CuratedBundle {
    pub run_id: String,
    pub forced: bool,
    pub tests: Vec<TestCase>,
    pub stats: RunStats,
}

/// Everything stored for a run, loaded in one go.
struct RunData {
    store: ArtifactStore,
    index: ArtifactIndex,
    contents: HashMap<String, ArtifactContent>,
    history: Vec<Verdict>,
}

impl RunData {
    fn load(root: &Path, run_id: &str) -> Result<Self, CurationError> {
        let store = ArtifactStore::open(root, run_id).map_err(|e| match e {
            PipelineError::UnknownRun(r) => CurationError::UnknownRun(r),
            other => CurationError::Pipeline(other),
        })?;
        let index = ArtifactIndex::load(&store)?;
        let mut contents = HashMap::new();
        for i in store.read_jsonl::<Intent>(store::INTENTS)? {
            contents.insert(i.id.clone(), ArtifactContent::Intent(i));
        }
        for p in store.read_jsonl::<Procedure>(store::PROCEDURES)? {
            contents.insert(p.id.clone(), ArtifactContent::Procedure(p));
        }
        for a in store.read_jsonl::<ProcedureApis>(store::APIS)? {
            contents.insert(apis_id(&a.procedure_id), ArtifactContent::Apis(a));
        }
        for kind in [GraphKind::Flow, GraphKind::Conversation] {
            for g in store.read_graphs(kind)? {
                contents.insert(g.id.clone(), ArtifactContent::Graph(g));
            }
        }
        for c in store.read_jsonl::<Conversation>(store::CONVERSATIONS)? {
            contents.insert(c.id.clone(), ArtifactContent::Conversation(c));
        }
        for t in store.read_jsonl::<TestCase>(store::TESTS)? {
            contents.insert(t.id.clone(), ArtifactContent::Test(t));
        }
        let history = store.read_jsonl(VERDICTS)?;
        Ok(Self {
            store,
            index,
            contents,
            history,
        })
    }

    fn run_id(&self) -> String {
        self.store
            .dir()
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default()
    }
}

/// Verdict bookkeeping over the runs under one root directory.
///
/// State lives on disk: every call reads what it needs, and verdict writes
/// are serialized and replace the verdict file atomically, so readers see
/// either the old or the new set.
#[derive(Debug)]
pub struct CurationService {
    root: PathBuf,
    config: CurationConfig,
    write_lock: Mutex<()>,
}

impl CurationService {
    pub fn new(root: impl Into<PathBuf>, config: CurationConfig) -> Self {
        Self {
            root: root.into(),
            config,
            write_lock: Mutex::new(()),
        }
    }

    pub fn config(&self) -> &CurationConfig {
        &self.config
    }

    /// Run ids under the root, sorted.
    pub fn runs(&self) -> Vec<String> {
        let mut out: Vec<String> = std::fs::read_dir(&self.root)
            .map(|entries| {
                entries
                    .flatten()
                    .filter(|e| e.path().join(store::CONFIG).is_file())
                    .map(|e| e.file_name().to_string_lossy().into_owned())
                    .collect()
            })
            .unwrap_or_default();
        out.sort();
        out
    }

    fn statuses(&self, data: &RunData) -> IndexMap<String, CurationStatus> {
        compute_statuses(&data.index, &data.history, self.config.required_annotators)
    }

    fn summary(&self, data: &RunData, statuses: &IndexMap<String, CurationStatus>, id: &str) -> Option<ArtifactSummary> {
        let entry = data.index.get(id)?;
        let content = data.contents.get(id);
        Some(ArtifactSummary {
            id: id.to_string(),
            run_id: data.run_id(),
            stage: entry.stage,
            parent: entry.parent.clone(),
            lineage: data.index.ancestors(id),
            status: statuses.get(id)?.clone(),
            summary: content.map(ArtifactContent::summary).unwrap_or_default(),
            validation_report: content.and_then(|c| c.validation_report().cloned()),
        })
    }

    /// One page of a run's artifacts, ordered by id.
    pub fn list_artifacts(&self, run_id: &str, query: &ListQuery) -> Result<ArtifactPage, CurationError> {
        let data = RunData::load(&self.root, run_id)?;
        let statuses = self.statuses(&data);
        let page_size = query.page_size.unwrap_or(self.config.page_size).clamp(1, 1000);
        let matching: Vec<&String> = statuses
            .keys()
            .filter(|id| query.stage.is_none_or(|s| data.index.get(id).is_some_and(|e| e.stage == s)))
            .filter(|id| query.status.is_none_or(|s| statuses[*id].status == s))
            .collect();
        let items = matching
            .iter()
            .skip(query.page * page_size)
            .take(page_size)
            .filter_map(|id| self.summary(&data, &statuses, id))
            .collect();
        Ok(ArtifactPage {
            run_id: run_id.to_string(),
            page: query.page,
            page_size,
            total: matching.len(),
            items,
        })
    }

    /// Finds the run holding `artifact_id`. With `run_id` given only that
    /// run is searched.
    fn locate(&self, run_id: Option<&str>, artifact_id: &str) -> Result<RunData, CurationError> {
        if let Some(r) = run_id {
            let data = RunData::load(&self.root, r)?;
            return if data.index.get(artifact_id).is_some() {
                Ok(data)
            } else {
                Err(CurationError::UnknownArtifact(artifact_id.to_string()))
            };
        }
        let mut found = Vec::new();
        for r in self.runs() {
            let data = RunData::load(&self.root, &r)?;
            if data.index.get(artifact_id).is_some() {
                found.push(data);
            }
        }
        match found.len() {
            0 => Err(CurationError::UnknownArtifact(artifact_id.to_string())),
            1 => Ok(found.remove(0)),
            _ => Err(CurationError::AmbiguousArtifact {
                id: artifact_id.to_string(),
                runs: found.iter().map(RunData::run_id).collect(),
            }),
        }
    }

    pub fn artifact(&self, run_id: Option<&str>, artifact_id: &str) -> Result<ArtifactDetail, CurationError> {
        let data = self.locate(run_id, artifact_id)?;
        let statuses = self.statuses(&data);
        let summary = self
            .summary(&data, &statuses, artifact_id)
            .ok_or_else(|| CurationError::UnknownArtifact(artifact_id.to_string()))?;
        let content = data
            .contents
            .get(artifact_id)
            .cloned()
            .ok_or_else(|| CurationError::UnknownArtifact(artifact_id.to_string()))?;
        let flow = match &content {
            ArtifactContent::Graph(g) => Some(to_flow_block(&g.graph)),
            _ => None,
        };
        Ok(ArtifactDetail {
            summary,
            content,
            flow,
            children: data.index.children(artifact_id).into_iter().map(str::to_string).collect(),
            verdicts: data.history.iter().filter(|v| v.artifact_id == artifact_id).cloned().collect(),
        })
    }

    /// Records a verdict and returns the artifact's new status. Resubmitting
    /// the annotator's current verdict changes nothing.
    pub fn submit_verdict(&self, run_id: Option<&str>, mut verdict: Verdict) -> Result<CurationStatus, CurationError> {
        if verdict.annotator_id.trim().is_empty() {
            return Err(CurationError::BadRequest("annotator id is required".into()));
        }
        let _guard = self.write_lock.lock().unwrap_or_else(|e| e.into_inner());
        let mut data = self.locate(run_id, &verdict.artifact_id)?;
        let current = data
            .history
            .iter()
            .rev()
            .find(|v| v.artifact_id == verdict.artifact_id && v.annotator_id == verdict.annotator_id);
        if !current.is_some_and(|c| c.same_as(&verdict)) {
            verdict.timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
            tracing::info!(artifact = %verdict.artifact_id, annotator = %verdict.annotator_id, decision = ?verdict.decision, "verdict");
            data.history.push(verdict.clone());
            data.store.write_jsonl(VERDICTS, &data.history)?;
        }
        Ok(self.statuses(&data)[&verdict.artifact_id].clone())
    }

    fn curated_stats(&self, data: &RunData, statuses: &IndexMap<String, CurationStatus>) -> Result<RunStats, CurationError> {
        let mut stats: RunStats = if data.store.exists(store::STATS) {
            data.store.read_json(store::STATS)?
        } else {
            RunStats::default()
        };
        let mut removed: HashMap<Stage, usize> = HashMap::new();
        for (id, s) in statuses {
            let Some(entry) = data.index.get(id) else { continue };
            if s.status == Status::Removed && !entry.derived {
                *removed.entry(entry.stage).or_default() += 1;
            }
        }
        for stage in Stage::ALL {
            stats.set_manual(stage, removed.get(&stage).copied().unwrap_or(0));
        }
        Ok(stats)
    }

    /// Pipeline statistics with manual removals filled in.
    pub fn stats(&self, run_id: &str) -> Result<RunStats, CurationError> {
        let data = RunData::load(&self.root, run_id)?;
        let statuses = self.statuses(&data);
        self.curated_stats(&data, &statuses)
    }

    /// Tests none of whose lineage was removed. Fails while any artifact of
    /// a reviewed stage is pending, unless `force` is set; forced exports
    /// treat pending artifacts as kept. Writes `curation/tests.jsonl` and
    /// `curation/stats.json`.
    pub fn export(&self, run_id: &str, force: bool) -> Result<CuratedBundle, CurationError> {
        let data = RunData::load(&self.root, run_id)?;
        let statuses = self.statuses(&data);
        let pending: Vec<String> = statuses
            .values()
            .filter(|s| s.status == Status::Pending)
            .filter(|s| {
                data.index
                    .get(&s.artifact_id)
                    .is_some_and(|e| !e.derived && self.config.reviewed_stages.contains(&e.stage))
            })
            .map(|s| s.artifact_id.clone())
            .collect();
        if !pending.is_empty() && !force {
            return Err(CurationError::IncompleteCuration {
                pending: pending.len(),
                examples: pending.into_iter().take(5).collect(),
            });
        }
        let tests: Vec<TestCase> = data
            .store
            .read_jsonl::<TestCase>(store::TESTS)?
            .into_iter()
            .filter(|t| statuses.get(&t.id).is_some_and(|s| s.status != Status::Removed))
            .collect();
        let stats = self.curated_stats(&data, &statuses)?;
        let _guard = self.write_lock.lock().unwrap_or_else(|e| e.into_inner());
        data.store.write_jsonl(CURATED_TESTS, &tests)?;
        data.store.write_json(CURATED_STATS, &stats)?;
        Ok(CuratedBundle {
            run_id: run_id.to_string(),
            forced: force,
            tests,
            stats,
        })
    }
}
