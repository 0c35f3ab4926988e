//! Runs the stages in order and keeps everything they produce in an
//! [`ArtifactStore`].
//!
//! A run is identified by its id and its configuration. The configuration is
//! written to `config.json` and its hash to `manifest.json` together with the
//! list of completed steps; rerunning the same configuration skips completed
//! steps whose outputs are still present.

mod lineage;
mod stats;
pub mod store;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use lineage::{apis_id, ArtifactEntry, ArtifactIndex};
pub use stats::{RunStats, StageStats};
pub use store::{ArtifactStore, GraphSidecar};

use crate::augment::{default_pool, derive_rng, extract_tests, inject_noise, sample_paths, AugmentError, NoiseConfig};
use crate::augment::{NoiseMessage, Path as GraphPath, SamplerConfig};
use crate::dsl::{validate_conversation_graph, GraphKind};
use crate::eval::{run_agent_suite, AgentAdapter, EvalConfig, EvalError, MetricsReport, SimilarityScorer, SuiteResult};
use crate::generators::{Discard, Generator, GeneratorConfig, GraphArtifact, Stage, StageError, StageOutcome};
use crate::llm::{LlmClient, LlmError, RemoteBackend, RemoteConfig, ScriptedBackend};
use crate::model::{Conversation, Intent, Procedure, ProcedureApis, TestCase};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Stage(#[from] StageError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {detail}")]
    CorruptArtifact { path: PathBuf, detail: String },
    #[error("unknown run {0}")]
    UnknownRun(String),
    #[error("run {run_id} was created with a different configuration (stored hash {stored}, given {given})")]
    ConfigMismatch { run_id: String, stored: String, given: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("step {step} needs {needs} to have run first")]
    MissingInput { step: Step, needs: Step },
    #[error("step {0} is not part of this run's plan")]
    NotInPlan(Step),
}

impl PipelineError {
    pub(crate) fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    pub(crate) fn json(path: impl AsRef<Path>, source: serde_json::Error) -> Self {
        Self::Json {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }
}

/// Units of work a run is made of. Most map to one generator stage; noise
/// injection and path sampling are local.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    Intents,
    Procedures,
    Apis,
    Flowgraphs,
    Convgraphs,
    Noise,
    Paths,
    Conversations,
    Direct,
    Tests,
}

impl Step {
    pub const ALL: [Step; 10] = [
        Step::Intents,
        Step::Procedures,
        Step::Apis,
        Step::Flowgraphs,
        Step::Convgraphs,
        Step::Noise,
        Step::Paths,
        Step::Conversations,
        Step::Direct,
        Step::Tests,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Step::Intents => "intents",
            Step::Procedures => "procedures",
            Step::Apis => "apis",
            Step::Flowgraphs => "flowgraphs",
            Step::Convgraphs => "convgraphs",
            Step::Noise => "noise",
            Step::Paths => "paths",
            Step::Conversations => "conversations",
            Step::Direct => "direct",
            Step::Tests => "tests",
        }
    }

    pub fn parse(s: &str) -> Option<Step> {
        Step::ALL.into_iter().find(|st| st.as_str() == s)
    }

    /// Steps whose output this one reads. Any one of them is enough.
    fn inputs(&self) -> &'static [Step] {
        match self {
            Step::Intents => &[],
            Step::Procedures => &[Step::Intents],
            Step::Apis => &[Step::Procedures],
            Step::Flowgraphs => &[Step::Apis],
            Step::Convgraphs => &[Step::Flowgraphs],
            Step::Noise => &[Step::Convgraphs],
            Step::Paths => &[Step::Convgraphs],
            Step::Conversations => &[Step::Paths],
            Step::Direct => &[Step::Apis],
            Step::Tests => &[Step::Conversations, Step::Direct],
        }
    }

    fn output(&self) -> &'static str {
        match self {
            Step::Intents => store::INTENTS,
            Step::Procedures => store::PROCEDURES,
            Step::Apis => store::APIS,
            Step::Flowgraphs => store::FLOWGRAPHS,
            Step::Convgraphs | Step::Noise => store::CONVGRAPHS,
            Step::Paths => store::PATHS,
            Step::Conversations | Step::Direct => store::CONVERSATIONS,
            Step::Tests => store::TESTS,
        }
    }
}

impl std::fmt::Display for Step {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    /// OpenAI-compatible HTTP API; credentials come from the environment.
    Remote,
    /// Recorded completions under `fixtures_dir`.
    Fixtures,
    /// The bundled order-support responders.
    Demo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderSettings {
    pub kind: ProviderKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixtures_dir: Option<PathBuf>,
    /// Overrides `CONVTEST_BASE_URL` for the remote provider.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_url: Option<String>,
    pub max_in_flight: usize,
}

impl Default for ProviderSettings {
    fn default() -> Self {
        Self {
            kind: ProviderKind::Demo,
            fixtures_dir: None,
            base_url: None,
            max_in_flight: 8,
        }
    }
}

impl ProviderSettings {
    pub fn build_client(&self) -> Result<LlmClient, PipelineError> {
        let max = self.max_in_flight.max(1);
        Ok(match self.kind {
            ProviderKind::Demo => LlmClient::new(Arc::new(crate::demo::order_support_backend()), max),
            ProviderKind::Fixtures => {
                let dir = self
                    .fixtures_dir
                    .as_ref()
                    .ok_or_else(|| PipelineError::InvalidConfig("fixtures provider needs a fixtures directory".into()))?;
                let backend = ScriptedBackend::new();
                let n = backend.load_dir(dir)?;
                tracing::info!(fixtures = n, dir = %dir.display(), "loaded fixtures");
                LlmClient::new(Arc::new(backend), max)
            }
            ProviderKind::Remote => {
                let mut cfg = RemoteConfig::from_env();
                if let Some(url) = &self.base_url {
                    cfg.base_url = url.clone();
                }
                LlmClient::new(Arc::new(RemoteBackend::new(cfg)), max)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub run_id: String,
    pub seed: u64,
    pub provider: ProviderSettings,
    pub n_intents: usize,
    pub procedures_per_intent: usize,
    /// Chance that an eligible assistant node gets a noise detour.
    pub noise_probability: f64,
    pub noise_pool: Vec<NoiseMessage>,
    /// Paths sampled per conversation graph.
    pub paths_per_graph: usize,
    #[serde(default)]
    pub max_steps: Option<usize>,
    #[serde(default)]
    pub max_attempts: Option<usize>,
    #[serde(default)]
    pub dedupe_paths: bool,
    /// Similarity threshold used when evaluating agents on this run.
    pub similarity_threshold: f64,
    /// Steps left out. Leaving out noise samples paths on the plain graphs;
    /// leaving out any other step ends the run before it.
    #[serde(default)]
    pub skip: Vec<Step>,
    /// Write conversations straight from procedures, without graphs, noise
    /// or path sampling.
    #[serde(default)]
    pub ablation: bool,
    /// Conversations per procedure in ablation mode.
    pub direct_per_procedure: usize,
    pub generator: GeneratorConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            run_id: "run".into(),
            seed: 0,
            provider: ProviderSettings::default(),
            n_intents: 10,
            procedures_per_intent: 2,
            noise_probability: 0.2,
            noise_pool: default_pool(),
            paths_per_graph: 5,
            max_steps: None,
            max_attempts: None,
            dedupe_paths: false,
            similarity_threshold: 0.55,
            skip: Vec::new(),
            ablation: false,
            direct_per_procedure: 3,
            generator: GeneratorConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn check(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::InvalidConfig(m));
        let id_ok = !self.run_id.is_empty()
            && self.run_id != "."
            && self.run_id != ".."
            && self
                .run_id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
        if !id_ok {
            return bad(format!("run id {:?} must be nonempty and use only [A-Za-z0-9._-]", self.run_id));
        }
        if self.n_intents == 0 {
            return bad("number of intents must be positive".into());
        }
        if self.procedures_per_intent == 0 {
            return bad("procedures per intent must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.noise_probability) {
            return bad(format!("noise probability {} is outside [0, 1]", self.noise_probability));
        }
        if self.noise_probability > 0.0 && self.noise_pool.is_empty() {
            return bad("noise pool is empty".into());
        }
        if self.paths_per_graph == 0 {
            return bad("paths per graph must be positive".into());
        }
        if self.ablation && self.direct_per_procedure == 0 {
            return bad("direct conversations per procedure must be positive".into());
        }
        if !(self.similarity_threshold > 0.0 && self.similarity_threshold < 1.0) {
            return bad(format!("similarity threshold {} is outside (0, 1)", self.similarity_threshold));
        }
        Ok(())
    }

    /// Hex sha256 of the serialized configuration.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).unwrap_or_default();
        hex::encode(Sha256::digest(bytes))
    }

    /// Steps this configuration runs, in order.
    pub fn plan(&self) -> Vec<Step> {
        let full: &[Step] = if self.ablation {
            &[Step::Intents, Step::Procedures, Step::Apis, Step::Direct, Step::Tests]
        } else {
            &[
                Step::Intents,
                Step::Procedures,
                Step::Apis,
                Step::Flowgraphs,
                Step::Convgraphs,
                Step::Noise,
                Step::Paths,
                Step::Conversations,
                Step::Tests,
            ]
        };
        let mut plan = Vec::new();
        for step in full {
            if self.skip.contains(step) {
                if *step == Step::Noise {
                    continue;
                }
                break;
            }
            plan.push(*step);
        }
        plan
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            similarity_threshold: self.similarity_threshold,
            ..EvalConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub run_id: String,
    pub config_hash: String,
    pub backend: String,
    pub completed: Vec<Step>,
}

/// Paths sampled for one conversation graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub graph_id: String,
    pub procedure_id: String,
    pub paths: Vec<GraphPath>,
    pub walks: usize,
    pub abandoned: usize,
    /// Final node weights, in graph order.
    pub weights: indexmap::IndexMap<String, u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepStatus {
    Ran,
    Skipped,
}

/// One run: its configuration, its store and the generator that feeds it.
pub struct Pipeline {
    config: RunConfig,
    store: ArtifactStore,
    generator: Generator,
}

impl std::fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Pipeline")
            .field("run_id", &self.config.run_id)
            .field("dir", &self.store.dir())
            .finish()
    }
}

impl Pipeline {
    /// Opens `root/<run_id>` for `config`, creating it if needed. An existing
    /// run must have been created with the same configuration.
    pub fn create(root: impl AsRef<Path>, config: RunConfig, client: LlmClient) -> Result<Self, PipelineError> {
        config.check()?;
        let store = ArtifactStore::new(root, &config.run_id);
        let hash = config.hash();
        if store.exists(store::MANIFEST) {
            let m: Manifest = store.read_json(store::MANIFEST)?;
            if m.config_hash != hash {
                return Err(PipelineError::ConfigMismatch {
                    run_id: config.run_id.clone(),
                    stored: m.config_hash,
                    given: hash,
                });
            }
        } else {
            store.write_json(store::CONFIG, &config)?;
            store.write_json(
                store::MANIFEST,
                &Manifest {
                    run_id: config.run_id.clone(),
                    config_hash: hash,
                    backend: client.backend_id().to_string(),
                    completed: Vec::new(),
                },
            )?;
            store.write_json(store::STATS, &RunStats::default())?;
        }
        let generator = Generator::new(client, config.generator.clone());
        Ok(Self {
            config,
            store,
            generator,
        })
    }

    /// Opens an existing run with its stored configuration.
    pub fn open(root: impl AsRef<Path>, run_id: &str, client: LlmClient) -> Result<Self, PipelineError> {
        let store = ArtifactStore::open(root.as_ref(), run_id)?;
        let config: RunConfig = store.read_json(store::CONFIG)?;
        Self::create(root, config, client)
    }

    /// Reads the stored configuration of a run.
    pub fn stored_config(root: impl AsRef<Path>, run_id: &str) -> Result<RunConfig, PipelineError> {
        ArtifactStore::open(root, run_id)?.read_json(store::CONFIG)
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn store(&self) -> &ArtifactStore {
        &self.store
    }

    pub fn manifest(&self) -> Result<Manifest, PipelineError> {
        self.store.read_json(store::MANIFEST)
    }

    pub fn stats(&self) -> Result<RunStats, PipelineError> {
        self.store.read_json(store::STATS)
    }

    fn is_done(&self, manifest: &Manifest, step: Step) -> bool {
        manifest.completed.contains(&step) && self.store.exists(step.output())
    }

    /// Runs every planned step that has not completed yet.
    pub fn run(&self) -> Result<RunStats, PipelineError> {
        for step in self.config.plan() {
            self.run_step(step, false)?;
        }
        self.stats()
    }

    /// Runs one step. Without `force` a completed step is skipped. Running
    /// a step marks every later step as not completed.
    pub fn run_step(&self, step: Step, force: bool) -> Result<StepStatus, PipelineError> {
        let plan = self.config.plan();
        if !plan.contains(&step) {
            return Err(PipelineError::NotInPlan(step));
        }
        let mut manifest = self.manifest()?;
        if !force && self.is_done(&manifest, step) {
            tracing::info!(%step, "already complete, skipping");
            return Ok(StepStatus::Skipped);
        }
        let needs: Vec<Step> = step.inputs().iter().copied().filter(|s| plan.contains(s)).collect();
        if !needs.is_empty() && !needs.iter().any(|s| self.is_done(&manifest, *s)) {
            return Err(PipelineError::MissingInput { step, needs: needs[0] });
        }
        tracing::info!(%step, run = %self.config.run_id, "running");
        let mut stats = self.stats()?;
        match step {
            Step::Intents => self.step_intents(&mut stats)?,
            Step::Procedures => self.step_procedures(&mut stats)?,
            Step::Apis => self.step_apis(&mut stats)?,
            Step::Flowgraphs => self.step_flowgraphs(&mut stats)?,
            Step::Convgraphs => self.step_convgraphs(&mut stats)?,
            Step::Noise => self.step_noise()?,
            Step::Paths => self.step_paths()?,
            Step::Conversations => self.step_conversations(&mut stats)?,
            Step::Direct => self.step_direct(&mut stats)?,
            Step::Tests => self.step_tests(&mut stats)?,
        }
        self.store.write_json(store::STATS, &stats)?;
        let pos = plan.iter().position(|s| *s == step).unwrap_or(0);
        manifest.completed.retain(|s| plan.iter().position(|p| p == s).is_some_and(|i| i < pos));
        manifest.completed.push(step);
        self.store.write_json(store::MANIFEST, &manifest)?;
        Ok(StepStatus::Ran)
    }

    fn record<T>(&self, stats: &mut RunStats, stage: Stage, outcome: &StageOutcome<T>) -> Result<(), PipelineError> {
        self.store.write_discards(stage, &outcome.discarded)?;
        stats.set_auto(stage, outcome.counters);
        tracing::info!(
            stage = %stage,
            generated = outcome.counters.generated,
            filtered = outcome.counters.auto_filtered,
            "stage done"
        );
        Ok(())
    }

    fn step_intents(&self, stats: &mut RunStats) -> Result<(), PipelineError> {
        let out = self.generator.generate_intents(self.config.n_intents)?;
        self.store.write_jsonl(store::INTENTS, &out.produced)?;
        self.record(stats, Stage::Intents, &out)
    }

    fn step_procedures(&self, stats: &mut RunStats) -> Result<(), PipelineError> {
        let intents: Vec<Intent> = self.store.read_jsonl(store::INTENTS)?;
        let out = self.generator.generate_procedures(&intents, self.config.procedures_per_intent)?;
        self.store.write_jsonl(store::PROCEDURES, &out.produced)?;
        self.record(stats, Stage::Procedures, &out)
    }

    fn step_apis(&self, stats: &mut RunStats) -> Result<(), PipelineError> {
        let procedures: Vec<Procedure> = self.store.read_jsonl(store::PROCEDURES)?;
        let out = self.generator.extract_apis(&procedures)?;
        self.store.write_jsonl(store::APIS, &out.produced)?;
        self.record(stats, Stage::Apis, &out)
    }

    fn procedures_with_apis(&self) -> Result<Vec<(Procedure, ProcedureApis)>, PipelineError> {
        let procedures: HashMap<String, Procedure> = self
            .store
            .read_jsonl::<Procedure>(store::PROCEDURES)?
            .into_iter()
            .map(|p| (p.id.clone(), p))
            .collect();
        let apis: Vec<ProcedureApis> = self.store.read_jsonl(store::APIS)?;
        Ok(apis
            .into_iter()
            .filter_map(|a| procedures.get(&a.procedure_id).cloned().map(|p| (p, a)))
            .collect())
    }

    fn step_flowgraphs(&self, stats: &mut RunStats) -> Result<(), PipelineError> {
        let items = self.procedures_with_apis()?;
        let refs: Vec<(&Procedure, &ProcedureApis)> = items.iter().map(|(p, a)| (p, a)).collect();
        let out = self.generator.generate_flowgraphs(&refs)?;
        self.write_graph_dir(GraphKind::Flow, &out.produced)?;
        self.record(stats, Stage::Flowgraphs, &out)
    }

    fn write_graph_dir(&self, kind: GraphKind, graphs: &[GraphArtifact]) -> Result<(), PipelineError> {
        let dir = self.store.path(match kind {
            GraphKind::Flow => store::FLOWGRAPHS,
            GraphKind::Conversation => store::CONVGRAPHS,
        });
        std::fs::create_dir_all(&dir).map_err(|e| PipelineError::io(&dir, e))?;
        self.store.write_graphs(kind, graphs)
    }

    fn step_convgraphs(&self, stats: &mut RunStats) -> Result<(), PipelineError> {
        let flowgraphs = self.store.read_graphs(GraphKind::Flow)?;
        let out = self.generator.generate_conversation_graphs(&flowgraphs)?;
        self.write_graph_dir(GraphKind::Conversation, &out.produced)?;
        self.record(stats, Stage::Convgraphs, &out)
    }

    fn step_noise(&self) -> Result<(), PipelineError> {
        let plain: Vec<GraphArtifact> = self
            .store
            .read_graphs(GraphKind::Conversation)?
            .into_iter()
            .filter(|g| !g.noise)
            .collect();
        let noise = NoiseConfig {
            probability: self.config.noise_probability,
            pool: self.config.noise_pool.clone(),
            rng_seed: self.config.seed,
        };
        let mut all = plain.clone();
        for g in &plain {
            let graph = inject_noise(&g.graph, &noise, &g.id)?;
            let report = validate_conversation_graph(&graph);
            if !report.is_clean() {
                tracing::warn!(graph = %g.id, report = %report.summary(), "noised graph breaks structure rules");
            }
            all.push(GraphArtifact {
                id: format!("{}-noise", g.id),
                kind: GraphKind::Conversation,
                procedure_id: g.procedure_id.clone(),
                source_id: g.id.clone(),
                graph,
                validation_report: report,
                noise: true,
                template_checksum: g.template_checksum.clone(),
            });
        }
        self.write_graph_dir(GraphKind::Conversation, &all)
    }

    /// Graphs paths are sampled from: the noised variant of each plain
    /// graph when noise ran, the plain graph otherwise.
    fn sampling_graphs(&self) -> Result<Vec<GraphArtifact>, PipelineError> {
        let graphs = self.store.read_graphs(GraphKind::Conversation)?;
        let noise_ran = self.manifest()?.completed.contains(&Step::Noise) && self.config.plan().contains(&Step::Noise);
        Ok(graphs.into_iter().filter(|g| g.noise == noise_ran).collect())
    }

    fn step_paths(&self) -> Result<(), PipelineError> {
        let sampler = SamplerConfig {
            paths: self.config.paths_per_graph,
            max_steps: self.config.max_steps,
            max_attempts: self.config.max_attempts,
            dedupe: self.config.dedupe_paths,
        };
        let records: Vec<PathRecord> = self
            .sampling_graphs()?
            .iter()
            .map(|g| {
                let mut rng = derive_rng(self.config.seed, &g.id);
                match sample_paths(&g.graph, &sampler, &mut rng) {
                    Ok(state) => PathRecord {
                        graph_id: g.id.clone(),
                        procedure_id: g.procedure_id.clone(),
                        paths: state.paths,
                        walks: state.walks,
                        abandoned: state.abandoned,
                        weights: state.weights,
                        error: None,
                    },
                    Err(e) => {
                        tracing::warn!(graph = %g.id, error = %e, "path sampling failed");
                        PathRecord {
                            graph_id: g.id.clone(),
                            procedure_id: g.procedure_id.clone(),
                            paths: Vec::new(),
                            walks: 0,
                            abandoned: 0,
                            weights: Default::default(),
                            error: Some(e.to_string()),
                        }
                    }
                }
            })
            .collect();
        self.store.write_jsonl(store::PATHS, &records)
    }

    fn apis_by_procedure(&self) -> Result<HashMap<String, ProcedureApis>, PipelineError> {
        Ok(self
            .store
            .read_jsonl::<ProcedureApis>(store::APIS)?
            .into_iter()
            .map(|a| (a.procedure_id.clone(), a))
            .collect())
    }

    fn step_conversations(&self, stats: &mut RunStats) -> Result<(), PipelineError> {
        let records: Vec<PathRecord> = self.store.read_jsonl(store::PATHS)?;
        let graphs: HashMap<String, GraphArtifact> = self
            .store
            .read_graphs(GraphKind::Conversation)?
            .into_iter()
            .map(|g| (g.id.clone(), g))
            .collect();
        let apis = self.apis_by_procedure()?;
        let mut jobs = Vec::new();
        for r in &records {
            let graph = graphs.get(&r.graph_id).ok_or_else(|| PipelineError::CorruptArtifact {
                path: self.store.path(store::PATHS),
                detail: format!("paths refer to missing graph {}", r.graph_id),
            })?;
            let api_list = apis.get(&r.procedure_id).map(|a| a.apis.as_slice()).unwrap_or(&[]);
            for (k, path) in r.paths.iter().enumerate() {
                jobs.push((graph, api_list, path, format!("{}-c{k}", r.graph_id)));
            }
        }
        let parts = jobs
            .par_iter()
            .map(|(g, a, p, id)| self.generator.generate_conversation(g, a, p, id))
            .collect::<Result<Vec<_>, _>>()?;
        let out = parts.into_iter().fold(StageOutcome::default(), StageOutcome::merge);
        self.store.write_jsonl(store::CONVERSATIONS, &out.produced)?;
        self.record(stats, Stage::Conversations, &out)
    }

    fn step_direct(&self, stats: &mut RunStats) -> Result<(), PipelineError> {
        let items = self.procedures_with_apis()?;
        let jobs: Vec<(&Procedure, &ProcedureApis, usize)> = items
            .iter()
            .flat_map(|(p, a)| (0..self.config.direct_per_procedure).map(move |k| (p, a, k)))
            .collect();
        let parts = jobs
            .par_iter()
            .map(|(p, a, k)| self.generator.generate_conversation_direct(p, &a.apis, *k))
            .collect::<Result<Vec<_>, _>>()?;
        let out = parts.into_iter().fold(StageOutcome::default(), StageOutcome::merge);
        self.store.write_jsonl(store::CONVERSATIONS, &out.produced)?;
        self.record(stats, Stage::Conversations, &out)
    }

    fn step_tests(&self, stats: &mut RunStats) -> Result<(), PipelineError> {
        let conversations: Vec<Conversation> = self.store.read_jsonl(store::CONVERSATIONS)?;
        let procedures: HashMap<String, Procedure> = self
            .store
            .read_jsonl::<Procedure>(store::PROCEDURES)?
            .into_iter()
            .map(|p| (p.id.clone(), p))
            .collect();
        let apis = self.apis_by_procedure()?;
        let mut out: StageOutcome<TestCase> = StageOutcome::default();
        for c in &conversations {
            let text = procedures.get(&c.procedure_id).map(|p| p.text.as_str()).unwrap_or_default();
            let api_list = apis.get(&c.procedure_id).map(|a| a.apis.as_slice()).unwrap_or(&[]);
            match extract_tests(c, text, api_list) {
                Ok(tests) => tests.into_iter().for_each(|t| out.keep(t)),
                Err(e) => out.discard(Discard::new(
                    Stage::Tests,
                    Some(&c.id),
                    "MalformedConversation",
                    e.to_string(),
                    &serde_json::to_string(&c.messages).unwrap_or_default(),
                )),
            }
        }
        self.store.write_jsonl(store::TESTS, &out.produced)?;
        self.record(stats, Stage::Tests, &out)
    }

    /// Scores `agent` on this run's tests and writes
    /// `eval/<agent>/report.json` and `eval/<agent>/outcomes.jsonl`.
    pub fn evaluate(
        &self,
        agent: &dyn AgentAdapter,
        eval: &EvalConfig,
        scorer: &dyn SimilarityScorer,
    ) -> Result<SuiteResult, PipelineError> {
        let tests: Vec<TestCase> = self.store.read_jsonl(store::TESTS)?;
        let result = run_agent_suite(&tests, agent, eval, scorer)?;
        let dir = format!("eval/{}", sanitize(agent.id()));
        self.store.write_json(&format!("{dir}/report.json"), &result.report)?;
        self.store.write_jsonl(&format!("{dir}/outcomes.jsonl"), &result.outcomes)?;
        Ok(result)
    }
}

fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect()
}

/// Runs (or resumes) the run described by `config` under `root`.
pub fn run_pipeline(root: impl AsRef<Path>, config: RunConfig, client: LlmClient) -> Result<RunStats, PipelineError> {
    Pipeline::create(root, config, client)?.run()
}

/// Renders the stats table of a stored run.
pub fn stats_report(root: impl AsRef<Path>, run_id: &str) -> Result<String, PipelineError> {
    let store = ArtifactStore::open(root, run_id)?;
    let stats: RunStats = store.read_json(store::STATS)?;
    Ok(stats.render())
}

/// Metric reports of every agent evaluated on a run, keyed by agent
/// directory name, in name order.
pub fn read_reports(root: impl AsRef<Path>, run_id: &str) -> Result<indexmap::IndexMap<String, MetricsReport>, PipelineError> {
    let store = ArtifactStore::open(root, run_id)?;
    let dir = store.path("eval");
    let mut names: Vec<String> = match std::fs::read_dir(&dir) {
        Ok(entries) => entries
            .flatten()
            .filter(|e| e.path().join("report.json").is_file())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .collect(),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(PipelineError::io(&dir, e)),
    };
    names.sort();
    names
        .into_iter()
        .map(|n| {
            let r: MetricsReport = store.read_json(&format!("eval/{n}/report.json"))?;
            Ok((n, r))
        })
        .collect()
}
