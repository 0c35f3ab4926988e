//! LLM-backed stages. Each one renders a template, asks for a completion,
//! parses it, validates it and either keeps the result or records a
//! [`Discard`] carrying the raw text.

mod json;

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::dsl::{parse_graph, to_flow_block, validate_graph, Graph, GraphKind, NodeType};
use crate::llm::{template_checksum, GenerationParams, LlmClient, LlmError};
use crate::model::{
    validate_api_spec, validate_conversation, ApiSpec, Conversation, Intent, Message, Procedure, ProcedureApis, Role,
};
use crate::report::{Rule, ValidationReport, Violation};

pub use json::{extract_json, remove_trailing_commas};

#[derive(Debug, Error)]
pub enum StageError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("path {path:?} is not a walk from the root of {graph}: {reason}")]
    InvalidPath {
        graph: String,
        path: Vec<String>,
        reason: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Intents,
    Procedures,
    Apis,
    Flowgraphs,
    Convgraphs,
    Conversations,
    Tests,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Intents,
        Stage::Procedures,
        Stage::Apis,
        Stage::Flowgraphs,
        Stage::Convgraphs,
        Stage::Conversations,
        Stage::Tests,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::Intents => "intents",
            Stage::Procedures => "procedures",
            Stage::Apis => "apis",
            Stage::Flowgraphs => "flowgraphs",
            Stage::Convgraphs => "convgraphs",
            Stage::Conversations => "conversations",
            Stage::Tests => "tests",
        }
    }

    pub fn parse(s: &str) -> Option<Stage> {
        let s = s.trim().to_ascii_lowercase();
        let s = s.strip_suffix('s').unwrap_or(&s).to_string();
        Stage::ALL.into_iter().find(|st| st.as_str().trim_end_matches('s') == s)
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A generated item that failed parsing or validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discard {
    pub stage: Stage,
    /// Upstream artifact the attempt was made for.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_id: Option<String>,
    /// Short machine-readable reason, e.g. `RootUniqueness` or `UnknownApi`.
    pub reason: String,
    pub detail: String,
    pub raw_text: String,
}

impl Discard {
    pub fn new(stage: Stage, source_id: Option<&str>, reason: impl Into<String>, detail: impl Into<String>, raw: &str) -> Self {
        Self {
            stage,
            source_id: source_id.map(str::to_string),
            reason: reason.into(),
            detail: detail.into(),
            raw_text: raw.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCounters {
    pub generated: usize,
    pub auto_filtered: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageOutcome<T> {
    pub produced: Vec<T>,
    pub discarded: Vec<Discard>,
    pub counters: StageCounters,
}

impl<T> Default for StageOutcome<T> {
    fn default() -> Self {
        Self {
            produced: Vec::new(),
            discarded: Vec::new(),
            counters: StageCounters::default(),
        }
    }
}

impl<T> StageOutcome<T> {
    pub fn keep(&mut self, item: T) {
        self.counters.generated += 1;
        self.produced.push(item);
    }

    pub fn discard(&mut self, d: Discard) {
        tracing::debug!(stage = %d.stage, source = ?d.source_id, reason = %d.reason, "discarded");
        self.counters.generated += 1;
        self.counters.auto_filtered += 1;
        self.discarded.push(d);
    }

    pub fn merge(mut self, other: StageOutcome<T>) -> Self {
        self.produced.extend(other.produced);
        self.discarded.extend(other.discarded);
        self.counters.generated += other.counters.generated;
        self.counters.auto_filtered += other.counters.auto_filtered;
        self
    }

    /// `generated = produced + discarded`.
    pub fn is_conserved(&self) -> bool {
        self.counters.generated == self.produced.len() + self.discarded.len()
            && self.counters.auto_filtered == self.discarded.len()
    }
}

fn merge_all<T: Send>(parts: Vec<StageOutcome<T>>) -> StageOutcome<T> {
    parts.into_iter().fold(StageOutcome::default(), StageOutcome::merge)
}

/// A flowgraph or conversation graph together with its lineage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphArtifact {
    pub id: String,
    pub kind: GraphKind,
    pub procedure_id: String,
    /// The artifact this graph was derived from: the procedure for
    /// flowgraphs, the flowgraph for conversation graphs, the plain
    /// conversation graph for noise-augmented variants.
    pub source_id: String,
    pub graph: Graph,
    pub validation_report: ValidationReport,
    #[serde(default)]
    pub noise: bool,
    pub template_checksum: String,
}

/// Sampling parameters for each stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageParams {
    pub intents: GenerationParams,
    pub procedures: GenerationParams,
    pub apis: GenerationParams,
    pub flowgraphs: GenerationParams,
    pub convgraphs: GenerationParams,
    pub conversations: GenerationParams,
}

impl Default for StageParams {
    fn default() -> Self {
        let base = GenerationParams::default();
        Self {
            intents: base.clone().with_temperature(0.7),
            procedures: base.clone().with_temperature(0.7),
            apis: base.clone(),
            flowgraphs: base.clone(),
            convgraphs: base.clone(),
            conversations: base.with_temperature(0.7),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    /// Substituted for the company name in the intent and procedure prompts.
    pub platform: String,
    pub params: StageParams,
    /// Keep procedures whose extraction returned no APIs.
    pub allow_api_free: bool,
    /// Extra attempts after a parse/validation failure for graph and
    /// conversation stages. Each failed attempt is recorded as a discard.
    pub retries: u32,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            platform: "our company".into(),
            params: StageParams::default(),
            allow_api_free: false,
            retries: 0,
        }
    }
}

pub struct Generator {
    client: LlmClient,
    config: GeneratorConfig,
}

fn checksum(template: &str) -> String {
    template_checksum(template).unwrap_or_default()
}

fn apis_json(apis: &[ApiSpec]) -> String {
    serde_json::to_string_pretty(apis).unwrap_or_else(|_| "[]".into())
}

fn attempt_vars(mut vars: Vec<(&'static str, String)>, attempt: u32) -> Vec<(&'static str, String)> {
    if attempt > 0 {
        vars.push(("attempt", attempt.to_string()));
    }
    vars
}

impl Generator {
    pub fn new(client: LlmClient, config: GeneratorConfig) -> Self {
        Self { client, config }
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    pub fn client(&self) -> &LlmClient {
        &self.client
    }

    /// Asks for `n` intents in one completion. Records missing a field are
    /// discarded one by one.
    pub fn generate_intents(&self, n: usize) -> Result<StageOutcome<Intent>, StageError> {
        if n == 0 {
            return Err(StageError::InvalidInput("number of intents must be positive".into()));
        }
        let (_, completion) = self.client.complete_template(
            "intent",
            [("number_issues", n.to_string()), ("platform", self.config.platform.clone())],
            &self.config.params.intents,
        )?;
        let mut out = StageOutcome::default();
        let raw = completion.text;
        let records = match extract_json(&raw) {
            Ok(Value::Array(items)) => items,
            Ok(Value::Object(mut obj)) => match obj.remove("issues") {
                Some(Value::Array(items)) => items,
                _ => {
                    out.discard(Discard::new(Stage::Intents, None, "MalformedJson", "expected a JSON array", &raw));
                    return Ok(out);
                }
            },
            Ok(_) => {
                out.discard(Discard::new(Stage::Intents, None, "MalformedJson", "expected a JSON array", &raw));
                return Ok(out);
            }
            Err(e) => {
                out.discard(Discard::new(Stage::Intents, None, "MalformedJson", e, &raw));
                return Ok(out);
            }
        };
        for record in records {
            let field = |k: &str| {
                record
                    .get(k)
                    .and_then(Value::as_str)
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::to_string)
            };
            match (field("client"), field("issue"), field("name")) {
                (Some(client), Some(issue), Some(name)) => {
                    let id = format!("intent-{:03}", out.produced.len());
                    out.keep(Intent { id, client, issue, name });
                }
                _ => {
                    let missing: Vec<&str> = ["client", "issue", "name"]
                        .into_iter()
                        .filter(|k| field(k).is_none())
                        .collect();
                    out.discard(Discard::new(
                        Stage::Intents,
                        None,
                        "MissingField",
                        format!("missing {}", missing.join(", ")),
                        &record.to_string(),
                    ));
                }
            }
        }
        Ok(out)
    }

    /// Requests `k` procedures for every intent.
    pub fn generate_procedures(&self, intents: &[Intent], k: usize) -> Result<StageOutcome<Procedure>, StageError> {
        if k == 0 {
            return Err(StageError::InvalidInput("procedures per intent must be at least 1".into()));
        }
        let jobs: Vec<(&Intent, usize)> = intents.iter().flat_map(|i| (0..k).map(move |j| (i, j))).collect();
        let parts = jobs
            .par_iter()
            .map(|(intent, j)| self.generate_procedure(intent, *j))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(merge_all(parts))
    }

    fn generate_procedure(&self, intent: &Intent, sample: usize) -> Result<StageOutcome<Procedure>, StageError> {
        let (_, completion) = self.client.complete_template(
            "procedure",
            [
                ("issue", intent.issue.clone()),
                ("platform", self.config.platform.clone()),
                ("sample", sample.to_string()),
            ],
            &self.config.params.procedures,
        )?;
        let mut out = StageOutcome::default();
        let text = completion.text.trim();
        if text.is_empty() {
            out.discard(Discard::new(
                Stage::Procedures,
                Some(&intent.id),
                "EmptyText",
                "completion is empty",
                &completion.text,
            ));
        } else {
            let p = Procedure::new(format!("{}-p{sample}", intent.id), &intent.id, text);
            tracing::debug!(id = %p.id, checksum = %checksum("procedure"), "procedure");
            out.keep(p);
        }
        Ok(out)
    }

    /// Extracts the APIs of each procedure. A procedure with any invalid API
    /// record is discarded as a whole.
    pub fn extract_apis(&self, procedures: &[Procedure]) -> Result<StageOutcome<ProcedureApis>, StageError> {
        let parts = procedures
            .par_iter()
            .map(|p| self.extract_procedure_apis(p))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(merge_all(parts))
    }

    pub fn extract_procedure_apis(&self, procedure: &Procedure) -> Result<StageOutcome<ProcedureApis>, StageError> {
        let (_, completion) = self.client.complete_template(
            "api_extraction",
            [("procedure", procedure.text.clone())],
            &self.config.params.apis,
        )?;
        let mut out = StageOutcome::default();
        match parse_api_list(&completion.text) {
            Ok(apis) if apis.is_empty() && !self.config.allow_api_free => out.discard(Discard::new(
                Stage::Apis,
                Some(&procedure.id),
                "NoApis",
                "procedure has no APIs",
                &completion.text,
            )),
            Ok(apis) => out.keep(ProcedureApis {
                procedure_id: procedure.id.clone(),
                apis,
            }),
            Err((reason, detail)) => {
                out.discard(Discard::new(Stage::Apis, Some(&procedure.id), reason, detail, &completion.text))
            }
        }
        Ok(out)
    }

    pub fn generate_flowgraphs(
        &self,
        items: &[(&Procedure, &ProcedureApis)],
    ) -> Result<StageOutcome<GraphArtifact>, StageError> {
        let parts = items
            .par_iter()
            .map(|(p, a)| self.generate_flowgraph(p, &a.apis))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(merge_all(parts))
    }

    pub fn generate_flowgraph(
        &self,
        procedure: &Procedure,
        apis: &[ApiSpec],
    ) -> Result<StageOutcome<GraphArtifact>, StageError> {
        if apis.is_empty() && !self.config.allow_api_free {
            return Err(StageError::InvalidInput(format!("procedure {} has no APIs", procedure.id)));
        }
        let mut out = StageOutcome::default();
        for attempt in 0..=self.config.retries {
            let vars = attempt_vars(
                vec![("procedure", procedure.text.clone()), ("apis", apis_json(apis))],
                attempt,
            );
            let (_, completion) = self
                .client
                .complete_template("flowgraph", vars, &self.config.params.flowgraphs)?;
            match build_graph(&completion.text, GraphKind::Flow) {
                Ok((graph, mut report)) => {
                    flag_unknown_api_nodes(&graph, apis, &mut report);
                    out.keep(GraphArtifact {
                        id: format!("{}-fg", procedure.id),
                        kind: GraphKind::Flow,
                        procedure_id: procedure.id.clone(),
                        source_id: procedure.id.clone(),
                        graph,
                        validation_report: report,
                        noise: false,
                        template_checksum: checksum("flowgraph"),
                    });
                    break;
                }
                Err((reason, detail)) => out.discard(Discard::new(
                    Stage::Flowgraphs,
                    Some(&procedure.id),
                    reason,
                    detail,
                    &completion.text,
                )),
            }
        }
        Ok(out)
    }

    pub fn generate_conversation_graphs(
        &self,
        flowgraphs: &[GraphArtifact],
    ) -> Result<StageOutcome<GraphArtifact>, StageError> {
        let parts = flowgraphs
            .par_iter()
            .map(|f| self.generate_conversation_graph(f))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(merge_all(parts))
    }

    pub fn generate_conversation_graph(&self, flowgraph: &GraphArtifact) -> Result<StageOutcome<GraphArtifact>, StageError> {
        if flowgraph.kind != GraphKind::Flow {
            return Err(StageError::InvalidInput(format!("{} is not a flowgraph", flowgraph.id)));
        }
        let mut out = StageOutcome::default();
        let text = to_flow_block(&flowgraph.graph);
        for attempt in 0..=self.config.retries {
            let vars = attempt_vars(vec![("flowgraph", text.clone())], attempt);
            let (_, completion) = self
                .client
                .complete_template("convgraph", vars, &self.config.params.convgraphs)?;
            match build_graph(&completion.text, GraphKind::Conversation) {
                Ok((graph, report)) => {
                    out.keep(GraphArtifact {
                        id: format!("{}-cg", flowgraph.procedure_id),
                        kind: GraphKind::Conversation,
                        procedure_id: flowgraph.procedure_id.clone(),
                        source_id: flowgraph.id.clone(),
                        graph,
                        validation_report: report,
                        noise: false,
                        template_checksum: checksum("convgraph"),
                    });
                    break;
                }
                Err((reason, detail)) => out.discard(Discard::new(
                    Stage::Convgraphs,
                    Some(&flowgraph.id),
                    reason,
                    detail,
                    &completion.text,
                )),
            }
        }
        Ok(out)
    }

    /// Writes a conversation that follows `path` through `conv_graph`.
    pub fn generate_conversation(
        &self,
        conv_graph: &GraphArtifact,
        apis: &[ApiSpec],
        path: &[String],
        id: &str,
    ) -> Result<StageOutcome<Conversation>, StageError> {
        check_path(conv_graph, path)?;
        let mut out = StageOutcome::default();
        let graph_text = to_flow_block(&conv_graph.graph);
        let path_text = format!("[{}]", path.join(", "));
        for attempt in 0..=self.config.retries {
            let vars = attempt_vars(
                vec![
                    ("conversation_graph", graph_text.clone()),
                    ("apis", apis_json(apis)),
                    ("path", path_text.clone()),
                ],
                attempt,
            );
            let (_, completion) =
                self.client
                    .complete_template("conversation", vars, &self.config.params.conversations)?;
            match parse_conversation(&completion.text, apis) {
                Ok(messages) => {
                    out.keep(Conversation {
                        id: id.to_string(),
                        conv_graph_id: Some(conv_graph.id.clone()),
                        procedure_id: conv_graph.procedure_id.clone(),
                        path: path.to_vec(),
                        messages,
                    });
                    break;
                }
                Err((reason, detail)) => out.discard(Discard::new(
                    Stage::Conversations,
                    Some(&conv_graph.id),
                    reason,
                    detail,
                    &completion.text,
                )),
            }
        }
        Ok(out)
    }

    /// Writes a conversation straight from the procedure, skipping graphs.
    /// `sample` distinguishes repeated requests for the same procedure.
    pub fn generate_conversation_direct(
        &self,
        procedure: &Procedure,
        apis: &[ApiSpec],
        sample: usize,
    ) -> Result<StageOutcome<Conversation>, StageError> {
        let mut out = StageOutcome::default();
        for attempt in 0..=self.config.retries {
            let vars = attempt_vars(
                vec![
                    ("procedure", procedure.text.clone()),
                    ("apis", apis_json(apis)),
                    ("sample", sample.to_string()),
                ],
                attempt,
            );
            let (_, completion) =
                self.client
                    .complete_template("direct_conversation", vars, &self.config.params.conversations)?;
            match parse_conversation(&completion.text, apis) {
                Ok(messages) => {
                    out.keep(Conversation {
                        id: format!("{}-d{sample}", procedure.id),
                        conv_graph_id: None,
                        procedure_id: procedure.id.clone(),
                        path: Vec::new(),
                        messages,
                    });
                    break;
                }
                Err((reason, detail)) => out.discard(Discard::new(
                    Stage::Conversations,
                    Some(&procedure.id),
                    reason,
                    detail,
                    &completion.text,
                )),
            }
        }
        Ok(out)
    }
}

type Rejection = (String, String);

/// Parses `{"apis": [...]}` (or a bare list) into validated specs.
pub fn parse_api_list(text: &str) -> Result<Vec<ApiSpec>, Rejection> {
    let value = extract_json(text).map_err(|e| ("MalformedApiJson".to_string(), e))?;
    let list = match value {
        Value::Object(mut obj) => match obj.remove("apis") {
            Some(Value::Array(items)) => items,
            None if obj.is_empty() => Vec::new(),
            _ => return Err(("MalformedApiJson".into(), "\"apis\" is not a list".into())),
        },
        Value::Array(items) => items,
        _ => return Err(("MalformedApiJson".into(), "expected an object with \"apis\"".into())),
    };
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(list.len());
    for raw in &list {
        let spec = validate_api_spec(raw).map_err(|e| (model_error_code(&e).to_string(), e.to_string()))?;
        if !seen.insert(spec.name.clone()) {
            return Err(("DuplicateApi".into(), format!("API {} declared twice", spec.name)));
        }
        out.push(spec);
    }
    Ok(out)
}

fn model_error_code(e: &crate::model::ModelError) -> &'static str {
    use crate::model::ModelError::*;
    match e {
        MalformedApiJson(_) => "MalformedApiJson",
        BadName(_) => "BadName",
        EmptyParamType { .. } => "EmptyParamType",
        DuplicateParam { .. } => "DuplicateParam",
        UnknownRole(_) => "UnknownRole",
        EmptyContent => "EmptyContent",
        BadCall { .. } => "BadCall",
    }
}

fn build_graph(text: &str, kind: GraphKind) -> Result<(Graph, ValidationReport), Rejection> {
    let graph = parse_graph(text, kind).map_err(|e| {
        let code = match e {
            crate::dsl::ParseError::EmptyInput => "EmptyInput",
            crate::dsl::ParseError::SyntaxError { .. } => "SyntaxError",
            crate::dsl::ParseError::DuplicateNodeId { .. } => "DuplicateNodeId",
            crate::dsl::ParseError::DanglingEdge { .. } => "DanglingEdge",
        };
        (code.to_string(), e.to_string())
    })?;
    let report = validate_graph(&graph);
    if !report.is_clean() {
        let detail = report
            .violations
            .iter()
            .map(|v| v.message.as_str())
            .collect::<Vec<_>>()
            .join("; ");
        return Err((report.summary(), detail));
    }
    Ok((graph, report))
}

fn flag_unknown_api_nodes(graph: &Graph, apis: &[ApiSpec], report: &mut ValidationReport) {
    if apis.is_empty() {
        return;
    }
    for n in graph.nodes.values().filter(|n| n.node_type == NodeType::Api) {
        let named = apis.iter().any(|a| {
            n.description
                .split(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
                .any(|w| w == a.name)
        });
        if !named {
            report.warn(Violation::new(
                Rule::UnknownApiNode,
                Some(n.id.clone()),
                format!("api node {:?} names none of the extracted APIs", n.description),
            ));
        }
    }
}

fn check_path(conv_graph: &GraphArtifact, path: &[String]) -> Result<(), StageError> {
    let fail = |reason: String| StageError::InvalidPath {
        graph: conv_graph.id.clone(),
        path: path.to_vec(),
        reason,
    };
    let g = &conv_graph.graph;
    let first = path.first().ok_or_else(|| fail("path is empty".into()))?;
    match g.root() {
        Some(root) if &root.id == first => {}
        _ => return Err(fail(format!("{first} is not the root"))),
    }
    for pair in path.windows(2) {
        if g.edge_between(&pair[0], &pair[1]).is_none() {
            return Err(fail(format!("no edge {} -> {}", pair[0], pair[1])));
        }
    }
    Ok(())
}

/// Parses and checks a generated message list.
///
/// Assistant messages before the first user message are dropped, since
/// models often open with a greeting even though conversations must start
/// with the customer. The rest must pass [`validate_conversation`], and every
/// api message must call one of `apis` with all required parameters bound.
pub fn parse_conversation(text: &str, apis: &[ApiSpec]) -> Result<Vec<Message>, Rejection> {
    let value = extract_json(text).map_err(|e| ("MalformedJson".to_string(), e))?;
    let items = match value {
        Value::Array(items) => items,
        Value::Object(mut obj) => match obj.remove("messages").or_else(|| obj.remove("conversation")) {
            Some(Value::Array(items)) => items,
            _ => return Err(("MalformedJson".into(), "expected a JSON array of messages".into())),
        },
        _ => return Err(("MalformedJson".into(), "expected a JSON array of messages".into())),
    };
    let mut messages = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let role = item
            .get("role")
            .and_then(Value::as_str)
            .ok_or_else(|| ("BadMessage".to_string(), format!("message {i} has no role")))?;
        let role: Role = role
            .parse()
            .map_err(|e: crate::model::ModelError| ("BadMessage".to_string(), format!("message {i}: {e}")))?;
        let content = match item.get("content") {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Null) | None => String::new(),
            Some(other) => other.to_string(),
        };
        let msg = Message::new(role, content).map_err(|e| ("BadMessage".to_string(), format!("message {i}: {e}")))?;
        messages.push(msg);
    }
    if let Some(first_user) = messages.iter().position(|m| m.role == Role::User) {
        if messages[..first_user].iter().all(|m| m.role == Role::Assistant) {
            messages.drain(..first_user);
        }
    }
    let report = validate_conversation(&messages);
    if !report.is_clean() {
        return Err((report.summary(), format!("{:?}", report.violations)));
    }
    for (i, m) in messages.iter().enumerate() {
        let Some(call) = &m.call else { continue };
        let spec = apis
            .iter()
            .find(|a| a.name == call.name)
            .ok_or_else(|| ("UnknownApi".to_string(), format!("message {i} calls unknown API {}", call.name)))?;
        if let Some(missing) = spec.required_params().find(|p| !call.args.contains_key(&p.name)) {
            return Err((
                "MissingParam".into(),
                format!("message {i}: {} is missing parameter {}", call.name, missing.name),
            ));
        }
    }
    Ok(messages)
}
