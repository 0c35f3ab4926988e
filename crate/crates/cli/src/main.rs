use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use tracing_subscriber::EnvFilter;

use convtest::eval::{
    compare_reports, default_scorer, render_table, AgentAdapter, AlwaysReplyAgent, GoldReplayAgent, LlmAgent, Metric,
    ParamMatchMode, TableFormat,
};
use convtest::generators::GeneratorConfig;
use convtest::llm::{GenerationParams, LlmClient};
use convtest::pipeline::{
    read_reports, stats_report, Pipeline, ProviderKind, ProviderSettings, RunConfig, Step, StepStatus,
};
use convtest_curation::{CurationConfig, CurationService};

#[derive(Parser)]
#[command(name = "convtest", version, about = "Generate conversational test suites and score agents on them")]
struct Cli {
    /// Directory holding one subdirectory per run.
    #[arg(long, global = true, default_value = "runs", env = "CONVTEST_RUNS_DIR")]
    runs_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run (or resume) every planned step.
    Run(RunArgs),
    /// Generate seed intents.
    GenIntents(StepArgs),
    /// Write procedures for each intent.
    GenProcedures(StepArgs),
    /// Extract the APIs each procedure uses.
    ExtractApis(StepArgs),
    /// Turn procedures into flowgraphs.
    GenFlowgraphs(StepArgs),
    /// Turn flowgraphs into conversation graphs.
    GenConvgraphs(StepArgs),
    /// Add noise detours to conversation graphs.
    AddNoise(StepArgs),
    /// Sample root-to-leaf paths from conversation graphs.
    SamplePaths(StepArgs),
    /// Write a conversation for every sampled path.
    GenConversations(StepArgs),
    /// Conversations straight from procedures (needs --ablation).
    GenDirect(StepArgs),
    /// Cut conversations into tests.
    ExtractTests(StepArgs),
    /// Score an agent on a run's tests.
    Evaluate(EvaluateArgs),
    /// Metric table of every agent evaluated on a run.
    Report(ReportArgs),
    /// Per-stage counts of a run.
    Stats(StatsArgs),
    /// Serve the curation API.
    ServeCuration(ServeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Provider {
    Demo,
    Fixtures,
    Remote,
}

#[derive(Args, Clone)]
struct RunArgs {
    #[arg(long, default_value = "run")]
    run_id: String,
    /// Start from a JSON run configuration; other flags are ignored.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "demo")]
    provider: Provider,
    #[arg(long)]
    fixtures_dir: Option<PathBuf>,
    #[arg(long)]
    base_url: Option<String>,
    #[arg(long, default_value = "gpt-4")]
    model: String,
    #[arg(long, default_value_t = 8)]
    max_in_flight: usize,
    #[arg(long, default_value = "our company")]
    platform: String,
    #[arg(long, default_value_t = 0)]
    retries: u32,
    #[arg(long)]
    allow_api_free: bool,
    #[arg(long, default_value_t = 10)]
    n_intents: usize,
    #[arg(long, default_value_t = 2)]
    procedures_per_intent: usize,
    #[arg(long, default_value_t = 0.2)]
    noise_p: f64,
    #[arg(long, default_value_t = 5)]
    paths_per_graph: usize,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    max_attempts: Option<usize>,
    #[arg(long)]
    dedupe_paths: bool,
    /// Similarity threshold for reply correctness.
    #[arg(long, default_value_t = 0.55)]
    tau: f64,
    /// Steps to leave out, e.g. `--skip noise`.
    #[arg(long, value_parser = parse_step)]
    skip: Vec<Step>,
    /// Generate conversations directly from procedures.
    #[arg(long)]
    ablation: bool,
    #[arg(long, default_value_t = 3)]
    direct_per_procedure: usize,
}

fn parse_step(s: &str) -> Result<Step, String> {
    Step::parse(s).ok_or_else(|| {
        let names: Vec<&str> = Step::ALL.iter().map(Step::as_str).collect();
        format!("unknown step {s}; expected one of {}", names.join(", "))
    })
}

impl RunArgs {
    fn to_config(&self) -> Result<RunConfig> {
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            return serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()));
        }
        let mut generator = GeneratorConfig {
            platform: self.platform.clone(),
            allow_api_free: self.allow_api_free,
            retries: self.retries,
            ..GeneratorConfig::default()
        };
        for p in [
            &mut generator.params.intents,
            &mut generator.params.procedures,
            &mut generator.params.apis,
            &mut generator.params.flowgraphs,
            &mut generator.params.convgraphs,
            &mut generator.params.conversations,
        ] {
            p.model = self.model.clone();
        }
        Ok(RunConfig {
            run_id: self.run_id.clone(),
            seed: self.seed,
            provider: ProviderSettings {
                kind: match self.provider {
                    Provider::Demo => ProviderKind::Demo,
                    Provider::Fixtures => ProviderKind::Fixtures,
                    Provider::Remote => ProviderKind::Remote,
                },
                fixtures_dir: self.fixtures_dir.clone(),
                base_url: self.base_url.clone(),
                max_in_flight: self.max_in_flight,
            },
            n_intents: self.n_intents,
            procedures_per_intent: self.procedures_per_intent,
            noise_probability: self.noise_p,
            paths_per_graph: self.paths_per_graph,
            max_steps: self.max_steps,
            max_attempts: self.max_attempts,
            dedupe_paths: self.dedupe_paths,
            similarity_threshold: self.tau,
            skip: self.skip.clone(),
            ablation: self.ablation,
            direct_per_procedure: self.direct_per_procedure,
            generator,
            ..RunConfig::default()
        })
    }
}

#[derive(Args, Clone)]
struct StepArgs {
    /// Rerun the step even if it already completed.
    #[arg(long)]
    force: bool,
    /// Used only when the run does not exist yet.
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum AgentKind {
    /// Replays the expected action.
    Gold,
    /// Always sends the same reply.
    AlwaysReply,
    /// The rule-based agent of the demo backend.
    Demo,
    /// An LLM through the run's provider.
    Llm,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    run_id: String,
    #[arg(long, value_enum, default_value = "gold")]
    agent: AgentKind,
    /// Name under eval/ for the results; defaults to the agent kind.
    #[arg(long)]
    agent_id: Option<String>,
    /// Model for the llm agent.
    #[arg(long, default_value = "gpt-4")]
    agent_model: String,
    /// Overrides the run's similarity threshold.
    #[arg(long)]
    tau: Option<f64>,
    /// Compare parameter values exactly instead of normalizing them.
    #[arg(long)]
    strict_params: bool,
    /// Read output without any JSON object as a reply.
    #[arg(long)]
    plain_text_as_reply: bool,
    #[arg(long, default_value_t = 8)]
    max_parallel: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    run_id: String,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
    /// Correlate with the agents evaluated on another run.
    #[arg(long)]
    compare_run: Option<String>,
    #[arg(long, default_value = "test_correct")]
    metric: String,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    run_id: String,
    /// Include manual removals recorded by the curation service.
    #[arg(long)]
    curated: bool,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    /// Directory with the review UI bundle.
    #[arg(long)]
    static_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    required_annotators: usize,
}

fn open_or_create(runs_dir: &PathBuf, args: &RunArgs) -> Result<Pipeline> {
    match Pipeline::stored_config(runs_dir, &args.run_id) {
        Ok(stored) => {
            tracing::info!(run = %args.run_id, "using stored configuration");
            let client = stored.provider.build_client()?;
            Ok(Pipeline::create(runs_dir, stored, client)?)
        }
        Err(convtest::pipeline::PipelineError::UnknownRun(_)) => {
            let config = args.to_config()?;
            let client = config.provider.build_client()?;
            Ok(Pipeline::create(runs_dir, config, client)?)
        }
        Err(e) => Err(e.into()),
    }
}

fn run_step(runs_dir: &PathBuf, args: &StepArgs, step: Step) -> Result<()> {
    let p = open_or_create(runs_dir, &args.run)?;
    match p.run_step(step, args.force)? {
        StepStatus::Ran => println!("{step}: done"),
        StepStatus::Skipped => println!("{step}: already complete (use --force to rerun)"),
    }
    Ok(())
}

fn evaluate(runs_dir: &PathBuf, args: &EvaluateArgs) -> Result<()> {
    let config = Pipeline::stored_config(runs_dir, &args.run_id)?;
    let client = match args.agent {
        AgentKind::Demo => LlmClient::new(Arc::new(convtest::demo::order_support_backend()), args.max_parallel.max(1)),
        _ => config.provider.build_client()?,
    };
    let pipeline = Pipeline::create(runs_dir, config.clone(), config.provider.build_client()?)?;
    let params = GenerationParams {
        model: args.agent_model.clone(),
        ..GenerationParams::default()
    };
    let agent: Box<dyn AgentAdapter> = match args.agent {
        AgentKind::Gold => Box::new(GoldReplayAgent),
        AgentKind::AlwaysReply => Box::new(AlwaysReplyAgent::default()),
        AgentKind::Demo => Box::new(LlmAgent::new("demo", client, params)),
        AgentKind::Llm => Box::new(LlmAgent::new(args.agent_model.clone(), client, params)),
    };
    let mut eval = config.eval_config();
    if let Some(t) = args.tau {
        eval.similarity_threshold = t;
    }
    if args.strict_params {
        eval.param_match_mode = ParamMatchMode::Strict;
    }
    eval.plain_text_as_reply = args.plain_text_as_reply;
    eval.max_parallel = args.max_parallel;
    let named = Named {
        inner: agent.as_ref(),
        id: args.agent_id.clone(),
    };
    let scorer = default_scorer();
    let result = pipeline.evaluate(&named, &eval, scorer.as_ref())?;
    print!("{}", render_table([(result.agent_id.as_str(), &result.report)], TableFormat::Text));
    println!("similarity: {}", scorer.id());
    Ok(())
}

/// Lets `--agent-id` rename any agent.
struct Named<'a> {
    inner: &'a dyn AgentAdapter,
    id: Option<String>,
}

impl AgentAdapter for Named<'_> {
    fn id(&self) -> &str {
        self.id.as_deref().unwrap_or_else(|| self.inner.id())
    }

    fn act(&self, test: &convtest::model::TestCase) -> Result<String, String> {
        self.inner.act(test)
    }
}

fn report(runs_dir: &PathBuf, args: &ReportArgs) -> Result<()> {
    let reports = read_reports(runs_dir, &args.run_id)?;
    if reports.is_empty() {
        bail!("no agent has been evaluated on run {}", args.run_id);
    }
    let format = match args.format {
        Format::Text => TableFormat::Text,
        Format::Csv => TableFormat::Csv,
    };
    print!("{}", render_table(reports.iter().map(|(k, v)| (k.as_str(), v)), format));
    if let Some(other) = &args.compare_run {
        let metric = Metric::parse(&args.metric).with_context(|| format!("unknown metric {}", args.metric))?;
        let theirs = read_reports(runs_dir, other)?;
        let cmp = compare_reports(&reports, &theirs, metric)?;
        println!("pearson r ({}, {} vs {}): {:.4}", metric.as_str(), args.run_id, other, cmp.pearson_r);
    }
    Ok(())
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let dir = &cli.runs_dir;
    match &cli.command {
        Command::Run(args) => {
            let config = args.to_config()?;
            let client = config.provider.build_client()?;
            let stats = Pipeline::create(dir, config, client)?.run()?;
            print!("{}", stats.render());
        }
        Command::GenIntents(a) => run_step(dir, a, Step::Intents)?,
        Command::GenProcedures(a) => run_step(dir, a, Step::Procedures)?,
        Command::ExtractApis(a) => run_step(dir, a, Step::Apis)?,
        Command::GenFlowgraphs(a) => run_step(dir, a, Step::Flowgraphs)?,
        Command::GenConvgraphs(a) => run_step(dir, a, Step::Convgraphs)?,
        Command::AddNoise(a) => run_step(dir, a, Step::Noise)?,
        Command::SamplePaths(a) => run_step(dir, a, Step::Paths)?,
        Command::GenConversations(a) => run_step(dir, a, Step::Conversations)?,
        Command::GenDirect(a) => run_step(dir, a, Step::Direct)?,
        Command::ExtractTests(a) => run_step(dir, a, Step::Tests)?,
        Command::Evaluate(a) => evaluate(dir, a)?,
        Command::Report(a) => report(dir, a)?,
        Command::Stats(a) => {
            if a.curated {
                let svc = CurationService::new(dir, CurationConfig::default());
                print!("{}", svc.stats(&a.run_id)?.render());
            } else {
                print!("{}", stats_report(dir, &a.run_id)?);
            }
        }
        Command::ServeCuration(a) => {
            let svc = CurationService::new(
                dir,
                CurationConfig {
                    required_annotators: a.required_annotators.max(1),
                    ..CurationConfig::default()
                },
            );
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(convtest_curation::serve(a.addr, svc, a.static_dir.clone()))?;
        }
    }
    Ok(())
}
