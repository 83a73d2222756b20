//! `fallacy` — operator surface for validation, single-statement
//! classification, batch evaluation, graph queries, transcript cache
//! management, and report merging.

mod config;
mod ops;

use anyhow::{anyhow, Result};
use clap::{Args, CommandFactory, Parser, Subcommand};
use config::Config;
use fallacy_core::instructions::{parse_test_cases, TestCase};
use fallacy_core::pipelines::{Mode, Pipeline};
use fallacy_core::relations::ClosurePolicy;
use fallacy_core::scoring::ReportFormat;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "fallacy", version, about = "Stepwise logical fallacy classification harness")]
struct Cli {
    /// TOML config file; flags override config values
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate input files: schema, lints, and cross-references
    Validate(ValidateArgs),
    /// Classify one statement and print the full step-level trace
    Classify(ClassifyArgs),
    /// Run a pipeline over a corpus, score it, and print the report
    Evaluate(EvaluateArgs),
    /// Query the confused-with relation graph
    Graph(GraphArgs),
    /// Inspect or verify a transcript store
    Cache(CacheArgs),
    /// Merge scored report files into one accuracy table
    Report(ReportArgs),
}

#[derive(Args)]
struct InputArgs {
    /// Instruction knowledge-base file (JSON array of records)
    #[arg(long)]
    instructions: Option<PathBuf>,
    /// Relation fact file (confused_with clauses)
    #[arg(long)]
    relations: Option<PathBuf>,
    /// Taxonomy tree file (nested label/definition/children)
    #[arg(long)]
    taxonomy: Option<PathBuf>,
    /// Name/description catalog file (JSON array)
    #[arg(long)]
    catalog: Option<PathBuf>,
    /// Alias file (raw -> canonical lines)
    #[arg(long)]
    aliases: Option<PathBuf>,
}

#[derive(Args)]
struct ProviderArgs {
    /// openai | anthropic | gemini | replay | oracle
    #[arg(long)]
    provider: Option<String>,
    /// Model identifier sent to the provider
    #[arg(long)]
    model: Option<String>,
    /// Sampling temperature (default 0 for replay determinism)
    #[arg(long)]
    temperature: Option<f64>,
    /// Override the provider base URL
    #[arg(long)]
    base_url: Option<String>,
    /// Transcript store path; enables caching and exact replay
    #[arg(long)]
    transcript: Option<PathBuf>,
    /// Rate-limit/transport retry budget
    #[arg(long)]
    retry_attempts: Option<u32>,
    /// Format re-prompt budget per prompt
    #[arg(long)]
    format_attempts: Option<u32>,
    /// Maximum output tokens per completion
    #[arg(long)]
    max_output: Option<u32>,
    /// Scripted oracle table (JSONL) for the oracle provider
    #[arg(long)]
    oracle_file: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    /// baseline | hierarchical | stepwise | graph_augmented
    #[arg(long)]
    pipeline: String,
    /// monolithic | per_step (stepwise/graph_augmented only)
    #[arg(long)]
    mode: Option<String>,
    /// Relation-closure depth (graph_augmented)
    #[arg(long)]
    depth: Option<usize>,
    /// Treat relation facts as directed instead of symmetric
    #[arg(long)]
    directed: bool,
    /// Fail a case when a step answer stays unparseable, instead of
    /// recording a mismatch (per_step modes)
    #[arg(long)]
    strict_steps: bool,
    /// Record a failure instead of guessing when no record fully
    /// matches (per_step modes)
    #[arg(long)]
    abstain: bool,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    inputs: InputArgs,
    /// Statement corpus to cross-check against the instruction set
    #[arg(long)]
    corpus: Option<PathBuf>,
}

#[derive(Args)]
struct ClassifyArgs {
    #[command(flatten)]
    inputs: InputArgs,
    #[command(flatten)]
    provider: ProviderArgs,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Statement text to classify
    #[arg(long, conflicts_with = "case")]
    statement: Option<String>,
    /// Classify a corpus case by id (requires --corpus)
    #[arg(long, requires = "corpus")]
    case: Option<String>,
    /// Corpus file, when classifying by case id
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Emit the raw prediction JSON instead of the readable trace
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    inputs: InputArgs,
    #[command(flatten)]
    provider: ProviderArgs,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Statement corpus to evaluate
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Directory for predictions.jsonl, manifest.json, report.json
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report format on stdout: json | csv | markdown
    #[arg(long, default_value = "json")]
    format: String,
    /// Concurrent cases (steps within a case stay sequential)
    #[arg(long)]
    parallelism: Option<usize>,
    /// Exit 2 when failures exceed this count
    #[arg(long)]
    failure_threshold: Option<u32>,
    /// Manual-patch file (JSONL case_id/label) applied before scoring
    #[arg(long)]
    patches: Option<PathBuf>,
}

#[derive(Args)]
struct GraphArgs {
    /// Relation fact file
    #[arg(long)]
    relations: Option<PathBuf>,
    /// Instruction set to validate fact endpoints against
    #[arg(long)]
    instructions: Option<PathBuf>,
    /// Alias file
    #[arg(long)]
    aliases: Option<PathBuf>,
    /// Fallacy name to expand
    query: String,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    directed: bool,
}

#[derive(Args)]
struct CacheArgs {
    #[command(subcommand)]
    action: CacheAction,
}

#[derive(Subcommand)]
enum CacheAction {
    /// Entry and token counts
    Stats {
        #[arg(long)]
        transcript: Option<PathBuf>,
    },
    /// Recompute every key and flag mismatches
    Verify {
        #[arg(long)]
        transcript: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ReportArgs {
    /// Scored report JSON files to merge
    #[arg(long = "input")]
    inputs: Vec<PathBuf>,
    /// Score a raw predictions file instead of merging reports
    #[arg(long, requires = "corpus", conflicts_with = "inputs")]
    predictions: Option<PathBuf>,
    /// Corpus the predictions cover
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Taxonomy (required when the predictions carry tier paths)
    #[arg(long)]
    taxonomy: Option<PathBuf>,
    /// Alias file for label resolution
    #[arg(long)]
    aliases: Option<PathBuf>,
    /// Manual-patch file applied before scoring
    #[arg(long)]
    patches: Option<PathBuf>,
    /// Model name recorded in the report row
    #[arg(long)]
    model: Option<String>,
    #[arg(long, default_value = "markdown")]
    format: String,
}

fn usage_error(message: &str) -> ! {
    let mut command = Cli::command();
    command
        .error(clap::error::ErrorKind::ArgumentConflict, message)
        .exit()
}

fn stepwise_options(args: &PipelineArgs) -> fallacy_core::pipelines::StepwiseOptions {
    fallacy_core::pipelines::StepwiseOptions {
        strictness: if args.strict_steps {
            fallacy_core::pipelines::Strictness::FailCase
        } else {
            fallacy_core::pipelines::Strictness::ForceMismatch
        },
        abstain_without_full_match: args.abstain,
    }
}

fn parse_pipeline(args: &PipelineArgs, config: &Config) -> (Pipeline, Option<Mode>, ClosurePolicy) {
    let Some(pipeline) = Pipeline::from_name(&args.pipeline) else {
        usage_error(&format!(
            "unknown pipeline {:?} (baseline, hierarchical, stepwise, graph_augmented)",
            args.pipeline
        ));
    };
    let mode = args.mode.as_deref().map(|name| {
        Mode::from_name(name)
            .unwrap_or_else(|| usage_error(&format!("unknown mode {name:?} (monolithic, per_step)")))
    });
    if mode.is_some() && !pipeline.supports_mode() {
        usage_error(&format!(
            "--mode applies only to stepwise and graph_augmented, not {}",
            pipeline.name()
        ));
    }
    let policy = closure_policy(args.directed, args.depth, config);
    (pipeline, mode, policy)
}

fn closure_policy(directed_flag: bool, depth_flag: Option<usize>, config: &Config) -> ClosurePolicy {
    let directed = directed_flag || config.policy.directed.unwrap_or(false);
    let depth = depth_flag.or(config.policy.depth).unwrap_or(1);
    ClosurePolicy::new(!directed, depth).unwrap_or_else(|e| usage_error(&e.to_string()))
}

fn provider_spec(args: &ProviderArgs, config: &Config) -> ops::ProviderSpec {
    let name = args
        .provider
        .clone()
        .or_else(|| config.provider.name.clone())
        .unwrap_or_else(|| "anthropic".to_string());
    if name == "oracle" && args.model.is_some() {
        usage_error("--model does not apply to the oracle provider");
    }
    ops::ProviderSpec {
        model: args
            .model
            .clone()
            .or_else(|| config.provider.model.clone())
            .unwrap_or_else(|| match name.as_str() {
                "oracle" => "oracle".to_string(),
                "replay" => "replay".to_string(),
                _ => usage_error("--model is required for live providers"),
            }),
        name,
        temperature: args
            .temperature
            .or(config.provider.temperature)
            .unwrap_or(0.0),
        base_url: args.base_url.clone().or_else(|| config.provider.base_url.clone()),
        transcript: args
            .transcript
            .clone()
            .or_else(|| config.paths.transcript.clone()),
        retry_attempts: args
            .retry_attempts
            .or(config.provider.retry_attempts)
            .unwrap_or(5),
        max_output: args.max_output.or(config.provider.max_output).unwrap_or(4096),
        format_attempts: args
            .format_attempts
            .or(config.provider.format_attempts)
            .unwrap_or(3),
        oracle_file: args.oracle_file.clone(),
    }
}

fn load_inputs(args: &InputArgs, config: &Config) -> Result<ops::Inputs> {
    let pick = |flag: &Option<PathBuf>, config_value: &Option<PathBuf>| -> Option<PathBuf> {
        flag.clone().or_else(|| config_value.clone())
    };
    ops::Inputs::load(
        pick(&args.instructions, &config.paths.instructions).as_ref(),
        pick(&args.relations, &config.paths.relations).as_ref(),
        pick(&args.taxonomy, &config.paths.taxonomy).as_ref(),
        pick(&args.catalog, &config.paths.catalog).as_ref(),
        pick(&args.aliases, &config.paths.aliases).as_ref(),
    )
}

fn parse_format(name: &str) -> ReportFormat {
    ReportFormat::from_name(name)
        .unwrap_or_else(|| usage_error(&format!("unknown format {name:?} (json, csv, markdown)")))
}

// Replay mode ignores temperature/model distinctions only insofar as the
// keys recorded in the store; conflicts surface as cache misses.
fn dispatch(cli: Cli) -> Result<u8> {
    let config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };

    match cli.command {
        Command::Validate(args) => {
            let inputs = load_inputs(&args.inputs, &config)?;
            let corpus = args.corpus.or_else(|| config.paths.corpus.clone());
            if inputs.instructions.is_none()
                && inputs.relations.is_none()
                && inputs.taxonomy.is_none()
                && inputs.catalog.is_none()
                && corpus.is_none()
            {
                usage_error("validate needs at least one input file");
            }
            ops::validate(&inputs, corpus.as_ref())
        }
        Command::Classify(args) => {
            let (pipeline, mode, policy) = parse_pipeline(&args.pipeline, &config);
            let inputs = load_inputs(&args.inputs, &config)?;
            let provider = provider_spec(&args.provider, &config);
            validate_provider_mode(&provider, pipeline, mode);
            let case = match (&args.statement, &args.case) {
                (Some(statement), None) => TestCase {
                    id: "adhoc".to_string(),
                    statement: statement.clone(),
                    gold: String::new(),
                },
                (None, Some(case_id)) => {
                    let corpus_path = args
                        .corpus
                        .clone()
                        .or_else(|| config.paths.corpus.clone())
                        .ok_or_else(|| anyhow!("--case requires --corpus"))?;
                    let cases = parse_test_cases(&std::fs::read(&corpus_path)?)?;
                    cases
                        .into_iter()
                        .find(|c| c.id == *case_id)
                        .ok_or_else(|| anyhow!("case {case_id:?} not found in {}", corpus_path.display()))?
                }
                _ => usage_error("classify needs exactly one of --statement or --case"),
            };
            let spec = ops::RunSpec {
                pipeline,
                mode,
                policy,
                parallelism: 1,
                stepwise: stepwise_options(&args.pipeline),
            };
            ops::classify(case, &spec, &inputs, &provider, args.json)
        }
        Command::Evaluate(args) => {
            let (pipeline, mode, policy) = parse_pipeline(&args.pipeline, &config);
            let inputs = load_inputs(&args.inputs, &config)?;
            let provider = provider_spec(&args.provider, &config);
            validate_provider_mode(&provider, pipeline, mode);
            let corpus = args
                .corpus
                .or_else(|| config.paths.corpus.clone())
                .unwrap_or_else(|| usage_error("evaluate requires --corpus"));
            let spec = ops::RunSpec {
                pipeline,
                mode,
                policy,
                parallelism: args
                    .parallelism
                    .or(config.run.parallelism)
                    .unwrap_or(1)
                    .max(1),
                stepwise: stepwise_options(&args.pipeline),
            };
            let eval = ops::EvaluateSpec {
                out_dir: args.out,
                format: parse_format(&args.format),
                failure_threshold: args
                    .failure_threshold
                    .or(config.run.failure_threshold)
                    .unwrap_or(0),
                patches: args.patches,
            };
            ops::evaluate(&corpus, &spec, &inputs, &provider, &eval)
        }
        Command::Graph(args) => {
            let relations = args
                .relations
                .clone()
                .or_else(|| config.paths.relations.clone())
                .unwrap_or_else(|| usage_error("graph requires --relations"));
            let inputs = ops::Inputs::load(
                args.instructions
                    .clone()
                    .or_else(|| config.paths.instructions.clone())
                    .as_ref(),
                None,
                None,
                None,
                args.aliases
                    .clone()
                    .or_else(|| config.paths.aliases.clone())
                    .as_ref(),
            )?;
            let policy = closure_policy(args.directed, args.depth, &config);
            ops::graph_query(&relations, &inputs, &args.query, policy)
        }
        Command::Cache(args) => {
            let transcript = |flag: Option<PathBuf>| {
                flag.or_else(|| config.paths.transcript.clone())
                    .unwrap_or_else(|| usage_error("cache commands require --transcript"))
            };
            match args.action {
                CacheAction::Stats { transcript: t } => ops::cache_stats(&transcript(t)),
                CacheAction::Verify { transcript: t } => ops::cache_verify(&transcript(t)),
            }
        }
        Command::Report(args) => {
            let format = parse_format(&args.format);
            match &args.predictions {
                Some(predictions) => {
                    let corpus = args
                        .corpus
                        .clone()
                        .or_else(|| config.paths.corpus.clone())
                        .unwrap_or_else(|| usage_error("--predictions requires --corpus"));
                    ops::score_predictions_file(
                        predictions,
                        &corpus,
                        args.taxonomy
                            .clone()
                            .or_else(|| config.paths.taxonomy.clone())
                            .as_ref(),
                        args.aliases
                            .clone()
                            .or_else(|| config.paths.aliases.clone())
                            .as_ref(),
                        args.patches.as_ref(),
                        args.model.as_deref().unwrap_or(""),
                        format,
                    )
                }
                None => {
                    if args.inputs.is_empty() {
                        usage_error("report needs --input files or --predictions");
                    }
                    ops::merge_reports(&args.inputs, format)
                }
            }
        }
    }
}

fn validate_provider_mode(provider: &ops::ProviderSpec, pipeline: Pipeline, mode: Option<Mode>) {
    let effective = mode.unwrap_or(Mode::Monolithic);
    let per_step = pipeline.supports_mode() && effective == Mode::PerStep;
    if provider.name == "oracle" && !per_step {
        usage_error("the oracle provider answers binary step questions only; use --mode per_step with stepwise or graph_augmented");
    }
    if provider.oracle_file.is_some() && provider.name != "oracle" {
        usage_error("--oracle-file applies only to --provider oracle");
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(error) => {
            eprintln!("error: {error:#}");
            ExitCode::from(ops::EXIT_VIOLATIONS)
        }
    }
}
