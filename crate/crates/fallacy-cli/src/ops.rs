//! Verb implementations. Machine output goes to stdout, diagnostics to
//! stderr; exit statuses: 0 success, 1 validation violations, 2 run
//! failures over the threshold.

use anyhow::{anyhow, bail, Context, Result};
use fallacy_core::instructions::{
    lint_set, parse_catalog, parse_instruction_set, parse_test_cases, validate_gold_labels,
    AliasTable, CatalogEntry, InstructionSet, TestCase,
};
use fallacy_core::pipelines::{
    self, run_baseline, run_graph_augmented_monolithic, run_graph_augmented_per_step,
    run_hierarchical, run_stepwise_monolithic, run_stepwise_per_step, Label, LlmOptions, Mode,
    Pipeline, Prediction, RunManifest, StepwiseOptions,
};
use fallacy_core::providers::{
    parse_oracle_table, prompts, CachingClient, CompletionClient, HttpClient, LlmStepAnswerer,
    MissingKeyPolicy, ProviderKind, ReplayClient, RetryPolicy, ScriptedOracle, TranscriptStore,
};
use fallacy_core::relations::{
    parse_relation_facts, related, validate_graph, ClosurePolicy, RelationalGraph,
};
use fallacy_core::scoring::{
    emit_report, parse_patches, score_run, EvaluationReport, ReportFormat, ScoringContext,
};
use fallacy_core::taxonomy::{load_taxonomy, validate_leaves, TaxonomyNode};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

pub const EXIT_OK: u8 = 0;
pub const EXIT_VIOLATIONS: u8 = 1;
pub const EXIT_RUN_FAILURES: u8 = 2;

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).with_context(|| format!("reading {}", path.display()))
}

pub struct Inputs {
    pub instructions: Option<(InstructionSet, Vec<u8>)>,
    pub relations: Option<(RelationalGraph, Vec<u8>)>,
    pub taxonomy: Option<(TaxonomyNode, Vec<u8>)>,
    pub catalog: Option<(Vec<CatalogEntry>, Vec<u8>)>,
    pub alias_file: Option<(AliasTable, Vec<u8>)>,
}

impl Inputs {
    pub fn load(
        instructions: Option<&PathBuf>,
        relations: Option<&PathBuf>,
        taxonomy: Option<&PathBuf>,
        catalog: Option<&PathBuf>,
        aliases: Option<&PathBuf>,
    ) -> Result<Inputs> {
        let instructions = instructions
            .map(|p| -> Result<_> {
                let bytes = read(p)?;
                let set = parse_instruction_set(&bytes)
                    .with_context(|| format!("parsing {}", p.display()))?;
                Ok((set, bytes))
            })
            .transpose()?;
        let relations = relations
            .map(|p| -> Result<_> {
                let bytes = read(p)?;
                let text = String::from_utf8_lossy(&bytes);
                let (graph, warnings) = parse_relation_facts(&text)
                    .with_context(|| format!("parsing {}", p.display()))?;
                for warning in warnings {
                    eprintln!("warning: {}: {warning}", p.display());
                }
                Ok((graph, bytes))
            })
            .transpose()?;
        let taxonomy = taxonomy
            .map(|p| -> Result<_> {
                let bytes = read(p)?;
                let root =
                    load_taxonomy(&bytes).with_context(|| format!("parsing {}", p.display()))?;
                Ok((root, bytes))
            })
            .transpose()?;
        let catalog = catalog
            .map(|p| -> Result<_> {
                let bytes = read(p)?;
                let entries =
                    parse_catalog(&bytes).with_context(|| format!("parsing {}", p.display()))?;
                Ok((entries, bytes))
            })
            .transpose()?;
        let alias_file = aliases
            .map(|p| -> Result<_> {
                let bytes = read(p)?;
                let table = AliasTable::parse(&String::from_utf8_lossy(&bytes))
                    .with_context(|| format!("parsing {}", p.display()))?;
                Ok((table, bytes))
            })
            .transpose()?;
        Ok(Inputs {
            instructions,
            relations,
            taxonomy,
            catalog,
            alias_file,
        })
    }

    /// File aliases first, then the strip-"fallacy" table derived from
    /// whichever name list is available.
    pub fn aliases(&self) -> AliasTable {
        let mut table = self
            .alias_file
            .as_ref()
            .map(|(t, _)| t.clone())
            .unwrap_or_default();
        if let Some((set, _)) = &self.instructions {
            table.merge(&AliasTable::from_name_list(set.names()));
        } else if let Some((catalog, _)) = &self.catalog {
            table.merge(&AliasTable::from_name_list(
                catalog.iter().map(|e| e.name.as_str()),
            ));
        }
        table
    }

    fn hash_into(&self, hashes: &mut BTreeMap<String, String>) {
        let mut put = |key: &str, bytes: Option<&Vec<u8>>| {
            if let Some(bytes) = bytes {
                hashes.insert(key.to_string(), prompts::content_hash(bytes));
            }
        };
        put("instructions", self.instructions.as_ref().map(|(_, b)| b));
        put("relations", self.relations.as_ref().map(|(_, b)| b));
        put("taxonomy", self.taxonomy.as_ref().map(|(_, b)| b));
        put("catalog", self.catalog.as_ref().map(|(_, b)| b));
        put("aliases", self.alias_file.as_ref().map(|(_, b)| b));
    }
}

// ---------------------------------------------------------------------------
// validate

pub fn validate(inputs: &Inputs, corpus: Option<&PathBuf>) -> Result<u8> {
    let mut violations = 0usize;
    let mut warnings = 0usize;

    if let Some((set, _)) = &inputs.instructions {
        println!("instructions: {} records", set.len());
        for warning in lint_set(set) {
            println!("warning: lint: {warning}");
            warnings += 1;
        }
    }
    if let Some((graph, _)) = &inputs.relations {
        println!("relations: {} facts", graph.fact_count());
        if let Some((set, _)) = &inputs.instructions {
            for violation in validate_graph(graph, set) {
                println!("violation: relations: {violation}");
                violations += 1;
            }
        }
    }
    if let Some((root, _)) = &inputs.taxonomy {
        let leaves: usize = root
            .children
            .iter()
            .flat_map(|b| b.children.iter())
            .map(|s| s.children.len())
            .sum();
        println!("taxonomy: {leaves} leaves");
        if let Some((set, _)) = &inputs.instructions {
            if let Err(error) = validate_leaves(root, set) {
                println!("violation: taxonomy: {error}");
                violations += 1;
            }
        }
    }
    if let Some((catalog, _)) = &inputs.catalog {
        println!("catalog: {} entries", catalog.len());
        if let Some((set, _)) = &inputs.instructions {
            for record in set.records() {
                if !catalog.iter().any(|e| e.name == record.name) {
                    println!(
                        "violation: catalog: no description for instruction record {:?}",
                        record.name
                    );
                    violations += 1;
                }
            }
        }
    }
    if let Some(path) = corpus {
        let bytes = read(path)?;
        let cases =
            parse_test_cases(&bytes).with_context(|| format!("parsing {}", path.display()))?;
        println!("corpus: {} cases", cases.len());
        if let Some((set, _)) = &inputs.instructions {
            let aliases = inputs.aliases();
            if let Err(error) = validate_gold_labels(&cases, set, &aliases) {
                println!("violation: corpus: {error}");
                violations += 1;
            }
        }
    }

    eprintln!("{violations} violation(s), {warnings} warning(s)");
    Ok(if violations == 0 {
        EXIT_OK
    } else {
        EXIT_VIOLATIONS
    })
}

// ---------------------------------------------------------------------------
// provider wiring

pub struct ProviderSpec {
    pub name: String,
    pub model: String,
    pub temperature: f64,
    pub base_url: Option<String>,
    pub transcript: Option<PathBuf>,
    pub retry_attempts: u32,
    pub format_attempts: u32,
    pub max_output: u32,
    pub oracle_file: Option<PathBuf>,
}

pub enum Answerers {
    Client(Box<dyn CompletionClient>),
    Oracle(ScriptedOracle),
}

impl ProviderSpec {
    pub fn llm_options(&self) -> LlmOptions {
        LlmOptions {
            model: self.model.clone(),
            temperature: self.temperature,
            max_output: self.max_output,
            format_attempts: self.format_attempts,
        }
    }

    /// Build the answer source. The oracle provider needs the corpus (for
    /// the perfect table) unless an explicit table file is given.
    pub fn build(
        &self,
        instructions: Option<&InstructionSet>,
        cases: &[TestCase],
        aliases: &AliasTable,
    ) -> Result<Answerers> {
        match self.name.as_str() {
            "oracle" => {
                if let Some(path) = &self.oracle_file {
                    let oracle = parse_oracle_table(&read(path)?, MissingKeyPolicy::Error)
                        .with_context(|| format!("parsing {}", path.display()))?;
                    return Ok(Answerers::Oracle(oracle));
                }
                let set = instructions
                    .ok_or_else(|| anyhow!("the oracle provider requires --instructions"))?;
                let oracle = ScriptedOracle::perfect(set, cases, aliases)
                    .context("building the perfect oracle (gold labels must resolve; pass --oracle-file for ad-hoc statements)")?;
                Ok(Answerers::Oracle(oracle))
            }
            "replay" => {
                let path = self
                    .transcript
                    .as_ref()
                    .ok_or_else(|| anyhow!("the replay provider requires --transcript"))?;
                let store = Arc::new(TranscriptStore::open(path)?);
                let provider = store
                    .sole_provider()
                    .ok_or_else(|| anyhow!("transcript store is empty or multi-provider; cannot infer the recording provider"))?;
                Ok(Answerers::Client(Box::new(ReplayClient::new(provider, store))))
            }
            name => {
                let kind = ProviderKind::from_name(name)
                    .ok_or_else(|| anyhow!("unknown provider {name:?} (openai, anthropic, gemini, replay, oracle)"))?;
                let retry = RetryPolicy {
                    max_attempts: self.retry_attempts,
                    ..RetryPolicy::default()
                };
                let client = HttpClient::from_env(kind, self.base_url.clone(), retry)
                    .map_err(|e| anyhow!("{e}"))?;
                match &self.transcript {
                    Some(path) => {
                        let store = Arc::new(TranscriptStore::open(path)?);
                        Ok(Answerers::Client(Box::new(CachingClient::new(client, store))))
                    }
                    None => Ok(Answerers::Client(Box::new(client))),
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// classify / evaluate

pub struct RunSpec {
    pub pipeline: Pipeline,
    pub mode: Option<Mode>,
    pub policy: ClosurePolicy,
    pub parallelism: usize,
    pub stepwise: StepwiseOptions,
}

fn effective_mode(spec: &RunSpec) -> Mode {
    spec.mode.unwrap_or(Mode::Monolithic)
}

/// Run one case through the configured pipeline.
fn run_one(
    case: &TestCase,
    spec: &RunSpec,
    inputs: &Inputs,
    aliases: &AliasTable,
    answerers: &Answerers,
    llm: &LlmOptions,
) -> Result<Prediction> {
    let instructions = inputs.instructions.as_ref().map(|(s, _)| s);
    let prediction = match (spec.pipeline, effective_mode(spec)) {
        (Pipeline::Baseline, _) => {
            let (catalog, _) = inputs
                .catalog
                .as_ref()
                .ok_or_else(|| anyhow!("the baseline pipeline requires --catalog"))?;
            let client = expect_client(answerers)?;
            run_baseline(case, catalog, client, aliases, llm)
        }
        (Pipeline::Hierarchical, _) => {
            let (taxonomy, _) = inputs
                .taxonomy
                .as_ref()
                .ok_or_else(|| anyhow!("the hierarchical pipeline requires --taxonomy"))?;
            let client = expect_client(answerers)?;
            run_hierarchical(case, taxonomy, client, aliases, llm)
        }
        (Pipeline::Stepwise, Mode::Monolithic) => {
            let set = instructions
                .ok_or_else(|| anyhow!("the stepwise pipeline requires --instructions"))?;
            let client = expect_client(answerers)?;
            run_stepwise_monolithic(case, set, client, aliases, llm)
        }
        (Pipeline::Stepwise, Mode::PerStep) => {
            let set = instructions
                .ok_or_else(|| anyhow!("the stepwise pipeline requires --instructions"))?;
            match answerers {
                Answerers::Oracle(oracle) => {
                    run_stepwise_per_step(case, set, oracle, spec.stepwise)
                }
                Answerers::Client(client) => {
                    let answerer = LlmStepAnswerer {
                        client: client.as_ref(),
                        model: llm.model.clone(),
                        temperature: llm.temperature,
                        max_output: llm.max_output,
                        format_attempts: llm.format_attempts,
                    };
                    run_stepwise_per_step(case, set, &answerer, spec.stepwise)
                }
            }
        }
        (Pipeline::GraphAugmented, mode) => {
            let set = instructions
                .ok_or_else(|| anyhow!("the graph_augmented pipeline requires --instructions"))?;
            let (graph, _) = inputs
                .relations
                .as_ref()
                .ok_or_else(|| anyhow!("the graph_augmented pipeline requires --relations"))?;
            match mode {
                Mode::Monolithic => {
                    let client = expect_client(answerers)?;
                    run_graph_augmented_monolithic(case, set, graph, client, aliases, llm)
                }
                Mode::PerStep => match answerers {
                    Answerers::Oracle(oracle) => run_graph_augmented_per_step(
                        case,
                        set,
                        graph,
                        spec.policy,
                        oracle,
                        spec.stepwise,
                    ),
                    Answerers::Client(client) => {
                        let answerer = LlmStepAnswerer {
                            client: client.as_ref(),
                            model: llm.model.clone(),
                            temperature: llm.temperature,
                            max_output: llm.max_output,
                            format_attempts: llm.format_attempts,
                        };
                        run_graph_augmented_per_step(
                            case,
                            set,
                            graph,
                            spec.policy,
                            &answerer,
                            spec.stepwise,
                        )
                    }
                },
            }
        }
    };
    Ok(prediction)
}

fn expect_client(answerers: &Answerers) -> Result<&dyn CompletionClient> {
    match answerers {
        Answerers::Client(client) => Ok(client.as_ref()),
        Answerers::Oracle(_) => bail!(
            "this pipeline/mode needs a completion client; the oracle provider only answers per-step binary questions"
        ),
    }
}

pub fn classify(
    case: TestCase,
    spec: &RunSpec,
    inputs: &Inputs,
    provider: &ProviderSpec,
    json: bool,
) -> Result<u8> {
    let aliases = inputs.aliases();
    let answerers = provider.build(
        inputs.instructions.as_ref().map(|(s, _)| s),
        std::slice::from_ref(&case),
        &aliases,
    )?;
    let llm = provider.llm_options();
    let prediction = run_one(&case, spec, inputs, &aliases, &answerers, &llm)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&prediction)?);
    } else {
        print!("{}", render_trace(&prediction));
    }
    Ok(if prediction.is_failure() {
        EXIT_RUN_FAILURES
    } else {
        EXIT_OK
    })
}

/// Readable layout of one prediction's trace: the step-level evidence
/// behind the classification.
pub fn render_trace(prediction: &Prediction) -> String {
    use std::fmt::Write as _;
    let mut out = String::new();
    let _ = writeln!(out, "case: {}", prediction.case_id);
    let mode = prediction
        .mode
        .map(|m| format!(" ({})", m.name()))
        .unwrap_or_default();
    let _ = writeln!(out, "pipeline: {}{mode}", prediction.pipeline.name());
    match &prediction.outcome {
        pipelines::Outcome::Predicted(Label::Flat(name)) => {
            let _ = writeln!(out, "predicted: {name}");
        }
        pipelines::Outcome::Predicted(Label::Path(path)) => {
            let _ = writeln!(
                out,
                "predicted: {} -> {} -> {}",
                path.tier1, path.tier2, path.tier3
            );
        }
        pipelines::Outcome::Failed(failure) => {
            let _ = writeln!(
                out,
                "failed: [{:?}] stage {} after {} attempt(s): {}",
                failure.kind, failure.stage, failure.attempts, failure.message
            );
        }
    }
    let _ = writeln!(out, "selector: {:?}", prediction.trace.selector);
    if !prediction.trace.candidates.is_empty() {
        let _ = writeln!(out, "candidates (dataset order):");
        for candidate in &prediction.trace.candidates {
            let answers: String = candidate
                .result
                .answers
                .answers()
                .iter()
                .map(|a| if *a == fallacy_core::Answer::Yes { 'y' } else { 'n' })
                .collect();
            let matches: String = candidate
                .result
                .step_matches
                .iter()
                .map(|m| if *m { '=' } else { 'x' })
                .collect();
            let phase = match candidate.phase {
                pipelines::Phase::Initial => "initial",
                pipelines::Phase::Expanded => "expanded",
            };
            let shared = if candidate.shared { " shared" } else { "" };
            let _ = writeln!(
                out,
                "  {:<36} [{phase}{shared}] answers {answers} matches {matches} verdict {} strength {}",
                candidate.result.fallacy, candidate.result.verdict, candidate.result.strength
            );
        }
    }
    if let Some(ranking) = &prediction.ranking {
        let _ = writeln!(out, "ranking:");
        for (i, result) in ranking.results().iter().enumerate() {
            let _ = writeln!(
                out,
                "  {:>3}. {:<36} verdict {} strength {}",
                i + 1,
                result.fallacy,
                result.verdict,
                result.strength
            );
        }
    }
    if let Some(expansion) = &prediction.trace.expansion {
        let _ = writeln!(
            out,
            "phase summary: initial matches [{}]; expanded [{}]",
            expansion.initial_matches.join(", "),
            expansion.expanded.join(", ")
        );
    }
    for note in &prediction.trace.notes {
        let _ = writeln!(out, "note: {note}");
    }
    let _ = writeln!(
        out,
        "transcripts: {} entr{}",
        prediction.trace.transcripts.len(),
        if prediction.trace.transcripts.len() == 1 { "y" } else { "ies" }
    );
    out
}

pub struct EvaluateSpec {
    pub out_dir: Option<PathBuf>,
    pub format: ReportFormat,
    pub failure_threshold: u32,
    pub patches: Option<PathBuf>,
}

#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    corpus_path: &Path,
    spec: &RunSpec,
    inputs: &Inputs,
    provider: &ProviderSpec,
    eval: &EvaluateSpec,
) -> Result<u8> {
    let corpus_bytes = read(corpus_path)?;
    let cases = parse_test_cases(&corpus_bytes)
        .with_context(|| format!("parsing {}", corpus_path.display()))?;
    if cases.is_empty() {
        bail!("corpus {} contains no cases", corpus_path.display());
    }
    let aliases = inputs.aliases();
    if let Some((set, _)) = &inputs.instructions {
        validate_gold_labels(&cases, set, &aliases)?;
        if let Some((graph, _)) = &inputs.relations {
            let violations = validate_graph(graph, set);
            if !violations.is_empty() {
                for violation in &violations {
                    eprintln!("violation: relations: {violation}");
                }
                return Ok(EXIT_VIOLATIONS);
            }
        }
    }

    let answerers = provider.build(
        inputs.instructions.as_ref().map(|(s, _)| s),
        &cases,
        &aliases,
    )?;
    let llm = provider.llm_options();

    eprintln!(
        "running {} case(s): pipeline={} mode={} provider={} model={}",
        cases.len(),
        spec.pipeline.name(),
        spec.mode.map(Mode::name).unwrap_or("-"),
        provider.name,
        provider.model,
    );
    // Pipeline wiring errors (missing inputs, oracle/mode conflicts) are
    // usage errors; surface the first one instead of folding it into
    // per-case failure records.
    let probe = run_one(&cases[0], spec, inputs, &aliases, &answerers, &llm)?;
    let mut predictions = vec![probe];
    let rest = pipelines::run_cases(&cases[1..], spec.parallelism, |case| {
        run_one(case, spec, inputs, &aliases, &answerers, &llm)
            .expect("wiring validated by the probe case")
    });
    predictions.extend(rest);

    let patches = eval
        .patches
        .as_ref()
        .map(|p| -> Result<_> {
            parse_patches(&read(p)?).with_context(|| format!("parsing {}", p.display()))
        })
        .transpose()?;

    let mut ctx = ScoringContext::new(&aliases);
    ctx.taxonomy = inputs.taxonomy.as_ref().map(|(t, _)| t);
    ctx.patches = patches.as_ref();
    ctx.model = provider.model.clone();
    let mut score = score_run(&predictions, &cases, &ctx)?;
    if eval.out_dir.is_some() {
        score.manifest_ref = Some("manifest.json".to_string());
    }
    let failures = score.failures;
    let patched_cases = score.patched;
    let report = EvaluationReport::single(score);
    let report_bytes = emit_report(&report, eval.format);

    if let Some(dir) = &eval.out_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("predictions.jsonl"), pipelines::serialize_predictions(&predictions))?;
        let mut manifest = RunManifest::new(
            spec.pipeline,
            spec.mode,
            provider.name.clone(),
            provider.model.clone(),
        );
        manifest.temperature = provider.temperature;
        manifest.format_attempts = provider.format_attempts;
        manifest.parallelism = spec.parallelism;
        manifest.policy = matches!(spec.pipeline, Pipeline::GraphAugmented).then_some(spec.policy);
        manifest.corpus_hash = prompts::content_hash(&corpus_bytes);
        manifest.patched_cases = patched_cases;
        inputs.hash_into(&mut manifest.input_hashes);
        std::fs::write(dir.join("manifest.json"), manifest.to_json())?;
        std::fs::write(dir.join("report.json"), emit_report(&report, ReportFormat::Json))?;
        eprintln!("wrote predictions, manifest, and report to {}", dir.display());
    }

    std::io::stdout().write_all(&report_bytes)?;
    Ok(if failures > eval.failure_threshold {
        EXIT_RUN_FAILURES
    } else {
        EXIT_OK
    })
}

// ---------------------------------------------------------------------------
// graph / cache / report

pub fn graph_query(
    relations_path: &Path,
    inputs: &Inputs,
    name: &str,
    policy: ClosurePolicy,
) -> Result<u8> {
    let bytes = read(relations_path)?;
    let (graph, warnings) = parse_relation_facts(&String::from_utf8_lossy(&bytes))
        .with_context(|| format!("parsing {}", relations_path.display()))?;
    for warning in warnings {
        eprintln!("warning: {warning}");
    }
    if let Some((set, _)) = &inputs.instructions {
        let violations = validate_graph(&graph, set);
        if !violations.is_empty() {
            for violation in &violations {
                println!("violation: {violation}");
            }
            return Ok(EXIT_VIOLATIONS);
        }
    }
    let canonical = inputs.aliases().resolve(name)?;
    if !graph.contains_name(&canonical) {
        eprintln!("note: {canonical:?} does not appear in the graph");
    }
    for related_name in related(&graph, &canonical, policy) {
        println!("{related_name}");
    }
    Ok(EXIT_OK)
}

pub fn cache_stats(transcript: &Path) -> Result<u8> {
    let store = TranscriptStore::open(transcript)?;
    let (input_tokens, output_tokens) = store.token_totals();
    println!("path: {}", transcript.display());
    println!("entries: {}", store.len());
    println!(
        "provider: {}",
        store.sole_provider().unwrap_or_else(|| "mixed".to_string())
    );
    println!("input_tokens: {input_tokens}");
    println!("output_tokens: {output_tokens}");
    Ok(EXIT_OK)
}

pub fn cache_verify(transcript: &Path) -> Result<u8> {
    let store = TranscriptStore::open(transcript)?;
    let bad = store.verify();
    if bad.is_empty() {
        eprintln!("{} entr(ies) verified", store.len());
        Ok(EXIT_OK)
    } else {
        for key in &bad {
            println!("violation: key does not match its contents: {key}");
        }
        Ok(EXIT_VIOLATIONS)
    }
}

/// Score a saved predictions file against its corpus and emit the report.
pub fn score_predictions_file(
    predictions_path: &Path,
    corpus_path: &Path,
    taxonomy: Option<&PathBuf>,
    aliases: Option<&PathBuf>,
    patches: Option<&PathBuf>,
    model: &str,
    format: ReportFormat,
) -> Result<u8> {
    let predictions = pipelines::parse_predictions(&read(predictions_path)?)
        .with_context(|| format!("parsing {}", predictions_path.display()))?;
    let cases = parse_test_cases(&read(corpus_path)?)
        .with_context(|| format!("parsing {}", corpus_path.display()))?;
    let taxonomy = taxonomy
        .map(|p| -> Result<_> {
            load_taxonomy(&read(p)?).with_context(|| format!("parsing {}", p.display()))
        })
        .transpose()?;
    let alias_table = aliases
        .map(|p| -> Result<_> {
            AliasTable::parse(&String::from_utf8_lossy(&read(p)?))
                .with_context(|| format!("parsing {}", p.display()))
        })
        .transpose()?
        .unwrap_or_default();
    let patch_table = patches
        .map(|p| -> Result<_> {
            parse_patches(&read(p)?).with_context(|| format!("parsing {}", p.display()))
        })
        .transpose()?;

    let mut ctx = ScoringContext::new(&alias_table);
    ctx.taxonomy = taxonomy.as_ref();
    ctx.patches = patch_table.as_ref();
    ctx.model = model.to_string();
    let score = score_run(&predictions, &cases, &ctx)?;
    let report = EvaluationReport::single(score);
    std::io::stdout().write_all(&emit_report(&report, format))?;
    Ok(EXIT_OK)
}

pub fn merge_reports(paths: &[PathBuf], format: ReportFormat) -> Result<u8> {
    let mut reports = Vec::new();
    for path in paths {
        let bytes = read(path)?;
        let report: EvaluationReport = serde_json::from_slice(&bytes)
            .with_context(|| format!("parsing {}", path.display()))?;
        reports.push(report);
    }
    let merged = EvaluationReport::merged(reports);
    std::io::stdout().write_all(&emit_report(&merged, format))?;
    Ok(EXIT_OK)
}
