use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use metasynth::contamination::em_overlap;
use metasynth::gateway::{ChatProvider, ProviderConfig};
use metasynth::instruct::{aggregate_winrate, judge, judge_winrate_swapped, JudgeInputs, JudgeKind, JudgeVerdict, WinrateChoice};
use metasynth::metrics::{measure_corpus, MeasureInputs, MeasureOptions, ReferenceFrequencies, DEFAULT_LEVEL, DEFAULT_RESAMPLES};
use metasynth::pipeline::{load_config, load_embeddings, read_texts, resume, run, run_dir, PipelineError, RunManifest, RunOptions};
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(name = "metasynth", version, about = "Synthetic domain corpora from a meta-prompted team of expert agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate documents with the agent workflow or the template baseline.
    SynthDocs {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum)]
        baseline: Option<Baseline>,
    },
    /// Generate instructions for each document of `--documents`.
    SynthInstructions {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        documents: Option<PathBuf>,
    },
    /// Answer instructions with free-form, step-by-step and length-limited prompts.
    SynthResponses {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        documents: Option<PathBuf>,
        #[arg(long)]
        instructions: Option<PathBuf>,
    },
    /// Score items with an LLM judge.
    Judge(JudgeArgs),
    /// Diversity metrics with bootstrap confidence intervals.
    Measure(MeasureArgs),
    /// Exact n-gram overlap between reference examples and a corpus.
    Contaminate(ContaminateArgs),
    /// Restart the unfinished workers of a run.
    Resume {
        run_dir: PathBuf,
        #[arg(long)]
        worker_limit: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Baseline {
    Template,
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    docs_per_seed_set: Option<usize>,
    #[arg(long)]
    rng_seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    run_id: Option<String>,
    /// Override any config key, e.g. `--set engine.round_limit=64`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Run at most this many workers now; finish the rest with `resume`.
    #[arg(long)]
    worker_limit: Option<usize>,
}

fn toml_string(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

fn path_value(p: &Path) -> Result<String> {
    let abs = std::path::absolute(p).with_context(|| format!("resolving {}", p.display()))?;
    Ok(toml_string(&abs.to_string_lossy()))
}

impl RunArgs {
    fn overrides(&self, mode: &str) -> Result<Vec<String>> {
        let mut out = vec![format!("mode={}", toml_string(mode))];
        if let Some(w) = self.workers {
            out.push(format!("workers={w}"));
        }
        if let Some(d) = self.docs_per_seed_set {
            out.push(format!("docs_per_seed_set={d}"));
        }
        if let Some(s) = self.rng_seed {
            out.push(format!("rng_seed={s}"));
        }
        if let Some(o) = &self.output_dir {
            out.push(format!("output_dir={}", path_value(o)?));
        }
        if let Some(r) = &self.run_id {
            out.push(format!("run_id={}", toml_string(r)));
        }
        out.extend(self.set.iter().cloned());
        Ok(out)
    }
}

fn report_manifest(dir: &Path, m: &RunManifest) -> ExitCode {
    let summary = serde_json::json!({
        "run_dir": dir,
        "run_id": m.run_id,
        "finished": m.finished,
        "accepted": m.accepted,
        "rejected": m.rejected,
        "input_tokens": m.input_tokens,
        "output_tokens": m.output_tokens,
        "workers": m.workers.iter().map(|w| serde_json::json!({"index": w.index, "status": w.status, "error": w.error})).collect::<Vec<_>>(),
    });
    println!("{summary}");
    ExitCode::from(m.exit_code() as u8)
}

fn pipeline_failure(e: PipelineError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn start_run(args: &RunArgs, mode: &str, extra: Vec<String>) -> ExitCode {
    let overrides = match args.overrides(mode) {
        Ok(mut o) => {
            o.extend(extra);
            o
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let loaded = match load_config(&args.config, &overrides) {
        Ok(l) => l,
        Err(e) => return pipeline_failure(e),
    };
    let dir = run_dir(&loaded);
    match run(&loaded, RunOptions { worker_limit: args.worker_limit }) {
        Ok(m) => report_manifest(&dir, &m),
        Err(e) => pipeline_failure(e),
    }
}

fn input_override(key: &str, path: &Option<PathBuf>) -> Result<Vec<String>> {
    match path {
        Some(p) => Ok(vec![format!("inputs.{key}={}", path_value(p)?)]),
        None => Ok(Vec::new()),
    }
}

#[derive(Args)]
struct JudgeArgs {
    /// TOML with a `[provider]` table, or a bare provider table.
    #[arg(long)]
    provider: PathBuf,
    #[arg(long, value_enum)]
    kind: KindArg,
    /// JSONL of items to judge.
    #[arg(long)]
    items: PathBuf,
    /// Where to write one verdict per item; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Accuracy,
    Relevance,
    Category,
    Winrate,
}

impl From<KindArg> for JudgeKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Accuracy => JudgeKind::Accuracy,
            KindArg::Relevance => JudgeKind::Relevance,
            KindArg::Category => JudgeKind::Category,
            KindArg::Winrate => JudgeKind::Winrate,
        }
    }
}

#[derive(Deserialize)]
struct JudgeItem {
    #[serde(default)]
    id: Option<String>,
    #[serde(default)]
    context: String,
    #[serde(default)]
    instruction: String,
    #[serde(default)]
    response: String,
    #[serde(default)]
    question: String,
    #[serde(default)]
    response_a: String,
    #[serde(default)]
    response_b: String,
    #[serde(default)]
    categories: Vec<String>,
}

#[derive(Serialize)]
struct JudgedItem {
    id: Option<String>,
    #[serde(flatten)]
    verdict: JudgeVerdict,
}

fn load_provider(path: &Path) -> Result<ProviderConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut table: toml::Table = text.parse().with_context(|| format!("parsing {}", path.display()))?;
    let value = table.remove("provider").unwrap_or(toml::Value::Table(table));
    value.try_into().with_context(|| format!("{}: invalid provider", path.display()))
}

fn run_judge(args: &JudgeArgs) -> Result<()> {
    let cfg = load_provider(&args.provider)?;
    let provider = cfg.build_chat(0)?;
    let kind = JudgeKind::from(args.kind);
    let text = std::fs::read_to_string(&args.items).with_context(|| format!("reading {}", args.items.display()))?;
    let mut lines = Vec::new();
    let mut choices = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let item: JudgeItem = serde_json::from_str(line).with_context(|| format!("{} line {}", args.items.display(), i + 1))?;
        let verdict = judge_item(kind, &item, provider.as_ref()).with_context(|| format!("item on line {}", i + 1))?;
        if let JudgeVerdict::Winrate(c) = verdict {
            choices.push(c);
        }
        lines.push(serde_json::to_string(&JudgedItem { id: item.id, verdict })?);
    }
    let body: String = lines.iter().map(|l| format!("{l}\n")).collect();
    match &args.out {
        Some(p) => std::fs::write(p, body).with_context(|| format!("writing {}", p.display()))?,
        None => std::io::stdout().write_all(body.as_bytes())?,
    }
    if kind == JudgeKind::Winrate {
        eprintln!("{}", serde_json::to_string(&aggregate_winrate(&choices))?);
    }
    Ok(())
}

fn judge_item(kind: JudgeKind, item: &JudgeItem, provider: &dyn ChatProvider) -> Result<JudgeVerdict> {
    Ok(match kind {
        JudgeKind::Winrate => {
            let c: WinrateChoice = judge_winrate_swapped(&item.question, &item.response_a, &item.response_b, provider)?;
            JudgeVerdict::Winrate(c)
        }
        JudgeKind::Category => judge(
            kind,
            JudgeInputs::Category { instruction: &item.instruction, response: &item.response, categories: &item.categories },
            provider,
        )?,
        _ => judge(
            kind,
            JudgeInputs::Graded { context: &item.context, instruction: &item.instruction, response: &item.response },
            provider,
        )?,
    })
}

#[derive(Args)]
struct MeasureArgs {
    /// JSONL corpus; every line needs a `text` field.
    #[arg(long)]
    corpus: PathBuf,
    /// One `{"embedding": [...]}` line per document, for remote-clique and Chamfer.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// One embedding per batch, for the Task2Vec coefficient.
    #[arg(long)]
    batch_embeddings: Option<PathBuf>,
    /// Token frequency TSV of a reference corpus, for MIF.
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_RESAMPLES)]
    resamples: usize,
    #[arg(long, default_value_t = DEFAULT_LEVEL)]
    level: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    corpus_id: Option<String>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Append a CSV row, writing the header if the file is new.
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn run_measure(args: &MeasureArgs) -> Result<()> {
    let texts = read_texts(&args.corpus)?;
    let embeddings = args.embeddings.as_deref().map(load_embeddings).transpose()?;
    let batches = args.batch_embeddings.as_deref().map(load_embeddings).transpose()?;
    let reference = args.reference.as_deref().map(ReferenceFrequencies::load_tsv).transpose()?;
    let corpus_id = args.corpus_id.clone().unwrap_or_else(|| args.corpus.file_stem().map_or("corpus".into(), |s| s.to_string_lossy().into()));
    let report = measure_corpus(
        MeasureInputs {
            corpus_id: &corpus_id,
            texts: &texts,
            embeddings: embeddings.as_deref(),
            batch_embeddings: batches.as_deref(),
            reference: reference.as_ref(),
        },
        MeasureOptions { n_resamples: args.resamples, level: args.level, rng_seed: args.seed },
    )?;
    let json = serde_json::to_string_pretty(&report)? + "\n";
    match &args.out {
        Some(p) => std::fs::write(p, json).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{json}"),
    }
    if let Some(p) = &args.csv {
        let mut f = std::fs::OpenOptions::new().create(true).append(true).open(p).with_context(|| format!("opening {}", p.display()))?;
        if f.metadata()?.len() == 0 {
            writeln!(f, "{}", report.csv_header())?;
        }
        writeln!(f, "{}", report.csv_row())?;
    }
    Ok(())
}

#[derive(Args)]
struct ContaminateArgs {
    #[arg(long)]
    refs: PathBuf,
    #[arg(long)]
    targets: PathBuf,
    /// Comma-separated n values.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,5,10")]
    n: Vec<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run_contaminate(args: &ContaminateArgs) -> Result<()> {
    let refs = read_texts(&args.refs)?;
    let targets = read_texts(&args.targets)?;
    let report = em_overlap(&refs, &targets, &args.n)?;
    let json = serde_json::to_string_pretty(&report)? + "\n";
    match &args.out {
        Some(p) => std::fs::write(p, json).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{json}"),
    }
    Ok(())
}

fn plain(result: Result<()>) -> ExitCode {
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let provider = e.chain().any(|c| c.downcast_ref::<metasynth::gateway::GatewayError>().is_some());
            ExitCode::from(if provider { 3 } else { 1 })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::SynthDocs { run, baseline } => {
            let mode = match baseline {
                Some(Baseline::Template) => "template_docs",
                None => "metasynth_docs",
            };
            start_run(&run, mode, Vec::new())
        }
        Command::SynthInstructions { run, documents } => match input_override("documents", &documents) {
            Ok(extra) => start_run(&run, "instructions", extra),
            Err(e) => plain(Err(e)),
        },
        Command::SynthResponses { run, documents, instructions } => {
            let extra = input_override("documents", &documents).and_then(|mut a| {
                a.extend(input_override("instructions", &instructions)?);
                Ok(a)
            });
            match extra {
                Ok(extra) => start_run(&run, "responses", extra),
                Err(e) => plain(Err(e)),
            }
        }
        Command::Judge(args) => plain(run_judge(&args)),
        Command::Measure(args) => plain(run_measure(&args)),
        Command::Contaminate(args) => plain(run_contaminate(&args)),
        Command::Resume { run_dir, worker_limit } => match resume(&run_dir, RunOptions { worker_limit }) {
            Ok(m) => report_manifest(&run_dir, &m),
            Err(e) => pipeline_failure(e),
        },
    }
}

