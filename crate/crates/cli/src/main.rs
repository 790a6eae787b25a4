mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use graphplan::harness::{
    ablation_matrix, format_summary, load_dataset, run_eval, EvalOptions, Flavor, Variant,
};
use graphplan::trace::RunTrace;
use graphplan::{EntityId, Planner, Question, TopicEntity};
use serde_json::json;

use config::{read_settings, AppConfig, Settings, UsageError};

#[derive(Parser)]
#[command(
    name = "graphplan",
    version,
    about = "Knowledge-graph question answering with a self-correcting LLM planner"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Answer one question and write its trace.
    Run(RunArgs),
    /// Score a dataset, optionally against ablated variants.
    Eval(EvalArgs),
    /// Pretty-print a JSON-lines trace.
    InspectTrace(InspectArgs),
}

/// Flags shared by `run` and `eval`; each mirrors a config-file key.
#[derive(Args)]
struct Common {
    /// Config file of `key = value` lines.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Triple file for the in-memory graph (kg.path).
    #[arg(long, value_name = "PATH")]
    kg: Option<PathBuf>,
    /// Triple file format: tsv or nt (kg.format).
    #[arg(long, value_name = "FORMAT")]
    kg_format: Option<String>,
    /// SPARQL endpoint URL (kg.endpoint).
    #[arg(long, value_name = "URL")]
    endpoint: Option<String>,
    /// Model backend: http or scripted (llm.mode).
    #[arg(long, value_name = "MODE")]
    llm: Option<String>,
    /// Chat-completions base URL (llm.base_url).
    #[arg(long, value_name = "URL")]
    base_url: Option<String>,
    /// Scripted responder fixture (llm.script).
    #[arg(long, value_name = "PATH")]
    script: Option<PathBuf>,
    /// Model name sent to the endpoint (llm.model).
    #[arg(long)]
    model: Option<String>,
    /// Maximum exploration depth (planner.max_depth).
    #[arg(long, value_name = "N")]
    depth: Option<u32>,
    /// Ablation: no_guidance, no_memory, no_reflection, fixed_breadth[=N],
    /// depth=N; repeatable (planner.ablate).
    #[arg(long, value_name = "VARIANT")]
    ablate: Vec<String>,
    /// Questions evaluated concurrently (eval.parallel).
    #[arg(long, value_name = "N")]
    parallel: Option<usize>,
    /// Directory for run artifacts (output.dir).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

impl Common {
    fn resolve(&self) -> Result<AppConfig> {
        let file = match &self.config {
            Some(p) => read_settings(p)?,
            None => Settings::new(),
        };
        let mut flags = Settings::new();
        let mut set = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                flags.insert(k.to_string(), v);
            }
        };
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        set("kg.path", path(&self.kg));
        set("kg.format", self.kg_format.clone());
        set("kg.endpoint", self.endpoint.clone());
        set("llm.mode", self.llm.clone());
        set("llm.base_url", self.base_url.clone());
        set("llm.script", path(&self.script));
        set("llm.model", self.model.clone());
        set("planner.max_depth", self.depth.map(|d| d.to_string()));
        set("eval.parallel", self.parallel.map(|d| d.to_string()));
        set("output.dir", path(&self.out));
        if !self.ablate.is_empty() {
            set("planner.ablate", Some(self.ablate.join(",")));
        }
        // A flag-selected source wins over the other source's file setting.
        if self.kg.is_some() {
            flags.insert("kg.mode".into(), "memory".into());
        } else if self.endpoint.is_some() {
            flags.insert("kg.mode".into(), "sparql".into());
        }
        if self.script.is_some() && self.llm.is_none() {
            flags.insert("llm.mode".into(), "scripted".into());
        }
        AppConfig::resolve(&file, &flags)
    }
}

#[derive(Args)]
struct RunArgs {
    /// The natural-language question.
    question: String,
    /// Topic entity as MID or MID=Label; repeatable. Missing labels are
    /// looked up in the graph.
    #[arg(long = "topic", value_name = "MID[=LABEL]", required = true)]
    topics: Vec<String>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct EvalArgs {
    /// Dataset file.
    dataset: PathBuf,
    /// Dataset layout.
    #[arg(long, default_value = "normalized", value_parser = parse_flavor)]
    flavor: Flavor,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct InspectArgs {
    /// Trace file (`.jsonl`).
    trace: PathBuf,
    /// Only events of this kind (llm_call, kg_query, selection, ...).
    #[arg(long)]
    kind: Option<String>,
    /// One line per event instead of full payloads.
    #[arg(long)]
    brief: bool,
}

fn parse_flavor(s: &str) -> Result<Flavor, String> {
    s.parse::<Flavor>()
        .map_err(|_| format!("valid flavors: {}", Flavor::NAMES.join(", ")))
}

/// A fresh timestamped directory under `root`, with `root/latest` pointed
/// at it.
fn run_dir(root: &Path) -> Result<PathBuf> {
    let stamp = chrono::Local::now().format("%Y%m%d-%H%M%S%.3f").to_string();
    let mut dir = root.join(&stamp);
    let mut n = 1;
    while dir.exists() {
        dir = root.join(format!("{stamp}-{n}"));
        n += 1;
    }
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let latest = root.join("latest");
    let _ = fs::remove_file(&latest);
    let name = dir.file_name().expect("timestamp name");
    #[cfg(unix)]
    let linked = std::os::unix::fs::symlink(name, &latest);
    #[cfg(not(unix))]
    let linked = fs::write(&latest, name.to_string_lossy().as_bytes());
    if let Err(e) = linked {
        log::warn!("could not refresh {}: {e}", latest.display());
    }
    Ok(dir)
}

fn parse_topic(spec: &str, kg: &dyn graphplan::KnowledgeGraph) -> Result<TopicEntity> {
    let (mid, label) = match spec.split_once('=') {
        Some((m, l)) => (m.trim(), Some(l.trim().to_string())),
        None => (spec.trim(), None),
    };
    let id = EntityId::new(mid).map_err(|e| UsageError(format!("--topic {spec}: {e}")))?;
    let label = match label {
        Some(l) => l,
        None => kg.resolve_label(&id)?.label,
    };
    Ok(TopicEntity::new(id, label))
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let cfg = args.common.resolve()?;
    let planner_cfg = cfg.combined_planner()?;
    let backends = cfg.build_backends()?;
    let topics = args
        .topics
        .iter()
        .map(|t| parse_topic(t, backends.kg.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    let question = Question::new(args.question, topics);
    let planner = Planner::new(backends, planner_cfg).map_err(|e| UsageError(e.to_string()))?;
    let dir = run_dir(&cfg.output_dir)?;
    let trace_path = dir.join("trace.jsonl");

    let outcome = match planner.run_question(&question) {
        Ok(o) => o,
        Err(failure) => {
            failure
                .trace
                .write_jsonl(&trace_path)
                .with_context(|| format!("writing {}", trace_path.display()))?;
            eprintln!("partial trace: {}", trace_path.display());
            return Err(failure.into());
        }
    };
    outcome
        .trace
        .write_jsonl(&trace_path)
        .with_context(|| format!("writing {}", trace_path.display()))?;
    let result = json!({
        "question": question.text,
        "answer": outcome.answer,
        "reason": outcome.verdict.reason,
        "sufficient": outcome.verdict.sufficient,
        "exhausted": outcome.exhausted,
        "iterations": outcome.iterations,
        "calls": outcome.usage.calls,
        "input_tokens": outcome.usage.usage.input_tokens,
        "output_tokens": outcome.usage.usage.output_tokens,
        "seconds": outcome.elapsed.as_secs_f64(),
    });
    let result_path = dir.join("result.json");
    fs::write(&result_path, serde_json::to_string_pretty(&result)?)
        .with_context(|| format!("writing {}", result_path.display()))?;

    println!("answer: {}", outcome.answer.as_deref().unwrap_or("(none)"));
    println!("reason: {}", outcome.verdict.reason);
    if outcome.exhausted {
        println!(
            "note: exploration limit reached after {} iterations; the answer was forced",
            outcome.iterations
        );
    }
    let u = outcome.usage.usage;
    println!(
        "calls: {}  tokens: {} in / {} out / {} total  seconds: {:.2}",
        outcome.usage.calls,
        u.input_tokens,
        u.output_tokens,
        u.total(),
        outcome.elapsed.as_secs_f64()
    );
    println!("trace: {}", trace_path.display());
    Ok(())
}

/// Exit code for a cancelled evaluation whose partial results were saved.
struct Cancelled;

fn cmd_eval(args: EvalArgs) -> Result<Option<Cancelled>> {
    let cfg = args.common.resolve()?;
    let loaded = load_dataset(&args.dataset, args.flavor)?;
    if loaded.skipped > 0 {
        eprintln!(
            "skipped {} records without topic entities or answers",
            loaded.skipped
        );
    }
    if loaded.records.is_empty() {
        bail!(UsageError(format!(
            "{}: no usable records",
            args.dataset.display()
        )));
    }
    let backends = cfg.build_backends()?;
    let dir = run_dir(&cfg.output_dir)?;

    let cancel = Arc::new(AtomicBool::new(false));
    {
        let cancel = cancel.clone();
        if let Err(e) = ctrlc::set_handler(move || {
            eprintln!("interrupt: finishing in-flight questions");
            cancel.store(true, Ordering::SeqCst);
        }) {
            log::warn!("no interrupt handler: {e}");
        }
    }
    let options = EvalOptions {
        parallelism: cfg.parallel,
        out_dir: Some(dir.clone()),
        cancel: Some(cancel),
    };

    let reports = if cfg.ablate.is_empty() {
        let report = run_eval(&loaded.records, &cfg.planner, &backends, &options)?;
        vec![(Variant::full().name, report)]
    } else {
        let mut variants = vec![Variant::full()];
        for a in &cfg.ablate {
            variants.push(
                a.parse()
                    .map_err(|e: graphplan::harness::HarnessError| UsageError(e.to_string()))?,
            );
        }
        ablation_matrix(
            &loaded.records,
            &cfg.planner,
            &variants,
            &backends,
            &options,
        )?
    };
    print!("{}", format_summary(&reports));
    println!("report: {}", dir.display());
    Ok(reports
        .iter()
        .any(|(_, r)| r.cancelled)
        .then_some(Cancelled))
}

fn cmd_inspect(args: InspectArgs) -> Result<()> {
    let trace = RunTrace::read_jsonl(&args.trace)
        .with_context(|| format!("reading {}", args.trace.display()))?;
    let (mut calls, mut input, mut output) = (0u64, 0u64, 0u64);
    for ev in &trace.events {
        let kind = serde_json::to_value(ev.kind)?;
        let kind = kind.as_str().unwrap_or_default();
        if let Some(u) = ev.usage {
            input += u.input_tokens;
            output += u.output_tokens;
        }
        if kind == "llm_call" {
            calls += 1;
        }
        if args.kind.as_deref().is_some_and(|k| k != kind) {
            continue;
        }
        let stage = ev
            .payload
            .get("stage")
            .and_then(|s| s.as_str())
            .unwrap_or("");
        let usage = ev
            .usage
            .map(|u| format!(" ({} in / {} out)", u.input_tokens, u.output_tokens))
            .unwrap_or_default();
        println!("#{:<4} iter {} {kind} {stage}{usage}", ev.seq, ev.iteration);
        if !args.brief {
            let body = serde_json::to_string_pretty(&ev.payload)?;
            for line in body.lines() {
                println!("      {line}");
            }
        }
    }
    println!(
        "{} events, {calls} model calls, {input} input + {output} output = {} tokens",
        trace.len(),
        input + output
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a).map(|()| None),
        Command::Eval(a) => cmd_eval(a),
        Command::InspectTrace(a) => cmd_inspect(a).map(|()| None),
    };
    match result {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(Cancelled)) => {
            eprintln!("cancelled; completed results were saved");
            ExitCode::from(130)
        }
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
