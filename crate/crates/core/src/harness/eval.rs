use std::collections::HashSet;
use std::fmt::{self, Write as _};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{hits_at_1, DatasetRecord, HarnessError};
use crate::llm::{usage_total, Usage};
use crate::planner::{Ablations, Backends, Planner, PlannerConfig};
use crate::trace::RunTrace;

/// Breadth used by a bare `fixed_breadth` variant.
pub const DEFAULT_FIXED_BREADTH: usize = 3;

#[derive(Debug, Clone, Default)]
pub struct EvalOptions {
    /// Questions run concurrently; 0 is treated as 1.
    pub parallelism: usize,
    /// Where traces, `report.json` and `summary.tsv` go. Nothing is written
    /// when unset.
    pub out_dir: Option<PathBuf>,
    /// Once set, no further questions are started.
    pub cancel: Option<Arc<AtomicBool>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionResult {
    pub id: String,
    pub question: String,
    pub gold: Vec<String>,
    pub predicted: Option<String>,
    pub correct: bool,
    pub exhausted: bool,
    pub iterations: u32,
    pub usage: Usage,
    pub calls: u64,
    pub seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Trace file, relative to the report directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub questions: usize,
    pub correct: usize,
    pub failed: usize,
    pub mean_calls: f64,
    pub mean_input_tokens: f64,
    pub mean_output_tokens: f64,
    pub mean_total_tokens: f64,
    pub mean_seconds: f64,
}

impl Aggregates {
    pub fn from_rows(rows: &[QuestionResult]) -> Self {
        let n = rows.len();
        if n == 0 {
            return Self::default();
        }
        let mean = |sum: u64| sum as f64 / n as f64;
        Self {
            questions: n,
            correct: rows.iter().filter(|r| r.correct).count(),
            failed: rows.iter().filter(|r| r.error.is_some()).count(),
            mean_calls: mean(rows.iter().map(|r| r.calls).sum()),
            mean_input_tokens: mean(rows.iter().map(|r| r.usage.input_tokens).sum()),
            mean_output_tokens: mean(rows.iter().map(|r| r.usage.output_tokens).sum()),
            mean_total_tokens: mean(rows.iter().map(|r| r.usage.total()).sum()),
            mean_seconds: rows.iter().map(|r| r.seconds).sum::<f64>() / n as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub variant: String,
    pub hits_at_1: f64,
    pub per_question: Vec<QuestionResult>,
    pub aggregates: Aggregates,
    pub config: PlannerConfig,
    #[serde(default)]
    pub cancelled: bool,
}

impl EvalReport {
    pub fn new(
        variant: impl Into<String>,
        config: PlannerConfig,
        per_question: Vec<QuestionResult>,
        cancelled: bool,
    ) -> Self {
        let aggregates = Aggregates::from_rows(&per_question);
        let hits_at_1 = if per_question.is_empty() {
            0.0
        } else {
            aggregates.correct as f64 / per_question.len() as f64
        };
        Self {
            variant: variant.into(),
            hits_at_1,
            per_question,
            aggregates,
            config,
            cancelled,
        }
    }

    pub fn read(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Json(e.to_string()))
    }
}

/// A named change to the base configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Variant {
    pub name: String,
    pub reset: bool,
    pub no_guidance: bool,
    pub no_memory: bool,
    pub no_reflection: bool,
    pub fixed_breadth: Option<usize>,
    pub max_depth: Option<u32>,
}

impl Variant {
    pub fn full() -> Self {
        Self {
            name: "full".into(),
            reset: true,
            no_guidance: false,
            no_memory: false,
            no_reflection: false,
            fixed_breadth: None,
            max_depth: None,
        }
    }

    pub fn depth(d: u32) -> Self {
        Self {
            name: format!("depth={d}"),
            reset: false,
            max_depth: Some(d),
            ..Self::full()
        }
    }

    pub fn apply(&self, base: &PlannerConfig) -> PlannerConfig {
        let mut config = base.clone();
        if self.reset {
            config.ablations = Ablations::default();
        }
        let a = &mut config.ablations;
        a.no_guidance |= self.no_guidance;
        a.no_memory |= self.no_memory;
        a.no_reflection |= self.no_reflection;
        if self.fixed_breadth.is_some() {
            a.fixed_breadth = self.fixed_breadth;
        }
        if let Some(d) = self.max_depth {
            config.max_depth = d;
        }
        config
    }
}

impl FromStr for Variant {
    type Err = HarnessError;

    /// `full`, `no_guidance`, `no_memory`, `no_reflection`,
    /// `fixed_breadth[=N]`, `depth=N`, or several joined with `+`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || HarnessError::UnknownVariant(s.to_string());
        let mut v = Self {
            name: s.trim().to_string(),
            reset: false,
            ..Self::full()
        };
        for part in s.split('+').map(str::trim) {
            let (key, value) = match part.split_once('=') {
                Some((k, v)) => (k.trim(), Some(v.trim())),
                None => (part, None),
            };
            match (key, value) {
                ("full", None) => v.reset = true,
                ("no_guidance", None) => v.no_guidance = true,
                ("no_memory", None) => v.no_memory = true,
                ("no_reflection", None) => v.no_reflection = true,
                ("fixed_breadth", None) => v.fixed_breadth = Some(DEFAULT_FIXED_BREADTH),
                ("fixed_breadth", Some(n)) => {
                    let n: usize = n.parse().map_err(|_| bad())?;
                    if n == 0 {
                        return Err(bad());
                    }
                    v.fixed_breadth = Some(n);
                }
                ("depth", Some(n)) => {
                    let n: u32 = n.parse().map_err(|_| bad())?;
                    if n == 0 {
                        return Err(bad());
                    }
                    v.max_depth = Some(n);
                }
                _ => return Err(bad()),
            }
        }
        Ok(v)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// Run every record, scoring each with Hits@1. Per-question failures become
/// incorrect rows; only configuration and output errors abort.
pub fn run_eval(
    records: &[DatasetRecord],
    config: &PlannerConfig,
    backends: &Backends,
    options: &EvalOptions,
) -> Result<EvalReport, HarnessError> {
    run_named("full", records, config, backends, options)
}

fn run_named(
    variant: &str,
    records: &[DatasetRecord],
    config: &PlannerConfig,
    backends: &Backends,
    options: &EvalOptions,
) -> Result<EvalReport, HarnessError> {
    let planner = Planner::new(backends.clone(), config.clone())?;
    let trace_names = trace_names(records);
    if let Some(dir) = &options.out_dir {
        create_dir(&dir.join("traces"))?;
    }

    let slots: Mutex<Vec<Option<QuestionResult>>> = Mutex::new(vec![None; records.len()]);
    let next = AtomicUsize::new(0);
    let cancelled = || {
        options
            .cancel
            .as_ref()
            .is_some_and(|c| c.load(Ordering::SeqCst))
    };
    let workers = options.parallelism.max(1).min(records.len().max(1));
    thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if cancelled() {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(record) = records.get(i) else { break };
                let row = run_one(
                    &planner,
                    record,
                    &trace_names[i],
                    options.out_dir.as_deref(),
                );
                slots.lock().expect("result lock")[i] = Some(row);
            });
        }
    });

    let was_cancelled = cancelled();
    let rows: Vec<QuestionResult> = slots
        .into_inner()
        .expect("result lock")
        .into_iter()
        .zip(records)
        .map(|(row, record)| row.unwrap_or_else(|| not_run(record)))
        .collect();
    let report = EvalReport::new(variant, config.clone(), rows, was_cancelled);
    if let Some(dir) = &options.out_dir {
        write_json(&dir.join("report.json"), &report)?;
        write_text(
            &dir.join("summary.tsv"),
            &summary_tsv(&[(variant.to_string(), report.clone())]),
        )?;
    }
    Ok(report)
}

fn run_one(
    planner: &Planner,
    record: &DatasetRecord,
    trace_name: &str,
    out_dir: Option<&Path>,
) -> QuestionResult {
    let question = record.to_question();
    let start = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(|| planner.run_question(&question)));
    let seconds = start.elapsed().as_secs_f64();
    let mut row = QuestionResult {
        id: record.id.clone(),
        question: record.question.clone(),
        gold: record.gold_answers.clone(),
        predicted: None,
        correct: false,
        exhausted: false,
        iterations: 0,
        usage: Usage::default(),
        calls: 0,
        seconds,
        error: None,
        trace: None,
    };
    let trace: Option<RunTrace> = match result {
        Ok(Ok(outcome)) => {
            row.correct = outcome
                .answer
                .as_deref()
                .is_some_and(|a| hits_at_1(a, &record.gold_answers));
            row.predicted = outcome.answer;
            row.exhausted = outcome.exhausted;
            row.iterations = outcome.iterations;
            Some(outcome.trace)
        }
        Ok(Err(failure)) => {
            row.error = Some(failure.error.to_string());
            Some(failure.trace)
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            row.error = Some(format!("panicked: {msg}"));
            None
        }
    };
    if let Some(trace) = trace {
        let summary = usage_total(&trace);
        row.usage = summary.usage;
        row.calls = summary.calls;
        if let Some(dir) = out_dir {
            let rel = format!("traces/{trace_name}.jsonl");
            match trace.write_jsonl(&dir.join(&rel)) {
                Ok(()) => row.trace = Some(rel),
                Err(e) => {
                    let note = format!("trace not written: {e}");
                    row.error = Some(match row.error.take() {
                        Some(prev) => format!("{prev}; {note}"),
                        None => note,
                    });
                }
            }
        }
    }
    row
}

fn not_run(record: &DatasetRecord) -> QuestionResult {
    QuestionResult {
        id: record.id.clone(),
        question: record.question.clone(),
        gold: record.gold_answers.clone(),
        predicted: None,
        correct: false,
        exhausted: false,
        iterations: 0,
        usage: Usage::default(),
        calls: 0,
        seconds: 0.0,
        error: Some("not run: cancelled".into()),
        trace: None,
    }
}

/// File-system-safe, unique trace names derived from record ids.
fn trace_names(records: &[DatasetRecord]) -> Vec<String> {
    let mut seen = HashSet::new();
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut name: String =
                r.id.chars()
                    .map(|c| {
                        if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' {
                            c
                        } else {
                            '_'
                        }
                    })
                    .collect();
            if name.is_empty() || name.starts_with('.') {
                name = format!("q{i}{name}");
            }
            if !seen.insert(name.clone()) {
                name = format!("{name}-{i}");
                seen.insert(name.clone());
            }
            name
        })
        .collect()
}

/// One report per variant, all over the same records. With an output
/// directory, each variant gets its own subdirectory and the top level
/// holds the combined summary.
pub fn ablation_matrix(
    records: &[DatasetRecord],
    base: &PlannerConfig,
    variants: &[Variant],
    backends: &Backends,
    options: &EvalOptions,
) -> Result<Vec<(String, EvalReport)>, HarnessError> {
    if variants.is_empty() {
        return Err(HarnessError::NoVariants);
    }
    let mut reports = Vec::with_capacity(variants.len());
    for variant in variants {
        let config = variant.apply(base);
        let sub = EvalOptions {
            out_dir: options
                .out_dir
                .as_ref()
                .map(|d| d.join(sanitize_dir(&variant.name))),
            ..options.clone()
        };
        let report = run_named(&variant.name, records, &config, backends, &sub)?;
        let stop = report.cancelled;
        reports.push((variant.name.clone(), report));
        if stop {
            break;
        }
    }
    if let Some(dir) = &options.out_dir {
        write_text(&dir.join("summary.tsv"), &summary_tsv(&reports))?;
    }
    Ok(reports)
}

fn sanitize_dir(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '_' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

const COLUMNS: [&str; 7] = [
    "Method",
    "Hits@1",
    "LLM Call",
    "Input Token",
    "Output Token",
    "Total Token",
    "Time (s)",
];

fn summary_cells(name: &str, r: &EvalReport) -> [String; 7] {
    let a = &r.aggregates;
    [
        name.to_string(),
        format!("{:.1}", r.hits_at_1 * 100.0),
        format!("{:.1}", a.mean_calls),
        format!("{:.1}", a.mean_input_tokens),
        format!("{:.1}", a.mean_output_tokens),
        format!("{:.1}", a.mean_total_tokens),
        format!("{:.2}", a.mean_seconds),
    ]
}

/// Tab-separated header plus one row per report.
pub fn summary_tsv(reports: &[(String, EvalReport)]) -> String {
    let mut out = COLUMNS.join("\t");
    out.push('\n');
    for (name, r) in reports {
        out.push_str(&summary_cells(name, r).join("\t"));
        out.push('\n');
    }
    out
}

/// Aligned plain-text table for terminals.
pub fn format_summary(reports: &[(String, EvalReport)]) -> String {
    let rows: Vec<[String; 7]> = reports.iter().map(|(n, r)| summary_cells(n, r)).collect();
    let mut widths = COLUMNS.map(str::len);
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let mut line = |cells: &[&str]| {
        for (i, (cell, w)) in cells.iter().zip(widths).enumerate() {
            if i == 0 {
                let _ = write!(out, "{cell:<w$}");
            } else {
                let _ = write!(out, "  {cell:>w$}");
            }
        }
        out.push('\n');
    };
    line(&COLUMNS);
    for row in &rows {
        line(&row.each_ref().map(String::as_str));
    }
    out
}

fn create_dir(path: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(path).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), HarnessError> {
    fs::write(path, text).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    write_text(path, &(text + "\n"))
}
