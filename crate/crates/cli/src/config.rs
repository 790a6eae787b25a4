//! Flat `key = value` configuration with dotted keys.
//!
//! Precedence, lowest first: built-in defaults, the config file, command-line
//! flags. The API key is read from the environment only.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use graphplan::harness::Variant;
use graphplan::kg::{SparqlClient, TripleFormat};
use graphplan::llm::ChatClient;
use graphplan::planner::PromptRegistry;
use graphplan::recall::ScorerKind;
use graphplan::{
    Backends, KnowledgeGraph, LanguageModel, PlannerConfig, Recall, RecallConfig,
    ScriptedResponder, TripleStore,
};

pub const API_KEY_VARS: [&str; 2] = ["GRAPHPLAN_API_KEY", "OPENAI_API_KEY"];
const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";

/// Every key the file format accepts.
pub const KEYS: &[&str] = &[
    "kg.mode",
    "kg.path",
    "kg.format",
    "kg.endpoint",
    "llm.mode",
    "llm.base_url",
    "llm.script",
    "llm.model",
    "llm.temperature",
    "llm.max_tokens",
    "llm.frequency_penalty",
    "llm.presence_penalty",
    "planner.max_depth",
    "planner.ablate",
    "recall.threshold",
    "recall.k",
    "recall.scorer",
    "recall.endpoint",
    "prompts.dir",
    "output.dir",
    "eval.parallel",
];

/// Raised for anything the user can fix by changing flags or config; the
/// binary maps it to exit code 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KgMode {
    Memory,
    Sparql,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LlmMode {
    Http,
    Scripted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AppConfig {
    pub kg_mode: KgMode,
    pub kg_path: Option<PathBuf>,
    pub kg_format: TripleFormat,
    pub kg_endpoint: Option<String>,
    pub llm_mode: LlmMode,
    pub llm_base_url: String,
    pub llm_script: Option<PathBuf>,
    pub planner: PlannerConfig,
    /// Ablations as given; for `run` they are combined, for `eval` each is
    /// its own row next to the full method.
    pub ablate: Vec<String>,
    pub recall: RecallConfig,
    pub prompts_dir: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub parallel: usize,
}

/// Raw settings before validation: dotted key to string value.
pub type Settings = BTreeMap<String, String>;

pub fn parse_settings(text: &str, origin: &str) -> Result<Settings> {
    let mut out = Settings::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| usage(format!("{origin}:{}: expected `key = value`", n + 1)))?;
        let key = key.trim();
        if !KEYS.contains(&key) {
            bail!(usage(format!("{origin}:{}: unknown key `{key}`", n + 1)));
        }
        let value = value.trim().trim_matches('"');
        out.insert(key.to_string(), value.to_string());
    }
    Ok(out)
}

pub fn read_settings(path: &Path) -> Result<Settings> {
    let text = fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    parse_settings(&text, &path.display().to_string())
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| usage(format!("{key} = {value:?}: {e}")))
}

impl AppConfig {
    /// Merge `file` then `flags` over the defaults and validate.
    pub fn resolve(file: &Settings, flags: &Settings) -> Result<Self> {
        let mut merged = file.clone();
        for (k, v) in flags {
            merged.insert(k.clone(), v.clone());
        }
        let get = |k: &str| merged.get(k).map(String::as_str);

        let mut planner = PlannerConfig::default();
        let g = &mut planner.generation;
        if let Some(v) = get("llm.model") {
            g.model = v.to_string();
        }
        if let Some(v) = get("llm.temperature") {
            g.temperature = num("llm.temperature", v)?;
        }
        if let Some(v) = get("llm.max_tokens") {
            g.max_tokens = num("llm.max_tokens", v)?;
        }
        if let Some(v) = get("llm.frequency_penalty") {
            g.frequency_penalty = num("llm.frequency_penalty", v)?;
        }
        if let Some(v) = get("llm.presence_penalty") {
            g.presence_penalty = num("llm.presence_penalty", v)?;
        }
        if let Some(v) = get("planner.max_depth") {
            planner.max_depth = num("planner.max_depth", v)?;
        }
        let ablate: Vec<String> = get("planner.ablate")
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect()
            })
            .unwrap_or_default();
        for a in &ablate {
            a.parse::<Variant>().map_err(|e| usage(e.to_string()))?;
        }

        let kg_path = get("kg.path").map(PathBuf::from);
        let kg_endpoint = get("kg.endpoint").map(String::from);
        let kg_mode = match get("kg.mode") {
            Some("memory") => KgMode::Memory,
            Some("sparql") => KgMode::Sparql,
            Some(other) => bail!(usage(format!(
                "kg.mode = {other:?}: expected memory or sparql"
            ))),
            None if kg_endpoint.is_some() && kg_path.is_none() => KgMode::Sparql,
            None => KgMode::Memory,
        };
        match kg_mode {
            KgMode::Memory if kg_path.is_none() => bail!(usage(
                "no knowledge graph: memory mode needs a triple file (--kg PATH or kg.path)"
            )),
            KgMode::Sparql if kg_endpoint.is_none() => bail!(usage(
                "no knowledge graph: sparql mode needs an endpoint (--endpoint URL or kg.endpoint)"
            )),
            _ => {}
        }
        let kg_format = match get("kg.format") {
            Some(v) => v
                .parse()
                .map_err(|e: graphplan::KgError| usage(e.to_string()))?,
            None => TripleFormat::Tsv,
        };

        let llm_script = get("llm.script").map(PathBuf::from);
        let llm_mode = match get("llm.mode") {
            Some("http") => LlmMode::Http,
            Some("scripted") => LlmMode::Scripted,
            Some(other) => bail!(usage(format!(
                "llm.mode = {other:?}: expected http or scripted"
            ))),
            None if llm_script.is_some() => LlmMode::Scripted,
            None => LlmMode::Http,
        };
        if llm_mode == LlmMode::Scripted && llm_script.is_none() {
            bail!(usage(
                "scripted mode needs a fixture (--script PATH or llm.script)"
            ));
        }

        let mut recall = RecallConfig::default();
        if let Some(v) = get("recall.threshold") {
            recall.threshold = num("recall.threshold", v)?;
        }
        if let Some(v) = get("recall.k") {
            recall.k = num("recall.k", v)?;
        }
        recall.scorer = match get("recall.scorer") {
            None | Some("trigram") => ScorerKind::Trigram,
            Some("embedding") => ScorerKind::Embedding {
                endpoint: get("recall.endpoint")
                    .ok_or_else(|| usage("recall.scorer = embedding needs recall.endpoint"))?
                    .to_string(),
            },
            Some(other) => bail!(usage(format!(
                "recall.scorer = {other:?}: expected trigram or embedding"
            ))),
        };
        if recall.k == 0 {
            bail!(usage("recall.k must be >= 1"));
        }

        let parallel = match get("eval.parallel") {
            Some(v) => num("eval.parallel", v)?,
            None => 1,
        };
        if parallel == 0 {
            bail!(usage("eval.parallel must be >= 1"));
        }

        planner.validate().map_err(|e| usage(e.to_string()))?;

        Ok(Self {
            kg_mode,
            kg_path,
            kg_format,
            kg_endpoint,
            llm_mode,
            llm_base_url: get("llm.base_url").unwrap_or(DEFAULT_BASE_URL).to_string(),
            llm_script,
            planner,
            ablate,
            recall,
            prompts_dir: get("prompts.dir").map(PathBuf::from),
            output_dir: PathBuf::from(get("output.dir").unwrap_or("runs")),
            parallel,
        })
    }

    /// The planner config with every `--ablate` applied at once.
    pub fn combined_planner(&self) -> Result<PlannerConfig> {
        if self.ablate.is_empty() {
            return Ok(self.planner.clone());
        }
        let variant: Variant = self
            .ablate
            .join("+")
            .parse()
            .map_err(|e: graphplan::harness::HarnessError| usage(e.to_string()))?;
        Ok(variant.apply(&self.planner))
    }

    pub fn build_backends(&self) -> Result<Backends> {
        let kg: Arc<dyn KnowledgeGraph> = match self.kg_mode {
            KgMode::Memory => {
                let path = self.kg_path.as_ref().expect("validated");
                let mut store = TripleStore::new();
                let n = store
                    .load_triples(path, self.kg_format)
                    .with_context(|| format!("loading {}", path.display()))?;
                log::info!("loaded {n} triples from {}", path.display());
                Arc::new(store)
            }
            KgMode::Sparql => Arc::new(SparqlClient::new(
                self.kg_endpoint.clone().expect("validated"),
            )?),
        };
        let llm: Arc<dyn LanguageModel> = match self.llm_mode {
            LlmMode::Scripted => {
                let path = self.llm_script.as_ref().expect("validated");
                Arc::new(
                    ScriptedResponder::from_file(path)
                        .with_context(|| format!("loading {}", path.display()))?,
                )
            }
            LlmMode::Http => {
                let key = API_KEY_VARS.iter().find_map(|v| std::env::var(v).ok());
                if key.is_none() {
                    log::warn!(
                        "no API key in {}; sending unauthenticated requests",
                        API_KEY_VARS.join(" or ")
                    );
                }
                Arc::new(ChatClient::new(self.llm_base_url.clone(), key)?)
            }
        };
        let recall = Recall::new(self.recall.clone()).map_err(|e| anyhow!(e))?;
        let mut backends = Backends::new(kg, llm).with_recall(recall);
        if let Some(dir) = &self.prompts_dir {
            backends = backends.with_prompts(
                PromptRegistry::from_dir(dir)
                    .with_context(|| format!("loading prompts from {}", dir.display()))?,
            );
        }
        Ok(backends)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings(pairs: &[(&str, &str)]) -> Settings {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    #[test]
    fn flags_override_file_override_defaults() {
        let file = parse_settings(
            "# comment\nkg.path = a.tsv\nplanner.max_depth = 2\nllm.model = \"file-model\"\n",
            "test",
        )
        .unwrap();
        let flags = settings(&[("planner.max_depth", "3")]);
        let c = AppConfig::resolve(&file, &flags).unwrap();
        assert_eq!(c.planner.max_depth, 3);
        assert_eq!(c.planner.generation.model, "file-model");
        assert_eq!(c.planner.generation.max_tokens, 1024);
        assert_eq!(c.kg_path, Some(PathBuf::from("a.tsv")));
        assert_eq!(c.recall.threshold, 30);

        let c = AppConfig::resolve(&file, &Settings::new()).unwrap();
        assert_eq!(c.planner.max_depth, 2);
    }

    #[test]
    fn modes_are_inferred_and_checked() {
        let c = AppConfig::resolve(&settings(&[("kg.endpoint", "http://x")]), &Settings::new())
            .unwrap();
        assert_eq!(c.kg_mode, KgMode::Sparql);
        assert_eq!(c.llm_mode, LlmMode::Http);
        let c = AppConfig::resolve(
            &settings(&[("kg.path", "a"), ("llm.script", "s.json")]),
            &Settings::new(),
        )
        .unwrap();
        assert_eq!(c.llm_mode, LlmMode::Scripted);

        for bad in [
            settings(&[]),
            settings(&[("kg.mode", "memory"), ("kg.endpoint", "http://x")]),
            settings(&[("kg.path", "a"), ("llm.mode", "scripted")]),
            settings(&[("kg.path", "a"), ("planner.max_depth", "0")]),
            settings(&[("kg.path", "a"), ("planner.ablate", "no_brain")]),
            settings(&[("kg.path", "a"), ("recall.scorer", "embedding")]),
        ] {
            let err = AppConfig::resolve(&bad, &Settings::new()).unwrap_err();
            assert!(err.is::<UsageError>(), "{bad:?}: {err}");
        }
    }

    #[test]
    fn unknown_keys_and_bad_lines_are_rejected() {
        assert!(parse_settings("kg.nope = 1", "t").is_err());
        assert!(parse_settings("just words", "t").is_err());
    }

    #[test]
    fn ablations_combine_for_single_runs() {
        let c = AppConfig::resolve(
            &settings(&[
                ("kg.path", "a"),
                ("planner.ablate", "no_memory, fixed_breadth=2"),
            ]),
            &Settings::new(),
        )
        .unwrap();
        let p = c.combined_planner().unwrap();
        assert!(p.ablations.no_memory);
        assert_eq!(p.ablations.fixed_breadth, Some(2));
    }
}
