#![allow(dead_code)]

pub mod mock;
pub mod oracles;
pub mod world;

use std::path::PathBuf;
use std::sync::Arc;

use graphplan::kg::{TripleFormat, TripleStore};
use graphplan::llm::ScriptedResponder;
use graphplan::planner::{Backends, Question, TopicEntity};
use graphplan::EntityId;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

pub fn store(name: &str) -> TripleStore {
    let mut store = TripleStore::new();
    store
        .load_triples(&fixture(name), TripleFormat::Tsv)
        .unwrap();
    store
}

pub fn script(name: &str) -> ScriptedResponder {
    ScriptedResponder::from_file(&fixture(name)).unwrap()
}

pub fn e(id: &str) -> EntityId {
    EntityId::new(id).unwrap()
}

pub fn panama_backends() -> Backends {
    Backends::new(
        Arc::new(store("panama.tsv")),
        Arc::new(script("panama_script.json")),
    )
}

pub fn panama_question() -> Question {
    Question::new(
        "Who is the president of the country where The Naked and the Dead was filmed?",
        vec![
            TopicEntity::new(e("m.naked"), "The Naked and the Dead"),
            TopicEntity::new(e("m.pop"), "President of Panama"),
        ],
    )
}

/// Independent re-summation of a persisted JSONL trace: (calls, input, output).
/// Reads raw JSON so it shares no code with the library's accounting.
pub fn resum_trace_file(path: &std::path::Path) -> (u64, u64, u64) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut totals = (0, 0, 0);
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        if v["kind"] != "llm_call" {
            continue;
        }
        totals.0 += 1;
        totals.1 += v["usage"]["input_tokens"].as_u64().unwrap_or(0);
        totals.2 += v["usage"]["output_tokens"].as_u64().unwrap_or(0);
    }
    totals
}

/// Scripted usage rule, computed from the recorded prompt and response:
/// one token per four characters, rounded up.
pub fn scripted_tokens(text: &str) -> u64 {
    let chars = text.chars().count() as u64;
    chars.div_ceil(4)
}

pub fn eval_backends() -> Backends {
    Backends::new(
        Arc::new(store("panama.tsv")),
        Arc::new(script("eval_script.json")),
    )
}
