use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::HarnessError;
use crate::kg::EntityId;
use crate::planner::{Question, TopicEntity};

/// One benchmark question in the normalized schema.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    pub question: String,
    pub topic_entities: Vec<TopicEntity>,
    /// Gold answers, aliases included.
    #[serde(rename = "answers")]
    pub gold_answers: Vec<String>,
    /// Split label such as GrailQA's `iid` / `compositional` / `zero-shot`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
}

impl DatasetRecord {
    pub fn to_question(&self) -> Question {
        Question::new(self.question.clone(), self.topic_entities.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flavor {
    Cwq,
    WebQsp,
    GrailQa,
    Normalized,
}

impl Flavor {
    pub const NAMES: [&'static str; 4] = ["cwq", "webqsp", "grailqa", "normalized"];
}

impl FromStr for Flavor {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cwq" => Ok(Flavor::Cwq),
            "webqsp" => Ok(Flavor::WebQsp),
            "grailqa" => Ok(Flavor::GrailQa),
            "normalized" | "json" => Ok(Flavor::Normalized),
            _ => Err(HarnessError::UnknownFlavor(s.to_string())),
        }
    }
}

impl fmt::Display for Flavor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Flavor::Cwq => "cwq",
            Flavor::WebQsp => "webqsp",
            Flavor::GrailQa => "grailqa",
            Flavor::Normalized => "normalized",
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadedDataset {
    pub records: Vec<DatasetRecord>,
    /// Records dropped for having no topic entity or no gold answer.
    pub skipped: usize,
}

pub fn load_dataset(path: &Path, flavor: Flavor) -> Result<LoadedDataset, HarnessError> {
    let text = fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_dataset(&text, flavor)
}

pub fn parse_dataset(text: &str, flavor: Flavor) -> Result<LoadedDataset, HarnessError> {
    if text.trim().is_empty() {
        return Ok(LoadedDataset::default());
    }
    let root: Value = serde_json::from_str(text).map_err(|e| HarnessError::Json(e.to_string()))?;
    let items = match root {
        Value::Array(items) => items,
        Value::Object(mut obj) => match obj.remove("Questions").or_else(|| obj.remove("questions"))
        {
            Some(Value::Array(items)) => items,
            _ => {
                return Err(HarnessError::Schema {
                    index: 0,
                    reason: "expected a JSON array of records".into(),
                })
            }
        },
        _ => {
            return Err(HarnessError::Schema {
                index: 0,
                reason: "expected a JSON array of records".into(),
            })
        }
    };

    let mut out = LoadedDataset::default();
    for (index, item) in items.into_iter().enumerate() {
        let record = match flavor {
            Flavor::Normalized => {
                serde_json::from_value::<DatasetRecord>(item).map_err(|e| e.to_string())
            }
            Flavor::Cwq => adapt_cwq(&item, index),
            Flavor::WebQsp => adapt_webqsp(&item, index),
            Flavor::GrailQa => adapt_grailqa(&item, index),
        }
        .map_err(|reason| HarnessError::Schema { index, reason })?;
        if record.topic_entities.is_empty() || record.gold_answers.is_empty() {
            log::warn!(
                "record {index} ({}): no {}; skipped",
                record.id,
                if record.topic_entities.is_empty() {
                    "topic entity"
                } else {
                    "gold answer"
                }
            );
            out.skipped += 1;
            continue;
        }
        out.records.push(record);
    }
    Ok(out)
}

pub fn save_normalized(path: &Path, records: &[DatasetRecord]) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(records).expect("records serialize");
    fs::write(path, text + "\n").map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn obj(item: &Value) -> Result<&Map<String, Value>, String> {
    item.as_object()
        .ok_or_else(|| "record is not an object".to_string())
}

fn str_field<'a>(o: &'a Map<String, Value>, keys: &[&str]) -> Option<&'a str> {
    keys.iter()
        .find_map(|k| o.get(*k).and_then(Value::as_str))
        .filter(|s| !s.trim().is_empty())
}

fn id_field(o: &Map<String, Value>, keys: &[&str], index: usize) -> String {
    keys.iter()
        .find_map(|k| match o.get(*k) {
            Some(Value::String(s)) => Some(s.clone()),
            Some(Value::Number(n)) => Some(n.to_string()),
            _ => None,
        })
        .unwrap_or_else(|| format!("q{index}"))
}

/// `{"m.0abc": "Label", ...}` as written by common preprocessing scripts.
fn topic_map(o: &Map<String, Value>) -> Result<Vec<TopicEntity>, String> {
    let Some(map) = o.get("topic_entity").and_then(Value::as_object) else {
        return Ok(Vec::new());
    };
    map.iter()
        .map(|(mid, label)| {
            let entity = EntityId::new(mid.clone()).map_err(|e| e.to_string())?;
            let label = label.as_str().unwrap_or(mid).to_string();
            Ok(TopicEntity::new(entity, label))
        })
        .collect()
}

fn push_unique(out: &mut Vec<String>, value: &str) {
    let value = value.trim();
    if !value.is_empty() && !out.iter().any(|v| v == value) {
        out.push(value.to_string());
    }
}

fn adapt_cwq(item: &Value, index: usize) -> Result<DatasetRecord, String> {
    let o = obj(item)?;
    let question = str_field(o, &["question", "machine_question"])
        .ok_or("missing question")?
        .to_string();
    let mut answers = Vec::new();
    if let Some(a) = o.get("answer").and_then(Value::as_str) {
        push_unique(&mut answers, a);
    }
    if let Some(list) = o.get("answers").and_then(Value::as_array) {
        for a in list {
            match a {
                Value::String(s) => push_unique(&mut answers, s),
                Value::Object(ao) => {
                    if let Some(s) = ao.get("answer").and_then(Value::as_str) {
                        push_unique(&mut answers, s);
                    }
                    for alias in ao
                        .get("aliases")
                        .and_then(Value::as_array)
                        .into_iter()
                        .flatten()
                    {
                        if let Some(s) = alias.as_str() {
                            push_unique(&mut answers, s);
                        }
                    }
                }
                _ => return Err("answers must be strings or objects".into()),
            }
        }
    }
    Ok(DatasetRecord {
        id: id_field(o, &["ID", "id"], index),
        question,
        topic_entities: topic_map(o)?,
        gold_answers: answers,
        tag: None,
    })
}

fn adapt_webqsp(item: &Value, index: usize) -> Result<DatasetRecord, String> {
    let o = obj(item)?;
    let question = str_field(o, &["RawQuestion", "ProcessedQuestion", "question"])
        .ok_or("missing question")?
        .to_string();
    let mut topics = topic_map(o)?;
    let mut answers = Vec::new();
    for parse in o
        .get("Parses")
        .and_then(Value::as_array)
        .into_iter()
        .flatten()
    {
        let Some(p) = parse.as_object() else {
            return Err("Parses entries must be objects".into());
        };
        if topics.is_empty() {
            if let Some(mid) = str_field(p, &["TopicEntityMid"]) {
                let label = str_field(p, &["TopicEntityName"]).unwrap_or(mid);
                let entity = EntityId::new(mid).map_err(|e| e.to_string())?;
                topics.push(TopicEntity::new(entity, label));
            }
        }
        for a in p
            .get("Answers")
            .and_then(Value::as_array)
            .into_iter()
            .flatten()
        {
            if let Some(ao) = a.as_object() {
                if let Some(s) = str_field(ao, &["EntityName", "AnswerArgument"]) {
                    push_unique(&mut answers, s);
                }
            }
        }
    }
    for a in o
        .get("answers")
        .and_then(Value::as_array)
        .into_iter()
        .flatten()
    {
        if let Some(s) = a.as_str() {
            push_unique(&mut answers, s);
        }
    }
    Ok(DatasetRecord {
        id: id_field(o, &["QuestionId", "ID", "id"], index),
        question,
        topic_entities: topics,
        gold_answers: answers,
        tag: None,
    })
}

fn adapt_grailqa(item: &Value, index: usize) -> Result<DatasetRecord, String> {
    let o = obj(item)?;
    let question = str_field(o, &["question"])
        .ok_or("missing question")?
        .to_string();
    let mut topics = topic_map(o)?;
    if topics.is_empty() {
        let nodes = o
            .get("graph_query")
            .and_then(|g| g.get("nodes"))
            .and_then(Value::as_array);
        for node in nodes.into_iter().flatten() {
            if node.get("node_type").and_then(Value::as_str) != Some("entity") {
                continue;
            }
            let Some(mid) = node.get("id").and_then(Value::as_str) else {
                continue;
            };
            let label = node
                .get("friendly_name")
                .and_then(Value::as_str)
                .unwrap_or(mid);
            let entity = EntityId::new(mid).map_err(|e| e.to_string())?;
            topics.push(TopicEntity::new(entity, label));
        }
    }
    let mut answers = Vec::new();
    for a in o
        .get("answer")
        .and_then(Value::as_array)
        .into_iter()
        .flatten()
    {
        match a {
            Value::String(s) => push_unique(&mut answers, s),
            Value::Object(ao) => {
                if let Some(s) = str_field(ao, &["entity_name", "answer_argument"]) {
                    push_unique(&mut answers, s);
                }
            }
            _ => return Err("answer entries must be strings or objects".into()),
        }
    }
    Ok(DatasetRecord {
        id: id_field(o, &["qid", "id"], index),
        question,
        topic_entities: topics,
        gold_answers: answers,
        tag: str_field(o, &["level"]).map(str::to_string),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalized_skips_empty_topics() {
        let text = r#"[
            {"id": "a", "question": "q1", "topic_entities": [{"mid": "m.1", "label": "One"}], "answers": ["x"]},
            {"id": "b", "question": "q2", "topic_entities": [], "answers": ["y"]},
            {"id": "c", "question": "q3", "topic_entities": [{"mid": "m.3", "label": "Three"}], "answers": ["z"], "tag": "iid"}
        ]"#;
        let d = parse_dataset(text, Flavor::Normalized).unwrap();
        assert_eq!(d.records.len(), 2);
        assert_eq!(d.skipped, 1);
        assert_eq!(d.records[1].tag.as_deref(), Some("iid"));
    }

    #[test]
    fn empty_file_is_empty() {
        assert_eq!(
            parse_dataset("", Flavor::Cwq).unwrap(),
            LoadedDataset::default()
        );
        assert_eq!(
            parse_dataset("  \n", Flavor::Normalized)
                .unwrap()
                .records
                .len(),
            0
        );
    }

    #[test]
    fn schema_error_names_index() {
        let text = r#"[{"id": "a", "question": "q", "topic_entities": [{"mid": "m.1", "label": "x"}], "answers": ["a"]},
                       {"id": "b", "question": 3}]"#;
        match parse_dataset(text, Flavor::Normalized) {
            Err(HarnessError::Schema { index, .. }) => assert_eq!(index, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn webqsp_parses() {
        let text = r#"{"Questions": [{
            "QuestionId": "WebQTest-1",
            "RawQuestion": "what does jamaican people speak?",
            "Parses": [{"TopicEntityMid": "m.03_r3", "TopicEntityName": "Jamaica",
                        "Answers": [{"AnswerArgument": "m.01428y", "EntityName": "Jamaican English"},
                                    {"AnswerArgument": "m.04ygk0", "EntityName": null}]}]
        }]}"#;
        let d = parse_dataset(text, Flavor::WebQsp).unwrap();
        let r = &d.records[0];
        assert_eq!(r.id, "WebQTest-1");
        assert_eq!(r.topic_entities[0].label, "Jamaica");
        assert_eq!(r.gold_answers, ["Jamaican English", "m.04ygk0"]);
    }

    #[test]
    fn cwq_with_aliases_and_topic_map() {
        let text = r#"[{"ID": "c1", "question": "q", "topic_entity": {"m.1": "One"},
            "answers": [{"answer": "Blank Space", "aliases": ["Blank Space (song)"], "answer_id": "m.2"}]}]"#;
        let r = &parse_dataset(text, Flavor::Cwq).unwrap().records[0];
        assert_eq!(r.gold_answers, ["Blank Space", "Blank Space (song)"]);
        assert_eq!(r.topic_entities[0].mid.as_str(), "m.1");
    }

    #[test]
    fn grailqa_graph_query_entities() {
        let text = r#"[{"qid": 7, "question": "q", "level": "zero-shot",
            "answer": [{"answer_type": "Entity", "answer_argument": "m.9", "entity_name": "Nine"}],
            "graph_query": {"nodes": [{"node_type": "class", "id": "x.y"},
                                      {"node_type": "entity", "id": "m.5", "friendly_name": "Five"}]}}]"#;
        let r = &parse_dataset(text, Flavor::GrailQa).unwrap().records[0];
        assert_eq!(r.id, "7");
        assert_eq!(r.tag.as_deref(), Some("zero-shot"));
        assert_eq!(r.topic_entities[0].label, "Five");
        assert_eq!(r.gold_answers, ["Nine"]);
    }

    #[test]
    fn flavor_names() {
        for n in Flavor::NAMES {
            assert_eq!(n.parse::<Flavor>().unwrap().to_string(), n);
        }
        assert!("freebase".parse::<Flavor>().is_err());
    }
}
