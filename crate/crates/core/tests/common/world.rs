//! Random knowledge graphs with matching scripted responders.

use std::sync::Arc;

use graphplan::kg::{TripleStore, NAME_RELATION};
use graphplan::llm::ScriptedResponder;
use graphplan::planner::{Backends, Question, TopicEntity};
use graphplan::{EntityId, RelationId, Triplet};
use rand::rngs::StdRng;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};

pub struct World {
    pub triples: Vec<Triplet>,
    pub store: TripleStore,
    pub labels: Vec<(EntityId, String)>,
    pub relations: Vec<String>,
    pub question: Question,
    pub script: ScriptedResponder,
}

impl World {
    pub fn backends(&self) -> Backends {
        Backends::new(Arc::new(self.store.clone()), Arc::new(self.script.clone()))
    }

    /// Non-label triples, i.e. the facts a path may traverse.
    pub fn facts(&self) -> impl Iterator<Item = &Triplet> {
        self.triples
            .iter()
            .filter(|t| t.relation.as_str() != NAME_RELATION)
    }
}

fn eid(s: String) -> EntityId {
    EntityId::new(s).unwrap()
}

/// Wrap a list the way chat models do: fenced, with prose, or bare.
fn dress(rng: &mut StdRng, body: String) -> String {
    match rng.random_range(0..5) {
        0 => format!("```json\n{body}\n```"),
        1 => format!("Here you go: {body}"),
        2 => format!("{body}\n"),
        3 => body.replace('"', "'"),
        _ => body,
    }
}

fn list(rng: &mut StdRng, pool: &[String], max: usize, junk: &[&str]) -> String {
    let mut items: Vec<String> = Vec::new();
    for _ in 0..rng.random_range(0..=max) {
        if let Some(x) = pool.choose(rng) {
            items.push(x.clone());
        }
    }
    if rng.random_bool(0.3) {
        items.push(junk.choose(rng).unwrap().to_string());
    }
    let body = serde_json::to_string(&items).unwrap();
    dress(rng, body)
}

/// A random graph and a responder scripted against its labels.
///
/// With `adversarial`, every answer is a non-answer and every reflection
/// declines to add entities; otherwise answers and reflections are random.
pub fn random_world(seed: u64, adversarial: bool) -> World {
    let mut rng = StdRng::seed_from_u64(seed);
    let n_entities = rng.random_range(3..14);
    let n_relations = rng.random_range(2..7);
    let relations: Vec<String> = (0..n_relations)
        .map(|i| format!("d{}.t{}.r{i}", i % 3, i % 2))
        .collect();
    let entities: Vec<EntityId> = (0..n_entities).map(|i| eid(format!("m.e{i}"))).collect();

    let mut triples = Vec::new();
    for _ in 0..rng.random_range(4..60) {
        let s = entities.choose(&mut rng).unwrap().clone();
        let r = RelationId::new(relations.choose(&mut rng).unwrap().clone()).unwrap();
        let o = if rng.random_bool(0.1) {
            eid(format!("{}", rng.random_range(1900..2030)))
        } else {
            entities.choose(&mut rng).unwrap().clone()
        };
        triples.push(Triplet::new(s, r, o));
    }
    let mut labels = Vec::new();
    for (i, e) in entities.iter().enumerate() {
        // Some entities stay unnamed, like CVT nodes.
        if rng.random_bool(0.8) {
            let label = format!("Entity {i}");
            triples.push(Triplet::new(
                e.clone(),
                RelationId::new(NAME_RELATION).unwrap(),
                eid(label.clone()),
            ));
            labels.push((e.clone(), label));
        } else {
            labels.push((e.clone(), e.as_str().to_string()));
        }
    }
    let store = TripleStore::from_triples(triples.iter().cloned());

    let mut topics = Vec::new();
    for _ in 0..rng.random_range(1..=2) {
        let (e, l) = labels.choose(&mut rng).unwrap().clone();
        if !topics.iter().any(|t: &TopicEntity| t.mid == e) {
            topics.push(TopicEntity::new(e, l));
        }
    }
    let question = Question::new(format!("Which entity answers question {seed}?"), topics);

    let label_pool: Vec<String> = labels.iter().map(|(_, l)| l.clone()).collect();
    let mut script = ScriptedResponder::new();

    let n_subs = rng.random_range(0..4);
    let subs: Vec<String> = (0..n_subs).map(|i| format!("Find fact {i}")).collect();
    let decomposition = if rng.random_bool(0.1) {
        "I cannot split this.".to_string()
    } else {
        dress(&mut rng, serde_json::to_string(&subs).unwrap())
    };
    script = script.rule("break down the process", &decomposition);

    for (_, label) in &labels {
        let picks = list(&mut rng, &relations, 3, &["people.person.spouse", "m.e0"]);
        script = script.rule(&format!("Topic Entity: {label}\nRelations:"), &picks);
    }
    for rel in &relations {
        let picks = list(&mut rng, &label_pool, 3, &["Atlantis", "Entity 99"]);
        let pattern = format!(
            r"(?s)directly output the entities.*, {}, \[",
            regex::escape(rel)
        );
        script = script.regex_rule(&pattern, &picks).unwrap();
    }
    script = script.rule("directly output relations", "[]");
    script = script.rule("directly output the entities", "[]");
    let status = if rng.random_bool(0.8) {
        let obj: serde_json::Map<String, serde_json::Value> = (1..=n_subs.max(1) + 1)
            .map(|i| {
                (
                    i.to_string(),
                    serde_json::Value::from(format!("status {i}")),
                )
            })
            .collect();
        serde_json::Value::Object(obj).to_string()
    } else {
        "no json here".to_string()
    };
    script = script.rule("currently known information", &status);

    let non_answers = [
        r#"{"A": "insufficient", "R": "missing facts"}"#,
        r#"{"A": "unknown", "R": "?"}"#,
        r#"{"A": "", "R": "nothing"}"#,
        r#"{"A": "No.", "R": "not yet"}"#,
        r#"{"A": null, "R": "null"}"#,
        "The answer cannot be determined.",
        r#"```json
{'A': 'Insufficient', 'R': 'need more'}
```"#,
    ];
    let declines = [
        r#"{"Add": "No", "Reason": "fine"}"#,
        r#"{"Add": false, "Reason": "fine"}"#,
        r#"{"Add": "no", "Reason": "keep"}"#,
        "Add: nope",
        r#"{"Reason": "missing add"}"#,
    ];
    if adversarial {
        script = script
            .rule(
                "must include \"A\" and \"R\"",
                non_answers.choose(&mut rng).unwrap(),
            )
            .rule("must include \"Add\"", declines.choose(&mut rng).unwrap());
    } else {
        let answer = if rng.random_bool(0.3) {
            format!(
                r#"{{"A": "{}", "R": "found"}}"#,
                label_pool.choose(&mut rng).unwrap()
            )
        } else {
            non_answers.choose(&mut rng).unwrap().to_string()
        };
        let reflect = if rng.random_bool(0.6) {
            r#"{"Add": "Yes", "Reason": "wrong branch"}"#.to_string()
        } else {
            declines.choose(&mut rng).unwrap().to_string()
        };
        let backtrack = list(&mut rng, &label_pool, 2, &["Atlantis"]);
        script = script
            .rule("must include \"A\" and \"R\"", &answer)
            .rule("must include \"Add\"", &reflect)
            .rule("select the fewest necessary entities", &backtrack);
    }
    World {
        triples,
        store,
        labels,
        relations,
        question,
        script,
    }
}
