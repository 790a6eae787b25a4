//! Shared inputs for the benchmarks.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use graphplan::kg::TripleFormat;
use graphplan::{
    Backends, EntityId, Question, RelationId, ScriptedResponder, TopicEntity, TripleStore, Triplet,
};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures")
        .join(name)
}

pub fn panama_backends() -> Backends {
    let mut store = TripleStore::new();
    store
        .load_triples(&fixture("panama.tsv"), TripleFormat::Tsv)
        .expect("fixture loads");
    let script =
        ScriptedResponder::from_file(&fixture("panama_script.json")).expect("fixture loads");
    Backends::new(Arc::new(store), Arc::new(script))
}

pub fn panama_question() -> Question {
    Question::new(
        "Who is the president of the country where The Naked and the Dead was filmed?",
        vec![
            TopicEntity::new(EntityId::new("m.naked").unwrap(), "The Naked and the Dead"),
            TopicEntity::new(EntityId::new("m.pop").unwrap(), "President of Panama"),
        ],
    )
}

/// A store with `n` entities in a ring, each with a few relations and a name.
pub fn ring_store(n: usize) -> TripleStore {
    let rel = |i: usize| RelationId::new(format!("bench.ring.r{i}")).unwrap();
    let ent = |i: usize| EntityId::new(format!("m.b{i}")).unwrap();
    let mut triples = Vec::with_capacity(n * 4);
    for i in 0..n {
        for r in 0..3 {
            triples.push(Triplet::new(ent(i), rel(r), ent((i + r * 7 + 1) % n)));
        }
        triples.push(Triplet::new(
            ent(i),
            RelationId::new("type.object.name").unwrap(),
            EntityId::new(format!("Bench entity {i}")).unwrap(),
        ));
    }
    TripleStore::from_triples(triples)
}

/// Labelled candidates shaped like a crowded entity-exploration step.
pub fn candidates(n: usize) -> Vec<(EntityId, String)> {
    const WORDS: [&str; 8] = [
        "panama",
        "city",
        "president",
        "film",
        "office",
        "canal",
        "varela",
        "naked",
    ];
    (0..n)
        .map(|i| {
            let label = format!("{} {} {i}", WORDS[i % 8], WORDS[(i / 8) % 8]);
            (EntityId::new(format!("m.c{i}")).unwrap(), label)
        })
        .collect()
}
