use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use graphplan::llm::{extract_json_object, parse_list};
use graphplan::recall::{top_k, TrigramScorer};
use graphplan::{Direction, EntityId, KnowledgeGraph, Planner, PlannerConfig, RelationId};
use graphplan_bench::{candidates, panama_backends, panama_question, ring_store};

fn parsers(c: &mut Criterion) {
    let list = "Sure, here they are:\n```json\n[\"location.country.capital\", \"government.government_office_or_title.office_holders\", \"film.film.featured_film_locations\"]\n```";
    let repr = "['Juan Carlos Varela', 'Panama City', \"O'Brien\"]";
    let object = "Based on the triplets: {\"A\": \"Juan Carlos Varela\", \"R\": \"The film was shot in Panama.\"} Done.";
    let mut g = c.benchmark_group("parse");
    g.bench_function("list_fenced", |b| b.iter(|| parse_list(black_box(list))));
    g.bench_function("list_python_repr", |b| {
        b.iter(|| parse_list(black_box(repr)))
    });
    g.bench_function("object_in_prose", |b| {
        b.iter(|| extract_json_object(black_box(object)))
    });
    g.finish();
}

fn recall(c: &mut Criterion) {
    let mut g = c.benchmark_group("recall_top_k");
    for n in [50, 500, 5000] {
        let cands = candidates(n);
        g.bench_with_input(BenchmarkId::from_parameter(n), &cands, |b, cands| {
            b.iter(|| top_k(&TrigramScorer, "who is the president of panama", cands, 25))
        });
    }
    g.finish();
}

fn store(c: &mut Criterion) {
    let store = ring_store(10_000);
    let e = EntityId::new("m.b4242").unwrap();
    let r = RelationId::new("bench.ring.r1").unwrap();
    let mut g = c.benchmark_group("store");
    g.bench_function("relations_out", |b| {
        b.iter(|| store.search_relations(black_box(&e), Direction::Outgoing))
    });
    g.bench_function("entities_in", |b| {
        b.iter(|| store.search_entities(black_box(&e), &r, Direction::Incoming))
    });
    g.bench_function("resolve_label", |b| {
        b.iter(|| store.resolve_label(black_box(&e)))
    });
    g.finish();
}

fn planner(c: &mut Criterion) {
    let planner = Planner::new(panama_backends(), PlannerConfig::default()).unwrap();
    let question = panama_question();
    c.bench_function("planner/panama_scripted", |b| {
        b.iter(|| planner.run_question(black_box(&question)).unwrap())
    });
}

criterion_group!(benches, parsers, recall, store, planner);
criterion_main!(benches);
