//! Slow, obviously-correct reference implementations.

use std::collections::BTreeSet;

use graphplan::kg::NAME_RELATION;
use graphplan::recall::RelevanceScorer;
use graphplan::{EntityId, Triplet};

/// Evaluate a rendered single-pattern search query (`SELECT [DISTINCT] ?v
/// WHERE { s p o . }`) by scanning every fact. Label triples are not facts.
pub fn eval_search_query(query: &str, triples: &[Triplet]) -> Vec<String> {
    let select = query
        .lines()
        .find(|l| l.starts_with("SELECT"))
        .expect("SELECT line");
    let var = select.split_whitespace().last().unwrap();
    let pattern = query
        .lines()
        .map(str::trim)
        .find(|l| l.ends_with(" ."))
        .expect("triple pattern");
    let terms: Vec<&str> = pattern.trim_end_matches(" .").split_whitespace().collect();
    assert_eq!(terms.len(), 3, "{pattern}");

    let mut out = BTreeSet::new();
    for t in triples
        .iter()
        .filter(|t| t.relation.as_str() != NAME_RELATION)
    {
        let values = [t.subject.as_str(), t.relation.as_str(), t.object.as_str()];
        let mut binding = None;
        let mut ok = true;
        for (term, value) in terms.iter().zip(values) {
            if term.starts_with('?') {
                if *term == var {
                    binding = Some(value);
                }
            } else if term.strip_prefix("ns:") != Some(value) {
                ok = false;
            }
        }
        if ok {
            out.insert(binding.expect("selected variable bound").to_string());
        }
    }
    out.into_iter().collect()
}

/// First name in insertion order, else the raw id.
pub fn first_name(entity: &EntityId, triples: &[Triplet]) -> String {
    triples
        .iter()
        .find(|t| &t.subject == entity && t.relation.as_str() == NAME_RELATION)
        .map(|t| t.object.as_str().to_string())
        .unwrap_or_else(|| entity.as_str().to_string())
}

/// Character-by-character normalization, written independently of the
/// library: lowercase, trim, and collapse whitespace runs.
pub fn brute_normalize(s: &str) -> String {
    let mut out = String::new();
    let mut pending_space = false;
    for c in s.chars() {
        if c.is_whitespace() {
            pending_space = !out.is_empty();
            continue;
        }
        if pending_space {
            out.push(' ');
            pending_space = false;
        }
        for l in c.to_lowercase() {
            out.push(l);
        }
    }
    out
}

pub fn brute_hits(predicted: &str, gold: &[String]) -> bool {
    let p = brute_normalize(predicted);
    gold.iter().any(|g| brute_normalize(g) == p)
}

/// Score everything, sort fully, truncate.
pub fn full_sort_top_k(
    scorer: &dyn RelevanceScorer,
    question: &str,
    candidates: &[(EntityId, String)],
    k: usize,
) -> Vec<(EntityId, String)> {
    let mut scored: Vec<(f64, String, EntityId)> = candidates
        .iter()
        .map(|(e, l)| {
            let s = if l.trim().is_empty() {
                0.0
            } else {
                scorer.score(question, l).unwrap()
            };
            (s, l.clone(), e.clone())
        })
        .collect();
    scored.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap()
            .then_with(|| a.1.cmp(&b.1))
            .then_with(|| a.2.cmp(&b.2))
    });
    scored.truncate(k);
    scored.into_iter().map(|(_, l, e)| (e, l)).collect()
}

/// Ceiling of chars / 4, the scripted token rule.
pub fn ceil_quarter_chars(text: &str) -> u64 {
    let n = text.chars().count() as u64;
    n.div_ceil(4)
}
