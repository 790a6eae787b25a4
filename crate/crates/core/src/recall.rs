//! Relevance filtering for oversized candidate-entity sets.
//!
//! When one path's entity search returns more candidates than
//! [`RecallConfig::threshold`], only the [`RecallConfig::k`] most
//! question-relevant ones reach the entity-exploration prompt. Scoring is
//! pluggable through [`RelevanceScorer`]; the default is a character-trigram
//! cosine, and [`EmbeddingScorer`] calls a remote embedding endpoint.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::sync::Mutex;
use std::time::Duration;

use reqwest::blocking::Client;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::kg::EntityId;
use crate::retry::Backoff;

#[derive(Debug, Error)]
pub enum RecallError {
    #[error("cannot score an empty string")]
    EmptyInput,
    #[error("embedding endpoint: {0}")]
    Remote(String),
}

pub trait RelevanceScorer: Send + Sync {
    /// Relevance in `[0, 1]`; identical inputs give identical scores.
    fn score(&self, question: &str, label: &str) -> Result<f64, RecallError>;
}

/// Cosine similarity of lowercase character-trigram multisets. Strings
/// shorter than three characters count as a single gram.
#[derive(Debug, Clone, Copy, Default)]
pub struct TrigramScorer;

fn trigrams(text: &str) -> HashMap<String, u64> {
    let chars: Vec<char> = text.to_lowercase().chars().collect();
    let mut grams = HashMap::new();
    if chars.len() < 3 {
        grams.insert(chars.iter().collect(), 1);
        return grams;
    }
    for w in chars.windows(3) {
        *grams.entry(w.iter().collect::<String>()).or_insert(0) += 1;
    }
    grams
}

impl RelevanceScorer for TrigramScorer {
    fn score(&self, question: &str, label: &str) -> Result<f64, RecallError> {
        let (q, l) = (question.trim(), label.trim());
        if q.is_empty() || l.is_empty() {
            return Err(RecallError::EmptyInput);
        }
        let a = trigrams(q);
        let b = trigrams(l);
        let dot: u64 = a.iter().filter_map(|(g, n)| b.get(g).map(|m| n * m)).sum();
        let na: u64 = a.values().map(|n| n * n).sum();
        let nb: u64 = b.values().map(|n| n * n).sum();
        // sqrt(na * nb) is exact when na == nb, so self-similarity is 1.0.
        let score = dot as f64 / ((na as f64) * (nb as f64)).sqrt();
        Ok(score.clamp(0.0, 1.0))
    }
}

/// Scores by cosine similarity of embeddings fetched from an HTTP endpoint.
///
/// The endpoint receives `{"input": text}` and must answer with either
/// `{"embedding": [...]}` or the OpenAI shape `{"data": [{"embedding": [...]}]}`.
/// Embeddings are cached per text.
pub struct EmbeddingScorer {
    endpoint: String,
    http: Client,
    backoff: Backoff,
    cache: Mutex<HashMap<String, Vec<f64>>>,
}

impl EmbeddingScorer {
    pub fn new(endpoint: impl Into<String>) -> Result<Self, RecallError> {
        let http = Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| RecallError::Remote(e.to_string()))?;
        Ok(Self {
            endpoint: endpoint.into(),
            http,
            backoff: Backoff::default(),
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn with_backoff(mut self, backoff: Backoff) -> Self {
        self.backoff = backoff;
        self
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, RecallError> {
        if let Some(v) = self.cache.lock().unwrap().get(text) {
            return Ok(v.clone());
        }
        let body: Value = self.backoff.run(
            |_| true,
            || {
                let resp = self
                    .http
                    .post(&self.endpoint)
                    .json(&json!({ "input": text }))
                    .send()
                    .map_err(|e| RecallError::Remote(e.to_string()))?;
                if !resp.status().is_success() {
                    return Err(RecallError::Remote(format!("HTTP {}", resp.status())));
                }
                resp.json::<Value>()
                    .map_err(|e| RecallError::Remote(e.to_string()))
            },
        )?;
        let vector = body
            .get("embedding")
            .or_else(|| body.pointer("/data/0/embedding"))
            .and_then(Value::as_array)
            .ok_or_else(|| RecallError::Remote("response has no embedding".into()))?
            .iter()
            .map(|x| x.as_f64().unwrap_or(0.0))
            .collect::<Vec<_>>();
        self.cache
            .lock()
            .unwrap()
            .insert(text.to_string(), vector.clone());
        Ok(vector)
    }
}

pub(crate) fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(0.0, 1.0)
}

impl RelevanceScorer for EmbeddingScorer {
    fn score(&self, question: &str, label: &str) -> Result<f64, RecallError> {
        let (q, l) = (question.trim(), label.trim());
        if q.is_empty() || l.is_empty() {
            return Err(RecallError::EmptyInput);
        }
        Ok(cosine(&self.embed(q)?, &self.embed(l)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub entity: EntityId,
    pub label: String,
    pub score: f64,
}

/// Ranking order: score descending, then label, then id ascending.
pub fn rank_order(a: &ScoredCandidate, b: &ScoredCandidate) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.label.cmp(&b.label))
        .then_with(|| a.entity.cmp(&b.entity))
}

/// The `k` highest-scoring candidates in [`rank_order`]. Candidates with an
/// empty label score zero; remote scoring failures propagate.
pub fn top_k(
    scorer: &dyn RelevanceScorer,
    question: &str,
    candidates: &[(EntityId, String)],
    k: usize,
) -> Result<Vec<ScoredCandidate>, RecallError> {
    let mut scored = Vec::with_capacity(candidates.len());
    for (entity, label) in candidates {
        let score = match scorer.score(question, label) {
            Ok(s) => s,
            Err(RecallError::EmptyInput) => 0.0,
            Err(e) => return Err(e),
        };
        scored.push(ScoredCandidate {
            entity: entity.clone(),
            label: label.clone(),
            score,
        });
    }
    scored.sort_by(rank_order);
    scored.truncate(k.max(1));
    Ok(scored)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ScorerKind {
    Trigram,
    Embedding { endpoint: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallConfig {
    /// Recall fires only when a single path has more candidates than this.
    pub threshold: usize,
    pub k: usize,
    pub scorer: ScorerKind,
}

impl Default for RecallConfig {
    fn default() -> Self {
        Self {
            threshold: 30,
            k: 25,
            scorer: ScorerKind::Trigram,
        }
    }
}

pub struct Recall {
    config: RecallConfig,
    scorer: Box<dyn RelevanceScorer>,
}

impl Recall {
    pub fn new(config: RecallConfig) -> Result<Self, RecallError> {
        let scorer: Box<dyn RelevanceScorer> = match &config.scorer {
            ScorerKind::Trigram => Box::new(TrigramScorer),
            ScorerKind::Embedding { endpoint } => Box::new(EmbeddingScorer::new(endpoint.clone())?),
        };
        Ok(Self { config, scorer })
    }

    pub fn with_scorer(config: RecallConfig, scorer: Box<dyn RelevanceScorer>) -> Self {
        Self { config, scorer }
    }

    pub fn config(&self) -> &RecallConfig {
        &self.config
    }

    pub fn scorer(&self) -> &dyn RelevanceScorer {
        self.scorer.as_ref()
    }

    /// Pass small candidate sets through untouched; trim large ones to `k`.
    pub fn filter(
        &self,
        question: &str,
        candidates: Vec<(EntityId, String)>,
    ) -> Result<Vec<(EntityId, String)>, RecallError> {
        if candidates.len() <= self.config.threshold {
            return Ok(candidates);
        }
        Ok(
            top_k(self.scorer.as_ref(), question, &candidates, self.config.k)?
                .into_iter()
                .map(|c| (c.entity, c.label))
                .collect(),
        )
    }
}

impl Default for Recall {
    fn default() -> Self {
        Self::with_scorer(RecallConfig::default(), Box::new(TrigramScorer))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cand(id: &str, label: &str) -> (EntityId, String) {
        (EntityId::new(id).unwrap(), label.to_string())
    }

    #[test]
    fn self_similarity_is_one() {
        for q in [
            "who governs panama",
            "a",
            "ab",
            "Ünïcödé text",
            "  padded  ",
        ] {
            assert_eq!(TrigramScorer.score(q, q).unwrap(), 1.0, "{q}");
        }
    }

    #[test]
    fn disjoint_trigrams_score_zero() {
        assert_eq!(
            TrigramScorer.score("who governs panama", "zzzz").unwrap(),
            0.0
        );
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(matches!(
            TrigramScorer.score("", "x"),
            Err(RecallError::EmptyInput)
        ));
        assert!(matches!(
            TrigramScorer.score("q", "   "),
            Err(RecallError::EmptyInput)
        ));
    }

    #[test]
    fn case_insensitive() {
        assert_eq!(TrigramScorer.score("PANAMA", "panama").unwrap(), 1.0);
    }

    #[test]
    fn ties_break_on_label() {
        struct Flat;
        impl RelevanceScorer for Flat {
            fn score(&self, _: &str, _: &str) -> Result<f64, RecallError> {
                Ok(0.5)
            }
        }
        let out = top_k(&Flat, "q", &[cand("m.2", "B"), cand("m.1", "A")], 5).unwrap();
        assert_eq!(out[0].label, "A");
        assert_eq!(out[1].label, "B");
    }

    #[test]
    fn k_larger_than_input_returns_all() {
        let c = vec![
            cand("m.1", "Panama"),
            cand("m.2", "Love Story"),
            cand("m.3", "Ballet"),
        ];
        let out = top_k(&TrigramScorer, "panama ballet", &c, 10).unwrap();
        assert_eq!(out.len(), 3);
        assert!(out
            .windows(2)
            .all(|w| rank_order(&w[0], &w[1]) != Ordering::Greater));
    }

    #[test]
    fn empty_candidates() {
        assert!(top_k(&TrigramScorer, "q", &[], 3).unwrap().is_empty());
    }

    #[test]
    fn filter_respects_threshold() {
        let recall = Recall::default();
        let small: Vec<_> = (0..30)
            .map(|i| cand(&format!("m.{i}"), &format!("e{i}")))
            .collect();
        assert_eq!(recall.filter("q", small.clone()).unwrap(), small);
        let big: Vec<_> = (0..100)
            .map(|i| cand(&format!("m.{i}"), &format!("e{i}")))
            .collect();
        assert_eq!(recall.filter("q", big).unwrap().len(), 25);
    }

    #[test]
    fn vector_cosine() {
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]), 0.0);
        assert!((cosine(&[1.0, 1.0], &[2.0, 2.0]) - 1.0).abs() < 1e-12);
        assert_eq!(cosine(&[0.0], &[1.0]), 0.0);
    }
}
