use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::header::{ACCEPT, CONTENT_TYPE};
use serde_json::Value;

use super::sparql::{render_sparql, SparqlTemplate};
use super::{
    strip_namespace, Direction, EntityId, EntityLabel, KgError, KnowledgeGraph, RelationId,
};
use crate::retry::Backoff;

enum Failure {
    Transient(String),
    Fatal(KgError),
}

/// SPARQL 1.1 protocol client for a Freebase endpoint.
///
/// Results are cached per rendered query for the lifetime of the client, so
/// a run never issues the same query twice.
pub struct SparqlClient {
    endpoint: String,
    http: Client,
    backoff: Backoff,
    cache: Mutex<HashMap<String, Vec<String>>>,
    requests: AtomicUsize,
}

impl SparqlClient {
    pub fn new(endpoint: impl Into<String>) -> Result<Self, KgError> {
        let http = Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| KgError::Unreachable(e.to_string()))?;
        Ok(Self {
            endpoint: endpoint.into(),
            http,
            backoff: Backoff::default(),
            cache: Mutex::new(HashMap::new()),
            requests: AtomicUsize::new(0),
        })
    }

    pub fn with_backoff(mut self, backoff: Backoff) -> Self {
        self.backoff = backoff;
        self
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    /// HTTP requests actually sent (cache misses, retries included).
    pub fn request_count(&self) -> usize {
        self.requests.load(Ordering::Relaxed)
    }

    fn select(&self, template: SparqlTemplate, query: String) -> Result<Vec<String>, KgError> {
        if let Some(hit) = self.cache.lock().unwrap().get(&query) {
            return Ok(hit.clone());
        }
        let body = self
            .backoff
            .run(|f| matches!(f, Failure::Transient(_)), || self.post(&query))
            .map_err(|f| match f {
                Failure::Transient(msg) => KgError::Unreachable(msg),
                Failure::Fatal(err) => err,
            })?;
        let values = parse_bindings(&body, template.variable())?;
        self.cache.lock().unwrap().insert(query, values.clone());
        Ok(values)
    }

    fn post(&self, query: &str) -> Result<String, Failure> {
        self.requests.fetch_add(1, Ordering::Relaxed);
        let response = self
            .http
            .post(&self.endpoint)
            .header(CONTENT_TYPE, "application/sparql-query")
            .header(ACCEPT, "application/sparql-results+json")
            .body(query.to_string())
            .send()
            .map_err(|e| Failure::Transient(e.to_string()))?;
        let status = response.status();
        let text = response
            .text()
            .map_err(|e| Failure::Transient(e.to_string()))?;
        if status.is_success() {
            Ok(text)
        } else if status.is_server_error() || status.as_u16() == 429 {
            Err(Failure::Transient(format!("HTTP {status}")))
        } else {
            Err(Failure::Fatal(KgError::Response(format!(
                "HTTP {status}: {}",
                text.chars().take(200).collect::<String>()
            ))))
        }
    }
}

/// Extract `results.bindings[*].<variable>.value`, namespace stripped,
/// deduplicated and sorted.
pub(crate) fn parse_bindings(body: &str, variable: &str) -> Result<Vec<String>, KgError> {
    let json: Value =
        serde_json::from_str(body).map_err(|e| KgError::Response(format!("invalid JSON: {e}")))?;
    let bindings = json
        .pointer("/results/bindings")
        .and_then(Value::as_array)
        .ok_or_else(|| KgError::Response("missing results.bindings".to_string()))?;
    let mut values: Vec<String> = bindings
        .iter()
        .filter_map(|b| b.get(variable)?.get("value")?.as_str())
        .map(|v| strip_namespace(v).to_string())
        .filter(|v| !v.trim().is_empty())
        .collect();
    values.sort();
    values.dedup();
    Ok(values)
}

impl KnowledgeGraph for SparqlClient {
    fn search_relations(
        &self,
        entity: &EntityId,
        direction: Direction,
    ) -> Result<Vec<RelationId>, KgError> {
        let template = match direction {
            Direction::Outgoing => SparqlTemplate::RelationOut,
            Direction::Incoming => SparqlTemplate::RelationIn,
        };
        let query = render_sparql(template, Some(entity), None)?;
        self.select(template, query)?
            .into_iter()
            .filter(|r| !r.chars().any(char::is_whitespace))
            .map(RelationId::new)
            .collect()
    }

    fn search_entities(
        &self,
        entity: &EntityId,
        relation: &RelationId,
        direction: Direction,
    ) -> Result<Vec<EntityId>, KgError> {
        let template = match direction {
            Direction::Outgoing => SparqlTemplate::EntityOut,
            Direction::Incoming => SparqlTemplate::EntityIn,
        };
        let query = render_sparql(template, Some(entity), Some(relation))?;
        self.select(template, query)?
            .into_iter()
            .map(EntityId::new)
            .collect()
    }

    fn resolve_label(&self, entity: &EntityId) -> Result<EntityLabel, KgError> {
        if !entity.is_mid() {
            return Ok(EntityLabel::fallback(entity));
        }
        let query = render_sparql(SparqlTemplate::Name, Some(entity), None)?;
        let names = self.select(SparqlTemplate::Name, query)?;
        Ok(match names.into_iter().next() {
            Some(label) => EntityLabel {
                entity: entity.clone(),
                label,
            },
            None => EntityLabel::fallback(entity),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bindings_are_stripped_and_sorted() {
        let body = r#"{"head":{"vars":["relation"]},"results":{"bindings":[
            {"relation":{"type":"uri","value":"http://rdf.freebase.com/ns/b.c.d"}},
            {"relation":{"type":"uri","value":"http://rdf.freebase.com/ns/a.b.c"}},
            {"relation":{"type":"uri","value":"http://rdf.freebase.com/ns/a.b.c"}}
        ]}}"#;
        assert_eq!(
            parse_bindings(body, "relation").unwrap(),
            vec!["a.b.c".to_string(), "b.c.d".to_string()]
        );
    }

    #[test]
    fn missing_bindings_is_a_response_error() {
        assert!(matches!(
            parse_bindings("{}", "relation"),
            Err(KgError::Response(_))
        ));
        assert!(matches!(
            parse_bindings("<html>", "relation"),
            Err(KgError::Response(_))
        ));
    }
}
