use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::path::ReasoningPath;
use crate::kg::{Direction, EntityId, RelationId, Triplet};

/// Everything retrieved from the KG during a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Subgraph {
    /// Retrieved entities with their labels.
    pub entities: BTreeMap<EntityId, String>,
    /// Candidate relations per source entity and direction.
    pub relations: BTreeSet<(EntityId, RelationId, Direction)>,
    /// Source triples of every candidate entity.
    pub triples: BTreeSet<Triplet>,
    /// Relations already followed from an entity; they are not offered again.
    pub expanded: BTreeSet<(EntityId, RelationId, Direction)>,
}

impl Subgraph {
    pub fn label_of(&self, entity: &EntityId) -> String {
        self.entities
            .get(entity)
            .cloned()
            .unwrap_or_else(|| entity.as_str().to_string())
    }

    /// Whether `other` contains nothing this subgraph lacks.
    pub fn includes(&self, other: &Subgraph) -> bool {
        other.entities.keys().all(|e| self.entities.contains_key(e))
            && other.relations.is_subset(&self.relations)
            && other.triples.is_subset(&self.triples)
    }
}

/// One status string per sub-objective.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubObjectiveStatus {
    pub entries: Vec<String>,
}

pub const UNKNOWN_STATUS: &str = "unknown";

impl SubObjectiveStatus {
    pub fn unknown(n: usize) -> Self {
        Self {
            entries: vec![UNKNOWN_STATUS.to_string(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Prompt rendering: `{"1": "...", "2": "..."}` in sub-objective order.
    pub fn render(&self) -> String {
        let body: Vec<String> = self
            .entries
            .iter()
            .enumerate()
            .map(|(i, s)| format!("\"{}\": {}", i + 1, serde_json::Value::from(s.as_str())))
            .collect();
        format!("{{{}}}", body.join(", "))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Memory {
    pub subgraph: Subgraph,
    /// Known reasoning paths, suspended ones included.
    pub paths: Vec<ReasoningPath>,
    pub status: SubObjectiveStatus,
}

/// A retrieved entity that reflection may backtrack to, with the path that
/// reaches it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub label: String,
    pub via: ReasoningPath,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Frontier {
    pub iteration: u32,
    pub tail_entities: Vec<(EntityId, String)>,
    pub tail_relations: Vec<(RelationId, Direction)>,
    pub candidate_pool: BTreeMap<EntityId, PoolEntry>,
}

impl Frontier {
    pub fn has_tail(&self, entity: &EntityId) -> bool {
        self.tail_entities.iter().any(|(e, _)| e == entity)
    }

    pub fn tail_labels(&self) -> Vec<&str> {
        self.tail_entities.iter().map(|(_, l)| l.as_str()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_render_keeps_order_past_nine() {
        let mut s = SubObjectiveStatus::unknown(11);
        s.entries[9] = "ten \"quoted\"".into();
        let r = s.render();
        assert!(r.starts_with("{\"1\": \"unknown\", \"2\""));
        assert!(r.contains("\"10\": \"ten \\\"quoted\\\"\", \"11\""));
        let parsed: serde_json::Value = serde_json::from_str(&r).unwrap();
        assert_eq!(parsed.as_object().unwrap().len(), 11);
    }

    #[test]
    fn subgraph_inclusion() {
        let mut a = Subgraph::default();
        let b = Subgraph::default();
        assert!(a.includes(&b));
        a.entities.insert(EntityId::new("m.1").unwrap(), "x".into());
        assert!(a.includes(&b));
        assert!(!b.includes(&a));
        assert_eq!(a.label_of(&EntityId::new("m.2").unwrap()), "m.2");
    }
}
