//! Knowledge-graph access.
//!
//! Two interchangeable backends sit behind [`KnowledgeGraph`]: the in-memory
//! [`TripleStore`] loaded from triple files, and [`SparqlClient`], which talks
//! to a remote SPARQL endpoint using the fixed query shapes in [`sparql`].

mod remote;
pub mod sparql;
mod store;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use remote::SparqlClient;
pub use sparql::{render_sparql, SparqlTemplate};
pub use store::{TripleFormat, TripleStore};

/// Predicate carrying an entity's human-readable name.
pub const NAME_RELATION: &str = "type.object.name";
/// Full IRI of the alias predicate consulted after names.
pub const SAME_AS_IRI: &str = "http://www.w3.org/2002/07/owl#sameAs";
/// Namespace stripped from every Freebase IRI.
pub const FREEBASE_NS: &str = "http://rdf.freebase.com/ns/";

#[derive(Debug, Error)]
pub enum KgError {
    #[error("invalid entity id {0:?}")]
    InvalidEntity(String),
    #[error("invalid relation id {0:?}")]
    InvalidRelation(String),
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("unsupported triple format {0:?} (expected `tsv` or `ntriples`)")]
    UnsupportedFormat(String),
    #[error("template {template} needs a `{binding}` binding")]
    MissingBinding {
        template: &'static str,
        binding: &'static str,
    },
    #[error("SPARQL endpoint unreachable: {0}")]
    Unreachable(String),
    #[error("unexpected SPARQL response: {0}")]
    Response(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Node identifier. Freebase mids (`m.` / `g.` prefixed) name entities;
/// any other value is a literal object such as a date or a number.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct EntityId(String);

impl EntityId {
    pub fn new(id: impl Into<String>) -> Result<Self, KgError> {
        let id = id.into();
        if id.trim().is_empty() {
            return Err(KgError::InvalidEntity(id));
        }
        Ok(Self(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// True for machine identifiers, false for literals.
    pub fn is_mid(&self) -> bool {
        is_mid(&self.0)
    }
}

pub(crate) fn is_mid(value: &str) -> bool {
    (value.starts_with("m.") || value.starts_with("g.")) && value.len() > 2
}

impl TryFrom<String> for EntityId {
    type Error = KgError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<EntityId> for String {
    fn from(value: EntityId) -> Self {
        value.0
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Dotted relation name, e.g. `government.government_office_or_title.office_holders`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct RelationId(String);

impl RelationId {
    pub fn new(id: impl Into<String>) -> Result<Self, KgError> {
        let id = id.into();
        if id.is_empty() || id.chars().any(char::is_whitespace) {
            return Err(KgError::InvalidRelation(id));
        }
        Ok(Self(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for RelationId {
    type Error = KgError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<RelationId> for String {
    fn from(value: RelationId) -> Self {
        value.0
    }
}

impl fmt::Display for RelationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Which end of a triple the queried entity occupies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// `(entity, relation, ?)`
    Outgoing,
    /// `(?, relation, entity)`
    Incoming,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::Outgoing, Direction::Incoming];

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Outgoing => "outgoing",
            Direction::Incoming => "incoming",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triplet {
    pub subject: EntityId,
    pub relation: RelationId,
    pub object: EntityId,
}

impl Triplet {
    pub fn new(subject: EntityId, relation: RelationId, object: EntityId) -> Self {
        Self {
            subject,
            relation,
            object,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityLabel {
    pub entity: EntityId,
    pub label: String,
}

impl EntityLabel {
    /// Label used when no name is known: the raw identifier.
    pub fn fallback(entity: &EntityId) -> Self {
        Self {
            entity: entity.clone(),
            label: entity.as_str().to_string(),
        }
    }
}

/// Read-only query surface shared by every backend.
///
/// Results are deduplicated and sorted ascending so that identical stores
/// answer identical queries identically.
pub trait KnowledgeGraph: Send + Sync {
    fn search_relations(
        &self,
        entity: &EntityId,
        direction: Direction,
    ) -> Result<Vec<RelationId>, KgError>;

    fn search_entities(
        &self,
        entity: &EntityId,
        relation: &RelationId,
        direction: Direction,
    ) -> Result<Vec<EntityId>, KgError>;

    fn resolve_label(&self, entity: &EntityId) -> Result<EntityLabel, KgError>;
}

/// Strip the Freebase namespace from an IRI, leaving other values alone.
pub(crate) fn strip_namespace(value: &str) -> &str {
    value.strip_prefix(FREEBASE_NS).unwrap_or(value)
}
