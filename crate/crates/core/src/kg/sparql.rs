//! The five fixed SPARQL query shapes used against Freebase.

use super::{EntityId, KgError, RelationId};

const RELATION_OUT: &str = "PREFIX ns: <http://rdf.freebase.com/ns/>
SELECT DISTINCT ?relation
WHERE {
  ns:{mid} ?relation ?x .
}";

const RELATION_IN: &str = "PREFIX ns: <http://rdf.freebase.com/ns/>
SELECT DISTINCT ?relation
WHERE {
  ?x ?relation ns:{mid} .
}";

const ENTITY_OUT: &str = "PREFIX ns: <http://rdf.freebase.com/ns/>
SELECT ?tailEntity
WHERE {
  ns:{mid} ns:{relation} ?tailEntity .
}";

const ENTITY_IN: &str = "PREFIX ns: <http://rdf.freebase.com/ns/>
SELECT ?tailEntity
WHERE {
  ?tailEntity ns:{relation} ns:{mid} .
}";

const NAME: &str = "PREFIX ns: <http://rdf.freebase.com/ns/>
SELECT DISTINCT ?tailEntity
WHERE {
  {
    ?entity ns:type.object.name ?tailEntity .
    FILTER(?entity = ns:{mid})
  }
  UNION
  {
    ?entity <http://www.w3.org/2002/07/owl#sameAs> ?tailEntity .
    FILTER(?entity = ns:{mid})
  }
}";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SparqlTemplate {
    RelationOut,
    RelationIn,
    EntityOut,
    EntityIn,
    Name,
}

impl SparqlTemplate {
    pub const ALL: [SparqlTemplate; 5] = [
        SparqlTemplate::RelationOut,
        SparqlTemplate::RelationIn,
        SparqlTemplate::EntityOut,
        SparqlTemplate::EntityIn,
        SparqlTemplate::Name,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SparqlTemplate::RelationOut => "relation-out",
            SparqlTemplate::RelationIn => "relation-in",
            SparqlTemplate::EntityOut => "entity-out",
            SparqlTemplate::EntityIn => "entity-in",
            SparqlTemplate::Name => "name",
        }
    }

    fn text(self) -> &'static str {
        match self {
            SparqlTemplate::RelationOut => RELATION_OUT,
            SparqlTemplate::RelationIn => RELATION_IN,
            SparqlTemplate::EntityOut => ENTITY_OUT,
            SparqlTemplate::EntityIn => ENTITY_IN,
            SparqlTemplate::Name => NAME,
        }
    }

    fn needs_relation(self) -> bool {
        matches!(self, SparqlTemplate::EntityOut | SparqlTemplate::EntityIn)
    }

    /// Result variable bound in the SELECT clause.
    pub fn variable(self) -> &'static str {
        match self {
            SparqlTemplate::RelationOut | SparqlTemplate::RelationIn => "relation",
            _ => "tailEntity",
        }
    }
}

/// Fill a template. Only the `mid` and `relation` placeholders change; the
/// rest of the query text is emitted verbatim.
pub fn render_sparql(
    template: SparqlTemplate,
    mid: Option<&EntityId>,
    relation: Option<&RelationId>,
) -> Result<String, KgError> {
    let mid = mid.ok_or(KgError::MissingBinding {
        template: template.name(),
        binding: "mid",
    })?;
    let mut query = template.text().replace("{mid}", mid.as_str());
    if template.needs_relation() {
        let relation = relation.ok_or(KgError::MissingBinding {
            template: template.name(),
            binding: "relation",
        })?;
        query = query.replace("{relation}", relation.as_str());
    }
    Ok(query)
}
