use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use super::{
    strip_namespace, Direction, EntityId, EntityLabel, KgError, KnowledgeGraph, RelationId,
    Triplet, NAME_RELATION, SAME_AS_IRI,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TripleFormat {
    /// `subject<TAB>relation<TAB>object`, one triple per line.
    Tsv,
    /// N-Triples restricted to Freebase IRIs and plain/typed literals.
    NTriples,
}

impl FromStr for TripleFormat {
    type Err = KgError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "tsv" | "tab-separated" => Ok(TripleFormat::Tsv),
            "nt" | "ntriples" | "ntriples-subset" | "n-triples" => Ok(TripleFormat::NTriples),
            other => Err(KgError::UnsupportedFormat(other.to_string())),
        }
    }
}

type Index = BTreeMap<EntityId, BTreeMap<RelationId, BTreeSet<EntityId>>>;

/// In-memory triple store with subject and object indexes.
///
/// Name (`type.object.name`) and alias (`owl#sameAs`) facts are kept in a
/// separate label table: they feed [`KnowledgeGraph::resolve_label`] and are
/// not returned by relation or entity search.
#[derive(Debug, Default, Clone)]
pub struct TripleStore {
    outgoing: Index,
    incoming: Index,
    names: BTreeMap<EntityId, String>,
    aliases: BTreeMap<EntityId, String>,
    len: usize,
}

pub(crate) fn is_label_relation(relation: &str) -> bool {
    relation == NAME_RELATION
        || relation == SAME_AS_IRI
        || relation == "owl:sameAs"
        || relation == "owl#sameAs"
}

impl TripleStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_triples(triples: impl IntoIterator<Item = Triplet>) -> Self {
        let mut store = Self::new();
        for t in triples {
            store.insert(t);
        }
        store
    }

    /// Load a triple file, replacing the current contents. Returns the
    /// number of triples read.
    pub fn load_triples(&mut self, path: &Path, format: TripleFormat) -> Result<usize, KgError> {
        let text = fs::read_to_string(path)?;
        self.load_str(&text, format)
    }

    pub fn load_str(&mut self, text: &str, format: TripleFormat) -> Result<usize, KgError> {
        let mut fresh = TripleStore::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let lineno = idx + 1;
            let triple = match format {
                TripleFormat::Tsv => parse_tsv_line(line),
                TripleFormat::NTriples => parse_ntriples_line(line),
            }
            .map_err(|reason| KgError::Malformed {
                line: lineno,
                reason,
            })?;
            fresh.insert(triple);
        }
        *self = fresh;
        Ok(self.len)
    }

    pub fn insert(&mut self, triple: Triplet) {
        self.len += 1;
        let Triplet {
            subject,
            relation,
            object,
        } = triple;
        if relation.as_str() == NAME_RELATION {
            self.names.entry(subject).or_insert_with(|| object.0);
            return;
        }
        if is_label_relation(relation.as_str()) {
            self.aliases.entry(subject).or_insert_with(|| object.0);
            return;
        }
        self.outgoing
            .entry(subject.clone())
            .or_default()
            .entry(relation.clone())
            .or_default()
            .insert(object.clone());
        self.incoming
            .entry(object)
            .or_default()
            .entry(relation)
            .or_default()
            .insert(subject);
    }

    /// Number of triples inserted, label facts included.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// All non-label triples in (subject, relation, object) order.
    pub fn triples(&self) -> impl Iterator<Item = Triplet> + '_ {
        self.outgoing.iter().flat_map(|(s, rels)| {
            rels.iter().flat_map(move |(r, objs)| {
                objs.iter()
                    .map(move |o| Triplet::new(s.clone(), r.clone(), o.clone()))
            })
        })
    }

    fn index(&self, direction: Direction) -> &Index {
        match direction {
            Direction::Outgoing => &self.outgoing,
            Direction::Incoming => &self.incoming,
        }
    }
}

impl KnowledgeGraph for TripleStore {
    fn search_relations(
        &self,
        entity: &EntityId,
        direction: Direction,
    ) -> Result<Vec<RelationId>, KgError> {
        Ok(self
            .index(direction)
            .get(entity)
            .map(|rels| rels.keys().cloned().collect())
            .unwrap_or_default())
    }

    fn search_entities(
        &self,
        entity: &EntityId,
        relation: &RelationId,
        direction: Direction,
    ) -> Result<Vec<EntityId>, KgError> {
        Ok(self
            .index(direction)
            .get(entity)
            .and_then(|rels| rels.get(relation))
            .map(|objs| objs.iter().cloned().collect())
            .unwrap_or_default())
    }

    fn resolve_label(&self, entity: &EntityId) -> Result<EntityLabel, KgError> {
        let label = self
            .names
            .get(entity)
            .or_else(|| self.aliases.get(entity))
            .cloned();
        Ok(match label {
            Some(label) => EntityLabel {
                entity: entity.clone(),
                label,
            },
            None => EntityLabel::fallback(entity),
        })
    }
}

fn parse_tsv_line(line: &str) -> Result<Triplet, String> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 3 {
        return Err(format!(
            "expected 3 tab-separated fields, found {}",
            fields.len()
        ));
    }
    let subject = EntityId::new(fields[0].trim()).map_err(|e| e.to_string())?;
    let relation = RelationId::new(fields[1].trim()).map_err(|e| e.to_string())?;
    let object = EntityId::new(fields[2].trim()).map_err(|e| e.to_string())?;
    Ok(Triplet::new(subject, relation, object))
}

fn parse_ntriples_line(line: &str) -> Result<Triplet, String> {
    let body = line
        .trim()
        .strip_suffix('.')
        .ok_or_else(|| "missing terminating '.'".to_string())?
        .trim_end();
    let (subject, rest) = take_iri(body)?;
    let (relation, rest) = take_iri(rest.trim_start())?;
    let object = parse_object(rest.trim())?;
    let relation = if relation == SAME_AS_IRI {
        relation.to_string()
    } else {
        strip_namespace(relation).to_string()
    };
    Ok(Triplet::new(
        EntityId::new(strip_namespace(subject)).map_err(|e| e.to_string())?,
        RelationId::new(relation).map_err(|e| e.to_string())?,
        EntityId::new(object).map_err(|e| e.to_string())?,
    ))
}

fn take_iri(s: &str) -> Result<(&str, &str), String> {
    let inner = s
        .strip_prefix('<')
        .ok_or_else(|| format!("expected an IRI, found {:?}", truncate(s)))?;
    let end = inner
        .find('>')
        .ok_or_else(|| "unterminated IRI".to_string())?;
    Ok((&inner[..end], &inner[end + 1..]))
}

fn parse_object(s: &str) -> Result<String, String> {
    if s.starts_with('<') {
        let (iri, rest) = take_iri(s)?;
        if !rest.trim().is_empty() {
            return Err("trailing content after object".to_string());
        }
        return Ok(strip_namespace(iri).to_string());
    }
    let inner = s
        .strip_prefix('"')
        .ok_or_else(|| format!("expected IRI or literal object, found {:?}", truncate(s)))?;
    let mut out = String::new();
    let mut chars = inner.chars();
    loop {
        match chars.next() {
            None => return Err("unterminated literal".to_string()),
            Some('"') => break,
            Some('\\') => match chars.next() {
                Some('n') => out.push('\n'),
                Some('t') => out.push('\t'),
                Some('r') => out.push('\r'),
                Some(c) => out.push(c),
                None => return Err("unterminated escape".to_string()),
            },
            Some(c) => out.push(c),
        }
    }
    // Language tags and datatypes after the closing quote are dropped.
    let suffix = chars.as_str().trim();
    if !(suffix.is_empty() || suffix.starts_with('@') || suffix.starts_with("^^")) {
        return Err(format!("unexpected literal suffix {:?}", truncate(suffix)));
    }
    Ok(out)
}

fn truncate(s: &str) -> String {
    s.chars().take(40).collect()
}
