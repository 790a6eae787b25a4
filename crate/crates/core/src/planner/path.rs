use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{Direction, EntityId, RelationId, Triplet};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PathError {
    #[error("step starts at {found} but the path ends at {expected}")]
    Unlinked { expected: EntityId, found: EntityId },
    #[error("entity {0} already appears in the path")]
    Cycle(EntityId),
}

/// One hop: from the current tail, across `relation`, to the next entity.
/// `direction` says which way the underlying triple points.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PathStep {
    pub from: EntityId,
    pub relation: RelationId,
    pub to: EntityId,
    pub direction: Direction,
}

impl PathStep {
    /// The KG triple this hop traverses.
    pub fn triplet(&self) -> Triplet {
        match self.direction {
            Direction::Outgoing => {
                Triplet::new(self.from.clone(), self.relation.clone(), self.to.clone())
            }
            Direction::Incoming => {
                Triplet::new(self.to.clone(), self.relation.clone(), self.from.clone())
            }
        }
    }
}

/// Entity-relation chain grown from a topic entity, one hop per iteration.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ReasoningPath {
    pub origin: EntityId,
    pub steps: Vec<PathStep>,
}

impl ReasoningPath {
    pub fn new(origin: EntityId) -> Self {
        Self {
            origin,
            steps: Vec::new(),
        }
    }

    pub fn tail(&self) -> &EntityId {
        self.steps.last().map(|s| &s.to).unwrap_or(&self.origin)
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn entities(&self) -> impl Iterator<Item = &EntityId> {
        std::iter::once(&self.origin).chain(self.steps.iter().map(|s| &s.to))
    }

    pub fn contains(&self, entity: &EntityId) -> bool {
        self.entities().any(|e| e == entity)
    }

    /// A copy of this path with `step` appended; rejects unlinked hops and
    /// repeated entities.
    pub fn extended(&self, step: PathStep) -> Result<ReasoningPath, PathError> {
        if &step.from != self.tail() {
            return Err(PathError::Unlinked {
                expected: self.tail().clone(),
                found: step.from,
            });
        }
        if self.contains(&step.to) {
            return Err(PathError::Cycle(step.to));
        }
        let mut next = self.clone();
        next.steps.push(step);
        Ok(next)
    }

    pub fn is_prefix_of(&self, other: &ReasoningPath) -> bool {
        self.origin == other.origin
            && self.steps.len() <= other.steps.len()
            && other.steps[..self.steps.len()] == self.steps[..]
    }

    /// Linkage, acyclicity and the depth bound.
    pub fn is_well_formed(&self, max_depth: usize) -> bool {
        if self.steps.len() > max_depth {
            return false;
        }
        let mut prev = &self.origin;
        for step in &self.steps {
            if &step.from != prev {
                return false;
            }
            prev = &step.to;
        }
        let mut seen: Vec<&EntityId> = self.entities().collect();
        seen.sort();
        seen.windows(2).all(|w| w[0] != w[1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(s: &str) -> EntityId {
        EntityId::new(s).unwrap()
    }

    fn step(a: &str, r: &str, b: &str, d: Direction) -> PathStep {
        PathStep {
            from: e(a),
            relation: RelationId::new(r).unwrap(),
            to: e(b),
            direction: d,
        }
    }

    #[test]
    fn extension_checks_linkage_and_cycles() {
        let p = ReasoningPath::new(e("a"));
        let p = p
            .extended(step("a", "r", "b", Direction::Outgoing))
            .unwrap();
        assert_eq!(p.tail(), &e("b"));
        assert!(matches!(
            p.extended(step("a", "r", "c", Direction::Outgoing)),
            Err(PathError::Unlinked { .. })
        ));
        assert!(matches!(
            p.extended(step("b", "r", "a", Direction::Incoming)),
            Err(PathError::Cycle(_))
        ));
        assert!(p.is_well_formed(4));
        assert!(!p.is_well_formed(0));
    }

    #[test]
    fn incoming_step_orients_triple() {
        let s = step("e", "r", "a", Direction::Incoming);
        let t = s.triplet();
        assert_eq!(t.subject, e("a"));
        assert_eq!(t.object, e("e"));
    }

    #[test]
    fn prefixes() {
        let root = ReasoningPath::new(e("a"));
        let p = root
            .extended(step("a", "r", "b", Direction::Outgoing))
            .unwrap();
        assert!(root.is_prefix_of(&p));
        assert!(!p.is_prefix_of(&root));
    }

    #[test]
    fn malformed_paths_are_detected() {
        let bad = ReasoningPath {
            origin: e("a"),
            steps: vec![
                step("a", "r", "b", Direction::Outgoing),
                step("b", "r", "a", Direction::Outgoing),
            ],
        };
        assert!(!bad.is_well_formed(4));
        let unlinked = ReasoningPath {
            origin: e("a"),
            steps: vec![step("x", "r", "b", Direction::Outgoing)],
        };
        assert!(!unlinked.is_well_formed(4));
    }
}
