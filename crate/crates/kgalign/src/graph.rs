//! Knowledge-graph data model.
//!
//! A graph is a set of entities, a set of relations and a set of directed
//! triples, all with dense integer identifiers. Labels are opaque byte
//! strings; nothing in the crate ever inspects them for similarity.

use std::collections::{BTreeSet, HashMap, HashSet};

use crate::{Error, Result};

/// Dense entity identifier, contiguous in `0..entity_count`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntityId(pub u32);

/// Dense relation identifier, contiguous in `0..relation_count`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelationId(pub u32);

/// A directed fact `(head, relation, tail)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

/// Direction of an adjacency entry relative to the owning entity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Out,
    In,
}

/// One adjacency entry: a neighbor reached through `relation`, either as the
/// tail of an outgoing triple or the head of an incoming one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AdjEntry {
    pub neighbor: EntityId,
    pub relation: RelationId,
    pub direction: Direction,
}

/// An in-memory multi-relational graph with label maps and adjacency lists.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    entity_labels: Vec<String>,
    entity_ids: HashMap<String, EntityId>,
    relation_labels: Vec<String>,
    relation_ids: HashMap<String, RelationId>,
    triples: Vec<Triple>,
    adjacency: Vec<Vec<AdjEntry>>,
    /// Duplicate triple lines dropped during construction.
    pub duplicates_dropped: usize,
}

impl KnowledgeGraph {
    pub fn entity_count(&self) -> usize {
        self.entity_labels.len()
    }

    pub fn relation_count(&self) -> usize {
        self.relation_labels.len()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn entity_label(&self, e: EntityId) -> &str {
        &self.entity_labels[e.0 as usize]
    }

    pub fn relation_label(&self, r: RelationId) -> &str {
        &self.relation_labels[r.0 as usize]
    }

    pub fn entity_id(&self, label: &str) -> Option<EntityId> {
        self.entity_ids.get(label).copied()
    }

    pub fn relation_id(&self, label: &str) -> Option<RelationId> {
        self.relation_ids.get(label).copied()
    }

    pub fn adjacency(&self, e: EntityId) -> &[AdjEntry] {
        &self.adjacency[e.0 as usize]
    }

    /// Undirected neighbor set of `e`. Contains `e` itself only if a
    /// self-loop triple exists.
    pub fn neighbors(&self, e: EntityId) -> Result<BTreeSet<EntityId>> {
        if e.0 as usize >= self.entity_count() {
            return Err(Error::InvalidInput(format!(
                "entity id {} out of range (graph has {} entities)",
                e.0,
                self.entity_count()
            )));
        }
        Ok(self.adjacency[e.0 as usize]
            .iter()
            .map(|a| a.neighbor)
            .collect())
    }

    /// An entity with no incident triples can never be aligned by structure.
    pub fn is_isolated(&self, e: EntityId) -> bool {
        self.adjacency[e.0 as usize].is_empty()
    }
}

/// Incremental construction; assigns dense ids in order of first appearance.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    entity_labels: Vec<String>,
    entity_ids: HashMap<String, EntityId>,
    relation_labels: Vec<String>,
    relation_ids: HashMap<String, RelationId>,
    triples: Vec<Triple>,
    seen: HashSet<Triple>,
    duplicates: usize,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entity(&mut self, label: &str) -> EntityId {
        if let Some(&id) = self.entity_ids.get(label) {
            return id;
        }
        let id = EntityId(self.entity_labels.len() as u32);
        self.entity_labels.push(label.to_owned());
        self.entity_ids.insert(label.to_owned(), id);
        id
    }

    pub fn relation(&mut self, label: &str) -> RelationId {
        if let Some(&id) = self.relation_ids.get(label) {
            return id;
        }
        let id = RelationId(self.relation_labels.len() as u32);
        self.relation_labels.push(label.to_owned());
        self.relation_ids.insert(label.to_owned(), id);
        id
    }

    /// Add one triple by label; duplicates are dropped and counted.
    pub fn triple(&mut self, head: &str, relation: &str, tail: &str) {
        let t = Triple {
            head: self.entity(head),
            relation: self.relation(relation),
            tail: self.entity(tail),
        };
        self.triple_by_id(t);
    }

    pub fn triple_by_id(&mut self, t: Triple) {
        if self.seen.insert(t) {
            self.triples.push(t);
        } else {
            self.duplicates += 1;
        }
    }

    pub fn build(self) -> KnowledgeGraph {
        let mut adjacency = vec![Vec::new(); self.entity_labels.len()];
        for t in &self.triples {
            adjacency[t.head.0 as usize].push(AdjEntry {
                neighbor: t.tail,
                relation: t.relation,
                direction: Direction::Out,
            });
            adjacency[t.tail.0 as usize].push(AdjEntry {
                neighbor: t.head,
                relation: t.relation,
                direction: Direction::In,
            });
        }
        KnowledgeGraph {
            entity_labels: self.entity_labels,
            entity_ids: self.entity_ids,
            relation_labels: self.relation_labels,
            relation_ids: self.relation_ids,
            triples: self.triples,
            adjacency,
            duplicates_dropped: self.duplicates,
        }
    }
}

/// Gold alignment links split into disjoint train/valid/test sets.
///
/// Within each set the mapping is one-to-one: a source entity appears in at
/// most one pair and so does a target entity.
#[derive(Debug, Clone, Default)]
pub struct AlignmentSet {
    pub train: Vec<(EntityId, EntityId)>,
    pub valid: Vec<(EntityId, EntityId)>,
    pub test: Vec<(EntityId, EntityId)>,
}

impl AlignmentSet {
    pub fn total(&self) -> usize {
        self.train.len() + self.valid.len() + self.test.len()
    }

    /// Check the one-to-one and disjointness invariants.
    pub fn validate(&self) -> Result<()> {
        let mut sources = HashSet::new();
        let mut targets = HashSet::new();
        for (name, set) in [
            ("train", &self.train),
            ("valid", &self.valid),
            ("test", &self.test),
        ] {
            let mut set_sources = HashSet::new();
            let mut set_targets = HashSet::new();
            for &(s, t) in set {
                if !set_sources.insert(s) {
                    return Err(Error::InvalidInput(format!(
                        "source entity {} appears twice in the {name} set",
                        s.0
                    )));
                }
                if !set_targets.insert(t) {
                    return Err(Error::InvalidInput(format!(
                        "target entity {} appears twice in the {name} set",
                        t.0
                    )));
                }
            }
            for &(s, t) in set {
                if !sources.insert((s, t)) || !targets.insert((t, s)) {
                    return Err(Error::InvalidInput(format!(
                        "pair ({}, {}) appears in more than one split",
                        s.0, t.0
                    )));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> KnowledgeGraph {
        let mut b = GraphBuilder::new();
        b.triple("a", "r", "b");
        b.triple("b", "r", "c");
        b.triple("c", "s", "a");
        b.build()
    }

    #[test]
    fn single_triple_neighbors() {
        let mut b = GraphBuilder::new();
        b.triple("a", "r", "b");
        let g = b.build();
        let a = g.entity_id("a").unwrap();
        let bb = g.entity_id("b").unwrap();
        assert_eq!(g.neighbors(a).unwrap(), BTreeSet::from([bb]));
    }

    #[test]
    fn triangle_neighbors_ignore_direction() {
        let g = toy();
        let a = g.entity_id("a").unwrap();
        let n = g.neighbors(a).unwrap();
        assert_eq!(n.len(), 2);
        assert!(n.contains(&g.entity_id("b").unwrap()));
        assert!(n.contains(&g.entity_id("c").unwrap()));
    }

    #[test]
    fn isolated_entity_has_empty_neighbors() {
        let mut b = GraphBuilder::new();
        b.triple("a", "r", "b");
        let lone = b.entity("lone");
        let g = b.build();
        assert!(g.neighbors(lone).unwrap().is_empty());
        assert!(g.is_isolated(lone));
    }

    #[test]
    fn invalid_id_rejected() {
        let g = toy();
        assert!(g.neighbors(EntityId(99)).is_err());
    }

    #[test]
    fn duplicates_are_dropped_and_counted() {
        let mut b = GraphBuilder::new();
        b.triple("a", "r", "b");
        b.triple("a", "r", "b");
        b.triple("a", "r", "c");
        let g = b.build();
        assert_eq!(g.triples().len(), 2);
        assert_eq!(g.duplicates_dropped, 1);
    }

    #[test]
    fn label_id_maps_are_inverse_bijections() {
        let g = toy();
        for i in 0..g.entity_count() {
            let id = EntityId(i as u32);
            assert_eq!(g.entity_id(g.entity_label(id)), Some(id));
        }
        for i in 0..g.relation_count() {
            let id = RelationId(i as u32);
            assert_eq!(g.relation_id(g.relation_label(id)), Some(id));
        }
    }

    #[test]
    fn self_loop_appears_in_neighbors() {
        let mut b = GraphBuilder::new();
        b.triple("a", "r", "a");
        let g = b.build();
        let a = g.entity_id("a").unwrap();
        assert!(g.neighbors(a).unwrap().contains(&a));
    }

    #[test]
    fn alignment_validation_catches_duplicate_source() {
        let set = AlignmentSet {
            train: vec![(EntityId(0), EntityId(0)), (EntityId(0), EntityId(1))],
            ..Default::default()
        };
        assert!(set.validate().is_err());
    }
}
