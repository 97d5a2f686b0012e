//! Seed-targeted merging of two knowledge graphs.
//!
//! Each training alignment pair collapses into a single joint node, which
//! guarantees that both members end up in the same partition block later.
//! Everything downstream (partitioning, scoring, training) works on joint
//! node indices; the origin maps recover the original entities.

use std::collections::HashMap;

use crate::graph::{EntityId, KnowledgeGraph, RelationId};
use crate::{Error, Result};

/// Which original graph a joint triple came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Source,
    Target,
}

/// A triple of either original graph, endpoint-mapped to joint nodes.
/// Relation ids stay in their per-graph identifier space, tagged by `side`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct JointTriple {
    pub head: u32,
    pub relation: RelationId,
    pub tail: u32,
    pub side: Side,
}

/// Original entities behind a joint node. Seed nodes carry both.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Origin {
    pub source: Option<EntityId>,
    pub target: Option<EntityId>,
}

#[derive(Debug, Clone)]
pub struct MergedGraph {
    node_count: usize,
    origin: Vec<Origin>,
    forward_source: Vec<u32>,
    forward_target: Vec<u32>,
    triples: Vec<JointTriple>,
    /// Undirected unique-neighbor lists with edge multiplicity, sorted by
    /// neighbor index. Self-loops are excluded.
    adjacency: Vec<Vec<(u32, u32)>>,
    /// Joint nodes that are merged train pairs.
    seed_nodes: Vec<u32>,
}

impl MergedGraph {
    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn origin(&self, node: u32) -> Origin {
        self.origin[node as usize]
    }

    pub fn forward_source(&self, e: EntityId) -> u32 {
        self.forward_source[e.0 as usize]
    }

    pub fn forward_target(&self, e: EntityId) -> u32 {
        self.forward_target[e.0 as usize]
    }

    pub fn triples(&self) -> &[JointTriple] {
        &self.triples
    }

    /// Unique undirected neighbors with multiplicity.
    pub fn adjacency(&self, node: u32) -> &[(u32, u32)] {
        &self.adjacency[node as usize]
    }

    pub fn seed_nodes(&self) -> &[u32] {
        &self.seed_nodes
    }

    pub fn degree(&self, node: u32) -> usize {
        self.adjacency[node as usize].len()
    }
}

/// Collapse each train pair of `train` into one joint node and re-express
/// every triple of both graphs over joint nodes.
pub fn merge_graphs(
    g1: &KnowledgeGraph,
    g2: &KnowledgeGraph,
    train: &[(EntityId, EntityId)],
) -> Result<MergedGraph> {
    let mut seen_source = vec![false; g1.entity_count()];
    let mut seen_target = vec![false; g2.entity_count()];
    for &(e1, e2) in train {
        if e1.0 as usize >= g1.entity_count() || e2.0 as usize >= g2.entity_count() {
            return Err(Error::InvalidInput(format!(
                "train pair ({}, {}) references an unknown entity",
                e1.0, e2.0
            )));
        }
        if seen_source[e1.0 as usize] {
            return Err(Error::InvalidInput(format!(
                "source entity {} appears in two train pairs",
                e1.0
            )));
        }
        if seen_target[e2.0 as usize] {
            return Err(Error::InvalidInput(format!(
                "target entity {} appears in two train pairs",
                e2.0
            )));
        }
        seen_source[e1.0 as usize] = true;
        seen_target[e2.0 as usize] = true;
    }

    // Source entities keep their index as joint id; unseeded target
    // entities are appended densely after them.
    let forward_source: Vec<u32> = (0..g1.entity_count() as u32).collect();
    let mut forward_target = vec![u32::MAX; g2.entity_count()];
    let mut origin: Vec<Origin> = (0..g1.entity_count())
        .map(|i| Origin {
            source: Some(EntityId(i as u32)),
            target: None,
        })
        .collect();
    let mut seed_nodes = Vec::with_capacity(train.len());
    for &(e1, e2) in train {
        let node = forward_source[e1.0 as usize];
        forward_target[e2.0 as usize] = node;
        origin[node as usize].target = Some(e2);
        seed_nodes.push(node);
    }
    for i in 0..g2.entity_count() {
        if forward_target[i] == u32::MAX {
            let node = origin.len() as u32;
            forward_target[i] = node;
            origin.push(Origin {
                source: None,
                target: Some(EntityId(i as u32)),
            });
        }
    }
    let node_count = origin.len();
    debug_assert_eq!(
        node_count,
        g1.entity_count() + g2.entity_count() - train.len()
    );
    seed_nodes.sort_unstable();

    let mut triples = Vec::with_capacity(g1.triples().len() + g2.triples().len());
    for t in g1.triples() {
        triples.push(JointTriple {
            head: forward_source[t.head.0 as usize],
            relation: t.relation,
            tail: forward_source[t.tail.0 as usize],
            side: Side::Source,
        });
    }
    for t in g2.triples() {
        triples.push(JointTriple {
            head: forward_target[t.head.0 as usize],
            relation: t.relation,
            tail: forward_target[t.tail.0 as usize],
            side: Side::Target,
        });
    }

    // Union adjacency with summed multiplicity.
    let mut mult: Vec<HashMap<u32, u32>> = vec![HashMap::new(); node_count];
    for t in &triples {
        if t.head == t.tail {
            continue;
        }
        *mult[t.head as usize].entry(t.tail).or_insert(0) += 1;
        *mult[t.tail as usize].entry(t.head).or_insert(0) += 1;
    }
    let adjacency: Vec<Vec<(u32, u32)>> = mult
        .into_iter()
        .map(|m| {
            let mut v: Vec<(u32, u32)> = m.into_iter().collect();
            v.sort_unstable();
            v
        })
        .collect();

    let forward = MergedGraph {
        node_count,
        origin,
        forward_source,
        forward_target,
        triples,
        adjacency,
        seed_nodes,
    };
    Ok(forward)
}
