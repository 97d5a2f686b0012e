//! Partition blocks as training units.
//!
//! A subgraph is one block's core nodes plus the landmark nodes recalled
//! from outside it, together with every joint triple whose endpoints both
//! fall inside that union. Cross-block triples are the structure loss the
//! landmarks later mitigate.

use std::collections::HashSet;

use crate::merge::{JointTriple, MergedGraph};
use crate::partition::Partition;

#[derive(Debug, Clone)]
pub struct Subgraph {
    /// Block index this subgraph was induced from.
    pub block: usize,
    /// Joint nodes assigned to the block, sorted.
    pub core_nodes: Vec<u32>,
    /// Joint nodes recalled from outside, sorted; disjoint from the core.
    pub landmark_nodes: Vec<u32>,
    /// Joint triples induced on `core ∪ landmarks`.
    pub triples: Vec<JointTriple>,
}

impl Subgraph {
    /// All member nodes: core then landmarks, each sorted.
    pub fn nodes(&self) -> impl Iterator<Item = u32> + '_ {
        self.core_nodes
            .iter()
            .copied()
            .chain(self.landmark_nodes.iter().copied())
    }

    pub fn node_count(&self) -> usize {
        self.core_nodes.len() + self.landmark_nodes.len()
    }

    pub fn contains(&self, node: u32) -> bool {
        self.core_nodes.binary_search(&node).is_ok()
            || self.landmark_nodes.binary_search(&node).is_ok()
    }
}

/// Collect the triples of `m` whose endpoints are both in `members`.
pub fn induce_triples(m: &MergedGraph, members: &HashSet<u32>) -> Vec<JointTriple> {
    m.triples()
        .iter()
        .filter(|t| members.contains(&t.head) && members.contains(&t.tail))
        .copied()
        .collect()
}

/// Split the merged graph along a partition into subgraphs with empty
/// landmark sets.
pub fn induce_subgraphs(p: &Partition, m: &MergedGraph) -> Vec<Subgraph> {
    let mut cores: Vec<Vec<u32>> = vec![Vec::new(); p.n_blocks];
    for (v, &b) in p.assignment.iter().enumerate() {
        cores[b as usize].push(v as u32);
    }
    let mut subgraphs: Vec<Subgraph> = cores
        .into_iter()
        .enumerate()
        .map(|(block, core_nodes)| Subgraph {
            block,
            core_nodes,
            landmark_nodes: Vec::new(),
            triples: Vec::new(),
        })
        .collect();
    // One scan of the triple list assigns each triple to the block that
    // owns both endpoints, if any.
    for t in m.triples() {
        let bh = p.assignment[t.head as usize];
        let bt = p.assignment[t.tail as usize];
        if bh == bt {
            subgraphs[bh as usize].triples.push(*t);
        }
    }
    subgraphs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphBuilder;
    use crate::merge::merge_graphs;
    use crate::partition::partition;

    fn merged_path(n: usize) -> MergedGraph {
        let mut b = GraphBuilder::new();
        for i in 0..n - 1 {
            b.triple(&format!("v{i}"), "r", &format!("v{}", i + 1));
        }
        let g1 = b.build();
        let g2 = {
            let mut b = GraphBuilder::new();
            b.triple("x", "p", "y");
            b.build()
        };
        merge_graphs(&g1, &g2, &[]).unwrap()
    }

    #[test]
    fn single_block_holds_every_triple() {
        let m = merged_path(6);
        let p = partition(&m, 1, 0.05, 1).unwrap();
        let subs = induce_subgraphs(&p, &m);
        assert_eq!(subs.len(), 1);
        assert_eq!(subs[0].triples.len(), m.triples().len());
        assert!(subs[0].landmark_nodes.is_empty());
    }

    #[test]
    fn cut_triples_are_excluded() {
        // A 10-node path plus the disjoint x-p-y edge; with two blocks the
        // induced triple total is the full count minus the cut.
        let m = merged_path(10);
        let p = partition(&m, 2, 0.05, 3).unwrap();
        let subs = induce_subgraphs(&p, &m);
        let induced: usize = subs.iter().map(|s| s.triples.len()).sum();
        assert_eq!(induced as u64, m.triples().len() as u64 - p.cut_edges);
        for s in &subs {
            for t in &s.triples {
                assert!(s.core_nodes.binary_search(&t.head).is_ok());
                assert!(s.core_nodes.binary_search(&t.tail).is_ok());
            }
        }
    }

    #[test]
    fn perfect_component_split_loses_nothing() {
        let m = merged_path(10);
        // 12 joint nodes: path of 10 plus the x-y component.
        let p = partition(&m, 2, 0.2, 1).unwrap();
        let subs = induce_subgraphs(&p, &m);
        let total: usize = subs.iter().map(|s| s.triples.len()).sum();
        assert_eq!(total as u64 + p.cut_edges, m.triples().len() as u64);
    }
}
