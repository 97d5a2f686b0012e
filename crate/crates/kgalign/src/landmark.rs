//! Centrality scoring and landmark recall.
//!
//! Importance spreads outward from the merged seed nodes by BFS and decays
//! with hop distance; influence sums the importance of a node's neighbors;
//! the benefit of recalling a candidate into a subgraph discounts its
//! influence by its hop distance from the subgraph. Selection ranks the
//! two-hop candidate set by benefit and admits candidates greedily while
//! keeping every admitted landmark connected to the subgraph.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::merge::MergedGraph;
use crate::partition::Partition;
use crate::subgraph::{induce_subgraphs, induce_triples, Subgraph};
use crate::{Error, Result};

/// Importance and influence scores over joint nodes.
#[derive(Debug, Clone)]
pub struct ScoreTable {
    pub importance: Vec<f64>,
    pub influence: Vec<f64>,
    pub eta: f64,
    pub labeling_floor: f64,
}

impl ScoreTable {
    pub fn new(node_count: usize, eta: f64, labeling_floor: f64) -> Self {
        ScoreTable {
            importance: vec![0.0; node_count],
            influence: vec![0.0; node_count],
            eta,
            labeling_floor,
        }
    }
}

/// Label importance by multi-source BFS from the seed nodes.
///
/// A node at hop `d` gets `1 / (eta + d)`; expansion stops once that value
/// falls below `floor`, and unlabeled nodes stay at zero.
pub fn label_importance(
    m: &MergedGraph,
    seeds: &[u32],
    eta: f64,
    floor: f64,
) -> Result<ScoreTable> {
    if eta <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "smoothing factor must be positive, got {eta}"
        )));
    }
    if floor < 0.0 {
        return Err(Error::InvalidInput(format!(
            "labeling floor must be non-negative, got {floor}"
        )));
    }
    let mut scores = ScoreTable::new(m.node_count(), eta, floor);
    if seeds.is_empty() {
        log::warn!("importance labeling with an empty seed set: all scores are zero");
        return Ok(scores);
    }
    // Deepest hop still worth labeling: 1/(eta + d) >= floor.
    let max_hop: u32 = if floor <= 0.0 {
        u32::MAX
    } else {
        let bound = 1.0 / floor - eta;
        if bound < 0.0 {
            0
        } else {
            bound.floor().min(u32::MAX as f64) as u32
        }
    };
    let mut dist = vec![u32::MAX; m.node_count()];
    let mut queue = VecDeque::new();
    for &s in seeds {
        if dist[s as usize] == u32::MAX {
            dist[s as usize] = 0;
            queue.push_back(s);
        }
    }
    while let Some(v) = queue.pop_front() {
        let d = dist[v as usize];
        scores.importance[v as usize] = 1.0 / (eta + d as f64);
        if d >= max_hop {
            continue;
        }
        for &(u, _) in m.adjacency(v) {
            if dist[u as usize] == u32::MAX {
                dist[u as usize] = d + 1;
                queue.push_back(u);
            }
        }
    }
    Ok(scores)
}

/// Fill the influence column: the sum of neighbor importances.
pub fn label_influence(m: &MergedGraph, scores: &mut ScoreTable) {
    for v in 0..m.node_count() {
        scores.influence[v] = m
            .adjacency(v as u32)
            .iter()
            .map(|&(u, _)| scores.importance[u as usize])
            .sum();
    }
}

/// A node outside a subgraph within two hops of it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub node: u32,
    /// Exact hop distance to the subgraph core: 1 or 2.
    pub hop: u8,
    /// For hop-2 candidates: the hop-1 candidate neighbor with the highest
    /// benefit, i.e. the bridge that keeps the landmark connected.
    pub max_nei: Option<u32>,
}

/// Benefit of recalling `node`: influence discounted by hop distance.
pub fn benefit(influence: f64, hop: u8, lambda: f64) -> f64 {
    influence * lambda.powi(hop as i32)
}

/// Enumerate the two-hop candidate set of a subgraph core.
///
/// Each hop-2 candidate carries its best hop-1 bridge under the benefit
/// ranking (ties broken by ascending node index).
pub fn candidate_set(
    s: &Subgraph,
    m: &MergedGraph,
    scores: &ScoreTable,
    lambda: f64,
) -> Vec<Candidate> {
    let core: HashSet<u32> = s.core_nodes.iter().copied().collect();
    // Hop-1 frontier.
    let mut hop1: Vec<u32> = Vec::new();
    let mut seen: HashMap<u32, u8> = HashMap::new();
    for &v in &s.core_nodes {
        for &(u, _) in m.adjacency(v) {
            if !core.contains(&u) && !seen.contains_key(&u) {
                seen.insert(u, 1);
                hop1.push(u);
            }
        }
    }
    // Hop-2 frontier, reached only through hop-1 candidates.
    let mut hop2: Vec<u32> = Vec::new();
    for &v in &hop1 {
        for &(u, _) in m.adjacency(v) {
            if !core.contains(&u) && !seen.contains_key(&u) {
                seen.insert(u, 2);
                hop2.push(u);
            }
        }
    }
    hop1.sort_unstable();
    hop2.sort_unstable();

    let mut out: Vec<Candidate> = hop1
        .iter()
        .map(|&v| Candidate {
            node: v,
            hop: 1,
            max_nei: None,
        })
        .collect();
    for &v in &hop2 {
        let mut best: Option<(f64, u32)> = None;
        for &(u, _) in m.adjacency(v) {
            if seen.get(&u) == Some(&1) {
                let b = benefit(scores.influence[u as usize], 1, lambda);
                let better = match best {
                    None => true,
                    Some((bb, bu)) => b > bb || (b == bb && u < bu),
                };
                if better {
                    best = Some((b, u));
                }
            }
        }
        // A BFS-derived hop-2 node always has a hop-1 neighbor; the guard
        // only matters for hand-built candidate sets.
        if let Some((_, u)) = best {
            out.push(Candidate {
                node: v,
                hop: 2,
                max_nei: Some(u),
            });
        }
    }
    out
}

/// Landmarks selected for one subgraph.
#[derive(Debug, Clone)]
pub struct LandmarkSet {
    /// Sorted joint nodes.
    pub members: Vec<u32>,
    pub budget: usize,
}

/// A held hop-2/bridge pair waiting in the intermediate dictionary,
/// keyed by the average of the two benefits.
#[derive(Debug, Clone, Copy)]
struct HeldPair {
    key: f64,
    seq: usize,
    node: u32,
    bridge: u32,
}

/// Greedy connectivity-aware selection over a ranked candidate list.
///
/// Candidates are ranked by descending benefit (ties by ascending node
/// index) and traversed once. Hop-1 candidates are admitted directly. A
/// hop-2 candidate is admitted if its bridge is already in the set,
/// otherwise the pair is held keyed by their average benefit; held pairs
/// whose key beats the current candidate's benefit are admitted first while
/// the budget allows room for two more.
pub fn select_landmarks(
    candidates: &[Candidate],
    scores: &ScoreTable,
    lambda: f64,
    k: usize,
) -> LandmarkSet {
    let omega =
        |node: u32, hop: u8| benefit(scores.influence[node as usize], hop, lambda);
    let mut ranked: Vec<&Candidate> = candidates.iter().collect();
    ranked.sort_by(|a, b| {
        let oa = omega(a.node, a.hop);
        let ob = omega(b.node, b.hop);
        ob.partial_cmp(&oa)
            .unwrap()
            .then_with(|| a.node.cmp(&b.node))
    });

    let mut selected: Vec<u32> = Vec::new();
    let mut in_set: HashSet<u32> = HashSet::new();
    let mut held: Vec<HeldPair> = Vec::new();
    let mut inter = 0.0f64;
    let mut seq = 0usize;

    let admit = |node: u32, selected: &mut Vec<u32>, in_set: &mut HashSet<u32>| {
        if in_set.insert(node) {
            selected.push(node);
        }
    };

    let mut i = 0usize;
    while i < ranked.len() && in_set.len() < k {
        let c = ranked[i];
        if c.hop > 1 {
            let Some(bridge) = c.max_nei else {
                // No bridge: the candidate cannot connect, skip it.
                i += 1;
                continue;
            };
            if in_set.contains(&bridge) {
                admit(c.node, &mut selected, &mut in_set);
            } else {
                let key = 0.5 * (omega(c.node, c.hop) + omega(bridge, 1));
                held.push(HeldPair {
                    key,
                    seq,
                    node: c.node,
                    bridge,
                });
                seq += 1;
                if key > inter {
                    inter = key;
                }
            }
        } else {
            let own = omega(c.node, 1);
            while own < inter && k >= 2 && in_set.len() < k - 2 {
                // Pop the held pair with the largest key (earliest on ties).
                let best = held
                    .iter()
                    .enumerate()
                    .max_by(|(_, a), (_, b)| {
                        a.key
                            .partial_cmp(&b.key)
                            .unwrap()
                            .then_with(|| b.seq.cmp(&a.seq))
                    })
                    .map(|(idx, _)| idx);
                let Some(idx) = best else { break };
                let pair = held.swap_remove(idx);
                admit(pair.bridge, &mut selected, &mut in_set);
                admit(pair.node, &mut selected, &mut in_set);
                inter = held.iter().map(|p| p.key).fold(0.0, f64::max);
            }
            admit(c.node, &mut selected, &mut in_set);
        }
        i += 1;
    }

    selected.sort_unstable();
    LandmarkSet {
        members: selected,
        budget: k,
    }
}

/// Fill each subgraph's landmark set and re-induce its triples over
/// `core ∪ landmarks`.
pub fn generate_subgraphs(
    m: &MergedGraph,
    p: &Partition,
    scores: &ScoreTable,
    lambda: f64,
    k: usize,
) -> Vec<Subgraph> {
    let mut subgraphs = induce_subgraphs(p, m);
    if k == 0 {
        return subgraphs;
    }
    subgraphs.par_iter_mut().for_each(|s| {
        let candidates = candidate_set(s, m, scores, lambda);
        let landmarks = select_landmarks(&candidates, scores, lambda, k);
        s.landmark_nodes = landmarks.members;
        let members: HashSet<u32> = s.nodes().collect();
        s.triples = induce_triples(m, &members);
    });
    subgraphs
}

/// Landmark report: one line per landmark with its block, node, hop and
/// benefit at selection time.
pub fn write_landmark_report(
    path: &Path,
    subgraphs: &[Subgraph],
    m: &MergedGraph,
    scores: &ScoreTable,
    lambda: f64,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for s in subgraphs {
        let core: HashSet<u32> = s.core_nodes.iter().copied().collect();
        for &l in &s.landmark_nodes {
            let hop = if m
                .adjacency(l)
                .iter()
                .any(|&(u, _)| core.contains(&u))
            {
                1u8
            } else {
                2
            };
            writeln!(
                w,
                "{}\t{}\t{}\t{:.6}",
                s.block,
                l,
                hop,
                benefit(scores.influence[l as usize], hop, lambda)
            )
            .map_err(|e| Error::io(path, e))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphBuilder;
    use crate::merge::merge_graphs;
    use crate::partition::Partition;

    /// A single source-side graph as a merged graph with chosen seed nodes.
    fn merged_from_edges(n: usize, edges: &[(u32, u32)]) -> MergedGraph {
        let mut b = GraphBuilder::new();
        for i in 0..n {
            b.entity(&format!("v{i}"));
        }
        for &(a, bb) in edges {
            b.triple(&format!("v{a}"), "r", &format!("v{bb}"));
        }
        let g1 = b.build();
        let g2 = {
            let mut b = GraphBuilder::new();
            b.triple("zz0", "p", "zz1");
            b.build()
        };
        merge_graphs(&g1, &g2, &[]).unwrap()
    }

    #[test]
    fn seed_importance_is_inverse_eta() {
        let m = merged_from_edges(3, &[(0, 1), (1, 2)]);
        let scores = label_importance(&m, &[0], 0.001, 0.0).unwrap();
        assert_eq!(scores.importance[0], 1000.0);
    }

    #[test]
    fn hop_two_importance_matches_formula() {
        let m = merged_from_edges(4, &[(0, 1), (1, 2), (2, 3)]);
        let scores = label_importance(&m, &[0], 0.001, 0.0).unwrap();
        // Direct evaluation of the labeling formula at hop 2.
        let expected = 1.0 / (0.001 + 2.0);
        assert!((scores.importance[2] - expected).abs() < 1e-12);
        assert!((expected - 0.49975).abs() < 1e-5);
    }

    #[test]
    fn floor_stops_labeling_at_hop_two() {
        let m = merged_from_edges(5, &[(0, 1), (1, 2), (2, 3), (3, 4)]);
        let scores = label_importance(&m, &[0], 0.001, 0.49).unwrap();
        assert!(scores.importance[2] > 0.0);
        // 1/(0.001 + 3) < 0.49, so hop 3 is never labeled.
        assert_eq!(scores.importance[3], 0.0);
        assert_eq!(scores.importance[4], 0.0);
    }

    #[test]
    fn empty_seed_set_labels_nothing() {
        let m = merged_from_edges(3, &[(0, 1)]);
        let scores = label_importance(&m, &[], 0.001, 0.49).unwrap();
        assert!(scores.importance.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn importance_strictly_decreases_per_hop() {
        let m = merged_from_edges(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)]);
        let scores = label_importance(&m, &[0], 0.5, 0.0).unwrap();
        for hop in 0..5usize {
            assert!(scores.importance[hop] > scores.importance[hop + 1]);
        }
    }

    #[test]
    fn influence_sums_neighbor_importance() {
        // Star: node 1 adjacent to seed 0 (importance 1000) and node 2
        // (hop 2 from seed via 1 -> importance 1/(0.001+2)); by hand the
        // influence of 1 on a 0-1-2 path with eta small is 1000 + 0.49975.
        let m = merged_from_edges(3, &[(0, 1), (1, 2)]);
        let mut scores = label_importance(&m, &[0], 0.001, 0.0).unwrap();
        label_influence(&m, &mut scores);
        let expected = 1000.0 + 1.0 / 2.001;
        assert!((scores.influence[1] - expected).abs() < 1e-9);
        // Brute-force recomputation must agree on every node.
        for v in 0..m.node_count() as u32 {
            let brute: f64 = m
                .adjacency(v)
                .iter()
                .map(|&(u, _)| scores.importance[u as usize])
                .sum();
            assert_eq!(brute, scores.influence[v as usize]);
        }
    }

    #[test]
    fn isolated_node_has_zero_influence() {
        let mut b = GraphBuilder::new();
        b.entity("alone");
        b.triple("a", "r", "b");
        let g1 = b.build();
        let g2 = {
            let mut b = GraphBuilder::new();
            b.triple("x", "p", "y");
            b.build()
        };
        let m = merge_graphs(&g1, &g2, &[]).unwrap();
        let mut scores = label_importance(&m, &[1], 0.001, 0.0).unwrap();
        label_influence(&m, &mut scores);
        assert_eq!(scores.influence[0], 0.0);
    }

    #[test]
    fn benefit_evaluates_the_decay_formula() {
        assert!((benefit(2.0, 1, 0.01) - 0.02).abs() < 1e-15);
        assert!((benefit(2.0, 2, 0.01) - 0.0002).abs() < 1e-15);
        assert_eq!(benefit(0.0, 1, 0.01), 0.0);
        assert_eq!(benefit(0.0, 2, 0.01), 0.0);
    }

    fn subgraph_of(core: Vec<u32>) -> Subgraph {
        Subgraph {
            block: 0,
            core_nodes: core,
            landmark_nodes: Vec::new(),
            triples: Vec::new(),
        }
    }

    #[test]
    fn candidates_on_a_path() {
        // s - a - b - c: core {s}; candidates a (hop 1) and b (hop 2 with
        // bridge a); c is three hops out and excluded.
        let m = merged_from_edges(4, &[(0, 1), (1, 2), (2, 3)]);
        let scores = {
            let mut s = label_importance(&m, &[0], 0.001, 0.0).unwrap();
            label_influence(&m, &mut s);
            s
        };
        let s = subgraph_of(vec![0]);
        let c = candidate_set(&s, &m, &scores, 0.01);
        assert_eq!(c.len(), 2);
        assert_eq!(c[0], Candidate { node: 1, hop: 1, max_nei: None });
        assert_eq!(c[1], Candidate { node: 2, hop: 2, max_nei: Some(1) });
    }

    #[test]
    fn whole_graph_has_no_candidates() {
        let m = merged_from_edges(3, &[(0, 1), (1, 2)]);
        let scores = ScoreTable::new(m.node_count(), 0.001, 0.49);
        // Core covers every joint node (including the target-side pair).
        let s = subgraph_of((0..m.node_count() as u32).collect());
        assert!(candidate_set(&s, &m, &scores, 0.01).is_empty());
    }

    #[test]
    fn star_center_in_core_yields_leaf_candidates() {
        let m = merged_from_edges(5, &[(0, 1), (0, 2), (0, 3), (0, 4)]);
        let scores = ScoreTable::new(m.node_count(), 0.001, 0.49);
        let s = subgraph_of(vec![0]);
        let c = candidate_set(&s, &m, &scores, 0.01);
        assert_eq!(c.len(), 4);
        assert!(c.iter().all(|cand| cand.hop == 1));
    }

    #[test]
    fn all_hop1_within_budget_selects_everything() {
        let mut scores = ScoreTable::new(10, 0.001, 0.49);
        for v in 0..10 {
            scores.influence[v] = v as f64;
        }
        let candidates: Vec<Candidate> = (0..5)
            .map(|v| Candidate { node: v, hop: 1, max_nei: None })
            .collect();
        let l = select_landmarks(&candidates, &scores, 0.01, 8);
        assert_eq!(l.members, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn zero_budget_selects_nothing() {
        let mut scores = ScoreTable::new(4, 0.001, 0.49);
        scores.influence = vec![1.0, 2.0, 3.0, 4.0];
        let candidates = vec![Candidate { node: 0, hop: 1, max_nei: None }];
        let l = select_landmarks(&candidates, &scores, 0.01, 0);
        assert!(l.members.is_empty());
    }

    #[test]
    fn generate_with_zero_budget_matches_plain_induction() {
        let m = merged_from_edges(8, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (6, 7)]);
        let p = crate::partition::partition(&m, 2, 0.2, 1).unwrap();
        let scores = {
            let mut s = label_importance(&m, &[0], 0.001, 0.49).unwrap();
            label_influence(&m, &mut s);
            s
        };
        let a = generate_subgraphs(&m, &p, &scores, 0.01, 0);
        let b = induce_subgraphs(&p, &m);
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(x.core_nodes, y.core_nodes);
            assert_eq!(x.triples.len(), y.triples.len());
            assert!(x.landmark_nodes.is_empty());
        }
    }

    #[test]
    fn large_budget_restores_copresent_cut_edges() {
        // 12-node cycle, two blocks. With a huge budget every block recalls
        // its full two-hop frontier, and each cut edge whose endpoints are
        // now co-present reappears among the induced triples.
        let edges: Vec<(u32, u32)> = (0..12).map(|i| (i, (i + 1) % 12)).collect();
        let m = merged_from_edges(12, &edges);
        let p = crate::partition::partition(&m, 2, 0.05, 2).unwrap();
        let scores = {
            let mut s = label_importance(&m, &[0, 6], 0.001, 0.0).unwrap();
            label_influence(&m, &mut s);
            s
        };
        let subs = generate_subgraphs(&m, &p, &scores, 0.01, 100);
        // Count, per subgraph, how many formerly-cut edges are restored.
        let mut restored = 0usize;
        for s in &subs {
            let members: HashSet<u32> = s.nodes().collect();
            for t in m.triples() {
                let cut = p.assignment[t.head as usize] != p.assignment[t.tail as usize];
                if cut && members.contains(&t.head) && members.contains(&t.tail) {
                    restored += 1;
                }
            }
            // Independent expectation: re-inducing over members brings in
            // every triple with both endpoints present.
            let expect = induce_triples(&m, &members).len();
            assert_eq!(s.triples.len(), expect);
        }
        assert!(restored > 0);
    }

    #[test]
    fn no_isolated_landmark_on_random_instances() {
        use rand::Rng;
        let mut rng = crate::seed::rng(5);
        for _ in 0..20 {
            let n = rng.gen_range(8..20u32);
            let mut edges = Vec::new();
            for v in 1..n {
                edges.push((rng.gen_range(0..v), v));
            }
            for _ in 0..n {
                let a = rng.gen_range(0..n);
                let b = rng.gen_range(0..n);
                if a != b {
                    edges.push((a, b));
                }
            }
            let m = merged_from_edges(n as usize, &edges);
            let seeds: Vec<u32> = vec![0];
            let mut scores = label_importance(&m, &seeds, 0.001, 0.0).unwrap();
            label_influence(&m, &mut scores);
            let core: Vec<u32> = (0..n / 3).collect();
            let s = subgraph_of(core.clone());
            let candidates = candidate_set(&s, &m, &scores, 0.01);
            let k = rng.gen_range(0..6usize);
            let l = select_landmarks(&candidates, &scores, 0.01, k);
            assert!(l.members.len() <= k);
            // Connectivity: BFS from the core over core ∪ landmarks
            // must reach every landmark.
            let members: HashSet<u32> =
                core.iter().copied().chain(l.members.iter().copied()).collect();
            let mut reach: HashSet<u32> = core.iter().copied().collect();
            let mut queue: VecDeque<u32> = core.iter().copied().collect();
            while let Some(v) = queue.pop_front() {
                for &(u, _) in m.adjacency(v) {
                    if members.contains(&u) && reach.insert(u) {
                        queue.push_back(u);
                    }
                }
            }
            for &lm in &l.members {
                assert!(reach.contains(&lm), "landmark {lm} is isolated");
            }
        }
    }
}
