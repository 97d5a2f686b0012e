//! Graph-level alignment inference.
//!
//! Per-subgraph output embeddings are averaged into one vector per joint
//! node and mapped back to source/target entity rows. Alignment pairs are
//! the mutual top-k nearest neighbors between the two rows sets, searched
//! either exactly or through an inverted-list index over a seeded spherical
//! clustering.

use std::collections::HashSet;

use rayon::prelude::*;

use crate::encoder::SubgraphOutput;
use crate::graph::EntityId;
use crate::merge::MergedGraph;
use crate::{seed, Error, Result};

/// One unit-normalized embedding row per entity of each original graph.
#[derive(Debug, Clone)]
pub struct FusedSpace {
    pub dim: usize,
    pub source: Vec<f64>,
    pub target: Vec<f64>,
}

impl FusedSpace {
    pub fn source_count(&self) -> usize {
        self.source.len() / self.dim
    }

    pub fn target_count(&self) -> usize {
        self.target.len() / self.dim
    }

    pub fn source_row(&self, e: EntityId) -> &[f64] {
        &self.source[e.0 as usize * self.dim..(e.0 as usize + 1) * self.dim]
    }

    pub fn target_row(&self, e: EntityId) -> &[f64] {
        &self.target[e.0 as usize * self.dim..(e.0 as usize + 1) * self.dim]
    }
}

/// Average each joint node's output embedding over all subgraphs containing
/// it, re-normalize, and scatter to the original entity rows.
pub fn fuse(
    outputs: &[SubgraphOutput],
    merged: &MergedGraph,
    dim: usize,
) -> Result<FusedSpace> {
    let n = merged.node_count();
    let mut sum = vec![0.0; n * dim];
    let mut count = vec![0u32; n];
    for out in outputs {
        for (i, &node) in out.nodes.iter().enumerate() {
            let src = &out.vectors[i * dim..(i + 1) * dim];
            let dst = &mut sum[node as usize * dim..(node as usize + 1) * dim];
            for k in 0..dim {
                dst[k] += src[k];
            }
            count[node as usize] += 1;
        }
    }
    if let Some(missing) = count.iter().position(|&c| c == 0) {
        return Err(Error::Runtime(format!(
            "joint node {missing} appears in no subgraph; the partition is broken"
        )));
    }
    for v in 0..n {
        let row = &mut sum[v * dim..(v + 1) * dim];
        let inv = 1.0 / count[v] as f64;
        row.iter_mut().for_each(|x| *x *= inv);
        let nrm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nrm > 1e-12 {
            row.iter_mut().for_each(|x| *x /= nrm);
        }
    }

    let n_source = source_count(merged);
    let n_target = target_count(merged);
    let mut source = vec![0.0; n_source * dim];
    let mut target = vec![0.0; n_target * dim];
    for v in 0..n {
        let origin = merged.origin(v as u32);
        let row = &sum[v * dim..(v + 1) * dim];
        if let Some(e) = origin.source {
            source[e.0 as usize * dim..(e.0 as usize + 1) * dim].copy_from_slice(row);
        }
        if let Some(e) = origin.target {
            target[e.0 as usize * dim..(e.0 as usize + 1) * dim].copy_from_slice(row);
        }
    }
    Ok(FusedSpace {
        dim,
        source,
        target,
    })
}

fn source_count(m: &MergedGraph) -> usize {
    (0..m.node_count() as u32)
        .filter_map(|v| m.origin(v).source)
        .map(|e| e.0 as usize + 1)
        .max()
        .unwrap_or(0)
}

fn target_count(m: &MergedGraph) -> usize {
    (0..m.node_count() as u32)
        .filter_map(|v| m.origin(v).target)
        .map(|e| e.0 as usize + 1)
        .max()
        .unwrap_or(0)
}

/// Scored pairs surviving the mutual top-k filter.
#[derive(Debug, Clone)]
pub struct AlignmentPrediction {
    pub pairs: Vec<(EntityId, EntityId, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchMode {
    Exact,
    /// Inverted-list search; `probes = None` uses sqrt(number of lists).
    Approximate { probes: Option<usize> },
}

impl std::str::FromStr for SearchMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "exact" => Ok(SearchMode::Exact),
            "approximate" | "approx" => Ok(SearchMode::Approximate { probes: None }),
            other => Err(format!("unknown search mode '{other}'")),
        }
    }
}

/// Keep the k best (similarity desc, index asc) candidates.
#[derive(Debug, Clone)]
struct TopK {
    k: usize,
    entries: Vec<(f64, u32)>,
}

impl TopK {
    fn new(k: usize) -> Self {
        TopK {
            k,
            entries: Vec::with_capacity(k + 1),
        }
    }

    fn better(a: (f64, u32), b: (f64, u32)) -> bool {
        a.0 > b.0 || (a.0 == b.0 && a.1 < b.1)
    }

    fn push(&mut self, sim: f64, idx: u32) {
        let cand = (sim, idx);
        if self.entries.len() < self.k {
            let pos = self
                .entries
                .iter()
                .position(|&e| Self::better(cand, e))
                .unwrap_or(self.entries.len());
            self.entries.insert(pos, cand);
        } else if let Some(&last) = self.entries.last() {
            if Self::better(cand, last) {
                let pos = self
                    .entries
                    .iter()
                    .position(|&e| Self::better(cand, e))
                    .unwrap();
                self.entries.insert(pos, cand);
                self.entries.pop();
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn exact_topk(queries: &[f64], data: &[f64], dim: usize, k: usize) -> Vec<Vec<(f64, u32)>> {
    let n_q = queries.len() / dim;
    let n_d = data.len() / dim;
    (0..n_q)
        .into_par_iter()
        .map(|i| {
            let q = &queries[i * dim..(i + 1) * dim];
            let mut top = TopK::new(k);
            for j in 0..n_d {
                top.push(dot(q, &data[j * dim..(j + 1) * dim]), j as u32);
            }
            top.entries
        })
        .collect()
}

/// Inverted-list index over a seeded spherical clustering.
struct IvfIndex {
    dim: usize,
    centroids: Vec<f64>,
    lists: Vec<Vec<u32>>,
}

impl IvfIndex {
    fn build(data: &[f64], dim: usize, seed_val: u64) -> Self {
        let n = data.len() / dim;
        let nlist = ((n as f64).sqrt().ceil() as usize).clamp(1, n.max(1));
        let mut order: Vec<u32> = (0..n as u32).collect();
        use rand::seq::SliceRandom;
        order.shuffle(&mut seed::rng(seed_val));
        let mut centroids = vec![0.0; nlist * dim];
        for (c, &v) in order.iter().take(nlist).enumerate() {
            centroids[c * dim..(c + 1) * dim]
                .copy_from_slice(&data[v as usize * dim..(v as usize + 1) * dim]);
        }
        let mut assign = vec![0u32; n];
        for _ in 0..8 {
            // Assignment: best centroid by inner product, ties to the
            // lowest centroid index.
            for v in 0..n {
                let row = &data[v * dim..(v + 1) * dim];
                let mut best = (f64::NEG_INFINITY, 0u32);
                for c in 0..nlist {
                    let s = dot(row, &centroids[c * dim..(c + 1) * dim]);
                    if s > best.0 {
                        best = (s, c as u32);
                    }
                }
                assign[v] = best.1;
            }
            // Update: normalized mean; empty clusters keep their centroid.
            let mut sums = vec![0.0; nlist * dim];
            let mut counts = vec![0usize; nlist];
            for v in 0..n {
                let c = assign[v] as usize;
                counts[c] += 1;
                for k in 0..dim {
                    sums[c * dim + k] += data[v * dim + k];
                }
            }
            for c in 0..nlist {
                if counts[c] == 0 {
                    continue;
                }
                let row = &mut sums[c * dim..(c + 1) * dim];
                let nrm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
                if nrm > 1e-12 {
                    row.iter_mut().for_each(|x| *x /= nrm);
                    centroids[c * dim..(c + 1) * dim].copy_from_slice(row);
                }
            }
        }
        let mut lists = vec![Vec::new(); nlist];
        for v in 0..n {
            lists[assign[v] as usize].push(v as u32);
        }
        IvfIndex {
            dim,
            centroids,
            lists,
        }
    }

    fn nlist(&self) -> usize {
        self.lists.len()
    }

    fn query(&self, data: &[f64], q: &[f64], k: usize, probes: usize) -> Vec<(f64, u32)> {
        let nlist = self.nlist();
        let probes = probes.clamp(1, nlist);
        let mut ranked: Vec<(f64, u32)> = (0..nlist)
            .map(|c| {
                (
                    dot(q, &self.centroids[c * self.dim..(c + 1) * self.dim]),
                    c as u32,
                )
            })
            .collect();
        ranked.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        let mut top = TopK::new(k);
        for &(_, c) in ranked.iter().take(probes) {
            for &v in &self.lists[c as usize] {
                top.push(
                    dot(q, &data[v as usize * self.dim..(v as usize + 1) * self.dim]),
                    v,
                );
            }
        }
        top.entries
    }
}

fn approx_topk(
    queries: &[f64],
    data: &[f64],
    dim: usize,
    k: usize,
    probes: Option<usize>,
    seed_val: u64,
) -> Vec<Vec<(f64, u32)>> {
    let index = IvfIndex::build(data, dim, seed_val);
    let probes = probes.unwrap_or_else(|| (index.nlist() as f64).sqrt().ceil() as usize);
    let n_q = queries.len() / dim;
    (0..n_q)
        .into_par_iter()
        .map(|i| index.query(data, &queries[i * dim..(i + 1) * dim], k, probes))
        .collect()
}

/// Bidirectional top-k search: a pair is emitted only when each side is in
/// the other's top-k list. With `one_to_one`, mutual pairs are greedily
/// filtered by descending similarity so each entity appears at most once.
pub fn mutual_knn(
    space: &FusedSpace,
    k: usize,
    mode: SearchMode,
    one_to_one: bool,
) -> Result<AlignmentPrediction> {
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    if space.target_count() == 0 || space.source_count() == 0 {
        return Ok(AlignmentPrediction { pairs: Vec::new() });
    }
    if k >= space.target_count() || k >= space.source_count() {
        log::warn!(
            "k = {k} reaches every candidate; mutual filtering is vacuous on the smaller side"
        );
    }
    let (fwd, bwd) = match mode {
        SearchMode::Exact => (
            exact_topk(&space.source, &space.target, space.dim, k),
            exact_topk(&space.target, &space.source, space.dim, k),
        ),
        SearchMode::Approximate { probes } => (
            approx_topk(&space.source, &space.target, space.dim, k, probes, 0x1f),
            approx_topk(&space.target, &space.source, space.dim, k, probes, 0x2f),
        ),
    };

    let back_sets: Vec<HashSet<u32>> = bwd
        .iter()
        .map(|list| list.iter().map(|&(_, i)| i).collect())
        .collect();
    let mut pairs: Vec<(EntityId, EntityId, f64)> = Vec::new();
    for (i, list) in fwd.iter().enumerate() {
        for &(sim, j) in list {
            if back_sets[j as usize].contains(&(i as u32)) {
                pairs.push((EntityId(i as u32), EntityId(j), sim));
            }
        }
    }
    pairs.sort_by(|a, b| {
        b.2.partial_cmp(&a.2)
            .unwrap()
            .then(a.0 .0.cmp(&b.0 .0))
            .then(a.1 .0.cmp(&b.1 .0))
    });

    if one_to_one {
        let mut used_source = HashSet::new();
        let mut used_target = HashSet::new();
        pairs.retain(|&(s, t, _)| {
            if used_source.contains(&s.0) || used_target.contains(&t.0) {
                false
            } else {
                used_source.insert(s.0);
                used_target.insert(t.0);
                true
            }
        });
    }
    Ok(AlignmentPrediction { pairs })
}

/// Ideal-setting ranking metrics: for each test source entity, rank all
/// target entities by similarity (exact search, ties by ascending target
/// index) and report Hits@k for each cutoff plus the mean reciprocal rank.
pub fn evaluate_ideal(
    space: &FusedSpace,
    gold_test: &[(EntityId, EntityId)],
    ks: &[usize],
) -> (std::collections::BTreeMap<usize, f64>, f64) {
    let ranks: Vec<usize> = gold_test
        .par_iter()
        .map(|&(s, t)| {
            let q = space.source_row(s);
            let gold_sim = dot(q, space.target_row(t));
            let mut rank = 1usize;
            for j in 0..space.target_count() as u32 {
                if j == t.0 {
                    continue;
                }
                let sim = dot(q, &space.target[j as usize * space.dim..(j as usize + 1) * space.dim]);
                if sim > gold_sim || (sim == gold_sim && j < t.0) {
                    rank += 1;
                }
            }
            rank
        })
        .collect();
    let n = gold_test.len().max(1) as f64;
    let mut hits = std::collections::BTreeMap::new();
    for &k in ks {
        let h = ranks.iter().filter(|&&r| r <= k).count() as f64 / n;
        hits.insert(k, h);
    }
    let mrr = ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n;
    (hits, mrr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn unit_rows(n: usize, dim: usize, seed_val: u64) -> Vec<f64> {
        let mut rng = seed::rng(seed_val);
        let mut rows = vec![0.0; n * dim];
        for i in 0..n {
            let r = &mut rows[i * dim..(i + 1) * dim];
            for v in r.iter_mut() {
                *v = rng.gen_range(-1.0..1.0);
            }
            let nrm = r.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            r.iter_mut().for_each(|x| *x /= nrm);
        }
        rows
    }

    fn space(n_s: usize, n_t: usize, dim: usize, seed_val: u64) -> FusedSpace {
        FusedSpace {
            dim,
            source: unit_rows(n_s, dim, seed_val),
            target: unit_rows(n_t, dim, seed_val + 1),
        }
    }

    /// Exhaustive mutual-kNN oracle: double loop, same tie rule.
    fn oracle(space: &FusedSpace, k: usize) -> Vec<(u32, u32)> {
        let topk = |queries: &[f64], data: &[f64]| -> Vec<Vec<u32>> {
            let n_q = queries.len() / space.dim;
            let n_d = data.len() / space.dim;
            (0..n_q)
                .map(|i| {
                    let q = &queries[i * space.dim..(i + 1) * space.dim];
                    let mut sims: Vec<(f64, u32)> = (0..n_d)
                        .map(|j| (dot(q, &data[j * space.dim..(j + 1) * space.dim]), j as u32))
                        .collect();
                    sims.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
                    sims.truncate(k);
                    sims.into_iter().map(|(_, j)| j).collect()
                })
                .collect()
        };
        let fwd = topk(&space.source, &space.target);
        let bwd = topk(&space.target, &space.source);
        let mut pairs = Vec::new();
        for (i, list) in fwd.iter().enumerate() {
            for &j in list {
                if bwd[j as usize].contains(&(i as u32)) {
                    pairs.push((i as u32, j));
                }
            }
        }
        pairs.sort_unstable();
        pairs
    }

    #[test]
    fn identical_singletons_match() {
        let s = FusedSpace {
            dim: 2,
            source: vec![1.0, 0.0],
            target: vec![1.0, 0.0],
        };
        let p = mutual_knn(&s, 1, SearchMode::Exact, false).unwrap();
        assert_eq!(p.pairs.len(), 1);
        assert_eq!(p.pairs[0].0, EntityId(0));
        assert_eq!(p.pairs[0].1, EntityId(0));
    }

    #[test]
    fn one_sided_nearest_neighbor_is_rejected() {
        // Source 0's nearest target is x (the only one), but x's own top-1
        // source is 1, so the (0, x) pair fails mutuality.
        let s = FusedSpace {
            dim: 2,
            source: vec![1.0, 0.0, 0.9, 0.43589],
            target: vec![0.9, 0.43589],
        };
        let p = mutual_knn(&s, 1, SearchMode::Exact, false).unwrap();
        assert_eq!(p.pairs.len(), 1);
        assert_eq!(p.pairs[0].0, EntityId(1));
    }

    #[test]
    fn exact_matches_oracle_on_random_spaces() {
        for seed_val in 0..5u64 {
            let sp = space(50, 50, 8, seed_val);
            for k in [1usize, 5] {
                let got: Vec<(u32, u32)> = {
                    let mut v: Vec<(u32, u32)> = mutual_knn(&sp, k, SearchMode::Exact, false)
                        .unwrap()
                        .pairs
                        .iter()
                        .map(|&(a, b, _)| (a.0, b.0))
                        .collect();
                    v.sort_unstable();
                    v
                };
                assert_eq!(got, oracle(&sp, k));
            }
        }
    }

    #[test]
    fn max_probes_equals_exact() {
        let sp = space(120, 130, 6, 3);
        let exact: Vec<(u32, u32)> = {
            let mut v: Vec<(u32, u32)> = mutual_knn(&sp, 5, SearchMode::Exact, false)
                .unwrap()
                .pairs
                .iter()
                .map(|&(a, b, _)| (a.0, b.0))
                .collect();
            v.sort_unstable();
            v
        };
        let approx: Vec<(u32, u32)> = {
            let mut v: Vec<(u32, u32)> = mutual_knn(
                &sp,
                5,
                SearchMode::Approximate {
                    probes: Some(usize::MAX),
                },
                false,
            )
            .unwrap()
            .pairs
            .iter()
            .map(|&(a, b, _)| (a.0, b.0))
            .collect();
            v.sort_unstable();
            v
        };
        assert_eq!(exact, approx);
    }

    #[test]
    fn mutuality_is_symmetric() {
        let sp = space(40, 60, 8, 9);
        let swapped = FusedSpace {
            dim: sp.dim,
            source: sp.target.clone(),
            target: sp.source.clone(),
        };
        let a: std::collections::HashSet<(u32, u32)> =
            mutual_knn(&sp, 5, SearchMode::Exact, false)
                .unwrap()
                .pairs
                .iter()
                .map(|&(s, t, _)| (s.0, t.0))
                .collect();
        let b: std::collections::HashSet<(u32, u32)> =
            mutual_knn(&swapped, 5, SearchMode::Exact, false)
                .unwrap()
                .pairs
                .iter()
                .map(|&(s, t, _)| (t.0, s.0))
                .collect();
        assert_eq!(a, b);
    }

    #[test]
    fn one_to_one_never_increases_pair_count() {
        let sp = space(30, 30, 4, 5);
        for k in [1usize, 3, 7] {
            let all = mutual_knn(&sp, k, SearchMode::Exact, false).unwrap();
            let filtered = mutual_knn(&sp, k, SearchMode::Exact, true).unwrap();
            assert!(filtered.pairs.len() <= all.pairs.len());
            let mut seen_s = HashSet::new();
            let mut seen_t = HashSet::new();
            for &(s, t, _) in &filtered.pairs {
                assert!(seen_s.insert(s.0));
                assert!(seen_t.insert(t.0));
            }
        }
    }

    #[test]
    fn ideal_metrics_hand_case() {
        // Three test sources whose gold counterparts rank 1, 2 and 4:
        // MRR = (1 + 1/2 + 1/4)/3.
        let dim = 2;
        // Targets along distinct directions.
        let target = vec![
            1.0, 0.0, // t0
            0.92387953, 0.38268343, // t1 (22.5 deg)
            0.70710678, 0.70710678, // t2 (45 deg)
            0.38268343, 0.92387953, // t3 (67.5 deg)
        ];
        // s0 -> gold t0 at rank 1; s1 (30 deg) -> gold t2 at rank 2 (only
        // t1 is closer); s2 -> gold t3 at rank 4 (points at t0).
        let source = vec![1.0, 0.0, 0.8660254, 0.5, 1.0, 0.0];
        let sp = FusedSpace {
            dim,
            source,
            target,
        };
        let gold = vec![
            (EntityId(0), EntityId(0)),
            (EntityId(1), EntityId(2)),
            (EntityId(2), EntityId(3)),
        ];
        let (hits, mrr) = evaluate_ideal(&sp, &gold, &[1, 5]);
        assert!((mrr - (1.0 + 0.5 + 0.25) / 3.0).abs() < 1e-12);
        assert!((hits[&1] - 1.0 / 3.0).abs() < 1e-12);
        assert!(hits[&5] >= hits[&1]);
    }

    #[test]
    fn perfect_ranking_gives_ones() {
        let sp = FusedSpace {
            dim: 2,
            source: vec![1.0, 0.0, 0.0, 1.0],
            target: vec![1.0, 0.0, 0.0, 1.0],
        };
        let gold = vec![(EntityId(0), EntityId(0)), (EntityId(1), EntityId(1))];
        let (hits, mrr) = evaluate_ideal(&sp, &gold, &[1, 5]);
        assert_eq!(hits[&1], 1.0);
        assert_eq!(hits[&5], 1.0);
        assert_eq!(mrr, 1.0);
    }

    #[test]
    fn fusion_averages_and_renormalizes() {
        use crate::graph::GraphBuilder;
        use crate::merge::merge_graphs;
        // One joint node present in two subgraphs with outputs v and w:
        // fused = normalize((v + w) / 2). Hand computation at d = 4.
        let mut b1 = GraphBuilder::new();
        b1.triple("a", "r", "b");
        let g1 = b1.build();
        let mut b2 = GraphBuilder::new();
        b2.triple("x", "p", "y");
        let g2 = b2.build();
        let m = merge_graphs(&g1, &g2, &[]).unwrap();
        let v = vec![1.0, 0.0, 0.0, 0.0];
        let w = vec![0.0, 1.0, 0.0, 0.0];
        let mk = |nodes: Vec<u32>, vectors: Vec<f64>| SubgraphOutput { nodes, vectors };
        let outputs = vec![
            mk(vec![0, 1, 2, 3], {
                let mut all = v.clone();
                all.extend(vec![0.0, 0.0, 1.0, 0.0]);
                all.extend(vec![0.0, 0.0, 1.0, 0.0]);
                all.extend(vec![0.0, 0.0, 1.0, 0.0]);
                all
            }),
            mk(vec![0], w.clone()),
        ];
        let fused = fuse(&outputs, &m, 4).unwrap();
        let row = fused.source_row(EntityId(0));
        let s = 0.5f64;
        let nrm = (s * s + s * s).sqrt();
        assert!((row[0] - s / nrm).abs() < 1e-12);
        assert!((row[1] - s / nrm).abs() < 1e-12);
        // A node in exactly one subgraph keeps its output.
        let row_b = fused.source_row(EntityId(1));
        assert!((row_b[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn missing_node_is_rejected() {
        use crate::graph::GraphBuilder;
        use crate::merge::merge_graphs;
        let mut b1 = GraphBuilder::new();
        b1.triple("a", "r", "b");
        let g1 = b1.build();
        let mut b2 = GraphBuilder::new();
        b2.triple("x", "p", "y");
        let g2 = b2.build();
        let m = merge_graphs(&g1, &g2, &[]).unwrap();
        let outputs = vec![SubgraphOutput {
            nodes: vec![0, 1],
            vectors: vec![1.0, 0.0, 0.0, 1.0],
        }];
        assert!(fuse(&outputs, &m, 2).is_err());
    }
}
