//! Synthetic benchmark generator.
//!
//! Produces a random multi-relational source graph and a target graph that
//! contains an isomorphic, relabeled copy of a configurable fraction of it,
//! padded with fresh non-matchable entities and perturbation triples. The
//! isomorphism pairs are the gold alignment, so desk-scale experiments have
//! exact ground truth.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::graph::{AlignmentSet, EntityId, GraphBuilder, KnowledgeGraph, Triple};
use crate::{dataset, seed, Error, Result};

#[derive(Debug, Clone)]
pub struct SynthParams {
    pub n_entities: usize,
    pub n_relations: usize,
    pub avg_degree: f64,
    /// Fraction of source entities that get an isomorphic counterpart.
    pub overlap_fraction: f64,
    /// (train, valid) shares of the gold alignment.
    pub split: (f64, f64),
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            n_entities: 1000,
            n_relations: 10,
            avg_degree: 4.0,
            overlap_fraction: 1.0,
            split: (0.3, 0.1),
            seed: 42,
        }
    }
}

fn random_triples(
    rng: &mut impl Rng,
    n_entities: usize,
    n_relations: usize,
    count: usize,
) -> Vec<(u32, u32, u32)> {
    let mut seen = HashSet::new();
    let mut triples = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while triples.len() < count && attempts < count * 20 {
        attempts += 1;
        let h = rng.gen_range(0..n_entities as u32);
        let t = rng.gen_range(0..n_entities as u32);
        if h == t {
            continue;
        }
        let r = rng.gen_range(0..n_relations as u32);
        if seen.insert((h, r, t)) {
            triples.push((h, r, t));
        }
    }
    triples
}

/// Attach one triple to every entity the list leaves isolated. The triple
/// file format carries entities only through triples, so an isolated
/// entity could not survive a round trip through disk.
fn connect_isolated(
    rng: &mut impl Rng,
    triples: &mut Vec<(u32, u32, u32)>,
    n_entities: usize,
    n_relations: usize,
) {
    let mut degree = vec![0usize; n_entities];
    for &(h, _, t) in triples.iter() {
        degree[h as usize] += 1;
        degree[t as usize] += 1;
    }
    let seen: HashSet<(u32, u32, u32)> = triples.iter().copied().collect();
    let mut seen = seen;
    for e in 0..n_entities as u32 {
        if degree[e as usize] > 0 {
            continue;
        }
        loop {
            let other = rng.gen_range(0..n_entities as u32);
            if other == e {
                continue;
            }
            let r = rng.gen_range(0..n_relations as u32);
            let t = if rng.gen_bool(0.5) { (e, r, other) } else { (other, r, e) };
            if seen.insert(t) {
                triples.push(t);
                degree[e as usize] += 1;
                degree[other as usize] += 1;
                break;
            }
        }
    }
}

/// Generate a (source, target, gold alignment) triple of artifacts.
///
/// Fully deterministic given `params.seed`.
pub fn generate_synthetic_pair(
    params: &SynthParams,
) -> Result<(KnowledgeGraph, KnowledgeGraph, AlignmentSet)> {
    let n = params.n_entities;
    if n < 2 {
        return Err(Error::InvalidInput(
            "synthetic graphs need at least 2 entities".into(),
        ));
    }
    if params.n_relations == 0 {
        return Err(Error::InvalidInput(
            "synthetic graphs need at least 1 relation".into(),
        ));
    }
    if !(params.overlap_fraction > 0.0 && params.overlap_fraction <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "overlap fraction must be in (0, 1], got {}",
            params.overlap_fraction
        )));
    }
    let m = ((n as f64) * params.avg_degree / 2.0).round() as usize;
    if m == 0 {
        return Err(Error::InvalidInput(format!(
            "avg_degree {} produces an edgeless graph",
            params.avg_degree
        )));
    }

    let mut rng = seed::rng(seed::derive(params.seed, "synth"));

    // Source graph.
    let mut src_triples = random_triples(&mut rng, n, params.n_relations, m);
    connect_isolated(&mut rng, &mut src_triples, n, params.n_relations);
    let mut b1 = GraphBuilder::new();
    for i in 0..n {
        b1.entity(&format!("s{i:06}"));
    }
    for r in 0..params.n_relations {
        b1.relation(&format!("p{r}"));
    }
    for &(h, r, t) in &src_triples {
        b1.triple_by_id(Triple {
            head: EntityId(h),
            relation: crate::graph::RelationId(r),
            tail: EntityId(t),
        });
    }
    let g1 = b1.build();

    // Matchable subset and its target-side relabeling.
    let n_overlap = ((n as f64) * params.overlap_fraction + 1e-9).round() as usize;
    let mut source_order: Vec<u32> = (0..n as u32).collect();
    source_order.shuffle(&mut rng);
    let matchable: Vec<u32> = source_order[..n_overlap].to_vec();
    let matchable_set: HashSet<u32> = matchable.iter().copied().collect();

    // Target ids 0..n: a shuffled mix of copies and fresh entities.
    let mut target_slots: Vec<u32> = (0..n as u32).collect();
    target_slots.shuffle(&mut rng);
    let mut src_to_tgt = vec![u32::MAX; n];
    for (i, &s) in matchable.iter().enumerate() {
        src_to_tgt[s as usize] = target_slots[i];
    }

    // Isomorphic copy of the induced subgraph on the matchable set.
    let mut tgt_triples: Vec<(u32, u32, u32)> = Vec::new();
    for &(h, r, t) in &src_triples {
        if matchable_set.contains(&h) && matchable_set.contains(&t) {
            tgt_triples.push((src_to_tgt[h as usize], r, src_to_tgt[t as usize]));
        }
    }
    let copied = tgt_triples.len();
    // Perturbation triples: connect fresh entities so the target graph has
    // comparable density; every perturbation touches at least one fresh
    // entity, so the copy stays isomorphic.
    let fresh: Vec<u32> = target_slots[n_overlap..].to_vec();
    if !fresh.is_empty() {
        let wanted = m.saturating_sub(copied);
        let mut seen: HashSet<(u32, u32, u32)> = tgt_triples.iter().copied().collect();
        let mut added = 0usize;
        let mut attempts = 0usize;
        while added < wanted && attempts < wanted * 20 + 100 {
            attempts += 1;
            let f = fresh[rng.gen_range(0..fresh.len())];
            let other = rng.gen_range(0..n as u32);
            if f == other {
                continue;
            }
            let (h, t) = if rng.gen_bool(0.5) { (f, other) } else { (other, f) };
            let r = rng.gen_range(0..params.n_relations as u32);
            if seen.insert((h, r, t)) {
                tgt_triples.push((h, r, t));
                added += 1;
            }
        }
        // A copied entity whose neighbors were all non-matchable arrives
        // with no triples; reconnect it (and any fresh leftover) inside
        // the target graph.
        connect_isolated(&mut rng, &mut tgt_triples, n, params.n_relations);
    }

    let mut b2 = GraphBuilder::new();
    for j in 0..n {
        b2.entity(&format!("t{j:06}"));
    }
    for r in 0..params.n_relations {
        b2.relation(&format!("q{r}"));
    }
    for &(h, r, t) in &tgt_triples {
        b2.triple_by_id(Triple {
            head: EntityId(h),
            relation: crate::graph::RelationId(r),
            tail: EntityId(t),
        });
    }
    let g2 = b2.build();

    let gold: Vec<(EntityId, EntityId)> = matchable
        .iter()
        .map(|&s| (EntityId(s), EntityId(src_to_tgt[s as usize])))
        .collect();
    let align = dataset::split_alignment(&gold, params.split, seed::derive(params.seed, "split"))?;
    Ok((g1, g2, align))
}
