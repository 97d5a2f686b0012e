//! Balanced k-way min-cut partitioning of the joint graph.
//!
//! A multilevel scheme: coarsening by heavy-edge matching, initial blocks by
//! seeded region growing on the coarsest graph, then boundary refinement
//! passes that only accept balance-preserving, cut-reducing moves while the
//! assignment is projected back level by level.
//!
//! All edge weights are multiplicities: parallel joint edges between the
//! same node pair collapse to a single weighted edge, so the reported cut is
//! the number of discarded triples.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;

use crate::graph::EntityId;
use crate::merge::MergedGraph;
use crate::{seed, Error, Result};

/// A complete assignment of joint nodes to blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub assignment: Vec<u32>,
    pub n_blocks: usize,
    /// Total weight (triple count) of edges whose endpoints differ in block.
    pub cut_edges: u64,
}

impl Partition {
    pub fn block_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.n_blocks];
        for &b in &self.assignment {
            sizes[b as usize] += 1;
        }
        sizes
    }

    pub fn balance_cap(node_count: usize, n_blocks: usize, epsilon: f64) -> usize {
        ((1.0 + epsilon) * node_count as f64 / n_blocks as f64).ceil() as usize
    }
}

/// Undirected weighted adjacency: `adj[v]` lists `(neighbor, weight)` pairs
/// sorted by neighbor, with each edge present in both endpoint lists and no
/// self entries.
pub type WeightedAdj = Vec<Vec<(u32, u64)>>;

/// Build the partitioning view of a merged graph.
pub fn merged_adjacency(m: &MergedGraph) -> WeightedAdj {
    (0..m.node_count() as u32)
        .map(|v| {
            m.adjacency(v)
                .iter()
                .map(|&(nbr, mult)| (nbr, mult as u64))
                .collect()
        })
        .collect()
}

/// Partition the merged graph into `n` balanced blocks.
pub fn partition(m: &MergedGraph, n: usize, epsilon: f64, seed_val: u64) -> Result<Partition> {
    let adj = merged_adjacency(m);
    partition_adjacency(&adj, n, epsilon, seed_val)
}

/// Partition an arbitrary weighted adjacency. Exposed so single-graph
/// baselines can reuse the same partitioner.
pub fn partition_adjacency(
    adj: &WeightedAdj,
    n: usize,
    epsilon: f64,
    seed_val: u64,
) -> Result<Partition> {
    let node_count = adj.len();
    if n == 0 {
        return Err(Error::InvalidInput("block count must be at least 1".into()));
    }
    if n > node_count {
        return Err(Error::InvalidInput(format!(
            "cannot split {node_count} nodes into {n} blocks"
        )));
    }
    if epsilon < 0.0 {
        return Err(Error::InvalidInput(format!(
            "balance slack must be non-negative, got {epsilon}"
        )));
    }
    let cap = Partition::balance_cap(node_count, n, epsilon) as u64;
    if cap * (n as u64) < node_count as u64 {
        return Err(Error::InvalidInput(format!(
            "balance slack {epsilon} is infeasible for {n} blocks over {node_count} nodes"
        )));
    }
    if n == 1 {
        return Ok(Partition {
            assignment: vec![0; node_count],
            n_blocks: 1,
            cut_edges: 0,
        });
    }

    let mut rng = seed::rng(seed_val);

    // Coarsening stack: levels[0] is the input graph.
    let mut levels: Vec<Level> = vec![Level {
        adj: adj.clone(),
        node_w: vec![1u64; node_count],
    }];
    let mut maps: Vec<Vec<u32>> = Vec::new();
    let stop_at = (20 * n).max(96);
    let max_node_w = (cap / 4).max(1);
    loop {
        let current = levels.last().unwrap();
        if current.adj.len() <= stop_at {
            break;
        }
        let (coarse, map) = coarsen(current, max_node_w, &mut rng);
        if coarse.adj.len() as f64 > 0.97 * current.adj.len() as f64 {
            break;
        }
        levels.push(coarse);
        maps.push(map);
    }

    // Initial blocks on the coarsest level, then refine while projecting
    // back to finer levels.
    let coarsest = levels.last().unwrap();
    let mut assignment = initial_blocks(coarsest, n, cap, &mut rng);
    repair_balance(coarsest, &mut assignment, n, cap);
    refine(coarsest, &mut assignment, n, cap, 10);
    for li in (0..maps.len()).rev() {
        let map = &maps[li];
        let fine = &levels[li];
        let mut fine_assignment = vec![0u32; fine.adj.len()];
        for v in 0..fine.adj.len() {
            fine_assignment[v] = assignment[map[v] as usize];
        }
        assignment = fine_assignment;
        refine(fine, &mut assignment, n, cap, 10);
    }

    ensure_nonempty(&levels[0], &mut assignment, n);
    let cut_edges = cut_of_assignment(adj, &assignment);
    Ok(Partition {
        assignment,
        n_blocks: n,
        cut_edges,
    })
}

/// Weighted cut of an assignment, counting each undirected edge once.
pub fn cut_of_assignment(adj: &WeightedAdj, assignment: &[u32]) -> u64 {
    let mut cut = 0u64;
    for (v, nbrs) in adj.iter().enumerate() {
        for &(u, w) in nbrs {
            if (u as usize) > v && assignment[v] != assignment[u as usize] {
                cut += w;
            }
        }
    }
    cut
}

/// Seeded perfectly-balanced random assignment; the baseline the
/// partitioner has to beat.
pub fn random_balanced_assignment(node_count: usize, n: usize, seed_val: u64) -> Vec<u32> {
    let mut order: Vec<u32> = (0..node_count as u32).collect();
    order.shuffle(&mut seed::rng(seed_val));
    let mut assignment = vec![0u32; node_count];
    for (i, &v) in order.iter().enumerate() {
        assignment[v as usize] = (i % n) as u32;
    }
    assignment
}

struct Level {
    adj: WeightedAdj,
    node_w: Vec<u64>,
}

fn coarsen(level: &Level, max_node_w: u64, rng: &mut impl rand::Rng) -> (Level, Vec<u32>) {
    let n = level.adj.len();
    let mut order: Vec<u32> = (0..n as u32).collect();
    order.shuffle(rng);

    let mut mate: Vec<u32> = (0..n as u32).collect();
    let mut matched = vec![false; n];
    for &v in &order {
        let v = v as usize;
        if matched[v] {
            continue;
        }
        let mut best: Option<(u64, u32)> = None;
        for &(u, w) in &level.adj[v] {
            if matched[u as usize] || u as usize == v {
                continue;
            }
            if level.node_w[v] + level.node_w[u as usize] > max_node_w {
                continue;
            }
            // Heaviest edge wins; adjacency is neighbor-sorted, so the
            // first maximum gives the lowest index on ties.
            if best.map_or(true, |(bw, _)| w > bw) {
                best = Some((w, u));
            }
        }
        if let Some((_, u)) = best {
            mate[v] = u;
            mate[u as usize] = v as u32;
            matched[v] = true;
            matched[u as usize] = true;
        }
    }

    // Coarse ids in index order of the lower endpoint.
    let mut map = vec![u32::MAX; n];
    let mut next = 0u32;
    for v in 0..n {
        if map[v] != u32::MAX {
            continue;
        }
        map[v] = next;
        let u = mate[v] as usize;
        if u != v && map[u] == u32::MAX {
            map[u] = next;
        }
        next += 1;
    }

    let coarse_n = next as usize;
    let mut node_w = vec![0u64; coarse_n];
    for v in 0..n {
        node_w[map[v] as usize] += level.node_w[v];
    }
    let mut rows: Vec<HashMap<u32, u64>> = vec![HashMap::new(); coarse_n];
    for v in 0..n {
        let cv = map[v];
        for &(u, w) in &level.adj[v] {
            let cu = map[u as usize];
            if cu != cv {
                *rows[cv as usize].entry(cu).or_insert(0) += w;
            }
        }
    }
    let adj: WeightedAdj = rows
        .into_iter()
        .map(|m| {
            let mut v: Vec<(u32, u64)> = m.into_iter().collect();
            v.sort_unstable();
            v
        })
        .collect();
    (Level { adj, node_w }, map)
}

/// Grow `n` blocks by seeded BFS-style region growing.
fn initial_blocks(level: &Level, n: usize, cap: u64, rng: &mut impl rand::Rng) -> Vec<u32> {
    let node_count = level.adj.len();
    let total_w: u64 = level.node_w.iter().sum();
    let mut assignment = vec![u32::MAX; node_count];
    let mut remaining_w = total_w;

    for b in 0..n as u32 {
        let start = pick_start(level, &assignment, rng);
        let Some(start) = start else { break };
        let target = remaining_w / (n as u64 - b as u64);
        let mut block_w = 0u64;
        // Connection weight of each unassigned frontier node to the block.
        let mut gain: HashMap<u32, u64> = HashMap::new();
        let mut pick = Some(start);
        while let Some(v) = pick {
            assignment[v as usize] = b;
            block_w += level.node_w[v as usize];
            remaining_w -= level.node_w[v as usize];
            gain.remove(&v);
            for &(u, w) in &level.adj[v as usize] {
                if assignment[u as usize] == u32::MAX {
                    *gain.entry(u).or_insert(0) += w;
                }
            }
            if block_w >= target {
                break;
            }
            // Best-connected frontier node that fits under the cap.
            pick = gain
                .iter()
                .filter(|&(&u, _)| block_w + level.node_w[u as usize] <= cap)
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
                .map(|(&u, _)| u);
        }
    }

    // Leftovers go to the best-connected block that still fits.
    let mut block_w = vec![0u64; n];
    for v in 0..node_count {
        if assignment[v] != u32::MAX {
            block_w[assignment[v] as usize] += level.node_w[v];
        }
    }
    for v in 0..node_count {
        if assignment[v] != u32::MAX {
            continue;
        }
        let mut conn = vec![0u64; n];
        for &(u, w) in &level.adj[v] {
            if assignment[u as usize] != u32::MAX {
                conn[assignment[u as usize] as usize] += w;
            }
        }
        let mut best: Option<u32> = None;
        for b in 0..n {
            if block_w[b] + level.node_w[v] > cap {
                continue;
            }
            match best {
                None => best = Some(b as u32),
                Some(cur) => {
                    let better = conn[b] > conn[cur as usize]
                        || (conn[b] == conn[cur as usize] && block_w[b] < block_w[cur as usize]);
                    if better {
                        best = Some(b as u32);
                    }
                }
            }
        }
        let b = best.unwrap_or_else(|| {
            // Nothing fits; take the lightest block and let repair fix it.
            (0..n).min_by_key(|&b| block_w[b]).unwrap() as u32
        });
        assignment[v] = b;
        block_w[b as usize] += level.node_w[v];
    }
    assignment
}

fn pick_start(level: &Level, assignment: &[u32], rng: &mut impl rand::Rng) -> Option<u32> {
    let unassigned: Vec<u32> = (0..level.adj.len() as u32)
        .filter(|&v| assignment[v as usize] == u32::MAX)
        .collect();
    if unassigned.is_empty() {
        return None;
    }
    let any_assigned = assignment.iter().any(|&a| a != u32::MAX);
    if !any_assigned {
        let i = rng.gen_range(0..unassigned.len());
        return Some(unassigned[i]);
    }
    // Farthest unassigned node from everything assigned, so blocks start
    // spread out. Multi-source BFS over hop distance.
    let n = level.adj.len();
    let mut dist = vec![u32::MAX; n];
    let mut queue = std::collections::VecDeque::new();
    for v in 0..n {
        if assignment[v] != u32::MAX {
            dist[v] = 0;
            queue.push_back(v as u32);
        }
    }
    while let Some(v) = queue.pop_front() {
        for &(u, _) in &level.adj[v as usize] {
            if dist[u as usize] == u32::MAX {
                dist[u as usize] = dist[v as usize] + 1;
                queue.push_back(u);
            }
        }
    }
    // Unreachable nodes (other components) count as farthest.
    unassigned
        .into_iter()
        .max_by(|&a, &b| dist[a as usize].cmp(&dist[b as usize]).then(b.cmp(&a)))
}

/// Move nodes out of over-capacity blocks; used right after initial
/// placement where coarse node weights can overshoot.
fn repair_balance(level: &Level, assignment: &mut [u32], n: usize, cap: u64) {
    let node_count = level.adj.len();
    let mut block_w = vec![0u64; n];
    for v in 0..node_count {
        block_w[assignment[v] as usize] += level.node_w[v];
    }
    for _ in 0..4 * node_count {
        let Some(over) = (0..n).find(|&b| block_w[b] > cap) else {
            return;
        };
        // Lightest node of the overweight block moves to the lightest block
        // that can take it.
        let v = (0..node_count)
            .filter(|&v| assignment[v] as usize == over)
            .min_by_key(|&v| (level.node_w[v], v))
            .expect("overweight block cannot be empty");
        let dest = (0..n)
            .filter(|&b| b != over)
            .min_by_key(|&b| (block_w[b], b));
        let Some(dest) = dest else { return };
        block_w[over] -= level.node_w[v];
        block_w[dest] += level.node_w[v];
        assignment[v] = dest as u32;
    }
}

/// Greedy boundary passes: accept only strictly cut-reducing moves that
/// keep the destination under the cap and never empty a block.
fn refine(level: &Level, assignment: &mut [u32], n: usize, cap: u64, max_passes: usize) {
    let node_count = level.adj.len();
    let mut block_w = vec![0u64; n];
    let mut block_n = vec![0usize; n];
    for v in 0..node_count {
        block_w[assignment[v] as usize] += level.node_w[v];
        block_n[assignment[v] as usize] += 1;
    }
    let mut conn = vec![0u64; n];
    for _ in 0..max_passes {
        let mut moves = 0usize;
        for v in 0..node_count {
            let own = assignment[v] as usize;
            if block_n[own] <= 1 {
                continue;
            }
            conn.iter_mut().for_each(|c| *c = 0);
            let mut boundary = false;
            for &(u, w) in &level.adj[v] {
                let b = assignment[u as usize] as usize;
                conn[b] += w;
                if b != own {
                    boundary = true;
                }
            }
            if !boundary {
                continue;
            }
            let mut best: Option<(u64, usize)> = None;
            for b in 0..n {
                if b == own || conn[b] <= conn[own] {
                    continue;
                }
                if block_w[b] + level.node_w[v] > cap {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((bw, bb)) => {
                        conn[b] > bw || (conn[b] == bw && block_w[b] < block_w[bb])
                    }
                };
                if better {
                    best = Some((conn[b], b));
                }
            }
            if let Some((_, b)) = best {
                assignment[v] = b as u32;
                block_w[own] -= level.node_w[v];
                block_w[b] += level.node_w[v];
                block_n[own] -= 1;
                block_n[b] += 1;
                moves += 1;
            }
        }
        if moves == 0 {
            break;
        }
    }
}

/// Guarantee every block owns at least one node (tiny graphs only).
fn ensure_nonempty(level: &Level, assignment: &mut [u32], n: usize) {
    let mut block_n = vec![0usize; n];
    for &a in assignment.iter() {
        block_n[a as usize] += 1;
    }
    for b in 0..n {
        while block_n[b] == 0 {
            let donor = (0..n).max_by_key(|&x| block_n[x]).unwrap();
            let v = (0..level.adj.len())
                .filter(|&v| assignment[v] as usize == donor)
                .max_by_key(|&v| v)
                .unwrap();
            assignment[v] = b as u32;
            block_n[donor] -= 1;
            block_n[b] += 1;
        }
    }
}

/// Fraction of `pairs` whose two joint nodes land in the same block.
/// Defined as 1.0 for an empty pair set.
pub fn preserved_alignment_recall(
    p: &Partition,
    m: &MergedGraph,
    pairs: &[(EntityId, EntityId)],
) -> f64 {
    if pairs.is_empty() {
        return 1.0;
    }
    let kept = pairs
        .iter()
        .filter(|&&(e1, e2)| {
            let a = m.forward_source(e1);
            let b = m.forward_target(e2);
            p.assignment[a as usize] == p.assignment[b as usize]
        })
        .count();
    kept as f64 / pairs.len() as f64
}

/// Write the partition file: a header line followed by one
/// `node TAB block` line per joint node.
pub fn write_partition(path: &Path, p: &Partition) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(
        w,
        "#nodes={} #blocks={} cut={}",
        p.assignment.len(),
        p.n_blocks,
        p.cut_edges
    )
    .map_err(|e| Error::io(path, e))?;
    for (v, &b) in p.assignment.iter().enumerate() {
        writeln!(w, "{v}\t{b}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

pub fn read_partition(path: &Path) -> Result<Partition> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "missing header"))?
        .map_err(|e| Error::io(path, e))?;
    let mut nodes = None;
    let mut blocks = None;
    let mut cut = None;
    for field in header.split_whitespace() {
        if let Some(v) = field.strip_prefix("#nodes=") {
            nodes = v.parse::<usize>().ok();
        } else if let Some(v) = field.strip_prefix("#blocks=") {
            blocks = v.parse::<usize>().ok();
        } else if let Some(v) = field.strip_prefix("cut=") {
            cut = v.parse::<u64>().ok();
        }
    }
    let (nodes, n_blocks, cut_edges) = match (nodes, blocks, cut) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => return Err(Error::parse(path, 1, "malformed partition header")),
    };
    let mut assignment = vec![u32::MAX; nodes];
    for (lineno, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let parse = |s: Option<&str>| s.and_then(|x| x.parse::<usize>().ok());
        match (parse(fields.next()), parse(fields.next())) {
            (Some(v), Some(b)) if v < nodes && b < n_blocks => assignment[v] = b as u32,
            _ => return Err(Error::parse(path, lineno + 2, "malformed partition line")),
        }
    }
    if assignment.iter().any(|&a| a == u32::MAX) {
        return Err(Error::Runtime(format!(
            "partition file {} does not cover every node",
            path.display()
        )));
    }
    Ok(Partition {
        assignment,
        n_blocks,
        cut_edges,
    })
}
