// Forward-only experiments: how discriminative is the untrained encoder
// when non-seed input noise is scaled down, and how much does one round of
// neighborhood propagation add?
use kgalign::encoder::{EmbeddingState, SubgraphBatch};
use kgalign::landmark::{generate_subgraphs, label_importance, label_influence};
use kgalign::merge::merge_graphs;
use kgalign::partition::partition;
use kgalign::synth::{generate_synthetic_pair, SynthParams};
use kgalign::train::encode_all;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let get = |k: &str, d: f64| -> f64 {
        args.iter()
            .position(|a| a == k)
            .and_then(|i| args.get(i + 1))
            .and_then(|v| v.parse().ok())
            .unwrap_or(d)
    };
    let n_entities = get("--n", 1000.0) as usize;
    let dim = get("--dim", 32.0) as usize;
    let noise = get("--noise", 1.0);
    let hops = get("--hops", 0.0) as usize;

    let params = SynthParams {
        n_entities,
        n_relations: 5,
        avg_degree: 4.0,
        overlap_fraction: 1.0,
        split: (0.3, 0.1),
        seed: 5,
    };
    let (g1, g2, align) = generate_synthetic_pair(&params).unwrap();
    let merged = merge_graphs(&g1, &g2, &align.train).unwrap();
    let p = partition(&merged, 1, 0.05, 3).unwrap();
    let mut scores = label_importance(&merged, merged.seed_nodes(), 0.001, 0.49).unwrap();
    label_influence(&merged, &mut scores);
    let subs = generate_subgraphs(&merged, &p, &scores, 0.01, 0);

    let mut state = EmbeddingState::init(
        merged.node_count(),
        dim,
        8,
        g1.relation_count(),
        g2.relation_count(),
        7,
    );
    // Scale down the input rows of everything that is not a merged seed.
    let seed_set: std::collections::HashSet<u32> =
        merged.seed_nodes().iter().copied().collect();
    for v in 0..merged.node_count() as u32 {
        if !seed_set.contains(&v) {
            for k in 0..dim {
                state.input_table[v as usize * dim + k] *= noise;
            }
        }
    }
    // Optional propagation rounds: replace each non-seed input row by the
    // normalized mean of its neighbors' rows (seeds stay clamped).
    for _ in 0..hops {
        let snapshot = state.input_table.clone();
        for v in 0..merged.node_count() as u32 {
            if seed_set.contains(&v) {
                continue;
            }
            let nbrs = merged.adjacency(v);
            if nbrs.is_empty() {
                continue;
            }
            let row = &mut state.input_table[v as usize * dim..(v as usize + 1) * dim];
            for k in 0..dim {
                row[k] *= 0.5;
            }
            let w = 1.0 / nbrs.len() as f64;
            for &(u, _) in nbrs {
                for k in 0..dim {
                    row[k] += w * snapshot[u as usize * dim + k];
                }
            }
            let nrm = row.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            let scale = 0.5 / nrm;
            row.iter_mut().for_each(|x| *x *= scale);
        }
    }

    let batches: Vec<SubgraphBatch> = subs.iter().map(SubgraphBatch::new).collect();
    let outputs = encode_all(&batches, &state).unwrap();
    let space = kgalign::infer::fuse(&outputs, &merged, dim).unwrap();
    let (hits, mrr) = kgalign::infer::evaluate_ideal(&space, &align.test, &[1, 5]);
    println!(
        "noise={noise} hops={hops}: test_hits1={:.4} test_hits5={:.4} mrr={:.4}",
        hits[&1], hits[&5], mrr
    );
}
