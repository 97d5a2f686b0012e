//! Neighborhood-aggregation encoder.
//!
//! Two layers: a relation-gated mean over in-subgraph neighbor input
//! embeddings followed by a learned transform and tanh, then an
//! attention-weighted combination with a small set of proxy vectors. The
//! final embedding is unit-normalized. Message passing never leaves the
//! subgraph; landmarks carry cross-subgraph signal because their input rows
//! are shared.
//!
//! Gradients are derived analytically and checked against central finite
//! differences in the test suite.

use std::collections::HashMap;

use rand::Rng;

use crate::graph::RelationId;
use crate::merge::Side;
use crate::subgraph::Subgraph;
use crate::{seed, Error, Result};

/// Gate vectors per (graph side, relation, direction).
#[derive(Debug, Clone, PartialEq)]
pub struct RelGates {
    pub dim: usize,
    pub source_out: Vec<f64>,
    pub source_in: Vec<f64>,
    pub target_out: Vec<f64>,
    pub target_in: Vec<f64>,
}

impl RelGates {
    pub fn ones(dim: usize, n_source_rels: usize, n_target_rels: usize) -> Self {
        RelGates {
            dim,
            source_out: vec![1.0; n_source_rels * dim],
            source_in: vec![1.0; n_source_rels * dim],
            target_out: vec![1.0; n_target_rels * dim],
            target_in: vec![1.0; n_target_rels * dim],
        }
    }

    fn table(&self, side: Side, incoming: bool) -> &[f64] {
        match (side, incoming) {
            (Side::Source, false) => &self.source_out,
            (Side::Source, true) => &self.source_in,
            (Side::Target, false) => &self.target_out,
            (Side::Target, true) => &self.target_in,
        }
    }

    fn table_mut(&mut self, side: Side, incoming: bool) -> &mut [f64] {
        match (side, incoming) {
            (Side::Source, false) => &mut self.source_out,
            (Side::Source, true) => &mut self.source_in,
            (Side::Target, false) => &mut self.target_out,
            (Side::Target, true) => &mut self.target_in,
        }
    }

    pub fn gate(&self, side: Side, rel: RelationId, incoming: bool) -> &[f64] {
        let base = rel.0 as usize * self.dim;
        &self.table(side, incoming)[base..base + self.dim]
    }
}

/// Learned encoder parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub dim: usize,
    pub n_proxies: usize,
    /// d x d transform after neighborhood aggregation, row-major.
    pub w1: Vec<f64>,
    /// d x d transform applied to the proxy context, row-major.
    pub w2: Vec<f64>,
    /// p x d proxy vectors.
    pub proxies: Vec<f64>,
    pub gates: RelGates,
}

impl EncoderParams {
    /// Identity transform, zero proxy mixing, unit gates, seeded proxies.
    pub fn init(
        dim: usize,
        n_proxies: usize,
        n_source_rels: usize,
        n_target_rels: usize,
        seed_val: u64,
    ) -> Self {
        let mut w1 = vec![0.0; dim * dim];
        for i in 0..dim {
            w1[i * dim + i] = 1.0;
        }
        let mut rng = seed::rng(seed_val);
        let scale = 1.0 / (dim as f64).sqrt();
        let proxies = (0..n_proxies * dim)
            .map(|_| rng.gen_range(-1.0..1.0) * scale)
            .collect();
        EncoderParams {
            dim,
            n_proxies,
            w1,
            w2: vec![0.0; dim * dim],
            proxies,
            gates: RelGates::ones(dim, n_source_rels, n_target_rels),
        }
    }
}

/// Shared embedding state: one input row per joint node, the encoder
/// parameters, and (after training) per-subgraph output embeddings.
#[derive(Debug, Clone)]
pub struct EmbeddingState {
    pub dim: usize,
    /// |joint nodes| x d input representations, shared across subgraphs.
    pub input_table: Vec<f64>,
    pub params: EncoderParams,
    /// Output embeddings per subgraph, in `Subgraph::nodes()` order.
    /// Empty until a forward pass over every subgraph has run.
    pub outputs: Vec<SubgraphOutput>,
}

#[derive(Debug, Clone)]
pub struct SubgraphOutput {
    pub nodes: Vec<u32>,
    /// node-major, unit rows.
    pub vectors: Vec<f64>,
}

impl EmbeddingState {
    pub fn init(
        node_count: usize,
        dim: usize,
        n_proxies: usize,
        n_source_rels: usize,
        n_target_rels: usize,
        seed_val: u64,
    ) -> Self {
        let mut rng = seed::rng(seed::derive(seed_val, "input-table"));
        let scale = 1.0 / (dim as f64).sqrt();
        let input_table = (0..node_count * dim)
            .map(|_| rng.gen_range(-1.0..1.0) * scale)
            .collect();
        EmbeddingState {
            dim,
            input_table,
            params: EncoderParams::init(
                dim,
                n_proxies,
                n_source_rels,
                n_target_rels,
                seed::derive(seed_val, "encoder-params"),
            ),
            outputs: Vec::new(),
        }
    }

    pub fn input_row(&self, node: u32) -> &[f64] {
        let base = node as usize * self.dim;
        &self.input_table[base..base + self.dim]
    }
}

/// One directed message within a subgraph, in local indices.
#[derive(Debug, Clone, Copy)]
struct LocalEdge {
    neighbor: u32,
    relation: RelationId,
    side: Side,
    incoming: bool,
}

/// A subgraph prepared for encoding: local index space and CSR-style
/// message lists built only from the subgraph's own triples.
#[derive(Debug, Clone)]
pub struct SubgraphBatch {
    /// Global joint ids in local order (core then landmarks).
    pub nodes: Vec<u32>,
    global_to_local: HashMap<u32, u32>,
    edge_offsets: Vec<usize>,
    edges: Vec<LocalEdge>,
    /// Unique local neighbors per node (for the reconstruction loss).
    pub neighbor_sets: Vec<Vec<u32>>,
}

impl SubgraphBatch {
    pub fn new(s: &Subgraph) -> Self {
        let nodes: Vec<u32> = s.nodes().collect();
        let global_to_local: HashMap<u32, u32> = nodes
            .iter()
            .enumerate()
            .map(|(i, &g)| (g, i as u32))
            .collect();
        let n = nodes.len();
        let mut per_node: Vec<Vec<LocalEdge>> = vec![Vec::new(); n];
        for t in &s.triples {
            let h = global_to_local[&t.head];
            let tl = global_to_local[&t.tail];
            per_node[h as usize].push(LocalEdge {
                neighbor: tl,
                relation: t.relation,
                side: t.side,
                incoming: false,
            });
            per_node[tl as usize].push(LocalEdge {
                neighbor: h,
                relation: t.relation,
                side: t.side,
                incoming: true,
            });
        }
        let mut edge_offsets = Vec::with_capacity(n + 1);
        let mut edges = Vec::new();
        let mut neighbor_sets = Vec::with_capacity(n);
        edge_offsets.push(0);
        for list in per_node {
            let mut nbrs: Vec<u32> = list.iter().map(|e| e.neighbor).collect();
            nbrs.sort_unstable();
            nbrs.dedup();
            neighbor_sets.push(nbrs);
            edges.extend(list);
            edge_offsets.push(edges.len());
        }
        SubgraphBatch {
            nodes,
            global_to_local,
            edge_offsets,
            edges,
            neighbor_sets,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn local_of(&self, global: u32) -> Option<u32> {
        self.global_to_local.get(&global).copied()
    }

    fn node_edges(&self, local: usize) -> &[LocalEdge] {
        &self.edges[self.edge_offsets[local]..self.edge_offsets[local + 1]]
    }
}

/// Intermediate activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub dim: usize,
    /// Aggregated neighborhood means.
    mean: Vec<f64>,
    /// tanh(W1 mean).
    hidden: Vec<f64>,
    /// Proxy attention weights, node-major p columns.
    attn: Vec<f64>,
    /// Attention-combined proxy context.
    context: Vec<f64>,
    /// Pre-normalization norms.
    norm: Vec<f64>,
    /// Final unit outputs.
    pub out: Vec<f64>,
}

impl ForwardPass {
    pub fn output_row(&self, local: usize) -> &[f64] {
        &self.out[local * self.dim..(local + 1) * self.dim]
    }
}

/// Encode every node of the batch. Reads only the batch's own edges plus
/// the shared input table rows of its nodes.
pub fn encode_subgraph(
    batch: &SubgraphBatch,
    state: &EmbeddingState,
) -> Result<ForwardPass> {
    let d = state.dim;
    let p = state.params.n_proxies;
    if batch.is_empty() {
        return Err(Error::InvalidInput("cannot encode an empty subgraph".into()));
    }
    if state.input_table.is_empty() {
        return Err(Error::InvalidInput("embedding state is uninitialized".into()));
    }
    let n = batch.len();
    let mut mean = vec![0.0; n * d];
    let mut hidden = vec![0.0; n * d];
    let mut attn = vec![0.0; n * p];
    let mut context = vec![0.0; n * d];
    let mut norm = vec![0.0; n];
    let mut out = vec![0.0; n * d];
    let mut z = vec![0.0; d];

    for i in 0..n {
        let m = &mut mean[i * d..(i + 1) * d];
        m.copy_from_slice(state.input_row(batch.nodes[i]));
        let edges = batch.node_edges(i);
        for e in edges {
            let x = state.input_row(batch.nodes[e.neighbor as usize]);
            let g = state.params.gates.gate(e.side, e.relation, e.incoming);
            for k in 0..d {
                m[k] += x[k] * g[k];
            }
        }
        let inv = 1.0 / (1.0 + edges.len() as f64);
        for v in m.iter_mut() {
            *v *= inv;
        }

        let h = &mut hidden[i * d..(i + 1) * d];
        for r in 0..d {
            let row = &state.params.w1[r * d..(r + 1) * d];
            let mut acc = 0.0;
            for k in 0..d {
                acc += row[k] * m[k];
            }
            h[r] = acc.tanh();
        }

        // Proxy attention.
        let a = &mut attn[i * p..(i + 1) * p];
        let mut max_s = f64::NEG_INFINITY;
        for q in 0..p {
            let pv = &state.params.proxies[q * d..(q + 1) * d];
            let mut s = 0.0;
            for k in 0..d {
                s += h[k] * pv[k];
            }
            a[q] = s;
            max_s = max_s.max(s);
        }
        let mut z_sum = 0.0;
        for q in 0..p {
            a[q] = (a[q] - max_s).exp();
            z_sum += a[q];
        }
        for q in 0..p {
            a[q] /= z_sum;
        }
        let c = &mut context[i * d..(i + 1) * d];
        for q in 0..p {
            let pv = &state.params.proxies[q * d..(q + 1) * d];
            for k in 0..d {
                c[k] += a[q] * pv[k];
            }
        }

        for r in 0..d {
            let row = &state.params.w2[r * d..(r + 1) * d];
            let mut acc = h[r];
            for k in 0..d {
                acc += row[k] * c[k];
            }
            z[r] = acc;
        }
        let mut nrm = 0.0;
        for k in 0..d {
            nrm += z[k] * z[k];
        }
        let nrm = nrm.sqrt().max(1e-12);
        norm[i] = nrm;
        for k in 0..d {
            out[i * d + k] = z[k] / nrm;
        }
    }

    Ok(ForwardPass {
        dim: d,
        mean,
        hidden,
        attn,
        context,
        norm,
        out,
    })
}

/// Gradients produced by one batch backward pass.
#[derive(Debug, Clone)]
pub struct BatchGrads {
    /// d/d input rows of the batch nodes, local node-major.
    pub x_local: Vec<f64>,
    pub w1: Vec<f64>,
    pub w2: Vec<f64>,
    pub proxies: Vec<f64>,
    pub gates: RelGates,
}

/// Backpropagate `grad_out` (d/d output embeddings) through the encoder.
pub fn backward_subgraph(
    batch: &SubgraphBatch,
    state: &EmbeddingState,
    fwd: &ForwardPass,
    grad_out: &[f64],
) -> BatchGrads {
    let d = state.dim;
    let p = state.params.n_proxies;
    let n = batch.len();
    let gates = &state.params.gates;
    let mut gx = vec![0.0; n * d];
    let mut gw1 = vec![0.0; d * d];
    let mut gw2 = vec![0.0; d * d];
    let mut gproxies = vec![0.0; p * d];
    let mut ggates = RelGates {
        dim: d,
        source_out: vec![0.0; gates.source_out.len()],
        source_in: vec![0.0; gates.source_in.len()],
        target_out: vec![0.0; gates.target_out.len()],
        target_in: vec![0.0; gates.target_in.len()],
    };

    let mut gz = vec![0.0; d];
    let mut gh = vec![0.0; d];
    let mut gc = vec![0.0; d];
    let mut gs = vec![0.0; p];
    let mut gm = vec![0.0; d];
    for i in 0..n {
        let go = &grad_out[i * d..(i + 1) * d];
        let o = &fwd.out[i * d..(i + 1) * d];
        let nrm = fwd.norm[i];
        // Through normalization: project out the radial component.
        let dot: f64 = go.iter().zip(o.iter()).map(|(a, b)| a * b).sum();
        for k in 0..d {
            gz[k] = (go[k] - dot * o[k]) / nrm;
        }

        // z = h + W2 c
        let c = &fwd.context[i * d..(i + 1) * d];
        for k in 0..d {
            gh[k] = gz[k];
        }
        for k in 0..d {
            gc[k] = 0.0;
        }
        for r in 0..d {
            let grow = &mut gw2[r * d..(r + 1) * d];
            for k in 0..d {
                grow[k] += gz[r] * c[k];
                gc[k] += state.params.w2[r * d + k] * gz[r];
            }
        }

        // c = sum_q a_q P_q with a = softmax(h . P)
        let a = &fwd.attn[i * p..(i + 1) * p];
        let h = &fwd.hidden[i * d..(i + 1) * d];
        let mut ga_dot = 0.0;
        for q in 0..p {
            let pv = &state.params.proxies[q * d..(q + 1) * d];
            let mut ga = 0.0;
            for k in 0..d {
                ga += pv[k] * gc[k];
            }
            gs[q] = ga;
            ga_dot += a[q] * ga;
        }
        for q in 0..p {
            gs[q] = a[q] * (gs[q] - ga_dot);
        }
        for q in 0..p {
            let gpv = &mut gproxies[q * d..(q + 1) * d];
            let pv = &state.params.proxies[q * d..(q + 1) * d];
            for k in 0..d {
                // c-path and score-path contributions.
                gpv[k] += a[q] * gc[k] + gs[q] * h[k];
                gh[k] += gs[q] * pv[k];
            }
        }

        // h = tanh(W1 m)
        let m = &fwd.mean[i * d..(i + 1) * d];
        for k in 0..d {
            gm[k] = 0.0;
        }
        for r in 0..d {
            let gu = (1.0 - h[r] * h[r]) * gh[r];
            let grow = &mut gw1[r * d..(r + 1) * d];
            for k in 0..d {
                grow[k] += gu * m[k];
                gm[k] += state.params.w1[r * d + k] * gu;
            }
        }

        // Mean over self + gated neighbor messages.
        let edges = batch.node_edges(i);
        let inv = 1.0 / (1.0 + edges.len() as f64);
        for k in 0..d {
            gx[i * d + k] += gm[k] * inv;
        }
        for e in edges {
            let j = e.neighbor as usize;
            let x = state.input_row(batch.nodes[j]);
            let g = gates.gate(e.side, e.relation, e.incoming);
            let gg = ggates.table_mut(e.side, e.incoming);
            let base = e.relation.0 as usize * d;
            for k in 0..d {
                gx[j * d + k] += gm[k] * g[k] * inv;
                gg[base + k] += gm[k] * x[k] * inv;
            }
        }
    }

    BatchGrads {
        x_local: gx,
        w1: gw1,
        w2: gw2,
        proxies: gproxies,
        gates: ggates,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphBuilder;
    use crate::merge::merge_graphs;
    use crate::subgraph::Subgraph;

    fn toy_batch() -> (SubgraphBatch, EmbeddingState) {
        let mut b = GraphBuilder::new();
        b.triple("a", "r", "b");
        b.triple("b", "r", "c");
        b.triple("c", "s", "a");
        b.entity("lone");
        let g1 = b.build();
        let g2 = {
            let mut b = GraphBuilder::new();
            b.triple("x", "p", "y");
            b.build()
        };
        let m = merge_graphs(&g1, &g2, &[]).unwrap();
        let s = Subgraph {
            block: 0,
            core_nodes: (0..m.node_count() as u32).collect(),
            landmark_nodes: Vec::new(),
            triples: m.triples().to_vec(),
        };
        let batch = SubgraphBatch::new(&s);
        let state = EmbeddingState::init(m.node_count(), 8, 4, 2, 1, 7);
        (batch, state)
    }

    #[test]
    fn outputs_are_unit_norm() {
        let (batch, state) = toy_batch();
        let fwd = encode_subgraph(&batch, &state).unwrap();
        for i in 0..batch.len() {
            let row = fwd.output_row(i);
            let nrm: f64 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((nrm - 1.0).abs() < 1e-6, "norm {nrm}");
        }
    }

    #[test]
    fn isolated_node_reduces_to_self_transform() {
        let (batch, state) = toy_batch();
        let fwd = encode_subgraph(&batch, &state).unwrap();
        // "lone" has no edges: its mean must equal its own input row.
        let local = batch.local_of(3).unwrap() as usize;
        let d = state.dim;
        for k in 0..d {
            assert_eq!(fwd.mean[local * d + k], state.input_row(3)[k]);
        }
    }

    #[test]
    fn identical_inputs_and_neighborhoods_give_identical_outputs() {
        // Two separate edges u1-v1 and u2-v2 with identical input rows and
        // the same relation: u1 and u2 must encode identically.
        let mut b = GraphBuilder::new();
        b.triple("u1", "r", "v1");
        b.triple("u2", "r", "v2");
        let g1 = b.build();
        let g2 = {
            let mut b = GraphBuilder::new();
            b.triple("x", "p", "y");
            b.build()
        };
        let m = merge_graphs(&g1, &g2, &[]).unwrap();
        let s = Subgraph {
            block: 0,
            core_nodes: (0..m.node_count() as u32).collect(),
            landmark_nodes: Vec::new(),
            triples: m.triples().to_vec(),
        };
        let batch = SubgraphBatch::new(&s);
        let mut state = EmbeddingState::init(m.node_count(), 8, 4, 1, 1, 3);
        let d = state.dim;
        // Copy u1/v1 rows over u2/v2.
        let u1 = batch.local_of(0).unwrap() as usize;
        let v1 = batch.local_of(1).unwrap() as usize;
        let u2 = batch.local_of(2).unwrap() as usize;
        let v2 = batch.local_of(3).unwrap() as usize;
        let (a, b2) = (u1 * d, u2 * d);
        for k in 0..d {
            let v = state.input_table[a + k];
            state.input_table[b2 + k] = v;
        }
        let (a, b2) = (v1 * d, v2 * d);
        for k in 0..d {
            let v = state.input_table[a + k];
            state.input_table[b2 + k] = v;
        }
        let fwd = encode_subgraph(&batch, &state).unwrap();
        for k in 0..d {
            assert!((fwd.output_row(u1)[k] - fwd.output_row(u2)[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn encoding_reads_nothing_outside_the_subgraph() {
        // Two merged graphs that agree on the subgraph's triples but differ
        // elsewhere must encode the subgraph identically.
        let build = |extra: bool| {
            let mut b = GraphBuilder::new();
            b.triple("a", "r", "b");
            b.triple("b", "r", "c");
            b.triple("d", "r", "e");
            if extra {
                b.triple("d", "r", "a");
            }
            let g1 = b.build();
            let g2 = {
                let mut b = GraphBuilder::new();
                b.triple("x", "p", "y");
                b.build()
            };
            merge_graphs(&g1, &g2, &[]).unwrap()
        };
        let m1 = build(false);
        let m2 = build(true);
        let core = vec![0u32, 1, 2];
        let mk = |m: &crate::merge::MergedGraph| {
            let members: std::collections::HashSet<u32> = core.iter().copied().collect();
            Subgraph {
                block: 0,
                core_nodes: core.clone(),
                landmark_nodes: Vec::new(),
                triples: crate::subgraph::induce_triples(m, &members),
            }
        };
        let s1 = mk(&m1);
        let s2 = mk(&m2);
        let state = EmbeddingState::init(m2.node_count(), 8, 4, 1, 1, 5);
        let f1 = encode_subgraph(&SubgraphBatch::new(&s1), &state).unwrap();
        let f2 = encode_subgraph(&SubgraphBatch::new(&s2), &state).unwrap();
        assert_eq!(f1.out, f2.out);
    }
}
