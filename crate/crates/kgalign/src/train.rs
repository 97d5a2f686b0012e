//! Mini-batch training over subgraphs.
//!
//! Each epoch visits the subgraphs in a seeded-shuffled order. Per batch:
//! forward encode, combine the three weighted losses, backpropagate, and
//! update the batch's input rows, the encoder parameters and the proxies
//! with Adam. Landmark rows are shared, so a node present in several
//! subgraphs accumulates updates from each of them. Validation Hits@1 over
//! the fused space picks the state that is returned.

use std::collections::HashSet;

use rand::seq::SliceRandom;

use crate::encoder::{
    backward_subgraph, encode_subgraph, EmbeddingState, SubgraphBatch, SubgraphOutput,
};
use crate::graph::AlignmentSet;
use crate::infer::{evaluate_ideal, fuse};
use crate::loss::{
    align_loss, cross_loss, reconstruct_loss, sample_cross_negatives, LossForm, LossTerm,
    NegativeBatch,
};
use crate::merge::MergedGraph;
use crate::subgraph::Subgraph;
use crate::{seed, Error, Result};

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub dim: usize,
    /// Scale factor inside the alignment exponent.
    pub alpha: f64,
    /// Margin separating identical from dissimilar entities.
    pub beta: f64,
    pub n_proxies: usize,
    /// Cross-subgraph negatives sampled per batch.
    pub n_cross: usize,
    pub w_align: f64,
    pub w_cross: f64,
    pub w_rec: f64,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    pub loss_form: LossForm,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 128,
            alpha: 15.0,
            beta: 0.7,
            n_proxies: 64,
            n_cross: 256,
            w_align: 1.0,
            w_cross: 0.1,
            w_rec: 0.1,
            lr: 0.02,
            epochs: 50,
            seed: 42,
            loss_form: LossForm::Literal,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidInput("embedding width must be positive".into()));
        }
        if self.alpha <= 0.0 {
            return Err(Error::InvalidInput("alpha must be positive".into()));
        }
        if self.beta < 0.0 {
            return Err(Error::InvalidInput("beta must be non-negative".into()));
        }
        if self.w_align <= 0.0 || self.w_cross < 0.0 || self.w_rec < 0.0 {
            return Err(Error::InvalidInput(
                "loss weights must be non-negative with w_align > 0".into(),
            ));
        }
        if self.n_proxies == 0 {
            return Err(Error::InvalidInput("at least one proxy is required".into()));
        }
        Ok(())
    }
}

/// Adam moments for one dense tensor.
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Moments {
    fn new(len: usize) -> Self {
        Moments {
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }
}

const ADAM_B1: f64 = 0.9;
const ADAM_B2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

struct Adam {
    step: u64,
    lr: f64,
    input: Moments,
    w1: Moments,
    w2: Moments,
    proxies: Moments,
    gates: [Moments; 4],
}

impl Adam {
    fn new(state: &EmbeddingState, lr: f64) -> Self {
        Adam {
            step: 0,
            lr,
            input: Moments::new(state.input_table.len()),
            w1: Moments::new(state.params.w1.len()),
            w2: Moments::new(state.params.w2.len()),
            proxies: Moments::new(state.params.proxies.len()),
            gates: [
                Moments::new(state.params.gates.source_out.len()),
                Moments::new(state.params.gates.source_in.len()),
                Moments::new(state.params.gates.target_out.len()),
                Moments::new(state.params.gates.target_in.len()),
            ],
        }
    }

    fn correction(&self) -> (f64, f64) {
        let t = self.step as f64;
        (1.0 - ADAM_B1.powf(t), 1.0 - ADAM_B2.powf(t))
    }

    fn update_range(
        params: &mut [f64],
        grads: &[f64],
        moments: &mut Moments,
        offset: usize,
        lr: f64,
        corr: (f64, f64),
    ) {
        for (i, &g) in grads.iter().enumerate() {
            let idx = offset + i;
            let m = &mut moments.m[idx];
            let v = &mut moments.v[idx];
            *m = ADAM_B1 * *m + (1.0 - ADAM_B1) * g;
            *v = ADAM_B2 * *v + (1.0 - ADAM_B2) * g * g;
            let m_hat = *m / corr.0;
            let v_hat = *v / corr.1;
            params[idx] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
}

fn scaled(buf: &mut [f64], a: &[f64], wa: f64, b: &[f64], wb: f64) {
    for i in 0..buf.len() {
        buf[i] = wa * a[i] + wb * b[i];
    }
}

/// Encode every subgraph with the current state.
pub fn encode_all(batches: &[SubgraphBatch], state: &EmbeddingState) -> Result<Vec<SubgraphOutput>> {
    batches
        .iter()
        .map(|batch| {
            let fwd = encode_subgraph(batch, state)?;
            Ok(SubgraphOutput {
                nodes: batch.nodes.clone(),
                vectors: fwd.out,
            })
        })
        .collect()
}

/// Hits@1 of the current embeddings on the validation pairs.
fn validation_hits1(
    outputs: &[SubgraphOutput],
    merged: &MergedGraph,
    valid: &[(crate::graph::EntityId, crate::graph::EntityId)],
    dim: usize,
) -> Result<f64> {
    if valid.is_empty() {
        return Ok(0.0);
    }
    let space = fuse(outputs, merged, dim)?;
    let (hits, _) = evaluate_ideal(&space, valid, &[1]);
    Ok(hits[&1])
}

#[derive(Debug)]
pub struct TrainOutcome {
    /// Best-validation state with per-subgraph outputs filled in.
    pub state: EmbeddingState,
    pub best_valid_hits1: f64,
    /// Total combined loss per epoch; useful for determinism checks.
    pub epoch_losses: Vec<f64>,
    /// Validation Hits@1 per epoch.
    pub epoch_valid_hits1: Vec<f64>,
}

/// Train the encoder over the subgraphs as mini-batches.
///
/// `rel_counts` are the relation table sizes of the source and target
/// graphs. Returns the state with the best validation Hits@1 (the final
/// state when no validation pairs exist).
pub fn train(
    subgraphs: &[Subgraph],
    merged: &MergedGraph,
    align: &AlignmentSet,
    rel_counts: (usize, usize),
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if subgraphs.is_empty() {
        return Err(Error::InvalidInput("no subgraphs to train on".into()));
    }
    let dim = cfg.dim;
    let mut state = EmbeddingState::init(
        merged.node_count(),
        dim,
        cfg.n_proxies,
        rel_counts.0,
        rel_counts.1,
        seed::derive(cfg.seed, "init"),
    );
    let batches: Vec<SubgraphBatch> = subgraphs.iter().map(SubgraphBatch::new).collect();
    let pairs_per_batch: Vec<Vec<(u32, u32)>> = batches
        .iter()
        .map(|b| crate::loss::pairs_in_batch(b, merged, &align.train))
        .collect();
    let members_per_batch: Vec<HashSet<u32>> = batches
        .iter()
        .map(|b| b.nodes.iter().copied().collect())
        .collect();
    for (i, p) in pairs_per_batch.iter().enumerate() {
        if p.is_empty() {
            log::warn!(
                "subgraph {} holds no train pair; its alignment loss contributes 0",
                subgraphs[i].block
            );
        }
    }

    if cfg.epochs == 0 {
        let outputs = encode_all(&batches, &state)?;
        state.outputs = outputs;
        return Ok(TrainOutcome {
            state,
            best_valid_hits1: 0.0,
            epoch_losses: Vec::new(),
            epoch_valid_hits1: Vec::new(),
        });
    }

    let mut adam = Adam::new(&state, cfg.lr);
    let mut best: Option<(f64, Vec<f64>, crate::encoder::EncoderParams)> = None;
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut epoch_valid_hits1 = Vec::with_capacity(cfg.epochs);
    let mut grad_out = Vec::new();

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..batches.len()).collect();
        order.shuffle(&mut seed::rng(seed::derive_indexed(
            cfg.seed,
            "epoch-order",
            epoch as u64,
        )));
        let mut epoch_loss = 0.0;

        for &si in &order {
            let batch = &batches[si];
            if batch.is_empty() {
                continue;
            }
            let n = batch.len();
            let fwd = encode_subgraph(batch, &state)?;

            let a = align_loss(
                &fwd.out,
                dim,
                n,
                &pairs_per_batch[si],
                cfg.alpha,
                cfg.beta,
                cfg.loss_form,
            );
            let r = reconstruct_loss(&fwd.out, dim, &batch.neighbor_sets);

            let negatives = NegativeBatch {
                cross: if cfg.w_cross > 0.0 {
                    sample_cross_negatives(
                        merged.node_count(),
                        &members_per_batch[si],
                        cfg.n_cross,
                        seed::derive_indexed(
                            cfg.seed,
                            "cross",
                            (epoch * batches.len() + si) as u64,
                        ),
                    )
                } else {
                    Vec::new()
                },
            };
            let mut anchor_rows = vec![0.0; n * dim];
            for (i, &node) in batch.nodes.iter().enumerate() {
                anchor_rows[i * dim..(i + 1) * dim].copy_from_slice(state.input_row(node));
            }
            let mut neg_rows = vec![0.0; negatives.cross.len() * dim];
            for (i, &node) in negatives.cross.iter().enumerate() {
                neg_rows[i * dim..(i + 1) * dim].copy_from_slice(state.input_row(node));
            }
            let c = cross_loss(&anchor_rows, &neg_rows, dim);

            for (term, value) in [
                (LossTerm::Align, a.loss),
                (LossTerm::Cross, c.loss),
                (LossTerm::Reconstruct, r.loss),
            ] {
                if !value.is_finite() {
                    return Err(Error::Runtime(format!(
                        "non-finite {term} loss in subgraph {} at epoch {epoch}",
                        subgraphs[si].block
                    )));
                }
            }
            epoch_loss += cfg.w_align * a.loss + cfg.w_cross * c.loss + cfg.w_rec * r.loss;

            grad_out.resize(n * dim, 0.0);
            scaled(&mut grad_out, &a.grad_out, cfg.w_align, &r.grad_out, cfg.w_rec);
            let grads = backward_subgraph(batch, &state, &fwd, &grad_out);

            adam.step += 1;
            let corr = adam.correction();
            // Input rows of the batch nodes: encoder path plus the
            // cross-loss anchor path.
            for (i, &node) in batch.nodes.iter().enumerate() {
                let mut row_grad = grads.x_local[i * dim..(i + 1) * dim].to_vec();
                if cfg.w_cross > 0.0 && !negatives.cross.is_empty() {
                    for k in 0..dim {
                        row_grad[k] += cfg.w_cross * c.grad_anchor[i * dim + k];
                    }
                }
                Adam::update_range(
                    &mut state.input_table,
                    &row_grad,
                    &mut adam.input,
                    node as usize * dim,
                    adam.lr,
                    corr,
                );
            }
            // Sampled negatives' rows (disjoint from the batch nodes).
            if cfg.w_cross > 0.0 {
                for (i, &node) in negatives.cross.iter().enumerate() {
                    let row_grad: Vec<f64> = c.grad_neg[i * dim..(i + 1) * dim]
                        .iter()
                        .map(|g| cfg.w_cross * g)
                        .collect();
                    Adam::update_range(
                        &mut state.input_table,
                        &row_grad,
                        &mut adam.input,
                        node as usize * dim,
                        adam.lr,
                        corr,
                    );
                }
            }
            Adam::update_range(&mut state.params.w1, &grads.w1, &mut adam.w1, 0, adam.lr, corr);
            Adam::update_range(&mut state.params.w2, &grads.w2, &mut adam.w2, 0, adam.lr, corr);
            Adam::update_range(
                &mut state.params.proxies,
                &grads.proxies,
                &mut adam.proxies,
                0,
                adam.lr,
                corr,
            );
            let gate_pairs: [(&mut Vec<f64>, &Vec<f64>, usize); 4] = [
                (&mut state.params.gates.source_out, &grads.gates.source_out, 0),
                (&mut state.params.gates.source_in, &grads.gates.source_in, 1),
                (&mut state.params.gates.target_out, &grads.gates.target_out, 2),
                (&mut state.params.gates.target_in, &grads.gates.target_in, 3),
            ];
            for (params, grad, gi) in gate_pairs {
                Adam::update_range(params, grad, &mut adam.gates[gi], 0, adam.lr, corr);
            }
        }

        epoch_losses.push(epoch_loss);
        let outputs = encode_all(&batches, &state)?;
        let hits1 = validation_hits1(&outputs, merged, &align.valid, dim)?;
        epoch_valid_hits1.push(hits1);
        log::info!("epoch {epoch}: loss {epoch_loss:.4}, valid hits@1 {hits1:.4}");
        let replace = match &best {
            None => true,
            Some((best_hits, _, _)) => hits1 > *best_hits,
        };
        if replace {
            best = Some((hits1, state.input_table.clone(), state.params.clone()));
        }
    }

    let mut best_hits = 0.0;
    if !align.valid.is_empty() {
        if let Some((hits, table, params)) = best {
            best_hits = hits;
            state.input_table = table;
            state.params = params;
        }
    }
    state.outputs = encode_all(&batches, &state)?;
    Ok(TrainOutcome {
        state,
        best_valid_hits1: best_hits,
        epoch_losses,
        epoch_valid_hits1,
    })
}
