//! Training losses.
//!
//! Three terms drive the embedding space: an alignment loss separating seed
//! pairs from their in-subgraph negatives on output embeddings, a
//! cross-subgraph negative loss pushing sampled outside entities away on
//! input representations, and a self-supervised reconstruction loss pulling
//! each entity toward its subgraph neighbors.
//!
//! Every `log(1 + sum exp(.))` is evaluated through a max-shifted
//! log-sum-exp, so large scale factors stay finite.

use crate::graph::EntityId;

/// Which sign convention the alignment loss uses.
///
/// `Literal` keeps the leading minus and the positive-minus-negative
/// exponent; minimizing it widens the separation term. `Conventional` is
/// the usual hinge-style log-sum-exp over margin violations. Both push
/// positives together and negatives apart; they differ in which terms
/// dominate the softmax weighting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossForm {
    Literal,
    Conventional,
}

impl std::str::FromStr for LossForm {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "literal" => Ok(LossForm::Literal),
            "conventional" => Ok(LossForm::Conventional),
            other => Err(format!("unknown loss form '{other}'")),
        }
    }
}

impl std::fmt::Display for LossForm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LossForm::Literal => write!(f, "literal"),
            LossForm::Conventional => write!(f, "conventional"),
        }
    }
}

/// Inner product of two unit output embeddings.
pub fn similarity_out(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn dot(out: &[f64], d: usize, i: usize, j: usize) -> f64 {
    similarity_out(&out[i * d..(i + 1) * d], &out[j * d..(j + 1) * d])
}

pub struct AlignLoss {
    pub loss: f64,
    /// d/d output embeddings, local node-major.
    pub grad_out: Vec<f64>,
}

/// Alignment loss over one subgraph batch.
///
/// `pairs` are (anchor, positive) local indices; in the pipeline both point
/// at the same merged seed node. Negatives for an anchor are all other
/// nodes of the batch except the anchor and its positive.
pub fn align_loss(
    out: &[f64],
    d: usize,
    n: usize,
    pairs: &[(u32, u32)],
    alpha: f64,
    beta: f64,
    form: LossForm,
) -> AlignLoss {
    let mut grad_out = vec![0.0; n * d];
    if pairs.is_empty() || n <= 1 {
        return AlignLoss {
            loss: 0.0,
            grad_out,
        };
    }
    let term = |pos: f64, neg: f64| match form {
        LossForm::Literal => alpha * (beta + pos - neg),
        LossForm::Conventional => alpha * (beta + neg - pos),
    };
    let sign = match form {
        LossForm::Literal => -1.0,
        LossForm::Conventional => 1.0,
    };

    // Pass one: per-pair max and shifted sum for a stable global log-sum-exp.
    let mut pair_pos = vec![0.0; pairs.len()];
    let mut pair_max = vec![f64::NEG_INFINITY; pairs.len()];
    let mut pair_sum = vec![0.0; pairs.len()];
    for (pi, &(e1, e2)) in pairs.iter().enumerate() {
        let pos = dot(out, d, e1 as usize, e2 as usize);
        pair_pos[pi] = pos;
        let mut m = f64::NEG_INFINITY;
        for j in 0..n as u32 {
            if j == e1 || j == e2 {
                continue;
            }
            let t = term(pos, dot(out, d, e1 as usize, j as usize));
            m = m.max(t);
        }
        if m == f64::NEG_INFINITY {
            continue;
        }
        let mut s = 0.0;
        for j in 0..n as u32 {
            if j == e1 || j == e2 {
                continue;
            }
            let t = term(pos, dot(out, d, e1 as usize, j as usize));
            s += (t - m).exp();
        }
        pair_max[pi] = m;
        pair_sum[pi] = s;
    }
    // Global shift includes the constant 1 inside the log.
    let shift = pair_max
        .iter()
        .zip(pair_sum.iter())
        .filter(|(_, &s)| s > 0.0)
        .map(|(&m, &s)| m + s.ln())
        .fold(0.0f64, f64::max);
    let mut total = (-shift).exp();
    for pi in 0..pairs.len() {
        if pair_sum[pi] > 0.0 {
            total += pair_sum[pi] * (pair_max[pi] - shift).exp();
        }
    }
    let loss = sign * (shift + total.ln());

    // Pass two: softmax weights and gradient accumulation. For both forms
    // the gradient of the loss with respect to the similarities is
    // +alpha*w toward each negative and -alpha*W away from the positive.
    for (pi, &(e1, e2)) in pairs.iter().enumerate() {
        if pair_sum[pi] == 0.0 {
            continue;
        }
        let pos = pair_pos[pi];
        let e1u = e1 as usize;
        let e2u = e2 as usize;
        let mut w_total = 0.0;
        let mut vsum = vec![0.0; d];
        for j in 0..n as u32 {
            if j == e1 || j == e2 {
                continue;
            }
            let ju = j as usize;
            let t = term(pos, dot(out, d, e1u, ju));
            let w = (t - shift).exp() / total;
            w_total += w;
            let coeff = alpha * w;
            for k in 0..d {
                vsum[k] += coeff * out[ju * d + k];
                grad_out[ju * d + k] += coeff * out[e1u * d + k];
            }
        }
        let pos_coeff = -alpha * w_total;
        for k in 0..d {
            grad_out[e1u * d + k] += vsum[k] + pos_coeff * out[e2u * d + k];
            grad_out[e2u * d + k] += pos_coeff * out[e1u * d + k];
        }
    }

    AlignLoss { loss, grad_out }
}

pub struct CrossLoss {
    pub loss: f64,
    /// d/d input rows of the anchors, anchor-major.
    pub grad_anchor: Vec<f64>,
    /// d/d input rows of the sampled negatives, negative-major.
    pub grad_neg: Vec<f64>,
}

/// Cross-subgraph negative loss on unit-normalized input representations.
///
/// `anchor_rows` and `neg_rows` are raw input rows (anchor-major, d wide);
/// nothing outside these rows is read, so other subgraphs never load.
pub fn cross_loss(anchor_rows: &[f64], neg_rows: &[f64], d: usize) -> CrossLoss {
    let n_a = anchor_rows.len() / d.max(1);
    let n_c = neg_rows.len() / d.max(1);
    let mut grad_anchor = vec![0.0; anchor_rows.len()];
    let mut grad_neg = vec![0.0; neg_rows.len()];
    if n_a == 0 || n_c == 0 {
        return CrossLoss {
            loss: 0.0,
            grad_anchor,
            grad_neg,
        };
    }
    let normalize = |rows: &[f64], count: usize| {
        let mut unit = rows.to_vec();
        let mut norms = vec![0.0; count];
        for i in 0..count {
            let r = &mut unit[i * d..(i + 1) * d];
            let nrm = r.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
            norms[i] = nrm;
            r.iter_mut().for_each(|v| *v /= nrm);
        }
        (unit, norms)
    };
    let (ua, na) = normalize(anchor_rows, n_a);
    let (uc, nc) = normalize(neg_rows, n_c);

    // Similarities are bounded by 1, so a single shifted pass suffices.
    let mut shift = 0.0f64;
    for a in 0..n_a {
        for c in 0..n_c {
            let t = -similarity_out(&ua[a * d..(a + 1) * d], &uc[c * d..(c + 1) * d]);
            shift = shift.max(t);
        }
    }
    let mut total = (-shift).exp();
    for a in 0..n_a {
        for c in 0..n_c {
            let t = -similarity_out(&ua[a * d..(a + 1) * d], &uc[c * d..(c + 1) * d]);
            total += (t - shift).exp();
        }
    }
    let loss = -(shift + total.ln());

    for a in 0..n_a {
        for c in 0..n_c {
            let pi = similarity_out(&ua[a * d..(a + 1) * d], &uc[c * d..(c + 1) * d]);
            let w = (-pi - shift).exp() / total;
            // dL/dpi = +w; chain through both normalizations.
            for k in 0..d {
                grad_anchor[a * d + k] += w * (uc[c * d + k] - pi * ua[a * d + k]) / na[a];
                grad_neg[c * d + k] += w * (ua[a * d + k] - pi * uc[c * d + k]) / nc[c];
            }
        }
    }

    CrossLoss {
        loss,
        grad_anchor,
        grad_neg,
    }
}

pub struct RecLoss {
    pub loss: f64,
    pub grad_out: Vec<f64>,
}

/// Entity reconstruction: mean Euclidean distance to subgraph neighbors,
/// summed over nodes. Nodes without neighbors contribute nothing.
pub fn reconstruct_loss(out: &[f64], d: usize, neighbor_sets: &[Vec<u32>]) -> RecLoss {
    let n = neighbor_sets.len();
    let mut grad_out = vec![0.0; n * d];
    let mut loss = 0.0;
    for i in 0..n {
        let nbrs = &neighbor_sets[i];
        if nbrs.is_empty() {
            continue;
        }
        let inv = 1.0 / nbrs.len() as f64;
        for &j in nbrs {
            let ju = j as usize;
            let mut dist2 = 0.0;
            for k in 0..d {
                let diff = out[i * d + k] - out[ju * d + k];
                dist2 += diff * diff;
            }
            let dist = dist2.sqrt();
            loss += inv * dist;
            if dist > 1e-12 {
                let coeff = inv / dist;
                for k in 0..d {
                    let diff = out[i * d + k] - out[ju * d + k];
                    grad_out[i * d + k] += coeff * diff;
                    grad_out[ju * d + k] -= coeff * diff;
                }
            }
        }
    }
    RecLoss { loss, grad_out }
}

/// Sample `n_cross` joint nodes outside the member set, without
/// replacement, deterministically from `seed_val`.
pub fn sample_cross_negatives(
    node_count: usize,
    members: &std::collections::HashSet<u32>,
    n_cross: usize,
    seed_val: u64,
) -> Vec<u32> {
    let mut complement: Vec<u32> = (0..node_count as u32)
        .filter(|v| !members.contains(v))
        .collect();
    if complement.is_empty() || n_cross == 0 {
        return Vec::new();
    }
    let take = n_cross.min(complement.len());
    let mut rng = crate::seed::rng(seed_val);
    // Partial Fisher-Yates: only the prefix we take needs shuffling.
    for i in 0..take {
        let j = rand::Rng::gen_range(&mut rng, i..complement.len());
        complement.swap(i, j);
    }
    complement.truncate(take);
    complement
}

/// In-batch and cross-subgraph negatives for one subgraph batch.
#[derive(Debug, Clone)]
pub struct NegativeBatch {
    /// Joint nodes sampled from outside the subgraph.
    pub cross: Vec<u32>,
}

/// Which loss term produced a non-finite value, for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossTerm {
    Align,
    Cross,
    Reconstruct,
}

impl std::fmt::Display for LossTerm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LossTerm::Align => write!(f, "alignment"),
            LossTerm::Cross => write!(f, "cross-subgraph"),
            LossTerm::Reconstruct => write!(f, "reconstruction"),
        }
    }
}

/// Convenience wrapper so callers can log which gold pairs fall inside a
/// subgraph batch.
pub fn pairs_in_batch(
    batch: &crate::encoder::SubgraphBatch,
    merged: &crate::merge::MergedGraph,
    train: &[(EntityId, EntityId)],
) -> Vec<(u32, u32)> {
    train
        .iter()
        .filter_map(|&(e1, _)| {
            let node = merged.forward_source(e1);
            batch.local_of(node).map(|l| (l, l))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn similarity_basics() {
        let a = [1.0, 0.0];
        let b = [0.0, 1.0];
        let c = [-1.0, 0.0];
        assert_eq!(similarity_out(&a, &a), 1.0);
        assert_eq!(similarity_out(&a, &b), 0.0);
        assert_eq!(similarity_out(&a, &c), -1.0);
    }

    #[test]
    fn align_single_pair_single_negative_equal_sims() {
        // pos and neg similarities coincide -> term exp(0) -> -log 2.
        let d = 2;
        // Node 0 anchor, node 1 positive, node 2 negative; all identical.
        let out = vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
        let r = align_loss(&out, d, 3, &[(0, 1)], 1.0, 0.0, LossForm::Literal);
        assert!((r.loss - (-(2.0f64).ln())).abs() < 1e-12, "loss {}", r.loss);
    }

    #[test]
    fn align_empty_negative_set_is_zero() {
        let d = 2;
        let out = vec![1.0, 0.0, 1.0, 0.0];
        // Two nodes: anchor and positive leave no negatives.
        let r = align_loss(&out, d, 2, &[(0, 1)], 1.0, 0.0, LossForm::Literal);
        assert_eq!(r.loss, 0.0);
        assert!(r.grad_out.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn align_extreme_scale_stays_finite() {
        // pos = 1, neg = -1, alpha = 15, beta = 0.7: the exponent is 40.5
        // and the stabilized loss is -40.5 up to a vanishing correction.
        let d = 2;
        let out = vec![1.0, 0.0, 1.0, 0.0, -1.0, 0.0];
        let r = align_loss(&out, d, 3, &[(0, 1)], 15.0, 0.7, LossForm::Literal);
        assert!(r.loss.is_finite());
        assert!((r.loss + 40.5).abs() < 1e-9, "loss {}", r.loss);
    }

    #[test]
    fn align_no_pairs_contributes_zero() {
        let d = 2;
        let out = vec![1.0, 0.0, 0.0, 1.0];
        let r = align_loss(&out, d, 2, &[], 15.0, 0.7, LossForm::Literal);
        assert_eq!(r.loss, 0.0);
    }

    #[test]
    fn cross_single_orthogonal_pair() {
        // One anchor and one negative with pi = 0 -> -log(1 + 1).
        let d = 2;
        let anchors = vec![3.0, 0.0];
        let negs = vec![0.0, 5.0];
        let r = cross_loss(&anchors, &negs, d);
        assert!((r.loss - (-(2.0f64).ln())).abs() < 1e-12);
    }

    #[test]
    fn cross_zero_negatives_is_zero() {
        let r = cross_loss(&[1.0, 0.0], &[], 2);
        assert_eq!(r.loss, 0.0);
    }

    #[test]
    fn cross_gradient_decreases_similarity() {
        // A small step along the negative gradient must reduce pi.
        let d = 2;
        let anchors = vec![1.0, 0.2];
        let negs = vec![0.9, 0.3];
        let r = cross_loss(&anchors, &negs, d);
        let step = 1e-4;
        let new_negs: Vec<f64> = negs
            .iter()
            .zip(r.grad_neg.iter())
            .map(|(x, g)| x - step * g)
            .collect();
        let pi = |a: &[f64], b: &[f64]| {
            let na: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
            let nb: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
            (a[0] * b[0] + a[1] * b[1]) / (na * nb)
        };
        assert!(pi(&anchors, &new_negs) < pi(&anchors, &negs));
    }

    #[test]
    fn reconstruct_identical_embeddings_is_zero() {
        let out = vec![1.0, 0.0, 1.0, 0.0];
        let r = reconstruct_loss(&out, 2, &[vec![1], vec![0]]);
        assert_eq!(r.loss, 0.0);
    }

    #[test]
    fn reconstruct_two_nodes_at_unit_distance() {
        // Unit vectors at 60 degrees are at Euclidean distance exactly 1;
        // each side contributes 1, total 2.
        let h = 3.0f64.sqrt() / 2.0;
        let out = vec![1.0, 0.0, 0.5, h];
        let r = reconstruct_loss(&out, 2, &[vec![1], vec![0]]);
        assert!((r.loss - 2.0).abs() < 1e-12);
    }

    #[test]
    fn reconstruct_isolated_node_contributes_zero() {
        let out = vec![1.0, 0.0, 0.0, 1.0, 0.5, 0.5];
        let with = reconstruct_loss(&out, 2, &[vec![1], vec![0], vec![]]);
        let without = reconstruct_loss(&out[..4], 2, &[vec![1], vec![0]]);
        assert_eq!(with.loss, without.loss);
    }

    #[test]
    fn cross_negative_sampling_avoids_members() {
        let members: std::collections::HashSet<u32> = (0..50u32).collect();
        let negs = sample_cross_negatives(100, &members, 20, 9);
        assert_eq!(negs.len(), 20);
        assert!(negs.iter().all(|v| *v >= 50));
        // Deterministic.
        assert_eq!(negs, sample_cross_negatives(100, &members, 20, 9));
        // No duplicates.
        let set: std::collections::HashSet<u32> = negs.iter().copied().collect();
        assert_eq!(set.len(), negs.len());
    }

    #[test]
    fn cross_negative_sampling_empty_complement() {
        let members: std::collections::HashSet<u32> = (0..10u32).collect();
        assert!(sample_cross_negatives(10, &members, 5, 1).is_empty());
    }
}
