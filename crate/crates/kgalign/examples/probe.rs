// Scratch harness for tuning training defaults on synthetic pairs.
use kgalign::landmark::{generate_subgraphs, label_importance, label_influence};
use kgalign::loss::LossForm;
use kgalign::merge::merge_graphs;
use kgalign::partition::partition;
use kgalign::synth::{generate_synthetic_pair, SynthParams};
use kgalign::train::{train, TrainConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let get = |k: &str, d: f64| -> f64 {
        args.iter()
            .position(|a| a == k)
            .and_then(|i| args.get(i + 1))
            .and_then(|v| v.parse().ok())
            .unwrap_or(d)
    };
    let n_entities = get("--n", 200.0) as usize;
    let overlap = get("--overlap", 1.0);
    let blocks = get("--blocks", 1.0) as usize;
    let dim = get("--dim", 32.0) as usize;
    let lr = get("--lr", 0.02);
    let epochs = get("--epochs", 30.0) as usize;
    let alpha = get("--alpha", 15.0);
    let beta = get("--beta", 0.7);
    let w_align = get("--wa", 1.0);
    let w_cross = get("--wc", 0.1);
    let w_rec = get("--wr", 0.1);
    let budget = get("--budget", 100.0) as usize;
    let form = if get("--conv", 0.0) > 0.0 {
        LossForm::Conventional
    } else {
        LossForm::Literal
    };
    let seed = get("--seed", 5.0) as u64;

    let params = SynthParams {
        n_entities,
        n_relations: 5,
        avg_degree: 4.0,
        overlap_fraction: overlap,
        split: (0.3, 0.1),
        seed,
    };
    let (g1, g2, align) = generate_synthetic_pair(&params).unwrap();
    let merged = merge_graphs(&g1, &g2, &align.train).unwrap();
    let p = partition(&merged, blocks, 0.05, 3).unwrap();
    let mut scores = label_importance(&merged, merged.seed_nodes(), 0.001, 0.49).unwrap();
    label_influence(&merged, &mut scores);
    let subs = generate_subgraphs(&merged, &p, &scores, 0.01, budget);
    let cfg = TrainConfig {
        dim,
        alpha,
        beta,
        n_proxies: 16,
        n_cross: 64,
        w_align,
        w_cross,
        w_rec,
        lr,
        epochs,
        seed: 7,
        loss_form: form,
    };
    let t0 = std::time::Instant::now();
    let out = train(
        &subs,
        &merged,
        &align,
        (g1.relation_count(), g2.relation_count()),
        &cfg,
    )
    .unwrap();
    // Test-set evaluation.
    let space = kgalign::infer::fuse(&out.state.outputs, &merged, dim).unwrap();
    let (hits, mrr) = kgalign::infer::evaluate_ideal(&space, &align.test, &[1, 5]);
    let trail: Vec<String> = out.epoch_valid_hits1.iter().map(|h| format!("{h:.3}")).collect();
    println!("valid trajectory: {}", trail.join(" "));
    println!(
        "valid_hits1={:.4} test_hits1={:.4} test_hits5={:.4} mrr={:.4} ({:.1}s)",
        out.best_valid_hits1,
        hits[&1],
        hits[&5],
        mrr,
        t0.elapsed().as_secs_f64()
    );
    let pred = kgalign::infer::mutual_knn(&space, 5, kgalign::infer::SearchMode::Exact, true).unwrap();
    let mut known = std::collections::HashSet::new();
    for set in [&align.train, &align.valid] {
        for &(s, t) in set {
            known.insert((true, s.0));
            known.insert((false, t.0));
        }
    }
    let open: Vec<_> = pred
        .pairs
        .iter()
        .filter(|(s, t, _)| !known.contains(&(true, s.0)) && !known.contains(&(false, t.0)))
        .map(|&(s, t, _)| (s, t))
        .collect();
    let (pr, rc, f1) = kgalign::metrics::evaluate_real(&open, &align.test);
    println!("real P={pr:.4} R={rc:.4} F1={f1:.4}");
}
