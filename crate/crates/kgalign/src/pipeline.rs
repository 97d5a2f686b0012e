//! End-to-end orchestration.
//!
//! Stages communicate only through files in the output directory, so
//! running the full pipeline is byte-identical to running the stages one
//! by one with the same seed. Every stage logs its wall time and allocator
//! high-water mark into `stage_stats.txt`.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::checkpoint::{read_checkpoint, write_checkpoint, CheckpointShape};
use crate::config::PipelineConfig;
use crate::dataset::{
    self, load_links, load_split, load_triples, write_split, write_triples, ENT_LINKS,
    REL_TRIPLES_1, REL_TRIPLES_2, TRAIN_LINKS,
};
use crate::encoder::SubgraphBatch;
use crate::graph::{AlignmentSet, EntityId, KnowledgeGraph};
use crate::infer::{evaluate_ideal, fuse, mutual_knn, AlignmentPrediction, FusedSpace};
use crate::landmark::{
    generate_subgraphs, label_importance, label_influence, write_landmark_report,
};
use crate::merge::{merge_graphs, MergedGraph};
use crate::metrics::{evaluate_real, write_metrics, MetricsReport};
use crate::partition::{
    partition, preserved_alignment_recall, read_partition, write_partition, Partition,
};
use crate::subgraph::{induce_subgraphs, induce_triples, Subgraph};
use crate::train::{encode_all, train};
use crate::{mem, seed, Error, Result};

pub const PARTITION_FILE: &str = "partition.tsv";
pub const PARTITION_RECALL_FILE: &str = "partition_recall.txt";
pub const LANDMARKS_FILE: &str = "landmarks.tsv";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const PREDICTIONS_FILE: &str = "predictions.tsv";
pub const METRICS_FILE: &str = "metrics.txt";
pub const STAGE_STATS_FILE: &str = "stage_stats.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Synth,
    Partition,
    Landmarks,
    Train,
    Infer,
    Eval,
}

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Partition => "partition",
            Stage::Landmarks => "landmarks",
            Stage::Train => "train",
            Stage::Infer => "infer",
            Stage::Eval => "eval",
        }
    }
}

impl std::str::FromStr for Stage {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "synth" => Ok(Stage::Synth),
            "partition" => Ok(Stage::Partition),
            "landmarks" => Ok(Stage::Landmarks),
            "train" => Ok(Stage::Train),
            "infer" => Ok(Stage::Infer),
            "eval" => Ok(Stage::Eval),
            other => Err(format!("unknown stage '{other}'")),
        }
    }
}

/// Wall time and allocation peak of one stage run.
#[derive(Debug, Clone)]
pub struct StageReport {
    pub stage: &'static str,
    pub runtime_seconds: f64,
    pub peak_memory_bytes: u64,
}

/// Cap worker parallelism from `KGALIGN_THREADS` (0 or unset = auto).
pub fn init_threads() {
    use std::sync::Once;
    static ONCE: Once = Once::new();
    ONCE.call_once(|| {
        if let Ok(v) = std::env::var("KGALIGN_THREADS") {
            if let Ok(n) = v.trim().parse::<usize>() {
                if n > 0 {
                    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global()
                    {
                        log::warn!("thread pool already initialized: {e}");
                    }
                }
            }
        }
    });
}

/// Everything later stages need from disk.
struct Prepared {
    g1: KnowledgeGraph,
    g2: KnowledgeGraph,
    align: AlignmentSet,
    merged: MergedGraph,
}

fn dataset_dir(cfg: &PipelineConfig) -> PathBuf {
    cfg.dataset.clone().unwrap_or_else(|| cfg.out.clone())
}

fn prepare(cfg: &PipelineConfig) -> Result<Prepared> {
    let dir = dataset_dir(cfg);
    let triples1 = dir.join(REL_TRIPLES_1);
    if cfg.dataset.is_none() && !triples1.exists() {
        return Err(Error::Runtime(format!(
            "missing prerequisite {}: run the synth stage first",
            triples1.display()
        )));
    }
    let g1 = load_triples(&triples1)?;
    let g2 = load_triples(&dir.join(REL_TRIPLES_2))?;

    let align = if cfg.out.join(TRAIN_LINKS).exists() {
        load_split(&cfg.out, &g1, &g2)?
    } else {
        let links_path = dir.join(ENT_LINKS);
        let labels = load_links(&links_path)?;
        let gold: Vec<(EntityId, EntityId)> = labels
            .iter()
            .enumerate()
            .map(|(i, (a, b))| {
                let e1 = g1.entity_id(a).ok_or_else(|| {
                    Error::parse(&links_path, i + 1, format!("unknown source label '{a}'"))
                })?;
                let e2 = g2.entity_id(b).ok_or_else(|| {
                    Error::parse(&links_path, i + 1, format!("unknown target label '{b}'"))
                })?;
                Ok((e1, e2))
            })
            .collect::<Result<_>>()?;
        let align = dataset::split_alignment(
            &gold,
            (cfg.train_fraction, cfg.valid_fraction),
            seed::derive(cfg.seed, "split"),
        )?;
        fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
        write_split(&cfg.out, &align, &g1, &g2)?;
        align
    };
    let merged = merge_graphs(&g1, &g2, &align.train)?;
    Ok(Prepared {
        g1,
        g2,
        align,
        merged,
    })
}

fn entities_per_side(p: &Prepared) -> usize {
    p.g1.entity_count().max(p.g2.entity_count())
}

fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::Runtime(format!(
            "missing prerequisite file {}",
            path.display()
        )))
    }
}

fn stage_synth(cfg: &PipelineConfig) -> Result<()> {
    if cfg.dataset.is_some() {
        return Err(Error::InvalidInput(
            "the synth stage only applies without a dataset path".into(),
        ));
    }
    let params = crate::synth::SynthParams {
        n_entities: cfg.synth_entities,
        n_relations: cfg.synth_relations,
        avg_degree: cfg.synth_avg_degree,
        overlap_fraction: cfg.synth_overlap,
        split: (cfg.train_fraction, cfg.valid_fraction),
        seed: cfg.seed,
    };
    let (g1, g2, align) = crate::synth::generate_synthetic_pair(&params)?;
    fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    write_triples(&cfg.out.join(REL_TRIPLES_1), &g1)?;
    write_triples(&cfg.out.join(REL_TRIPLES_2), &g2)?;
    dataset::write_links_file(&cfg.out.join(ENT_LINKS), &align, &g1, &g2)?;
    write_split(&cfg.out, &align, &g1, &g2)?;
    log::info!(
        "synthetic pair: {} + {} entities, {} gold links",
        g1.entity_count(),
        g2.entity_count(),
        align.total()
    );
    Ok(())
}

fn stage_partition(cfg: &PipelineConfig) -> Result<()> {
    let p = prepare(cfg)?;
    let n = cfg.resolved_blocks(entities_per_side(&p));
    let part = partition(&p.merged, n, cfg.epsilon, seed::derive(cfg.seed, "partition"))?;
    write_partition(&cfg.out.join(PARTITION_FILE), &part)?;
    let recall_path = cfg.out.join(PARTITION_RECALL_FILE);
    let file = fs::File::create(&recall_path).map_err(|e| Error::io(&recall_path, e))?;
    let mut w = BufWriter::new(file);
    for (name, pairs) in [
        ("train", &p.align.train),
        ("valid", &p.align.valid),
        ("test", &p.align.test),
    ] {
        writeln!(
            w,
            "{name}_recall={:.6}",
            preserved_alignment_recall(&part, &p.merged, pairs)
        )
        .map_err(|e| Error::io(&recall_path, e))?;
    }
    writeln!(w, "cut_edges={}", part.cut_edges).map_err(|e| Error::io(&recall_path, e))?;
    log::info!(
        "partitioned {} nodes into {} blocks, cut {}",
        p.merged.node_count(),
        n,
        part.cut_edges
    );
    Ok(())
}

fn load_partition_for(cfg: &PipelineConfig, merged: &MergedGraph) -> Result<Partition> {
    let path = cfg.out.join(PARTITION_FILE);
    require(&path)?;
    let part = read_partition(&path)?;
    if part.assignment.len() != merged.node_count() {
        return Err(Error::Runtime(format!(
            "partition file covers {} nodes but the merged graph has {}",
            part.assignment.len(),
            merged.node_count()
        )));
    }
    Ok(part)
}

fn scores_for(cfg: &PipelineConfig, merged: &MergedGraph) -> Result<crate::landmark::ScoreTable> {
    let mut scores = label_importance(merged, merged.seed_nodes(), cfg.eta, cfg.floor)?;
    label_influence(merged, &mut scores);
    Ok(scores)
}

fn stage_landmarks(cfg: &PipelineConfig) -> Result<()> {
    let p = prepare(cfg)?;
    let part = load_partition_for(cfg, &p.merged)?;
    let scores = scores_for(cfg, &p.merged)?;
    let budget = cfg.resolved_budget(entities_per_side(&p));
    let subgraphs = generate_subgraphs(&p.merged, &part, &scores, cfg.lambda, budget);
    write_landmark_report(
        &cfg.out.join(LANDMARKS_FILE),
        &subgraphs,
        &p.merged,
        &scores,
        cfg.lambda,
    )?;
    let recalled: usize = subgraphs.iter().map(|s| s.landmark_nodes.len()).sum();
    log::info!("recalled {recalled} landmarks across {} subgraphs", subgraphs.len());
    Ok(())
}

fn read_landmarks(path: &Path, n_blocks: usize) -> Result<Vec<Vec<u32>>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut sets = vec![Vec::new(); n_blocks];
    for (lineno, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let block = fields
            .next()
            .and_then(|s| s.parse::<usize>().ok())
            .filter(|&b| b < n_blocks);
        let node = fields.next().and_then(|s| s.parse::<u32>().ok());
        match (block, node) {
            (Some(b), Some(v)) => sets[b].push(v),
            _ => return Err(Error::parse(path, lineno + 1, "malformed landmark line")),
        }
    }
    for set in &mut sets {
        set.sort_unstable();
        set.dedup();
    }
    Ok(sets)
}

/// Rebuild the training subgraphs from the persisted partition and
/// landmark report.
fn subgraphs_from_artifacts(
    cfg: &PipelineConfig,
    merged: &MergedGraph,
    part: &Partition,
) -> Result<Vec<Subgraph>> {
    let path = cfg.out.join(LANDMARKS_FILE);
    require(&path)?;
    let landmark_sets = read_landmarks(&path, part.n_blocks)?;
    let mut subgraphs = induce_subgraphs(part, merged);
    for (s, landmarks) in subgraphs.iter_mut().zip(landmark_sets) {
        if landmarks.is_empty() {
            continue;
        }
        s.landmark_nodes = landmarks;
        let members: std::collections::HashSet<u32> = s.nodes().collect();
        s.triples = induce_triples(merged, &members);
    }
    Ok(subgraphs)
}

fn stage_train(cfg: &PipelineConfig) -> Result<()> {
    let p = prepare(cfg)?;
    let part = load_partition_for(cfg, &p.merged)?;
    let subgraphs = subgraphs_from_artifacts(cfg, &p.merged, &part)?;
    let tc = cfg.train_config();
    let outcome = train(
        &subgraphs,
        &p.merged,
        &p.align,
        (p.g1.relation_count(), p.g2.relation_count()),
        &tc,
    )?;
    write_checkpoint(&cfg.out.join(CHECKPOINT_FILE), &outcome.state)?;
    log::info!(
        "training done: best validation hits@1 {:.4}",
        outcome.best_valid_hits1
    );
    Ok(())
}

/// Load the checkpoint and recompute the fused space.
fn fused_space_from_checkpoint(
    cfg: &PipelineConfig,
    p: &Prepared,
) -> Result<(FusedSpace, Vec<Subgraph>)> {
    let part = load_partition_for(cfg, &p.merged)?;
    let subgraphs = subgraphs_from_artifacts(cfg, &p.merged, &part)?;
    let ckpt_path = cfg.out.join(CHECKPOINT_FILE);
    require(&ckpt_path)?;
    let mut state = read_checkpoint(
        &ckpt_path,
        p.merged.node_count(),
        CheckpointShape {
            n_proxies: cfg.proxies,
            n_source_rels: p.g1.relation_count(),
            n_target_rels: p.g2.relation_count(),
        },
    )?;
    let batches: Vec<SubgraphBatch> = subgraphs.iter().map(SubgraphBatch::new).collect();
    state.outputs = encode_all(&batches, &state)?;
    let space = fuse(&state.outputs, &p.merged, state.dim)?;
    Ok((space, subgraphs))
}

fn stage_infer(cfg: &PipelineConfig) -> Result<()> {
    let p = prepare(cfg)?;
    let (space, _) = fused_space_from_checkpoint(cfg, &p)?;
    let pred = mutual_knn(&space, cfg.infer_k, cfg.search_mode, cfg.one_to_one)?;
    let path = cfg.out.join(PREDICTIONS_FILE);
    let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = BufWriter::new(file);
    for &(s, t, sim) in &pred.pairs {
        writeln!(
            w,
            "{}\t{}\t{:.6}",
            p.g1.entity_label(s),
            p.g2.entity_label(t),
            sim
        )
        .map_err(|e| Error::io(&path, e))?;
    }
    log::info!("emitted {} mutual pairs", pred.pairs.len());
    Ok(())
}

fn read_predictions(path: &Path, p: &Prepared) -> Result<AlignmentPrediction> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut pairs = Vec::new();
    for (lineno, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::parse(path, lineno + 1, "expected three fields"));
        }
        let s = p.g1.entity_id(fields[0]).ok_or_else(|| {
            Error::parse(path, lineno + 1, format!("unknown source '{}'", fields[0]))
        })?;
        let t = p.g2.entity_id(fields[1]).ok_or_else(|| {
            Error::parse(path, lineno + 1, format!("unknown target '{}'", fields[1]))
        })?;
        let sim: f64 = fields[2]
            .parse()
            .map_err(|_| Error::parse(path, lineno + 1, "bad similarity"))?;
        pairs.push((s, t, sim));
    }
    Ok(AlignmentPrediction { pairs })
}

/// Test pairs whose two entities both carry structure; isolated entities
/// are non-matchable by construction.
fn matchable_test_pairs(p: &Prepared) -> Vec<(EntityId, EntityId)> {
    p.align
        .test
        .iter()
        .filter(|&&(s, t)| !p.g1.is_isolated(s) && !p.g2.is_isolated(t))
        .copied()
        .collect()
}

fn stage_eval(cfg: &PipelineConfig) -> Result<()> {
    let p = prepare(cfg)?;
    let pred_path = cfg.out.join(PREDICTIONS_FILE);
    require(&pred_path)?;
    let pred = read_predictions(&pred_path, &p)?;
    let (space, _) = fused_space_from_checkpoint(cfg, &p)?;

    // Known (train/valid) entities are not part of the open prediction
    // task; drop pairs touching them before scoring the real setting.
    let mut known_sources: std::collections::HashSet<u32> = std::collections::HashSet::new();
    let mut known_targets: std::collections::HashSet<u32> = std::collections::HashSet::new();
    for set in [&p.align.train, &p.align.valid] {
        for &(s, t) in set {
            known_sources.insert(s.0);
            known_targets.insert(t.0);
        }
    }
    let open_pred: Vec<(EntityId, EntityId)> = pred
        .pairs
        .iter()
        .filter(|&&(s, t, _)| !known_sources.contains(&s.0) && !known_targets.contains(&t.0))
        .map(|&(s, t, _)| (s, t))
        .collect();
    let gold_test = matchable_test_pairs(&p);
    let (precision, recall, f1) = evaluate_real(&open_pred, &gold_test);
    let (hits_at, mrr) = evaluate_ideal(&space, &gold_test, &[1, 5]);

    let stats = read_stage_stats(&cfg.out.join(STAGE_STATS_FILE));
    let runtime_seconds: f64 = stats
        .iter()
        .filter(|(k, _)| k.ends_with(".runtime_seconds"))
        .filter_map(|(_, v)| v.parse::<f64>().ok())
        .sum();
    let peak_memory_bytes: u64 = stats
        .iter()
        .filter(|(k, _)| k.ends_with(".peak_memory_bytes"))
        .filter_map(|(_, v)| v.parse::<u64>().ok())
        .max()
        .unwrap_or(0)
        .max(mem::peak_bytes() as u64);

    let report = MetricsReport {
        precision,
        recall,
        f1,
        hits_at,
        mrr,
        runtime_seconds,
        peak_memory_bytes,
    };
    write_metrics(&cfg.out.join(METRICS_FILE), &report, &cfg.echo())?;
    log::info!(
        "real P/R/F1 = {precision:.4}/{recall:.4}/{f1:.4}, ideal hits@1 = {:.4}, mrr = {mrr:.4}",
        report.hits_at.get(&1).copied().unwrap_or(0.0)
    );
    Ok(())
}

fn read_stage_stats(path: &Path) -> BTreeMap<String, String> {
    let mut map = BTreeMap::new();
    if let Ok(text) = fs::read_to_string(path) {
        for line in text.lines() {
            if let Some((k, v)) = line.split_once('=') {
                map.insert(k.to_string(), v.to_string());
            }
        }
    }
    map
}

fn write_stage_stats(path: &Path, map: &BTreeMap<String, String>) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for (k, v) in map {
        writeln!(w, "{k}={v}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Run exactly one stage from its persisted prerequisites.
pub fn run_stage(cfg: &PipelineConfig, stage: Stage) -> Result<StageReport> {
    init_threads();
    cfg.validate().map_err(|e| e.in_stage(stage.name()))?;
    fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    mem::reset_peak();
    let start = Instant::now();
    let result = match stage {
        Stage::Synth => stage_synth(cfg),
        Stage::Partition => stage_partition(cfg),
        Stage::Landmarks => stage_landmarks(cfg),
        Stage::Train => stage_train(cfg),
        Stage::Infer => stage_infer(cfg),
        Stage::Eval => stage_eval(cfg),
    };
    let runtime_seconds = start.elapsed().as_secs_f64();
    let peak_memory_bytes = mem::peak_bytes() as u64;
    result.map_err(|e| e.in_stage(stage.name()))?;

    let stats_path = cfg.out.join(STAGE_STATS_FILE);
    let mut stats = read_stage_stats(&stats_path);
    stats.insert(
        format!("{}.runtime_seconds", stage.name()),
        format!("{runtime_seconds:.3}"),
    );
    stats.insert(
        format!("{}.peak_memory_bytes", stage.name()),
        peak_memory_bytes.to_string(),
    );
    write_stage_stats(&stats_path, &stats)?;
    log::info!(
        "stage {}: {:.2}s, peak {} bytes",
        stage.name(),
        runtime_seconds,
        peak_memory_bytes
    );
    Ok(StageReport {
        stage: stage.name(),
        runtime_seconds,
        peak_memory_bytes,
    })
}

/// Run every stage in order and return the final metrics.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<MetricsReport> {
    let mut stages: Vec<Stage> = Vec::new();
    if cfg.dataset.is_none() {
        stages.push(Stage::Synth);
    }
    stages.extend([
        Stage::Partition,
        Stage::Landmarks,
        Stage::Train,
        Stage::Infer,
        Stage::Eval,
    ]);
    for stage in stages {
        run_stage(cfg, stage)?;
    }
    crate::metrics::read_metrics(&cfg.out.join(METRICS_FILE))
}
