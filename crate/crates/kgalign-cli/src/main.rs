//! Command-line interface for the entity-alignment pipeline.
//!
//! Subcommands run either the full pipeline or one persisted stage.
//! Configuration comes from `--config <file>` (line-based `key=value`),
//! overridden by flags whose names match the config keys exactly.
//! Exit codes: 0 success, 1 validation error, 2 runtime failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use kgalign::config::PipelineConfig;
use kgalign::pipeline::{run_pipeline, run_stage, Stage};

#[derive(Parser)]
#[command(name = "kgalign", version, about = "Scalable knowledge-graph entity alignment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic benchmark pair into the output directory.
    Synth(StageArgs),
    /// Merge the two graphs along the train links and partition the result.
    Partition(StageArgs),
    /// Score entities and recall landmark sets per subgraph.
    Landmarks(StageArgs),
    /// Train the subgraph encoder and write a checkpoint.
    Train(StageArgs),
    /// Fuse embeddings and run the mutual top-k search.
    Infer(StageArgs),
    /// Score predictions in the real and ideal settings.
    Eval(StageArgs),
    /// Run every stage in order.
    Pipeline(StageArgs),
}

#[derive(Args)]
struct StageArgs {
    /// Configuration file (key=value lines, # comments).
    #[arg(long)]
    config: Option<PathBuf>,

    #[command(flatten)]
    overrides: Overrides,
}

/// Flag-level overrides; names match config keys exactly.
#[derive(Args)]
struct Overrides {
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    synth_entities: Option<usize>,
    #[arg(long)]
    synth_relations: Option<usize>,
    #[arg(long)]
    synth_avg_degree: Option<f64>,
    #[arg(long)]
    synth_overlap: Option<f64>,
    #[arg(long)]
    train_fraction: Option<f64>,
    #[arg(long)]
    valid_fraction: Option<f64>,
    #[arg(long)]
    n_blocks: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    floor: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    proxies: Option<usize>,
    #[arg(long)]
    n_cross: Option<usize>,
    #[arg(long)]
    w_align: Option<f64>,
    #[arg(long)]
    w_cross: Option<f64>,
    #[arg(long)]
    w_rec: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    align_loss_form: Option<String>,
    #[arg(long)]
    infer_k: Option<usize>,
    #[arg(long)]
    search_mode: Option<String>,
    #[arg(long)]
    one_to_one: Option<bool>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Overrides {
    fn apply(&self, cfg: &mut PipelineConfig) -> kgalign::Result<()> {
        macro_rules! set {
            ($field:ident) => {
                if let Some(v) = &self.$field {
                    cfg.set(stringify!($field), &v.to_string())?;
                }
            };
        }
        if let Some(v) = &self.dataset {
            cfg.set("dataset", &v.display().to_string())?;
        }
        set!(synth_entities);
        set!(synth_relations);
        set!(synth_avg_degree);
        set!(synth_overlap);
        set!(train_fraction);
        set!(valid_fraction);
        set!(n_blocks);
        set!(epsilon);
        set!(eta);
        set!(floor);
        set!(lambda);
        set!(budget);
        set!(dim);
        set!(alpha);
        set!(beta);
        set!(proxies);
        set!(n_cross);
        set!(w_align);
        set!(w_cross);
        set!(w_rec);
        set!(lr);
        set!(epochs);
        if let Some(v) = &self.align_loss_form {
            cfg.set("align_loss_form", v)?;
        }
        set!(infer_k);
        if let Some(v) = &self.search_mode {
            cfg.set("search_mode", v)?;
        }
        set!(one_to_one);
        set!(seed);
        if let Some(v) = &self.out {
            cfg.set("out", &v.display().to_string())?;
        }
        Ok(())
    }
}

fn build_config(args: &StageArgs) -> kgalign::Result<PipelineConfig> {
    let mut cfg = PipelineConfig::default();
    if let Some(path) = &args.config {
        cfg.apply_file(path)?;
    }
    args.overrides.apply(&mut cfg)?;
    Ok(cfg)
}

fn run(cli: Cli) -> kgalign::Result<()> {
    let (args, stage) = match &cli.command {
        Command::Synth(a) => (a, Some(Stage::Synth)),
        Command::Partition(a) => (a, Some(Stage::Partition)),
        Command::Landmarks(a) => (a, Some(Stage::Landmarks)),
        Command::Train(a) => (a, Some(Stage::Train)),
        Command::Infer(a) => (a, Some(Stage::Infer)),
        Command::Eval(a) => (a, Some(Stage::Eval)),
        Command::Pipeline(a) => (a, None),
    };
    let cfg = build_config(args)?;
    match stage {
        Some(stage) => {
            let report = run_stage(&cfg, stage)?;
            println!(
                "{}: {:.2}s, peak {} bytes",
                report.stage, report.runtime_seconds, report.peak_memory_bytes
            );
        }
        None => {
            let report = run_pipeline(&cfg)?;
            println!(
                "precision={:.4} recall={:.4} f1={:.4}",
                report.precision, report.recall, report.f1
            );
            for (k, v) in &report.hits_at {
                println!("hits@{k}={v:.4}");
            }
            println!("mrr={:.4}", report.mrr);
            println!(
                "runtime_seconds={:.2} peak_memory_bytes={}",
                report.runtime_seconds, report.peak_memory_bytes
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            if e.is_validation() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
