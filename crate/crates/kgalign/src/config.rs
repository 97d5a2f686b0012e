//! Pipeline configuration.
//!
//! Line-based `key=value` text with `#` comments. Command-line flags use
//! exactly the same key names and override file values. Defaults follow the
//! published hyper-parameters where they exist (eta, lambda, labeling
//! floor, search k, and the per-scale block counts and landmark budgets).

use std::fs;
use std::path::{Path, PathBuf};

use crate::infer::SearchMode;
use crate::loss::LossForm;
use crate::train::TrainConfig;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    /// OpenEA-layout dataset directory; when unset, the synthetic
    /// generator parameters below apply.
    pub dataset: Option<PathBuf>,
    pub synth_entities: usize,
    pub synth_relations: usize,
    pub synth_avg_degree: f64,
    pub synth_overlap: f64,

    pub train_fraction: f64,
    pub valid_fraction: f64,

    /// Block count; unset picks the per-scale default.
    pub n_blocks: Option<usize>,
    pub epsilon: f64,

    pub eta: f64,
    pub floor: f64,
    pub lambda: f64,
    /// Landmark budget per subgraph; unset picks the per-scale default.
    pub budget: Option<usize>,

    pub dim: usize,
    pub alpha: f64,
    pub beta: f64,
    pub proxies: usize,
    pub n_cross: usize,
    pub w_align: f64,
    pub w_cross: f64,
    pub w_rec: f64,
    pub lr: f64,
    pub epochs: usize,
    pub align_loss_form: LossForm,

    pub infer_k: usize,
    pub search_mode: SearchMode,
    pub one_to_one: bool,

    pub seed: u64,
    pub out: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            dataset: None,
            synth_entities: 1000,
            synth_relations: 10,
            synth_avg_degree: 4.0,
            synth_overlap: 1.0,
            train_fraction: 0.3,
            valid_fraction: 0.1,
            n_blocks: None,
            epsilon: 0.05,
            eta: 0.001,
            floor: 0.49,
            lambda: 0.01,
            budget: None,
            dim: 128,
            alpha: 15.0,
            beta: 0.7,
            proxies: 64,
            n_cross: 256,
            w_align: 1.0,
            w_cross: 0.1,
            w_rec: 0.1,
            lr: 0.02,
            epochs: 50,
            align_loss_form: LossForm::Literal,
            infer_k: 5,
            search_mode: SearchMode::Exact,
            one_to_one: true,
            seed: 42,
            out: PathBuf::from("out"),
        }
    }
}

impl PipelineConfig {
    /// Per-scale defaults: 5 blocks / 7,500 landmarks up to small graphs,
    /// 10 / 25,000 at medium scale, 40 / 90,000 beyond.
    pub fn scale_defaults(entities_per_side: usize) -> (usize, usize) {
        if entities_per_side <= 50_000 {
            (5, 7_500)
        } else if entities_per_side <= 500_000 {
            (10, 25_000)
        } else {
            (40, 90_000)
        }
    }

    pub fn resolved_blocks(&self, entities_per_side: usize) -> usize {
        self.n_blocks
            .unwrap_or_else(|| Self::scale_defaults(entities_per_side).0)
    }

    pub fn resolved_budget(&self, entities_per_side: usize) -> usize {
        self.budget
            .unwrap_or_else(|| Self::scale_defaults(entities_per_side).1)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            dim: self.dim,
            alpha: self.alpha,
            beta: self.beta,
            n_proxies: self.proxies,
            n_cross: self.n_cross,
            w_align: self.w_align,
            w_cross: self.w_cross,
            w_rec: self.w_rec,
            lr: self.lr,
            epochs: self.epochs,
            seed: crate::seed::derive(self.seed, "train"),
            loss_form: self.align_loss_form,
        }
    }

    /// Apply one `key=value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| {
            Error::InvalidInput(format!("bad value '{value}' for config key '{key}': {what}"))
        };
        macro_rules! parse {
            ($t:ty) => {
                value.parse::<$t>().map_err(|e| bad(&e.to_string()))?
            };
        }
        match key {
            "dataset" => self.dataset = Some(PathBuf::from(value)),
            "synth_entities" => self.synth_entities = parse!(usize),
            "synth_relations" => self.synth_relations = parse!(usize),
            "synth_avg_degree" => self.synth_avg_degree = parse!(f64),
            "synth_overlap" => self.synth_overlap = parse!(f64),
            "train_fraction" => self.train_fraction = parse!(f64),
            "valid_fraction" => self.valid_fraction = parse!(f64),
            "n_blocks" => self.n_blocks = Some(parse!(usize)),
            "epsilon" => self.epsilon = parse!(f64),
            "eta" => self.eta = parse!(f64),
            "floor" => self.floor = parse!(f64),
            "lambda" => self.lambda = parse!(f64),
            "budget" => self.budget = Some(parse!(usize)),
            "dim" => self.dim = parse!(usize),
            "alpha" => self.alpha = parse!(f64),
            "beta" => self.beta = parse!(f64),
            "proxies" => self.proxies = parse!(usize),
            "n_cross" => self.n_cross = parse!(usize),
            "w_align" => self.w_align = parse!(f64),
            "w_cross" => self.w_cross = parse!(f64),
            "w_rec" => self.w_rec = parse!(f64),
            "lr" => self.lr = parse!(f64),
            "epochs" => self.epochs = parse!(usize),
            "align_loss_form" => {
                self.align_loss_form = value.parse().map_err(|e: String| bad(&e))?
            }
            "infer_k" => self.infer_k = parse!(usize),
            "search_mode" => self.search_mode = value.parse().map_err(|e: String| bad(&e))?,
            "one_to_one" => self.one_to_one = parse!(bool),
            "seed" => self.seed = parse!(u64),
            "out" => self.out = PathBuf::from(value),
            other => {
                return Err(Error::InvalidInput(format!("unknown config key '{other}'")));
            }
        }
        Ok(())
    }

    /// Load a config file over the defaults.
    pub fn from_file(path: &Path) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        cfg.apply_file(path)?;
        Ok(cfg)
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::parse(path, lineno + 1, "expected key=value"));
            };
            self.set(key.trim(), value.trim())
                .map_err(|e| Error::parse(path, lineno + 1, e.to_string()))?;
        }
        Ok(())
    }

    /// The fully-resolved configuration as key/value pairs, in key order.
    pub fn echo(&self) -> Vec<(String, String)> {
        let mut kv: Vec<(String, String)> = Vec::new();
        let mut push = |k: &str, v: String| kv.push((k.to_string(), v));
        push(
            "dataset",
            self.dataset
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_else(|| "<synthetic>".into()),
        );
        push("synth_entities", self.synth_entities.to_string());
        push("synth_relations", self.synth_relations.to_string());
        push("synth_avg_degree", self.synth_avg_degree.to_string());
        push("synth_overlap", self.synth_overlap.to_string());
        push("train_fraction", self.train_fraction.to_string());
        push("valid_fraction", self.valid_fraction.to_string());
        push(
            "n_blocks",
            self.n_blocks
                .map(|n| n.to_string())
                .unwrap_or_else(|| "<scale-default>".into()),
        );
        push("epsilon", self.epsilon.to_string());
        push("eta", self.eta.to_string());
        push("floor", self.floor.to_string());
        push("lambda", self.lambda.to_string());
        push(
            "budget",
            self.budget
                .map(|n| n.to_string())
                .unwrap_or_else(|| "<scale-default>".into()),
        );
        push("dim", self.dim.to_string());
        push("alpha", self.alpha.to_string());
        push("beta", self.beta.to_string());
        push("proxies", self.proxies.to_string());
        push("n_cross", self.n_cross.to_string());
        push("w_align", self.w_align.to_string());
        push("w_cross", self.w_cross.to_string());
        push("w_rec", self.w_rec.to_string());
        push("lr", self.lr.to_string());
        push("epochs", self.epochs.to_string());
        push("align_loss_form", self.align_loss_form.to_string());
        push("infer_k", self.infer_k.to_string());
        push(
            "search_mode",
            match self.search_mode {
                SearchMode::Exact => "exact".into(),
                SearchMode::Approximate { .. } => "approximate".into(),
            },
        );
        push("one_to_one", self.one_to_one.to_string());
        push("seed", self.seed.to_string());
        push("out", self.out.display().to_string());
        kv
    }

    pub fn validate(&self) -> Result<()> {
        if self.train_fraction <= 0.0
            || self.valid_fraction <= 0.0
            || self.train_fraction + self.valid_fraction >= 1.0
        {
            return Err(Error::InvalidInput(
                "split fractions must be positive and sum below 1".into(),
            ));
        }
        if self.infer_k == 0 {
            return Err(Error::InvalidInput("infer_k must be at least 1".into()));
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::InvalidInput(
                "lambda must lie strictly between 0 and 1".into(),
            ));
        }
        self.train_config().validate()
    }
}
