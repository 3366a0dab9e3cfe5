//! Plain-text `key = value` run configuration.
//!
//! Keys are `section.name`; a `[section]` line sets the prefix for the lines
//! that follow it. `#` starts a comment.

use std::path::{Path, PathBuf};

use crate::cfmodels::{ModelKind, TrainConfig};
use crate::embed::EmbedConfig;
use crate::error::{LaserError, Result};
use crate::eval::RankEvalConfig;
use crate::grouping::{ClusterConfig, GroupSource};
use crate::hypergraph::WalkConfig;
use crate::ingest::{RatingFormat, SplitSpec};
use crate::pipeline::{RequestKind, TrainOrder};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data_path: Option<PathBuf>,
    pub data_format: RatingFormat,
    pub min_interactions: usize,
    pub train_fraction: f64,

    pub walk_repetition: usize,
    pub walk_depth: usize,
    pub walk_l_order: usize,

    pub embed_dim: usize,
    pub embed_window: usize,
    pub embed_negatives: usize,
    pub embed_epochs: usize,
    pub embed_learning_rate: f64,
    pub embed_min_learning_rate: f64,

    pub n_groups: usize,
    pub source: GroupSource,
    pub max_iter: usize,

    pub model: ModelKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub negatives: usize,
    pub learning_rate: f64,
    pub order: TrainOrder,

    pub eval_cutoff: usize,
    pub eval_negatives: usize,

    pub seed: u64,
    /// 0 means all available cores.
    pub threads: usize,
    pub out: PathBuf,

    pub bench_groups: Vec<usize>,
    pub bench_k: Vec<f64>,
    pub bench_requests: Vec<RequestKind>,
    pub bench_models: Vec<ModelKind>,
    pub bench_seeds: usize,
    pub bench_timing_runs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let walk = WalkConfig::default();
        let embed = EmbedConfig::default();
        let train = TrainConfig::default();
        RunConfig {
            data_path: None,
            data_format: RatingFormat::MovielensDat,
            min_interactions: 5,
            train_fraction: SplitSpec::default().train_fraction,
            walk_repetition: walk.repetition,
            walk_depth: walk.depth,
            walk_l_order: walk.l_order,
            embed_dim: embed.dim,
            embed_window: embed.window,
            embed_negatives: embed.negatives,
            embed_epochs: embed.epochs,
            embed_learning_rate: embed.learning_rate,
            embed_min_learning_rate: embed.min_learning_rate,
            n_groups: 4,
            source: GroupSource::CollabEmbedding,
            max_iter: 20,
            model: ModelKind::Dmf,
            epochs: train.total_epochs,
            batch_size: train.batch_size,
            negatives: train.negative_per_positive,
            learning_rate: train.learning_rate,
            order: TrainOrder::SeqTrain,
            eval_cutoff: 10,
            eval_negatives: 99,
            seed: 0,
            threads: 0,
            out: PathBuf::from("out"),
            bench_groups: vec![1, 2, 4, 8],
            bench_k: vec![2.5, 5.0],
            bench_requests: vec![RequestKind::Random, RequestKind::Top],
            bench_models: vec![ModelKind::Dmf, ModelKind::Nmf],
            bench_seeds: 1,
            bench_timing_runs: 5,
        }
    }
}

fn format_name(f: RatingFormat) -> &'static str {
    match f {
        RatingFormat::MovielensDat => "movielens_dat",
        RatingFormat::Csv => "csv",
        RatingFormat::DenseTsv => "dense_tsv",
    }
}

fn list<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn parse_list<T>(value: &str, parse: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    let items = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(parse)
        .collect::<Result<Vec<_>>>()?;
    if items.is_empty() {
        return Err(LaserError::Config(format!("empty list `{value}`")));
    }
    Ok(items)
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| LaserError::Config(format!("`{key}` expects a number, got `{value}`")))
}

fn request_kind(s: &str) -> Result<RequestKind> {
    match s {
        "rand" | "random" => Ok(RequestKind::Random),
        "top" => Ok(RequestKind::Top),
        other => Err(LaserError::Config(format!("unknown request kind `{other}`"))),
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LaserError::io(path, e))?;
        let mut cfg = RunConfig::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut section = String::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| LaserError::Parse {
                line: n + 1,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            let k = k.trim();
            let key = if section.is_empty() || k.contains('.') {
                k.to_string()
            } else {
                format!("{section}.{k}")
            };
            self.set(&key, v.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "data.path" => self.data_path = Some(PathBuf::from(value)),
            "data.format" => self.data_format = value.parse()?,
            "data.min_interactions" => self.min_interactions = num(key, value)?,
            "data.train_fraction" => self.train_fraction = num(key, value)?,
            "walk.repetition" => self.walk_repetition = num(key, value)?,
            "walk.depth" => self.walk_depth = num(key, value)?,
            "walk.l_order" => self.walk_l_order = num(key, value)?,
            "embed.dim" => self.embed_dim = num(key, value)?,
            "embed.window" => self.embed_window = num(key, value)?,
            "embed.negatives" => self.embed_negatives = num(key, value)?,
            "embed.epochs" => self.embed_epochs = num(key, value)?,
            "embed.learning_rate" => self.embed_learning_rate = num(key, value)?,
            "embed.min_learning_rate" => self.embed_min_learning_rate = num(key, value)?,
            "group.S" => self.n_groups = num(key, value)?,
            "group.source" => self.source = value.parse()?,
            "group.max_iter" => self.max_iter = num(key, value)?,
            "model.kind" => self.model = value.parse()?,
            "train.epochs" => self.epochs = num(key, value)?,
            "train.batch_size" => self.batch_size = num(key, value)?,
            "train.negatives" => self.negatives = num(key, value)?,
            "train.learning_rate" => self.learning_rate = num(key, value)?,
            "train.order" => self.order = value.parse()?,
            "eval.cutoff" => self.eval_cutoff = num(key, value)?,
            "eval.negatives" => self.eval_negatives = num(key, value)?,
            "run.seed" => self.seed = num(key, value)?,
            "run.threads" => self.threads = num(key, value)?,
            "run.out" => self.out = PathBuf::from(value),
            "bench.S" => self.bench_groups = parse_list(value, |s| num(key, s))?,
            "bench.K" => self.bench_k = parse_list(value, |s| num(key, s))?,
            "bench.requests" => self.bench_requests = parse_list(value, request_kind)?,
            "bench.models" => self.bench_models = parse_list(value, |s| s.parse())?,
            "bench.seeds" => self.bench_seeds = num(key, value)?,
            "bench.timing_runs" => self.bench_timing_runs = num(key, value)?,
            other => return Err(LaserError::Config(format!("unknown configuration key `{other}`"))),
        }
        Ok(())
    }

    /// Every key except `data.path`, in canonical form.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("data.format", format_name(self.data_format).to_string()),
            ("data.min_interactions", self.min_interactions.to_string()),
            ("data.train_fraction", self.train_fraction.to_string()),
            ("walk.repetition", self.walk_repetition.to_string()),
            ("walk.depth", self.walk_depth.to_string()),
            ("walk.l_order", self.walk_l_order.to_string()),
            ("embed.dim", self.embed_dim.to_string()),
            ("embed.window", self.embed_window.to_string()),
            ("embed.negatives", self.embed_negatives.to_string()),
            ("embed.epochs", self.embed_epochs.to_string()),
            ("embed.learning_rate", self.embed_learning_rate.to_string()),
            ("embed.min_learning_rate", self.embed_min_learning_rate.to_string()),
            ("group.S", self.n_groups.to_string()),
            ("group.source", self.source.as_str().to_string()),
            ("group.max_iter", self.max_iter.to_string()),
            ("model.kind", self.model.as_str().to_string()),
            ("train.epochs", self.epochs.to_string()),
            ("train.batch_size", self.batch_size.to_string()),
            ("train.negatives", self.negatives.to_string()),
            ("train.learning_rate", self.learning_rate.to_string()),
            ("train.order", self.order.as_str().to_string()),
            ("eval.cutoff", self.eval_cutoff.to_string()),
            ("eval.negatives", self.eval_negatives.to_string()),
            ("run.seed", self.seed.to_string()),
            ("bench.S", list(&self.bench_groups)),
            ("bench.K", list(&self.bench_k)),
            ("bench.requests", list(&self.bench_requests.iter().map(|r| r.as_str()).collect::<Vec<_>>())),
            ("bench.models", list(&self.bench_models.iter().map(|m| m.as_str()).collect::<Vec<_>>())),
            ("bench.seeds", self.bench_seeds.to_string()),
            ("bench.timing_runs", self.bench_timing_runs.to_string()),
        ]
    }

    /// `key=value` lines for the keys under the given section prefixes plus
    /// the run seed.
    pub fn subset(&self, sections: &[&str]) -> Vec<String> {
        self.entries()
            .into_iter()
            .filter(|(k, _)| *k == "run.seed" || sections.iter().any(|s| k.starts_with(&format!("{s}."))))
            .map(|(k, v)| format!("{k}={v}"))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.walk_config().validate()?;
        self.embed_config().validate()?;
        self.train_config().validate()?;
        self.rank_config().validate()?;
        if self.n_groups == 0 || self.bench_groups.contains(&0) {
            return Err(LaserError::Config("S must be at least 1".into()));
        }
        if self.bench_timing_runs == 0 || self.bench_seeds == 0 {
            return Err(LaserError::Config("bench.timing_runs and bench.seeds must be at least 1".into()));
        }
        if self.min_interactions == 0 {
            return Err(LaserError::Config("data.min_interactions must be at least 1".into()));
        }
        Ok(())
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            train_fraction: self.train_fraction,
            seed: self.seed,
        }
    }

    pub fn walk_config(&self) -> WalkConfig {
        WalkConfig {
            repetition: self.walk_repetition,
            depth: self.walk_depth,
            l_order: self.walk_l_order,
            seed: self.seed,
        }
    }

    pub fn embed_config(&self) -> EmbedConfig {
        EmbedConfig {
            dim: self.embed_dim,
            window: self.embed_window,
            negatives: self.embed_negatives,
            epochs: self.embed_epochs,
            learning_rate: self.embed_learning_rate,
            min_learning_rate: self.embed_min_learning_rate,
            seed: self.seed,
        }
    }

    pub fn cluster_config(&self) -> ClusterConfig {
        ClusterConfig {
            n_groups: self.n_groups,
            max_iter: self.max_iter,
            seed: self.seed,
            source: self.source,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            total_epochs: self.epochs,
            batch_size: self.batch_size,
            negative_per_positive: self.negatives,
            learning_rate: self.learning_rate,
            seed: self.seed,
        }
    }

    pub fn rank_config(&self) -> RankEvalConfig {
        RankEvalConfig {
            cutoff: self.eval_cutoff,
            negatives_per_test: self.eval_negatives,
            seed: self.seed,
        }
    }
}
