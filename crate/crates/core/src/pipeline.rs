//! Sequential training over ordered groups, rollback unlearning, and the
//! retrain-from-scratch and C-SISA baselines.
//!
//! Every training stage draws its randomness from a stream keyed by
//! `(run seed, position in the visit order, epoch)`. Retraining a suffix of
//! the chain therefore replays exactly the streams a from-scratch run on
//! the edited data would use, and the unlearned model is bit-identical to
//! the retrained one.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::seq::index;
use rayon::prelude::*;

use crate::cfmodels::{self, Checkpoint, ModelKind, ModelParams, OptimizerState, TrainConfig, USER_EMBED};
use crate::error::{LaserError, Result};
use crate::grouping::GroupPlan;
use crate::ingest::InteractionMatrix;
use crate::rng;

pub const MANIFEST_NAME: &str = "chain.manifest";
const MANIFEST_HEADER: &str = "laser-chain 1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainOrder {
    /// Most cohesive group first.
    SeqTrain,
    /// Reverse of [`TrainOrder::SeqTrain`].
    AntiSeqTrain,
}

impl TrainOrder {
    pub fn as_str(self) -> &'static str {
        match self {
            TrainOrder::SeqTrain => "seqtrain",
            TrainOrder::AntiSeqTrain => "anti_seqtrain",
        }
    }

    pub fn visit_order(self, plan: &GroupPlan) -> Vec<usize> {
        let mut order = plan.train_order.clone();
        if self == TrainOrder::AntiSeqTrain {
            order.reverse();
        }
        order
    }
}

impl FromStr for TrainOrder {
    type Err = LaserError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "seqtrain" | "seq" => Ok(TrainOrder::SeqTrain),
            "anti_seqtrain" | "anti" => Ok(TrainOrder::AntiSeqTrain),
            other => Err(LaserError::Config(format!("unknown training order `{other}`"))),
        }
    }
}

/// Users to erase, all of their data at once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnlearnRequest {
    users: BTreeSet<usize>,
}

impl UnlearnRequest {
    pub fn new(users: impl IntoIterator<Item = usize>) -> Result<Self> {
        let users: BTreeSet<usize> = users.into_iter().collect();
        if users.is_empty() {
            return Err(LaserError::Precondition("unlearning request names no users".into()));
        }
        Ok(UnlearnRequest { users })
    }

    pub fn users(&self) -> &BTreeSet<usize> {
        &self.users
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn contains(&self, user: usize) -> bool {
        self.users.contains(&user)
    }

    fn validate(&self, n_users: usize) -> Result<()> {
        match self.users.iter().find(|&&u| u >= n_users) {
            Some(&u) => Err(LaserError::UnknownUser(u)),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RequestKind {
    /// `K%` of users drawn uniformly.
    Random,
    /// The `K%` most active users, ties by user id.
    Top,
}

impl RequestKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RequestKind::Random => "rand",
            RequestKind::Top => "top",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RequestGenerator {
    pub kind: RequestKind,
    pub k_percent: f64,
    pub seed: u64,
}

impl FromStr for RequestGenerator {
    type Err = LaserError;

    /// Parses `rand@K` or `top@K`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || LaserError::Config(format!("request `{s}` is not of the form rand@K or top@K"));
        let (kind, k) = s.split_once('@').ok_or_else(bad)?;
        let kind = match kind {
            "rand" | "random" => RequestKind::Random,
            "top" => RequestKind::Top,
            _ => return Err(bad()),
        };
        let k_percent: f64 = k.parse().map_err(|_| bad())?;
        Ok(RequestGenerator {
            kind,
            k_percent,
            seed: 0,
        })
    }
}

/// Number of users a `K%` request covers: `⌈K/100 · n⌉`.
pub fn request_size(n_users: usize, k_percent: f64) -> usize {
    // rounding guard so that e.g. 5% of 6040 is exactly 302
    let raw = k_percent / 100.0 * n_users as f64;
    (raw - 1e-9).ceil().max(0.0) as usize
}

/// Draw a request over the users that currently have ratings.
pub fn generate_request(matrix: &InteractionMatrix, gen: &RequestGenerator) -> Result<UnlearnRequest> {
    if !(gen.k_percent > 0.0 && gen.k_percent < 100.0) {
        return Err(LaserError::Config(format!("K must lie in (0, 100), got {}", gen.k_percent)));
    }
    let active = matrix.active_users();
    let count = request_size(active.len(), gen.k_percent);
    if count == 0 {
        return Err(LaserError::Precondition(format!(
            "K = {}% selects no user out of {}",
            gen.k_percent,
            active.len()
        )));
    }
    if count >= active.len() {
        return Err(LaserError::Precondition("request would erase every user".into()));
    }
    let users: Vec<usize> = match gen.kind {
        RequestKind::Random => {
            let mut rng = rng::rng_for(gen.seed, &[rng::TAG_REQUEST]);
            index::sample(&mut rng, active.len(), count)
                .into_iter()
                .map(|k| active[k])
                .collect()
        }
        RequestKind::Top => {
            let mut by_degree = active;
            by_degree.sort_by(|&a, &b| matrix.degree(b).cmp(&matrix.degree(a)).then(a.cmp(&b)));
            by_degree.truncate(count);
            by_degree
        }
    };
    UnlearnRequest::new(users)
}

/// Earliest position in `visit_order` holding a requested user.
pub fn locate_in(labels: &[usize], visit_order: &[usize], request: &UnlearnRequest) -> Result<usize> {
    request.validate(labels.len())?;
    let mut best = usize::MAX;
    for &u in request.users() {
        let g = labels[u];
        let pos = visit_order
            .iter()
            .position(|&x| x == g)
            .ok_or_else(|| LaserError::Format(format!("group {g} missing from the visit order")))?;
        best = best.min(pos);
    }
    Ok(best)
}

/// Earliest affected position in the plan's easy-to-hard order.
pub fn locate(plan: &GroupPlan, request: &UnlearnRequest) -> Result<usize> {
    locate_in(&plan.labels, &plan.train_order, request)
}

/// Seed of epoch `epoch` at chain position `position`.
pub fn stage_seed(run_seed: u64, position: usize, epoch: usize) -> u64 {
    rng::derive_seed(run_seed, &[rng::TAG_TRAIN, position as u64, epoch as u64])
}

/// Ordered model and optimizer snapshots, one after each trained group.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointChain {
    pub plan: GroupPlan,
    pub order: TrainOrder,
    pub model_kind: ModelKind,
    pub config: TrainConfig,
    pub epochs_per_group: usize,
    pub dir: PathBuf,
    pub initial_checkpoint: PathBuf,
    /// `checkpoints[k]` is saved after the `k`-th group of the visit order.
    pub checkpoints: Vec<PathBuf>,
}

impl CheckpointChain {
    pub fn visit_order(&self) -> Vec<usize> {
        self.order.visit_order(&self.plan)
    }

    pub fn len(&self) -> usize {
        self.checkpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.checkpoints.is_empty()
    }

    /// Copy the checkpoints and manifest into `dir`, returning the copy.
    pub fn copy_to(&self, dir: &Path) -> Result<CheckpointChain> {
        fs::create_dir_all(dir).map_err(|e| LaserError::io(dir, e))?;
        let copy = |src: &PathBuf| -> Result<PathBuf> {
            let dst = dir.join(src.file_name().unwrap_or_default());
            fs::copy(src, &dst).map_err(|e| LaserError::io(src, e))?;
            Ok(dst)
        };
        let chain = CheckpointChain {
            initial_checkpoint: copy(&self.initial_checkpoint)?,
            checkpoints: self.checkpoints.iter().map(copy).collect::<Result<_>>()?,
            dir: dir.to_path_buf(),
            ..self.clone()
        };
        chain.save_manifest()?;
        Ok(chain)
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.dir.join(MANIFEST_NAME)
    }

    /// The final checkpoint's parameters.
    pub fn served_model(&self) -> Result<ModelParams> {
        let last = self
            .checkpoints
            .last()
            .ok_or_else(|| LaserError::Format("checkpoint chain is empty".into()))?;
        Ok(Checkpoint::load(last)?.params)
    }

    pub fn locate(&self, request: &UnlearnRequest) -> Result<usize> {
        locate_in(&self.plan.labels, &self.visit_order(), request)
    }

    pub fn to_manifest(&self) -> String {
        let rel = |p: &Path| {
            p.strip_prefix(&self.dir)
                .unwrap_or(p)
                .display()
                .to_string()
        };
        let c = &self.config;
        let mut out = String::new();
        let _ = writeln!(out, "{MANIFEST_HEADER}");
        let _ = writeln!(out, "plan=plan.txt");
        let _ = writeln!(out, "model={}", self.model_kind.as_str());
        let _ = writeln!(out, "order={}", self.order.as_str());
        let _ = writeln!(out, "seed={}", c.seed);
        let _ = writeln!(out, "total_epochs={}", c.total_epochs);
        let _ = writeln!(out, "epochs_per_group={}", self.epochs_per_group);
        let _ = writeln!(out, "batch_size={}", c.batch_size);
        let _ = writeln!(out, "negative_per_positive={}", c.negative_per_positive);
        let _ = writeln!(out, "learning_rate={}", c.learning_rate);
        let _ = writeln!(out, "initial={}", rel(&self.initial_checkpoint));
        for (k, ck) in self.checkpoints.iter().enumerate() {
            let _ = writeln!(out, "checkpoint.{k}={}", rel(ck));
        }
        out
    }

    pub fn save_manifest(&self) -> Result<()> {
        let plan_path = self.dir.join("plan.txt");
        fs::write(&plan_path, self.plan.to_text()).map_err(|e| LaserError::io(&plan_path, e))?;
        let path = self.manifest_path();
        fs::write(&path, self.to_manifest()).map_err(|e| LaserError::io(&path, e))
    }

    /// Load a chain from its manifest and check that every checkpoint loads
    /// with a header consistent with the plan.
    pub fn load(manifest: &Path) -> Result<Self> {
        if !manifest.exists() {
            return Err(LaserError::MissingArtifact {
                path: manifest.to_path_buf(),
                command: "train",
            });
        }
        let text = fs::read_to_string(manifest).map_err(|e| LaserError::io(manifest, e))?;
        let dir = manifest.parent().unwrap_or(Path::new(".")).to_path_buf();
        let mut lines = text.lines();
        if lines.next() != Some(MANIFEST_HEADER) {
            return Err(LaserError::Format("not a chain manifest".into()));
        }
        let mut kv = std::collections::HashMap::new();
        let mut checkpoints = Vec::new();
        for line in lines {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| LaserError::Format(format!("bad manifest line `{line}`")))?;
            if let Some(idx) = k.strip_prefix("checkpoint.") {
                let idx: usize = idx.parse().map_err(|_| LaserError::Format(format!("bad key `{k}`")))?;
                if idx != checkpoints.len() {
                    return Err(LaserError::Format("checkpoints out of order in manifest".into()));
                }
                checkpoints.push(dir.join(v));
            } else {
                kv.insert(k.to_string(), v.to_string());
            }
        }
        let get = |k: &str| {
            kv.get(k)
                .cloned()
                .ok_or_else(|| LaserError::Format(format!("manifest is missing `{k}`")))
        };
        let num = |k: &str| -> Result<u64> {
            get(k)?.parse().map_err(|_| LaserError::Format(format!("bad `{k}` in manifest")))
        };
        let plan_path = dir.join(get("plan")?);
        let plan_text = fs::read_to_string(&plan_path).map_err(|e| LaserError::io(&plan_path, e))?;
        let plan = GroupPlan::from_text(&plan_text)?;
        let config = TrainConfig {
            total_epochs: num("total_epochs")? as usize,
            batch_size: num("batch_size")? as usize,
            negative_per_positive: num("negative_per_positive")? as usize,
            learning_rate: get("learning_rate")?
                .parse()
                .map_err(|_| LaserError::Format("bad learning_rate in manifest".into()))?,
            seed: num("seed")?,
        };
        let chain = CheckpointChain {
            model_kind: get("model")?.parse()?,
            order: get("order")?.parse()?,
            epochs_per_group: num("epochs_per_group")? as usize,
            initial_checkpoint: dir.join(get("initial")?),
            plan,
            config,
            dir,
            checkpoints,
        };
        chain.verify()?;
        Ok(chain)
    }

    /// Every checkpoint loads and matches the plan and model kind.
    pub fn verify(&self) -> Result<()> {
        if self.checkpoints.len() != self.plan.n_groups {
            return Err(LaserError::Format(format!(
                "chain has {} checkpoints for {} groups",
                self.checkpoints.len(),
                self.plan.n_groups
            )));
        }
        for (k, path) in std::iter::once(&self.initial_checkpoint).chain(&self.checkpoints).enumerate() {
            let ck = Checkpoint::load(path)?;
            if ck.params.kind != self.model_kind || ck.params.n_users != self.plan.n_users() || ck.seed != self.config.seed {
                return Err(LaserError::Format(format!(
                    "checkpoint {} does not match the chain header",
                    path.display()
                )));
            }
            if ck.epochs_done != (k * self.epochs_per_group) as u64 {
                return Err(LaserError::Format(format!(
                    "checkpoint {} records {} epochs, expected {}",
                    path.display(),
                    ck.epochs_done,
                    k * self.epochs_per_group
                )));
            }
        }
        Ok(())
    }
}

fn group_data(train: &InteractionMatrix, plan: &GroupPlan, visit: &[usize]) -> Result<Vec<InteractionMatrix>> {
    visit
        .iter()
        .enumerate()
        .map(|(pos, &g)| {
            let sub = train.retain_users(|u| plan.labels[u] == g);
            if sub.is_empty() {
                Err(LaserError::EmptyGroup { group: g, position: pos })
            } else {
                Ok(sub)
            }
        })
        .collect()
}

fn check_plan(train: &InteractionMatrix, plan: &GroupPlan) -> Result<()> {
    plan.validate()?;
    if plan.n_users() != train.n_users() {
        return Err(LaserError::Precondition(format!(
            "plan covers {} users, dataset has {}",
            plan.n_users(),
            train.n_users()
        )));
    }
    Ok(())
}

/// Zero the embedding rows of users without training data so erased users
/// leave no row behind in the served model.
fn scrub_inactive(params: &mut ModelParams, train: &InteractionMatrix) {
    let emb = &mut params.tensors[USER_EMBED];
    for u in 0..train.n_users() {
        if train.degree(u) == 0 {
            emb.row_mut(u).iter_mut().for_each(|x| *x = 0.0);
        }
    }
}

fn checkpoint_path(dir: &Path, position: usize) -> PathBuf {
    dir.join(format!("ckpt_{position:03}.bin"))
}

/// Train positions `from..` of the visit order starting from `state`,
/// writing one checkpoint per position.
fn train_suffix(
    mut state: Checkpoint,
    groups: &[InteractionMatrix],
    from: usize,
    config: &TrainConfig,
    epochs_per_group: usize,
    full_train: &InteractionMatrix,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for (pos, data) in groups.iter().enumerate().skip(from) {
        for e in 0..epochs_per_group {
            cfmodels::train_epoch(&mut state.params, &mut state.optimizer, data, config, stage_seed(config.seed, pos, e))?;
            state.epochs_done += 1;
        }
        let path = checkpoint_path(dir, pos);
        if pos + 1 == groups.len() {
            let mut served = state.clone();
            scrub_inactive(&mut served.params, full_train);
            served.save(&path)?;
        } else {
            state.save(&path)?;
        }
        written.push(path);
    }
    Ok(written)
}

/// Sequential training over the plan's groups with a checkpoint after each
/// group, written under `dir` together with a manifest.
pub fn learn(
    train: &InteractionMatrix,
    plan: &GroupPlan,
    kind: ModelKind,
    config: &TrainConfig,
    order: TrainOrder,
    dir: &Path,
) -> Result<CheckpointChain> {
    config.validate()?;
    check_plan(train, plan)?;
    let visit = order.visit_order(plan);
    let groups = group_data(train, plan, &visit)?;
    fs::create_dir_all(dir).map_err(|e| LaserError::io(dir, e))?;

    let params = cfmodels::init_params(train.n_users(), train.n_items(), kind, config.seed)?;
    let optimizer = OptimizerState::new(&params.tensor_shapes(), config.learning_rate);
    let initial = Checkpoint {
        params,
        optimizer,
        epochs_done: 0,
        seed: config.seed,
    };
    let initial_path = dir.join("ckpt_init.bin");
    initial.save(&initial_path)?;
    let epochs_per_group = config.total_epochs;
    let checkpoints = train_suffix(initial, &groups, 0, config, epochs_per_group, train, dir)?;
    let chain = CheckpointChain {
        plan: plan.clone(),
        order,
        model_kind: kind,
        config: *config,
        epochs_per_group,
        dir: dir.to_path_buf(),
        initial_checkpoint: initial_path,
        checkpoints,
    };
    chain.save_manifest()?;
    Ok(chain)
}

#[derive(Debug, Clone)]
pub struct UnlearnOutcome {
    /// Dataset with the requested users' ratings removed.
    pub edited: InteractionMatrix,
    /// First retrained position of the visit order.
    pub position: usize,
    pub groups_retrained: usize,
    pub elapsed: Duration,
}

/// Erase the requested users: roll back to the checkpoint before their
/// earliest group and retrain the rest of the chain on the edited data.
/// Checkpoints from that position on are overwritten in place.
pub fn unlearn(chain: &mut CheckpointChain, train: &InteractionMatrix, request: &UnlearnRequest) -> Result<UnlearnOutcome> {
    let start = Instant::now();
    check_plan(train, &chain.plan)?;
    request.validate(train.n_users())?;
    let position = chain.locate(request)?;
    let edited = train.retain_users(|u| !request.contains(u));
    let visit = chain.visit_order();
    let groups = group_data(&edited, &chain.plan, &visit)?;
    let restore = if position == 0 {
        chain.initial_checkpoint.clone()
    } else {
        chain.checkpoints[position - 1].clone()
    };
    let state = Checkpoint::load(&restore)?;
    let written = train_suffix(state, &groups, position, &chain.config, chain.epochs_per_group, &edited, &chain.dir)?;
    for (k, path) in written.into_iter().enumerate() {
        chain.checkpoints[position + k] = path;
    }
    chain.save_manifest()?;
    Ok(UnlearnOutcome {
        edited,
        position,
        groups_retrained: visit.len() - position,
        elapsed: start.elapsed(),
    })
}

/// Ground truth: sequential training from scratch on the edited data.
pub fn retrain_baseline(
    train_minus_e: &InteractionMatrix,
    plan: &GroupPlan,
    kind: ModelKind,
    config: &TrainConfig,
    order: TrainOrder,
    dir: &Path,
) -> Result<ModelParams> {
    learn(train_minus_e, plan, kind, config, order, dir)?.served_model()
}

/// Isolated per-group models whose user rows are concatenated.
#[derive(Debug, Clone, PartialEq)]
pub struct CsisaEnsemble {
    pub labels: Vec<usize>,
    pub shards: Vec<ModelParams>,
    pub config: TrainConfig,
}

/// Shard 0 uses the run seed itself, so a single shard is plain training.
fn shard_seed(run_seed: u64, group: usize) -> u64 {
    match group {
        0 => run_seed,
        g => rng::derive_seed(run_seed, &[rng::TAG_SHARD, g as u64]),
    }
}

fn train_shard(data: &InteractionMatrix, kind: ModelKind, config: &TrainConfig, group: usize) -> Result<ModelParams> {
    let seed = shard_seed(config.seed, group);
    let shard_config = TrainConfig { seed, ..*config };
    let mut params = cfmodels::init_params(data.n_users(), data.n_items(), kind, seed)?;
    let mut opt = OptimizerState::new(&params.tensor_shapes(), config.learning_rate);
    for e in 0..config.total_epochs {
        cfmodels::train_epoch(&mut params, &mut opt, data, &shard_config, stage_seed(seed, 0, e))?;
    }
    Ok(params)
}

impl CsisaEnsemble {
    /// Train one model per group on that group's ratings, concurrently on
    /// the current rayon pool.
    pub fn train(train: &InteractionMatrix, plan: &GroupPlan, kind: ModelKind, config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        check_plan(train, plan)?;
        let ids: Vec<usize> = (0..plan.n_groups).collect();
        let shards = ids
            .par_iter()
            .map(|&g| {
                let data = train.retain_users(|u| plan.labels[u] == g);
                if data.is_empty() {
                    return Err(LaserError::EmptyGroup { group: g, position: g });
                }
                train_shard(&data, kind, config, g)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CsisaEnsemble {
            labels: plan.labels.clone(),
            shards,
            config: *config,
        })
    }

    /// Retrain only the shards holding requested users. Returns the edited
    /// dataset and the number of shards retrained.
    pub fn unlearn(&mut self, train: &InteractionMatrix, request: &UnlearnRequest) -> Result<(InteractionMatrix, usize)> {
        request.validate(train.n_users())?;
        let edited = train.retain_users(|u| !request.contains(u));
        let affected: BTreeSet<usize> = request.users().iter().map(|&u| self.labels[u]).collect();
        let kind = self.shards[0].kind;
        let labels = &self.labels;
        let config = self.config;
        let retrained = affected
            .par_iter()
            .map(|&g| {
                let data = edited.retain_users(|u| labels[u] == g);
                if data.is_empty() {
                    return Err(LaserError::EmptyGroup { group: g, position: g });
                }
                Ok((g, train_shard(&data, kind, &config, g)?))
            })
            .collect::<Result<Vec<_>>>()?;
        for (g, params) in retrained {
            self.shards[g] = params;
        }
        Ok((edited, affected.len()))
    }

    /// User rows from each user's own shard; every other tensor is the
    /// element-wise mean over shards. Rows of users without data in
    /// `train` are zeroed.
    pub fn merge(&self, train: &InteractionMatrix) -> ModelParams {
        let s = self.shards.len() as f64;
        let first = &self.shards[0];
        let mut merged = ModelParams::zeros(first.kind, first.n_users, first.n_items);
        for (k, t) in merged.tensors.iter_mut().enumerate() {
            if k == USER_EMBED {
                for (u, &g) in self.labels.iter().enumerate() {
                    t.row_mut(u).copy_from_slice(self.shards[g].tensors[USER_EMBED].row(u));
                }
            } else {
                let out = t.as_mut_slice();
                for shard in &self.shards {
                    for (o, &x) in out.iter_mut().zip(shard.tensors[k].as_slice()) {
                        *o += x;
                    }
                }
                out.iter_mut().for_each(|o| *o /= s);
            }
        }
        scrub_inactive(&mut merged, train);
        merged
    }
}

/// Train C-SISA and return the merged served model.
pub fn csisa(train: &InteractionMatrix, plan: &GroupPlan, kind: ModelKind, config: &TrainConfig) -> Result<ModelParams> {
    Ok(CsisaEnsemble::train(train, plan, kind, config)?.merge(train))
}

/// Plain single-stage training on the whole dataset.
pub fn train_single(train: &InteractionMatrix, kind: ModelKind, config: &TrainConfig) -> Result<ModelParams> {
    config.validate()?;
    let mut params = cfmodels::init_params(train.n_users(), train.n_items(), kind, config.seed)?;
    let mut opt = OptimizerState::new(&params.tensor_shapes(), config.learning_rate);
    for e in 0..config.total_epochs {
        cfmodels::train_epoch(&mut params, &mut opt, train, config, stage_seed(config.seed, 0, e))?;
    }
    scrub_inactive(&mut params, train);
    Ok(params)
}

/// Byte-level equality of two parameter sets.
pub fn params_bit_identical(a: &ModelParams, b: &ModelParams) -> bool {
    a.kind == b.kind
        && a.tensors.len() == b.tensors.len()
        && a.tensors.iter().zip(&b.tensors).all(|(x, y)| {
            x.rows() == y.rows()
                && x.cols() == y.cols()
                && x.as_slice().iter().zip(y.as_slice()).all(|(p, q)| p.to_bits() == q.to_bits())
        })
}
