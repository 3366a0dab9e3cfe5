//! C ABI over `laser-core`.
//!
//! Datasets, group plans and checkpoint chains are opaque handles created
//! by `laser_*_create`/`laser_*_load`/`laser_learn` and released with the
//! matching `laser_*_free`. Fallible calls return a [`LaserStatus`]; on
//! failure `laser_last_error()` describes the error for the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use laser_core::cfmodels::{self, ModelKind, ModelParams, TrainConfig};
use laser_core::embed::{self, EmbedConfig};
use laser_core::eval::{self, RankEvalConfig};
use laser_core::grouping::{self, ClusterConfig, GroupPlan, GroupSource};
use laser_core::hypergraph::WalkConfig;
use laser_core::ingest::{self, InteractionMatrix, RatingFormat, SplitSpec};
use laser_core::pipeline::{self, CheckpointChain, TrainOrder, UnlearnRequest};
use laser_core::LaserError;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LaserStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    EmptyDataset = 5,
    Precondition = 6,
    Config = 7,
    OutOfRange = 8,
    Format = 9,
    Divergence = 10,
    EmptyGroup = 11,
    UnknownUser = 12,
    MissingUser = 13,
    MissingArtifact = 14,
    Panic = 15,
}

pub const LASER_FORMAT_MOVIELENS_DAT: u32 = 0;
pub const LASER_FORMAT_CSV: u32 = 1;
pub const LASER_FORMAT_DENSE_TSV: u32 = 2;

pub const LASER_MODEL_DMF: u32 = 0;
pub const LASER_MODEL_NMF: u32 = 1;

pub const LASER_ORDER_SEQTRAIN: u32 = 0;
pub const LASER_ORDER_ANTI_SEQTRAIN: u32 = 1;

pub const LASER_SOURCE_COLLAB_EMBEDDING: u32 = 0;
pub const LASER_SOURCE_RAW_RATINGS: u32 = 1;
pub const LASER_SOURCE_RANDOM: u32 = 2;

/// Train/test split of an ingested ratings file.
pub struct LaserDataset {
    train: InteractionMatrix,
    test: InteractionMatrix,
}

pub struct LaserPlan {
    plan: GroupPlan,
}

/// A trained checkpoint chain together with the data it currently covers.
pub struct LaserChain {
    chain: CheckpointChain,
    train: InteractionMatrix,
    test: InteractionMatrix,
    served: ModelParams,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaserTrainOptions {
    /// Epochs per group.
    pub epochs: usize,
    pub batch_size: usize,
    pub negatives_per_positive: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

enum Failure {
    Null(&'static str),
    Invalid(String),
    Core(LaserError),
}

impl From<LaserError> for Failure {
    fn from(e: LaserError) -> Self {
        Failure::Core(e)
    }
}

fn status_of(e: &LaserError) -> LaserStatus {
    match e {
        LaserError::Io { .. } => LaserStatus::Io,
        LaserError::Parse { .. } => LaserStatus::Parse,
        LaserError::EmptyDataset(_) => LaserStatus::EmptyDataset,
        LaserError::Precondition(_) => LaserStatus::Precondition,
        LaserError::Config(_) => LaserStatus::Config,
        LaserError::OutOfRange { .. } => LaserStatus::OutOfRange,
        LaserError::Format(_) => LaserStatus::Format,
        LaserError::Divergence { .. } => LaserStatus::Divergence,
        LaserError::EmptyGroup { .. } => LaserStatus::EmptyGroup,
        LaserError::UnknownUser(_) => LaserStatus::UnknownUser,
        LaserError::MissingUser(_) => LaserStatus::MissingUser,
        LaserError::MissingArtifact { .. } => LaserStatus::MissingArtifact,
    }
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> LaserStatus {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LaserStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer passed for `{what}`"));
            LaserStatus::NullArgument
        }
        Ok(Err(Failure::Invalid(msg))) => {
            set_error(msg);
            LaserStatus::InvalidArgument
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            LaserStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    // SAFETY: the caller guarantees `p` is null or a live handle.
    unsafe { p.as_ref() }.ok_or(Failure::Null(what))
}

unsafe fn borrow_mut<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    // SAFETY: the caller guarantees `p` is null or a live, unaliased handle.
    unsafe { p.as_mut() }.ok_or(Failure::Null(what))
}

unsafe fn path_arg(p: *const c_char, what: &'static str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    // SAFETY: non-null and NUL-terminated per the caller contract.
    let s = unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| Failure::Invalid(format!("`{what}` is not valid UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &'static str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null(what));
    }
    // SAFETY: non-null and writable per the caller contract.
    unsafe { out.write(value) };
    Ok(())
}

fn model_kind(code: u32) -> Result<ModelKind, Failure> {
    ModelKind::from_code(code).map_err(Failure::from)
}

fn order(code: u32) -> Result<TrainOrder, Failure> {
    match code {
        LASER_ORDER_SEQTRAIN => Ok(TrainOrder::SeqTrain),
        LASER_ORDER_ANTI_SEQTRAIN => Ok(TrainOrder::AntiSeqTrain),
        other => Err(Failure::Invalid(format!("unknown training order {other}"))),
    }
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next `laser_*` call on the same thread.
#[no_mangle]
pub extern "C" fn laser_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub extern "C" fn laser_train_options_default() -> LaserTrainOptions {
    let d = TrainConfig::default();
    LaserTrainOptions {
        epochs: d.total_epochs,
        batch_size: d.batch_size,
        negatives_per_positive: d.negative_per_positive,
        learning_rate: d.learning_rate,
        seed: d.seed,
    }
}

/// Load a ratings file, filter users and items with fewer than
/// `min_interactions` ratings, and split each user's ratings.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn laser_dataset_load(
    path: *const c_char,
    format: u32,
    min_interactions: usize,
    train_fraction: f64,
    seed: u64,
    out: *mut *mut LaserDataset,
) -> LaserStatus {
    guard(|| {
        let path = unsafe { path_arg(path, "path") }?;
        let format = match format {
            LASER_FORMAT_MOVIELENS_DAT => RatingFormat::MovielensDat,
            LASER_FORMAT_CSV => RatingFormat::Csv,
            LASER_FORMAT_DENSE_TSV => RatingFormat::DenseTsv,
            other => return Err(Failure::Invalid(format!("unknown rating format {other}"))),
        };
        let raw = ingest::load_ratings(&path, format)?;
        let matrix = ingest::build_matrix(&raw, min_interactions)?;
        let (train, test) = ingest::split(&matrix, SplitSpec { train_fraction, seed })?;
        let handle = Box::into_raw(Box::new(LaserDataset { train, test }));
        unsafe { write_out(out, handle, "out") }.inspect_err(|_| {
            // SAFETY: just created above and not yet shared.
            drop(unsafe { Box::from_raw(handle) });
        })
    })
}

/// # Safety
/// `dataset` must be null or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn laser_dataset_n_users(dataset: *const LaserDataset) -> usize {
    unsafe { dataset.as_ref() }.map_or(0, |d| d.train.n_users())
}

/// # Safety
/// `dataset` must be null or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn laser_dataset_n_items(dataset: *const LaserDataset) -> usize {
    unsafe { dataset.as_ref() }.map_or(0, |d| d.train.n_items())
}

/// # Safety
/// `dataset` must be null or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn laser_dataset_n_train(dataset: *const LaserDataset) -> usize {
    unsafe { dataset.as_ref() }.map_or(0, |d| d.train.n_entries())
}

/// # Safety
/// `dataset` must be null or a handle from `laser_dataset_load` that has
/// not been freed.
#[no_mangle]
pub unsafe extern "C" fn laser_dataset_free(dataset: *mut LaserDataset) {
    if !dataset.is_null() {
        drop(unsafe { Box::from_raw(dataset) });
    }
}

/// Balanced groups of the dataset's users and their training order.
///
/// # Safety
/// `dataset` must be a live dataset handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn laser_plan_create(
    dataset: *const LaserDataset,
    n_groups: usize,
    source: u32,
    seed: u64,
    out: *mut *mut LaserPlan,
) -> LaserStatus {
    guard(|| {
        let ds = unsafe { borrow(dataset, "dataset") }?;
        let source = match source {
            LASER_SOURCE_COLLAB_EMBEDDING => GroupSource::CollabEmbedding,
            LASER_SOURCE_RAW_RATINGS => GroupSource::RawRatings,
            LASER_SOURCE_RANDOM => GroupSource::Random,
            other => return Err(Failure::Invalid(format!("unknown grouping source {other}"))),
        };
        let points = match source {
            GroupSource::CollabEmbedding => {
                let walk = WalkConfig {
                    seed,
                    ..WalkConfig::default()
                };
                let cfg = EmbedConfig {
                    seed,
                    ..EmbedConfig::default()
                };
                embed::collab_embedding(&ds.train, &walk, &cfg)?.vectors
            }
            _ => grouping::rating_points(&ds.train),
        };
        let cc = ClusterConfig {
            source,
            ..ClusterConfig::new(n_groups, seed)
        };
        let plan = grouping::make_plan(&points, &cc)?;
        unsafe { write_out(out, Box::into_raw(Box::new(LaserPlan { plan })), "out") }
    })
}

/// # Safety
/// `plan` must be null or a live plan handle.
#[no_mangle]
pub unsafe extern "C" fn laser_plan_n_groups(plan: *const LaserPlan) -> usize {
    unsafe { plan.as_ref() }.map_or(0, |p| p.plan.n_groups)
}

/// Group of `user` and its position in the training order.
///
/// # Safety
/// `plan` must be a live plan handle; `out_group` and `out_position` must
/// be writable.
#[no_mangle]
pub unsafe extern "C" fn laser_plan_group_of(
    plan: *const LaserPlan,
    user: usize,
    out_group: *mut usize,
    out_position: *mut usize,
) -> LaserStatus {
    guard(|| {
        let p = unsafe { borrow(plan, "plan") }?;
        let g = *p.plan.labels.get(user).ok_or(LaserError::UnknownUser(user))?;
        unsafe { write_out(out_group, g, "out_group") }?;
        unsafe { write_out(out_position, p.plan.position_of(g), "out_position") }
    })
}

/// # Safety
/// `plan` must be null or a handle from `laser_plan_create` that has not
/// been freed.
#[no_mangle]
pub unsafe extern "C" fn laser_plan_free(plan: *mut LaserPlan) {
    if !plan.is_null() {
        drop(unsafe { Box::from_raw(plan) });
    }
}

/// Train a checkpoint chain over the plan's groups, storing checkpoints
/// under `dir`.
///
/// # Safety
/// `dataset`, `plan` and `options` must be live; `dir` NUL-terminated;
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn laser_learn(
    dataset: *const LaserDataset,
    plan: *const LaserPlan,
    model: u32,
    train_order: u32,
    options: *const LaserTrainOptions,
    dir: *const c_char,
    out: *mut *mut LaserChain,
) -> LaserStatus {
    guard(|| {
        let ds = unsafe { borrow(dataset, "dataset") }?;
        let p = unsafe { borrow(plan, "plan") }?;
        let o = unsafe { borrow(options, "options") }?;
        let dir = unsafe { path_arg(dir, "dir") }?;
        let cfg = TrainConfig {
            total_epochs: o.epochs,
            batch_size: o.batch_size,
            negative_per_positive: o.negatives_per_positive,
            learning_rate: o.learning_rate,
            seed: o.seed,
        };
        let chain = pipeline::learn(&ds.train, &p.plan, model_kind(model)?, &cfg, order(train_order)?, &dir)?;
        let served = chain.served_model()?;
        let handle = LaserChain {
            chain,
            train: ds.train.clone(),
            test: ds.test.clone(),
            served,
        };
        unsafe { write_out(out, Box::into_raw(Box::new(handle)), "out") }
    })
}

/// Erase every rating of the given users and update the chain in place.
/// `out_position` receives the first retrained position of the order.
///
/// # Safety
/// `chain` must be a live chain handle not used concurrently; `users` must
/// point to `n_users` readable values; `out_position` may be null.
#[no_mangle]
pub unsafe extern "C" fn laser_unlearn(
    chain: *mut LaserChain,
    users: *const usize,
    n_users: usize,
    out_position: *mut usize,
) -> LaserStatus {
    guard(|| {
        let c = unsafe { borrow_mut(chain, "chain") }?;
        if users.is_null() {
            return Err(Failure::Null("users"));
        }
        // SAFETY: `users` points to `n_users` values per the contract.
        let ids = unsafe { std::slice::from_raw_parts(users, n_users) };
        let request = UnlearnRequest::new(ids.iter().copied())?;
        let outcome = pipeline::unlearn(&mut c.chain, &c.train, &request)?;
        c.served = c.chain.served_model()?;
        c.train = outcome.edited;
        if !out_position.is_null() {
            unsafe { out_position.write(outcome.position) };
        }
        Ok(())
    })
}

/// Predicted preference of `user` for `item` under the served model.
///
/// # Safety
/// `chain` must be a live chain handle and `out_score` writable.
#[no_mangle]
pub unsafe extern "C" fn laser_predict(
    chain: *const LaserChain,
    user: usize,
    item: usize,
    out_score: *mut f64,
) -> LaserStatus {
    guard(|| {
        let c = unsafe { borrow(chain, "chain") }?;
        let score = cfmodels::predict(&c.served, user, item)?;
        unsafe { write_out(out_score, score, "out_score") }
    })
}

/// NDCG@10 and HR@10 on held-out ratings of users still in the model.
///
/// # Safety
/// `chain` must be a live chain handle; both outputs writable.
#[no_mangle]
pub unsafe extern "C" fn laser_evaluate(
    chain: *const LaserChain,
    seed: u64,
    out_ndcg: *mut f64,
    out_hr: *mut f64,
) -> LaserStatus {
    guard(|| {
        let c = unsafe { borrow(chain, "chain") }?;
        let test = c.test.retain_users(|u| c.train.degree(u) > 0);
        let m = eval::ndcg_hr_at_10(&c.served, &c.train, &test, &RankEvalConfig::new(seed))?;
        unsafe { write_out(out_ndcg, m.ndcg, "out_ndcg") }?;
        unsafe { write_out(out_hr, m.hr, "out_hr") }
    })
}

/// # Safety
/// `chain` must be null or a handle from `laser_learn` that has not been
/// freed. Checkpoint files on disk are left in place.
#[no_mangle]
pub unsafe extern "C" fn laser_chain_free(chain: *mut LaserChain) {
    if !chain.is_null() {
        drop(unsafe { Box::from_raw(chain) });
    }
}
