//! DMF and NMF rating predictors trained with normalized binary cross
//! entropy and Adam. Gradients are derived by hand.
//!
//! DMF: each side passes its 16-d embedding through its own tower
//! (16 → 64 → 32, ReLU after both layers); the prediction is the cosine of
//! the two tower outputs, floored at [`DMF_EPS`].
//!
//! NMF: a GMF branch `α ⊙ β` (16) and an MLP branch over `[α; β]`
//! (32 → 64 → 32, ReLU) are concatenated (48) and fed to one affine unit
//! followed by the logistic function.

mod adam;
mod checkpoint;

pub use adam::OptimizerState;
pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};

use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};

use crate::error::{LaserError, Result};
use crate::ingest::InteractionMatrix;
use crate::linalg::{dot, sigmoid, softplus, DenseMatrix};
use crate::rng;

pub const EMBED_DIM: usize = 16;
pub const HIDDEN1: usize = 64;
pub const HIDDEN2: usize = 32;
/// Floor on DMF predictions (and on every probability fed to the loss).
pub const DMF_EPS: f64 = 1e-6;
pub const INIT_STD: f64 = 0.01;

pub const USER_EMBED: usize = 0;
pub const ITEM_EMBED: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Dmf,
    Nmf,
}

impl ModelKind {
    pub fn code(self) -> u32 {
        match self {
            ModelKind::Dmf => 0,
            ModelKind::Nmf => 1,
        }
    }

    pub fn from_code(code: u32) -> Result<Self> {
        match code {
            0 => Ok(ModelKind::Dmf),
            1 => Ok(ModelKind::Nmf),
            other => Err(LaserError::Format(format!("unknown model kind code {other}"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Dmf => "DMF",
            ModelKind::Nmf => "NMF",
        }
    }
}

impl FromStr for ModelKind {
    type Err = LaserError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dmf" => Ok(ModelKind::Dmf),
            "nmf" => Ok(ModelKind::Nmf),
            other => Err(LaserError::Config(format!("unknown model kind `{other}`"))),
        }
    }
}

// Tensor slots after the two embeddings.
pub mod slot {
    // DMF: user tower then item tower
    pub const U_W1: usize = 2;
    pub const U_B1: usize = 3;
    pub const U_W2: usize = 4;
    pub const U_B2: usize = 5;
    pub const I_W1: usize = 6;
    pub const I_B1: usize = 7;
    pub const I_W2: usize = 8;
    pub const I_B2: usize = 9;
    // NMF: MLP branch then fusion unit
    pub const M_W1: usize = 2;
    pub const M_B1: usize = 3;
    pub const M_W2: usize = 4;
    pub const M_B2: usize = 5;
    pub const O_W: usize = 6;
    pub const O_B: usize = 7;
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub kind: ModelKind,
    pub n_users: usize,
    pub n_items: usize,
    /// Embeddings first (users, items), then the layer weights and biases.
    pub tensors: Vec<DenseMatrix>,
}

impl ModelParams {
    pub fn shapes(kind: ModelKind, n_users: usize, n_items: usize) -> Vec<(usize, usize)> {
        let mut s = vec![(n_users, EMBED_DIM), (n_items, EMBED_DIM)];
        match kind {
            ModelKind::Dmf => {
                for _ in 0..2 {
                    s.extend([(HIDDEN1, EMBED_DIM), (HIDDEN1, 1), (HIDDEN2, HIDDEN1), (HIDDEN2, 1)]);
                }
            }
            ModelKind::Nmf => {
                s.extend([
                    (HIDDEN1, 2 * EMBED_DIM),
                    (HIDDEN1, 1),
                    (HIDDEN2, HIDDEN1),
                    (HIDDEN2, 1),
                    (1, EMBED_DIM + HIDDEN2),
                    (1, 1),
                ]);
            }
        }
        s
    }

    pub fn zeros(kind: ModelKind, n_users: usize, n_items: usize) -> Self {
        ModelParams {
            kind,
            n_users,
            n_items,
            tensors: Self::shapes(kind, n_users, n_items)
                .into_iter()
                .map(|(r, c)| DenseMatrix::zeros(r, c))
                .collect(),
        }
    }

    pub fn tensor_shapes(&self) -> Vec<(usize, usize)> {
        self.tensors.iter().map(|t| (t.rows(), t.cols())).collect()
    }

    pub fn user_embedding(&self) -> &DenseMatrix {
        &self.tensors[USER_EMBED]
    }

    pub fn item_embedding(&self) -> &DenseMatrix {
        &self.tensors[ITEM_EMBED]
    }

    pub fn n_parameters(&self) -> usize {
        self.tensors.iter().map(|t| t.as_slice().len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.as_slice().iter().all(|x| x.is_finite()))
    }

    fn check_index(&self, user: usize, item: usize) -> Result<()> {
        if user >= self.n_users {
            return Err(LaserError::OutOfRange {
                what: "user",
                index: user,
                bound: self.n_users,
            });
        }
        if item >= self.n_items {
            return Err(LaserError::OutOfRange {
                what: "item",
                index: item,
                bound: self.n_items,
            });
        }
        Ok(())
    }
}

/// All parameters i.i.d. N(0, 0.01²), drawn tensor by tensor in row-major
/// order from the seed's init stream.
pub fn init_params(n_users: usize, n_items: usize, kind: ModelKind, seed: u64) -> Result<ModelParams> {
    if n_users == 0 || n_items == 0 {
        return Err(LaserError::Precondition("model needs at least one user and one item".into()));
    }
    let mut rng = rng::rng_for(seed, &[rng::TAG_INIT]);
    let normal = Normal::new(0.0, INIT_STD).expect("valid std");
    let mut params = ModelParams::zeros(kind, n_users, n_items);
    for t in &mut params.tensors {
        for x in t.as_mut_slice() {
            *x = normal.sample(&mut rng);
        }
    }
    Ok(params)
}

/// A training or evaluation example; `target` is the normalized rating
/// `r / r_max`, 0 for sampled negatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub user: usize,
    pub item: usize,
    pub target: f64,
}

/// Binary cross entropy with the probability clamped into
/// `[DMF_EPS, 1 - DMF_EPS]`.
pub fn bce(target: f64, prediction: f64) -> f64 {
    let p = prediction.clamp(DMF_EPS, 1.0 - DMF_EPS);
    -(target * p.ln() + (1.0 - target) * (1.0 - p).ln())
}

struct TowerActs {
    z1: [f64; HIDDEN1],
    a1: [f64; HIDDEN1],
    z2: [f64; HIDDEN2],
    a2: [f64; HIDDEN2],
}

fn affine(w: &DenseMatrix, b: &DenseMatrix, x: &[f64], out: &mut [f64]) {
    for (o, z) in out.iter_mut().enumerate() {
        *z = b.as_slice()[o] + dot(w.row(o), x);
    }
}

fn tower_forward(w1: &DenseMatrix, b1: &DenseMatrix, w2: &DenseMatrix, b2: &DenseMatrix, x: &[f64]) -> TowerActs {
    let mut t = TowerActs {
        z1: [0.0; HIDDEN1],
        a1: [0.0; HIDDEN1],
        z2: [0.0; HIDDEN2],
        a2: [0.0; HIDDEN2],
    };
    affine(w1, b1, x, &mut t.z1);
    for k in 0..HIDDEN1 {
        t.a1[k] = t.z1[k].max(0.0);
    }
    affine(w2, b2, &t.a1, &mut t.z2);
    for k in 0..HIDDEN2 {
        t.a2[k] = t.z2[k].max(0.0);
    }
    t
}

/// Backpropagate `g_a2` through a two-layer ReLU tower, accumulating
/// weight gradients and writing the input gradient into `g_x`.
#[allow(clippy::too_many_arguments)]
fn tower_backward(
    w1: &DenseMatrix,
    w2: &DenseMatrix,
    x: &[f64],
    acts: &TowerActs,
    g_a2: &[f64],
    grads: [&mut DenseMatrix; 4],
    g_x: &mut [f64],
) {
    let [gw1, gb1, gw2, gb2] = grads;
    let mut g_a1 = [0.0; HIDDEN1];
    for o in 0..HIDDEN2 {
        let g = if acts.z2[o] > 0.0 { g_a2[o] } else { 0.0 };
        if g == 0.0 {
            continue;
        }
        gb2.as_mut_slice()[o] += g;
        let w_row = w2.row(o);
        for (k, gw) in gw2.row_mut(o).iter_mut().enumerate() {
            *gw += g * acts.a1[k];
            g_a1[k] += g * w_row[k];
        }
    }
    g_x.iter_mut().for_each(|v| *v = 0.0);
    for o in 0..HIDDEN1 {
        let g = if acts.z1[o] > 0.0 { g_a1[o] } else { 0.0 };
        if g == 0.0 {
            continue;
        }
        gb1.as_mut_slice()[o] += g;
        let w_row = w1.row(o);
        for (k, gw) in gw1.row_mut(o).iter_mut().enumerate() {
            *gw += g * x[k];
            g_x[k] += g * w_row[k];
        }
    }
}

fn disjoint4(t: &mut [DenseMatrix], idx: [usize; 4]) -> [&mut DenseMatrix; 4] {
    t.get_disjoint_mut(idx).expect("distinct tensor slots")
}

/// Raw cosine between the two DMF tower outputs.
fn dmf_cosine(p: &ModelParams, user: usize, item: usize) -> f64 {
    let t = &p.tensors;
    let pu = tower_forward(&t[slot::U_W1], &t[slot::U_B1], &t[slot::U_W2], &t[slot::U_B2], t[USER_EMBED].row(user));
    let qi = tower_forward(&t[slot::I_W1], &t[slot::I_B1], &t[slot::I_W2], &t[slot::I_B2], t[ITEM_EMBED].row(item));
    crate::linalg::cosine(&pu.a2, &qi.a2)
}

fn nmf_logit(p: &ModelParams, user: usize, item: usize) -> f64 {
    let t = &p.tensors;
    let (a, b) = (t[USER_EMBED].row(user), t[ITEM_EMBED].row(item));
    let mut x = [0.0; 2 * EMBED_DIM];
    x[..EMBED_DIM].copy_from_slice(a);
    x[EMBED_DIM..].copy_from_slice(b);
    let mlp = tower_forward(&t[slot::M_W1], &t[slot::M_B1], &t[slot::M_W2], &t[slot::M_B2], &x);
    let w = t[slot::O_W].as_slice();
    let gmf: f64 = (0..EMBED_DIM).map(|k| w[k] * a[k] * b[k]).sum();
    let deep: f64 = (0..HIDDEN2).map(|k| w[EMBED_DIM + k] * mlp.a2[k]).sum();
    gmf + deep + t[slot::O_B].as_slice()[0]
}

/// Predicted preference in `[DMF_EPS, 1]` (DMF) or `(0, 1)` (NMF).
pub fn predict(params: &ModelParams, user: usize, item: usize) -> Result<f64> {
    params.check_index(user, item)?;
    Ok(predict_unchecked(params, user, item))
}

pub(crate) fn predict_unchecked(params: &ModelParams, user: usize, item: usize) -> f64 {
    match params.kind {
        ModelKind::Dmf => dmf_cosine(params, user, item).clamp(DMF_EPS, 1.0),
        ModelKind::Nmf => sigmoid(nmf_logit(params, user, item)),
    }
}

/// Loss of one sample; gradients scaled by `scale` are added into `grads`
/// when given.
fn sample_loss(params: &ModelParams, s: &Sample, grads: Option<(&mut [DenseMatrix], f64)>) -> f64 {
    match params.kind {
        ModelKind::Dmf => dmf_sample(params, s, grads),
        ModelKind::Nmf => nmf_sample(params, s, grads),
    }
}

fn dmf_sample(p: &ModelParams, s: &Sample, grads: Option<(&mut [DenseMatrix], f64)>) -> f64 {
    let t = &p.tensors;
    let xu = t[USER_EMBED].row(s.user);
    let xi = t[ITEM_EMBED].row(s.item);
    let pu = tower_forward(&t[slot::U_W1], &t[slot::U_B1], &t[slot::U_W2], &t[slot::U_B2], xu);
    let qi = tower_forward(&t[slot::I_W1], &t[slot::I_B1], &t[slot::I_W2], &t[slot::I_B2], xi);
    let (np, nq) = (dot(&pu.a2, &pu.a2).sqrt(), dot(&qi.a2, &qi.a2).sqrt());
    let c = if np > 0.0 && nq > 0.0 { dot(&pu.a2, &qi.a2) / (np * nq) } else { 0.0 };
    let y = s.target;
    let loss = bce(y, c);
    let Some((grads, scale)) = grads else {
        return loss;
    };
    if !(c > DMF_EPS && c < 1.0 - DMF_EPS) {
        return loss;
    }
    let dl_dc = scale * (-y / c + (1.0 - y) / (1.0 - c));
    let mut g_p = [0.0; HIDDEN2];
    let mut g_q = [0.0; HIDDEN2];
    for k in 0..HIDDEN2 {
        g_p[k] = dl_dc * (qi.a2[k] / (np * nq) - c * pu.a2[k] / (np * np));
        g_q[k] = dl_dc * (pu.a2[k] / (np * nq) - c * qi.a2[k] / (nq * nq));
    }
    let mut g_x = [0.0; EMBED_DIM];
    tower_backward(
        &t[slot::U_W1],
        &t[slot::U_W2],
        xu,
        &pu,
        &g_p,
        disjoint4(grads, [slot::U_W1, slot::U_B1, slot::U_W2, slot::U_B2]),
        &mut g_x,
    );
    for (g, v) in grads[USER_EMBED].row_mut(s.user).iter_mut().zip(g_x) {
        *g += v;
    }
    tower_backward(
        &t[slot::I_W1],
        &t[slot::I_W2],
        xi,
        &qi,
        &g_q,
        disjoint4(grads, [slot::I_W1, slot::I_B1, slot::I_W2, slot::I_B2]),
        &mut g_x,
    );
    for (g, v) in grads[ITEM_EMBED].row_mut(s.item).iter_mut().zip(g_x) {
        *g += v;
    }
    loss
}

fn nmf_sample(p: &ModelParams, s: &Sample, grads: Option<(&mut [DenseMatrix], f64)>) -> f64 {
    let t = &p.tensors;
    let a = t[USER_EMBED].row(s.user);
    let b = t[ITEM_EMBED].row(s.item);
    let mut x = [0.0; 2 * EMBED_DIM];
    x[..EMBED_DIM].copy_from_slice(a);
    x[EMBED_DIM..].copy_from_slice(b);
    let mlp = tower_forward(&t[slot::M_W1], &t[slot::M_B1], &t[slot::M_W2], &t[slot::M_B2], &x);
    let w = t[slot::O_W].as_slice();
    let mut h = [0.0; EMBED_DIM + HIDDEN2];
    for k in 0..EMBED_DIM {
        h[k] = a[k] * b[k];
    }
    h[EMBED_DIM..].copy_from_slice(&mlp.a2);
    let z = dot(w, &h) + t[slot::O_B].as_slice()[0];
    let y = s.target;
    // BCE on the logistic output, written in logit form
    let loss = softplus(z) - y * z;
    let Some((grads, scale)) = grads else {
        return loss;
    };
    let dz = scale * (sigmoid(z) - y);
    for (g, hk) in grads[slot::O_W].as_mut_slice().iter_mut().zip(&h) {
        *g += dz * hk;
    }
    grads[slot::O_B].as_mut_slice()[0] += dz;
    let mut g_a2 = [0.0; HIDDEN2];
    for k in 0..HIDDEN2 {
        g_a2[k] = dz * w[EMBED_DIM + k];
    }
    let mut g_x = [0.0; 2 * EMBED_DIM];
    tower_backward(
        &t[slot::M_W1],
        &t[slot::M_W2],
        &x,
        &mlp,
        &g_a2,
        disjoint4(grads, [slot::M_W1, slot::M_B1, slot::M_W2, slot::M_B2]),
        &mut g_x,
    );
    let gu = grads[USER_EMBED].row_mut(s.user);
    for k in 0..EMBED_DIM {
        gu[k] += g_x[k] + dz * w[k] * b[k];
    }
    let gi = grads[ITEM_EMBED].row_mut(s.item);
    for k in 0..EMBED_DIM {
        gi[k] += g_x[EMBED_DIM + k] + dz * w[k] * a[k];
    }
    loss
}

/// Mean loss over `samples`.
pub fn batch_loss(params: &ModelParams, samples: &[Sample]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().map(|s| sample_loss(params, s, None)).sum::<f64>() / samples.len() as f64
}

/// Mean loss over `samples` and its gradient with respect to every tensor.
pub fn batch_loss_and_grad(params: &ModelParams, samples: &[Sample]) -> (f64, Vec<DenseMatrix>) {
    let mut grads = ModelParams::zeros(params.kind, params.n_users, params.n_items).tensors;
    let loss = accumulate(params, samples, &mut grads);
    (loss, grads)
}

fn accumulate(params: &ModelParams, samples: &[Sample], grads: &mut [DenseMatrix]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let scale = 1.0 / samples.len() as f64;
    let mut total = 0.0;
    for s in samples {
        total += sample_loss(params, s, Some((&mut *grads, scale)));
    }
    total * scale
}

/// Normalized BCE over a batch of `(user, item, rating)` triples; rating 0
/// marks a sampled negative.
pub fn loss(params: &ModelParams, batch: &[(usize, usize, f64)], r_max: f64) -> Result<f64> {
    let mut samples = Vec::with_capacity(batch.len());
    for &(user, item, r) in batch {
        params.check_index(user, item)?;
        samples.push(Sample {
            user,
            item,
            target: r / r_max,
        });
    }
    Ok(batch_loss(params, &samples))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    /// `T`: epochs per training stage.
    pub total_epochs: usize,
    pub batch_size: usize,
    pub negative_per_positive: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            total_epochs: 50,
            batch_size: 256,
            negative_per_positive: 4,
            learning_rate: 0.001,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.total_epochs == 0 {
            return Err(LaserError::Config("total_epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(LaserError::Config("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(LaserError::Config("learning_rate must be a finite non-negative number".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub mean_loss: f64,
    pub batches: usize,
    pub samples: usize,
}

/// Uniform item the user has not rated, or `None` when the row is full.
pub fn sample_negative<R: Rng + ?Sized>(row: &[(u32, f64)], n_items: usize, rng: &mut R) -> Option<usize> {
    if row.len() >= n_items {
        return None;
    }
    loop {
        let j = rng.random_range(0..n_items);
        if row.binary_search_by_key(&(j as u32), |&(i, _)| i).is_err() {
            return Some(j);
        }
    }
}

/// One pass over the positives of `train` in shuffled mini-batches, each
/// positive followed by its sampled negatives. All randomness comes from
/// `epoch_seed`.
pub fn train_epoch(
    params: &mut ModelParams,
    opt: &mut OptimizerState,
    train: &InteractionMatrix,
    config: &TrainConfig,
    epoch_seed: u64,
) -> Result<EpochStats> {
    config.validate()?;
    if train.n_users() != params.n_users || train.n_items() != params.n_items {
        return Err(LaserError::Precondition(format!(
            "training matrix is {}x{}, model is {}x{}",
            train.n_users(),
            train.n_items(),
            params.n_users,
            params.n_items
        )));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(epoch_seed);
    let mut positives: Vec<(usize, usize, f64)> = train.entries().collect();
    positives.shuffle(&mut rng);
    let r_max = train.r_max();
    let mut grads = ModelParams::zeros(params.kind, params.n_users, params.n_items).tensors;
    let mut batch = Vec::with_capacity(config.batch_size * (1 + config.negative_per_positive));
    let mut loss_sum = 0.0;
    let mut n_samples = 0usize;
    let mut batches = 0usize;
    for chunk in positives.chunks(config.batch_size) {
        batch.clear();
        for &(u, i, r) in chunk {
            batch.push(Sample {
                user: u,
                item: i,
                target: r / r_max,
            });
            for _ in 0..config.negative_per_positive {
                if let Some(j) = sample_negative(train.user_row(u), train.n_items(), &mut rng) {
                    batch.push(Sample {
                        user: u,
                        item: j,
                        target: 0.0,
                    });
                }
            }
        }
        grads.iter_mut().for_each(|g| g.as_mut_slice().iter_mut().for_each(|x| *x = 0.0));
        let loss = accumulate(params, &batch, &mut grads);
        if !loss.is_finite() {
            return Err(LaserError::Divergence { batch: batches, loss });
        }
        opt.update(&mut params.tensors, &grads);
        loss_sum += loss * batch.len() as f64;
        n_samples += batch.len();
        batches += 1;
    }
    Ok(EpochStats {
        mean_loss: if n_samples > 0 { loss_sum / n_samples as f64 } else { 0.0 },
        batches,
        samples: n_samples,
    })
}
