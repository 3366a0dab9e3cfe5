//! Ranking metrics, per-group test loss, timing, retraining-cost analysis
//! and the prior-weighted utility identity.
//!
//! Ranking uses the sampled protocol: each held-out interaction is ranked
//! against 99 items the user never rated.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index;
use rayon::prelude::*;

use crate::cfmodels::{self, ModelKind, ModelParams, Sample, TrainConfig};
use crate::error::{LaserError, Result};
use crate::grouping::GroupPlan;
use crate::ingest::InteractionMatrix;
use crate::pipeline::{self, CheckpointChain, CsisaEnsemble, TrainOrder, UnlearnRequest};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankEvalConfig {
    pub cutoff: usize,
    pub negatives_per_test: usize,
    pub seed: u64,
}

impl RankEvalConfig {
    pub fn new(seed: u64) -> Self {
        RankEvalConfig {
            cutoff: 10,
            negatives_per_test: 99,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.cutoff == 0 {
            return Err(LaserError::Config("rank cutoff must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankMetrics {
    pub ndcg: f64,
    pub hr: f64,
    pub n_tests: usize,
    /// Test interactions whose user had fewer unobserved items than the
    /// requested negative count.
    pub reduced_pool: usize,
}

/// 1-based rank of the true item; ties count against it.
pub fn rank_of(true_score: f64, negative_scores: &[f64]) -> usize {
    1 + negative_scores.iter().filter(|&&s| s >= true_score).count()
}

pub fn ndcg_term(rank: usize, cutoff: usize) -> f64 {
    if rank <= cutoff {
        1.0 / ((rank + 1) as f64).log2()
    } else {
        0.0
    }
}

pub fn hit_term(rank: usize, cutoff: usize) -> f64 {
    if rank <= cutoff { 1.0 } else { 0.0 }
}

fn sample_unobserved<R: Rng + ?Sized>(
    observed: &dyn Fn(usize) -> bool,
    pool_size: usize,
    n_items: usize,
    count: usize,
    rng: &mut R,
) -> Vec<usize> {
    if pool_size <= 2 * count {
        let pool: Vec<usize> = (0..n_items).filter(|&i| !observed(i)).collect();
        let take = count.min(pool.len());
        return index::sample(rng, pool.len(), take).into_iter().map(|k| pool[k]).collect();
    }
    let mut picked = Vec::with_capacity(count);
    while picked.len() < count {
        let i = rng.random_range(0..n_items);
        if !observed(i) && !picked.contains(&i) {
            picked.push(i);
        }
    }
    picked
}

/// NDCG and HR at the cutoff for an arbitrary scorer. Negatives exclude
/// items the user rated in either `train` or `test`.
pub fn rank_metrics<F>(score: F, train: &InteractionMatrix, test: &InteractionMatrix, config: &RankEvalConfig) -> Result<RankMetrics>
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    config.validate()?;
    if test.is_empty() {
        return Err(LaserError::EmptyDataset("test set has no interactions".into()));
    }
    if train.n_users() != test.n_users() || train.n_items() != test.n_items() {
        return Err(LaserError::Precondition("train and test dimensions differ".into()));
    }
    let n_items = test.n_items();
    let users = test.active_users();
    let per_user: Vec<(f64, f64, usize, usize)> = users
        .par_iter()
        .map(|&u| {
            let mut rng = rng::rng_for(config.seed, &[rng::TAG_EVAL, u as u64]);
            let observed = |i: usize| train.contains(u, i) || test.contains(u, i);
            let n_observed = (0..n_items).filter(|&i| observed(i)).count();
            let pool = n_items - n_observed;
            let (mut ndcg, mut hr, mut reduced) = (0.0, 0.0, 0);
            for &(item, _) in test.user_row(u) {
                let negs = sample_unobserved(&observed, pool, n_items, config.negatives_per_test, &mut rng);
                if negs.len() < config.negatives_per_test {
                    reduced += 1;
                }
                let neg_scores: Vec<f64> = negs.iter().map(|&j| score(u, j)).collect();
                let rank = rank_of(score(u, item as usize), &neg_scores);
                ndcg += ndcg_term(rank, config.cutoff);
                hr += hit_term(rank, config.cutoff);
            }
            (ndcg, hr, test.degree(u), reduced)
        })
        .collect();
    let (mut ndcg, mut hr, mut n, mut reduced) = (0.0, 0.0, 0, 0);
    for (a, b, c, d) in per_user {
        ndcg += a;
        hr += b;
        n += c;
        reduced += d;
    }
    Ok(RankMetrics {
        ndcg: ndcg / n as f64,
        hr: hr / n as f64,
        n_tests: n,
        reduced_pool: reduced,
    })
}

/// NDCG@cutoff and HR@cutoff of a trained model.
pub fn ndcg_hr_at_10(model: &ModelParams, train: &InteractionMatrix, test: &InteractionMatrix, config: &RankEvalConfig) -> Result<RankMetrics> {
    if model.n_users != test.n_users() || model.n_items != test.n_items() {
        return Err(LaserError::Precondition(format!(
            "model is {}x{}, test set is {}x{}",
            model.n_users,
            model.n_items,
            test.n_users(),
            test.n_items()
        )));
    }
    rank_metrics(|u, i| cfmodels::predict_unchecked(model, u, i), train, test, config)
}

/// Scores drawn uniformly from a hash of `(seed, user, item)`.
pub fn random_scorer(seed: u64) -> impl Fn(usize, usize) -> f64 + Sync {
    move |u, i| (rng::derive_seed(seed, &[u as u64, i as u64]) >> 11) as f64 / (1u64 << 53) as f64
}

/// Positive test entries of `users` plus seeded negatives, as loss samples.
fn loss_samples(
    train: &InteractionMatrix,
    test: &InteractionMatrix,
    users: &[usize],
    negatives_per_positive: usize,
    seed: u64,
) -> Vec<Sample> {
    let mut out = Vec::new();
    let n_items = test.n_items();
    for &u in users {
        let mut rng = rng::rng_for(seed, &[rng::TAG_EVAL, u as u64, 1]);
        let observed = |i: usize| train.contains(u, i) || test.contains(u, i);
        let pool = n_items - (0..n_items).filter(|&i| observed(i)).count();
        for &(item, r) in test.user_row(u) {
            out.push(Sample {
                user: u,
                item: item as usize,
                target: r / test.r_max(),
            });
            for j in sample_unobserved(&observed, pool, n_items, negatives_per_positive, &mut rng) {
                out.push(Sample {
                    user: u,
                    item: j,
                    target: 0.0,
                });
            }
        }
    }
    out
}

/// Test loss of `model` over the given users' test interactions.
pub fn test_loss(
    model: &ModelParams,
    train: &InteractionMatrix,
    test: &InteractionMatrix,
    users: &[usize],
    negatives_per_positive: usize,
    seed: u64,
) -> f64 {
    cfmodels::batch_loss(model, &loss_samples(train, test, users, negatives_per_positive, seed))
}

/// For every group, indexed by group id: train a model from scratch on the
/// group's ratings and record its loss on the group's test interactions.
pub fn per_group_loss(
    plan: &GroupPlan,
    train: &InteractionMatrix,
    test: &InteractionMatrix,
    kind: ModelKind,
    config: &TrainConfig,
) -> Result<Vec<f64>> {
    plan.validate()?;
    if plan.n_users() != train.n_users() {
        return Err(LaserError::Precondition("plan and dataset sizes differ".into()));
    }
    (0..plan.n_groups)
        .map(|g| {
            let members = plan.members(g);
            let data = train.retain_users(|u| plan.labels[u] == g);
            if data.is_empty() {
                return Err(LaserError::EmptyGroup {
                    group: g,
                    position: plan.position_of(g),
                });
            }
            let model = pipeline::train_single(&data, kind, config)?;
            Ok(test_loss(&model, train, test, &members, config.negative_per_positive, config.seed))
        })
        .collect()
}

/// Per-group retraining costs `c_i` in training order.
#[derive(Debug, Clone, PartialEq)]
pub struct CostProfile {
    costs: Vec<f64>,
}

impl CostProfile {
    pub fn new(costs: Vec<f64>) -> Result<Self> {
        if costs.is_empty() || costs.iter().any(|&c| !(c > 0.0 && c.is_finite())) {
            return Err(LaserError::Precondition("group costs must be positive and finite".into()));
        }
        Ok(CostProfile { costs })
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn total(&self) -> f64 {
        self.costs.iter().sum()
    }

    /// `Σ_{j≥i} c_j` for every `i`.
    pub fn suffix_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.costs.len()];
        let mut acc = 0.0;
        for i in (0..self.costs.len()).rev() {
            acc += self.costs[i];
            out[i] = acc;
        }
        out
    }

    /// `(Z/2)(1 + 1/n)`, attained by equal costs.
    pub fn lower_bound(&self) -> f64 {
        self.total() / 2.0 * (1.0 + 1.0 / self.costs.len() as f64)
    }
}

/// Expected suffix retraining cost when a request falls in group `i` with
/// probability `c_i / Z`.
pub fn expected_cost(profile: &CostProfile) -> f64 {
    let z = profile.total();
    profile
        .suffix_sums()
        .iter()
        .zip(profile.costs())
        .map(|(s, c)| s * c / z)
        .sum()
}

/// Variance of the suffix cost of one request.
pub fn cost_variance(profile: &CostProfile) -> f64 {
    let z = profile.total();
    let second: f64 = profile
        .suffix_sums()
        .iter()
        .zip(profile.costs())
        .map(|(s, c)| s * s * c / z)
        .sum();
    let mean = expected_cost(profile);
    (second - mean * mean).max(0.0)
}

pub fn monte_carlo_cost(profile: &CostProfile, n_trials: usize, seed: u64) -> Result<f64> {
    if n_trials == 0 {
        return Err(LaserError::Precondition("need at least one trial".into()));
    }
    let suffix = profile.suffix_sums();
    let dist = WeightedIndex::new(profile.costs()).map_err(|e| LaserError::Precondition(e.to_string()))?;
    let mut rng = rng::rng_for(seed, &[rng::TAG_EVAL]);
    let total: f64 = (0..n_trials).map(|_| suffix[dist.sample(&mut rng)]).sum();
    Ok(total / n_trials as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityCheck {
    /// `Σ U_i p_i`.
    pub lhs: f64,
    /// Mean utility plus the covariance term.
    pub rhs: f64,
    pub covariance: f64,
    pub gap: f64,
}

/// Mean of `exp(-L_i)` over groups.
pub fn utility(losses: &[f64]) -> f64 {
    losses.iter().map(|l| (-l).exp()).sum::<f64>() / losses.len() as f64
}

/// Check that the prior-weighted utility equals the uniform utility plus
/// the covariance between per-group utility and the prior.
pub fn utility_identity_check(losses: &[f64], prior: &[f64]) -> Result<IdentityCheck> {
    if losses.is_empty() || losses.len() != prior.len() {
        return Err(LaserError::Precondition("losses and prior must be non-empty and of equal length".into()));
    }
    let sum: f64 = prior.iter().sum();
    if prior.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(LaserError::Precondition(format!("prior is not a distribution (sums to {sum})")));
    }
    let s = losses.len() as f64;
    let u: Vec<f64> = losses.iter().map(|l| (-l).exp()).collect();
    let u_bar = utility(losses);
    let p_bar = if prior.iter().all(|&p| p == prior[0]) { prior[0] } else { sum / s };
    let lhs: f64 = u.iter().zip(prior).map(|(a, p)| a * p).sum();
    let covariance: f64 = u.iter().zip(prior).map(|(a, p)| (a - u_bar) * (p - p_bar)).sum();
    let rhs = u_bar + covariance;
    Ok(IdentityCheck {
        lhs,
        rhs,
        covariance,
        gap: (lhs - rhs).abs(),
    })
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(LaserError::Precondition("spearman needs two equal-length series of length ≥ 2".into()));
    }
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    Ok(pearson(&ra, &rb))
}

fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
    let mut ranks = vec![0.0; x.len()];
    let mut k = 0;
    while k < idx.len() {
        let mut end = k;
        while end + 1 < idx.len() && x[idx[end + 1]] == x[idx[k]] {
            end += 1;
        }
        let r = (k + end) as f64 / 2.0 + 1.0;
        for &i in &idx[k..=end] {
            ranks[i] = r;
        }
        k = end + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Median wall-clock seconds of `runs` timed calls after one discarded
/// warm-up, with the output of the last call. `setup` runs untimed before
/// each call.
pub fn median_seconds<S, I, F, T>(runs: usize, mut setup: S, mut run: F) -> Result<(f64, T)>
where
    S: FnMut() -> Result<I>,
    F: FnMut(I) -> Result<T>,
{
    let mut times = Vec::with_capacity(runs);
    let mut last = None;
    for k in 0..=runs {
        let input = setup()?;
        let start = Instant::now();
        let out = run(input)?;
        let elapsed = start.elapsed();
        if k > 0 {
            times.push(elapsed.as_secs_f64());
        }
        last = Some(out);
    }
    Ok((median(&mut times), last.expect("at least one run")))
}

/// Everything needed to time the three unlearning methods on one request.
pub struct UnlearnScenario<'a> {
    pub train: &'a InteractionMatrix,
    pub plan: &'a GroupPlan,
    pub kind: ModelKind,
    pub config: TrainConfig,
    pub order: TrainOrder,
    pub request: &'a UnlearnRequest,
    pub runs: usize,
    pub work_dir: &'a Path,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnlearnTiming {
    pub retrain: f64,
    pub csisa: f64,
    pub laser: f64,
}

/// Median unlearning seconds of full retraining, C-SISA shard retraining
/// and LASER rollback on the same request.
pub fn time_unlearn(s: &UnlearnScenario<'_>) -> Result<UnlearnTiming> {
    let edited = s.train.retain_users(|u| !s.request.contains(u));
    let retrain_dir = s.work_dir.join("retrain");
    let (retrain, ()) = median_seconds(
        s.runs,
        || Ok(()),
        |()| pipeline::retrain_baseline(&edited, s.plan, s.kind, &s.config, s.order, &retrain_dir).map(drop),
    )?;
    let ensemble = CsisaEnsemble::train(s.train, s.plan, s.kind, &s.config)?;
    let (csisa, ()) = median_seconds(
        s.runs,
        || Ok(ensemble.clone()),
        |mut e| e.unlearn(s.train, s.request).map(drop),
    )?;
    let base = pipeline::learn(s.train, s.plan, s.kind, &s.config, s.order, &s.work_dir.join("chain"))?;
    let mut copy_idx = 0;
    let (laser, ()) = median_seconds(
        s.runs,
        || {
            copy_idx += 1;
            base.copy_to(&s.work_dir.join(format!("chain-{copy_idx}")))
        },
        |mut chain: CheckpointChain| pipeline::unlearn(&mut chain, s.train, s.request).map(drop),
    )?;
    Ok(UnlearnTiming { retrain, csisa, laser })
}

/// One row of the benchmark report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub method: String,
    pub model: String,
    pub s: usize,
    pub request_kind: String,
    pub k: f64,
    pub ndcg10: f64,
    pub hr10: f64,
    pub seconds: f64,
    pub seed: u64,
}

pub const REPORT_HEADER: [&str; 9] = ["method", "model", "S", "request_kind", "K", "ndcg10", "hr10", "seconds", "seed"];

pub fn write_report<W: Write>(out: W, rows: &[ReportRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let fail = |e: csv::Error| LaserError::Format(e.to_string());
    w.write_record(REPORT_HEADER).map_err(fail)?;
    for r in rows {
        w.write_record([
            r.method.clone(),
            r.model.clone(),
            r.s.to_string(),
            r.request_kind.clone(),
            r.k.to_string(),
            format!("{:.6}", r.ndcg10),
            format!("{:.6}", r.hr10),
            format!("{:.6}", r.seconds),
            r.seed.to_string(),
        ])
        .map_err(fail)?;
    }
    w.flush().map_err(|e| LaserError::Format(e.to_string()))
}
