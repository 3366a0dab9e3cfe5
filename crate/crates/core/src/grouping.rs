//! Balanced user grouping and collaborative cohesion.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{LaserError, Result};
use crate::ingest::InteractionMatrix;
use crate::linalg::{dist, sq_dist, DenseMatrix};
use crate::rng;

/// Distance floor applied before inverting distances in [`cohesion`].
pub const COHESION_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupSource {
    /// Balanced k-means on the hypergraph embedding (L-CBKM).
    CollabEmbedding,
    /// Balanced k-means on raw rating rows (L-BKM).
    RawRatings,
    /// Uniform random balanced assignment (L-Rand).
    Random,
}

impl FromStr for GroupSource {
    type Err = LaserError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "collab_embedding" | "cbkm" => Ok(GroupSource::CollabEmbedding),
            "raw_ratings" | "bkm" => Ok(GroupSource::RawRatings),
            "random" | "rand" => Ok(GroupSource::Random),
            other => Err(LaserError::Config(format!("unknown grouping source `{other}`"))),
        }
    }
}

impl GroupSource {
    pub fn as_str(self) -> &'static str {
        match self {
            GroupSource::CollabEmbedding => "collab_embedding",
            GroupSource::RawRatings => "raw_ratings",
            GroupSource::Random => "random",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClusterConfig {
    pub n_groups: usize,
    pub max_iter: usize,
    pub seed: u64,
    pub source: GroupSource,
}

impl ClusterConfig {
    pub fn new(n_groups: usize, seed: u64) -> Self {
        ClusterConfig {
            n_groups,
            max_iter: 20,
            seed,
            source: GroupSource::CollabEmbedding,
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.n_groups == 0 {
            return Err(LaserError::Config("number of groups must be >= 1".into()));
        }
        if self.n_groups > n {
            return Err(LaserError::Config(format!(
                "cannot form {} groups from {n} users",
                self.n_groups
            )));
        }
        if self.max_iter == 0 {
            return Err(LaserError::Config("max_iter must be >= 1".into()));
        }
        Ok(())
    }
}

/// Group labels, per-group cohesion and the easy-to-hard training order.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupPlan {
    pub labels: Vec<usize>,
    pub n_groups: usize,
    pub cohesion: Vec<f64>,
    pub train_order: Vec<usize>,
}

impl GroupPlan {
    pub fn n_users(&self) -> usize {
        self.labels.len()
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        group_sizes(&self.labels, self.n_groups)
    }

    pub fn members(&self, group: usize) -> Vec<usize> {
        (0..self.labels.len()).filter(|&u| self.labels[u] == group).collect()
    }

    /// Position of `group` in `train_order`.
    pub fn position_of(&self, group: usize) -> usize {
        self.train_order
            .iter()
            .position(|&g| g == group)
            .expect("train_order is a permutation of the groups")
    }

    pub fn to_text(&self) -> String {
        let join = |v: &mut dyn Iterator<Item = String>| v.collect::<Vec<_>>().join(" ");
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.n_groups);
        let _ = writeln!(out, "{}", join(&mut self.labels.iter().map(|l| l.to_string())));
        let _ = writeln!(out, "{}", join(&mut self.cohesion.iter().map(|&r| format_sig9(r))));
        let _ = writeln!(out, "{}", join(&mut self.train_order.iter().map(|g| g.to_string())));
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| LaserError::Format(format!("plan file is missing the {what} line")))
        };
        let parse_err = |what: &str| LaserError::Format(format!("malformed {what} in plan file"));
        let n_groups: usize = next("group count")?.trim().parse().map_err(|_| parse_err("group count"))?;
        let nums = |line: &str, what: &str| -> Result<Vec<usize>> {
            line.split_whitespace()
                .map(|t| t.parse().map_err(|_| parse_err(what)))
                .collect()
        };
        let labels = nums(next("labels")?, "labels")?;
        let cohesion = next("cohesion")?
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| parse_err("cohesion")))
            .collect::<Result<Vec<_>>>()?;
        let train_order = nums(next("train order")?, "train order")?;
        let plan = GroupPlan {
            labels,
            n_groups,
            cohesion,
            train_order,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.n_groups;
        if self.labels.iter().any(|&l| l >= s) {
            return Err(LaserError::Format("group label out of range".into()));
        }
        if self.cohesion.len() != s || self.train_order.len() != s {
            return Err(LaserError::Format("plan vectors do not match the group count".into()));
        }
        let mut seen = vec![false; s];
        for &g in &self.train_order {
            if g >= s || std::mem::replace(&mut seen[g], true) {
                return Err(LaserError::Format("train order is not a permutation".into()));
            }
        }
        Ok(())
    }
}

fn format_sig9(x: f64) -> String {
    format!("{x:.8e}")
}

pub fn group_sizes(labels: &[usize], n_groups: usize) -> Vec<usize> {
    let mut sizes = vec![0; n_groups];
    for &l in labels {
        sizes[l] += 1;
    }
    sizes
}

/// One candidate (user, group) assignment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Priority {
    pub user: usize,
    pub group: usize,
    pub priority: f64,
}

/// Group centroids under `labels`. A group without members is re-seeded at
/// the point farthest from its currently assigned centroid.
pub fn centroids(points: &DenseMatrix, labels: &[usize], n_groups: usize) -> DenseMatrix {
    let dim = points.cols();
    let mut sums = DenseMatrix::zeros(n_groups, dim);
    let sizes = group_sizes(labels, n_groups);
    for (u, &g) in labels.iter().enumerate() {
        for (s, &x) in sums.row_mut(g).iter_mut().zip(points.row(u)) {
            *s += x;
        }
    }
    for (g, &size) in sizes.iter().enumerate() {
        if size > 0 {
            sums.row_mut(g).iter_mut().for_each(|s| *s /= size as f64);
        }
    }
    let empty: Vec<usize> = (0..n_groups).filter(|&g| sizes[g] == 0).collect();
    if !empty.is_empty() {
        let mut far: Vec<(f64, usize)> = labels
            .iter()
            .enumerate()
            .filter(|&(_, &g)| sizes[g] > 0)
            .map(|(u, &g)| (sq_dist(points.row(u), sums.row(g)), u))
            .collect();
        far.sort_by(|a, b| {
            b.0.total_cmp(&a.0)
                .then_with(|| cmp_rows(points.row(a.1), points.row(b.1)))
                .then(a.1.cmp(&b.1))
        });
        for (g, &(_, u)) in empty.iter().zip(far.iter()) {
            sums.row_mut(*g).copy_from_slice(points.row(u));
        }
    }
    sums
}

/// Priority of every (user, group) pair: the negated Euclidean distance
/// from the user to the group centroid.
pub fn compute_similarity_kmeans(points: &DenseMatrix, labels: &[usize], n_groups: usize) -> Vec<Priority> {
    let c = centroids(points, labels, n_groups);
    let mut out = Vec::with_capacity(points.rows() * n_groups);
    for u in 0..points.rows() {
        for g in 0..n_groups {
            out.push(Priority {
                user: u,
                group: g,
                priority: -dist(points.row(u), c.row(g)),
            });
        }
    }
    out
}

/// Lexicographic order on coordinates.
fn cmp_rows(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Sort priorities descending. Ties go to the user whose point is smaller
/// in coordinate order, then to the smaller user id and group id, so the
/// result does not depend on how distinct users are numbered.
pub fn sort_priorities(list: &mut [Priority], points: &DenseMatrix) {
    list.sort_by(|a, b| {
        b.priority
            .total_cmp(&a.priority)
            .then_with(|| cmp_rows(points.row(a.user), points.row(b.user)))
            .then(a.user.cmp(&b.user))
            .then(a.group.cmp(&b.group))
    });
}

/// Greedy capacity-constrained assignment over a sorted priority list.
///
/// Every group may hold `⌊N/S⌋` users, and `N mod S` of them one more, so
/// no group exceeds `⌈N/S⌉` and the final sizes differ by at most one.
pub fn assign_greedy(sorted: &[Priority], n_users: usize, n_groups: usize) -> Vec<usize> {
    let base = n_users / n_groups;
    let mut extra = n_users % n_groups;
    let mut sizes = vec![0usize; n_groups];
    let mut labels = vec![usize::MAX; n_users];
    let mut assigned = 0;
    for p in sorted {
        if assigned == n_users {
            break;
        }
        if labels[p.user] != usize::MAX {
            continue;
        }
        let size = sizes[p.group];
        let fits = if size < base {
            true
        } else if size == base && extra > 0 {
            extra -= 1;
            true
        } else {
            false
        };
        if fits {
            labels[p.user] = p.group;
            sizes[p.group] += 1;
            assigned += 1;
        }
    }
    debug_assert!(labels.iter().all(|&l| l != usize::MAX));
    labels
}

/// Random balanced labels: a seeded shuffle dealt round-robin.
pub fn random_balanced_labels(n_users: usize, n_groups: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n_users).collect();
    order.shuffle(&mut rng::rng_for(seed, &[rng::TAG_GROUP, 0]));
    let mut labels = vec![0; n_users];
    for (k, &u) in order.iter().enumerate() {
        labels[u] = k % n_groups;
    }
    labels
}

/// Balanced grouping iterations starting from `initial`. Returns the labels
/// and the number of iterations run.
pub fn balanced_group_from(
    points: &DenseMatrix,
    n_groups: usize,
    max_iter: usize,
    initial: Vec<usize>,
) -> (Vec<usize>, usize) {
    let n = points.rows();
    let mut labels = initial;
    let mut iterations = 0;
    loop {
        let mut list = compute_similarity_kmeans(points, &labels, n_groups);
        sort_priorities(&mut list, points);
        let next = assign_greedy(&list, n, n_groups);
        iterations += 1;
        let stable = next == labels;
        labels = next;
        if stable || iterations >= max_iter {
            break;
        }
    }
    (labels, iterations)
}

pub fn balanced_group(points: &DenseMatrix, config: &ClusterConfig) -> Result<Vec<usize>> {
    config.validate(points.rows())?;
    let initial = seeded_balanced_labels(points, config.n_groups, config.seed);
    Ok(balanced_group_from(points, config.n_groups, config.max_iter, initial).0)
}

/// Sum of inverse pairwise distances over unordered distinct pairs,
/// divided by the group size. Singletons score 0.
pub fn cohesion(points: &DenseMatrix, members: &[usize]) -> f64 {
    if members.len() < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for (a, &x) in members.iter().enumerate() {
        for &y in &members[a + 1..] {
            total += 1.0 / dist(points.row(x), points.row(y)).max(COHESION_EPS);
        }
    }
    total / members.len() as f64
}

/// Groups sorted by cohesion descending, ties by group id.
pub fn order_by_cohesion(cohesion: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..cohesion.len()).collect();
    order.sort_by(|&a, &b| cohesion[b].total_cmp(&cohesion[a]).then(a.cmp(&b)));
    order
}

pub fn plan_from_labels(points: &DenseMatrix, labels: Vec<usize>, n_groups: usize) -> GroupPlan {
    let mut members = vec![Vec::new(); n_groups];
    for (u, &g) in labels.iter().enumerate() {
        members[g].push(u);
    }
    let cohesion: Vec<f64> = members.iter().map(|m| cohesion(points, m)).collect();
    let train_order = order_by_cohesion(&cohesion);
    GroupPlan {
        labels,
        n_groups,
        cohesion,
        train_order,
    }
}

/// Labels (balanced k-means, or random when the source says so), cohesion
/// measured on `points`, and the easy-to-hard order.
pub fn make_plan(points: &DenseMatrix, config: &ClusterConfig) -> Result<GroupPlan> {
    config.validate(points.rows())?;
    let labels = match config.source {
        GroupSource::Random => random_balanced_labels(points.rows(), config.n_groups, config.seed),
        GroupSource::CollabEmbedding | GroupSource::RawRatings => balanced_group(points, config)?,
    };
    Ok(plan_from_labels(points, labels, config.n_groups))
}

/// Dense rating rows (0 where unrated), the feature space of L-BKM.
pub fn rating_points(matrix: &InteractionMatrix) -> DenseMatrix {
    let mut m = DenseMatrix::zeros(matrix.n_users(), matrix.n_items());
    for (u, i, r) in matrix.entries() {
        m.row_mut(u)[i] = r;
    }
    m
}

/// k-means++ seeding: first center uniform, each next one drawn with
/// probability proportional to the squared distance to the nearest chosen
/// center.
pub fn kmeans_pp_centers(points: &DenseMatrix, k: usize, seed: u64) -> DenseMatrix {
    let n = points.rows();
    let mut rng = rng::rng_for(seed, &[rng::TAG_GROUP, 1]);
    let mut centers = DenseMatrix::zeros(k, points.cols());
    let first = rng.random_range(0..n);
    centers.row_mut(0).copy_from_slice(points.row(first));
    let mut d2: Vec<f64> = (0..n).map(|u| sq_dist(points.row(u), centers.row(0))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let x = rng.random::<f64>() * total;
            let mut acc = 0.0;
            d2.iter()
                .position(|&d| {
                    acc += d;
                    acc > x
                })
                .unwrap_or(n - 1)
        } else {
            rng.random_range(0..n)
        };
        centers.row_mut(c).copy_from_slice(points.row(pick));
        for u in 0..n {
            d2[u] = d2[u].min(sq_dist(points.row(u), centers.row(c)));
        }
    }
    centers
}

/// Initial balanced labels: one capacity-constrained greedy pass against
/// k-means++ seed centers.
pub fn seeded_balanced_labels(points: &DenseMatrix, n_groups: usize, seed: u64) -> Vec<usize> {
    let centers = kmeans_pp_centers(points, n_groups, seed);
    let mut list = Vec::with_capacity(points.rows() * n_groups);
    for u in 0..points.rows() {
        for g in 0..n_groups {
            list.push(Priority {
                user: u,
                group: g,
                priority: -dist(points.row(u), centers.row(g)),
            });
        }
    }
    sort_priorities(&mut list, points);
    assign_greedy(&list, points.rows(), n_groups)
}

/// Unconstrained Lloyd k-means with k-means++ seeding. Used as the
/// unbalanced control.
pub fn kmeans(points: &DenseMatrix, k: usize, max_iter: usize, seed: u64) -> Result<Vec<usize>> {
    let n = points.rows();
    if k == 0 || k > n {
        return Err(LaserError::Config(format!("k = {k} invalid for {n} points")));
    }
    let mut centers = kmeans_pp_centers(points, k, seed);
    let nearest = |centers: &DenseMatrix, u: usize| {
        (0..k)
            .min_by(|&a, &b| {
                sq_dist(points.row(u), centers.row(a))
                    .total_cmp(&sq_dist(points.row(u), centers.row(b)))
            })
            .expect("k >= 1")
    };
    let mut labels: Vec<usize> = (0..n).map(|u| nearest(&centers, u)).collect();
    for _ in 0..max_iter {
        let sizes = group_sizes(&labels, k);
        let mut sums = DenseMatrix::zeros(k, points.cols());
        for (u, &g) in labels.iter().enumerate() {
            for (s, &x) in sums.row_mut(g).iter_mut().zip(points.row(u)) {
                *s += x;
            }
        }
        for g in 0..k {
            if sizes[g] > 0 {
                let row = sums.row(g).iter().map(|s| s / sizes[g] as f64).collect::<Vec<_>>();
                centers.row_mut(g).copy_from_slice(&row);
            }
        }
        let next: Vec<usize> = (0..n).map(|u| nearest(&centers, u)).collect();
        if next == labels {
            break;
        }
        labels = next;
    }
    Ok(labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(rows: &[&[f64]]) -> DenseMatrix {
        DenseMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>())
    }

    #[test]
    fn single_group_priorities() {
        let p = pts(&[&[0.0, 0.0], &[2.0, 0.0], &[4.0, 0.0]]);
        let list = compute_similarity_kmeans(&p, &[0, 0, 0], 1);
        assert_eq!(list.len(), 3);
        let d: Vec<f64> = list.iter().map(|x| x.priority).collect();
        assert_eq!(d, vec![-2.0, 0.0, -2.0]);
    }

    #[test]
    fn two_singletons() {
        let p = pts(&[&[0.0, 0.0], &[2.0, 0.0]]);
        let list = compute_similarity_kmeans(&p, &[0, 1], 2);
        let get = |u, g| list.iter().find(|x| x.user == u && x.group == g).unwrap().priority;
        assert_eq!(get(0, 0), 0.0);
        assert_eq!(get(0, 1), -2.0);
        assert_eq!(get(1, 1), 0.0);
        assert_eq!(get(1, 0), -2.0);
    }

    #[test]
    fn identical_points_fall_to_tie_break() {
        let p = pts(&[&[1.0], &[1.0], &[1.0], &[1.0]]);
        let mut list = compute_similarity_kmeans(&p, &[0, 1, 0, 1], 2);
        assert!(list.iter().all(|x| x.priority == 0.0));
        sort_priorities(&mut list, &p);
        let order: Vec<(usize, usize)> = list.iter().map(|x| (x.user, x.group)).collect();
        assert_eq!(order[..3], [(0, 0), (0, 1), (1, 0)]);
        assert_eq!(assign_greedy(&list, 4, 2), vec![0, 0, 1, 1]);
    }

    #[test]
    fn empty_group_reseeded_at_farthest_point() {
        let p = pts(&[&[0.0], &[1.0], &[10.0]]);
        let c = centroids(&p, &[0, 0, 0], 2);
        assert_eq!(c.row(1), [10.0]);
    }

    #[test]
    fn capacity_five_two() {
        let p = pts(&[&[0.0], &[0.1], &[0.2], &[0.3], &[0.4]]);
        let labels = balanced_group(&p, &ClusterConfig::new(2, 3)).unwrap();
        let mut sizes = group_sizes(&labels, 2);
        sizes.sort();
        assert_eq!(sizes, vec![2, 3]);
    }

    #[test]
    fn separated_pairs_are_cogrouped() {
        let p = pts(&[&[0.0, 0.0], &[10.0, 0.0], &[0.0, 10.0], &[0.1, 0.0], &[10.1, 0.0], &[0.0, 10.1]]);
        for seed in 0..10 {
            let labels = balanced_group(&p, &ClusterConfig::new(3, seed)).unwrap();
            assert_eq!(group_sizes(&labels, 3), vec![2, 2, 2]);
            assert_eq!(labels[0], labels[3]);
            assert_eq!(labels[1], labels[4]);
            assert_eq!(labels[2], labels[5]);
        }
    }

    #[test]
    fn single_group_stable_in_one_iteration() {
        let p = pts(&[&[0.0], &[5.0], &[9.0]]);
        let (labels, iters) = balanced_group_from(&p, 1, 20, vec![0, 0, 0]);
        assert_eq!(labels, vec![0, 0, 0]);
        assert_eq!(iters, 1);
    }

    #[test]
    fn invalid_group_counts() {
        let p = pts(&[&[0.0], &[1.0]]);
        assert!(balanced_group(&p, &ClusterConfig::new(0, 0)).is_err());
        assert!(balanced_group(&p, &ClusterConfig::new(3, 0)).is_err());
    }

    #[test]
    fn cohesion_values() {
        let p = pts(&[&[0.0, 0.0], &[2.0, 0.0]]);
        assert_eq!(cohesion(&p, &[0]), 0.0);
        assert_eq!(cohesion(&p, &[0, 1]), 0.25);
        let h = 3f64.sqrt() / 2.0;
        let tri = pts(&[&[0.0, 0.0], &[1.0, 0.0], &[0.5, h]]);
        assert!((cohesion(&tri, &[0, 1, 2]) - 1.0).abs() < 1e-12);
        let same = pts(&[&[1.0], &[1.0]]);
        assert_eq!(cohesion(&same, &[0, 1]), 1.0 / COHESION_EPS / 2.0);
    }

    #[test]
    fn order_and_plan() {
        assert_eq!(order_by_cohesion(&[0.8, 0.3]), vec![0, 1]);
        assert_eq!(order_by_cohesion(&[0.3, 0.8]), vec![1, 0]);
        assert_eq!(order_by_cohesion(&[0.5, 0.5, 0.9]), vec![2, 0, 1]);
        let p = pts(&[&[0.0], &[1.0]]);
        let plan = make_plan(&p, &ClusterConfig::new(1, 0)).unwrap();
        assert_eq!(plan.train_order, vec![0]);
    }

    #[test]
    fn random_source_sizes() {
        let p = DenseMatrix::zeros(10, 2);
        let cfg = ClusterConfig {
            source: GroupSource::Random,
            ..ClusterConfig::new(4, 1)
        };
        let plan = make_plan(&p, &cfg).unwrap();
        assert_eq!(plan.group_sizes(), vec![3, 3, 2, 2]);
    }

    #[test]
    fn plan_text_round_trip() {
        let plan = GroupPlan {
            labels: vec![1, 0, 1],
            n_groups: 2,
            cohesion: vec![0.25, 1.0 / 3.0],
            train_order: vec![1, 0],
        };
        let text = plan.to_text();
        assert_eq!(text, "2\n1 0 1\n2.50000000e-1 3.33333333e-1\n1 0\n");
        let back = GroupPlan::from_text(&text).unwrap();
        assert_eq!(back.labels, plan.labels);
        assert_eq!(back.train_order, plan.train_order);
        assert_eq!(back.to_text(), text);
        assert!(GroupPlan::from_text("2\n0 3\n1 1\n0 1\n").is_err());
    }
}
