//! User hypergraph with edge-dependent vertex weights and the random walk
//! that turns it into user sequences.
//!
//! Each user `i` owns one hyperedge `e_i` holding every user reachable from
//! `i` through a user–item path with fewer than `l_order` vertices. The
//! weight `w(i, j)` of member `j` is the mean of `j`'s ratings over items
//! that at least one other member of `e_i` also rated, falling back to
//! `j`'s global mean when that set is empty.

use std::collections::VecDeque;
use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{LaserError, Result};
use crate::ingest::InteractionMatrix;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WalkConfig {
    pub repetition: usize,
    pub depth: usize,
    pub l_order: usize,
    pub seed: u64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig {
            repetition: 4,
            depth: 8,
            l_order: 4,
            seed: 0,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.repetition == 0 || self.depth == 0 {
            return Err(LaserError::Config("walk repetition and depth must be >= 1".into()));
        }
        if self.l_order < 2 {
            return Err(LaserError::Config("l_order must be >= 2".into()));
        }
        Ok(())
    }
}

/// Longest user-to-user hop count whose bipartite path has fewer than
/// `l_order` vertices: a path of `h` user hops visits `2h + 1` vertices.
pub fn max_user_hops(l_order: usize) -> usize {
    l_order.saturating_sub(2) / 2
}

fn bfs_users(
    matrix: &InteractionMatrix,
    item_users: &[Vec<u32>],
    user: usize,
    hops: usize,
    seen: &mut [bool],
) -> Vec<u32> {
    let mut out = vec![user as u32];
    seen[user] = true;
    let mut frontier = VecDeque::from([(user, 0usize)]);
    while let Some((u, d)) = frontier.pop_front() {
        if d == hops {
            continue;
        }
        for &(item, _) in matrix.user_row(u) {
            for &v in &item_users[item as usize] {
                let v = v as usize;
                if !seen[v] {
                    seen[v] = true;
                    out.push(v as u32);
                    frontier.push_back((v, d + 1));
                }
            }
        }
    }
    for &v in &out {
        seen[v as usize] = false;
    }
    out.sort_unstable();
    out
}

/// Users connected to `user` by a bipartite path with fewer than `l_order`
/// vertices, including `user` itself. Sorted ascending.
pub fn reachable_neighbors(
    matrix: &InteractionMatrix,
    user: usize,
    l_order: usize,
) -> Result<Vec<usize>> {
    if user >= matrix.n_users() {
        return Err(LaserError::OutOfRange {
            what: "user",
            index: user,
            bound: matrix.n_users(),
        });
    }
    let item_users = matrix.item_users();
    let mut seen = vec![false; matrix.n_users()];
    Ok(bfs_users(matrix, &item_users, user, max_user_hops(l_order), &mut seen)
        .into_iter()
        .map(|v| v as usize)
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hypergraph {
    edges: Vec<Vec<u32>>,
    weights: Vec<Vec<f64>>,
    vertex_to_edges: Vec<Vec<u32>>,
    // Sampling tables: cumulative hyperedge sizes per vertex, cumulative
    // member weights per hyperedge.
    edge_cdf: Vec<Vec<u64>>,
    weight_cdf: Vec<Vec<f64>>,
}

struct Scratch {
    seen: Vec<bool>,
    item_count: Vec<u32>,
}

fn member_weights(
    matrix: &InteractionMatrix,
    members: &[u32],
    item_count: &mut [u32],
) -> Vec<f64> {
    for &m in members {
        for &(item, _) in matrix.user_row(m as usize) {
            item_count[item as usize] += 1;
        }
    }
    let weights = members
        .iter()
        .map(|&m| {
            let row = matrix.user_row(m as usize);
            let (sum, n) = row
                .iter()
                .filter(|&&(item, _)| item_count[item as usize] >= 2)
                .fold((0.0, 0usize), |(s, n), &(_, r)| (s + r, n + 1));
            if n > 0 {
                sum / n as f64
            } else {
                // users without ratings only arise after erasure; any positive
                // weight works since they form singleton hyperedges
                matrix.user_mean(m as usize).unwrap_or(1.0)
            }
        })
        .collect();
    for &m in members {
        for &(item, _) in matrix.user_row(m as usize) {
            item_count[item as usize] = 0;
        }
    }
    weights
}

pub fn build_hypergraph(matrix: &InteractionMatrix, l_order: usize) -> Result<Hypergraph> {
    if matrix.is_empty() {
        return Err(LaserError::EmptyDataset("cannot build a hypergraph without ratings".into()));
    }
    if l_order < 2 {
        return Err(LaserError::Config("l_order must be >= 2".into()));
    }
    let n = matrix.n_users();
    let hops = max_user_hops(l_order);
    let item_users = matrix.item_users();
    let built: Vec<(Vec<u32>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map_init(
            || Scratch {
                seen: vec![false; n],
                item_count: vec![0; matrix.n_items()],
            },
            |s, u| {
                let members = bfs_users(matrix, &item_users, u, hops, &mut s.seen);
                let weights = member_weights(matrix, &members, &mut s.item_count);
                (members, weights)
            },
        )
        .collect();
    let (edges, weights): (Vec<_>, Vec<_>) = built.into_iter().unzip();
    Ok(Hypergraph::from_parts(edges, weights))
}

impl Hypergraph {
    fn from_parts(edges: Vec<Vec<u32>>, weights: Vec<Vec<f64>>) -> Hypergraph {
        let n = edges.len();
        let mut vertex_to_edges = vec![Vec::new(); n];
        for (e, members) in edges.iter().enumerate() {
            for &v in members {
                vertex_to_edges[v as usize].push(e as u32);
            }
        }
        let edge_cdf = vertex_to_edges
            .iter()
            .map(|es| {
                es.iter()
                    .scan(0u64, |acc, &e| {
                        *acc += edges[e as usize].len() as u64;
                        Some(*acc)
                    })
                    .collect()
            })
            .collect();
        let weight_cdf = weights
            .iter()
            .map(|ws| {
                ws.iter()
                    .scan(0.0f64, |acc, &w| {
                        *acc += w;
                        Some(*acc)
                    })
                    .collect()
            })
            .collect();
        Hypergraph {
            edges,
            weights,
            vertex_to_edges,
            edge_cdf,
            weight_cdf,
        }
    }

    pub fn n_vertices(&self) -> usize {
        self.edges.len()
    }

    /// Members of hyperedge `e`, ascending.
    pub fn edge(&self, e: usize) -> &[u32] {
        &self.edges[e]
    }

    pub fn edge_weights(&self, e: usize) -> &[f64] {
        &self.weights[e]
    }

    pub fn weight(&self, e: usize, v: usize) -> Option<f64> {
        self.edges[e]
            .binary_search(&(v as u32))
            .ok()
            .map(|k| self.weights[e][k])
    }

    /// Hyperedges containing `v`, ascending.
    pub fn edges_of(&self, v: usize) -> &[u32] {
        &self.vertex_to_edges[v]
    }

    /// Probability of each hyperedge in [`Self::edges_of`] being chosen
    /// from `v`.
    pub fn edge_choice_probabilities(&self, v: usize) -> Vec<f64> {
        let total = *self.edge_cdf[v].last().unwrap_or(&0) as f64;
        self.vertex_to_edges[v]
            .iter()
            .map(|&e| self.edges[e as usize].len() as f64 / total)
            .collect()
    }

    /// Draw a hyperedge containing `v` with probability ∝ its cardinality.
    pub fn sample_edge<R: Rng + ?Sized>(&self, v: usize, rng: &mut R) -> usize {
        let cdf = &self.edge_cdf[v];
        let x = rng.random_range(0..*cdf.last().expect("vertex belongs to its own hyperedge"));
        let k = cdf.partition_point(|&c| c <= x);
        self.vertex_to_edges[v][k] as usize
    }

    /// Draw a member of `e` with probability ∝ w(e, ·).
    pub fn sample_member<R: Rng + ?Sized>(&self, e: usize, rng: &mut R) -> usize {
        let cdf = &self.weight_cdf[e];
        let total = *cdf.last().expect("hyperedges are non-empty");
        let x = rng.random::<f64>() * total;
        let k = cdf.partition_point(|&c| c <= x).min(cdf.len() - 1);
        self.edges[e][k] as usize
    }

    /// `edge_id: v,w; v,w; ...` per line, ids ascending.
    pub fn debug_dump(&self) -> String {
        let mut out = String::new();
        for (e, (members, ws)) in self.edges.iter().zip(&self.weights).enumerate() {
            let _ = write!(out, "{e}:");
            for (k, (v, w)) in members.iter().zip(ws).enumerate() {
                let sep = if k == 0 { " " } else { "; " };
                let _ = write!(out, "{sep}{v},{w}");
            }
            out.push('\n');
        }
        out
    }
}

/// `n_vertices · repetition` sequences of `depth + 1` vertex ids; sequence
/// `v · repetition + r` is the `r`-th walk started at `v`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserSequenceCorpus {
    pub sequences: Vec<Vec<u32>>,
    pub n_vertices: usize,
}

impl UserSequenceCorpus {
    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }
}

pub fn random_walk(graph: &Hypergraph, config: &WalkConfig) -> Result<UserSequenceCorpus> {
    config.validate()?;
    let n = graph.n_vertices();
    let sequences = (0..n * config.repetition)
        .into_par_iter()
        .map(|idx| {
            let start = idx / config.repetition;
            let mut rng = rng::rng_for(config.seed, &[rng::TAG_WALK, idx as u64]);
            let mut seq = Vec::with_capacity(config.depth + 1);
            seq.push(start as u32);
            let mut cur = start;
            for _ in 0..config.depth {
                let e = graph.sample_edge(cur, &mut rng);
                cur = graph.sample_member(e, &mut rng);
                seq.push(cur as u32);
            }
            seq
        })
        .collect();
    Ok(UserSequenceCorpus {
        sequences,
        n_vertices: n,
    })
}
