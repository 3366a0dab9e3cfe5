//! Planted-cluster rating data for tests and desk-scale benchmarks.
//!
//! Users belong to latent clusters; cluster `k` scatters its members around
//! a center with standard deviation `spreads[k]`. Each user picks items
//! with probability ∝ `exp(affinity · <x_u, v_j>)` (sampled without
//! replacement) and rates them by a rounded, clamped linear score. Tight
//! clusters therefore share item sets and rating patterns.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{LaserError, Result};
use crate::ingest::InteractionMatrix;
use crate::linalg::dot;
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub ratings_per_user: usize,
    pub latent_dim: usize,
    /// One entry per cluster; users are dealt to clusters round-robin.
    pub spreads: Vec<f64>,
    pub center_scale: f64,
    pub affinity: f64,
    pub rating_noise: f64,
    pub seed: u64,
}

impl SyntheticConfig {
    /// `n_clusters` equal clusters with spreads rising linearly from
    /// `tight` to `diffuse`.
    pub fn planted(n_users: usize, n_items: usize, n_clusters: usize, tight: f64, diffuse: f64, seed: u64) -> Self {
        let spreads = (0..n_clusters)
            .map(|k| {
                if n_clusters == 1 {
                    tight
                } else {
                    tight + (diffuse - tight) * k as f64 / (n_clusters - 1) as f64
                }
            })
            .collect();
        SyntheticConfig {
            n_users,
            n_items,
            ratings_per_user: 20,
            latent_dim: 8,
            spreads,
            center_scale: 1.0,
            affinity: 2.0,
            rating_noise: 0.3,
            seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub matrix: InteractionMatrix,
    /// Planted cluster of every user.
    pub clusters: Vec<usize>,
}

pub fn generate(config: &SyntheticConfig) -> Result<SyntheticData> {
    let k = config.spreads.len();
    if k == 0 || config.n_users < k {
        return Err(LaserError::Config("need at least one user per cluster".into()));
    }
    if config.ratings_per_user == 0 || config.ratings_per_user > config.n_items {
        return Err(LaserError::Config("ratings_per_user must lie in 1..=n_items".into()));
    }
    let d = config.latent_dim;
    let mut rng = rng::rng_for(config.seed, &[0x5157]);
    let mut gauss = |scale: f64| -> Vec<f64> {
        (0..d)
            .map(|_| scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
            .collect::<Vec<f64>>()
    };
    let items: Vec<Vec<f64>> = (0..config.n_items).map(|_| gauss(1.0 / (d as f64).sqrt())).collect();
    let centers: Vec<Vec<f64>> = (0..k).map(|_| gauss(config.center_scale)).collect();
    let clusters: Vec<usize> = (0..config.n_users).map(|u| u % k).collect();
    let users: Vec<Vec<f64>> = clusters
        .iter()
        .map(|&c| {
            let off = gauss(config.spreads[c]);
            centers[c].iter().zip(off).map(|(a, b)| a + b).collect()
        })
        .collect();

    let noise = Normal::new(0.0, config.rating_noise.max(0.0)).expect("non-negative std");
    let mut entries = Vec::with_capacity(config.n_users * config.ratings_per_user);
    for (u, x) in users.iter().enumerate() {
        // Efraimidis–Spirakis: top-m keys ln(U)/w sample without replacement ∝ w
        let mut keyed: Vec<(f64, usize)> = items
            .iter()
            .enumerate()
            .map(|(j, v)| {
                let logw = config.affinity * dot(x, v);
                let uni: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
                (uni.ln() / logw.exp(), j)
            })
            .collect();
        keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, j) in keyed.iter().take(config.ratings_per_user) {
            let score = 3.0 + 1.5 * dot(x, &items[j]) + noise.sample(&mut rng);
            let r = score.round().clamp(1.0, 5.0);
            entries.push((u, j, r));
        }
    }
    let matrix = InteractionMatrix::from_entries(config.n_users, config.n_items, 5.0, entries)?;
    Ok(SyntheticData { matrix, clusters })
}
