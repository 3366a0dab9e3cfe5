//! Skip-gram with negative sampling over walk sequences.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::binio::{Reader, Writer};
use crate::error::{LaserError, Result};
use crate::hypergraph::{build_hypergraph, random_walk, UserSequenceCorpus, WalkConfig};
use crate::ingest::InteractionMatrix;
use crate::linalg::{dot, sigmoid, softplus, DenseMatrix};
use crate::rng;

const EMBED_MAGIC: &[u8; 4] = b"LSEM";
const EMBED_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbedConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub min_learning_rate: f64,
    pub seed: u64,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        EmbedConfig {
            dim: 16,
            window: 2,
            negatives: 5,
            epochs: 5,
            learning_rate: 0.025,
            min_learning_rate: 0.0001,
            seed: 0,
        }
    }
}

impl EmbedConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.window == 0 || self.negatives == 0 {
            return Err(LaserError::Config(
                "embedding dim, window and negatives must be >= 1".into(),
            ));
        }
        if !(self.learning_rate >= 0.0 && self.min_learning_rate >= 0.0) {
            return Err(LaserError::Config("learning rates must be non-negative".into()));
        }
        Ok(())
    }
}

/// N×M user embedding, one row per user.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub vectors: DenseMatrix,
}

impl EmbeddingMatrix {
    pub fn n_users(&self) -> usize {
        self.vectors.rows()
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn row(&self, user: usize) -> &[f64] {
        self.vectors.row(user)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.bytes(EMBED_MAGIC);
        w.u32(EMBED_VERSION);
        w.u64(self.n_users() as u64);
        w.u64(self.dim() as u64);
        w.f64s(self.vectors.as_slice());
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.magic(EMBED_MAGIC)?;
        let version = r.u32()?;
        if version != EMBED_VERSION {
            return Err(LaserError::Format(format!(
                "embedding version {version} is not supported (expected {EMBED_VERSION})"
            )));
        }
        let n = r.usize()?;
        let m = r.usize()?;
        let data = r.f64s(n * m)?;
        r.finish()?;
        Ok(EmbeddingMatrix {
            vectors: DenseMatrix::from_vec(n, m, data),
        })
    }
}

/// Negative-sampling loss for one (center, context) pair:
/// `-ln σ(u_o·v) - Σ ln σ(-u_n·v)`.
pub fn pair_loss(center: &[f64], context: &[f64], negatives: &[&[f64]]) -> f64 {
    softplus(-dot(context, center))
        + negatives
            .iter()
            .map(|n| softplus(dot(n, center)))
            .sum::<f64>()
}

/// d(loss)/d(score) for a target with the given label; the score is the dot
/// product of the target's output vector and the center's input vector.
fn score_coefficient(score: f64, label: f64) -> f64 {
    sigmoid(score) - label
}

/// Gradients of [`pair_loss`] with respect to the center vector, the
/// context vector and every negative vector.
pub fn pair_gradients(
    center: &[f64],
    context: &[f64],
    negatives: &[&[f64]],
) -> (Vec<f64>, Vec<f64>, Vec<Vec<f64>>) {
    let mut g_center = vec![0.0; center.len()];
    let c = score_coefficient(dot(context, center), 1.0);
    let g_context = center.iter().map(|&x| c * x).collect();
    for (g, &u) in g_center.iter_mut().zip(context) {
        *g += c * u;
    }
    let g_negs = negatives
        .iter()
        .map(|n| {
            let c = score_coefficient(dot(n, center), 0.0);
            for (g, &u) in g_center.iter_mut().zip(n.iter()) {
                *g += c * u;
            }
            center.iter().map(|&x| c * x).collect()
        })
        .collect();
    (g_center, g_context, g_negs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbedReport {
    /// Mean pair loss per epoch, measured before each update.
    pub epoch_losses: Vec<f64>,
}

pub fn train_embedding(corpus: &UserSequenceCorpus, config: &EmbedConfig) -> Result<EmbeddingMatrix> {
    train_embedding_with_report(corpus, config).map(|(b, _)| b)
}

pub fn train_embedding_with_report(
    corpus: &UserSequenceCorpus,
    config: &EmbedConfig,
) -> Result<(EmbeddingMatrix, EmbedReport)> {
    config.validate()?;
    if corpus.is_empty() || corpus.sequences.iter().all(Vec::is_empty) {
        return Err(LaserError::EmptyDataset("walk corpus is empty".into()));
    }
    let n = corpus.n_vertices;
    let dim = config.dim;
    let mut counts = vec![0u64; n];
    for seq in &corpus.sequences {
        for &v in seq {
            let v = v as usize;
            if v >= n {
                return Err(LaserError::OutOfRange {
                    what: "corpus vertex",
                    index: v,
                    bound: n,
                });
            }
            counts[v] += 1;
        }
    }
    if let Some(missing) = counts.iter().position(|&c| c == 0) {
        return Err(LaserError::MissingUser(missing));
    }

    let mut rng = rng::rng_for(config.seed, &[rng::TAG_EMBED]);
    let half = 0.5 / dim as f64;
    let input: Vec<f64> = (0..n * dim).map(|_| rng.random_range(-half..half)).collect();
    let mut input = DenseMatrix::from_vec(n, dim, input);
    let mut output = DenseMatrix::zeros(n, dim);

    let noise = WeightedIndex::new(counts.iter().map(|&c| (c as f64).powf(0.75)))
        .map_err(|e| LaserError::Config(format!("noise distribution: {e}")))?;

    let window = config.window;
    let pairs_per_epoch: usize = corpus
        .sequences
        .iter()
        .map(|s| {
            (0..s.len())
                .map(|c| {
                    let lo = c.saturating_sub(window);
                    let hi = (c + window).min(s.len() - 1);
                    hi - lo
                })
                .sum::<usize>()
        })
        .sum();
    let total_pairs = (pairs_per_epoch * config.epochs).max(1);

    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut processed = 0usize;
    let mut neu = vec![0.0; dim];
    let mut negs: Vec<usize> = Vec::with_capacity(config.negatives);
    for _ in 0..config.epochs {
        let mut loss_sum = 0.0;
        for seq in &corpus.sequences {
            for c in 0..seq.len() {
                let center = seq[c] as usize;
                let lo = c.saturating_sub(window);
                let hi = (c + window).min(seq.len() - 1);
                for o in lo..=hi {
                    if o == c {
                        continue;
                    }
                    let context = seq[o] as usize;
                    let progress = processed as f64 / total_pairs as f64;
                    let lr = config.learning_rate
                        + (config.min_learning_rate - config.learning_rate) * progress;
                    processed += 1;

                    negs.clear();
                    for _ in 0..config.negatives {
                        let t = noise.sample(&mut rng);
                        if t != context {
                            negs.push(t);
                        }
                    }

                    neu.iter_mut().for_each(|x| *x = 0.0);
                    let v = input.row(center).to_vec();
                    let targets = std::iter::once((context, 1.0)).chain(negs.iter().map(|&t| (t, 0.0)));
                    for (t, label) in targets {
                        let u = output.row_mut(t);
                        let score = dot(u, &v);
                        loss_sum += if label > 0.0 { softplus(-score) } else { softplus(score) };
                        let g = score_coefficient(score, label);
                        for k in 0..dim {
                            neu[k] += g * u[k];
                            u[k] -= lr * g * v[k];
                        }
                    }
                    let vin = input.row_mut(center);
                    for k in 0..dim {
                        vin[k] -= lr * neu[k];
                    }
                }
            }
        }
        epoch_losses.push(loss_sum / pairs_per_epoch.max(1) as f64);
    }

    Ok((EmbeddingMatrix { vectors: input }, EmbedReport { epoch_losses }))
}

/// Collaborative user embedding of a rating matrix: hypergraph, random
/// walks, then skip-gram training.
pub fn collab_embedding(
    matrix: &InteractionMatrix,
    walk: &WalkConfig,
    config: &EmbedConfig,
) -> Result<EmbeddingMatrix> {
    let graph = build_hypergraph(matrix, walk.l_order)?;
    let corpus = random_walk(&graph, walk)?;
    train_embedding(&corpus, config)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(n: usize) -> UserSequenceCorpus {
        UserSequenceCorpus {
            sequences: (0..n).map(|v| vec![v as u32, ((v + 1) % n) as u32, v as u32]).collect(),
            n_vertices: n,
        }
    }

    #[test]
    fn shape_and_finiteness() {
        let b = train_embedding(&corpus(10), &EmbedConfig::default()).unwrap();
        assert_eq!((b.n_users(), b.dim()), (10, 16));
        assert!(b.vectors.as_slice().iter().all(|x| x.is_finite()));
    }

    #[test]
    fn zero_epochs_returns_initialisation() {
        let cfg = EmbedConfig {
            epochs: 0,
            ..EmbedConfig::default()
        };
        let b = train_embedding(&corpus(4), &cfg).unwrap();
        let mut rng = rng::rng_for(cfg.seed, &[rng::TAG_EMBED]);
        let half = 0.5 / 16.0;
        let expected: Vec<f64> = (0..4 * 16).map(|_| rng.random_range(-half..half)).collect();
        assert_eq!(b.vectors.as_slice(), expected.as_slice());
    }

    #[test]
    fn errors() {
        let empty = UserSequenceCorpus {
            sequences: vec![],
            n_vertices: 3,
        };
        assert!(matches!(
            train_embedding(&empty, &EmbedConfig::default()),
            Err(LaserError::EmptyDataset(_))
        ));
        let missing = UserSequenceCorpus {
            sequences: vec![vec![0, 2, 0]],
            n_vertices: 3,
        };
        assert!(matches!(
            train_embedding(&missing, &EmbedConfig::default()),
            Err(LaserError::MissingUser(1))
        ));
    }

    #[test]
    fn dump_round_trip_and_bad_magic() {
        let b = train_embedding(&corpus(5), &EmbedConfig::default()).unwrap();
        let bytes = b.to_bytes();
        assert_eq!(&bytes[..4], b"LSEM");
        assert_eq!(bytes.len(), 4 + 4 + 8 + 8 + 5 * 16 * 8);
        assert_eq!(EmbeddingMatrix::from_bytes(&bytes).unwrap(), b);
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(EmbeddingMatrix::from_bytes(&bad), Err(LaserError::Format(_))));
        assert!(EmbeddingMatrix::from_bytes(&bytes[..bytes.len() - 3]).is_err());
    }
}
