use laser_core::embed::{pair_gradients, pair_loss, train_embedding, train_embedding_with_report, EmbedConfig};
use laser_core::hypergraph::UserSequenceCorpus;
use laser_core::linalg::cosine;
use laser_core::rng::{rng_for, TAG_EMBED};
use laser_core::LaserError;
use rand::Rng;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Two cliques of five users; walks never leave their clique.
fn two_cliques(seed: u64) -> UserSequenceCorpus {
    let mut rng = rng_for(seed, &[]);
    let mut sequences = Vec::new();
    for start in 0..10u32 {
        let base = if start < 5 { 0 } else { 5 };
        for _ in 0..20 {
            let mut s = vec![start];
            for _ in 0..8 {
                s.push(base + rng.random_range(0..5));
            }
            sequences.push(s);
        }
    }
    UserSequenceCorpus {
        sequences,
        n_vertices: 10,
    }
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = rng_for(42, &[]);
    let h = 1e-5;
    for _ in 0..10 {
        let dim = 8;
        let mut vec = || (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
        let center = vec();
        let context = vec();
        let negs: Vec<Vec<f64>> = (0..3).map(|_| vec()).collect();
        let loss = |c: &[f64], o: &[f64], n: &[Vec<f64>]| {
            let refs: Vec<&[f64]> = n.iter().map(Vec::as_slice).collect();
            pair_loss(c, o, &refs)
        };
        let refs: Vec<&[f64]> = negs.iter().map(Vec::as_slice).collect();
        let (gc, go, gn) = pair_gradients(&center, &context, &refs);
        for k in 0..dim {
            let bump = |v: &[f64], d: f64| {
                let mut w = v.to_vec();
                w[k] += d;
                w
            };
            let fd = (loss(&bump(&center, h), &context, &negs) - loss(&bump(&center, -h), &context, &negs)) / (2.0 * h);
            assert!(rel_err(gc[k], fd) < 1e-4, "center {k}: {} vs {fd}", gc[k]);
            let fd = (loss(&center, &bump(&context, h), &negs) - loss(&center, &bump(&context, -h), &negs)) / (2.0 * h);
            assert!(rel_err(go[k], fd) < 1e-4, "context {k}: {} vs {fd}", go[k]);
            for j in 0..negs.len() {
                let mut up = negs.clone();
                up[j][k] += h;
                let mut down = negs.clone();
                down[j][k] -= h;
                let fd = (loss(&center, &context, &up) - loss(&center, &context, &down)) / (2.0 * h);
                assert!(rel_err(gn[j][k], fd) < 1e-4, "negative {j}/{k}: {} vs {fd}", gn[j][k]);
            }
        }
    }
}

#[test]
fn shape_and_finiteness() {
    let corpus = two_cliques(1);
    let b = train_embedding(&corpus, &EmbedConfig::default()).unwrap();
    assert_eq!((b.n_users(), b.dim()), (10, 16));
    assert!(b.vectors.as_slice().iter().all(|x| x.is_finite()));
}

#[test]
fn cliques_separate() {
    let corpus = two_cliques(2);
    let cfg = EmbedConfig {
        epochs: 20,
        seed: 4,
        ..EmbedConfig::default()
    };
    let b = train_embedding(&corpus, &cfg).unwrap();
    let (mut intra, mut ni, mut inter, mut nx) = (0.0, 0, 0.0, 0);
    for i in 0..10 {
        for j in (i + 1)..10 {
            let c = cosine(b.row(i), b.row(j));
            if (i < 5) == (j < 5) {
                intra += c;
                ni += 1;
            } else {
                inter += c;
                nx += 1;
            }
        }
    }
    let (intra, inter) = (intra / ni as f64, inter / nx as f64);
    assert!(intra > inter, "intra {intra} inter {inter}");
}

#[test]
fn loss_falls_across_epochs() {
    let cfg = EmbedConfig {
        epochs: 10,
        ..EmbedConfig::default()
    };
    let (_, report) = train_embedding_with_report(&two_cliques(3), &cfg).unwrap();
    assert_eq!(report.epoch_losses.len(), 10);
    assert!(report.epoch_losses[9] < report.epoch_losses[0], "{:?}", report.epoch_losses);
}

#[test]
fn seeded_runs_are_identical() {
    let corpus = two_cliques(5);
    let cfg = EmbedConfig {
        seed: 17,
        ..EmbedConfig::default()
    };
    assert_eq!(train_embedding(&corpus, &cfg).unwrap(), train_embedding(&corpus, &cfg).unwrap());
    let other = EmbedConfig { seed: 18, ..cfg };
    assert_ne!(train_embedding(&corpus, &cfg).unwrap(), train_embedding(&corpus, &other).unwrap());
}

#[test]
fn zero_epochs_return_initialization() {
    let cfg = EmbedConfig {
        epochs: 0,
        seed: 8,
        ..EmbedConfig::default()
    };
    let b = train_embedding(&two_cliques(6), &cfg).unwrap();
    let mut rng = rng_for(8, &[TAG_EMBED]);
    let half = 0.5 / 16.0;
    let expected: Vec<f64> = (0..10 * 16).map(|_| rng.random_range(-half..half)).collect();
    assert_eq!(b.vectors.as_slice(), expected.as_slice());
}

#[test]
fn corpus_errors() {
    let empty = UserSequenceCorpus {
        sequences: vec![],
        n_vertices: 3,
    };
    assert!(matches!(train_embedding(&empty, &EmbedConfig::default()), Err(LaserError::EmptyDataset(_))));
    let gap = UserSequenceCorpus {
        sequences: vec![vec![0, 2, 0]],
        n_vertices: 3,
    };
    assert!(matches!(train_embedding(&gap, &EmbedConfig::default()), Err(LaserError::MissingUser(1))));
}
