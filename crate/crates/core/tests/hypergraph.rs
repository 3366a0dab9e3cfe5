use std::collections::{BTreeSet, VecDeque};

use laser_core::hypergraph::{build_hypergraph, random_walk, reachable_neighbors, WalkConfig};
use laser_core::ingest::InteractionMatrix;
use laser_core::rng::rng_for;
use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn matrix(n_users: usize, n_items: usize, entries: &[(usize, usize, f64)]) -> InteractionMatrix {
    InteractionMatrix::from_entries(n_users, n_items, 5.0, entries.iter().copied()).unwrap()
}

fn chain() -> InteractionMatrix {
    matrix(3, 2, &[(0, 0, 5.0), (1, 0, 5.0), (1, 1, 5.0), (2, 1, 5.0)])
}

/// Users whose shortest path from `user` in the bipartite user/item graph
/// has fewer than `l` vertices. Nodes `0..n_users` are users, the rest items.
fn oracle_neighbors(m: &InteractionMatrix, user: usize, l: usize) -> Vec<usize> {
    let nu = m.n_users();
    let mut adj = vec![Vec::new(); nu + m.n_items()];
    for (u, i, _) in m.entries() {
        adj[u].push(nu + i);
        adj[nu + i].push(u);
    }
    let mut dist = vec![usize::MAX; adj.len()];
    dist[user] = 0;
    let mut q = VecDeque::from([user]);
    while let Some(x) = q.pop_front() {
        for &y in &adj[x] {
            if dist[y] == usize::MAX {
                dist[y] = dist[x] + 1;
                q.push_back(y);
            }
        }
    }
    (0..nu).filter(|&v| dist[v] != usize::MAX && dist[v] + 1 < l).collect()
}

fn oracle_weight(m: &InteractionMatrix, members: &[usize], j: usize) -> f64 {
    let shared: Vec<f64> = m
        .user_row(j)
        .iter()
        .filter(|&&(item, _)| members.iter().any(|&o| o != j && m.contains(o, item as usize)))
        .map(|&(_, r)| r)
        .collect();
    if shared.is_empty() {
        m.user_mean(j).unwrap_or(1.0)
    } else {
        shared.iter().sum::<f64>() / shared.len() as f64
    }
}

fn arb_matrix() -> impl Strategy<Value = InteractionMatrix> {
    (2usize..9, 2usize..7).prop_flat_map(|(nu, ni)| {
        proptest::collection::btree_set((0..nu, 0..ni), 1..(nu * ni).min(20)).prop_flat_map(move |cells| {
            let n = cells.len();
            proptest::collection::vec(1u8..=5, n).prop_map(move |rs| {
                let entries: Vec<_> = cells.iter().zip(&rs).map(|(&(u, i), &r)| (u, i, r as f64)).collect();
                matrix(nu, ni, &entries)
            })
        })
    })
}

#[test]
fn chain_neighbors_grow_with_order() {
    let m = chain();
    assert_eq!(reachable_neighbors(&m, 0, 4).unwrap(), vec![0, 1]);
    assert_eq!(reachable_neighbors(&m, 0, 6).unwrap(), vec![0, 1, 2]);
    let g = build_hypergraph(&m, 6).unwrap();
    assert_eq!(g.edge(0), [0, 1, 2]);
}

#[test]
fn isolated_user_has_singleton_edge() {
    let m = matrix(3, 3, &[(0, 0, 2.0), (1, 0, 4.0), (2, 2, 3.0)]);
    let g = build_hypergraph(&m, 6).unwrap();
    assert_eq!(g.edge(2), [2]);
    assert_eq!(g.edges_of(2), [2]);
    assert_eq!(g.weight(2, 2), Some(3.0));
}

#[test]
fn uniform_ratings_give_uniform_weights() {
    let m = matrix(
        4,
        3,
        &[(0, 0, 4.0), (1, 0, 4.0), (1, 1, 4.0), (2, 1, 4.0), (3, 2, 4.0), (2, 2, 4.0)],
    );
    let g = build_hypergraph(&m, 4).unwrap();
    for e in 0..4 {
        assert!(g.edge_weights(e).iter().all(|&w| w == 4.0), "edge {e}");
    }
    let five = build_hypergraph(&chain(), 4).unwrap();
    assert_eq!(five.weight(0, 1), Some(5.0));
}

#[test]
fn edge_selection_matches_sizes() {
    // u0 belongs to e_0 = {0, 1} and e_1 = {0, 1, 2}.
    let g = build_hypergraph(&chain(), 4).unwrap();
    assert_eq!(g.edges_of(0), [0, 1]);
    let p = g.edge_choice_probabilities(0);
    assert!((p[0] - 0.4).abs() < 1e-12 && (p[1] - 0.6).abs() < 1e-12);
    let mut rng = rng_for(11, &[]);
    let draws = 100_000;
    let hits = (0..draws).filter(|_| g.sample_edge(0, &mut rng) == 1).count();
    let freq = hits as f64 / draws as f64;
    assert!((freq - 0.6).abs() <= 0.01, "freq {freq}");
}

fn chi_square_p(observed: &[u64], probs: &[f64]) -> f64 {
    let n: u64 = observed.iter().sum();
    let stat: f64 = observed
        .iter()
        .zip(probs)
        .map(|(&o, &p)| {
            let e = p * n as f64;
            (o as f64 - e).powi(2) / e
        })
        .sum();
    let dist = ChiSquared::new((observed.len() - 1) as f64).unwrap();
    1.0 - dist.cdf(stat)
}

#[test]
fn walk_transitions_pass_goodness_of_fit() {
    // a star of co-raters gives hyperedges of varied sizes and weights
    let m = matrix(
        6,
        4,
        &[
            (0, 0, 5.0),
            (1, 0, 3.0),
            (1, 1, 1.0),
            (2, 1, 4.0),
            (2, 2, 2.0),
            (3, 2, 5.0),
            (4, 0, 2.0),
            (4, 3, 4.0),
            (5, 3, 3.0),
            (0, 3, 1.0),
        ],
    );
    let g = build_hypergraph(&m, 4).unwrap();
    let v = 0;
    let edges = g.edges_of(v).to_vec();
    assert!(edges.len() >= 3);
    let probs = g.edge_choice_probabilities(v);
    let total: usize = edges.iter().map(|&e| g.edge(e as usize).len()).sum();
    for (k, &e) in edges.iter().enumerate() {
        assert!((probs[k] - g.edge(e as usize).len() as f64 / total as f64).abs() < 1e-12);
    }
    let mut rng = rng_for(5, &[1]);
    let mut observed = vec![0u64; edges.len()];
    for _ in 0..100_000 {
        let e = g.sample_edge(v, &mut rng);
        observed[edges.iter().position(|&x| x as usize == e).unwrap()] += 1;
    }
    let p = chi_square_p(&observed, &probs);
    assert!(p > 0.01, "edge choice p = {p}");

    let e = edges.iter().copied().max_by_key(|&e| g.edge(e as usize).len()).unwrap() as usize;
    let ws = g.edge_weights(e);
    let wsum: f64 = ws.iter().sum();
    let member_probs: Vec<f64> = ws.iter().map(|w| w / wsum).collect();
    let members = g.edge(e).to_vec();
    let mut observed = vec![0u64; members.len()];
    for _ in 0..100_000 {
        let u = g.sample_member(e, &mut rng);
        observed[members.iter().position(|&x| x as usize == u).unwrap()] += 1;
    }
    let p = chi_square_p(&observed, &member_probs);
    assert!(p > 0.01, "member choice p = {p}");
}

#[test]
fn corpus_counts() {
    let g = build_hypergraph(&chain(), 4).unwrap();
    let cfg = WalkConfig {
        repetition: 4,
        depth: 8,
        l_order: 4,
        seed: 3,
    };
    let corpus = random_walk(&g, &cfg).unwrap();
    assert_eq!(corpus.len(), 12);
    for (k, s) in corpus.sequences.iter().enumerate() {
        assert_eq!(s.len(), 9);
        assert_eq!(s[0] as usize, k / 4);
    }
}

#[test]
fn walk_is_independent_of_thread_count() {
    let data = laser_core::synthetic::generate(&laser_core::synthetic::SyntheticConfig::planted(120, 60, 4, 0.1, 1.0, 2))
        .unwrap();
    let cfg = WalkConfig {
        seed: 9,
        ..WalkConfig::default()
    };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                let g = build_hypergraph(&data.matrix, cfg.l_order).unwrap();
                (g.debug_dump(), random_walk(&g, &cfg).unwrap())
            })
    };
    assert_eq!(run(1), run(4));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn neighbors_match_bipartite_distance(m in arb_matrix(), l in 2usize..9) {
        for u in 0..m.n_users() {
            prop_assert_eq!(reachable_neighbors(&m, u, l).unwrap(), oracle_neighbors(&m, u, l));
        }
    }

    #[test]
    fn membership_is_reflexive_and_symmetric(m in arb_matrix(), l in 2usize..9) {
        let g = build_hypergraph(&m, l).unwrap();
        for i in 0..m.n_users() {
            prop_assert!(g.edge(i).contains(&(i as u32)));
            for &j in g.edge(i) {
                prop_assert!(g.edge(j as usize).contains(&(i as u32)));
            }
        }
    }

    #[test]
    fn weights_match_definition(m in arb_matrix(), l in 2usize..7) {
        let g = build_hypergraph(&m, l).unwrap();
        for e in 0..m.n_users() {
            let members: Vec<usize> = g.edge(e).iter().map(|&v| v as usize).collect();
            for (k, &j) in members.iter().enumerate() {
                let w = g.edge_weights(e)[k];
                prop_assert!(w > 0.0);
                prop_assert!((w - oracle_weight(&m, &members, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn walk_steps_stay_inside_hyperedges(m in arb_matrix(), seed in any::<u64>()) {
        let g = build_hypergraph(&m, 4).unwrap();
        let cfg = WalkConfig { repetition: 2, depth: 6, l_order: 4, seed };
        let corpus = random_walk(&g, &cfg).unwrap();
        for s in &corpus.sequences {
            for w in s.windows(2) {
                let shared: BTreeSet<u32> = g.edges_of(w[0] as usize).iter().copied()
                    .filter(|&e| g.edge(e as usize).contains(&w[1]))
                    .collect();
                prop_assert!(!shared.is_empty(), "{} -> {}", w[0], w[1]);
            }
        }
    }
}
