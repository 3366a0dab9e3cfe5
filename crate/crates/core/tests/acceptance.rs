//! Acceptance run. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.
//!
//! Criteria that need MovieLens 1M read it from `LASER_ML1M` or
//! `data/ml-1m/ratings.dat` under the workspace root. When the file is
//! absent they are reported as FAIL with the reason; such failures only
//! affect the exit status when `LASER_ACCEPT_STRICT` is set.
//!
//! Numeric arguments select criteria: `cargo test --test acceptance -- 2 5`.

mod common;

use std::any::Any;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use laser_core::cfmodels::{ModelKind, TrainConfig};
use laser_core::cli::bench;
use laser_core::cli::config::RunConfig;
use laser_core::embed::{self, EmbedConfig};
use laser_core::eval::{self, CostProfile, RankEvalConfig, UnlearnScenario};
use laser_core::grouping::{self, ClusterConfig, GroupPlan};
use laser_core::hypergraph::WalkConfig;
use laser_core::ingest::{self, InteractionMatrix, RatingFormat, SplitSpec};
use laser_core::linalg::DenseMatrix;
use laser_core::pipeline::{self, params_bit_identical, RequestGenerator, RequestKind, TrainOrder, UnlearnRequest};
use laser_core::rng::rng_for;
use laser_core::synthetic::{self, SyntheticConfig};
use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};

enum Outcome {
    Pass(String),
    Fail(String),
    /// Input data is not available in this environment.
    Missing(String),
}

use Outcome::{Fail, Missing, Pass};

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Pass(detail)
    } else {
        Fail(detail)
    }
}

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

const fn crit(id: u32, name: &'static str, budget_secs: u64, run: fn() -> Outcome) -> Criterion {
    Criterion {
        id,
        name,
        budget: Duration::from_secs(budget_secs),
        run,
    }
}

const CRITERIA: &[Criterion] = &[
    crit(1, "ML-1M statistics", 30, c1_dataset_fidelity),
    crit(2, "unlearn equals retrain bit for bit", 300, c2_exactness),
    crit(3, "rollback speed", 600, c3_efficiency),
    crit(4, "expected retraining cost", 60, c4_expected_cost),
    crit(5, "utility identity", 1, c5_identity),
    crit(6, "group balance", 120, c6_balance),
    crit(7, "gradient check", 30, c7_gradients),
    crit(8, "curriculum validity", 900, c8_curriculum),
    crit(9, "utility ordering on ML-1M", 3600, c9_utility_ordering),
    crit(10, "deterministic artifacts", 600, c10_determinism),
];

fn panic_text(p: Box<dyn Any + Send>) -> String {
    p.downcast_ref::<String>()
        .cloned()
        .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "panic".into())
}

fn main() {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let strict = std::env::var_os("LASER_ACCEPT_STRICT").is_some();
    let (mut passed, mut failed, mut missing) = (0, 0, 0);
    for c in CRITERIA.iter().filter(|c| selected.is_empty() || selected.contains(&c.id)) {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(c.run).unwrap_or_else(|p| Fail(format!("panicked: {}", panic_text(p))));
        let took = start.elapsed();
        let outcome = match outcome {
            Pass(d) if took > c.budget => Fail(format!("{d}; over budget")),
            o => o,
        };
        let (tag, detail) = match outcome {
            Pass(d) => {
                passed += 1;
                ("PASS", d)
            }
            Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Missing(d) => {
                missing += 1;
                ("FAIL", d)
            }
        };
        println!(
            "{tag} [{:>2}] {:<36} {:>8.1}s / {:>4}s  {detail}",
            c.id,
            c.name,
            took.as_secs_f64(),
            c.budget.as_secs()
        );
    }
    println!("acceptance: {passed} passed, {failed} failed, {missing} failed for missing input data");
    if missing > 0 && !strict {
        println!("acceptance: missing-data failures do not set the exit status (set LASER_ACCEPT_STRICT=1 to count them)");
    }
    if failed > 0 || (strict && missing > 0) {
        std::process::exit(1);
    }
}

fn workspace_root() -> PathBuf {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    root.canonicalize().unwrap_or(root)
}

fn ml1m_path() -> std::result::Result<PathBuf, Outcome> {
    let path = std::env::var_os("LASER_ML1M")
        .map(PathBuf::from)
        .unwrap_or_else(|| workspace_root().join("data/ml-1m/ratings.dat"));
    if path.is_file() {
        Ok(path)
    } else {
        Err(Missing(format!("MovieLens 1M not found at {} (set LASER_ML1M)", path.display())))
    }
}

fn c1_dataset_fidelity() -> Outcome {
    let path = match ml1m_path() {
        Ok(p) => p,
        Err(o) => return o,
    };
    let raw = ingest::load_ratings(&path, RatingFormat::MovielensDat).unwrap();
    let m = ingest::build_matrix(&raw, 5).unwrap();
    let users = m.active_users().len();
    let sparsity = 100.0 * m.sparsity();
    let ok = users == 6040
        && m.n_users() == 6040
        && m.n_items() == 3706
        && m.n_entries() == 1_000_209
        && (sparsity - 95.532).abs() <= 0.001;
    check(
        ok,
        format!(
            "users {users}, items {}, ratings {}, sparsity {sparsity:.4}%",
            m.n_items(),
            m.n_entries()
        ),
    )
}

fn planted_split(sc: &SyntheticConfig) -> (synthetic::SyntheticData, InteractionMatrix, InteractionMatrix) {
    let data = synthetic::generate(sc).unwrap();
    let (train, test) = ingest::split(&data.matrix, SplitSpec { train_fraction: 0.9, seed: sc.seed }).unwrap();
    (data, train, test)
}

fn collab_points(train: &InteractionMatrix, seed: u64) -> DenseMatrix {
    let walk = WalkConfig {
        seed,
        ..WalkConfig::default()
    };
    let emb = EmbedConfig {
        seed,
        ..EmbedConfig::default()
    };
    embed::collab_embedding(train, &walk, &emb).unwrap().vectors
}

fn collab_plan(points: &DenseMatrix, s: usize, seed: u64) -> GroupPlan {
    grouping::make_plan(points, &ClusterConfig::new(s, seed)).unwrap()
}

fn c2_exactness() -> Outcome {
    let (_, train, _) = planted_split(&SyntheticConfig::planted(500, 200, 8, 0.1, 1.0, 21));
    let points = collab_points(&train, 21);
    let cfg = TrainConfig {
        total_epochs: 3,
        seed: 21,
        ..TrainConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let mut checked = 0;
    for s in [2, 4, 8] {
        let plan = collab_plan(&points, s, 21);
        for kind in [ModelKind::Dmf, ModelKind::Nmf] {
            let tag = format!("S={s} {}", kind.as_str());
            let base = dir.path().join(&tag);
            let mut chain = pipeline::learn(&train, &plan, kind, &cfg, TrainOrder::SeqTrain, &base.join("chain")).unwrap();
            // a single user from the middle of the chain, then a rand@5 batch
            let visit = chain.visit_order();
            let single = UnlearnRequest::new([plan.members(visit[s / 2])[0]]).unwrap();
            let step = pipeline::unlearn(&mut chain, &train, &single).unwrap();
            let fresh = pipeline::retrain_baseline(&step.edited, &plan, kind, &cfg, TrainOrder::SeqTrain, &base.join("r1")).unwrap();
            if !params_bit_identical(&chain.served_model().unwrap(), &fresh) {
                return Fail(format!("{tag}: single-user erasure differs from retraining"));
            }
            let batch = pipeline::generate_request(
                &step.edited,
                &RequestGenerator {
                    kind: RequestKind::Random,
                    k_percent: 5.0,
                    seed: 21,
                },
            )
            .unwrap();
            let step2 = pipeline::unlearn(&mut chain, &step.edited, &batch).unwrap();
            let fresh = pipeline::retrain_baseline(&step2.edited, &plan, kind, &cfg, TrainOrder::SeqTrain, &base.join("r2")).unwrap();
            if !params_bit_identical(&chain.served_model().unwrap(), &fresh) {
                return Fail(format!("{tag}: rand@5 erasure differs from retraining"));
            }
            checked += 2;
        }
    }
    Pass(format!("{checked} erasures over S=2,4,8 x DMF,NMF identical to retraining"))
}

fn c3_efficiency() -> Outcome {
    let (_, train, _) = planted_split(&SyntheticConfig::planted(1000, 300, 8, 0.1, 1.0, 31));
    let points = collab_points(&train, 31);
    let plan = collab_plan(&points, 8, 31);
    let last = *plan.train_order.last().unwrap();
    let request = UnlearnRequest::new([plan.members(last)[0]]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut ok = true;
    let mut detail = String::new();
    for kind in [ModelKind::Dmf, ModelKind::Nmf] {
        let t = eval::time_unlearn(&UnlearnScenario {
            train: &train,
            plan: &plan,
            kind,
            config: TrainConfig {
                total_epochs: 5,
                seed: 31,
                ..TrainConfig::default()
            },
            order: TrainOrder::SeqTrain,
            request: &request,
            runs: 5,
            work_dir: &dir.path().join(kind.as_str()),
        })
        .unwrap();
        let speed = t.laser / t.retrain;
        let spread = t.laser.max(t.csisa) / t.laser.min(t.csisa);
        ok &= speed < 0.25 && spread < 2.0;
        let _ = write!(
            detail,
            "{}: laser/retrain {speed:.3}, csisa/laser {:.2} ({:.3}s, {:.3}s, {:.3}s); ",
            kind.as_str(),
            t.csisa / t.laser,
            t.retrain,
            t.csisa,
            t.laser
        );
    }
    check(ok, detail.trim_end_matches("; ").to_string())
}

fn random_costs(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(0.1..10.0)).collect()
}

fn c4_expected_cost() -> Outcome {
    let trials = 100_000;
    let mut rng = rng_for(41, &[]);
    let mut worst_sigmas: f64 = 0.0;
    for k in 0..20 {
        let n = rng.random_range(2..17);
        let p = CostProfile::new(random_costs(&mut rng, n)).unwrap();
        let exact = eval::expected_cost(&p);
        let sigma = (eval::cost_variance(&p) / trials as f64).sqrt();
        let mc = eval::monte_carlo_cost(&p, trials, k).unwrap();
        worst_sigmas = worst_sigmas.max((mc - exact).abs() / sigma);
    }
    let (n, z) = (8, 100.0);
    let balanced = CostProfile::new(vec![z / n as f64; n]).unwrap();
    let best = eval::expected_cost(&balanced);
    let bound_gap = (best - z / 2.0 * (1.0 + 1.0 / n as f64)).abs();
    let mut min_random = f64::INFINITY;
    for _ in 0..1000 {
        let raw = random_costs(&mut rng, n);
        let sum: f64 = raw.iter().sum();
        let p = CostProfile::new(raw.iter().map(|c| c * z / sum).collect()).unwrap();
        min_random = min_random.min(eval::expected_cost(&p));
    }
    check(
        worst_sigmas <= 3.0 && bound_gap < 1e-12 && min_random >= best,
        format!("max |mc-exact| = {worst_sigmas:.2} sigma; bound gap {bound_gap:.1e}; best random {min_random:.4} >= {best:.4}"),
    )
}

fn c5_identity() -> Outcome {
    let mut rng = rng_for(51, &[]);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let s = rng.random_range(1..33);
        let losses: Vec<f64> = (0..s).map(|_| rng.random_range(0.0..5.0)).collect();
        let raw: Vec<f64> = (0..s).map(|_| rng.random::<f64>() + 1e-3).collect();
        let total: f64 = raw.iter().sum();
        let prior: Vec<f64> = raw.iter().map(|p| p / total).collect();
        worst = worst.max(eval::utility_identity_check(&losses, &prior).unwrap().gap);
    }
    let mut uniform_ok = true;
    for s in [1usize, 2, 4, 5, 8, 16] {
        let losses: Vec<f64> = (0..s).map(|_| rng.random_range(0.0..5.0)).collect();
        let c = eval::utility_identity_check(&losses, &vec![1.0 / s as f64; s]).unwrap();
        let u = eval::utility(&losses);
        uniform_ok &= c.covariance == 0.0 && c.rhs == u && (c.lhs - u).abs() < 1e-12;
    }
    check(
        worst < 1e-12 && uniform_ok,
        format!("max gap {worst:.1e} over 1000 draws; uniform prior gives U: {uniform_ok}"),
    )
}

/// Points around `sizes.len()` centers in 16 dimensions.
fn skewed_blobs(sizes: &[usize], seed: u64) -> DenseMatrix {
    let mut rng = rng_for(seed, &[]);
    let wide = Normal::new(0.0, 6.0).unwrap();
    let noise = Normal::new(0.0, 0.5).unwrap();
    let mut rows = Vec::new();
    for &n in sizes {
        let center: Vec<f64> = (0..16).map(|_| wide.sample(&mut rng)).collect();
        for _ in 0..n {
            rows.push(center.iter().map(|c| c + noise.sample(&mut rng)).collect());
        }
    }
    DenseMatrix::from_rows(&rows)
}

fn c6_balance() -> Outcome {
    let mut cases: Vec<(String, DenseMatrix)> = Vec::new();
    for n in [100, 1000, 10_000] {
        let big = n * 7 / 10;
        let rest = (n - big) / 3;
        cases.push((format!("blobs N={n}"), skewed_blobs(&[big, rest, rest, n - big - 2 * rest], n as u64)));
    }
    for n in [137, 500] {
        let (_, train, _) = planted_split(&SyntheticConfig::planted(n, 120, 6, 0.1, 1.0, n as u64));
        cases.push((format!("collab N={n}"), collab_points(&train, 61)));
    }
    let mut worst_spread = 0;
    let mut runs = 0;
    for (name, points) in &cases {
        for s in [2, 4, 8, 16] {
            let plan = collab_plan(points, s, 61);
            let sizes = plan.group_sizes();
            let spread = sizes.iter().max().unwrap() - sizes.iter().min().unwrap();
            if spread > 1 {
                return Fail(format!("{name} S={s}: sizes {sizes:?}"));
            }
            worst_spread = worst_spread.max(spread);
            runs += 1;
        }
    }
    let mut ratios = Vec::new();
    for (name, points) in cases.iter().filter(|(n, _)| n.starts_with("blobs")) {
        let labels = grouping::kmeans(points, 4, 50, 61).unwrap();
        let sizes = grouping::group_sizes(&labels, 4);
        let ratio = *sizes.iter().max().unwrap() as f64 / (*sizes.iter().min().unwrap()).max(1) as f64;
        ratios.push(format!("{name} {ratio:.1}"));
        if ratio <= 2.0 {
            return Fail(format!("plain k-means on {name} is balanced: {sizes:?}"));
        }
    }
    Pass(format!(
        "{runs} plans, max size spread {worst_spread}; k-means max/min: {}",
        ratios.join(", ")
    ))
}

fn c7_gradients() -> Outcome {
    let mut detail = String::new();
    let mut ok = true;
    for kind in [ModelKind::Dmf, ModelKind::Nmf] {
        let (errs, zero_fd) = common::gradient_check(kind, 71, 20);
        let worst = errs.iter().cloned().fold(0.0, f64::max);
        ok &= errs.len() == 20 && worst < 1e-4 && zero_fd < 1e-8;
        let _ = write!(detail, "{} worst rel err {worst:.1e}; ", kind.as_str());
    }
    check(ok, detail.trim_end_matches("; ").to_string())
}

/// Eight planted clusters whose spreads rise from tight to diffuse, with
/// centers close enough that clusters still share popular items.
fn curriculum_data(seed: u64) -> SyntheticConfig {
    let mut sc = SyntheticConfig::planted(400, 600, 8, 0.05, 2.0, seed);
    sc.affinity = 16.0;
    sc.center_scale = 0.5;
    sc
}

/// Four walks per user leave too few co-occurrences at 400 users for the
/// embedding to separate the clusters; a longer walk budget is used here.
fn curriculum_points(train: &InteractionMatrix, seed: u64) -> DenseMatrix {
    let walk = WalkConfig {
        repetition: 100,
        seed,
        ..WalkConfig::default()
    };
    let emb = EmbedConfig {
        seed,
        ..EmbedConfig::default()
    };
    embed::collab_embedding(train, &walk, &emb).unwrap().vectors
}

fn c8_curriculum() -> Outcome {
    let cfg = |seed| TrainConfig {
        seed,
        ..TrainConfig::default()
    };
    let (_, train, test) = planted_split(&curriculum_data(81));
    let plan = collab_plan(&curriculum_points(&train, 81), 8, 81);
    let losses = eval::per_group_loss(&plan, &train, &test, ModelKind::Dmf, &cfg(81)).unwrap();
    let rho = eval::spearman(&plan.cohesion, &losses).unwrap();

    let (mut seq, mut anti) = (0.0, 0.0);
    let dir = tempfile::tempdir().unwrap();
    let seeds = 10;
    for seed in 0..seeds {
        let (_, train, test) = planted_split(&curriculum_data(800 + seed));
        let plan = collab_plan(&curriculum_points(&train, seed), 8, seed);
        for (order, acc) in [(TrainOrder::SeqTrain, &mut seq), (TrainOrder::AntiSeqTrain, &mut anti)] {
            let work = dir.path().join(format!("{seed}-{}", order.as_str()));
            let chain = pipeline::learn(&train, &plan, ModelKind::Dmf, &cfg(seed), order, &work).unwrap();
            let m = eval::ndcg_hr_at_10(&chain.served_model().unwrap(), &train, &test, &RankEvalConfig::new(seed)).unwrap();
            *acc += m.ndcg / seeds as f64;
        }
    }
    check(
        rho < -0.5 && seq >= anti,
        format!("spearman(cohesion, loss) {rho:.3}; mean NDCG@10 seq {seq:.4} vs anti {anti:.4}"),
    )
}

fn c9_utility_ordering() -> Outcome {
    let path = match ml1m_path() {
        Ok(p) => p,
        Err(o) => return o,
    };
    let raw = ingest::load_ratings(&path, RatingFormat::MovielensDat).unwrap();
    let full = ingest::build_matrix(&raw, 5).unwrap();
    let active = full.active_users();
    let mut rng = rng_for(91, &[]);
    let keep: std::collections::BTreeSet<usize> = index::sample(&mut rng, active.len(), active.len() / 5)
        .into_iter()
        .map(|k| active[k])
        .collect();
    let sub = full.retain_users(|u| keep.contains(&u));
    let (train, test) = ingest::split(&sub, SplitSpec::default()).unwrap();

    let cfg = RunConfig {
        bench_groups: vec![4],
        bench_k: vec![5.0],
        bench_requests: vec![RequestKind::Random, RequestKind::Top],
        bench_seeds: 10,
        bench_timing_runs: 1,
        ..RunConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let rows = bench::run(&cfg, &train, &test, dir.path()).unwrap();
    let mean = |method: &str| {
        let v: Vec<f64> = rows
            .iter()
            .filter(|r| r.method == method && (method == "random" || r.request_kind != "none"))
            .map(|r| r.ndcg10)
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let (cbkm, rand, csisa, random) = (mean("laser_cbkm"), mean("laser_rand"), mean("csisa"), mean("random"));
    check(
        cbkm >= rand && rand >= csisa && csisa >= 3.0 * random,
        format!("NDCG@10 L-CBKM {cbkm:.4}, L-Rand {rand:.4}, C-SISA {csisa:.4}, random {random:.4}"),
    )
}

fn laser(out: &Path, args: &[&str]) {
    let o = Command::new(env!("CARGO_BIN_EXE_laser"))
        .args(args)
        .arg("--out")
        .arg(out)
        .args([
            "--set",
            "train.epochs=3",
            "--set",
            "group.S=4",
            "--set",
            "bench.S=2",
            "--set",
            "bench.K=5",
            "--set",
            "bench.timing_runs=1",
        ])
        .output()
        .expect("binary runs");
    assert!(o.status.success(), "laser {args:?}: {}", String::from_utf8_lossy(&o.stderr));
}

fn c10_determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("ratings.dat");
    let data_arg = data.to_str().unwrap();
    laser(&tmp.path().join("synth"), &["synth", "--users", "200", "--items", "120", "--output", data_arg]);
    let run = |root: &Path| {
        laser(root, &["ingest", "--data", data_arg]);
        laser(root, &["embed"]);
        laser(root, &["group"]);
        laser(root, &["train"]);
        laser(root, &["unlearn", "--request", "rand@5"]);
        laser(root, &["eval"]);
        laser(root, &["bench"]);
    };
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run(&a);
    run(&b);
    let (da, db) = (common::tree_digest(&a), common::tree_digest(&b));
    let differing: Vec<&String> = da.keys().filter(|k| da.get(*k) != db.get(*k)).collect();
    check(
        da.len() == db.len() && differing.is_empty(),
        format!("{} artifacts compared, {} differ {:?}", da.len(), differing.len(), differing),
    )
}
