//! The `laser` command line.
//!
//! Stages communicate only through artifact directories under `--out`:
//!
//! | command   | reads                          | writes                   |
//! |-----------|--------------------------------|--------------------------|
//! | `ingest`  | ratings file                   | `ingest-*`, `ingest.ref` |
//! | `embed`   | `ingest.ref`                   | `embed-*`, `embed.ref`   |
//! | `group`   | `ingest.ref` (+ `embed.ref`)   | `group-*`, `group.ref`   |
//! | `train`   | `ingest.ref`, `group.ref`      | `train-*`, `model.ref`   |
//! | `unlearn` | `ingest.ref`, `model.ref`      | `unlearn-*`, `model.ref` |
//! | `eval`    | `ingest.ref`, `model.ref`      | `eval-*`, `eval.ref`     |
//! | `bench`   | `ingest.ref`                   | `bench-*`, `bench.ref`   |

pub mod artifacts;
pub mod bench;
pub mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::embed::{self, EmbeddingMatrix};
use crate::error::{LaserError, Result};
use crate::eval::{self, ReportRow};
use crate::grouping::{self, GroupPlan, GroupSource};
use crate::ingest;
use crate::pipeline::{self, CheckpointChain, RequestGenerator};
use crate::synthetic::{self, SyntheticConfig};

use artifacts::{digest, file_digest, key_values, load_matrix, read_text, save_matrix, write_text, Shape, Store};
pub use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "laser", version, about = "Erasable collaborative filtering")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Configuration file of `key = value` lines.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Artifact root directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set train.epochs=5`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load, filter and split a ratings file.
    Ingest {
        #[arg(long)]
        data: Option<PathBuf>,
        /// movielens_dat, csv or dense_tsv.
        #[arg(long)]
        format: Option<String>,
    },
    /// Train the collaborative user embedding.
    Embed,
    /// Form balanced user groups and their training order.
    Group {
        /// collab_embedding, raw_ratings or random.
        #[arg(long)]
        source: Option<String>,
        #[arg(long = "S")]
        groups: Option<usize>,
    },
    /// Train the checkpoint chain.
    Train {
        /// dmf or nmf.
        #[arg(long)]
        model: Option<String>,
        /// seqtrain or anti_seqtrain.
        #[arg(long)]
        order: Option<String>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Erase users from the current model.
    Unlearn {
        /// `rand@K` or `top@K`, K in percent of users.
        #[arg(long)]
        request: String,
    },
    /// NDCG@10 and HR@10 of the current model.
    Eval,
    /// Run the method × model × S × request grid.
    Bench,
    /// Write a planted-cluster ratings file in MovieLens `::` format.
    Synth {
        #[arg(long, default_value_t = 500)]
        users: usize,
        #[arg(long, default_value_t = 200)]
        items: usize,
        #[arg(long, default_value_t = 8)]
        clusters: usize,
        #[arg(long, default_value_t = 20)]
        ratings_per_user: usize,
        #[arg(long)]
        output: PathBuf,
    },
}

/// Resolve the configuration: file, then `--set` overrides, then the
/// dedicated flags.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.common.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    for kv in &cli.common.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| LaserError::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(seed) = cli.common.seed {
        cfg.seed = seed;
    }
    if let Some(t) = cli.common.threads {
        cfg.threads = t;
    }
    if let Some(out) = &cli.common.out {
        cfg.out = out.clone();
    }
    match &cli.command {
        Command::Ingest { data, format } => {
            if let Some(d) = data {
                cfg.data_path = Some(d.clone());
            }
            if let Some(f) = format {
                cfg.data_format = f.parse()?;
            }
        }
        Command::Group { source, groups } => {
            if let Some(s) = source {
                cfg.source = s.parse()?;
            }
            if let Some(g) = groups {
                cfg.n_groups = *g;
            }
        }
        Command::Train { model, order, epochs } => {
            if let Some(m) = model {
                cfg.model = m.parse()?;
            }
            if let Some(o) = order {
                cfg.order = o.parse()?;
            }
            if let Some(e) = epochs {
                cfg.epochs = *e;
            }
        }
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Execute a parsed command line; returns the lines to print.
pub fn run(cli: Cli) -> Result<Vec<String>> {
    let cfg = resolve_config(&cli)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| LaserError::Config(format!("thread pool: {e}")))?;
    pool.install(|| dispatch(&cli.command, &cfg))
}

fn dispatch(command: &Command, cfg: &RunConfig) -> Result<Vec<String>> {
    let store = Store::new(&cfg.out);
    fs::create_dir_all(store.root()).map_err(|e| LaserError::io(store.root(), e))?;
    match command {
        Command::Ingest { .. } => cmd_ingest(cfg, &store),
        Command::Embed => cmd_embed(cfg, &store),
        Command::Group { .. } => cmd_group(cfg, &store),
        Command::Train { .. } => cmd_train(cfg, &store),
        Command::Unlearn { request } => cmd_unlearn(cfg, &store, request),
        Command::Eval => cmd_eval(cfg, &store),
        Command::Bench => cmd_bench(cfg, &store),
        Command::Synth {
            users,
            items,
            clusters,
            ratings_per_user,
            output,
        } => cmd_synth(cfg, *users, *items, *clusters, *ratings_per_user, output),
    }
}

fn dir_name(dir: &Path) -> String {
    dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

struct Ingested {
    dir: PathBuf,
    shape: Shape,
    train: ingest::InteractionMatrix,
    test: ingest::InteractionMatrix,
}

fn load_ingested(store: &Store) -> Result<Ingested> {
    let dir = store.get_ref("ingest", "ingest")?;
    let shape = Shape::from_text(&read_text(&dir.join("shape.txt"), "ingest")?)?;
    Ok(Ingested {
        train: load_matrix(&dir.join("train.tsv"), shape, "ingest")?,
        test: load_matrix(&dir.join("test.tsv"), shape, "ingest")?,
        shape,
        dir,
    })
}

pub fn cmd_ingest(cfg: &RunConfig, store: &Store) -> Result<Vec<String>> {
    let path = cfg
        .data_path
        .as_ref()
        .ok_or_else(|| LaserError::Config("no dataset given (use --data or data.path)".into()))?;
    if !path.exists() {
        return Err(LaserError::io(path, std::io::Error::from(std::io::ErrorKind::NotFound)));
    }
    let mut parts = cfg.subset(&["data"]);
    parts.push(format!("input={}", file_digest(path)?));
    let dir = store.create("ingest", &digest(&parts))?;

    let raw = ingest::load_ratings(path, cfg.data_format)?;
    let matrix = ingest::build_matrix(&raw, cfg.min_interactions)?;
    let (train, test) = ingest::split(&matrix, cfg.split_spec())?;
    let shape = Shape::of(&matrix);
    write_text(&dir.join("shape.txt"), &shape.to_text())?;
    save_matrix(&dir.join("train.tsv"), &train)?;
    save_matrix(&dir.join("test.tsv"), &test)?;
    write_text(&dir.join("users.txt"), &lines(matrix.user_labels()))?;
    write_text(&dir.join("items.txt"), &lines(matrix.item_labels()))?;
    let summary = format!(
        "users={}\nitems={}\nratings={}\nsparsity_percent={:.3}\ntrain={}\ntest={}\n",
        matrix.n_users(),
        matrix.n_items(),
        matrix.n_entries(),
        100.0 * matrix.sparsity(),
        train.n_entries(),
        test.n_entries()
    );
    write_text(&dir.join("summary.txt"), &summary)?;
    store.set_ref("ingest", &dir)?;
    let mut out = vec![format!("ingest: {}", dir.display())];
    out.extend(summary.lines().map(String::from));
    Ok(out)
}

fn lines(items: &[String]) -> String {
    let mut s = items.join("\n");
    s.push('\n');
    s
}

pub fn cmd_embed(cfg: &RunConfig, store: &Store) -> Result<Vec<String>> {
    let data = load_ingested(store)?;
    let mut parts = cfg.subset(&["walk", "embed"]);
    parts.push(format!("ingest={}", dir_name(&data.dir)));
    let dir = store.create("embed", &digest(&parts))?;
    let emb = embed::collab_embedding(&data.train, &cfg.walk_config(), &cfg.embed_config())?;
    let path = dir.join("embedding.bin");
    fs::write(&path, emb.to_bytes()).map_err(|e| LaserError::io(&path, e))?;
    store.set_ref("embed", &dir)?;
    Ok(vec![format!("embed: {} ({} x {})", dir.display(), emb.n_users(), emb.dim())])
}

fn load_embedding(store: &Store) -> Result<(PathBuf, EmbeddingMatrix)> {
    let dir = store.get_ref("embed", "embed")?;
    let path = dir.join("embedding.bin");
    if !path.exists() {
        return Err(LaserError::MissingArtifact { path, command: "embed" });
    }
    let bytes = fs::read(&path).map_err(|e| LaserError::io(&path, e))?;
    Ok((dir, EmbeddingMatrix::from_bytes(&bytes)?))
}

pub fn cmd_group(cfg: &RunConfig, store: &Store) -> Result<Vec<String>> {
    let data = load_ingested(store)?;
    let mut parts = cfg.subset(&["group"]);
    parts.push(format!("ingest={}", dir_name(&data.dir)));
    let points = match cfg.source {
        GroupSource::CollabEmbedding => {
            let (dir, emb) = load_embedding(store)?;
            parts.push(format!("embed={}", dir_name(&dir)));
            emb.vectors
        }
        GroupSource::RawRatings | GroupSource::Random => grouping::rating_points(&data.train),
    };
    let plan = grouping::make_plan(&points, &cfg.cluster_config())?;
    let dir = store.create("group", &digest(&parts))?;
    write_text(&dir.join("plan.txt"), &plan.to_text())?;
    write_text(&dir.join("source.txt"), &format!("source={}\n", cfg.source.as_str()))?;
    store.set_ref("group", &dir)?;
    let sizes = plan.group_sizes();
    Ok(vec![
        format!("group: {}", dir.display()),
        format!("sizes={}", sizes.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(",")),
        format!("train_order={}", plan.train_order.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(",")),
    ])
}

/// Method label of a LASER variant by grouping source.
pub fn method_name(source: GroupSource) -> &'static str {
    match source {
        GroupSource::CollabEmbedding => "laser_cbkm",
        GroupSource::RawRatings => "laser_bkm",
        GroupSource::Random => "laser_rand",
    }
}

pub fn cmd_train(cfg: &RunConfig, store: &Store) -> Result<Vec<String>> {
    let data = load_ingested(store)?;
    let gdir = store.get_ref("group", "group")?;
    let plan = GroupPlan::from_text(&read_text(&gdir.join("plan.txt"), "group")?)?;
    let source: GroupSource = key_values(&read_text(&gdir.join("source.txt"), "group")?)
        .into_iter()
        .find(|(k, _)| k == "source")
        .map(|(_, v)| v)
        .ok_or_else(|| LaserError::Format("group source missing".into()))?
        .parse()?;
    let mut parts = cfg.subset(&["model", "train"]);
    parts.push(format!("ingest={}", dir_name(&data.dir)));
    parts.push(format!("group={}", dir_name(&gdir)));
    let dir = store.create("train", &digest(&parts))?;
    let start = Instant::now();
    let chain = pipeline::learn(&data.train, &plan, cfg.model, &cfg.train_config(), cfg.order, &dir.join("chain"))?;
    let seconds = start.elapsed().as_secs_f64();
    save_matrix(&dir.join("data.tsv"), &data.train)?;
    let info = format!(
        "method={}\nmodel={}\nS={}\nrequest_kind=none\nK=0\n",
        method_name(source),
        cfg.model.as_str(),
        plan.n_groups
    );
    write_text(&dir.join("info.txt"), &info)?;
    write_text(&dir.join("timing.txt"), &format!("seconds={seconds}\n"))?;
    store.set_ref("model", &dir)?;
    Ok(vec![
        format!("train: {}", dir.display()),
        format!("checkpoints={} epochs_per_group={}", chain.len(), chain.epochs_per_group),
        format!("seconds={seconds:.3}"),
    ])
}

struct ModelArtifact {
    dir: PathBuf,
    chain: CheckpointChain,
    data: ingest::InteractionMatrix,
    info: Vec<(String, String)>,
    seconds: f64,
}

fn load_model(store: &Store, shape: Shape) -> Result<ModelArtifact> {
    let dir = store.get_ref("model", "train")?;
    let chain = CheckpointChain::load(&dir.join("chain").join(pipeline::MANIFEST_NAME))?;
    let data = load_matrix(&dir.join("data.tsv"), shape, "train")?;
    let info = key_values(&read_text(&dir.join("info.txt"), "train")?);
    let seconds = key_values(&read_text(&dir.join("timing.txt"), "train")?)
        .into_iter()
        .find(|(k, _)| k == "seconds")
        .and_then(|(_, v)| v.parse().ok())
        .unwrap_or(f64::NAN);
    Ok(ModelArtifact {
        dir,
        chain,
        data,
        info,
        seconds,
    })
}

fn info_value<'a>(info: &'a [(String, String)], key: &str) -> &'a str {
    info.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str()).unwrap_or("")
}

pub fn cmd_unlearn(cfg: &RunConfig, store: &Store, request: &str) -> Result<Vec<String>> {
    let shape_dir = store.get_ref("ingest", "ingest")?;
    let shape = Shape::from_text(&read_text(&shape_dir.join("shape.txt"), "ingest")?)?;
    let model = load_model(store, shape)?;
    let mut gen: RequestGenerator = request.parse()?;
    gen.seed = cfg.seed;
    let req = pipeline::generate_request(&model.data, &gen)?;

    let parts = vec![
        format!("model={}", dir_name(&model.dir)),
        format!("request={request}"),
        format!("run.seed={}", cfg.seed),
    ];
    let dir = store.create("unlearn", &digest(&parts))?;
    let mut chain = model.chain.copy_to(&dir.join("chain"))?;
    let outcome = pipeline::unlearn(&mut chain, &model.data, &req)?;
    save_matrix(&dir.join("data.tsv"), &outcome.edited)?;

    let labels = fs::read_to_string(shape_dir.join("users.txt")).unwrap_or_default();
    let labels: Vec<&str> = labels.lines().collect();
    let mut listing = String::new();
    for &u in req.users() {
        listing.push_str(&format!("{u}\t{}\n", labels.get(u).copied().unwrap_or("")));
    }
    write_text(&dir.join("request.txt"), &listing)?;
    let info = format!(
        "method={}\nmodel={}\nS={}\nrequest_kind={}\nK={}\n",
        info_value(&model.info, "method"),
        info_value(&model.info, "model"),
        chain.plan.n_groups,
        gen.kind.as_str(),
        gen.k_percent
    );
    write_text(&dir.join("info.txt"), &info)?;
    let seconds = outcome.elapsed.as_secs_f64();
    write_text(&dir.join("timing.txt"), &format!("seconds={seconds}\n"))?;
    store.set_ref("model", &dir)?;
    Ok(vec![
        format!("unlearn: {}", dir.display()),
        format!(
            "erased_users={} position={} groups_retrained={}",
            req.len(),
            outcome.position,
            outcome.groups_retrained
        ),
        format!("seconds={seconds:.3}"),
    ])
}

pub fn cmd_eval(cfg: &RunConfig, store: &Store) -> Result<Vec<String>> {
    let data = load_ingested(store)?;
    let model = load_model(store, data.shape)?;
    let mut parts = cfg.subset(&["eval"]);
    parts.push(format!("model={}", dir_name(&model.dir)));
    parts.push(format!("ingest={}", dir_name(&data.dir)));
    let dir = store.create("eval", &digest(&parts))?;

    let params = model.chain.served_model()?;
    let test = bench::live_test(&model.data, &data.test);
    let m = eval::ndcg_hr_at_10(&params, &model.data, &test, &cfg.rank_config())?;
    let row = ReportRow {
        method: info_value(&model.info, "method").to_string(),
        model: info_value(&model.info, "model").to_string(),
        s: info_value(&model.info, "S").parse().unwrap_or(0),
        request_kind: info_value(&model.info, "request_kind").to_string(),
        k: info_value(&model.info, "K").parse().unwrap_or(0.0),
        ndcg10: m.ndcg,
        hr10: m.hr,
        seconds: model.seconds,
        seed: cfg.seed,
    };
    let path = dir.join("metrics.csv");
    let file = fs::File::create(&path).map_err(|e| LaserError::io(&path, e))?;
    eval::write_report(file, std::slice::from_ref(&row))?;
    store.set_ref("eval", &dir)?;
    Ok(vec![
        format!("eval: {}", path.display()),
        format!(
            "ndcg@{c}={:.4} hr@{c}={:.4} tests={} reduced_pool={}",
            m.ndcg,
            m.hr,
            m.n_tests,
            m.reduced_pool,
            c = cfg.eval_cutoff
        ),
    ])
}

pub fn cmd_bench(cfg: &RunConfig, store: &Store) -> Result<Vec<String>> {
    let data = load_ingested(store)?;
    let mut parts = cfg.subset(&["walk", "embed", "group", "train", "eval", "bench"]);
    parts.push(format!("ingest={}", dir_name(&data.dir)));
    let dir = store.create("bench", &digest(&parts))?;
    let work = dir.join("work");
    let rows = bench::run(cfg, &data.train, &data.test, &work)?;
    fs::remove_dir_all(&work).map_err(|e| LaserError::io(&work, e))?;
    let path = dir.join("report.csv");
    let file = fs::File::create(&path).map_err(|e| LaserError::io(&path, e))?;
    eval::write_report(file, &rows)?;
    store.set_ref("bench", &dir)?;
    Ok(vec![format!("bench: {} ({} rows)", path.display(), rows.len())])
}

pub fn cmd_synth(
    cfg: &RunConfig,
    users: usize,
    items: usize,
    clusters: usize,
    ratings_per_user: usize,
    output: &Path,
) -> Result<Vec<String>> {
    let mut sc = SyntheticConfig::planted(users, items, clusters, 0.1, 1.0, cfg.seed);
    sc.ratings_per_user = ratings_per_user;
    let data = synthetic::generate(&sc)?;
    let mut text = String::new();
    for (u, i, r) in data.matrix.entries() {
        text.push_str(&format!("{}::{}::{}::0\n", u + 1, i + 1, r));
    }
    write_text(output, &text)?;
    Ok(vec![format!(
        "synth: {} ({} users, {} ratings)",
        output.display(),
        data.matrix.active_users().len(),
        data.matrix.n_entries()
    )])
}

/// Parse `args`, run, print the result; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
