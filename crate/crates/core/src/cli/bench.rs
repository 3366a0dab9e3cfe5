//! The experiment grid: every method, model, group count, request kind and
//! size, over a range of seeds.

use std::path::Path;
use std::time::Instant;

use crate::cfmodels::{ModelKind, ModelParams};
use crate::embed;
use crate::error::Result;
use crate::eval::{self, RankMetrics, ReportRow};
use crate::grouping::{self, ClusterConfig, GroupPlan, GroupSource};
use crate::ingest::InteractionMatrix;
use crate::pipeline::{self, CheckpointChain, CsisaEnsemble, RequestGenerator, RequestKind, UnlearnRequest};

use super::config::RunConfig;

/// Test interactions of users that still have training data.
pub fn live_test(train: &InteractionMatrix, test: &InteractionMatrix) -> InteractionMatrix {
    test.retain_users(|u| train.degree(u) > 0)
}

fn metrics(model: &ModelParams, train: &InteractionMatrix, test: &InteractionMatrix, cfg: &RunConfig, seed: u64) -> Result<RankMetrics> {
    let rank = eval::RankEvalConfig {
        seed,
        ..cfg.rank_config()
    };
    eval::ndcg_hr_at_10(model, train, &live_test(train, test), &rank)
}

struct Row<'a> {
    method: &'a str,
    model: ModelKind,
    s: usize,
    request: Option<(RequestKind, f64)>,
    seed: u64,
}

impl Row<'_> {
    fn finish(self, m: RankMetrics, seconds: f64) -> ReportRow {
        let (kind, k) = match self.request {
            Some((kind, k)) => (kind.as_str().to_string(), k),
            None => ("none".to_string(), 0.0),
        };
        ReportRow {
            method: self.method.to_string(),
            model: self.model.as_str().to_string(),
            s: self.s,
            request_kind: kind,
            k,
            ndcg10: m.ndcg,
            hr10: m.hr,
            seconds,
            seed: self.seed,
        }
    }
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let start = Instant::now();
    let out = f()?;
    Ok((out, start.elapsed().as_secs_f64()))
}

/// Run the grid. Rows with request kind `none` describe the learning
/// phase; the rest describe the model after unlearning.
pub fn run(cfg: &RunConfig, train: &InteractionMatrix, test: &InteractionMatrix, work: &Path) -> Result<Vec<ReportRow>> {
    let mut rows = Vec::new();
    let runs = cfg.bench_timing_runs;
    for si in 0..cfg.bench_seeds {
        let seed = cfg.seed.wrapping_add(si as u64);
        let c = RunConfig { seed, ..cfg.clone() };
        let emb = embed::collab_embedding(train, &c.walk_config(), &c.embed_config())?;

        let random = eval::rank_metrics(
            eval::random_scorer(seed),
            train,
            &live_test(train, test),
            &eval::RankEvalConfig {
                seed,
                ..c.rank_config()
            },
        )?;
        for &model in &c.bench_models {
            rows.push(
                Row {
                    method: "random",
                    model,
                    s: 1,
                    request: None,
                    seed,
                }
                .finish(random, 0.0),
            );
        }

        for &model in &c.bench_models {
            let tc = c.train_config();
            let (full, secs) = timed(|| pipeline::train_single(train, model, &tc))?;
            let m = metrics(&full, train, test, &c, seed)?;
            rows.push(Row { method: "retrain", model, s: 1, request: None, seed }.finish(m, secs));
            let requests = requests(&c, train, seed)?;
            for (kind, k, req) in &requests {
                let edited = train.retain_users(|u| !req.contains(u));
                let (secs, model_after) = eval::median_seconds(runs, || Ok(()), |()| pipeline::train_single(&edited, model, &tc))?;
                let m = metrics(&model_after, &edited, test, &c, seed)?;
                rows.push(
                    Row {
                        method: "retrain",
                        model,
                        s: 1,
                        request: Some((*kind, *k)),
                        seed,
                    }
                    .finish(m, secs),
                );
            }

            for &s in &c.bench_groups {
                let plans = [
                    ("laser_cbkm", plan(&emb.vectors, s, GroupSource::CollabEmbedding, seed)?),
                    ("laser_rand", plan(&emb.vectors, s, GroupSource::Random, seed)?),
                ];
                for (name, p) in &plans {
                    let dir = work.join(format!("{seed}-{}-{s}-{name}", model.as_str()));
                    let (chain, secs) = timed(|| pipeline::learn(train, p, model, &tc, c.order, &dir.join("base")))?;
                    let m = metrics(&chain.served_model()?, train, test, &c, seed)?;
                    rows.push(Row { method: name, model, s, request: None, seed }.finish(m, secs));
                    for (r, (kind, k, req)) in requests.iter().enumerate() {
                        let mut copy = 0;
                        let (secs, (chain, edited)) = eval::median_seconds(
                            runs,
                            || {
                                copy += 1;
                                chain.copy_to(&dir.join(format!("req{r}-{copy}")))
                            },
                            |mut ch: CheckpointChain| {
                                let out = pipeline::unlearn(&mut ch, train, req)?;
                                Ok((ch, out.edited))
                            },
                        )?;
                        let m = metrics(&chain.served_model()?, &edited, test, &c, seed)?;
                        rows.push(
                            Row {
                                method: name,
                                model,
                                s,
                                request: Some((*kind, *k)),
                                seed,
                            }
                            .finish(m, secs),
                        );
                    }
                }

                let p = &plans[0].1;
                let (ens, secs) = timed(|| CsisaEnsemble::train(train, p, model, &tc))?;
                let m = metrics(&ens.merge(train), train, test, &c, seed)?;
                rows.push(Row { method: "csisa", model, s, request: None, seed }.finish(m, secs));
                for (kind, k, req) in &requests {
                    let (secs, (ens, edited)) = eval::median_seconds(
                        runs,
                        || Ok(ens.clone()),
                        |mut e: CsisaEnsemble| {
                            let (edited, _) = e.unlearn(train, req)?;
                            Ok((e, edited))
                        },
                    )?;
                    let m = metrics(&ens.merge(&edited), &edited, test, &c, seed)?;
                    rows.push(
                        Row {
                            method: "csisa",
                            model,
                            s,
                            request: Some((*kind, *k)),
                            seed,
                        }
                        .finish(m, secs),
                    );
                }
            }
        }
    }
    Ok(rows)
}

fn plan(points: &crate::linalg::DenseMatrix, s: usize, source: GroupSource, seed: u64) -> Result<GroupPlan> {
    let cc = ClusterConfig {
        source,
        ..ClusterConfig::new(s, seed)
    };
    grouping::make_plan(points, &cc)
}

fn requests(c: &RunConfig, train: &InteractionMatrix, seed: u64) -> Result<Vec<(RequestKind, f64, UnlearnRequest)>> {
    let mut out = Vec::new();
    for &kind in &c.bench_requests {
        for &k in &c.bench_k {
            let req = pipeline::generate_request(
                train,
                &RequestGenerator {
                    kind,
                    k_percent: k,
                    seed,
                },
            )?;
            out.push((kind, k, req));
        }
    }
    Ok(out)
}
