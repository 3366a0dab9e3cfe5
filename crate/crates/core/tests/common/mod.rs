#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use laser_core::cfmodels::{batch_loss, batch_loss_and_grad, init_params, ModelKind, ModelParams, Sample};
use laser_core::ingest::InteractionMatrix;
use laser_core::rng::rng_for;
use laser_core::synthetic::{self, SyntheticConfig};
use rand::Rng;
use sha2::{Digest, Sha256};

/// A model with parameters drawn wider than the default init, so the towers
/// are far from the ReLU kinks and gradients are well above round-off.
pub fn probe_model(kind: ModelKind, seed: u64) -> ModelParams {
    let mut p = init_params(5, 6, kind, seed).unwrap();
    for t in &mut p.tensors {
        t.as_mut_slice().iter_mut().for_each(|x| *x *= 30.0);
    }
    p
}

pub fn probe_batch(seed: u64) -> Vec<Sample> {
    let mut rng = rng_for(seed, &[77]);
    (0..12)
        .map(|k| Sample {
            user: rng.random_range(0..5),
            item: rng.random_range(0..6),
            target: if k % 3 == 0 { 0.0 } else { rng.random_range(1..=5) as f64 / 5.0 },
        })
        .collect()
}

/// Relative errors between the analytic gradient and central differences
/// at `count` random parameters with non-negligible gradient, plus the
/// largest finite-difference magnitude seen at parameters whose analytic
/// gradient is zero.
pub fn gradient_check(kind: ModelKind, seed: u64, count: usize) -> (Vec<f64>, f64) {
    let mut params = probe_model(kind, seed);
    let batch = probe_batch(seed);
    let (_, grads) = batch_loss_and_grad(&params, &batch);
    let mut rng = rng_for(seed, &[78]);
    let h = 1e-6;
    let mut errs = Vec::new();
    let mut zero_fd: f64 = 0.0;
    let mut tries = 0;
    while errs.len() < count {
        tries += 1;
        assert!(tries < 100_000, "too few parameters with signal");
        let t = rng.random_range(0..params.tensors.len());
        let k = rng.random_range(0..params.tensors[t].as_slice().len());
        let analytic = grads[t].as_slice()[k];
        let orig = params.tensors[t].as_slice()[k];
        params.tensors[t].as_mut_slice()[k] = orig + h;
        let up = batch_loss(&params, &batch);
        params.tensors[t].as_mut_slice()[k] = orig - h;
        let down = batch_loss(&params, &batch);
        params.tensors[t].as_mut_slice()[k] = orig;
        let fd = (up - down) / (2.0 * h);
        if analytic.abs() < 1e-6 {
            if analytic == 0.0 {
                zero_fd = zero_fd.max(fd.abs());
            }
            continue;
        }
        errs.push((analytic - fd).abs() / analytic.abs().max(fd.abs()));
    }
    (errs, zero_fd)
}

pub fn planted(n_users: usize, n_items: usize, seed: u64) -> InteractionMatrix {
    synthetic::generate(&SyntheticConfig::planted(n_users, n_items, 8, 0.1, 1.0, seed))
        .unwrap()
        .matrix
}

/// Every file under `root`, hashed, with wall-clock fields removed.
pub fn tree_digest(root: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
                continue;
            }
            let rel = path.strip_prefix(root).unwrap().display().to_string();
            let name = path.file_name().unwrap().to_string_lossy().into_owned();
            let bytes = fs::read(&path).unwrap();
            let bytes = match name.as_str() {
                "timing.txt" => Vec::new(),
                n if n.ends_with(".csv") => mask_seconds(&bytes),
                _ => bytes,
            };
            out.insert(rel, hex::encode(Sha256::digest(&bytes)));
        }
    }
    out
}

fn mask_seconds(csv: &[u8]) -> Vec<u8> {
    let text = String::from_utf8(csv.to_vec()).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "seconds").unwrap();
    let mut out = header.join(",");
    for l in lines {
        let mut f: Vec<&str> = l.split(',').collect();
        f[col] = "-";
        out.push('\n');
        out.push_str(&f.join(","));
    }
    out.into_bytes()
}
