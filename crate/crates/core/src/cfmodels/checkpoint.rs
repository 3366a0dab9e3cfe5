//! Versioned binary snapshot of parameters plus optimizer state.
//!
//! Layout (little-endian): `"LSCK"`, version u32, model kind u32, users u64,
//! items u64, epochs done u64, seed u64, Adam step u64, learning rate,
//! β1, β2, ε (f64), tensor count u32, then per tensor rows u64 and cols u64,
//! then all parameter data, all first moments and all second moments, each
//! tensor row-major f64.

use std::fs;
use std::path::Path;

use super::{ModelKind, ModelParams, OptimizerState};
use crate::binio::{Reader, Writer};
use crate::error::{LaserError, Result};
use crate::linalg::DenseMatrix;

const MAGIC: &[u8; 4] = b"LSCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub optimizer: OptimizerState,
    pub epochs_done: u64,
    pub seed: u64,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let p = &self.params;
        let o = &self.optimizer;
        let mut w = Writer::default();
        w.bytes(MAGIC);
        w.u32(CHECKPOINT_VERSION);
        w.u32(p.kind.code());
        w.u64(p.n_users as u64);
        w.u64(p.n_items as u64);
        w.u64(self.epochs_done);
        w.u64(self.seed);
        w.u64(o.step);
        w.f64(o.learning_rate);
        w.f64(o.beta1);
        w.f64(o.beta2);
        w.f64(o.epsilon);
        w.u32(p.tensors.len() as u32);
        for t in &p.tensors {
            w.u64(t.rows() as u64);
            w.u64(t.cols() as u64);
        }
        for group in [&p.tensors, &o.first_moment, &o.second_moment] {
            for t in group.iter() {
                w.f64s(t.as_slice());
            }
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.magic(MAGIC)?;
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(LaserError::Format(format!(
                "checkpoint version {version} is not supported (expected {CHECKPOINT_VERSION})"
            )));
        }
        let kind = ModelKind::from_code(r.u32()?)?;
        let n_users = r.usize()?;
        let n_items = r.usize()?;
        let epochs_done = r.u64()?;
        let seed = r.u64()?;
        let step = r.u64()?;
        let learning_rate = r.f64()?;
        let beta1 = r.f64()?;
        let beta2 = r.f64()?;
        let epsilon = r.f64()?;
        let count = r.u32()? as usize;
        let expected = ModelParams::shapes(kind, n_users, n_items);
        if count != expected.len() {
            return Err(LaserError::Format(format!(
                "{count} tensors in checkpoint, {kind:?} expects {}",
                expected.len()
            )));
        }
        let mut shapes = Vec::with_capacity(count);
        for &want in &expected {
            let shape = (r.usize()?, r.usize()?);
            if shape != want {
                return Err(LaserError::Format(format!(
                    "tensor shape {shape:?} does not match architecture {want:?}"
                )));
            }
            shapes.push(shape);
        }
        let read_group = |r: &mut Reader| -> Result<Vec<DenseMatrix>> {
            shapes
                .iter()
                .map(|&(rows, cols)| Ok(DenseMatrix::from_vec(rows, cols, r.f64s(rows * cols)?)))
                .collect()
        };
        let tensors = read_group(&mut r)?;
        let first_moment = read_group(&mut r)?;
        let second_moment = read_group(&mut r)?;
        r.finish()?;
        Ok(Checkpoint {
            params: ModelParams {
                kind,
                n_users,
                n_items,
                tensors,
            },
            optimizer: OptimizerState {
                first_moment,
                second_moment,
                step,
                learning_rate,
                beta1,
                beta2,
                epsilon,
            },
            epochs_done,
            seed,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| LaserError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| LaserError::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
