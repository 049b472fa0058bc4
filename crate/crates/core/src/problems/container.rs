//! Binary instance container and its JSON sidecar.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! "ADMM" | u32 version | u32 blocks | u64 dim
//! u8 regularizer kind (0 zero, 1 l1, 2 l1-ball) | f64 theta | f64 radius
//! per block:
//!   u8 storage (0 dense, 1 sparse) | f64 sign | f64 lipschitz | f64 sigma2
//!   u64 rows | u64 cols
//!   dense:  rows·cols f64, row-major
//!   sparse: u64 nnz, then nnz × (u64 row, u64 col, f64 value)
//!   rows f64 target
//! ```

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::linalg::{CsrMatrix, Operator};
use crate::model::{ProblemInstance, QuadraticBlock, ReferenceValue, Regularizer, SmoothBlock, Vector};
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"ADMM";
const VERSION: u32 = 1;

/// Human-readable description written next to every container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceMeta {
    pub family: String,
    pub seed: Option<u64>,
    pub theta: f64,
    pub n_workers: usize,
    pub rows_per_block: usize,
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_var: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nnz: Option<usize>,
    pub lipschitz: f64,
    pub strong_convexity: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_gram_eigenvalue: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceValue>,
}

pub fn write_instance(path: &Path, instance: &ProblemInstance) -> Result<()> {
    let bytes = encode(instance)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_instance(path: &Path) -> Result<ProblemInstance> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut instance = decode(&bytes)?;
    let sidecar = path.with_extension("json");
    if sidecar.exists() {
        instance.reference = read_meta(&sidecar)?.reference;
    }
    Ok(instance)
}

pub fn read_meta(path: &Path) -> Result<InstanceMeta> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Writes `<path>` and its sidecar `<path>.json` (extension replaced).
pub fn write_instance_files(path: &Path, instance: &ProblemInstance, meta: &InstanceMeta) -> Result<()> {
    write_instance(path, instance)?;
    let sidecar = path.with_extension("json");
    let text = serde_json::to_string_pretty(meta)?;
    fs::write(&sidecar, text + "\n").map_err(|e| Error::io(&sidecar, e))
}

/// `inst.bin` → `inst.worker3.bin`.
pub fn shard_path(path: &Path, worker: usize) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.worker{worker}.bin"))
}

/// One single-block container per worker, sharing the regularizer.
pub fn write_shards(path: &Path, instance: &ProblemInstance) -> Result<Vec<PathBuf>> {
    let mut out = Vec::with_capacity(instance.n_workers());
    for (i, block) in instance.blocks().iter().enumerate() {
        let shard = ProblemInstance::new(vec![block.clone()], *instance.regularizer())?;
        let p = shard_path(path, i);
        write_instance(&p, &shard)?;
        out.push(p);
    }
    Ok(out)
}

fn encode(instance: &ProblemInstance) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(instance.n_workers() as u32).to_le_bytes());
    out.extend_from_slice(&(instance.dim() as u64).to_le_bytes());
    let (kind, theta, radius) = match *instance.regularizer() {
        Regularizer::Zero => (0u8, 0.0, 0.0),
        Regularizer::L1 { theta } => (1, theta, 0.0),
        Regularizer::L1Ball { theta, radius } => (2, theta, radius),
    };
    out.push(kind);
    put_f64(&mut out, theta);
    put_f64(&mut out, radius);
    for block in instance.blocks() {
        let q = block
            .as_quadratic()
            .ok_or_else(|| Error::Unsupported("only quadratic blocks can be serialized".into()))?;
        let op = q.operator();
        out.push(matches!(op, Operator::Sparse(_)) as u8);
        put_f64(&mut out, q.sign());
        put_f64(&mut out, block.lipschitz());
        put_f64(&mut out, block.strong_convexity());
        out.extend_from_slice(&(op.rows() as u64).to_le_bytes());
        out.extend_from_slice(&(op.cols() as u64).to_le_bytes());
        match op {
            Operator::Dense(m) => {
                for r in 0..m.nrows() {
                    for c in 0..m.ncols() {
                        put_f64(&mut out, m[(r, c)]);
                    }
                }
            }
            Operator::Sparse(m) => {
                out.extend_from_slice(&(m.nnz() as u64).to_le_bytes());
                for (r, c, v) in m.triplets() {
                    out.extend_from_slice(&(r as u64).to_le_bytes());
                    out.extend_from_slice(&(c as u64).to_le_bytes());
                    put_f64(&mut out, v);
                }
            }
        }
        for v in q.target().iter() {
            put_f64(&mut out, *v);
        }
    }
    Ok(out)
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|e| *e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("container truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().unwrap());
        usize::try_from(v).map_err(|_| Error::Format(format!("size {v} does not fit in memory")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

fn decode(bytes: &[u8]) -> Result<ProblemInstance> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Format("missing ADMM magic bytes".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported container version {version}")));
    }
    let n_blocks = r.u32()? as usize;
    let dim = r.u64()?;
    let reg = match (r.u8()?, r.f64()?, r.f64()?) {
        (0, _, _) => Regularizer::Zero,
        (1, theta, _) => Regularizer::L1 { theta },
        (2, theta, radius) => Regularizer::L1Ball { theta, radius },
        (k, _, _) => return Err(Error::Format(format!("unknown regularizer kind {k}"))),
    };
    let mut blocks = Vec::with_capacity(n_blocks.min(1 << 16));
    for _ in 0..n_blocks {
        let storage = r.u8()?;
        let sign = r.f64()?;
        let lipschitz = r.f64()?;
        let sigma2 = r.f64()?;
        let rows = r.u64()?;
        let cols = r.u64()?;
        let op = match storage {
            0 => {
                let count = rows
                    .checked_mul(cols)
                    .filter(|c| c.saturating_mul(8) <= r.remaining())
                    .ok_or_else(|| Error::Format("dense block larger than the file".into()))?;
                let mut data = Vec::with_capacity(count);
                for _ in 0..count {
                    data.push(r.f64()?);
                }
                Operator::Dense(DMatrix::from_row_slice(rows, cols, &data))
            }
            1 => {
                let nnz = r.u64()?;
                if nnz.saturating_mul(24) > r.remaining() {
                    return Err(Error::Format("sparse block larger than the file".into()));
                }
                let mut trip = Vec::with_capacity(nnz);
                for _ in 0..nnz {
                    trip.push((r.u64()?, r.u64()?, r.f64()?));
                }
                Operator::Sparse(CsrMatrix::from_triplets(rows, cols, trip).map_err(|e| Error::Format(e.to_string()))?)
            }
            s => return Err(Error::Format(format!("unknown block storage {s}"))),
        };
        if rows.saturating_mul(8) > r.remaining() {
            return Err(Error::Format("block target larger than the file".into()));
        }
        let mut target = Vector::zeros(rows);
        for i in 0..rows {
            target[i] = r.f64()?;
        }
        blocks.push(SmoothBlock::Quadratic(QuadraticBlock::from_parts(
            op, target, sign, lipschitz, sigma2,
        )?));
    }
    if r.remaining() != 0 {
        return Err(Error::Format(format!(
            "{} trailing bytes after container",
            r.remaining()
        )));
    }
    let instance = ProblemInstance::new(blocks, reg)?;
    Error::check_dim("container dimension", dim, instance.dim())?;
    Ok(instance)
}
