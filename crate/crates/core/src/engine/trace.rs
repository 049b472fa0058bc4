use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{Scheme, SyncOrder};
use crate::model::{ConsensusState, KktResidual, Vector};
use crate::{Error, Result};

/// Quantities recorded after master iteration `k`, i.e. at state `k+1`.
///
/// The per-worker sums run over all workers; for the drivers in which only
/// arrived workers move, they equal the sums over `A_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    pub arrivals: Vec<usize>,
    pub lagrangian: f64,
    pub objective: Option<f64>,
    pub kkt: KktResidual,
    /// `‖x_0^{k+1} − x_0^k‖²`
    pub dx0_sq: f64,
    /// `Σ_{i∈A_k} ‖x̂_i − x_0^k‖²` where `x̂_i` is the `x_0` worker `i` solved against.
    pub staleness_sq: f64,
    /// `Σ_i ‖λ_i^{k+1} − λ_i^k‖²`
    pub dlambda_sq: f64,
    /// `Σ_i ‖x_i^{k+1} − x_i^k‖²`
    pub dx_sq: f64,
    /// `max_i ‖∇f_i(x_i) + λ_i‖ / (1 + ‖λ_i‖)` over workers that have arrived at least once.
    pub identity_residual: f64,
    /// Seconds since the run started. Not written to CSV.
    pub elapsed: f64,
}

impl IterationRecord {
    pub fn is_finite(&self) -> bool {
        self.lagrangian.is_finite()
            && self.kkt.is_finite()
            && self.dx0_sq.is_finite()
            && self.staleness_sq.is_finite()
            && self.dlambda_sq.is_finite()
            && self.dx_sq.is_finite()
            && self.objective.is_none_or(f64::is_finite)
    }
}

/// Values at the starting point, before any iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialRecord {
    pub lagrangian: f64,
    pub objective: Option<f64>,
    pub kkt: KktResidual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "kebab-case")]
pub enum StopReason {
    IterationCap,
    Converged,
    Diverged(String),
}

/// `(x_0, {x_i})` after one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterateSnapshot {
    pub x0: Vector,
    pub xs: Vec<Vector>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub scheme: Scheme,
    pub sync_order: SyncOrder,
    pub rho: f64,
    pub gamma: f64,
    pub n_workers: usize,
    pub dim: usize,
    pub reference_value: Option<f64>,
    pub initial: InitialRecord,
    pub records: Vec<IterationRecord>,
    pub stop: StopReason,
    pub final_state: Option<ConsensusState>,
    pub iterates: Option<Vec<IterateSnapshot>>,
}

const COLUMNS: &[&str] = &[
    "k",
    "arrivals",
    "lagrangian",
    "objective",
    "kkt_worker",
    "kkt_master",
    "kkt_consensus",
    "dx0_sq",
    "staleness_sq",
    "dlambda_sq",
    "dx_sq",
    "identity_residual",
];

fn fmt_f(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f).unwrap_or_default()
}

fn parse_f(s: &str, what: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Format(format!("bad {what} value '{s}'")))
}

fn parse_opt(s: &str, what: &str) -> Result<Option<f64>> {
    if s.trim().is_empty() {
        Ok(None)
    } else {
        parse_f(s, what).map(Some)
    }
}

impl RunTrace {
    pub fn diverged(&self) -> bool {
        matches!(self.stop, StopReason::Diverged(_))
    }

    pub fn converged(&self) -> bool {
        self.stop == StopReason::Converged
    }

    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }

    /// Final largest KKT residual (initial one if no iteration ran).
    pub fn final_kkt(&self) -> f64 {
        self.records.last().map_or(self.initial.kkt.max(), |r| r.kkt.max())
    }

    /// CSV with `#` metadata lines. Floats carry 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# scheme={}", self.scheme.name());
        let _ = writeln!(
            out,
            "# sync_order={}",
            match self.sync_order {
                SyncOrder::MasterFirst => "master-first",
                SyncOrder::WorkersFirst => "workers-first",
            }
        );
        let _ = writeln!(out, "# rho={}", fmt_f(self.rho));
        let _ = writeln!(out, "# gamma={}", fmt_f(self.gamma));
        let _ = writeln!(out, "# n_workers={}", self.n_workers);
        let _ = writeln!(out, "# dim={}", self.dim);
        let _ = writeln!(out, "# reference_value={}", fmt_opt(self.reference_value));
        let _ = writeln!(out, "# initial_lagrangian={}", fmt_f(self.initial.lagrangian));
        let _ = writeln!(out, "# initial_objective={}", fmt_opt(self.initial.objective));
        let _ = writeln!(
            out,
            "# initial_kkt_worker={}",
            fmt_f(self.initial.kkt.worker_stationarity)
        );
        let _ = writeln!(
            out,
            "# initial_kkt_master={}",
            fmt_opt(self.initial.kkt.master_stationarity)
        );
        let _ = writeln!(out, "# initial_kkt_consensus={}", fmt_f(self.initial.kkt.consensus));
        let _ = writeln!(
            out,
            "# stop={}",
            serde_json::to_string(&self.stop).expect("serializable")
        );
        let _ = writeln!(
            out,
            "# row k holds the state after master iteration k; arrivals are ';'-separated worker indices"
        );
        out.push_str(&COLUMNS.join(","));
        out.push('\n');
        for r in &self.records {
            let arrivals: Vec<String> = r.arrivals.iter().map(|i| i.to_string()).collect();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                r.k,
                arrivals.join(";"),
                fmt_f(r.lagrangian),
                fmt_opt(r.objective),
                fmt_f(r.kkt.worker_stationarity),
                fmt_opt(r.kkt.master_stationarity),
                fmt_f(r.kkt.consensus),
                fmt_f(r.dx0_sq),
                fmt_f(r.staleness_sq),
                fmt_f(r.dlambda_sq),
                fmt_f(r.dx_sq),
                fmt_f(r.identity_residual),
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }

    /// Parses [`RunTrace::to_csv`] output. States, iterates and elapsed
    /// times are not part of the format.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut meta = std::collections::HashMap::new();
        let mut lines = text.lines();
        let mut header = None;
        for line in lines.by_ref() {
            if let Some(rest) = line.strip_prefix('#') {
                if let Some((k, v)) = rest.trim().split_once('=') {
                    meta.insert(k.trim().to_string(), v.trim().to_string());
                }
            } else {
                header = Some(line);
                break;
            }
        }
        let header = header.ok_or_else(|| Error::Format("trace has no column header".into()))?;
        if header.split(',').collect::<Vec<_>>() != COLUMNS {
            return Err(Error::Format(format!("unexpected trace columns '{header}'")));
        }
        let get = |key: &str| {
            meta.get(key)
                .cloned()
                .ok_or_else(|| Error::Format(format!("trace metadata '{key}' missing")))
        };
        let scheme: Scheme = get("scheme")?.parse()?;
        let sync_order = match get("sync_order")?.as_str() {
            "master-first" => SyncOrder::MasterFirst,
            "workers-first" => SyncOrder::WorkersFirst,
            o => return Err(Error::Format(format!("unknown sync order '{o}'"))),
        };
        let parse_usize = |key: &str| -> Result<usize> {
            get(key)?
                .parse()
                .map_err(|_| Error::Format(format!("bad integer for '{key}'")))
        };
        let initial = InitialRecord {
            lagrangian: parse_f(&get("initial_lagrangian")?, "initial_lagrangian")?,
            objective: parse_opt(&get("initial_objective")?, "initial_objective")?,
            kkt: KktResidual {
                worker_stationarity: parse_f(&get("initial_kkt_worker")?, "initial_kkt_worker")?,
                master_stationarity: parse_opt(&get("initial_kkt_master")?, "initial_kkt_master")?,
                consensus: parse_f(&get("initial_kkt_consensus")?, "initial_kkt_consensus")?,
            },
        };
        let stop: StopReason = serde_json::from_str(&get("stop")?)?;
        let mut records = Vec::new();
        for (lineno, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != COLUMNS.len() {
                return Err(Error::Format(format!("trace row {lineno} has {} fields", f.len())));
            }
            let arrivals = if f[1].is_empty() {
                Vec::new()
            } else {
                f[1].split(';')
                    .map(|s| {
                        s.parse::<usize>()
                            .map_err(|_| Error::Format(format!("bad arrival '{s}'")))
                    })
                    .collect::<Result<Vec<_>>>()?
            };
            records.push(IterationRecord {
                k: f[0].parse().map_err(|_| Error::Format(format!("bad k '{}'", f[0])))?,
                arrivals,
                lagrangian: parse_f(f[2], "lagrangian")?,
                objective: parse_opt(f[3], "objective")?,
                kkt: KktResidual {
                    worker_stationarity: parse_f(f[4], "kkt_worker")?,
                    master_stationarity: parse_opt(f[5], "kkt_master")?,
                    consensus: parse_f(f[6], "kkt_consensus")?,
                },
                dx0_sq: parse_f(f[7], "dx0_sq")?,
                staleness_sq: parse_f(f[8], "staleness_sq")?,
                dlambda_sq: parse_f(f[9], "dlambda_sq")?,
                dx_sq: parse_f(f[10], "dx_sq")?,
                identity_residual: parse_f(f[11], "identity_residual")?,
                elapsed: 0.0,
            });
        }
        Ok(Self {
            scheme,
            sync_order,
            rho: parse_f(&get("rho")?, "rho")?,
            gamma: parse_f(&get("gamma")?, "gamma")?,
            n_workers: parse_usize("n_workers")?,
            dim: parse_usize("dim")?,
            reference_value: parse_opt(&get("reference_value")?, "reference_value")?,
            initial,
            records,
            stop,
            final_state: None,
            iterates: None,
        })
    }

    /// Binary dump of stored iterates: `"ADMI" | u32 version | u64 count |
    /// u64 N | u64 n`, then per iterate `x_0` followed by `x_1..x_N`, all
    /// little-endian `f64`.
    pub fn write_iterates(&self, path: &Path) -> Result<()> {
        let its = self
            .iterates
            .as_ref()
            .ok_or_else(|| Error::Unsupported("run did not store iterates".into()))?;
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let mut put = |b: &[u8]| w.write_all(b).map_err(|e| Error::io(path, e));
        put(b"ADMI")?;
        put(&1u32.to_le_bytes())?;
        put(&(its.len() as u64).to_le_bytes())?;
        put(&(self.n_workers as u64).to_le_bytes())?;
        put(&(self.dim as u64).to_le_bytes())?;
        for s in its {
            for v in std::iter::once(&s.x0).chain(&s.xs) {
                for e in v.iter() {
                    put(&e.to_le_bytes())?;
                }
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_iterates(path: &Path) -> Result<Vec<IterateSnapshot>> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.len() < 32 || &bytes[..4] != b"ADMI" {
            return Err(Error::Format("not an iterate dump".into()));
        }
        let word = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap()) as usize;
        let (count, n_workers, dim) = (word(8), word(16), word(24));
        let per = (n_workers + 1)
            .checked_mul(dim)
            .and_then(|p| p.checked_mul(count))
            .and_then(|p| p.checked_mul(8))
            .ok_or_else(|| Error::Format("iterate dump sizes overflow".into()))?;
        if bytes.len() != 32 + per {
            return Err(Error::Format("iterate dump length does not match its header".into()));
        }
        let mut pos = 32;
        let mut next = || {
            let v = Vector::from_fn(dim, |j, _| {
                f64::from_le_bytes(bytes[pos + 8 * j..pos + 8 * j + 8].try_into().unwrap())
            });
            pos += 8 * dim;
            v
        };
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let x0 = next();
            let xs = (0..n_workers).map(|_| next()).collect();
            out.push(IterateSnapshot { x0, xs });
        }
        Ok(out)
    }
}

/// Running means `x̄^k = (1/k) Σ_{l=1..k} x^l` of stored iterates.
pub fn ergodic_averages(trace: &RunTrace) -> Result<Vec<IterateSnapshot>> {
    let its = trace
        .iterates
        .as_ref()
        .ok_or_else(|| Error::Unsupported("ergodic averages need a run with stored iterates".into()))?;
    Ok(running_means(its))
}

pub(crate) fn running_means(its: &[IterateSnapshot]) -> Vec<IterateSnapshot> {
    let mut out = Vec::with_capacity(its.len());
    let Some(first) = its.first() else {
        return out;
    };
    let mut sum0 = Vector::zeros(first.x0.len());
    let mut sums: Vec<Vector> = first.xs.iter().map(|x| Vector::zeros(x.len())).collect();
    for (k, s) in its.iter().enumerate() {
        sum0 += &s.x0;
        for (acc, x) in sums.iter_mut().zip(&s.xs) {
            *acc += x;
        }
        let inv = 1.0 / (k + 1) as f64;
        out.push(IterateSnapshot {
            x0: &sum0 * inv,
            xs: sums.iter().map(|v| v * inv).collect(),
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> Vector {
        Vector::from_column_slice(x)
    }

    fn snap(x: f64) -> IterateSnapshot {
        IterateSnapshot {
            x0: v(&[x]),
            xs: vec![v(&[x]), v(&[2.0 * x])],
        }
    }

    #[test]
    fn running_means_examples() {
        let m = running_means(&[snap(0.0), snap(2.0)]);
        assert_eq!(m[1].x0, v(&[1.0]));
        assert_eq!(m[1].xs[1], v(&[2.0]));
        let c = running_means(&[snap(3.0), snap(3.0), snap(3.0)]);
        assert!(c.iter().all(|s| s.x0 == v(&[3.0])));
    }

    fn sample_trace() -> RunTrace {
        let kkt = KktResidual {
            worker_stationarity: 0.1 + 1e-17,
            master_stationarity: Some(1.0 / 3.0),
            consensus: 2.5e-300,
        };
        RunTrace {
            scheme: Scheme::AdAdmm,
            sync_order: SyncOrder::MasterFirst,
            rho: 500.0,
            gamma: 0.0,
            n_workers: 2,
            dim: 1,
            reference_value: Some(std::f64::consts::PI),
            initial: InitialRecord {
                lagrangian: 7.0,
                objective: None,
                kkt,
            },
            records: vec![IterationRecord {
                k: 0,
                arrivals: vec![0, 1],
                lagrangian: -1.0 / 7.0,
                objective: Some(0.2),
                kkt: KktResidual {
                    master_stationarity: None,
                    ..kkt
                },
                dx0_sq: 1e-20,
                staleness_sq: 0.0,
                dlambda_sq: 3.0,
                dx_sq: 4.0,
                identity_residual: 1e-16,
                elapsed: 0.0,
            }],
            stop: StopReason::Diverged("non-finite".into()),
            final_state: None,
            iterates: None,
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let t = sample_trace();
        let back = RunTrace::from_csv(&t.to_csv()).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.to_csv(), t.to_csv());
    }

    #[test]
    fn iterate_dump_round_trip() {
        let mut t = sample_trace();
        t.iterates = Some(vec![snap(1.5), snap(-0.25)]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("it.bin");
        t.write_iterates(&p).unwrap();
        assert_eq!(RunTrace::read_iterates(&p).unwrap(), t.iterates.unwrap());
    }

    #[test]
    fn ergodic_needs_iterates() {
        assert!(matches!(ergodic_averages(&sample_trace()), Err(Error::Unsupported(_))));
    }
}
