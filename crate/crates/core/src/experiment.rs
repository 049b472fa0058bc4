//! Experiment descriptions: a JSON-serializable spec that resolves to an
//! instance, algorithm parameters, an arrival schedule and a reference value.
//!
//! Named presets reproduce the sparse PCA and LASSO setups. A scale factor
//! shrinks `m`, `n` and `nnz` linearly; `N` shrinks too but never below
//! `min(N, 8)`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::advisor::{gamma_min, recommend, TheoryParams, MARGIN};
use crate::engine::{run, AlgoParams, InitialPoint, RunTrace, Scheme, StopReason, StopRule, SyncOrder};
use crate::model::{Provenance, ReferenceValue};
use crate::problems::{gen_lasso, gen_sparse_pca, read_instance, InstanceMeta};
use crate::reference::{proximal_gradient, sync_reference};
use crate::scheduler::{ArrivalModel, Schedule};
use crate::{Error, ProblemInstance, Result};

pub const PRESETS: &[&str] = &["fig2", "fig3a", "fig3b", "fig3c", "fig3d"];

/// Smallest worker count a scaled preset keeps (unless the preset has fewer).
pub const MIN_SCALED_WORKERS: usize = 8;

/// Tolerance of the proximal-gradient oracle.
pub const ORACLE_TOL: f64 = 1e-10;
pub const ORACLE_MAX_ITERS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum InstanceSpec {
    Lasso {
        n_workers: usize,
        rows: usize,
        dim: usize,
        theta: f64,
        noise_var: f64,
        density: f64,
        seed: u64,
    },
    SparsePca {
        n_workers: usize,
        rows: usize,
        dim: usize,
        nnz: usize,
        theta: f64,
        seed: u64,
    },
    File {
        path: PathBuf,
    },
}

impl InstanceSpec {
    pub fn build(&self) -> Result<ProblemInstance> {
        match *self {
            InstanceSpec::Lasso {
                n_workers,
                rows,
                dim,
                theta,
                noise_var,
                density,
                seed,
            } => gen_lasso(n_workers, rows, dim, theta, noise_var, density, seed),
            InstanceSpec::SparsePca {
                n_workers,
                rows,
                dim,
                nnz,
                theta,
                seed,
            } => gen_sparse_pca(n_workers, rows, dim, theta, nnz, seed),
            InstanceSpec::File { ref path } => read_instance(path),
        }
    }

    /// Sidecar metadata for a generated instance.
    pub fn meta(&self, instance: &ProblemInstance) -> InstanceMeta {
        let (family, seed, theta, rows, noise_var, density, nnz) = match *self {
            InstanceSpec::Lasso {
                rows,
                theta,
                noise_var,
                density,
                seed,
                ..
            } => ("lasso", Some(seed), theta, rows, Some(noise_var), Some(density), None),
            InstanceSpec::SparsePca {
                rows, nnz, theta, seed, ..
            } => ("sparse-pca", Some(seed), theta, rows, None, None, Some(nnz)),
            InstanceSpec::File { .. } => (
                "file",
                None,
                instance.regularizer().theta(),
                instance
                    .blocks()
                    .first()
                    .and_then(|b| b.as_quadratic())
                    .map_or(0, |q| q.operator().rows()),
                None,
                None,
                None,
            ),
        };
        InstanceMeta {
            family: family.into(),
            seed,
            theta,
            n_workers: instance.n_workers(),
            rows_per_block: rows,
            dim: instance.dim(),
            noise_var,
            density,
            nnz,
            lipschitz: instance.lipschitz(),
            strong_convexity: instance.strong_convexity(),
            max_gram_eigenvalue: instance.max_gram_eigenvalue(),
            reference: instance.reference,
        }
    }

    /// Applies the desk-scale rule.
    pub fn scaled(&self, scale: f64) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::InvalidArgument(format!("scale must be positive, got {scale}")));
        }
        let lin = |v: usize| ((v as f64 * scale).round() as usize).max(1);
        let workers = |n: usize| lin(n).max(n.min(MIN_SCALED_WORKERS));
        Ok(match self.clone() {
            InstanceSpec::Lasso {
                n_workers,
                rows,
                dim,
                theta,
                noise_var,
                density,
                seed,
            } => InstanceSpec::Lasso {
                n_workers: workers(n_workers),
                rows: lin(rows),
                dim: lin(dim),
                theta,
                noise_var,
                density,
                seed,
            },
            InstanceSpec::SparsePca {
                n_workers,
                rows,
                dim,
                nnz,
                theta,
                seed,
            } => {
                let (rows, dim) = (lin(rows), lin(dim));
                InstanceSpec::SparsePca {
                    n_workers: workers(n_workers),
                    rows,
                    dim,
                    nnz: lin(nnz).min(rows * dim),
                    theta,
                    seed,
                }
            }
            file @ InstanceSpec::File { .. } => file,
        })
    }

    pub fn with_seed(&self, new_seed: u64) -> Self {
        let mut out = self.clone();
        match &mut out {
            InstanceSpec::Lasso { seed, .. } | InstanceSpec::SparsePca { seed, .. } => *seed = new_seed,
            InstanceSpec::File { .. } => {}
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RhoChoice {
    Value(f64),
    /// Smallest admissible value from the advisor plus its margin.
    Advisor,
    /// `β·max_j λmax(B_jᵀB_j)`.
    SpectralMultiple(f64),
}

impl RhoChoice {
    fn resolve(self, instance: &ProblemInstance, advisor_rho: impl FnOnce() -> Result<f64>) -> Result<f64> {
        match self {
            RhoChoice::Value(v) => Ok(v),
            RhoChoice::Advisor => advisor_rho(),
            RhoChoice::SpectralMultiple(beta) => instance
                .max_gram_eigenvalue()
                .map(|l| beta * l)
                .ok_or_else(|| Error::Unsupported("spectral rho needs quadratic blocks".into())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GammaChoice {
    Value(f64),
    Advisor,
}

/// The two arrival-probability layouts of the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArrivalPreset {
    /// First half at 0.1, the rest at 0.8.
    Halves,
    /// First `⌊N/2⌋` at 0.1, next `⌊N/4⌋` at 0.3, the rest at 0.8.
    Tiers,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArrivalSpec {
    Preset(ArrivalPreset),
    Uniform(f64),
    Probabilities(Vec<f64>),
}

impl ArrivalSpec {
    pub fn probabilities(&self, n_workers: usize) -> Result<Vec<f64>> {
        match self {
            ArrivalSpec::Preset(ArrivalPreset::Halves) => {
                let half = n_workers / 2;
                Ok((0..n_workers).map(|i| if i < half { 0.1 } else { 0.8 }).collect())
            }
            ArrivalSpec::Preset(ArrivalPreset::Tiers) => {
                let (a, b) = (n_workers / 2, n_workers / 4);
                Ok((0..n_workers)
                    .map(|i| {
                        if i < a {
                            0.1
                        } else if i < a + b {
                            0.3
                        } else {
                            0.8
                        }
                    })
                    .collect())
            }
            ArrivalSpec::Uniform(p) => Ok(vec![*p; n_workers]),
            ArrivalSpec::Probabilities(ps) => {
                Error::check_dim("arrival probabilities", n_workers, ps.len())?;
                Ok(ps.clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ReferenceChoice {
    None,
    /// Proximal-gradient optimum (convex instances).
    Oracle,
    /// Final augmented Lagrangian of a synchronous run from the spec's
    /// initial point.
    Synchronous {
        iterations: usize,
        rho: RhoChoice,
    },
    Value {
        value: f64,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterates: Option<PathBuf>,
}

impl OutputSpec {
    /// `trace.csv`, `summary.json` and `schedule.jsonl` inside `dir`.
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            trace: Some(dir.join("trace.csv")),
            summary: Some(dir.join("summary.json")),
            schedule: Some(dir.join("schedule.jsonl")),
            iterates: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub instance: InstanceSpec,
    pub scheme: Scheme,
    #[serde(default)]
    pub sync_order: SyncOrder,
    pub rho: RhoChoice,
    pub gamma: GammaChoice,
    pub tau: usize,
    pub min_arrivals: usize,
    pub arrivals: ArrivalSpec,
    pub iters: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kkt_tolerance: Option<f64>,
    pub initial: InitialPoint,
    /// Seed of the arrival process.
    pub seed: u64,
    pub reference: ReferenceChoice,
    #[serde(default)]
    pub store_iterates: bool,
    #[serde(default)]
    pub output: OutputSpec,
}

const LASSO_THETA: f64 = 0.1;
const LASSO_NOISE_VAR: f64 = 0.01;
const LASSO_DENSITY: f64 = 0.05;

fn lasso(dim: usize) -> InstanceSpec {
    InstanceSpec::Lasso {
        n_workers: 16,
        rows: 200,
        dim,
        theta: LASSO_THETA,
        noise_var: LASSO_NOISE_VAR,
        density: LASSO_DENSITY,
        seed: 1,
    }
}

impl ExperimentSpec {
    /// Expands a named preset at the given scale.
    pub fn preset(name: &str, scale: f64) -> Result<Self> {
        let lasso_run = |dim: usize, scheme: Scheme, tau: usize| Self {
            name: name.to_string(),
            instance: lasso(dim),
            scheme,
            sync_order: SyncOrder::MasterFirst,
            rho: RhoChoice::Value(500.0),
            gamma: GammaChoice::Value(0.0),
            tau,
            min_arrivals: 1,
            arrivals: ArrivalSpec::Preset(ArrivalPreset::Tiers),
            iters: 5000,
            kkt_tolerance: None,
            initial: InitialPoint::Zero,
            seed: 7,
            reference: ReferenceChoice::Oracle,
            store_iterates: false,
            output: OutputSpec::default(),
        };
        let spec = match name {
            "fig2" => Self {
                name: name.to_string(),
                instance: InstanceSpec::SparsePca {
                    n_workers: 32,
                    rows: 1000,
                    dim: 500,
                    nnz: 5000,
                    theta: 0.1,
                    seed: 1,
                },
                scheme: Scheme::AdAdmm,
                sync_order: SyncOrder::MasterFirst,
                rho: RhoChoice::SpectralMultiple(3.0),
                gamma: GammaChoice::Value(0.0),
                tau: 3,
                min_arrivals: 1,
                arrivals: ArrivalSpec::Preset(ArrivalPreset::Halves),
                iters: 3000,
                kkt_tolerance: None,
                initial: InitialPoint::Random { seed: 11, scale: 0.1 },
                seed: 7,
                reference: ReferenceChoice::Synchronous {
                    iterations: 10_000,
                    rho: RhoChoice::SpectralMultiple(3.0),
                },
                store_iterates: false,
                output: OutputSpec::default(),
            },
            "fig3a" => lasso_run(100, Scheme::AdAdmm, 3),
            "fig3b" => lasso_run(100, Scheme::Alternative, 3),
            "fig3c" => lasso_run(1000, Scheme::AdAdmm, 3),
            "fig3d" => lasso_run(1000, Scheme::Alternative, 2),
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown preset '{other}' (expected one of {})",
                    PRESETS.join(", ")
                )))
            }
        };
        if scale == 1.0 {
            Ok(spec)
        } else {
            Ok(Self {
                instance: spec.instance.scaled(scale)?,
                ..spec
            })
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("experiment specs serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    /// Generates or loads the instance, then fixes `ρ`, `γ`, the schedule
    /// and the reference value.
    pub fn resolve(&self) -> Result<Resolved> {
        let instance = self.instance.build()?;
        self.resolve_with(instance)
    }

    /// As [`ExperimentSpec::resolve`] with an already built instance.
    pub fn resolve_with(&self, instance: ProblemInstance) -> Result<Resolved> {
        let n = instance.n_workers();
        let probs = self.arrivals.probabilities(n)?;
        let schedule = match self.scheme {
            Scheme::Sync => None,
            _ => {
                let model = ArrivalModel::new(probs, self.tau, self.min_arrivals, self.seed)?;
                Some(Schedule::generate(&model, self.iters)?)
            }
        };
        let theory = TheoryParams::from_instance(&instance, self.tau, schedule.as_ref());
        let advice = || recommend(&theory, instance.is_convex());
        let rho = self.rho.resolve(&instance, || Ok(advice()?.rho))?;
        let gamma = match self.gamma {
            GammaChoice::Value(g) => g,
            GammaChoice::Advisor => {
                theory.validate()?;
                // Bound at the resolved ρ, not the advisor's.
                let bound = gamma_min(theory.s, rho, theory.tau, theory.n_workers);
                if bound > 0.0 {
                    bound * (1.0 + MARGIN)
                } else {
                    0.0
                }
            }
        };
        let reference = match &self.reference {
            ReferenceChoice::None => None,
            ReferenceChoice::Value { value } => Some(ReferenceValue {
                value: *value,
                provenance: Provenance::User,
            }),
            ReferenceChoice::Oracle => {
                let sol = proximal_gradient(&instance, ORACLE_TOL, ORACLE_MAX_ITERS)?;
                Some(sol.reference_value())
            }
            ReferenceChoice::Synchronous { iterations, rho: r } => {
                let r = r.resolve(&instance, || Ok(advice()?.rho))?;
                Some(sync_reference(&instance, r, *iterations, self.initial.clone())?)
            }
        };
        let instance = match reference {
            Some(r) => instance.with_reference(r),
            None => instance,
        };
        let mut params = AlgoParams::new(self.scheme, rho, gamma, self.iters);
        params.stop = match self.kkt_tolerance {
            Some(tol) => StopRule::with_kkt_tolerance(self.iters, tol),
            None => StopRule::iterations(self.iters),
        };
        params.initial = self.initial.clone();
        params.sync_order = self.sync_order;
        params.store_iterates = self.store_iterates;
        params.threads = threads_from_env()?;
        params.validate()?;
        Ok(Resolved {
            instance,
            params,
            schedule,
            tau: self.tau,
        })
    }
}

/// Variable capping the worker-solve thread pool.
pub const THREADS_ENV: &str = "ADMM_ASYNC_THREADS";

pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|t| *t > 0)
            .map(Some)
            .ok_or_else(|| Error::InvalidArgument(format!("{THREADS_ENV} must be a positive integer, got '{v}'"))),
        _ => Ok(None),
    }
}

/// A fully determined run.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub instance: ProblemInstance,
    pub params: AlgoParams,
    pub schedule: Option<Schedule>,
    pub tau: usize,
}

impl Resolved {
    pub fn run(&self) -> Result<RunTrace> {
        run(&self.instance, &self.params, self.schedule.as_ref())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub scheme: Scheme,
    pub rho: f64,
    pub gamma: f64,
    pub tau: usize,
    pub n_workers: usize,
    pub dim: usize,
    pub iterations: usize,
    pub stop: StopReason,
    pub diverged: bool,
    pub converged: bool,
    pub final_kkt: f64,
    pub final_lagrangian: Option<f64>,
    pub reference: Option<ReferenceValue>,
    pub final_accuracy: Option<f64>,
    pub wall_time_secs: f64,
}

impl RunSummary {
    pub fn new(name: &str, resolved: &Resolved, trace: &RunTrace, wall_time_secs: f64) -> Self {
        let reference = resolved.instance.reference;
        let final_lagrangian = trace.last().map(|r| r.lagrangian);
        let final_accuracy = match (reference, final_lagrangian) {
            (Some(r), Some(l)) if r.value != 0.0 => Some((l - r.value).abs() / r.value.abs()),
            _ => None,
        };
        Self {
            name: name.to_string(),
            scheme: trace.scheme,
            rho: trace.rho,
            gamma: trace.gamma,
            tau: resolved.tau,
            n_workers: trace.n_workers,
            dim: trace.dim,
            iterations: trace.iterations(),
            stop: trace.stop.clone(),
            diverged: trace.diverged(),
            converged: trace.converged(),
            final_kkt: trace.final_kkt(),
            final_lagrangian,
            reference,
            final_accuracy,
            wall_time_secs,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_round_trip_through_json() {
        for name in PRESETS {
            for scale in [1.0, 0.1] {
                let s = ExperimentSpec::preset(name, scale).unwrap();
                assert_eq!(ExperimentSpec::from_json(&s.to_json()).unwrap(), s, "{name}");
            }
        }
    }

    #[test]
    fn preset_sizes() {
        let a = ExperimentSpec::preset("fig3a", 1.0).unwrap();
        assert!(matches!(
            a.instance,
            InstanceSpec::Lasso {
                n_workers: 16,
                rows: 200,
                dim: 100,
                ..
            }
        ));
        assert_eq!(a.rho, RhoChoice::Value(500.0));
        let c = ExperimentSpec::preset("fig3c", 1.0).unwrap();
        assert!(matches!(c.instance, InstanceSpec::Lasso { dim: 1000, .. }));
        let d = ExperimentSpec::preset("fig3d", 1.0).unwrap();
        assert_eq!((d.scheme, d.tau), (Scheme::Alternative, 2));
        let pca = ExperimentSpec::preset("fig2", 0.1).unwrap();
        assert_eq!(
            pca.instance,
            InstanceSpec::SparsePca {
                n_workers: 8,
                rows: 100,
                dim: 50,
                nnz: 500,
                theta: 0.1,
                seed: 1
            }
        );
        assert!(ExperimentSpec::preset("fig9", 1.0).is_err());
        assert!(ExperimentSpec::preset("fig2", 0.0).is_err());
    }

    #[test]
    fn arrival_presets() {
        let t = ArrivalSpec::Preset(ArrivalPreset::Tiers).probabilities(16).unwrap();
        assert_eq!(t.iter().filter(|p| **p == 0.1).count(), 8);
        assert_eq!(t.iter().filter(|p| **p == 0.3).count(), 4);
        assert_eq!(t.iter().filter(|p| **p == 0.8).count(), 4);
        let h = ArrivalSpec::Preset(ArrivalPreset::Halves).probabilities(32).unwrap();
        assert_eq!(h.iter().filter(|p| **p == 0.1).count(), 16);
        assert!(ArrivalSpec::Probabilities(vec![0.5; 3]).probabilities(4).is_err());
    }

    #[test]
    fn resolve_small_lasso() {
        let mut s = ExperimentSpec::preset("fig3a", 0.1).unwrap();
        s.iters = 50;
        let r = s.resolve().unwrap();
        assert_eq!(r.instance.n_workers(), 8);
        assert_eq!(r.schedule.as_ref().unwrap().len(), 50);
        assert_eq!(r.instance.reference.unwrap().provenance, Provenance::Oracle);
        let t = r.run().unwrap();
        assert_eq!(t.iterations(), 50);
        let sum = RunSummary::new("x", &r, &t, 0.0);
        assert!(sum.final_accuracy.is_some());
    }

    #[test]
    fn advisor_choices_resolve() {
        let mut s = ExperimentSpec::preset("fig3a", 0.1).unwrap();
        s.iters = 5;
        s.rho = RhoChoice::Advisor;
        s.gamma = GammaChoice::Advisor;
        s.reference = ReferenceChoice::None;
        let r = s.resolve().unwrap();
        let l = r.instance.lipschitz();
        assert!(r.params.rho > crate::advisor::rho_min_convex(l));
        assert!(r.params.gamma > 0.0);
    }
}
