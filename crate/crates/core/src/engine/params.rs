use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::model::{ConsensusState, Vector};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Synchronous distributed ADMM.
    Sync,
    /// Workers own `(x_i, λ_i)`; the master consumes arrived updates.
    AdAdmm,
    /// The master owns the duals; workers only return `x_i`.
    Alternative,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Sync => "sync",
            Scheme::AdAdmm => "ad-admm",
            Scheme::Alternative => "alternative",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sync" => Ok(Scheme::Sync),
            "ad-admm" | "adadmm" => Ok(Scheme::AdAdmm),
            "alternative" | "alt" => Ok(Scheme::Alternative),
            other => Err(Error::InvalidArgument(format!("unknown scheme '{other}'"))),
        }
    }
}

/// Update order of the synchronous driver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyncOrder {
    /// `x_0`, then all `x_i` against the new `x_0`, then the duals.
    #[default]
    MasterFirst,
    /// All `x_i` and duals against the current `x_0`, then `x_0`.
    WorkersFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopRule {
    pub max_iters: usize,
    /// Stop early once the largest KKT residual is at most this value.
    pub kkt_tolerance: Option<f64>,
}

impl StopRule {
    pub const DEFAULT_KKT_TOLERANCE: f64 = 1e-8;

    /// Run exactly `max_iters` iterations unless the run diverges.
    pub fn iterations(max_iters: usize) -> Self {
        Self {
            max_iters,
            kkt_tolerance: None,
        }
    }

    pub fn with_kkt_tolerance(max_iters: usize, tol: f64) -> Self {
        Self {
            max_iters,
            kkt_tolerance: Some(tol),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialPoint {
    Zero,
    /// `x_0 = scale·g` with `g` standard normal; all `x_i = x_0`.
    Random {
        seed: u64,
        scale: f64,
    },
    Given {
        x: Vec<f64>,
    },
}

impl InitialPoint {
    /// Consensus start with zero duals.
    pub fn state(&self, n_workers: usize, dim: usize) -> Result<ConsensusState> {
        let x = match self {
            InitialPoint::Zero => Vector::zeros(dim),
            InitialPoint::Random { seed, scale } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                Vector::from_fn(dim, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
            }
            InitialPoint::Given { x } => {
                Error::check_dim("initial point", dim, x.len())?;
                Vector::from_column_slice(x)
            }
        };
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("initial point is not finite".into()));
        }
        Ok(ConsensusState::at_consensus(&x, n_workers))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlgoParams {
    pub scheme: Scheme,
    pub rho: f64,
    pub gamma: f64,
    pub stop: StopRule,
    pub initial: InitialPoint,
    pub sync_order: SyncOrder,
    /// Keep every primal iterate (needed for ergodic averages).
    pub store_iterates: bool,
    /// Stop and flag the run once it is judged divergent.
    pub detect_divergence: bool,
    /// Evaluate `F(x_0)` every iteration (one extra pass over the data).
    pub track_objective: bool,
    /// Optimal value used for the accuracy-based divergence rule. Falls back
    /// to the instance's reference value.
    pub reference_value: Option<f64>,
    /// Size of a dedicated thread pool for worker solves; `None` uses the
    /// global pool.
    pub threads: Option<usize>,
}

impl AlgoParams {
    pub fn new(scheme: Scheme, rho: f64, gamma: f64, max_iters: usize) -> Self {
        Self {
            scheme,
            rho,
            gamma,
            stop: StopRule::iterations(max_iters),
            initial: InitialPoint::Zero,
            sync_order: SyncOrder::MasterFirst,
            store_iterates: false,
            detect_divergence: true,
            track_objective: false,
            reference_value: None,
            threads: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0) || !self.rho.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "rho must be positive, got {}",
                self.rho
            )));
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "gamma must be non-negative, got {}",
                self.gamma
            )));
        }
        if self.threads == Some(0) {
            return Err(Error::InvalidArgument("thread count must be positive".into()));
        }
        Ok(())
    }
}
