//! Problem data, consensus state, and the quantities every driver evaluates:
//! the objective, the augmented Lagrangian, and KKT residuals.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::linalg::{gram_lambda_max, gram_lambda_min, Operator};
use crate::{Error, Result};

pub type Vector = DVector<f64>;

/// Power-iteration tolerance used for Lipschitz constants.
pub const LIPSCHITZ_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Curvature {
    QuadraticPsd,
    QuadraticIndefinite,
    General,
}

/// A differentiable function supplied through value and gradient oracles.
pub trait SmoothFunction: Send + Sync {
    fn value(&self, x: &Vector) -> f64;
    fn gradient(&self, x: &Vector) -> Vector;
}

/// `f(x) = sign · ‖M x − b‖²`.
///
/// `sign = +1` gives a least-squares block (convex); `sign = −1` with `b = 0`
/// gives the concave `−xᵀMᵀMx` used by sparse PCA.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticBlock {
    op: Operator,
    target: Vector,
    sign: f64,
    lipschitz: f64,
    sigma2: f64,
}

impl QuadraticBlock {
    pub fn least_squares(op: Operator, target: Vector) -> Result<Self> {
        Self::new(op, target, 1.0)
    }

    pub fn negative_gram(op: Operator) -> Result<Self> {
        let target = Vector::zeros(op.rows());
        Self::new(op, target, -1.0)
    }

    fn new(op: Operator, target: Vector, sign: f64) -> Result<Self> {
        Error::check_dim("quadratic block target", op.rows(), target.len())?;
        if op.cols() == 0 {
            return Err(Error::InvalidArgument("block with zero columns".into()));
        }
        let lambda_max = gram_lambda_max(&op, LIPSCHITZ_TOL);
        let sigma2 = if sign > 0.0 { 2.0 * gram_lambda_min(&op) } else { 0.0 };
        Ok(Self {
            op,
            target,
            sign,
            lipschitz: 2.0 * lambda_max,
            sigma2,
        })
    }

    /// Rebuilds a block from stored parts without recomputing spectra.
    pub(crate) fn from_parts(op: Operator, target: Vector, sign: f64, lipschitz: f64, sigma2: f64) -> Result<Self> {
        Error::check_dim("quadratic block target", op.rows(), target.len())?;
        Ok(Self {
            op,
            target,
            sign,
            lipschitz,
            sigma2,
        })
    }

    pub fn operator(&self) -> &Operator {
        &self.op
    }

    pub fn target(&self) -> &Vector {
        &self.target
    }

    pub fn sign(&self) -> f64 {
        self.sign
    }

    pub fn dim(&self) -> usize {
        self.op.cols()
    }

    /// Largest eigenvalue of `MᵀM`; the block's `L` is twice this.
    pub fn gram_lambda_max(&self) -> f64 {
        self.lipschitz / 2.0
    }

    pub fn value(&self, x: &Vector) -> f64 {
        let r = self.op.apply(x) - &self.target;
        self.sign * r.norm_squared()
    }

    pub fn gradient(&self, x: &Vector) -> Vector {
        let r = self.op.apply(x) - &self.target;
        self.op.apply_transpose(&r) * (2.0 * self.sign)
    }

    /// Value and gradient from a single residual evaluation.
    pub fn value_and_gradient(&self, x: &Vector) -> (f64, Vector) {
        let r = self.op.apply(x) - &self.target;
        let g = self.op.apply_transpose(&r) * (2.0 * self.sign);
        (self.sign * r.norm_squared(), g)
    }
}

/// Block given by user oracles. Its Lipschitz and strong-convexity constants
/// are supplied by the caller.
#[derive(Clone)]
pub struct GeneralBlock {
    func: Arc<dyn SmoothFunction>,
    dim: usize,
    lipschitz: f64,
    sigma2: f64,
}

impl GeneralBlock {
    pub fn new(func: Arc<dyn SmoothFunction>, dim: usize, lipschitz: f64, sigma2: f64) -> Self {
        Self {
            func,
            dim,
            lipschitz,
            sigma2,
        }
    }
}

impl fmt::Debug for GeneralBlock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GeneralBlock")
            .field("dim", &self.dim)
            .field("lipschitz", &self.lipschitz)
            .field("sigma2", &self.sigma2)
            .finish_non_exhaustive()
    }
}

/// One smooth term `f_i`, held by worker `i`.
#[derive(Debug, Clone)]
pub enum SmoothBlock {
    Quadratic(QuadraticBlock),
    General(GeneralBlock),
}

impl SmoothBlock {
    pub fn dim(&self) -> usize {
        match self {
            SmoothBlock::Quadratic(q) => q.dim(),
            SmoothBlock::General(g) => g.dim,
        }
    }

    pub fn value(&self, x: &Vector) -> f64 {
        match self {
            SmoothBlock::Quadratic(q) => q.value(x),
            SmoothBlock::General(g) => g.func.value(x),
        }
    }

    pub fn gradient(&self, x: &Vector) -> Vector {
        match self {
            SmoothBlock::Quadratic(q) => q.gradient(x),
            SmoothBlock::General(g) => g.func.gradient(x),
        }
    }

    pub fn value_and_gradient(&self, x: &Vector) -> (f64, Vector) {
        match self {
            SmoothBlock::Quadratic(q) => q.value_and_gradient(x),
            SmoothBlock::General(g) => (g.func.value(x), g.func.gradient(x)),
        }
    }

    /// Lipschitz constant `L` of the gradient.
    pub fn lipschitz(&self) -> f64 {
        match self {
            SmoothBlock::Quadratic(q) => q.lipschitz,
            SmoothBlock::General(g) => g.lipschitz,
        }
    }

    /// Strong convexity modulus `σ²` (0 when the block is not strongly convex).
    pub fn strong_convexity(&self) -> f64 {
        match self {
            SmoothBlock::Quadratic(q) => q.sigma2,
            SmoothBlock::General(g) => g.sigma2,
        }
    }

    pub fn curvature(&self) -> Curvature {
        match self {
            SmoothBlock::Quadratic(q) if q.sign > 0.0 => Curvature::QuadraticPsd,
            SmoothBlock::Quadratic(_) => Curvature::QuadraticIndefinite,
            SmoothBlock::General(_) => Curvature::General,
        }
    }

    pub fn is_convex(&self) -> bool {
        match self {
            SmoothBlock::Quadratic(q) => q.sign > 0.0,
            SmoothBlock::General(g) => g.sigma2 > 0.0,
        }
    }

    pub fn as_quadratic(&self) -> Option<&QuadraticBlock> {
        match self {
            SmoothBlock::Quadratic(q) => Some(q),
            SmoothBlock::General(_) => None,
        }
    }
}

/// The non-smooth term `h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Regularizer {
    Zero,
    /// `θ‖x‖₁`
    L1 {
        theta: f64,
    },
    /// `θ‖x‖₁` restricted to the Euclidean ball of the given radius.
    L1Ball {
        theta: f64,
        radius: f64,
    },
}

impl Regularizer {
    const BALL_SLACK: f64 = 1e-9;

    pub fn value(&self, x: &Vector) -> f64 {
        match *self {
            Regularizer::Zero => 0.0,
            Regularizer::L1 { theta } => theta * x.lp_norm(1),
            Regularizer::L1Ball { theta, radius } => {
                if x.norm() > radius * (1.0 + Self::BALL_SLACK) {
                    f64::INFINITY
                } else {
                    theta * x.lp_norm(1)
                }
            }
        }
    }

    /// `argmin_u h(u) + ‖u − v‖² / (2·weight)`.
    pub fn prox(&self, v: &Vector, weight: f64) -> Vector {
        match *self {
            Regularizer::Zero => v.clone(),
            Regularizer::L1 { theta } => crate::problems::soft_threshold(v, theta * weight),
            Regularizer::L1Ball { theta, radius } => {
                // The prox of ℓ1 plus a ball indicator is the ball projection of
                // the soft-thresholded point.
                crate::problems::project_ball(&crate::problems::soft_threshold(v, theta * weight), radius)
            }
        }
    }

    /// Distance from `g` to the subdifferential `∂h(x)`.
    pub fn subgradient_distance(&self, x: &Vector, g: &Vector) -> Option<f64> {
        match *self {
            Regularizer::Zero => Some(g.norm()),
            Regularizer::L1 { theta } => Some(l1_residual(x, g, theta).norm()),
            Regularizer::L1Ball { theta, radius } => {
                let base = l1_residual(x, g, theta);
                let xn = x.norm();
                if xn < radius * (1.0 - Self::BALL_SLACK) || xn == 0.0 {
                    return Some(base.norm());
                }
                // On the sphere the normal cone {t·x : t ≥ 0} is added. Only the
                // nonzero coordinates move with t, so the squared distance is a
                // quadratic in t with a closed-form minimizer.
                let mut num = 0.0;
                let mut den = 0.0;
                for j in 0..x.len() {
                    if x[j] != 0.0 {
                        num += x[j] * base[j];
                        den += x[j] * x[j];
                    }
                }
                let t = (num / den).max(0.0);
                let mut r = base;
                for j in 0..x.len() {
                    if x[j] != 0.0 {
                        r[j] -= t * x[j];
                    }
                }
                Some(r.norm())
            }
        }
    }

    pub fn theta(&self) -> f64 {
        match *self {
            Regularizer::Zero => 0.0,
            Regularizer::L1 { theta } | Regularizer::L1Ball { theta, .. } => theta,
        }
    }
}

/// Componentwise residual of `g ∈ θ∂‖x‖₁`.
fn l1_residual(x: &Vector, g: &Vector, theta: f64) -> Vector {
    Vector::from_fn(x.len(), |j, _| {
        if x[j] == 0.0 {
            (g[j].abs() - theta).max(0.0)
        } else {
            g[j] - theta * x[j].signum()
        }
    })
}

/// Where a reference optimal value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    /// Optimum of a convex instance from the proximal-gradient reference solver.
    Oracle,
    /// Final augmented Lagrangian of a long synchronous run.
    SynchronousRun,
    /// Supplied by the user.
    User,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceValue {
    pub value: f64,
    pub provenance: Provenance,
}

/// `N` smooth blocks plus one regularizer over `R^n`.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    blocks: Vec<SmoothBlock>,
    regularizer: Regularizer,
    dim: usize,
    pub reference: Option<ReferenceValue>,
}

impl ProblemInstance {
    pub fn new(blocks: Vec<SmoothBlock>, regularizer: Regularizer) -> Result<Self> {
        let first = blocks
            .first()
            .ok_or_else(|| Error::InvalidArgument("an instance needs at least one block".into()))?;
        let dim = first.dim();
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        for b in &blocks {
            Error::check_dim("block dimension", dim, b.dim())?;
        }
        Ok(Self {
            blocks,
            regularizer,
            dim,
            reference: None,
        })
    }

    pub fn with_reference(mut self, reference: ReferenceValue) -> Self {
        self.reference = Some(reference);
        self
    }

    pub fn blocks(&self) -> &[SmoothBlock] {
        &self.blocks
    }

    pub fn regularizer(&self) -> &Regularizer {
        &self.regularizer
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_workers(&self) -> usize {
        self.blocks.len()
    }

    /// Largest per-block Lipschitz constant.
    pub fn lipschitz(&self) -> f64 {
        self.blocks.iter().map(SmoothBlock::lipschitz).fold(0.0, f64::max)
    }

    /// Smallest per-block strong convexity modulus.
    pub fn strong_convexity(&self) -> f64 {
        self.blocks
            .iter()
            .map(SmoothBlock::strong_convexity)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn is_convex(&self) -> bool {
        self.blocks.iter().all(SmoothBlock::is_convex)
    }

    /// `max_j λmax(M_jᵀM_j)` over quadratic blocks.
    pub fn max_gram_eigenvalue(&self) -> Option<f64> {
        let mut best: Option<f64> = None;
        for b in &self.blocks {
            let q = b.as_quadratic()?;
            best = Some(best.map_or(q.gram_lambda_max(), |v| v.max(q.gram_lambda_max())));
        }
        best
    }
}

/// `(x_0, {x_i}, {λ_i}, k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusState {
    pub x0: Vector,
    pub xs: Vec<Vector>,
    pub duals: Vec<Vector>,
    pub k: usize,
}

impl ConsensusState {
    pub fn zeros(n_workers: usize, dim: usize) -> Self {
        Self::at_consensus(&Vector::zeros(dim), n_workers)
    }

    /// All primal copies equal to `x`, all duals zero.
    pub fn at_consensus(x: &Vector, n_workers: usize) -> Self {
        Self {
            x0: x.clone(),
            xs: vec![x.clone(); n_workers],
            duals: vec![Vector::zeros(x.len()); n_workers],
            k: 0,
        }
    }

    pub fn n_workers(&self) -> usize {
        self.xs.len()
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    fn check(&self, instance: &ProblemInstance) -> Result<()> {
        Error::check_dim("state workers", instance.n_workers(), self.xs.len())?;
        Error::check_dim("state duals", instance.n_workers(), self.duals.len())?;
        Error::check_dim("state x0", instance.dim(), self.x0.len())?;
        for (x, l) in self.xs.iter().zip(&self.duals) {
            Error::check_dim("state x_i", instance.dim(), x.len())?;
            Error::check_dim("state lambda_i", instance.dim(), l.len())?;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        let fin = |v: &Vector| v.iter().all(|e| e.is_finite());
        fin(&self.x0) && self.xs.iter().all(fin) && self.duals.iter().all(fin)
    }
}

/// Residuals of the KKT system of the consensus problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktResidual {
    /// `max_i ‖∇f_i(x_i) + λ_i‖`
    pub worker_stationarity: f64,
    /// `dist(Σ_i λ_i, ∂h(x_0))`, `None` when the regularizer has no distance oracle.
    pub master_stationarity: Option<f64>,
    /// `max_i ‖x_i − x_0‖`
    pub consensus: f64,
}

impl KktResidual {
    pub fn max(&self) -> f64 {
        self.worker_stationarity
            .max(self.master_stationarity.unwrap_or(0.0))
            .max(self.consensus)
    }

    pub fn is_finite(&self) -> bool {
        self.worker_stationarity.is_finite()
            && self.master_stationarity.is_none_or(f64::is_finite)
            && self.consensus.is_finite()
    }
}

/// `Σ_i f_i(x) + h(x)`.
pub fn eval_objective(instance: &ProblemInstance, x: &Vector) -> Result<f64> {
    Error::check_dim("objective argument", instance.dim(), x.len())?;
    let smooth: f64 = instance.blocks.iter().map(|b| b.value(x)).sum();
    Ok(smooth + instance.regularizer.value(x))
}

/// `Σf_i(x_i) + h(x_0) + Σλ_iᵀ(x_i − x_0) + (ρ/2)Σ‖x_i − x_0‖²`.
pub fn eval_augmented_lagrangian(instance: &ProblemInstance, state: &ConsensusState, rho: f64) -> Result<f64> {
    if !(rho > 0.0) {
        return Err(Error::InvalidArgument(format!("rho must be positive, got {rho}")));
    }
    state.check(instance)?;
    let values: Vec<f64> = instance.blocks.iter().zip(&state.xs).map(|(b, x)| b.value(x)).collect();
    Ok(lagrangian_from_values(instance.regularizer(), state, &values, rho))
}

/// Augmented Lagrangian given cached block values `f_i(x_i)`.
pub(crate) fn lagrangian_from_values(reg: &Regularizer, state: &ConsensusState, values: &[f64], rho: f64) -> f64 {
    // Summed in the same order as `eval_objective` so both agree exactly at
    // consensus with zero duals.
    let smooth: f64 = state
        .xs
        .iter()
        .zip(&state.duals)
        .zip(values)
        .map(|((x, l), f)| {
            let diff = x - &state.x0;
            f + l.dot(&diff) + 0.5 * rho * diff.norm_squared()
        })
        .sum();
    smooth + reg.value(&state.x0)
}

pub fn kkt_residuals(instance: &ProblemInstance, state: &ConsensusState) -> Result<KktResidual> {
    state.check(instance)?;
    let grads: Vec<Vector> = instance
        .blocks
        .iter()
        .zip(&state.xs)
        .map(|(b, x)| b.gradient(x))
        .collect();
    Ok(kkt_from_gradients(instance.regularizer(), state, &grads))
}

/// KKT residuals given cached gradients `∇f_i(x_i)`.
pub(crate) fn kkt_from_gradients(reg: &Regularizer, state: &ConsensusState, grads: &[Vector]) -> KktResidual {
    let worker_stationarity = grads
        .iter()
        .zip(&state.duals)
        .map(|(g, l)| (g + l).norm())
        .fold(0.0, f64::max);
    let mut sum_duals = Vector::zeros(state.dim());
    for l in &state.duals {
        sum_duals += l;
    }
    let master_stationarity = reg.subgradient_distance(&state.x0, &sum_duals);
    let consensus = state.xs.iter().map(|x| (x - &state.x0).norm()).fold(0.0, f64::max);
    KktResidual {
        worker_stationarity,
        master_stationarity,
        consensus,
    }
}
