use nalgebra::DMatrix;

use crate::linalg::{Operator, SymmetricFactor};
use crate::model::{QuadraticBlock, Regularizer, SmoothBlock, Vector};
use crate::{Error, Result};

/// Gradient-norm tolerance of the inner solver for non-quadratic blocks.
pub const INNER_GRADIENT_TOL: f64 = 1e-10;
const INNER_MAX_ITERS: usize = 200_000;

/// Solves `min_x f(x) + xᵀλ + (ρ/2)‖x − x̂‖²` for one block at a fixed `ρ`.
///
/// Quadratic blocks return the stationary point of the subproblem from a
/// factorization computed once at construction, even when `ρ` is too small
/// for the subproblem to be convex.
#[derive(Debug, Clone)]
pub struct WorkerSolver {
    rho: f64,
    kind: SolverKind,
}

#[derive(Debug, Clone)]
enum SolverKind {
    /// Factor of `2sMᵀM + ρI`; `linear` is `2sMᵀb`.
    Direct {
        factor: SymmetricFactor,
        linear: Vector,
    },
    /// Factor of `ρ/(2s)·I + MMᵀ`, used when `M` has fewer rows than columns.
    Woodbury {
        factor: SymmetricFactor,
        op: Operator,
        linear: Vector,
    },
    General(SmoothBlock),
}

impl WorkerSolver {
    pub fn new(block: &SmoothBlock, rho: f64) -> Result<Self> {
        if !(rho > 0.0) {
            return Err(Error::InvalidArgument(format!("rho must be positive, got {rho}")));
        }
        let kind = match block {
            SmoothBlock::Quadratic(q) => quadratic_kind(q, rho)?,
            SmoothBlock::General(_) => SolverKind::General(block.clone()),
        };
        Ok(Self { rho, kind })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn solve(&self, lambda: &Vector, x0_ref: &Vector) -> Vector {
        let rho = self.rho;
        match &self.kind {
            SolverKind::Direct { factor, linear } => {
                let rhs = x0_ref * rho - lambda + linear;
                factor.solve(&rhs)
            }
            SolverKind::Woodbury { factor, op, linear } => {
                // (ρI + 2sMᵀM)⁻¹ = (1/ρ)(I − Mᵀ(ρ/(2s)·I + MMᵀ)⁻¹M)
                let rhs = x0_ref * rho - lambda + linear;
                let inner = factor.solve(&op.apply(&rhs));
                (rhs - op.apply_transpose(&inner)) / rho
            }
            SolverKind::General(block) => accelerated_gradient(block, lambda, x0_ref, rho),
        }
    }
}

fn quadratic_kind(q: &QuadraticBlock, rho: f64) -> Result<SolverKind> {
    let s = q.sign();
    let op = q.operator();
    let linear = op.apply_transpose(q.target()) * (2.0 * s);
    if op.rows() < op.cols() {
        let mut inner = op.outer_gram();
        let shift = rho / (2.0 * s);
        for i in 0..inner.nrows() {
            inner[(i, i)] += shift;
        }
        let factor = SymmetricFactor::new(inner, "worker subproblem (low-rank form)")?;
        Ok(SolverKind::Woodbury {
            factor,
            op: op.clone(),
            linear,
        })
    } else {
        let mut matrix: DMatrix<f64> = op.gram() * (2.0 * s);
        for i in 0..matrix.nrows() {
            matrix[(i, i)] += rho;
        }
        let factor = SymmetricFactor::new(matrix, "worker subproblem")?;
        Ok(SolverKind::Direct { factor, linear })
    }
}

/// Nesterov-accelerated gradient with adaptive restart on the subproblem.
fn accelerated_gradient(block: &SmoothBlock, lambda: &Vector, x0_ref: &Vector, rho: f64) -> Vector {
    let grad = |x: &Vector| block.gradient(x) + lambda + (x - x0_ref) * rho;
    let step = 1.0 / (block.lipschitz() + rho);
    let mut x = x0_ref.clone();
    let mut y = x.clone();
    let mut t = 1.0_f64;
    for _ in 0..INNER_MAX_ITERS {
        let gy = grad(&y);
        let x_next = &y - gy * step;
        let g_next = grad(&x_next);
        if g_next.norm() <= INNER_GRADIENT_TOL {
            return x_next;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let momentum = (&x_next - &x) * ((t - 1.0) / t_next);
        if g_next.dot(&(&x_next - &x)) > 0.0 {
            // Restart when momentum points uphill.
            t = 1.0;
            y = x_next.clone();
        } else {
            t = t_next;
            y = &x_next + momentum;
        }
        x = x_next;
    }
    x
}

/// One-shot subproblem solve. Engines keep a [`WorkerSolver`] instead so the
/// factorization is reused across iterations.
pub fn solve_worker_quadratic(block: &SmoothBlock, lambda: &Vector, x0_ref: &Vector, rho: f64) -> Result<Vector> {
    Error::check_dim("worker dual", block.dim(), lambda.len())?;
    Error::check_dim("worker reference point", block.dim(), x0_ref.len())?;
    Ok(WorkerSolver::new(block, rho)?.solve(lambda, x0_ref))
}

/// `argmin h(x₀) − x₀ᵀΣλ + (ρ/2)Σ‖x_i − x₀‖² + (γ/2)‖x₀ − x₀_prev‖²`.
pub fn solve_master_x0(
    reg: &Regularizer,
    sum_lambda: &Vector,
    sum_x: &Vector,
    n_workers: usize,
    rho: f64,
    gamma: f64,
    x0_prev: &Vector,
) -> Result<Vector> {
    Error::check_dim("master sum of x", sum_lambda.len(), sum_x.len())?;
    Error::check_dim("master previous x0", sum_lambda.len(), x0_prev.len())?;
    if !(rho > 0.0) || !(gamma >= 0.0) || n_workers == 0 {
        return Err(Error::InvalidArgument(format!(
            "master update needs rho > 0, gamma >= 0, N >= 1 (rho={rho}, gamma={gamma}, N={n_workers})"
        )));
    }
    Ok(master_prox(reg, sum_lambda, sum_x, n_workers, rho, gamma, x0_prev))
}

pub(crate) fn master_prox(
    reg: &Regularizer,
    sum_lambda: &Vector,
    sum_x: &Vector,
    n_workers: usize,
    rho: f64,
    gamma: f64,
    x0_prev: &Vector,
) -> Vector {
    let denom = n_workers as f64 * rho + gamma;
    let mut v = sum_lambda + sum_x * rho;
    if gamma > 0.0 {
        v += x0_prev * gamma;
    }
    v /= denom;
    reg.prox(&v, 1.0 / denom)
}
