//! Reference optimal values: an accelerated proximal-gradient solver for
//! convex instances and a long synchronous ADMM run for non-convex ones.

use nalgebra::DMatrix;

use crate::engine::{run_sync, AlgoParams, InitialPoint, Scheme};
use crate::linalg::{gram_lambda_max, Operator};
use crate::model::{eval_augmented_lagrangian, eval_objective, Provenance, ReferenceValue, SmoothBlock, Vector};
use crate::{Error, ProblemInstance, Result};

#[derive(Debug, Clone)]
pub struct ReferenceSolution {
    pub x: Vector,
    pub value: f64,
    pub iterations: usize,
    /// Final norm of the gradient mapping.
    pub residual: f64,
    pub converged: bool,
}

impl ReferenceSolution {
    pub fn reference_value(&self) -> ReferenceValue {
        ReferenceValue {
            value: self.value,
            provenance: Provenance::Oracle,
        }
    }
}

/// Smooth part `Σ_i f_i` collapsed to one quadratic when every block is quadratic.
enum Smooth<'a> {
    Quadratic { q: DMatrix<f64>, c: Vector },
    Blocks(&'a [SmoothBlock]),
}

impl Smooth<'_> {
    fn gradient(&self, x: &Vector) -> Vector {
        match self {
            Smooth::Quadratic { q, c } => (q * x - c) * 2.0,
            Smooth::Blocks(bs) => {
                let mut g = Vector::zeros(x.len());
                for b in bs.iter() {
                    g += b.gradient(x);
                }
                g
            }
        }
    }
}

/// FISTA with gradient-based adaptive restart on `Σf_i + h`. Stops when the
/// gradient mapping falls below `tol`.
pub fn proximal_gradient(instance: &ProblemInstance, tol: f64, max_iters: usize) -> Result<ReferenceSolution> {
    if !instance.is_convex() {
        return Err(Error::Unsupported(
            "the proximal-gradient reference needs convex blocks".into(),
        ));
    }
    let n = instance.dim();
    let quadratic: Option<Vec<_>> = instance.blocks().iter().map(|b| b.as_quadratic()).collect();
    let (smooth, lipschitz) = match quadratic {
        Some(qs) => {
            let mut q = DMatrix::zeros(n, n);
            let mut c = Vector::zeros(n);
            for b in qs {
                q += b.operator().gram() * b.sign();
                c += b.operator().apply_transpose(b.target()) * b.sign();
            }
            // For symmetric PSD Q, λmax(QᵀQ) = λmax(Q)².
            let l = 2.0 * gram_lambda_max(&Operator::Dense(q.clone()), 1e-12).sqrt();
            (Smooth::Quadratic { q, c }, l)
        }
        None => (
            Smooth::Blocks(instance.blocks()),
            instance.blocks().iter().map(SmoothBlock::lipschitz).sum(),
        ),
    };
    if !(lipschitz > 0.0) {
        // Zero smooth part: the minimizer is the prox of h at any point.
        let x = instance.regularizer().prox(&Vector::zeros(n), 1.0);
        let value = eval_objective(instance, &x)?;
        return Ok(ReferenceSolution {
            x,
            value,
            iterations: 0,
            residual: 0.0,
            converged: true,
        });
    }
    let step = 1.0 / lipschitz;
    let reg = instance.regularizer();
    let mut x = Vector::zeros(n);
    let mut y = x.clone();
    let mut t = 1.0_f64;
    let mut residual = f64::INFINITY;
    for it in 0..max_iters {
        let g = smooth.gradient(&y);
        let x_next = reg.prox(&(&y - &g * step), step);
        residual = (&x_next - &y).norm() / step;
        if residual <= tol {
            let value = eval_objective(instance, &x_next)?;
            return Ok(ReferenceSolution {
                x: x_next,
                value,
                iterations: it + 1,
                residual,
                converged: true,
            });
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        if (&y - &x_next).dot(&(&x_next - &x)) > 0.0 {
            t = 1.0;
            y = x_next.clone();
        } else {
            y = &x_next + (&x_next - &x) * ((t - 1.0) / t_next);
            t = t_next;
        }
        x = x_next;
    }
    let value = eval_objective(instance, &x)?;
    Ok(ReferenceSolution {
        x,
        value,
        iterations: max_iters,
        residual,
        converged: false,
    })
}

/// Final augmented Lagrangian of a synchronous run.
pub fn sync_reference(
    instance: &ProblemInstance,
    rho: f64,
    iterations: usize,
    initial: InitialPoint,
) -> Result<ReferenceValue> {
    let mut params = AlgoParams::new(Scheme::Sync, rho, 0.0, iterations);
    params.initial = initial;
    params.detect_divergence = false;
    let trace = run_sync(instance, &params)?;
    let state = trace
        .final_state
        .as_ref()
        .ok_or_else(|| Error::Unsupported("synchronous run kept no state".into()))?;
    let value = eval_augmented_lagrangian(instance, state, rho)?;
    if !value.is_finite() {
        return Err(Error::Infeasible(format!(
            "synchronous reference run at rho={rho} did not stay finite"
        )));
    }
    Ok(ReferenceValue {
        value,
        provenance: Provenance::SynchronousRun,
    })
}
