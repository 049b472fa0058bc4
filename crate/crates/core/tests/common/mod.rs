//! Test-side oracles that share no code with the library's solvers.
#![allow(dead_code)]

use admm_async::problems::LassoInstance;
use nalgebra::{DMatrix, DVector};

/// `Σ‖A_i x − b_i‖² + θ‖x‖₁`, evaluated directly from the raw data.
pub fn lasso_objective(inst: &LassoInstance, x: &DVector<f64>) -> f64 {
    let smooth: f64 = inst
        .a
        .iter()
        .zip(&inst.b)
        .map(|(a, b)| (a * x - b).norm_squared())
        .sum();
    smooth + inst.theta * x.lp_norm(1)
}

pub struct CdSolution {
    pub x: DVector<f64>,
    pub value: f64,
    pub sweeps: usize,
}

/// Cyclic coordinate descent on `xᵀQx − 2cᵀx + θ‖x‖₁` with
/// `Q = ΣA_iᵀA_i`, `c = ΣA_iᵀb_i`; stops when a full sweep moves no
/// coordinate by more than `tol`.
pub fn lasso_coordinate_descent(inst: &LassoInstance, tol: f64, max_sweeps: usize) -> CdSolution {
    let n = inst.w0.len();
    let mut q = DMatrix::<f64>::zeros(n, n);
    let mut c = DVector::<f64>::zeros(n);
    for (a, b) in inst.a.iter().zip(&inst.b) {
        q += a.transpose() * a;
        c += a.transpose() * b;
    }
    let mut x = DVector::<f64>::zeros(n);
    // qx = Q x, kept up to date.
    let mut qx = DVector::<f64>::zeros(n);
    let mut sweeps = 0;
    while sweeps < max_sweeps {
        sweeps += 1;
        let mut biggest: f64 = 0.0;
        for j in 0..n {
            let qjj = q[(j, j)];
            if qjj == 0.0 {
                continue;
            }
            let rest = qx[j] - qjj * x[j];
            // minimise qjj t² + 2(rest − c_j) t + θ|t|
            let z = c[j] - rest;
            let t = z.signum() * (z.abs() - inst.theta / 2.0).max(0.0) / qjj;
            let delta = t - x[j];
            if delta != 0.0 {
                for i in 0..n {
                    qx[i] += q[(i, j)] * delta;
                }
                x[j] = t;
                biggest = biggest.max(delta.abs());
            }
        }
        if biggest <= tol {
            break;
        }
    }
    let value = lasso_objective(inst, &x);
    CdSolution { x, value, sweeps }
}

/// Relative accuracy `|L − F| / |F|`.
pub fn rel(l: f64, f: f64) -> f64 {
    (l - f).abs() / f.abs()
}
