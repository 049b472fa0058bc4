//! Instance generators for the LASSO and sparse PCA families, the worker and
//! master sub-solvers, and the proximal operators they rely on.

mod container;
mod generate;
pub(crate) mod solve;

pub use container::{
    read_instance, read_meta, shard_path, write_instance, write_instance_files, write_shards, InstanceMeta,
};
pub use generate::{gen_lasso, gen_sparse_pca, LassoInstance, SparsePcaInstance};
pub use solve::{solve_master_x0, solve_worker_quadratic, WorkerSolver, INNER_GRADIENT_TOL};

use crate::model::Vector;

/// Componentwise `sign(v_j)·max(|v_j| − κ, 0)`.
pub fn soft_threshold(v: &Vector, kappa: f64) -> Vector {
    v.map(|x| x.signum() * (x.abs() - kappa).max(0.0))
}

/// Euclidean projection onto the ball of the given radius.
pub fn project_ball(v: &Vector, radius: f64) -> Vector {
    let n = v.norm();
    if n <= radius {
        v.clone()
    } else {
        v * (radius / n)
    }
}
