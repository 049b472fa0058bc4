use nalgebra::DMatrix;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::{CsrMatrix, Operator};
use crate::model::{ProblemInstance, QuadraticBlock, Regularizer, SmoothBlock, Vector};
use crate::{Error, Result};

/// `Σ_i ‖A_i w − b_i‖² + θ‖w‖₁` with `b_i = A_i w⁰ + ν_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoInstance {
    pub a: Vec<DMatrix<f64>>,
    pub b: Vec<Vector>,
    pub theta: f64,
    pub w0: Vector,
}

impl LassoInstance {
    /// Entries of `A_i` are standard normal, `w⁰` has `⌈density·n⌉` standard
    /// normal entries on a uniformly drawn support, and `ν_i` has variance
    /// `noise_var`.
    #[allow(clippy::too_many_arguments)]
    pub fn generate(
        n_workers: usize,
        m: usize,
        n: usize,
        theta: f64,
        noise_var: f64,
        density: f64,
        seed: u64,
    ) -> Result<Self> {
        if n_workers == 0 || m == 0 || n == 0 {
            return Err(Error::InvalidArgument(format!(
                "LASSO sizes must be positive (N={n_workers}, m={m}, n={n})"
            )));
        }
        if !(theta > 0.0) {
            return Err(Error::InvalidArgument(format!("theta must be positive, got {theta}")));
        }
        if !(0.0..=1.0).contains(&density) || !(noise_var >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "density must lie in [0, 1] and noise variance be non-negative (density={density}, noise_var={noise_var})"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let support = ((density * n as f64).ceil() as usize).min(n);
        let mut w0 = Vector::zeros(n);
        let mut idx = index::sample(&mut rng, n, support).into_vec();
        idx.sort_unstable();
        for j in idx {
            w0[j] = rng.sample(StandardNormal);
        }
        let noise_std = noise_var.sqrt();
        let mut a = Vec::with_capacity(n_workers);
        let mut b = Vec::with_capacity(n_workers);
        for _ in 0..n_workers {
            let ai = standard_normal_matrix(m, n, &mut rng);
            let noise = Vector::from_fn(m, |_, _| noise_std * rng.sample::<f64, _>(StandardNormal));
            b.push(&ai * &w0 + noise);
            a.push(ai);
        }
        Ok(Self { a, b, theta, w0 })
    }

    pub fn to_problem(&self) -> Result<ProblemInstance> {
        let blocks = self
            .a
            .iter()
            .zip(&self.b)
            .map(|(a, b)| {
                QuadraticBlock::least_squares(Operator::Dense(a.clone()), b.clone()).map(SmoothBlock::Quadratic)
            })
            .collect::<Result<Vec<_>>>()?;
        ProblemInstance::new(blocks, Regularizer::L1 { theta: self.theta })
    }
}

/// Filled in row-major order so the stream layout does not depend on storage.
fn standard_normal_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            m[(r, c)] = rng.sample(StandardNormal);
        }
    }
    m
}

/// `−Σ_j wᵀB_jᵀB_j w + θ‖w‖₁` over the unit Euclidean ball.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsePcaInstance {
    pub b: Vec<CsrMatrix>,
    pub theta: f64,
}

impl SparsePcaInstance {
    /// Each `B_j` has exactly `nnz` standard normal entries at uniformly
    /// drawn distinct positions.
    pub fn generate(n_workers: usize, m: usize, n: usize, theta: f64, nnz: usize, seed: u64) -> Result<Self> {
        if n_workers == 0 || m == 0 || n == 0 {
            return Err(Error::InvalidArgument(format!(
                "sparse PCA sizes must be positive (N={n_workers}, m={m}, n={n})"
            )));
        }
        if nnz > m * n {
            return Err(Error::InvalidArgument(format!(
                "nnz={nnz} exceeds the {m}x{n} matrix size"
            )));
        }
        if !(theta > 0.0) {
            return Err(Error::InvalidArgument(format!("theta must be positive, got {theta}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = Vec::with_capacity(n_workers);
        for _ in 0..n_workers {
            let mut pos = index::sample(&mut rng, m * n, nnz).into_vec();
            pos.sort_unstable();
            let trip = pos
                .into_iter()
                .map(|p| (p / n, p % n, rng.sample(StandardNormal)))
                .collect();
            b.push(CsrMatrix::from_triplets(m, n, trip)?);
        }
        Ok(Self { b, theta })
    }

    pub fn to_problem(&self) -> Result<ProblemInstance> {
        let blocks = self
            .b
            .iter()
            .map(|b| QuadraticBlock::negative_gram(Operator::Sparse(b.clone())).map(SmoothBlock::Quadratic))
            .collect::<Result<Vec<_>>>()?;
        ProblemInstance::new(
            blocks,
            Regularizer::L1Ball {
                theta: self.theta,
                radius: 1.0,
            },
        )
    }
}

pub fn gen_lasso(
    n_workers: usize,
    m: usize,
    n: usize,
    theta: f64,
    noise_var: f64,
    density: f64,
    seed: u64,
) -> Result<ProblemInstance> {
    LassoInstance::generate(n_workers, m, n, theta, noise_var, density, seed)?.to_problem()
}

pub fn gen_sparse_pca(
    n_workers: usize,
    m: usize,
    n: usize,
    theta: f64,
    nnz: usize,
    seed: u64,
) -> Result<ProblemInstance> {
    SparsePcaInstance::generate(n_workers, m, n, theta, nnz, seed)?.to_problem()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::gram_lambda_min;
    use crate::model::{eval_objective, Curvature};

    #[test]
    fn lasso_is_deterministic() {
        let a = LassoInstance::generate(3, 10, 8, 0.1, 0.01, 0.25, 9).unwrap();
        let b = LassoInstance::generate(3, 10, 8, 0.1, 0.01, 0.25, 9).unwrap();
        assert_eq!(a, b);
        let c = LassoInstance::generate(3, 10, 8, 0.1, 0.01, 0.25, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn lasso_support_size() {
        let inst = LassoInstance::generate(1, 5, 100, 0.1, 0.01, 0.05, 1).unwrap();
        assert_eq!(inst.w0.iter().filter(|v| **v != 0.0).count(), 5);
        let inst = LassoInstance::generate(1, 5, 30, 0.1, 0.01, 0.05, 1).unwrap();
        assert_eq!(inst.w0.iter().filter(|v| **v != 0.0).count(), 2);
    }

    #[test]
    fn lasso_full_size_shape() {
        let p = gen_lasso(16, 200, 100, 0.1, 0.01, 0.05, 0).unwrap();
        assert_eq!(p.n_workers(), 16);
        assert_eq!(p.dim(), 100);
        assert_eq!(p.regularizer().theta(), 0.1);
    }

    #[test]
    fn lasso_zero_density_objective_is_noise_energy() {
        let inst = LassoInstance::generate(4, 12, 6, 0.1, 0.01, 0.0, 3).unwrap();
        assert!(inst.w0.iter().all(|v| *v == 0.0));
        let p = inst.to_problem().unwrap();
        let at_zero = eval_objective(&p, &Vector::zeros(6)).unwrap();
        let noise: f64 = inst.b.iter().map(|b| b.norm_squared()).sum();
        assert_eq!(at_zero, noise);
    }

    #[test]
    fn lasso_strong_convexity_when_tall() {
        for seed in 0..5 {
            let inst = LassoInstance::generate(2, 12, 6, 0.1, 0.01, 0.2, seed).unwrap();
            let p = inst.to_problem().unwrap();
            for (blk, a) in p.blocks().iter().zip(&inst.a) {
                let lmin = gram_lambda_min(&Operator::Dense(a.clone()));
                assert!(lmin > 0.0);
                assert!((blk.strong_convexity() - 2.0 * lmin).abs() <= 1e-12 * lmin.max(1.0));
            }
        }
    }

    #[test]
    fn pca_exact_nnz_and_kind() {
        let inst = SparsePcaInstance::generate(3, 20, 10, 0.1, 37, 5).unwrap();
        assert!(inst.b.iter().all(|b| b.nnz() == 37));
        let p = inst.to_problem().unwrap();
        assert!(p
            .blocks()
            .iter()
            .all(|b| b.curvature() == Curvature::QuadraticIndefinite));
        assert_eq!(inst, SparsePcaInstance::generate(3, 20, 10, 0.1, 37, 5).unwrap());
    }

    #[test]
    fn pca_zero_nnz_is_zero_problem() {
        let p = gen_sparse_pca(2, 5, 4, 0.1, 0, 1).unwrap();
        assert_eq!(eval_objective(&p, &Vector::zeros(4)).unwrap(), 0.0);
        assert_eq!(p.lipschitz(), 0.0);
    }

    #[test]
    fn pca_rejects_too_many_entries() {
        assert!(gen_sparse_pca(1, 2, 2, 0.1, 5, 0).is_err());
    }
}
