//! Closed-form penalty and proximal-weight bounds.
//!
//! AD-ADMM converges when `ρ` exceeds a bound that depends only on the
//! Lipschitz constant `L` and `γ` exceeds a bound that grows with `(τ−1)²`.
//! The alternative scheme instead needs strongly convex blocks and a `ρ`
//! that shrinks with `τ`.

use serde::{Deserialize, Serialize};

use crate::model::{eval_augmented_lagrangian, ConsensusState};
use crate::scheduler::Schedule;
use crate::{Error, ProblemInstance, Result};

/// Relative margin added above each strict lower bound when recommending.
pub const MARGIN: f64 = 0.01;

/// `((1+L+L²) + √((1+L+L²)² + 8L²)) / 2`
pub fn rho_min_nonconvex(lipschitz: f64) -> f64 {
    let l = lipschitz;
    let a = 1.0 + l + l * l;
    0.5 * (a + (a * a + 8.0 * l * l).sqrt())
}

/// `((1+L²) + √((1+L²)² + 8L²)) / 2`
pub fn rho_min_convex(lipschitz: f64) -> f64 {
    let l = lipschitz;
    let a = 1.0 + l * l;
    0.5 * (a + (a * a + 8.0 * l * l).sqrt())
}

/// `(S(1+ρ²)(τ−1)² − Nρ) / 2`. Negative at `τ = 1`; callers clamp.
pub fn gamma_min(s: usize, rho: f64, tau: usize, n_workers: usize) -> f64 {
    let d = tau.saturating_sub(1) as f64;
    0.5 * (s as f64 * (1.0 + rho * rho) * d * d - n_workers as f64 * rho)
}

/// `σ² / ((5τ−3)·max{2τ, 3(τ−1)})`.
pub fn rho_max_alternative(sigma2: f64, tau: usize) -> Result<f64> {
    if tau == 0 {
        return Err(Error::InvalidArgument("tau must be at least 1".into()));
    }
    if !(sigma2 > 0.0) {
        return Err(Error::Infeasible(
            "the alternative scheme needs strongly convex blocks (sigma^2 > 0)".into(),
        ));
    }
    let t = tau as f64;
    Ok(sigma2 / ((5.0 * t - 3.0) * (2.0 * t).max(3.0 * (t - 1.0))))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryParams {
    pub lipschitz: f64,
    pub sigma2: f64,
    pub tau: usize,
    pub n_workers: usize,
    /// Bound on the arrival-set size.
    pub s: usize,
    pub f_star_lower: Option<f64>,
}

impl TheoryParams {
    /// Constants from the instance; `S` from a dry-run schedule when given,
    /// otherwise `N`.
    pub fn from_instance(instance: &ProblemInstance, tau: usize, schedule: Option<&Schedule>) -> Self {
        let n = instance.n_workers();
        Self {
            lipschitz: instance.lipschitz(),
            sigma2: instance.strong_convexity(),
            tau,
            n_workers: n,
            s: schedule.map_or(n, Schedule::suggested_s),
            f_star_lower: instance.reference.map(|r| r.value),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lipschitz >= 0.0) || !(self.sigma2 >= 0.0) {
            return Err(Error::InvalidArgument("L and sigma^2 must be non-negative".into()));
        }
        if self.tau == 0 || self.s == 0 || self.s > self.n_workers {
            return Err(Error::InvalidArgument(format!(
                "need tau >= 1 and 1 <= S <= N (tau={}, S={}, N={})",
                self.tau, self.s, self.n_workers
            )));
        }
        Ok(())
    }
}

/// Parameter report. Bounds are the raw formula values; recommendations
/// sit `MARGIN` above them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub theory: TheoryParams,
    pub convex: bool,
    pub rho_bound: f64,
    pub rho: f64,
    /// Unclamped `γ` bound at the recommended `ρ`.
    pub gamma_bound: f64,
    pub gamma: f64,
    pub rho_max_alternative: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alternative_note: Option<String>,
}

/// `ρ` and `γ` satisfying the AD-ADMM conditions, plus the alternative
/// scheme's `ρ` ceiling when it exists.
pub fn recommend(theory: &TheoryParams, convex: bool) -> Result<Recommendation> {
    theory.validate()?;
    let rho_bound = if convex {
        rho_min_convex(theory.lipschitz)
    } else {
        rho_min_nonconvex(theory.lipschitz)
    };
    let rho = rho_bound * (1.0 + MARGIN);
    let gamma_bound = gamma_min(theory.s, rho, theory.tau, theory.n_workers);
    let gamma = if gamma_bound > 0.0 {
        gamma_bound * (1.0 + MARGIN)
    } else {
        0.0
    };
    let (rho_max_alternative, alternative_note) = match rho_max_alternative(theory.sigma2, theory.tau) {
        Ok(v) => (Some(v), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(Recommendation {
        theory: theory.clone(),
        convex,
        rho_bound,
        rho,
        gamma_bound,
        gamma,
        rho_max_alternative,
        alternative_note,
    })
}

/// True iff `L_ρ` at `state0` is finite and at least `f_star_lower`.
pub fn check_initial_condition(
    instance: &ProblemInstance,
    state0: &ConsensusState,
    rho: f64,
    f_star_lower: f64,
) -> Result<bool> {
    if !state0.is_finite() {
        return Ok(false);
    }
    let l = eval_augmented_lagrangian(instance, state0, rho)?;
    Ok(l.is_finite() && l >= f_star_lower)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{gen_lasso, LassoInstance};
    use crate::Vector;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * b.abs().max(1.0)
    }

    #[test]
    fn rho_bound_examples() {
        assert!(close(rho_min_nonconvex(1.0), (3.0 + 17f64.sqrt()) / 2.0));
        assert!(close(rho_min_nonconvex(1.0), 3.561_552_812_808_83));
        assert_eq!(rho_min_nonconvex(0.0), 1.0);
        assert!(close(rho_min_convex(1.0), 1.0 + 3f64.sqrt()));
        assert_eq!(rho_min_convex(0.0), 1.0);
    }

    #[test]
    fn gamma_examples() {
        assert_eq!(gamma_min(3, 2.0, 1, 5), -5.0);
        assert_eq!(gamma_min(1, 1.0, 2, 1), 0.5);
        // Quadratic growth in τ − 1 dominates once τ > 1.
        let g = |t| gamma_min(2, 3.0, t, 4) + 6.0;
        assert!(close(g(5) / g(3), 4.0));
    }

    #[test]
    fn alternative_examples() {
        assert_eq!(rho_max_alternative(1.0, 1).unwrap(), 0.25);
        assert_eq!(rho_max_alternative(1.0, 2).unwrap(), 1.0 / 28.0);
        assert_eq!(rho_max_alternative(4.0, 1).unwrap(), 1.0);
        assert!(matches!(rho_max_alternative(0.0, 2), Err(Error::Infeasible(_))));
    }

    #[test]
    fn monotone_on_grids() {
        let ls: Vec<f64> = (0..200).map(|i| i as f64 * 0.37).collect();
        for w in ls.windows(2) {
            assert!(rho_min_nonconvex(w[1]) > rho_min_nonconvex(w[0]));
            assert!(rho_min_convex(w[1]) >= rho_min_convex(w[0]));
        }
        for &l in &ls {
            assert!(rho_min_nonconvex(l) > l);
            assert!(rho_min_convex(l) <= rho_min_nonconvex(l));
        }
        for tau in 1..30 {
            assert!(gamma_min(3, 2.0, tau + 1, 4) > gamma_min(3, 2.0, tau, 4));
            assert!(rho_max_alternative(2.0, tau + 1).unwrap() < rho_max_alternative(2.0, tau).unwrap());
        }
    }

    #[test]
    fn recommendation_adds_margin_and_clamps() {
        let t = TheoryParams {
            lipschitz: 1.0,
            sigma2: 0.0,
            tau: 1,
            n_workers: 4,
            s: 4,
            f_star_lower: None,
        };
        let r = recommend(&t, false).unwrap();
        assert!(close(r.rho, 1.01 * rho_min_nonconvex(1.0)));
        assert!(r.gamma_bound < 0.0);
        assert_eq!(r.gamma, 0.0);
        assert!(r.rho_max_alternative.is_none());
        let r = recommend(&TheoryParams { tau: 3, ..t }, true).unwrap();
        assert!(r.gamma > r.gamma_bound && r.gamma_bound > 0.0);
    }

    #[test]
    fn initial_condition_cases() {
        let inst = LassoInstance::generate(3, 10, 4, 0.1, 0.01, 0.5, 1).unwrap();
        let p = inst.to_problem().unwrap();
        let zero = ConsensusState::zeros(3, 4);
        let sum_b: f64 = inst.b.iter().map(|b| b.norm_squared()).sum();
        assert_eq!(eval_augmented_lagrangian(&p, &zero, 2.0).unwrap(), sum_b);
        assert!(check_initial_condition(&p, &zero, 2.0, 0.0).unwrap());
        let mut bad = zero.clone();
        bad.x0[0] = f64::NAN;
        assert!(!check_initial_condition(&p, &bad, 2.0, 0.0).unwrap());
        let q = gen_lasso(2, 6, 3, 0.1, 0.01, 0.5, 4).unwrap();
        let x = Vector::from_vec(vec![0.3, -0.1, 0.2]);
        let s = ConsensusState::at_consensus(&x, 2);
        let f = crate::eval_objective(&q, &x).unwrap();
        assert!(check_initial_condition(&q, &s, 1.0, f).unwrap());
    }
}
