//! Post-hoc checks of recorded runs: the per-iteration descent bound, the
//! cumulative staleness bound, lower-boundedness of the augmented
//! Lagrangian, the dual identity, accuracy curves and the ergodic rate.

use serde::{Deserialize, Serialize};

use crate::engine::{IterateSnapshot, RunTrace, Scheme, SyncOrder};
use crate::model::{KktResidual, ReferenceValue, Vector};
use crate::scheduler::Schedule;
use crate::{Error, ProblemInstance, Result};

/// Relative tolerance of the inequality checks.
pub const CHECK_TOL: f64 = 1e-8;
/// Bound on the dual identity residual.
pub const IDENTITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckStatus {
    Pass,
    Fail,
    /// The run does not satisfy the check's precondition; results are
    /// reported but carry no verdict.
    HypothesisViolated,
}

/// `tol = CHECK_TOL · (1 + |L_ρ(0)|)`.
pub fn scale_tolerance(trace: &RunTrace) -> f64 {
    CHECK_TOL * (1.0 + trace.initial.lagrangian.abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescentCheck {
    pub k: usize,
    /// `L_ρ(k+1) − L_ρ(k)`
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Report {
    pub status: CheckStatus,
    pub min_slack: f64,
    pub tolerance: f64,
    pub violations: usize,
    #[serde(skip)]
    pub checks: Vec<DescentCheck>,
}

fn master_view_order(trace: &RunTrace) -> Result<()> {
    match (trace.scheme, trace.sync_order) {
        (Scheme::AdAdmm, _) | (Scheme::Sync, SyncOrder::WorkersFirst) => Ok(()),
        _ => Err(Error::Unsupported(format!(
            "the descent bound applies to AD-ADMM ordered traces, not '{}'",
            trace.scheme.name()
        ))),
    }
}

/// Per-iteration bound
/// `ΔL ≤ −(2γ+Nρ)/2·Δx₀² + (1/ρ+1/2)ΣΔλ² + (1+ρ²)/2·Σstale² + c·ΣΔx²`
/// with `c = (1−ρ+L)/2`, or `(1−ρ)/2` when every block is convex.
/// Requires `ρ ≥ L`.
pub fn check_lemma1(trace: &RunTrace, instance: &ProblemInstance) -> Result<Lemma1Report> {
    master_view_order(trace)?;
    let (rho, gamma) = (trace.rho, trace.gamma);
    let n = trace.n_workers as f64;
    let l = instance.lipschitz();
    let c_dx = if instance.is_convex() {
        0.5 * (1.0 - rho)
    } else {
        0.5 * (1.0 - rho + l)
    };
    let mut prev = trace.initial.lagrangian;
    let mut checks = Vec::with_capacity(trace.records.len());
    for r in &trace.records {
        let lhs = r.lagrangian - prev;
        let rhs = -0.5 * (2.0 * gamma + n * rho) * r.dx0_sq
            + (1.0 / rho + 0.5) * r.dlambda_sq
            + 0.5 * (1.0 + rho * rho) * r.staleness_sq
            + c_dx * r.dx_sq;
        checks.push(DescentCheck {
            k: r.k,
            lhs,
            rhs,
            slack: rhs - lhs,
        });
        prev = r.lagrangian;
    }
    let tolerance = scale_tolerance(trace);
    let min_slack = checks.iter().map(|c| c.slack).fold(f64::INFINITY, f64::min);
    let violations = checks.iter().filter(|c| !(c.slack >= -tolerance)).count();
    let status = if rho < l {
        CheckStatus::HypothesisViolated
    } else if violations == 0 {
        CheckStatus::Pass
    } else {
        CheckStatus::Fail
    };
    Ok(Lemma1Report {
        status,
        min_slack,
        tolerance,
        violations,
        checks,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lemma2Report {
    pub status: CheckStatus,
    /// `Σ_{j≤k} Σ_{i∈A_j} ‖x_0^j − x_0^{k̄_i+1}‖²` over the whole run.
    pub lhs: f64,
    /// `S(τ−1)² Σ_{j<k} ‖x_0^{j+1} − x_0^j‖²` over the whole run.
    pub rhs: f64,
    /// Largest `lhs − rhs` over all prefixes.
    pub worst_gap: f64,
}

/// Cumulative staleness bound, checked on every prefix of the run.
pub fn check_lemma2(trace: &RunTrace, s: usize, tau: usize) -> Lemma2Report {
    let factor = s as f64 * (tau.saturating_sub(1) as f64).powi(2);
    let (mut lhs, mut dx0_before) = (0.0, 0.0);
    let mut worst_gap = f64::NEG_INFINITY;
    let mut ok = true;
    let mut rhs = 0.0;
    for r in &trace.records {
        lhs += r.staleness_sq;
        rhs = factor * dx0_before;
        let gap = lhs - rhs;
        worst_gap = worst_gap.max(gap);
        // Exact in real arithmetic; allow for rounding in the sums.
        if gap > 1e-12 * (1.0 + rhs) {
            ok = false;
        }
        dx0_before += r.dx0_sq;
    }
    Lemma2Report {
        status: if ok { CheckStatus::Pass } else { CheckStatus::Fail },
        lhs,
        rhs,
        worst_gap: if trace.records.is_empty() { 0.0 } else { worst_gap },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lemma3Report {
    pub status: CheckStatus,
    /// `min_k L_ρ(k) − F_lower`
    pub min_margin: f64,
    pub tolerance: f64,
}

/// `L_ρ` stays above `f_lower` along the run. Requires `ρ ≥ L`. For
/// non-convex instances `f_lower` is an observed value, so a pass is only a
/// necessary condition.
pub fn check_lemma3(trace: &RunTrace, instance: &ProblemInstance, f_lower: f64) -> Lemma3Report {
    let min_l = std::iter::once(trace.initial.lagrangian)
        .chain(trace.records.iter().map(|r| r.lagrangian))
        .fold(f64::INFINITY, f64::min);
    let min_margin = min_l - f_lower;
    let tolerance = scale_tolerance(trace);
    let status = if trace.rho < instance.lipschitz() {
        CheckStatus::HypothesisViolated
    } else if min_margin >= -tolerance {
        CheckStatus::Pass
    } else {
        CheckStatus::Fail
    };
    Lemma3Report {
        status,
        min_margin,
        tolerance,
    }
}

/// Largest recorded dual-identity residual.
pub fn identity_max(trace: &RunTrace) -> f64 {
    trace.records.iter().map(|r| r.identity_residual).fold(0.0, f64::max)
}

/// `|L_ρ(k) − F_ref| / |F_ref|` per iteration.
pub fn accuracy(trace: &RunTrace, reference: ReferenceValue) -> Result<Vec<f64>> {
    let f = reference.value;
    if f == 0.0 || !f.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "accuracy needs a finite non-zero reference value, got {f}"
        )));
    }
    Ok(trace
        .records
        .iter()
        .map(|r| (r.lagrangian - f).abs() / f.abs())
        .collect())
}

pub fn kkt_trajectory(trace: &RunTrace) -> Vec<KktResidual> {
    trace.records.iter().map(|r| r.kkt).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErgodicGap {
    pub k: usize,
    pub gap: f64,
}

/// `|Σf_i(x̄_i^k) + h(x̄_0^k) − F*| + Σ‖x̄_i^k − x̄_0^k‖` for `k = 1, 2, …`.
pub fn ergodic_gaps(instance: &ProblemInstance, iterates: &[IterateSnapshot], f_star: f64) -> Result<Vec<ErgodicGap>> {
    let n = instance.dim();
    let mut out = Vec::with_capacity(iterates.len());
    let mut sum0 = Vector::zeros(n);
    let mut sums = vec![Vector::zeros(n); instance.n_workers()];
    for (idx, s) in iterates.iter().enumerate() {
        Error::check_dim("iterate workers", instance.n_workers(), s.xs.len())?;
        Error::check_dim("iterate dimension", n, s.x0.len())?;
        sum0 += &s.x0;
        for (acc, x) in sums.iter_mut().zip(&s.xs) {
            *acc += x;
        }
        let k = idx + 1;
        let inv = 1.0 / k as f64;
        let avg0 = &sum0 * inv;
        let mut value = instance.regularizer().value(&avg0);
        let mut spread = 0.0;
        for (b, acc) in instance.blocks().iter().zip(&sums) {
            let avg = acc * inv;
            value += b.value(&avg);
            spread += (&avg - &avg0).norm();
        }
        out.push(ErgodicGap {
            k,
            gap: (value - f_star).abs() + spread,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    /// `max_k k·gap(k)`
    pub fitted_c: f64,
    /// `k·gap(k) ≤ 2·(100·gap(100))` for every `k ≥ 100`.
    pub monotone_ok: bool,
    /// `max_{k≥100} k·gap(k) / (100·gap(100))`
    pub worst_ratio: f64,
}

pub const RATE_MIN_SAMPLES: usize = 200;
const RATE_ANCHOR: usize = 100;

/// Boundedness proxy for an `O(1/k)` ergodic rate.
pub fn check_theorem2_rate(gaps: &[ErgodicGap]) -> Result<RateReport> {
    if gaps.len() < RATE_MIN_SAMPLES {
        return Err(Error::InsufficientData {
            needed: RATE_MIN_SAMPLES,
            got: gaps.len(),
        });
    }
    let fitted_c = gaps.iter().map(|g| g.k as f64 * g.gap).fold(0.0, f64::max);
    let anchor = gaps
        .iter()
        .find(|g| g.k == RATE_ANCHOR)
        .ok_or_else(|| Error::InvalidArgument(format!("no gap sample at k={RATE_ANCHOR}")))?;
    let base = RATE_ANCHOR as f64 * anchor.gap;
    let worst = gaps
        .iter()
        .filter(|g| g.k >= RATE_ANCHOR)
        .map(|g| g.k as f64 * g.gap)
        .fold(0.0, f64::max);
    let worst_ratio = if base > 0.0 {
        worst / base
    } else if worst == 0.0 {
        1.0
    } else {
        f64::INFINITY
    };
    Ok(RateReport {
        fitted_c,
        monotone_ok: worst <= 2.0 * base,
        worst_ratio,
    })
}

/// `max_i ‖λ_i‖`, the dual-size estimate used with the ergodic bound.
pub fn dual_bound_estimate(duals: &[Vector]) -> f64 {
    duals.iter().map(|l| l.norm()).fold(0.0, f64::max)
}

/// `(τ, S)` observed in a trace: the largest delay plus one, and
/// `min(N, max|A_k| + 1)`.
pub fn observed_delay_bounds(trace: &RunTrace) -> Result<(usize, usize)> {
    let sets = trace.records.iter().map(|r| r.arrivals.clone()).collect();
    let schedule = Schedule::from_arrivals(trace.n_workers, sets)?;
    let max_d = schedule
        .records()
        .iter()
        .flat_map(|r| r.d.iter().copied())
        .max()
        .unwrap_or(0);
    Ok((max_d + 1, schedule.suggested_s()))
}

/// Everything `check` reports for one trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub tau: usize,
    pub s: usize,
    pub lemma1: Option<Lemma1Report>,
    pub lemma2: Lemma2Report,
    pub lemma3: Option<Lemma3Report>,
    pub identity_max: f64,
    pub identity_ok: bool,
    pub final_kkt: KktResidual,
}

pub fn check_trace(
    trace: &RunTrace,
    instance: &ProblemInstance,
    tau: usize,
    s: usize,
    f_lower: Option<f64>,
) -> Result<CheckReport> {
    Error::check_dim("trace workers", instance.n_workers(), trace.n_workers)?;
    Error::check_dim("trace dimension", instance.dim(), trace.dim)?;
    let lemma1 = match check_lemma1(trace, instance) {
        Ok(r) => Some(r),
        Err(Error::Unsupported(_)) => None,
        Err(e) => return Err(e),
    };
    let identity = identity_max(trace);
    Ok(CheckReport {
        tau,
        s,
        lemma1,
        lemma2: check_lemma2(trace, s, tau),
        lemma3: f_lower.map(|f| check_lemma3(trace, instance, f)),
        identity_max: identity,
        identity_ok: identity <= IDENTITY_TOL,
        final_kkt: trace.last().map_or(trace.initial.kkt, |r| r.kkt),
    })
}
