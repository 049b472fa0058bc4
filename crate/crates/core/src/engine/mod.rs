//! The three algorithm drivers and the master-side state machine they share
//! with the TCP runtime.

mod params;
mod trace;

pub use params::{AlgoParams, InitialPoint, Scheme, StopRule, SyncOrder};
pub use trace::{ergodic_averages, InitialRecord, IterateSnapshot, IterationRecord, RunTrace, StopReason};

use std::time::Instant;

use rayon::prelude::*;

use crate::model::{kkt_from_gradients, lagrangian_from_values, ConsensusState, ProblemInstance, Vector};
use crate::problems::{solve::master_prox, WorkerSolver};
use crate::scheduler::Schedule;
use crate::{Error, Result};

/// Factor by which the accuracy or the KKT residual may exceed its value at
/// the starting point before a run is declared divergent.
pub const DIVERGENCE_FACTOR: f64 = 10.0;

/// Worker step: solve the subproblem against `x0_hat`, then
/// `λ ← λ + ρ(x − x0_hat)`. Returns `(x, λ)`.
pub fn worker_update(solver: &WorkerSolver, lambda: &Vector, x0_hat: &Vector) -> (Vector, Vector) {
    let x = solver.solve(lambda, x0_hat);
    let lambda_next = lambda + (&x - x0_hat) * solver.rho();
    (x, lambda_next)
}

/// Builds one solver per block (factorizations in parallel).
pub fn build_solvers(instance: &ProblemInstance, rho: f64) -> Result<Vec<WorkerSolver>> {
    instance
        .blocks()
        .par_iter()
        .map(|b| WorkerSolver::new(b, rho))
        .collect()
}

/// Ordered parallel map over worker indices.
fn map_workers<T: Send>(idx: &[usize], f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    if idx.len() > 1 {
        idx.par_iter().map(|&i| f(i)).collect()
    } else {
        idx.iter().map(|&i| f(i)).collect()
    }
}

fn sum_vectors(vs: &[Vector], dim: usize) -> Vector {
    let mut s = Vector::zeros(dim);
    for v in vs {
        s += v;
    }
    s
}

/// Cached `f_i(x_i)` and `∇f_i(x_i)`; only workers whose `x_i` moved are
/// re-evaluated.
struct Evaluator<'a> {
    instance: &'a ProblemInstance,
    rho: f64,
    values: Vec<f64>,
    grads: Vec<Vector>,
    arrived_once: Vec<bool>,
    track_objective: bool,
}

impl<'a> Evaluator<'a> {
    fn new(instance: &'a ProblemInstance, state: &ConsensusState, rho: f64, track_objective: bool) -> Self {
        let all: Vec<usize> = (0..instance.n_workers()).collect();
        let (values, grads) = map_workers(&all, |i| instance.blocks()[i].value_and_gradient(&state.xs[i]))
            .into_iter()
            .unzip();
        Self {
            instance,
            rho,
            values,
            grads,
            arrived_once: vec![false; instance.n_workers()],
            track_objective,
        }
    }

    fn refresh(&mut self, state: &ConsensusState, idx: &[usize]) {
        let blocks = self.instance.blocks();
        let fresh = map_workers(idx, |i| blocks[i].value_and_gradient(&state.xs[i]));
        for (&i, (v, g)) in idx.iter().zip(fresh) {
            self.values[i] = v;
            self.grads[i] = g;
            self.arrived_once[i] = true;
        }
    }

    fn objective(&self, x0: &Vector) -> Option<f64> {
        if !self.track_objective {
            return None;
        }
        let all: Vec<usize> = (0..self.instance.n_workers()).collect();
        let vals = map_workers(&all, |i| self.instance.blocks()[i].value(x0));
        Some(vals.iter().sum::<f64>() + self.instance.regularizer().value(x0))
    }

    fn initial(&self, state: &ConsensusState) -> InitialRecord {
        InitialRecord {
            lagrangian: lagrangian_from_values(self.instance.regularizer(), state, &self.values, self.rho),
            objective: self.objective(&state.x0),
            kkt: kkt_from_gradients(self.instance.regularizer(), state, &self.grads),
        }
    }

    fn record(&self, state: &ConsensusState, k: usize, arrivals: &[usize], d: Diffs) -> IterationRecord {
        let identity_residual = (0..state.n_workers())
            .filter(|&i| self.arrived_once[i])
            .map(|i| (&self.grads[i] + &state.duals[i]).norm() / (1.0 + state.duals[i].norm()))
            .fold(0.0, f64::max);
        IterationRecord {
            k,
            arrivals: arrivals.to_vec(),
            lagrangian: lagrangian_from_values(self.instance.regularizer(), state, &self.values, self.rho),
            objective: self.objective(&state.x0),
            kkt: kkt_from_gradients(self.instance.regularizer(), state, &self.grads),
            dx0_sq: d.dx0_sq,
            staleness_sq: d.staleness_sq,
            dlambda_sq: d.dlambda_sq,
            dx_sq: d.dx_sq,
            identity_residual,
            elapsed: 0.0,
        }
    }
}

#[derive(Default, Clone, Copy)]
struct Diffs {
    dx0_sq: f64,
    staleness_sq: f64,
    dlambda_sq: f64,
    dx_sq: f64,
}

/// Master side of AD-ADMM seen as a single recursion: consumes the
/// `(x_i, λ_i)` of arrived workers, updates `x_0`, and refreshes the `x_0`
/// served to those workers only.
pub struct AdAdmmCore<'a> {
    rho: f64,
    gamma: f64,
    state: ConsensusState,
    served: Vec<Vector>,
    eval: Evaluator<'a>,
}

impl<'a> AdAdmmCore<'a> {
    pub fn new(
        instance: &'a ProblemInstance,
        rho: f64,
        gamma: f64,
        initial: ConsensusState,
        track_objective: bool,
    ) -> Result<Self> {
        if initial.n_workers() != instance.n_workers() || initial.dim() != instance.dim() {
            return Err(Error::DimensionMismatch {
                context: "initial state",
                expected: instance.n_workers() * instance.dim(),
                found: initial.n_workers() * initial.dim(),
            });
        }
        let served = vec![initial.x0.clone(); instance.n_workers()];
        let eval = Evaluator::new(instance, &initial, rho, track_objective);
        Ok(Self {
            rho,
            gamma,
            state: initial,
            served,
            eval,
        })
    }

    pub fn state(&self) -> &ConsensusState {
        &self.state
    }

    pub fn into_state(self) -> ConsensusState {
        self.state
    }

    /// The `x_0` most recently sent to worker `i`.
    pub fn served(&self, i: usize) -> &Vector {
        &self.served[i]
    }

    pub fn initial_record(&self) -> InitialRecord {
        self.eval.initial(&self.state)
    }

    /// One master iteration. `updates[j]` is the `(x_i, λ_i)` of worker
    /// `arrivals[j]`; `arrivals` must be sorted and non-empty.
    pub fn apply(&mut self, arrivals: &[usize], updates: Vec<(Vector, Vector)>) -> Result<IterationRecord> {
        if arrivals.is_empty() || arrivals.len() != updates.len() {
            return Err(Error::InvalidArgument(format!(
                "{} arrivals with {} updates",
                arrivals.len(),
                updates.len()
            )));
        }
        if arrivals.windows(2).any(|w| w[0] >= w[1]) || arrivals[arrivals.len() - 1] >= self.state.n_workers() {
            return Err(Error::InvalidArgument(format!("invalid arrival set {arrivals:?}")));
        }
        let n = self.state.dim();
        let mut d = Diffs::default();
        for (&i, (x, l)) in arrivals.iter().zip(updates) {
            Error::check_dim("worker update x", n, x.len())?;
            Error::check_dim("worker update lambda", n, l.len())?;
            d.staleness_sq += (&self.served[i] - &self.state.x0).norm_squared();
            d.dx_sq += (&x - &self.state.xs[i]).norm_squared();
            d.dlambda_sq += (&l - &self.state.duals[i]).norm_squared();
            self.state.xs[i] = x;
            self.state.duals[i] = l;
        }
        self.eval.refresh(&self.state, arrivals);
        let x0_next = master_prox(
            self.eval.instance.regularizer(),
            &sum_vectors(&self.state.duals, n),
            &sum_vectors(&self.state.xs, n),
            self.state.n_workers(),
            self.rho,
            self.gamma,
            &self.state.x0,
        );
        d.dx0_sq = (&x0_next - &self.state.x0).norm_squared();
        self.state.x0 = x0_next;
        for &i in arrivals {
            self.served[i] = self.state.x0.clone();
        }
        let k = self.state.k;
        self.state.k += 1;
        Ok(self.eval.record(&self.state, k, arrivals, d))
    }

    /// Simulated worker updates for `arrivals` against their served `x_0`.
    pub fn simulate_updates(&self, solvers: &[WorkerSolver], arrivals: &[usize]) -> Vec<(Vector, Vector)> {
        map_workers(arrivals, |i| {
            worker_update(&solvers[i], &self.state.duals[i], &self.served[i])
        })
    }
}

/// Divergence rule: non-finite values, accuracy above `DIVERGENCE_FACTOR`
/// times its starting value (when a reference value is known), or largest KKT
/// residual above `DIVERGENCE_FACTOR` times its starting value.
struct Monitor {
    reference: Option<f64>,
    accuracy0: Option<f64>,
    kkt0: f64,
}

impl Monitor {
    fn new(initial: &InitialRecord, reference: Option<f64>) -> Self {
        let reference = reference.filter(|r| *r != 0.0 && r.is_finite());
        let accuracy0 = reference
            .map(|r| (initial.lagrangian - r).abs() / r.abs())
            .filter(|a| *a > 0.0 && a.is_finite());
        Self {
            reference,
            accuracy0,
            kkt0: initial.kkt.max(),
        }
    }

    fn check(&self, r: &IterationRecord, state: &ConsensusState) -> Option<String> {
        if !r.is_finite() || !state.is_finite() {
            return Some(format!("non-finite values at iteration {}", r.k));
        }
        if let (Some(f), Some(a0)) = (self.reference, self.accuracy0) {
            let a = (r.lagrangian - f).abs() / f.abs();
            if a > DIVERGENCE_FACTOR * a0 {
                return Some(format!(
                    "accuracy {a:.3e} exceeds {DIVERGENCE_FACTOR}x its initial value {a0:.3e} at iteration {}",
                    r.k
                ));
            }
        }
        let kkt = r.kkt.max();
        if self.kkt0 > 0.0 && kkt > DIVERGENCE_FACTOR * self.kkt0 {
            return Some(format!(
                "KKT residual {kkt:.3e} exceeds {DIVERGENCE_FACTOR}x its initial value {:.3e} at iteration {}",
                self.kkt0, r.k
            ));
        }
        None
    }
}

/// One driver's per-iteration update.
pub(crate) trait Stepper {
    fn step(&mut self, k: usize) -> Result<IterationRecord>;
    fn state(&self) -> &ConsensusState;
}

pub(crate) struct Outcome {
    pub(crate) records: Vec<IterationRecord>,
    stop: StopReason,
    iterates: Option<Vec<IterateSnapshot>>,
}

/// Iterates under the stop rule and the divergence monitor.
pub(crate) fn drive(
    params: &AlgoParams,
    iterations: usize,
    initial: &InitialRecord,
    reference: Option<f64>,
    stepper: &mut impl Stepper,
) -> Result<Outcome> {
    let started = Instant::now();
    let monitor = Monitor::new(initial, reference);
    let mut records = Vec::with_capacity(iterations.min(1 << 20));
    let mut iterates = params.store_iterates.then(Vec::new);
    let mut stop = StopReason::IterationCap;
    for k in 0..iterations {
        let mut rec = stepper.step(k)?;
        rec.elapsed = started.elapsed().as_secs_f64();
        let state = stepper.state();
        if let Some(its) = iterates.as_mut() {
            its.push(IterateSnapshot {
                x0: state.x0.clone(),
                xs: state.xs.clone(),
            });
        }
        let verdict = if params.detect_divergence {
            monitor.check(&rec, state)
        } else {
            None
        };
        let done = params.stop.kkt_tolerance.is_some_and(|tol| rec.kkt.max() <= tol);
        records.push(rec);
        if let Some(why) = verdict {
            stop = StopReason::Diverged(why);
            break;
        }
        if done {
            stop = StopReason::Converged;
            break;
        }
    }
    Ok(Outcome {
        records,
        stop,
        iterates,
    })
}

pub(crate) fn in_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match threads {
        None => f(),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("cannot build thread pool: {e}")))?
            .install(f),
    }
}

pub(crate) fn reference_of(instance: &ProblemInstance, params: &AlgoParams) -> Option<f64> {
    params.reference_value.or_else(|| instance.reference.map(|r| r.value))
}

pub(crate) fn finish(
    instance: &ProblemInstance,
    params: &AlgoParams,
    gamma: f64,
    initial: InitialRecord,
    outcome: Outcome,
    final_state: ConsensusState,
) -> RunTrace {
    RunTrace {
        scheme: params.scheme,
        sync_order: params.sync_order,
        rho: params.rho,
        gamma,
        n_workers: instance.n_workers(),
        dim: instance.dim(),
        reference_value: reference_of(instance, params),
        initial,
        records: outcome.records,
        stop: outcome.stop,
        final_state: Some(final_state),
        iterates: outcome.iterates,
    }
}

fn check_scheme(params: &AlgoParams, expected: Scheme) -> Result<()> {
    params.validate()?;
    if params.scheme != expected {
        return Err(Error::InvalidArgument(format!(
            "parameters select scheme '{}' but the '{}' driver was called",
            params.scheme.name(),
            expected.name()
        )));
    }
    Ok(())
}

fn check_schedule(instance: &ProblemInstance, params: &AlgoParams, schedule: &Schedule) -> Result<()> {
    Error::check_dim("schedule workers", instance.n_workers(), schedule.n_workers())?;
    if schedule.len() < params.stop.max_iters {
        return Err(Error::InvalidArgument(format!(
            "schedule covers {} iterations but {} were requested",
            schedule.len(),
            params.stop.max_iters
        )));
    }
    Ok(())
}

struct SyncStepper<'a> {
    instance: &'a ProblemInstance,
    rho: f64,
    order: SyncOrder,
    solvers: Vec<WorkerSolver>,
    state: ConsensusState,
    eval: Evaluator<'a>,
    all: Vec<usize>,
}

impl SyncStepper<'_> {
    fn master(&self) -> Vector {
        let s = &self.state;
        let n = s.dim();
        master_prox(
            self.instance.regularizer(),
            &sum_vectors(&s.duals, n),
            &sum_vectors(&s.xs, n),
            s.n_workers(),
            self.rho,
            0.0,
            &s.x0,
        )
    }

    fn workers(&mut self, d: &mut Diffs) {
        let s = &self.state;
        let updates = map_workers(&self.all, |i| worker_update(&self.solvers[i], &s.duals[i], &s.x0));
        for (i, (x, l)) in updates.into_iter().enumerate() {
            d.dx_sq += (&x - &self.state.xs[i]).norm_squared();
            d.dlambda_sq += (&l - &self.state.duals[i]).norm_squared();
            self.state.xs[i] = x;
            self.state.duals[i] = l;
        }
    }
}

impl Stepper for SyncStepper<'_> {
    fn step(&mut self, k: usize) -> Result<IterationRecord> {
        let mut d = Diffs::default();
        match self.order {
            SyncOrder::MasterFirst => {
                let x0_next = self.master();
                d.dx0_sq = (&x0_next - &self.state.x0).norm_squared();
                self.state.x0 = x0_next;
                self.workers(&mut d);
            }
            SyncOrder::WorkersFirst => {
                self.workers(&mut d);
                let x0_next = self.master();
                d.dx0_sq = (&x0_next - &self.state.x0).norm_squared();
                self.state.x0 = x0_next;
            }
        }
        self.state.k += 1;
        self.eval.refresh(&self.state, &self.all);
        Ok(self.eval.record(&self.state, k, &self.all, d))
    }

    fn state(&self) -> &ConsensusState {
        &self.state
    }
}

/// Synchronous distributed ADMM. `γ` plays no role in this scheme.
pub fn run_sync(instance: &ProblemInstance, params: &AlgoParams) -> Result<RunTrace> {
    check_scheme(params, Scheme::Sync)?;
    in_pool(params.threads, || {
        let state = params.initial.state(instance.n_workers(), instance.dim())?;
        let eval = Evaluator::new(instance, &state, params.rho, params.track_objective);
        let initial = eval.initial(&state);
        let mut stepper = SyncStepper {
            instance,
            rho: params.rho,
            order: params.sync_order,
            solvers: build_solvers(instance, params.rho)?,
            state,
            eval,
            all: (0..instance.n_workers()).collect(),
        };
        let outcome = drive(
            params,
            params.stop.max_iters,
            &initial,
            reference_of(instance, params),
            &mut stepper,
        )?;
        Ok(finish(instance, params, 0.0, initial, outcome, stepper.state))
    })
}

struct AdAdmmStepper<'a, 's> {
    core: AdAdmmCore<'a>,
    solvers: Vec<WorkerSolver>,
    schedule: &'s Schedule,
}

impl Stepper for AdAdmmStepper<'_, '_> {
    fn step(&mut self, k: usize) -> Result<IterationRecord> {
        let arrivals = self.schedule.arrivals(k);
        let updates = self.core.simulate_updates(&self.solvers, arrivals);
        self.core.apply(arrivals, updates)
    }

    fn state(&self) -> &ConsensusState {
        self.core.state()
    }
}

/// AD-ADMM from the master's point of view, driven by `schedule`.
pub fn run_ad_admm(instance: &ProblemInstance, params: &AlgoParams, schedule: &Schedule) -> Result<RunTrace> {
    check_scheme(params, Scheme::AdAdmm)?;
    check_schedule(instance, params, schedule)?;
    in_pool(params.threads, || {
        let state = params.initial.state(instance.n_workers(), instance.dim())?;
        let core = AdAdmmCore::new(instance, params.rho, params.gamma, state, params.track_objective)?;
        let initial = core.initial_record();
        let mut stepper = AdAdmmStepper {
            core,
            solvers: build_solvers(instance, params.rho)?,
            schedule,
        };
        let outcome = drive(
            params,
            params.stop.max_iters,
            &initial,
            reference_of(instance, params),
            &mut stepper,
        )?;
        Ok(finish(
            instance,
            params,
            params.gamma,
            initial,
            outcome,
            stepper.core.into_state(),
        ))
    })
}

struct AlternativeStepper<'a, 's> {
    instance: &'a ProblemInstance,
    rho: f64,
    solvers: Vec<WorkerSolver>,
    schedule: &'s Schedule,
    state: ConsensusState,
    /// `(λ_i, x_0)` sent to worker `i` at its previous arrival.
    snapshots: Vec<(Vector, Vector)>,
    eval: Evaluator<'a>,
}

impl Stepper for AlternativeStepper<'_, '_> {
    fn step(&mut self, k: usize) -> Result<IterationRecord> {
        let arrivals = self.schedule.arrivals(k);
        let n = self.state.dim();
        let mut d = Diffs::default();
        let xs = map_workers(arrivals, |i| {
            let (lam, x0_hat) = &self.snapshots[i];
            self.solvers[i].solve(lam, x0_hat)
        });
        for (&i, x) in arrivals.iter().zip(xs) {
            d.staleness_sq += (&self.snapshots[i].1 - &self.state.x0).norm_squared();
            d.dx_sq += (&x - &self.state.xs[i]).norm_squared();
            self.state.xs[i] = x;
        }
        // x_0 uses the duals from before this iteration.
        let x0_next = master_prox(
            self.instance.regularizer(),
            &sum_vectors(&self.state.duals, n),
            &sum_vectors(&self.state.xs, n),
            self.state.n_workers(),
            self.rho,
            0.0,
            &self.state.x0,
        );
        d.dx0_sq = (&x0_next - &self.state.x0).norm_squared();
        self.state.x0 = x0_next;
        for i in 0..self.state.n_workers() {
            let step = (&self.state.xs[i] - &self.state.x0) * self.rho;
            d.dlambda_sq += step.norm_squared();
            self.state.duals[i] += step;
        }
        for &i in arrivals {
            self.snapshots[i] = (self.state.duals[i].clone(), self.state.x0.clone());
        }
        self.state.k += 1;
        self.eval.refresh(&self.state, arrivals);
        Ok(self.eval.record(&self.state, k, arrivals, d))
    }

    fn state(&self) -> &ConsensusState {
        &self.state
    }
}

/// The scheme in which the master updates every dual and workers only return
/// `x_i`. Requires `γ = 0`.
pub fn run_alternative(instance: &ProblemInstance, params: &AlgoParams, schedule: &Schedule) -> Result<RunTrace> {
    check_scheme(params, Scheme::Alternative)?;
    check_schedule(instance, params, schedule)?;
    if params.gamma != 0.0 {
        return Err(Error::InvalidArgument(format!(
            "the alternative scheme runs with gamma = 0, got {}",
            params.gamma
        )));
    }
    in_pool(params.threads, || {
        let state = params.initial.state(instance.n_workers(), instance.dim())?;
        let eval = Evaluator::new(instance, &state, params.rho, params.track_objective);
        let initial = eval.initial(&state);
        let snapshots = state.duals.iter().map(|l| (l.clone(), state.x0.clone())).collect();
        let mut stepper = AlternativeStepper {
            instance,
            rho: params.rho,
            solvers: build_solvers(instance, params.rho)?,
            schedule,
            state,
            snapshots,
            eval,
        };
        let outcome = drive(
            params,
            params.stop.max_iters,
            &initial,
            reference_of(instance, params),
            &mut stepper,
        )?;
        Ok(finish(instance, params, 0.0, initial, outcome, stepper.state))
    })
}

/// Dispatches on `params.scheme`. The asynchronous schemes need a schedule.
pub fn run(instance: &ProblemInstance, params: &AlgoParams, schedule: Option<&Schedule>) -> Result<RunTrace> {
    match (params.scheme, schedule) {
        (Scheme::Sync, _) => run_sync(instance, params),
        (Scheme::AdAdmm, Some(s)) => run_ad_admm(instance, params, s),
        (Scheme::Alternative, Some(s)) => run_alternative(instance, params, s),
        (scheme, None) => Err(Error::InvalidArgument(format!(
            "scheme '{}' needs an arrival schedule",
            scheme.name()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{gen_sparse_pca, LassoInstance};
    use crate::scheduler::ArrivalModel;
    use nalgebra::DMatrix;

    fn soft(v: &Vector, k: f64) -> Vector {
        v.map(|t| t.signum() * (t.abs() - k).max(0.0))
    }

    /// Dense reimplementation used as an independent route: worker solve via
    /// `(2AᵀA + ρI) x = 2Aᵀb − λ + ρ x̂`, master via soft-thresholding.
    struct Naive<'a> {
        raw: &'a LassoInstance,
        rho: f64,
        gamma: f64,
    }

    impl Naive<'_> {
        fn solve(&self, i: usize, lambda: &Vector, x0: &Vector) -> Vector {
            let a = &self.raw.a[i];
            let n = a.ncols();
            let lhs = a.transpose() * a * 2.0 + DMatrix::identity(n, n) * self.rho;
            let rhs = a.transpose() * &self.raw.b[i] * 2.0 - lambda + x0 * self.rho;
            lhs.lu().solve(&rhs).unwrap()
        }

        fn master(&self, xs: &[Vector], ls: &[Vector], prev: &Vector) -> Vector {
            let nw = xs.len() as f64;
            let denom = nw * self.rho + self.gamma;
            let mut v = prev * self.gamma;
            for (x, l) in xs.iter().zip(ls) {
                v += l + x * self.rho;
            }
            soft(&(v / denom), self.raw.theta / denom)
        }
    }

    fn small_lasso(n_workers: usize, seed: u64) -> (LassoInstance, ProblemInstance) {
        let raw = LassoInstance::generate(n_workers, 12, 6, 0.3, 0.01, 0.5, seed).unwrap();
        let inst = raw.to_problem().unwrap();
        (raw, inst)
    }

    fn schedule(n: usize, tau: usize, iters: usize, seed: u64) -> Schedule {
        let model = ArrivalModel::uniform(n, 0.4, tau, 1, seed).unwrap();
        Schedule::generate(&model, iters).unwrap()
    }

    fn stored(scheme: Scheme, rho: f64, gamma: f64, iters: usize) -> AlgoParams {
        let mut p = AlgoParams::new(scheme, rho, gamma, iters);
        p.store_iterates = true;
        p.detect_divergence = false;
        p
    }

    fn max_diff(a: &[IterateSnapshot], b: &[(Vector, Vec<Vector>)]) -> f64 {
        assert_eq!(a.len(), b.len());
        let mut worst: f64 = 0.0;
        for (p, (x0, xs)) in a.iter().zip(b) {
            worst = worst.max((&p.x0 - x0).amax());
            for (x, y) in p.xs.iter().zip(xs) {
                worst = worst.max((x - y).amax());
            }
        }
        worst
    }

    #[test]
    fn ad_admm_matches_dense_reimplementation() {
        let (raw, inst) = small_lasso(3, 4);
        let (rho, gamma, iters) = (40.0, 2.5, 60);
        let sched = schedule(3, 3, iters, 9);
        let trace = run_ad_admm(&inst, &stored(Scheme::AdAdmm, rho, gamma, iters), &sched).unwrap();
        let naive = Naive { raw: &raw, rho, gamma };
        let n = 6;
        let mut x0 = Vector::zeros(n);
        let mut xs = vec![Vector::zeros(n); 3];
        let mut ls = vec![Vector::zeros(n); 3];
        let mut served = vec![Vector::zeros(n); 3];
        let mut out = Vec::new();
        for k in 0..iters {
            let arr = sched.arrivals(k);
            for &i in arr {
                xs[i] = naive.solve(i, &ls[i], &served[i]);
                ls[i] = &ls[i] + (&xs[i] - &served[i]) * rho;
            }
            x0 = naive.master(&xs, &ls, &x0);
            for &i in arr {
                served[i] = x0.clone();
            }
            out.push((x0.clone(), xs.clone()));
        }
        assert!(max_diff(trace.iterates.as_ref().unwrap(), &out) <= 1e-10);
    }

    #[test]
    fn sync_master_first_matches_dense_reimplementation() {
        let (raw, inst) = small_lasso(2, 5);
        let (rho, iters) = (30.0, 40);
        let trace = run_sync(&inst, &stored(Scheme::Sync, rho, 0.0, iters)).unwrap();
        let naive = Naive {
            raw: &raw,
            rho,
            gamma: 0.0,
        };
        let mut x0 = Vector::zeros(6);
        let mut xs = vec![Vector::zeros(6); 2];
        let mut ls = vec![Vector::zeros(6); 2];
        let mut out = Vec::new();
        for _ in 0..iters {
            x0 = naive.master(&xs, &ls, &x0);
            for i in 0..2 {
                xs[i] = naive.solve(i, &ls[i], &x0);
                ls[i] = &ls[i] + (&xs[i] - &x0) * rho;
            }
            out.push((x0.clone(), xs.clone()));
        }
        assert!(max_diff(trace.iterates.as_ref().unwrap(), &out) <= 1e-10);
    }

    #[test]
    fn alternative_matches_dense_reimplementation() {
        let (raw, inst) = small_lasso(3, 6);
        let (rho, iters) = (20.0, 50);
        let sched = schedule(3, 2, iters, 3);
        let trace = run_alternative(&inst, &stored(Scheme::Alternative, rho, 0.0, iters), &sched).unwrap();
        let naive = Naive {
            raw: &raw,
            rho,
            gamma: 0.0,
        };
        let mut x0 = Vector::zeros(6);
        let mut xs = vec![Vector::zeros(6); 3];
        let mut ls = vec![Vector::zeros(6); 3];
        let mut snap = vec![(Vector::zeros(6), Vector::zeros(6)); 3];
        let mut out = Vec::new();
        for k in 0..iters {
            let arr = sched.arrivals(k);
            for &i in arr {
                xs[i] = naive.solve(i, &snap[i].0, &snap[i].1);
            }
            x0 = naive.master(&xs, &ls, &x0);
            for i in 0..3 {
                ls[i] = &ls[i] + (&xs[i] - &x0) * rho;
            }
            for &i in arr {
                snap[i] = (ls[i].clone(), x0.clone());
            }
            out.push((x0.clone(), xs.clone()));
        }
        assert!(max_diff(trace.iterates.as_ref().unwrap(), &out) <= 1e-10);
    }

    #[test]
    fn single_worker_stays_at_a_fixed_point() {
        // x = 0, λ = 0 is stationary for sparse PCA.
        let inst = gen_sparse_pca(1, 20, 8, 0.1, 40, 2).unwrap();
        let rho = 3.0 * inst.lipschitz();
        let trace = run_ad_admm(
            &inst,
            &stored(Scheme::AdAdmm, rho, 0.0, 20),
            &Schedule::synchronous(1, 20),
        )
        .unwrap();
        let s = trace.final_state.unwrap();
        assert_eq!(s.x0.amax(), 0.0);
        assert_eq!(s.xs[0].amax(), 0.0);
        assert_eq!(s.duals[0].amax(), 0.0);
    }

    #[test]
    fn full_arrivals_reduce_to_workers_first_sync() {
        let (_, inst) = small_lasso(4, 7);
        let iters = 80;
        let a = run_ad_admm(
            &inst,
            &stored(Scheme::AdAdmm, 25.0, 0.0, iters),
            &Schedule::synchronous(4, iters),
        )
        .unwrap();
        let mut p = stored(Scheme::Sync, 25.0, 0.0, iters);
        p.sync_order = SyncOrder::WorkersFirst;
        let s = run_sync(&inst, &p).unwrap();
        let other: Vec<_> = s.iterates.unwrap().into_iter().map(|it| (it.x0, it.xs)).collect();
        assert!(max_diff(a.iterates.as_ref().unwrap(), &other) <= 1e-12);
    }

    #[test]
    fn absent_workers_keep_their_variables_and_served_point() {
        let (_, inst) = small_lasso(3, 8);
        let solvers = build_solvers(&inst, 10.0).unwrap();
        let mut core = AdAdmmCore::new(&inst, 10.0, 0.0, ConsensusState::zeros(3, 6), false).unwrap();
        let u = core.simulate_updates(&solvers, &[0, 1, 2]);
        core.apply(&[0, 1, 2], u).unwrap();
        let before = core.state().clone();
        let served1 = core.served(1).clone();
        let u = core.simulate_updates(&solvers, &[0, 2]);
        core.apply(&[0, 2], u).unwrap();
        assert_eq!(core.state().xs[1], before.xs[1]);
        assert_eq!(core.state().duals[1], before.duals[1]);
        assert_eq!(core.served(1), &served1);
        assert_eq!(core.served(0), &core.state().x0);
        assert_ne!(core.served(1), &core.state().x0);
    }

    #[test]
    fn core_rejects_bad_arrival_sets() {
        let (_, inst) = small_lasso(2, 8);
        let mut core = AdAdmmCore::new(&inst, 10.0, 0.0, ConsensusState::zeros(2, 6), false).unwrap();
        let z = || (Vector::zeros(6), Vector::zeros(6));
        assert!(core.apply(&[], vec![]).is_err());
        assert!(core.apply(&[1, 0], vec![z(), z()]).is_err());
        assert!(core.apply(&[2], vec![z()]).is_err());
        assert!(core.apply(&[0], vec![z(), z()]).is_err());
        assert!(core.apply(&[0], vec![(Vector::zeros(5), Vector::zeros(6))]).is_err());
    }

    #[test]
    fn identity_residual_vanishes_for_ad_admm() {
        let (_, inst) = small_lasso(3, 10);
        let sched = schedule(3, 4, 100, 2);
        let t = run_ad_admm(&inst, &stored(Scheme::AdAdmm, 15.0, 1.0, 100), &sched).unwrap();
        let worst = t.records.iter().map(|r| r.identity_residual).fold(0.0, f64::max);
        assert!(worst <= 1e-9, "{worst}");
    }

    #[test]
    fn runs_are_deterministic_and_thread_count_invariant() {
        let (_, inst) = small_lasso(5, 11);
        let sched = schedule(5, 3, 60, 4);
        let mut p = stored(Scheme::AdAdmm, 20.0, 0.5, 60);
        let a = run_ad_admm(&inst, &p, &sched).unwrap();
        let b = run_ad_admm(&inst, &p, &sched).unwrap();
        p.threads = Some(1);
        let c = run_ad_admm(&inst, &p, &sched).unwrap();
        p.threads = Some(4);
        let d = run_ad_admm(&inst, &p, &sched).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.to_csv(), c.to_csv());
        assert_eq!(a.to_csv(), d.to_csv());
        assert_eq!(a.final_state, d.final_state);
    }

    #[test]
    fn kkt_rule_stops_early() {
        let (_, inst) = small_lasso(2, 12);
        let mut p = AlgoParams::new(Scheme::Sync, 30.0, 0.0, 5000);
        p.stop = StopRule::with_kkt_tolerance(5000, 1e-9);
        let t = run_sync(&inst, &p).unwrap();
        assert!(t.converged());
        assert!(t.iterations() < 5000);
        assert!(t.final_kkt() <= 1e-9);
    }

    #[test]
    fn invalid_configurations_are_refused() {
        let (_, inst) = small_lasso(2, 13);
        let sched = schedule(2, 2, 10, 1);
        let alt = AlgoParams::new(Scheme::Alternative, 10.0, 1.0, 10);
        assert!(matches!(
            run_alternative(&inst, &alt, &sched),
            Err(Error::InvalidArgument(_))
        ));
        let ad = AlgoParams::new(Scheme::AdAdmm, 10.0, 0.0, 11);
        assert!(run_ad_admm(&inst, &ad, &sched).is_err(), "schedule too short");
        let wrong = AlgoParams::new(Scheme::Sync, 10.0, 0.0, 10);
        assert!(run_ad_admm(&inst, &wrong, &sched).is_err());
        let ad = AlgoParams::new(Scheme::AdAdmm, 10.0, 0.0, 10);
        assert!(run(&inst, &ad, None).is_err());
        let bad_rho = AlgoParams::new(Scheme::Sync, 0.0, 0.0, 10);
        assert!(run_sync(&inst, &bad_rho).is_err());
        let wrong_width = schedule(3, 2, 10, 1);
        assert!(run_ad_admm(&inst, &ad, &wrong_width).is_err());
    }

    #[test]
    fn sync_ignores_gamma() {
        let (_, inst) = small_lasso(2, 14);
        let a = run_sync(&inst, &AlgoParams::new(Scheme::Sync, 10.0, 0.0, 30)).unwrap();
        let b = run_sync(&inst, &AlgoParams::new(Scheme::Sync, 10.0, 7.0, 30)).unwrap();
        assert_eq!(a.final_state, b.final_state);
    }

    #[test]
    fn alternative_with_large_rho_is_flagged_divergent() {
        let raw = LassoInstance::generate(8, 20, 10, 0.1, 0.01, 0.3, 1).unwrap();
        let inst = raw.to_problem().unwrap();
        let model = ArrivalModel::uniform(8, 0.1, 3, 1, 5).unwrap();
        let sched = Schedule::generate(&model, 2000).unwrap();
        let t = run_alternative(&inst, &AlgoParams::new(Scheme::Alternative, 500.0, 0.0, 2000), &sched).unwrap();
        assert!(t.diverged(), "{:?}", t.stop);
        assert!(t.iterations() < 2000);
    }
}
