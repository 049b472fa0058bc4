//! Property tests for the model oracles, the update formulas and the
//! convergence-analysis inequalities on randomly generated runs.

mod common;

use std::sync::Arc;

use admm_async::advisor::{recommend, TheoryParams};
use admm_async::diagnostics::{check_lemma1, check_lemma2, check_lemma3, identity_max, CheckStatus};
use admm_async::engine::{run_ad_admm, run_sync, AlgoParams, RunTrace, Scheme, StopRule};
use admm_async::linalg::{CsrMatrix, Operator};
use admm_async::model::{GeneralBlock, QuadraticBlock, SmoothFunction};
use admm_async::problems::{solve_master_x0, LassoInstance, SparsePcaInstance, WorkerSolver};
use admm_async::scheduler::{ArrivalModel, Schedule};
use admm_async::{
    eval_augmented_lagrangian, eval_objective, kkt_residuals, ConsensusState, ProblemInstance, Regularizer,
    SmoothBlock, Vector,
};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vector {
    Vector::from_fn(n, |_, _| scale * (2.0 * rng.random::<f64>() - 1.0))
}

/// Central differences against the gradient oracle at 20 random points.
fn check_fd(block: &SmoothBlock, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = block.dim();
    for _ in 0..20 {
        let x = random_vec(&mut rng, n, 3.0);
        let h = 1e-6 * (1.0 + x.norm());
        let g = block.gradient(&x);
        let fd = Vector::from_fn(n, |j, _| {
            let mut p = x.clone();
            let mut m = x.clone();
            p[j] += h;
            m[j] -= h;
            (block.value(&p) - block.value(&m)) / (2.0 * h)
        });
        let err = (&fd - &g).norm() / g.norm().max(1.0);
        assert!(err <= 1e-5, "relative finite-difference error {err:.2e}");
    }
}

struct LogCosh {
    c: Vector,
}

impl SmoothFunction for LogCosh {
    fn value(&self, x: &Vector) -> f64 {
        x.iter().zip(self.c.iter()).map(|(a, c)| (a - c).cosh().ln()).sum()
    }

    fn gradient(&self, x: &Vector) -> Vector {
        Vector::from_fn(x.len(), |j, _| (x[j] - self.c[j]).tanh())
    }
}

#[test]
fn gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = DMatrix::from_fn(7, 5, |_, _| rng.random::<f64>() - 0.5);
    let b = random_vec(&mut rng, 7, 1.0);
    let dense = SmoothBlock::Quadratic(QuadraticBlock::least_squares(Operator::Dense(a.clone()), b).unwrap());
    check_fd(&dense, 1);
    let csr = CsrMatrix::from_triplets(
        6,
        5,
        vec![(0, 1, 1.5), (2, 0, -0.7), (3, 4, 2.0), (5, 2, 0.3), (5, 4, -1.1)],
    )
    .unwrap();
    let pca = SmoothBlock::Quadratic(QuadraticBlock::negative_gram(Operator::Sparse(csr)).unwrap());
    check_fd(&pca, 2);
    let general = SmoothBlock::General(GeneralBlock::new(
        Arc::new(LogCosh {
            c: random_vec(&mut rng, 5, 1.0),
        }),
        5,
        1.0,
        0.0,
    ));
    check_fd(&general, 3);
}

fn instance_strategy() -> impl Strategy<Value = ProblemInstance> {
    (1usize..4, 2usize..8, any::<u64>()).prop_map(|(n_workers, n, seed)| {
        LassoInstance::generate(n_workers, n + 2, n, 0.2, 0.01, 0.5, seed)
            .unwrap()
            .to_problem()
            .unwrap()
    })
}

/// Brute-force minimizer of a convex scalar function on a uniform grid.
fn grid_argmin(f: impl Fn(f64) -> f64, lo: f64, hi: f64, points: usize) -> (f64, f64) {
    let step = (hi - lo) / (points - 1) as f64;
    let best = (0..points)
        .map(|i| lo + step * i as f64)
        .min_by(|a, b| f(*a).total_cmp(&f(*b)))
        .unwrap();
    (best, step)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lagrangian_at_consensus_equals_objective(inst in instance_strategy(), seed in any::<u64>(), rho in 0.1f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_vec(&mut rng, inst.dim(), 2.0);
        let state = ConsensusState::at_consensus(&x, inst.n_workers());
        prop_assert_eq!(
            eval_augmented_lagrangian(&inst, &state, rho).unwrap(),
            eval_objective(&inst, &x).unwrap()
        );
    }

    #[test]
    fn l1_prox_matches_scalar_grid(v in -5.0f64..5.0, theta in 0.01f64..3.0, w in 0.05f64..2.0) {
        let reg = Regularizer::L1 { theta };
        let u = reg.prox(&Vector::from_element(1, v), w)[0];
        let (best, step) = grid_argmin(|t| theta * t.abs() + (t - v).powi(2) / (2.0 * w), v - 10.0, v + 10.0, 100_001);
        prop_assert!((u - best).abs() <= step, "prox {u} vs grid {best}");
    }

    #[test]
    fn master_update_matches_scalar_grid(
        sums in prop::collection::vec((-5.0f64..5.0, -3.0f64..3.0), 1..5),
        rho in 0.1f64..10.0,
        gamma in 0.0f64..5.0,
        prev in -2.0f64..2.0,
        theta in 0.01f64..3.0,
    ) {
        let n = sums.len();
        let sum_l: f64 = sums.iter().map(|p| p.1).sum();
        let xs: Vec<f64> = sums.iter().map(|p| p.0).collect();
        let got = solve_master_x0(
            &Regularizer::L1 { theta },
            &Vector::from_element(1, sum_l),
            &Vector::from_element(1, xs.iter().sum()),
            n,
            rho,
            gamma,
            &Vector::from_element(1, prev),
        )
        .unwrap()[0];
        let obj = |u: f64| {
            theta * u.abs() - u * sum_l
                + 0.5 * rho * xs.iter().map(|x| (x - u).powi(2)).sum::<f64>()
                + 0.5 * gamma * (u - prev).powi(2)
        };
        let (best, step) = grid_argmin(obj, -20.0, 20.0, 100_001);
        prop_assert!((got - best).abs() <= step, "closed form {got} vs grid {best}");
    }

    #[test]
    fn regularizers_lie_below_chords(seed in any::<u64>(), t in 0.0f64..=1.0, theta in 0.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b) = (random_vec(&mut rng, 4, 0.4), random_vec(&mut rng, 4, 0.4));
        let mid = &a * (1.0 - t) + &b * t;
        for reg in [Regularizer::L1 { theta }, Regularizer::L1Ball { theta, radius: 1.0 }] {
            let chord = (1.0 - t) * reg.value(&a) + t * reg.value(&b);
            prop_assert!(reg.value(&mid) <= chord + 1e-12);
        }
    }

    #[test]
    fn worker_update_satisfies_dual_identity(inst in instance_strategy(), seed in any::<u64>(), rho in 0.5f64..200.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let block = &inst.blocks()[0];
        let solver = WorkerSolver::new(block, rho).unwrap();
        let lambda = random_vec(&mut rng, inst.dim(), 5.0);
        let x_hat = random_vec(&mut rng, inst.dim(), 2.0);
        let (x, l) = admm_async::engine::worker_update(&solver, &lambda, &x_hat);
        let residual = (block.gradient(&x) + &l).norm();
        prop_assert!(residual <= 1e-10 * (1.0 + l.norm()), "{residual:.2e}");
    }
}

/// Near-KKT point of a small LASSO from a long synchronous run.
fn solved_state() -> (ProblemInstance, ConsensusState) {
    let inst = LassoInstance::generate(3, 10, 5, 0.3, 0.01, 0.6, 21)
        .unwrap()
        .to_problem()
        .unwrap();
    let mut p = AlgoParams::new(Scheme::Sync, 20.0, 0.0, 20_000);
    p.stop = StopRule::with_kkt_tolerance(20_000, 1e-12);
    let t = run_sync(&inst, &p).unwrap();
    assert!(t.converged());
    (inst, t.final_state.unwrap())
}

#[test]
fn kkt_components_grow_under_their_perturbations() {
    let (inst, s) = solved_state();
    let base = kkt_residuals(&inst, &s).unwrap();
    assert!(base.max() <= 1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let e = random_vec(&mut rng, inst.dim(), 1.0).normalize() * 1e-3;
        let mut p = s.clone();
        p.duals[1] += &e;
        assert!(kkt_residuals(&inst, &p).unwrap().worker_stationarity > base.worker_stationarity);
        let mut p = s.clone();
        p.xs[2] += &e;
        assert!(kkt_residuals(&inst, &p).unwrap().consensus > base.consensus);
        let mut p = s.clone();
        p.x0 += &e;
        assert!(kkt_residuals(&inst, &p).unwrap().consensus > base.consensus);
        let mut p = s.clone();
        for l in &mut p.duals {
            *l += &e;
        }
        let master = |r: admm_async::KktResidual| r.master_stationarity.unwrap();
        assert!(master(kkt_residuals(&inst, &p).unwrap()) > master(base));
    }
}

fn model_strategy(n: usize) -> impl Strategy<Value = ArrivalModel> {
    (
        prop::collection::vec(0.05f64..=1.0, n),
        1usize..7,
        1usize..=n,
        any::<u64>(),
    )
        .prop_map(|(probs, tau, a, seed)| ArrivalModel::new(probs, tau, a, seed).unwrap())
}

fn stored_run(inst: &ProblemInstance, rho: f64, gamma: f64, sched: &Schedule, iters: usize) -> RunTrace {
    let mut p = AlgoParams::new(Scheme::AdAdmm, rho, gamma, iters);
    p.store_iterates = true;
    p.detect_divergence = false;
    run_ad_admm(inst, &p, sched).unwrap()
}

/// Staleness `Σ_{i∈A_k} ‖x_0^k − x̂_i‖²` recomputed from stored iterates and
/// the schedule alone.
fn staleness_from_iterates(trace: &RunTrace, sched: &Schedule) -> Vec<f64> {
    let its = trace.iterates.as_ref().unwrap();
    let n = trace.n_workers;
    let zero = Vector::zeros(trace.dim);
    let mut served = vec![zero.clone(); n];
    let mut out = Vec::new();
    for (k, it) in its.iter().enumerate() {
        let current = if k == 0 { &zero } else { &its[k - 1].x0 };
        let arr = sched.arrivals(k);
        out.push(arr.iter().map(|&i| (current - &served[i]).norm_squared()).sum());
        for &i in arr {
            served[i] = it.x0.clone();
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn staleness_bound_holds_on_random_schedules(model in model_strategy(4), seed in 0u64..1000, rho in 1.0f64..100.0) {
        let inst = LassoInstance::generate(4, 8, 5, 0.2, 0.01, 0.5, seed).unwrap().to_problem().unwrap();
        let iters = 80;
        let sched = Schedule::generate(&model, iters).unwrap();
        let t = stored_run(&inst, rho, 0.0, &sched, iters);
        let ours = staleness_from_iterates(&t, &sched);
        for (a, r) in ours.iter().zip(&t.records) {
            prop_assert!((a - r.staleness_sq).abs() <= 1e-9 * (1.0 + a));
        }
        // Prefix bound recomputed from the independent staleness values.
        let s = sched.suggested_s();
        let factor = s as f64 * ((model.tau - 1) as f64).powi(2);
        let (mut lhs, mut dx0) = (0.0, 0.0);
        for (a, r) in ours.iter().zip(&t.records) {
            lhs += a;
            prop_assert!(lhs <= factor * dx0 * (1.0 + 1e-9) + 1e-12, "lhs {lhs} vs {}", factor * dx0);
            dx0 += r.dx0_sq;
        }
        prop_assert_eq!(check_lemma2(&t, s, model.tau).status, CheckStatus::Pass);
    }

    #[test]
    fn absent_workers_carry_over_and_identity_holds(model in model_strategy(3), seed in 0u64..1000) {
        let inst = LassoInstance::generate(3, 6, 4, 0.2, 0.01, 0.5, seed).unwrap().to_problem().unwrap();
        let iters = 60;
        let sched = Schedule::generate(&model, iters).unwrap();
        let t = stored_run(&inst, 10.0, 0.5, &sched, iters);
        let its = t.iterates.as_ref().unwrap();
        for k in 1..iters {
            for i in 0..3 {
                if !sched.arrivals(k).contains(&i) {
                    prop_assert_eq!(&its[k].xs[i], &its[k - 1].xs[i]);
                }
            }
        }
        prop_assert!(identity_max(&t) <= 1e-8);
    }
}

#[test]
fn descent_and_lower_bound_hold_across_delays() {
    for seed in 0..6u64 {
        for tau in [1, 3, 5, 10] {
            let raw = LassoInstance::generate(4, 12, 6, 0.1, 0.01, 0.5, seed).unwrap();
            let inst = raw.to_problem().unwrap();
            let f_star = common::lasso_coordinate_descent(&raw, 1e-13, 1_000_000).value;
            let model = ArrivalModel::new(vec![0.2, 0.5, 0.8, 0.3], tau, 1, seed).unwrap();
            let sched = Schedule::generate(&model, 150).unwrap();
            let theory = TheoryParams::from_instance(&inst, tau, Some(&sched));
            let rec = recommend(&theory, true).unwrap();
            let t = stored_run(&inst, rec.rho, rec.gamma, &sched, 150);
            let l1 = check_lemma1(&t, &inst).unwrap();
            assert_eq!(
                l1.status,
                CheckStatus::Pass,
                "seed {seed} tau {tau}: slack {}",
                l1.min_slack
            );
            let l3 = check_lemma3(&t, &inst, f_star);
            assert_eq!(l3.status, CheckStatus::Pass, "seed {seed} tau {tau}");
        }
    }
}

/// LASSO with rows scaled down so that `L < 1`; the advisor's `γ` grows like
/// `ρ²(τ−1)²`, so a small `L` keeps the run short.
fn flat_lasso(seed: u64) -> ProblemInstance {
    let raw = LassoInstance::generate(3, 10, 5, 0.05, 0.01, 0.5, seed).unwrap();
    let blocks = raw
        .a
        .iter()
        .zip(&raw.b)
        .map(|(a, b)| {
            SmoothBlock::Quadratic(QuadraticBlock::least_squares(Operator::Dense(a * 0.05), b * 0.05).unwrap())
        })
        .collect();
    ProblemInstance::new(
        blocks,
        Regularizer::L1 {
            theta: raw.theta * 0.05,
        },
    )
    .unwrap()
}

#[test]
fn advisor_parameters_make_iterate_differences_vanish() {
    for tau in [1, 2, 3] {
        let inst = flat_lasso(4);
        let iters = 4000;
        let model = ArrivalModel::new(vec![0.3, 0.6, 0.9], tau, 1, 2).unwrap();
        let sched = Schedule::generate(&model, iters).unwrap();
        let rec = recommend(&TheoryParams::from_instance(&inst, tau, Some(&sched)), true).unwrap();
        let t = stored_run(&inst, rec.rho, rec.gamma, &sched, iters);
        let head = &t.records[..100];
        let tail = &t.records[iters - 100..];
        for (name, f) in [
            (
                "dx0",
                (|r: &admm_async::engine::IterationRecord| r.dx0_sq) as fn(&_) -> f64,
            ),
            ("dx", |r| r.dx_sq),
            ("dlambda", |r| r.dlambda_sq),
        ] {
            let early = head.iter().map(f).fold(0.0, f64::max);
            let worst = tail.iter().map(f).fold(0.0, f64::max);
            assert!(
                worst <= 1e-10 * early,
                "tau {tau} (rho {:.3}, gamma {:.3}) {name}: {worst:.3e} vs early {early:.3e}",
                rec.rho,
                rec.gamma
            );
        }
    }
}

#[test]
fn lower_bound_is_flagged_only_for_small_penalty_on_concave_blocks() {
    let inst = SparsePcaInstance::generate(2, 10, 6, 0.1, 20, 1)
        .unwrap()
        .to_problem()
        .unwrap();
    let sched = Schedule::synchronous(2, 20);
    let small = stored_run(&inst, 0.5 * inst.lipschitz(), 0.0, &sched, 20);
    assert_eq!(
        check_lemma1(&small, &inst).unwrap().status,
        CheckStatus::HypothesisViolated
    );
}
