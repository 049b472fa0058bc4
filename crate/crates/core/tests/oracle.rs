//! The library's reference solvers against an independent coordinate-descent
//! LASSO solver written only for these tests.

mod common;

use admm_async::engine::{run_sync, AlgoParams, InitialPoint, Scheme, StopRule};
use admm_async::problems::LassoInstance;
use admm_async::reference::{proximal_gradient, sync_reference};
use admm_async::{eval_objective, kkt_residuals, ConsensusState};
use common::{lasso_coordinate_descent, lasso_objective, rel};

fn instances() -> Vec<LassoInstance> {
    vec![
        LassoInstance::generate(4, 30, 10, 0.1, 0.01, 0.3, 1).unwrap(),
        // Wide blocks: not strongly convex.
        LassoInstance::generate(3, 8, 20, 0.5, 0.01, 0.2, 2).unwrap(),
        LassoInstance::generate(1, 15, 15, 2.0, 0.1, 0.5, 3).unwrap(),
    ]
}

#[test]
fn objective_matches_direct_formula() {
    for raw in instances() {
        let inst = raw.to_problem().unwrap();
        let x = raw.w0.map(|v| 0.5 * v + 0.1);
        let a = eval_objective(&inst, &x).unwrap();
        let b = lasso_objective(&raw, &x);
        assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
    }
}

#[test]
fn proximal_gradient_agrees_with_coordinate_descent() {
    for raw in instances() {
        let inst = raw.to_problem().unwrap();
        let cd = lasso_coordinate_descent(&raw, 1e-14, 1_000_000);
        let pg = proximal_gradient(&inst, 1e-11, 1_000_000).unwrap();
        assert!(rel(pg.value, cd.value) <= 1e-10, "{} vs {}", pg.value, cd.value);
        // The oracle's point is a KKT point of the consensus form.
        let state = ConsensusState::at_consensus(&pg.x, inst.n_workers());
        let mut s = state.clone();
        for (l, b) in s.duals.iter_mut().zip(inst.blocks()) {
            *l = -b.gradient(&pg.x);
        }
        assert!(kkt_residuals(&inst, &s).unwrap().max() <= 1e-6);
    }
}

#[test]
fn synchronous_admm_converges_to_the_coordinate_descent_optimum() {
    for raw in instances() {
        let inst = raw.to_problem().unwrap();
        let cd = lasso_coordinate_descent(&raw, 1e-14, 1_000_000);
        let mut p = AlgoParams::new(Scheme::Sync, 20.0, 0.0, 50_000);
        p.stop = StopRule::with_kkt_tolerance(50_000, 1e-10);
        let t = run_sync(&inst, &p).unwrap();
        assert!(t.converged(), "{:?}", t.stop);
        let x0 = &t.final_state.unwrap().x0;
        assert!(rel(lasso_objective(&raw, x0), cd.value) <= 1e-8);
        assert!((x0 - &cd.x).amax() <= 1e-5);
    }
}

#[test]
fn long_synchronous_reference_matches_the_optimum_on_convex_data() {
    let raw = &instances()[0];
    let inst = raw.to_problem().unwrap();
    let cd = lasso_coordinate_descent(raw, 1e-14, 1_000_000);
    let r = sync_reference(&inst, 50.0, 5000, InitialPoint::Zero).unwrap();
    assert!(rel(r.value, cd.value) <= 1e-9, "{} vs {}", r.value, cd.value);
}
