//! Ergodic optimality gap of the alternative scheme at its step-size bound,
//! and the k * gap(k) rate proxy.
//!
//! cargo run --release --example ergodic_rate

use admm_async::advisor::rho_max_alternative;
use admm_async::diagnostics::{check_theorem2_rate, ergodic_gaps};
use admm_async::engine::{run_alternative, AlgoParams, Scheme};
use admm_async::problems::gen_lasso;
use admm_async::reference::proximal_gradient;
use admm_async::scheduler::{ArrivalModel, Schedule};

fn main() -> admm_async::Result<()> {
    let instance = gen_lasso(4, 50, 20, 0.1, 0.01, 0.05, 1)?;
    let f_star = proximal_gradient(&instance, 1e-11, 1_000_000)?.value;
    let tau = 2;
    let rho = rho_max_alternative(instance.strong_convexity(), tau)?;
    let iters = 2000;
    let model = ArrivalModel::uniform(4, 0.5, tau, 1, 7)?;
    let schedule = Schedule::generate(&model, iters)?;
    let mut params = AlgoParams::new(Scheme::Alternative, rho, 0.0, iters);
    params.store_iterates = true;
    let trace = run_alternative(&instance, &params, &schedule)?;
    let gaps = ergodic_gaps(&instance, trace.iterates.as_deref().unwrap_or(&[]), f_star)?;
    for g in gaps.iter().filter(|g| [1, 10, 100, 500, 1000, 2000].contains(&g.k)) {
        println!("k={:5}  gap={:.4e}  k*gap={:.4}", g.k, g.gap, g.k as f64 * g.gap);
    }
    let rate = check_theorem2_rate(&gaps)?;
    println!(
        "rho={rho:.4}  fitted C={:.4}  worst ratio to k=100: {:.3}  within factor 2: {}",
        rate.fitted_c, rate.worst_ratio, rate.monotone_ok
    );
    Ok(())
}
