//! The scheme in which the master owns the duals: identical to AD-ADMM
//! without delays, divergent with delays and a large penalty, convergent with
//! a penalty below its step-size bound.
//!
//! cargo run --release --example alternative_divergence

use admm_async::advisor::rho_max_alternative;
use admm_async::engine::{run_ad_admm, run_alternative, AlgoParams, Scheme};
use admm_async::problems::gen_lasso;
use admm_async::reference::proximal_gradient;
use admm_async::scheduler::{ArrivalModel, Schedule};

fn main() -> admm_async::Result<()> {
    let instance = gen_lasso(16, 200, 100, 0.1, 0.01, 0.05, 1)?;
    let f_star = proximal_gradient(&instance, 1e-10, 1_000_000)?.value;
    let iters = 3000;
    let model = ArrivalModel::uniform(16, 0.3, 3, 1, 7)?;
    let schedule = Schedule::generate(&model, iters)?;
    let bound = rho_max_alternative(instance.strong_convexity(), 3)?;
    println!(
        "sigma^2 = {:.3}, step-size bound at tau=3: rho <= {bound:.4}",
        instance.strong_convexity()
    );

    for (scheme, rho) in [
        (Scheme::AdAdmm, 500.0),
        (Scheme::Alternative, 500.0),
        (Scheme::Alternative, 10.0),
    ] {
        let mut params = AlgoParams::new(scheme, rho, 0.0, iters);
        params.reference_value = Some(f_star);
        let trace = match scheme {
            Scheme::AdAdmm => run_ad_admm(&instance, &params, &schedule)?,
            _ => run_alternative(&instance, &params, &schedule)?,
        };
        let acc = trace
            .last()
            .map_or(f64::NAN, |r| (r.lagrangian - f_star).abs() / f_star);
        println!(
            "{:12} rho={rho:<5} iterations={:5} stop={:?} final accuracy={acc:.2e}",
            scheme.name(),
            trace.iterations(),
            trace.stop
        );
    }
    Ok(())
}
