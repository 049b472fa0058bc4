//! Synchronous distributed ADMM on a small LASSO, compared with the
//! proximal-gradient optimum.
//!
//! cargo run --release --example lasso_sync

use admm_async::engine::{run_sync, AlgoParams, Scheme, StopRule};
use admm_async::problems::gen_lasso;
use admm_async::reference::proximal_gradient;

fn main() -> admm_async::Result<()> {
    let instance = gen_lasso(8, 100, 50, 0.1, 0.01, 0.1, 1)?;
    let optimum = proximal_gradient(&instance, 1e-10, 1_000_000)?;

    let mut params = AlgoParams::new(Scheme::Sync, 100.0, 0.0, 2000);
    params.stop = StopRule::with_kkt_tolerance(2000, 1e-9);
    let trace = run_sync(&instance, &params)?;

    for r in trace.records.iter().step_by(25).take(8) {
        let acc = (r.lagrangian - optimum.value).abs() / optimum.value.abs();
        println!(
            "k={:4}  L={:.10}  accuracy={acc:.2e}  kkt={:.2e}",
            r.k + 1,
            r.lagrangian,
            r.kkt.max()
        );
    }
    println!(
        "stopped after {} iterations ({:?}), F* = {:.10}",
        trace.iterations(),
        trace.stop,
        optimum.value
    );
    Ok(())
}
