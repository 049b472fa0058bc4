//! A TCP master and four worker threads on 127.0.0.1, followed by a replay of
//! the recorded arrival sets in the simulator.
//!
//! cargo run --release --example netrun_loopback

use std::time::Duration;

use admm_async::engine::{run_ad_admm, AlgoParams, Scheme, StopRule};
use admm_async::netrun::{run_loopback, Jitter, MasterConfig, WorkerOptions};
use admm_async::problems::gen_lasso;

fn main() -> admm_async::Result<()> {
    let instance = gen_lasso(4, 50, 20, 0.1, 0.01, 0.2, 1)?;
    let mut params = AlgoParams::new(Scheme::AdAdmm, 500.0, 0.0, 10_000);
    params.stop = StopRule::with_kkt_tolerance(10_000, 1e-7);
    params.store_iterates = true;
    let config = MasterConfig {
        params: params.clone(),
        tau: 3,
        min_arrivals: 1,
    };
    let (outcome, reports) = run_loopback(&instance, &config, |i| WorkerOptions {
        jitter: Some(Jitter {
            max: Duration::from_micros(500 * (i as u64 + 1)),
            seed: i as u64,
        }),
        ..WorkerOptions::default()
    })?;
    println!(
        "master: {} iterations, final KKT {:.2e}",
        outcome.trace.iterations(),
        outcome.trace.final_kkt()
    );
    for (i, r) in reports.iter().enumerate() {
        println!(
            "worker {i}: {} updates, shutdown reason {}",
            r.updates, r.shutdown_reason
        );
    }

    params.stop = StopRule::iterations(outcome.schedule.len());
    let replay = run_ad_admm(&instance, &params, &outcome.schedule)?;
    let net = outcome.trace.final_state.expect("final state");
    let sim = replay.final_state.expect("final state");
    println!("replay difference in x0: {:.2e}", (net.x0 - sim.x0).amax());
    Ok(())
}
