//! AD-ADMM over TCP: a master that gates on arrivals and delay counters, and
//! workers that solve their local subproblem on every broadcast.
//!
//! The master drives the same [`AdAdmmCore`](crate::engine::AdAdmmCore)
//! recursion as the simulator, so replaying its recorded arrival sets through
//! [`run_ad_admm`](crate::engine::run_ad_admm) reproduces its iterates.

mod master;
pub mod wire;
mod worker;

use std::net::TcpListener;

pub use master::{master_serve, MasterConfig, MasterOutcome};
pub use worker::{worker_serve, Jitter, WorkerOptions, WorkerReport};

use crate::{Error, ProblemInstance, Result};

/// Runs a master and `N` worker threads on 127.0.0.1. Worker `i` gets
/// `options(i)`.
pub fn run_loopback(
    instance: &ProblemInstance,
    config: &MasterConfig,
    options: impl Fn(usize) -> WorkerOptions,
) -> Result<(MasterOutcome, Vec<WorkerReport>)> {
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?;
    let rho = config.params.rho;
    std::thread::scope(|scope| {
        let workers: Vec<_> = instance
            .blocks()
            .iter()
            .enumerate()
            .map(|(i, block)| {
                let opts = options(i);
                let id = u16::try_from(i).map_err(|_| Error::InvalidArgument("too many workers".into()));
                scope.spawn(move || worker_serve(block, rho, id?, addr, &opts))
            })
            .collect();
        let outcome = master_serve(instance, config, listener);
        let reports = workers
            .into_iter()
            .map(|h| h.join().map_err(|_| Error::Protocol("worker thread panicked".into()))?)
            .collect::<Result<Vec<_>>>();
        Ok((outcome?, reports?))
    })
}
