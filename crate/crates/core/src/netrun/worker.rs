use std::net::{TcpStream, ToSocketAddrs};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::wire::{read_message, reason, write_message, Message};
use crate::engine::worker_update;
use crate::model::{SmoothBlock, Vector};
use crate::problems::WorkerSolver;
use crate::{Error, Result};

/// Random sleep before each reply, uniform in `[0, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Jitter {
    pub max: Duration,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WorkerOptions {
    pub connect_attempts: usize,
    /// First retry delay; doubles per attempt up to one second.
    pub backoff: Duration,
    pub jitter: Option<Jitter>,
}

impl Default for WorkerOptions {
    fn default() -> Self {
        Self {
            connect_attempts: 20,
            backoff: Duration::from_millis(25),
            jitter: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WorkerReport {
    pub updates: u64,
    pub shutdown_reason: u8,
}

fn connect(addr: &impl ToSocketAddrs, opts: &WorkerOptions) -> Result<TcpStream> {
    let mut delay = opts.backoff;
    let mut last = None;
    for attempt in 0..opts.connect_attempts.max(1) {
        if attempt > 0 {
            std::thread::sleep(delay);
            delay = (delay * 2).min(Duration::from_secs(1));
        }
        match TcpStream::connect(addr) {
            Ok(s) => return Ok(s),
            Err(e) => last = Some(e),
        }
    }
    Err(last.map_or_else(|| Error::Protocol("no address to connect to".into()), Error::Net))
}

/// Worker loop: HELLO, then for every broadcast solve the local subproblem,
/// update the dual and reply, until SHUTDOWN.
pub fn worker_serve(
    block: &SmoothBlock,
    rho: f64,
    id: u16,
    master: impl ToSocketAddrs,
    opts: &WorkerOptions,
) -> Result<WorkerReport> {
    let solver = WorkerSolver::new(block, rho)?;
    let n = block.dim();
    let mut stream = connect(&master, opts)?;
    stream.set_nodelay(true)?;
    write_message(&mut stream, &Message::Hello { id })?;
    let mut lambda = Vector::zeros(n);
    let mut k_local = 0u64;
    let mut rng = opts.jitter.map(|j| (j, ChaCha8Rng::seed_from_u64(j.seed)));
    loop {
        match read_message(&mut stream)? {
            Some(Message::BroadcastX0 { x0, .. }) => {
                if x0.len() != n {
                    return Err(Error::Protocol(format!(
                        "broadcast of length {} for a block of dimension {n}",
                        x0.len()
                    )));
                }
                let (x, lambda_next) = worker_update(&solver, &lambda, &Vector::from_vec(x0));
                lambda = lambda_next;
                k_local += 1;
                if let Some((j, r)) = rng.as_mut() {
                    let micros = j.max.as_micros() as u64;
                    std::thread::sleep(Duration::from_micros(r.random_range(0..=micros)));
                }
                write_message(
                    &mut stream,
                    &Message::WorkerUpdate {
                        id,
                        k: k_local,
                        x: x.as_slice().to_vec(),
                        lambda: lambda.as_slice().to_vec(),
                    },
                )?;
            }
            Some(Message::Shutdown { reason: code }) => {
                return Ok(WorkerReport {
                    updates: k_local,
                    shutdown_reason: code,
                })
            }
            Some(other) => {
                let _ = write_message(
                    &mut stream,
                    &Message::Shutdown {
                        reason: reason::PROTOCOL,
                    },
                );
                return Err(Error::Protocol(format!(
                    "unexpected type-{} frame from the master",
                    other.type_byte()
                )));
            }
            None => return Err(Error::Protocol("master closed the connection without SHUTDOWN".into())),
        }
    }
}
