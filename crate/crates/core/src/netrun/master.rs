use std::net::{Shutdown, TcpListener, TcpStream};
use std::sync::mpsc::{channel, Receiver, TryRecvError};
use std::thread::JoinHandle;

use super::wire::{read_message, reason, write_message, Message};
use crate::engine::{drive, finish, reference_of, AdAdmmCore, AlgoParams, IterationRecord, RunTrace, Scheme, Stepper};
use crate::model::{ConsensusState, Vector};
use crate::scheduler::Schedule;
use crate::{Error, ProblemInstance, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MasterConfig {
    /// Must select the AD-ADMM scheme.
    pub params: AlgoParams,
    pub tau: usize,
    pub min_arrivals: usize,
}

impl MasterConfig {
    fn validate(&self, n_workers: usize) -> Result<()> {
        self.params.validate()?;
        if self.params.scheme != Scheme::AdAdmm {
            return Err(Error::InvalidArgument(format!(
                "the TCP runtime executes AD-ADMM, not '{}'",
                self.params.scheme.name()
            )));
        }
        if self.tau == 0 || self.min_arrivals == 0 || self.min_arrivals > n_workers {
            return Err(Error::InvalidArgument(format!(
                "need tau >= 1 and 1 <= A <= N (tau={}, A={}, N={n_workers})",
                self.tau, self.min_arrivals
            )));
        }
        if n_workers > usize::from(u16::MAX) + 1 {
            return Err(Error::InvalidArgument(format!(
                "{n_workers} workers exceed the 16-bit id space"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct MasterOutcome {
    pub trace: RunTrace,
    /// Arrival sets in the order the master consumed them.
    pub schedule: Schedule,
}

enum Event {
    Frame(usize, Message),
    Closed(usize, Option<String>),
}

/// Accepts connections until every worker id in `0..N` has said HELLO.
/// Connections with a bad or duplicate HELLO are dropped.
fn accept_workers(listener: &TcpListener, n: usize) -> Result<Vec<TcpStream>> {
    let mut slots: Vec<Option<TcpStream>> = (0..n).map(|_| None).collect();
    let mut joined = 0;
    while joined < n {
        let (mut stream, _) = listener.accept()?;
        stream.set_nodelay(true)?;
        match read_message(&mut stream) {
            Ok(Some(Message::Hello { id })) if usize::from(id) < n && slots[usize::from(id)].is_none() => {
                slots[usize::from(id)] = Some(stream);
                joined += 1;
            }
            _ => {
                let _ = write_message(
                    &mut stream,
                    &Message::Shutdown {
                        reason: reason::PROTOCOL,
                    },
                );
            }
        }
    }
    Ok(slots.into_iter().map(|s| s.expect("all slots filled")).collect())
}

fn spawn_reader(id: usize, mut stream: TcpStream, tx: std::sync::mpsc::Sender<Event>) -> JoinHandle<()> {
    std::thread::spawn(move || loop {
        match read_message(&mut stream) {
            Ok(Some(m)) => {
                if tx.send(Event::Frame(id, m)).is_err() {
                    return;
                }
            }
            Ok(None) => {
                let _ = tx.send(Event::Closed(id, None));
                return;
            }
            Err(e) => {
                let _ = tx.send(Event::Closed(id, Some(e.to_string())));
                return;
            }
        }
    })
}

/// The decision loop: the only writer of algorithm state.
struct NetStepper<'a> {
    core: AdAdmmCore<'a>,
    links: Vec<TcpStream>,
    events: Receiver<Event>,
    pending: Vec<Option<(Vector, Vector)>>,
    delays: Vec<usize>,
    tau: usize,
    min_arrivals: usize,
}

impl NetStepper<'_> {
    fn absorb(&mut self, ev: Event) -> Result<()> {
        match ev {
            Event::Frame(conn, Message::WorkerUpdate { id, x, lambda, .. }) => {
                if usize::from(id) != conn {
                    return Err(Error::Protocol(format!("worker {conn} sent an update labelled {id}")));
                }
                let n = self.core.state().dim();
                if x.len() != n || lambda.len() != n {
                    return Err(Error::Protocol(format!(
                        "worker {conn} sent vectors of length {}/{} for dimension {n}",
                        x.len(),
                        lambda.len()
                    )));
                }
                // Workers block on the broadcast, so a second update inside
                // one master iteration cannot happen.
                if self.pending[conn].is_some() {
                    return Err(Error::Protocol(format!(
                        "worker {conn} sent two updates within one master iteration"
                    )));
                }
                self.pending[conn] = Some((Vector::from_vec(x), Vector::from_vec(lambda)));
                Ok(())
            }
            Event::Frame(conn, other) => Err(Error::Protocol(format!(
                "unexpected type-{} frame from worker {conn}",
                other.type_byte()
            ))),
            Event::Closed(conn, why) => Err(Error::Protocol(format!(
                "worker {conn} disconnected{}",
                why.map(|w| format!(": {w}")).unwrap_or_default()
            ))),
        }
    }

    /// `|A_k| ≥ A` and every absent worker is younger than `τ−1`.
    fn gate_open(&self) -> bool {
        let arrived = self.pending.iter().filter(|p| p.is_some()).count();
        arrived >= self.min_arrivals
            && self
                .pending
                .iter()
                .zip(&self.delays)
                .all(|(p, d)| p.is_some() || d + 1 < self.tau)
    }

    fn wait_for_gate(&mut self) -> Result<()> {
        loop {
            loop {
                match self.events.try_recv() {
                    Ok(ev) => self.absorb(ev)?,
                    Err(TryRecvError::Empty) => break,
                    Err(TryRecvError::Disconnected) => {
                        return Err(Error::Protocol("all worker connections closed".into()))
                    }
                }
            }
            if self.gate_open() {
                return Ok(());
            }
            let ev = self
                .events
                .recv()
                .map_err(|_| Error::Protocol("all worker connections closed".into()))?;
            self.absorb(ev)?;
        }
    }

    fn broadcast(&mut self, to: &[usize]) -> Result<()> {
        let msg = Message::BroadcastX0 {
            k: self.core.state().k as u64,
            x0: self.core.state().x0.as_slice().to_vec(),
        };
        let frame = msg.encode()?;
        for &i in to {
            use std::io::Write;
            self.links[i].write_all(&frame)?;
        }
        Ok(())
    }

    fn shutdown_all(&mut self, code: u8) {
        for link in &mut self.links {
            let _ = write_message(link, &Message::Shutdown { reason: code });
            let _ = link.shutdown(Shutdown::Write);
        }
    }
}

impl Stepper for NetStepper<'_> {
    fn step(&mut self, _k: usize) -> Result<IterationRecord> {
        self.wait_for_gate()?;
        let mut arrivals = Vec::new();
        let mut updates = Vec::new();
        for (i, p) in self.pending.iter_mut().enumerate() {
            if let Some(u) = p.take() {
                arrivals.push(i);
                updates.push(u);
            }
        }
        let rec = self.core.apply(&arrivals, updates)?;
        for (i, d) in self.delays.iter_mut().enumerate() {
            *d = if arrivals.binary_search(&i).is_ok() { 0 } else { *d + 1 };
        }
        self.broadcast(&arrivals)?;
        Ok(rec)
    }

    fn state(&self) -> &ConsensusState {
        self.core.state()
    }
}

/// Serves one AD-ADMM run: waits for `N` workers on `listener`, sends them
/// the initial `x_0`, then loops gate → master update → broadcast to the
/// arrived workers. Ends with `SHUTDOWN` to everyone. A lost worker or a
/// protocol violation aborts the run after notifying the others.
pub fn master_serve(instance: &ProblemInstance, config: &MasterConfig, listener: TcpListener) -> Result<MasterOutcome> {
    let n = instance.n_workers();
    config.validate(n)?;
    let params = &config.params;
    let state = params.initial.state(n, instance.dim())?;
    let core = AdAdmmCore::new(instance, params.rho, params.gamma, state, params.track_objective)?;
    let initial = core.initial_record();

    let links = accept_workers(&listener, n)?;
    let (tx, rx) = channel();
    let readers = links
        .iter()
        .enumerate()
        .map(|(i, s)| Ok(spawn_reader(i, s.try_clone()?, tx.clone())))
        .collect::<Result<Vec<_>>>()?;
    drop(tx);

    let mut stepper = NetStepper {
        core,
        links,
        events: rx,
        pending: vec![None; n],
        delays: vec![0; n],
        tau: config.tau,
        min_arrivals: config.min_arrivals,
    };
    let all: Vec<usize> = (0..n).collect();
    let outcome = stepper.broadcast(&all).and_then(|()| {
        drive(
            params,
            params.stop.max_iters,
            &initial,
            reference_of(instance, params),
            &mut stepper,
        )
    });
    let outcome = match outcome {
        Ok(o) => o,
        Err(e) => {
            let code = if matches!(e, Error::Protocol(_)) {
                reason::PROTOCOL
            } else {
                reason::PEER_LOST
            };
            stepper.shutdown_all(code);
            return Err(e);
        }
    };
    stepper.shutdown_all(reason::DONE);
    // Readers end when the workers close after SHUTDOWN.
    drop(stepper.events);
    for r in readers {
        let _ = r.join();
    }
    let sets = outcome.records.iter().map(|r| r.arrivals.clone()).collect();
    let schedule = Schedule::from_arrivals(n, sets)?;
    let trace = finish(
        instance,
        params,
        params.gamma,
        initial,
        outcome,
        stepper.core.into_state(),
    );
    Ok(MasterOutcome { trace, schedule })
}
