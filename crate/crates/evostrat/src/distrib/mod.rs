//! Coordinator/worker execution of the generation loop with scalar-only
//! messages, over TCP or in-process channels. Both backends share the frame
//! codec and the update fold, so parameter trajectories are bitwise
//! identical across topologies given the same seeds.

mod coordinator;
mod transport;
mod worker;

pub use coordinator::{CoordSettings, Coordinator, Event};
pub use transport::{channel_pair, Connection, MsgReceiver, MsgSender};
pub use worker::{worker_loop, WorkerSetup};

use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::Sender;
use std::sync::Arc;
use std::time::Duration;

use crate::error::{Error, Result};
use crate::estimator::{EsConfig, EsState, Evaluator, GenStats};
use crate::noise::NoiseTable;

/// Feeds accepted TCP connections into a coordinator's event queue until
/// shut down.
pub struct Acceptor {
    stop: Arc<AtomicBool>,
    local_addr: std::net::SocketAddr,
    handle: Option<std::thread::JoinHandle<()>>,
}

impl Acceptor {
    pub fn spawn(listener: TcpListener, events: Sender<Event>) -> Result<Self> {
        let stop = Arc::new(AtomicBool::new(false));
        let local_addr = listener.local_addr()?;
        let stop_flag = stop.clone();
        let handle = std::thread::spawn(move || {
            for stream in listener.incoming() {
                if stop_flag.load(Ordering::SeqCst) {
                    return;
                }
                let Ok(stream) = stream else { continue };
                match Connection::from_tcp(stream) {
                    Ok(conn) => {
                        if events.send(Event::Conn(conn)).is_err() {
                            return;
                        }
                    }
                    Err(e) => log::warn!("dropping incoming connection: {e}"),
                }
            }
        });
        Ok(Acceptor { stop, local_addr, handle: Some(handle) })
    }

    pub fn local_addr(&self) -> std::net::SocketAddr {
        self.local_addr
    }

    /// Stops accepting; wakes the blocked accept with a self-connection.
    pub fn shutdown(mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.local_addr);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

/// Connects a worker to a coordinator address.
pub fn connect(addr: impl ToSocketAddrs) -> Result<Connection> {
    let stream = TcpStream::connect(addr)?;
    Connection::from_tcp(stream)
}

pub struct InprocOutcome {
    pub coordinator: EsState,
    /// Final replicated state of each worker, in spawn order.
    pub workers: Vec<EsState>,
}

/// Runs a coordinator plus `n_workers` worker threads connected by
/// in-process channels. Every frame still round-trips through the wire
/// codec.
#[allow(clippy::too_many_arguments)]
pub fn run_inproc(
    initial: &EsState,
    cfg: &EsConfig,
    table: &NoiseTable,
    run_seed: u64,
    n_workers: usize,
    updates: u64,
    timeout: Duration,
    make_evaluator: &(dyn Fn(usize) -> Box<dyn Evaluator> + Sync),
    mut on_generation: impl FnMut(&GenStats, &EsState) -> Result<()>,
) -> Result<InprocOutcome> {
    if n_workers == 0 {
        return Err(Error::argument("in-process backend needs at least one worker"));
    }
    std::thread::scope(|scope| {
        let mut coordinator = Coordinator::new(initial.clone(), cfg, table, run_seed);
        let conn_tx = coordinator.event_sender();
        let mut handles = Vec::with_capacity(n_workers);
        for w in 0..n_workers {
            let (coord_end, worker_end) = channel_pair();
            conn_tx
                .send(Event::Conn(coord_end))
                .map_err(|_| Error::Quorum("coordinator event queue closed".into()))?;
            let evaluator = make_evaluator(w);
            let worker_initial = initial.clone();
            handles.push(scope.spawn(move || {
                worker_loop(
                    worker_end,
                    WorkerSetup {
                        cfg,
                        table,
                        run_seed,
                        worker_id: w as u64 + 1,
                        evaluator: evaluator.as_ref(),
                        initial: worker_initial,
                    },
                )
            }));
        }
        let settings =
            CoordSettings { expected_workers: n_workers, timeout, updates };
        let coord_result = coordinator.run(&settings, &mut on_generation);
        let final_state = coordinator.state.clone();
        // Dropping the coordinator drops every sender, which unblocks any
        // worker still waiting on a frame.
        drop(coordinator);
        let mut workers = Vec::with_capacity(n_workers);
        let mut worker_err = None;
        for h in handles {
            match h.join().expect("worker thread panicked") {
                Ok(state) => workers.push(state),
                Err(e) => worker_err = Some(e),
            }
        }
        coord_result?;
        if let Some(e) = worker_err {
            return Err(e);
        }
        Ok(InprocOutcome { coordinator: final_state, workers })
    })
}
