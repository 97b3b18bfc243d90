//! Coordinator role: plan generations, fan assignments out to workers,
//! collect scalar results, fold the update, and broadcast commits.
//!
//! The paper-style all-to-all scalar broadcast is realized as a star: every
//! worker sends its returns here, and the complete list is relayed back
//! inside each COMMIT. The information flow is identical; failure handling
//! is much simpler.
//!
//! Concurrency model: one reader thread per connection feeds a single event
//! queue; all protocol state lives on the aggregation thread that owns
//! `run`. The update fold itself is the same sequential code every worker
//! runs.

use std::collections::HashMap;
use std::sync::mpsc::{Receiver, RecvTimeoutError, Sender};
use std::time::{Duration, Instant};

use crate::digest;
use crate::error::{Error, Result};
use crate::estimator::{
    fold_generation, plan_refs, EsConfig, EsState, EvalRecord, GenStats, GenerationUpdate,
};
use crate::noise::{NoiseTable, Sign};
use crate::wire::{Message, PROTO_VERSION};

use super::transport::{Connection, MsgSender};

/// Events feeding the aggregation loop.
pub enum Event {
    /// A transport appeared (TCP accept or in-process setup).
    Conn(Connection),
    Msg { conn: usize, msg: Message },
    Gone { conn: usize },
}

pub struct CoordSettings {
    /// Workers required before the first generation may start.
    pub expected_workers: usize,
    /// Inactivity limit for handshakes and result collection.
    pub timeout: Duration,
    /// Generations to run.
    pub updates: u64,
}

struct WorkerConn {
    sender: Box<dyn MsgSender>,
    /// Set once a valid HELLO arrives.
    worker_id: Option<u64>,
    alive: bool,
}

impl WorkerConn {
    fn assignable(&self) -> bool {
        self.alive && self.worker_id.is_some()
    }
}

/// Chunk of the generation plan: pair slots `[start, start + len)`.
#[derive(Debug, Clone, Copy)]
struct Chunk {
    start: u64,
    len: u64,
}

pub struct Coordinator<'a> {
    pub state: EsState,
    cfg: &'a EsConfig,
    table: &'a NoiseTable,
    run_seed: u64,
    /// Committed generations, kept for replaying to late or restarted
    /// workers. Scalars only; ~30 bytes per evaluation.
    history: Vec<Message>,
    conns: HashMap<usize, WorkerConn>,
    next_conn_id: usize,
    events_tx: Sender<Event>,
    events_rx: Receiver<Event>,
}

impl<'a> Coordinator<'a> {
    pub fn new(state: EsState, cfg: &'a EsConfig, table: &'a NoiseTable, run_seed: u64) -> Self {
        let (events_tx, events_rx) = std::sync::mpsc::channel();
        Coordinator {
            state,
            cfg,
            table,
            run_seed,
            history: Vec::new(),
            conns: HashMap::new(),
            next_conn_id: 0,
            events_tx,
            events_rx,
        }
    }

    /// Sender half of the event queue; hand `Event::Conn`s to it from an
    /// acceptor thread or test harness.
    pub fn event_sender(&self) -> Sender<Event> {
        self.events_tx.clone()
    }

    fn register(&mut self, conn: Connection) {
        let id = self.next_conn_id;
        self.next_conn_id += 1;
        let Connection { sender, mut receiver } = conn;
        self.conns.insert(id, WorkerConn { sender, worker_id: None, alive: true });
        let tx = self.events_tx.clone();
        std::thread::spawn(move || loop {
            match receiver.recv() {
                Ok(msg) => {
                    if tx.send(Event::Msg { conn: id, msg }).is_err() {
                        return;
                    }
                }
                Err(_) => {
                    let _ = tx.send(Event::Gone { conn: id });
                    return;
                }
            }
        });
    }

    /// Validates a HELLO against this run; on success replays all committed
    /// generations so the worker's replica catches up from scalars alone.
    fn handle_hello(&mut self, conn: usize, msg: &Message) {
        let Message::Hello { worker_id, proto_version, table_seed, table_len, d } = msg else {
            unreachable!("caller matched on Hello")
        };
        let ours = (
            PROTO_VERSION,
            self.table.seed(),
            self.table.len() as u64,
            self.state.theta.dim() as u64,
        );
        let theirs = (*proto_version, *table_seed, *table_len, *d);
        let Some(worker) = self.conns.get_mut(&conn) else { return };
        if theirs != ours {
            log::warn!(
                "rejecting worker {worker_id:#x}: handshake {theirs:?} does not match {ours:?}"
            );
            let _ = worker.sender.send(&Message::Bye);
            worker.alive = false;
            return;
        }
        let mut ok = true;
        for commit in &self.history {
            if worker.sender.send(commit).is_err() {
                ok = false;
                break;
            }
        }
        if ok {
            worker.worker_id = Some(*worker_id);
            log::info!("worker {worker_id:#x} joined at generation {}", self.state.theta.version);
        } else {
            worker.alive = false;
        }
    }

    fn assignable_conns(&self) -> Vec<usize> {
        let mut ids: Vec<usize> =
            self.conns.iter().filter(|(_, w)| w.assignable()).map(|(id, _)| *id).collect();
        ids.sort_unstable();
        ids
    }

    fn send_chunk(&mut self, conn: usize, generation: u64, chunk: Chunk) -> bool {
        let Some(worker) = self.conns.get_mut(&conn) else { return false };
        let msg = Message::Assign {
            generation,
            n_pairs: chunk.len,
            rng_stream_id: chunk.start,
        };
        if worker.sender.send(&msg).is_err() {
            worker.alive = false;
            return false;
        }
        true
    }

    /// Runs `settings.updates` generations, invoking `on_generation` after
    /// each commit. Returns the final state; workers hold bitwise-identical
    /// replicas.
    pub fn run(
        &mut self,
        settings: &CoordSettings,
        mut on_generation: impl FnMut(&GenStats, &EsState) -> Result<()>,
    ) -> Result<()> {
        self.await_quorum(settings)?;
        for _ in 0..settings.updates {
            let stats = self.run_generation(settings.timeout)?;
            on_generation(&stats, &self.state)?;
        }
        for worker in self.conns.values_mut() {
            if worker.assignable() {
                let _ = worker.sender.send(&Message::Bye);
            }
        }
        Ok(())
    }

    fn await_quorum(&mut self, settings: &CoordSettings) -> Result<()> {
        let deadline = Instant::now() + settings.timeout;
        while self.assignable_conns().len() < settings.expected_workers {
            let now = Instant::now();
            if now >= deadline {
                return Err(Error::Quorum(format!(
                    "{} of {} workers connected within the timeout",
                    self.assignable_conns().len(),
                    settings.expected_workers
                )));
            }
            match self.events_rx.recv_timeout(deadline - now) {
                Ok(event) => self.dispatch_idle(event),
                Err(RecvTimeoutError::Timeout) => continue,
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(Error::Quorum("event queue closed".into()))
                }
            }
        }
        Ok(())
    }

    /// Handles events that are valid outside result collection.
    fn dispatch_idle(&mut self, event: Event) {
        match event {
            Event::Conn(c) => self.register(c),
            Event::Msg { conn, msg } => match msg {
                Message::Hello { .. } => self.handle_hello(conn, &msg),
                Message::Bye => {
                    if let Some(w) = self.conns.get_mut(&conn) {
                        w.alive = false;
                    }
                }
                other => log::warn!("ignoring out-of-band message {other:?}"),
            },
            Event::Gone { conn } => {
                if let Some(w) = self.conns.get_mut(&conn) {
                    w.alive = false;
                }
            }
        }
    }

    fn run_generation(&mut self, timeout: Duration) -> Result<GenStats> {
        let generation = self.state.theta.version;
        let d = self.state.theta.dim();
        let refs = plan_refs(self.table, d, self.cfg, self.run_seed, generation)?;
        let n_pairs = refs.len() as u64;

        // Expected result keys for this generation.
        let mut expected: HashMap<(u64, Sign), ()> = HashMap::with_capacity(refs.len() * 2);
        for r in &refs {
            expected.insert((r.offset, Sign::Neg), ());
            expected.insert((r.offset, Sign::Pos), ());
        }

        // Contiguous chunks over the assignable workers, one each.
        let workers = self.assignable_conns();
        if workers.is_empty() {
            return Err(Error::Quorum("no live workers to assign".into()));
        }
        let per = n_pairs / workers.len() as u64;
        let extra = (n_pairs % workers.len() as u64) as usize;
        let mut assignments: HashMap<usize, Vec<Chunk>> = HashMap::new();
        let mut pending: Vec<Chunk> = Vec::new();
        let mut start = 0u64;
        for (i, conn) in workers.iter().enumerate() {
            let len = per + u64::from(i < extra);
            if len == 0 {
                continue;
            }
            let chunk = Chunk { start, len };
            start += len;
            if self.send_chunk(*conn, generation, chunk) {
                assignments.entry(*conn).or_default().push(chunk);
            } else {
                pending.push(chunk);
            }
        }

        let mut received: HashMap<(u64, Sign), EvalRecord> = HashMap::new();
        let deadline = Instant::now() + timeout;
        while (received.len() as u64) < 2 * n_pairs {
            // Re-dispatch chunks orphaned by dead workers.
            if !pending.is_empty() {
                if let Some(&target) = self.assignable_conns().first() {
                    for chunk in std::mem::take(&mut pending) {
                        if self.send_chunk(target, generation, chunk) {
                            assignments.entry(target).or_default().push(chunk);
                        } else {
                            pending.push(chunk);
                        }
                    }
                }
            }
            let now = Instant::now();
            if now >= deadline {
                return Err(Error::Quorum(format!(
                    "generation {generation} timed out with {}/{} results",
                    received.len(),
                    2 * n_pairs
                )));
            }
            let event = match self.events_rx.recv_timeout(deadline - now) {
                Ok(e) => e,
                Err(RecvTimeoutError::Timeout) => continue,
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(Error::Quorum("event queue closed".into()))
                }
            };
            match event {
                Event::Conn(c) => self.register(c),
                Event::Msg { conn, msg } => match msg {
                    Message::Result { generation: g, record } => {
                        if g != generation {
                            log::warn!("dropping result for generation {g} during {generation}");
                            continue;
                        }
                        let key = (record.offset, record.sign);
                        if !expected.contains_key(&key) {
                            log::warn!("dropping result for unknown perturbation {key:?}");
                            continue;
                        }
                        if received.contains_key(&key) {
                            log::info!("duplicate result for {key:?} rejected");
                            continue;
                        }
                        received.insert(key, record);
                    }
                    Message::Hello { .. } => self.handle_hello(conn, &msg),
                    Message::Bye => self.mark_gone(conn, &mut assignments, &mut pending, &received),
                    other => log::warn!("ignoring unexpected message {other:?}"),
                },
                Event::Gone { conn } => {
                    self.mark_gone(conn, &mut assignments, &mut pending, &received)
                }
            }
            if self.assignable_conns().is_empty() && !pending.is_empty() {
                // Keep waiting: a worker may still (re)join before the
                // deadline and pick the pending chunks up.
                log::warn!("all workers lost mid-generation; awaiting rejoin");
            }
        }

        // Canonical record list; every replica folds exactly this.
        let mut records: Vec<EvalRecord> = received.into_values().collect();
        records.sort_by_key(|r| r.sort_key());
        let upd = GenerationUpdate { generation, records };
        let stats = fold_generation(&mut self.state, self.cfg, self.table, self.run_seed, &upd)?;
        let update_checksum = digest::checksum_f64s(&self.state.theta.values);

        let commit = Message::Commit { generation, update_checksum, results: upd.records };
        self.history.push(commit.clone());
        let targets: Vec<usize> = self.assignable_conns();
        for conn in targets {
            if let Some(worker) = self.conns.get_mut(&conn) {
                if worker.sender.send(&commit).is_err() {
                    worker.alive = false;
                }
            }
        }
        Ok(stats)
    }

    /// Marks a connection dead and queues its incomplete chunks for
    /// reassignment. Completed evaluations are kept; duplicates arriving
    /// from the reassigned worker are rejected by key.
    fn mark_gone(
        &mut self,
        conn: usize,
        assignments: &mut HashMap<usize, Vec<Chunk>>,
        pending: &mut Vec<Chunk>,
        received: &HashMap<(u64, Sign), EvalRecord>,
    ) {
        if let Some(w) = self.conns.get_mut(&conn) {
            if !w.alive {
                return;
            }
            w.alive = false;
            if let Some(id) = w.worker_id {
                log::warn!("worker {id:#x} lost");
            }
        }
        if let Some(chunks) = assignments.remove(&conn) {
            // A chunk may be partially done; reassigning the whole chunk is
            // harmless because finished keys dedup on arrival.
            let _ = received;
            pending.extend(chunks);
        }
    }
}
