//! Worker role: evaluate assigned perturbations, report scalar returns,
//! and replicate every parameter update locally from the committed result
//! lists.

use crate::digest;
use crate::error::{Error, Result};
use crate::estimator::{
    evaluate_ref, fold_generation, plan_refs, EsConfig, EsState, Evaluator, GenerationUpdate,
};
use crate::noise::{mirror_ref, NoiseTable};
use crate::wire::{Message, PROTO_VERSION};

use super::transport::Connection;

pub struct WorkerSetup<'a> {
    pub cfg: &'a EsConfig,
    pub table: &'a NoiseTable,
    pub run_seed: u64,
    pub worker_id: u64,
    pub evaluator: &'a dyn Evaluator,
    /// Fresh run state at generation 0, derived from the shared config.
    /// Rejoining workers start here too; the coordinator replays all
    /// committed generations on join, which brings this replica up to date
    /// from scalars alone.
    pub initial: EsState,
}

/// Runs the worker protocol until BYE. Returns the final replicated state,
/// which is bitwise identical to the coordinator's.
pub fn worker_loop(mut conn: Connection, setup: WorkerSetup<'_>) -> Result<EsState> {
    let WorkerSetup { cfg, table, run_seed, worker_id, evaluator, initial } = setup;
    let mut state = initial;
    let d = state.theta.dim();
    conn.sender.send(&Message::Hello {
        worker_id,
        proto_version: PROTO_VERSION,
        table_seed: table.seed(),
        table_len: table.len() as u64,
        d: d as u64,
    })?;

    loop {
        match conn.receiver.recv()? {
            Message::Assign { generation, n_pairs, rng_stream_id } => {
                let version = state.theta.version;
                if generation < version {
                    // Stale chunk from before a rejoin; the plan was already
                    // committed, so there is nothing useful to compute.
                    continue;
                }
                if generation > version {
                    return Err(Error::Consistency(format!(
                        "assigned generation {generation} but replica is at {version}"
                    )));
                }
                let start = rng_stream_id as usize;
                let count = n_pairs as usize;
                // Replay the generation's accepted-draw stream far enough to
                // recover exactly this chunk of the plan.
                let all = plan_refs(table, d, cfg, run_seed, generation)?;
                if start + count > all.len() {
                    return Err(Error::protocol(format!(
                        "assignment [{start}, {}) exceeds plan of {} pairs",
                        start + count,
                        all.len()
                    )));
                }
                let cap = state.cap.as_ref().map(|c| c.current());
                for r in &all[start..start + count] {
                    for dir in [mirror_ref(*r), *r] {
                        let record = evaluate_ref(
                            &state.theta.values,
                            cfg,
                            table,
                            run_seed,
                            generation,
                            &dir,
                            cap,
                            evaluator,
                        )?;
                        conn.sender.send(&Message::Result { generation, record })?;
                    }
                }
            }
            Message::Commit { generation, update_checksum, results } => {
                let upd = GenerationUpdate { generation, records: results };
                fold_generation(&mut state, cfg, table, run_seed, &upd)?;
                let local = digest::checksum_f64s(&state.theta.values);
                if local != update_checksum {
                    return Err(Error::Consistency(format!(
                        "parameter checksum mismatch at generation {generation}: \
                         local {local:016x}, coordinator {update_checksum:016x}"
                    )));
                }
            }
            Message::Bye => return Ok(state),
            other => {
                return Err(Error::protocol(format!(
                    "worker received unexpected message {other:?}"
                )))
            }
        }
    }
}
