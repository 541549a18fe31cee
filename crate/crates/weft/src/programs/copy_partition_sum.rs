//! Partition-by-copy summation.
//!
//! `copy-partition-sum` is the copy-based variant of `partition-sum`: the
//! halves of a 4096-byte block travel to per-worker chunk blocks through
//! partition copies, each worker scales its chunk and copies it back, and a
//! finish task sums the reunited parent. Under the eager copy
//! implementation every partition copy moves real bytes; under the
//! zero-copy implementation the chunks alias the parent and both the copy
//! out and the copy back are free.
//!
//! `copy-partition-conflict` makes two copy windows overlap while one of
//! them is written, forcing the zero-copy implementation to materialize
//! exactly one private copy so the reader keeps its snapshot.
//!
//! `copy-partition-violation` tries to acquire the source block while copy
//! children are still outstanding, which the runtime rejects.

use crate::ctx::TaskCtx;
use crate::datablock::DepRecord;
use crate::error::RuntimeError;
use crate::harness::Registry;
use crate::ident::Identifier;
use crate::message::{AcquireMode, CopyKind};

const BLOCK: u64 = 4096;
const WORDS: usize = (BLOCK / 4) as usize;

/// Parameter-block layout: finish-task id at 0, parent-block id at 16.
const OFF_FINISH: usize = 0;
const OFF_PARENT: usize = 16;

fn cps_main(
    ctx: &mut TaskCtx<'_>,
    _params: &[u64],
    _deps: &[DepRecord],
) -> Result<Identifier, RuntimeError> {
    let (db, view) = ctx.db_create(BLOCK)?;
    for i in 0..WORDS {
        view.set_u32(i, 1)?;
    }
    ctx.db_release(db)?;

    let chunk1 = ctx.db_create_no_acquire(BLOCK / 2)?;
    let chunk2 = ctx.db_create_no_acquire(BLOCK / 2)?;
    let copied1 = ctx.db_copy(chunk1, 0, db, 0, BLOCK / 2, CopyKind::Partition)?;
    let copied2 = ctx.db_copy(chunk2, 0, db, BLOCK / 2, BLOCK / 2, CopyKind::Partition)?;

    let worker = ctx.template_create("cps_worker", 3, 2)?;
    let finisher = ctx.template_create("cps_finish", 0, 4)?;
    let finish = ctx.edt_create(finisher, vec![], None)?;

    // Workers learn where to send their copy-back completions through a
    // small parameter block; ids cross task boundaries as stored bytes, so
    // they must be resolved global ids.
    let (params, pv) = ctx.db_create(32)?;
    pv.write_id(OFF_FINISH, ctx.get_guid(finish)?)?;
    pv.write_id(OFF_PARENT, ctx.get_guid(db)?)?;
    ctx.db_release(params)?;

    // Worker parameters: multiplier, finish slot to signal, element offset
    // of its half within the parent.
    let w1 = ctx.edt_create(worker, vec![2, 1, 0], None)?;
    let w2 = ctx.edt_create(worker, vec![6, 2, (WORDS / 2) as u64], None)?;

    ctx.add_dependence(db, finish, 0, AcquireMode::Ro)?;
    ctx.add_dependence(params, finish, 3, AcquireMode::Ro)?;
    ctx.add_dependence(copied1, w1, 0, AcquireMode::Ew)?;
    ctx.add_dependence(copied2, w2, 0, AcquireMode::Ew)?;
    ctx.add_dependence(params, w1, 1, AcquireMode::Const)?;
    ctx.add_dependence(params, w2, 1, AcquireMode::Const)?;
    Ok(Identifier::Null)
}

fn cps_worker(
    ctx: &mut TaskCtx<'_>,
    params: &[u64],
    deps: &[DepRecord],
) -> Result<Identifier, RuntimeError> {
    let chunk = deps[0].view.as_ref().expect("chunk block is acquired");
    for i in 0..WORDS / 2 {
        chunk.set_u32(i, chunk.get_u32(i)?.wrapping_mul(params[0] as u32))?;
    }
    let pv = deps[1].view.as_ref().expect("parameter block is acquired");
    let finish = pv.read_id(OFF_FINISH)?;
    let parent = pv.read_id(OFF_PARENT)?;

    // Release before the copy back so the runtime may retire the chunk
    // block as part of the copy.
    ctx.db_release(deps[0].id)?;
    let done = ctx.db_copy(parent, params[2] * 4, deps[0].id, 0, BLOCK / 2, CopyKind::PartitionBack)?;
    ctx.add_dependence(done, finish, params[1] as u32, AcquireMode::Null)?;
    Ok(Identifier::Null)
}

fn cps_finish(
    ctx: &mut TaskCtx<'_>,
    _params: &[u64],
    deps: &[DepRecord],
) -> Result<Identifier, RuntimeError> {
    let view = deps[0].view.as_ref().expect("parent block is acquired");
    let mut sum: u64 = 0;
    for i in 0..WORDS {
        sum += view.get_u32(i)? as u64;
    }
    ctx.report("sum", sum);
    ctx.destroy(deps[3].id)?;
    ctx.destroy(deps[0].id)?;
    ctx.shutdown();
    Ok(Identifier::Null)
}

const CONFLICT_BLOCK: u64 = 2048;
const CONFLICT_WORDS: usize = (CONFLICT_BLOCK / 4) as usize;

/// Conflict-micro parameter block: finish id, parent id, writer-task id.
const OFF_WRITER: usize = 32;

/// Two whole-block copy windows over the same parent: one headed for a
/// writer, one for a reader. Under zero copy both chunks start as aliases
/// of the same bytes, so the reader's grant has to materialize a private
/// snapshot — exactly one copy-on-write. The writer is chained behind the
/// reader's zero-byte copy-back, which both retires the read chunk at the
/// parent's home and orders the doubling after the snapshot.
fn cpc_main(
    ctx: &mut TaskCtx<'_>,
    _params: &[u64],
    _deps: &[DepRecord],
) -> Result<Identifier, RuntimeError> {
    let (db, view) = ctx.db_create(CONFLICT_BLOCK)?;
    for i in 0..CONFLICT_WORDS {
        view.set_u32(i, 1)?;
    }
    ctx.db_release(db)?;

    let chunk1 = ctx.db_create_no_acquire(CONFLICT_BLOCK)?;
    let chunk2 = ctx.db_create_no_acquire(CONFLICT_BLOCK)?;
    let copied1 = ctx.db_copy(chunk1, 0, db, 0, CONFLICT_BLOCK, CopyKind::Partition)?;
    let copied2 = ctx.db_copy(chunk2, 0, db, 0, CONFLICT_BLOCK, CopyKind::Partition)?;

    let writer = ctx.template_create("cpc_writer", 0, 3)?;
    let reader = ctx.template_create("cpc_reader", 0, 2)?;
    let finisher = ctx.template_create("cpc_finish", 0, 2)?;
    let finish = ctx.edt_create(finisher, vec![], None)?;
    let w = ctx.edt_create(writer, vec![], None)?;

    let (params, pv) = ctx.db_create(48)?;
    pv.write_id(OFF_FINISH, ctx.get_guid(finish)?)?;
    pv.write_id(OFF_PARENT, ctx.get_guid(db)?)?;
    pv.write_id(OFF_WRITER, ctx.get_guid(w)?)?;
    ctx.db_release(params)?;

    let r = ctx.edt_create(reader, vec![], None)?;

    ctx.add_dependence(db, finish, 0, AcquireMode::Ro)?;
    ctx.add_dependence(copied1, w, 0, AcquireMode::Ew)?;
    ctx.add_dependence(params, w, 1, AcquireMode::Const)?;
    // Writer slot 2 stays unconnected until the reader chains it to its
    // own copy-back completion.
    ctx.add_dependence(copied2, r, 0, AcquireMode::Ro)?;
    ctx.add_dependence(params, r, 1, AcquireMode::Const)?;
    Ok(Identifier::Null)
}

fn cpc_reader(
    ctx: &mut TaskCtx<'_>,
    _params: &[u64],
    deps: &[DepRecord],
) -> Result<Identifier, RuntimeError> {
    let chunk = deps[0].view.as_ref().expect("chunk block is acquired");
    let mut sum: u64 = 0;
    for i in 0..CONFLICT_WORDS {
        sum += chunk.get_u32(i)? as u64;
    }
    // The snapshot predates the writer's doubling.
    ctx.report("reader_sum", sum);
    let pv = deps[1].view.as_ref().expect("parameter block is acquired");
    let parent = pv.read_id(OFF_PARENT)?;
    let writer = pv.read_id(OFF_WRITER)?;
    ctx.db_release(deps[0].id)?;
    // A zero-byte copy-back discards the chunk: nothing moves, but the
    // parent stops tracking it as a copy child, and the completion event
    // releases the writer.
    let done = ctx.db_copy(parent, 0, deps[0].id, 0, 0, CopyKind::PartitionBack)?;
    ctx.add_dependence(done, writer, 2, AcquireMode::Null)?;
    Ok(Identifier::Null)
}

fn cpc_writer(
    ctx: &mut TaskCtx<'_>,
    _params: &[u64],
    deps: &[DepRecord],
) -> Result<Identifier, RuntimeError> {
    let chunk = deps[0].view.as_ref().expect("chunk block is acquired");
    for i in 0..CONFLICT_WORDS {
        chunk.set_u32(i, chunk.get_u32(i)?.wrapping_mul(2))?;
    }
    let pv = deps[1].view.as_ref().expect("parameter block is acquired");
    let finish = pv.read_id(OFF_FINISH)?;
    let parent = pv.read_id(OFF_PARENT)?;
    ctx.destroy(deps[1].id)?;
    ctx.db_release(deps[0].id)?;
    let done = ctx.db_copy(parent, 0, deps[0].id, 0, CONFLICT_BLOCK, CopyKind::PartitionBack)?;
    ctx.add_dependence(done, finish, 1, AcquireMode::Null)?;
    Ok(Identifier::Null)
}

fn cpc_finish(
    ctx: &mut TaskCtx<'_>,
    _params: &[u64],
    deps: &[DepRecord],
) -> Result<Identifier, RuntimeError> {
    let view = deps[0].view.as_ref().expect("parent block is acquired");
    let mut sum: u64 = 0;
    for i in 0..CONFLICT_WORDS {
        sum += view.get_u32(i)? as u64;
    }
    ctx.report("writer_sum", sum);
    ctx.destroy(deps[0].id)?;
    ctx.shutdown();
    Ok(Identifier::Null)
}

fn cpv_main(
    ctx: &mut TaskCtx<'_>,
    _params: &[u64],
    _deps: &[DepRecord],
) -> Result<Identifier, RuntimeError> {
    let (db, _view) = ctx.db_create(64)?;
    ctx.db_release(db)?;
    let chunk = ctx.db_create_no_acquire(64)?;
    ctx.db_copy(chunk, 0, db, 0, 64, CopyKind::Partition)?;
    let template = ctx.template_create("cpv_reader", 0, 1)?;
    let task = ctx.edt_create(template, vec![], None)?;
    // The chunk block is never copied back, so this acquire reaches the
    // source while a copy child is outstanding — a protocol violation.
    ctx.add_dependence(db, task, 0, AcquireMode::Ro)?;
    Ok(Identifier::Null)
}

fn cpv_reader(
    _ctx: &mut TaskCtx<'_>,
    _params: &[u64],
    _deps: &[DepRecord],
) -> Result<Identifier, RuntimeError> {
    Ok(Identifier::Null)
}

pub(super) fn register(reg: &mut Registry) {
    reg.register_task("cps_main", cps_main);
    reg.register_task("cps_worker", cps_worker);
    reg.register_task("cps_finish", cps_finish);
    reg.register_task("cpc_main", cpc_main);
    reg.register_task("cpc_writer", cpc_writer);
    reg.register_task("cpc_reader", cpc_reader);
    reg.register_task("cpc_finish", cpc_finish);
    reg.register_task("cpv_main", cpv_main);
    reg.register_task("cpv_reader", cpv_reader);
    reg.register_program(
        "copy-partition-sum",
        "cps_main",
        "scale two copy-partitioned chunks and copy them back, then sum the parent",
    );
    reg.register_program(
        "copy-partition-conflict",
        "cpc_main",
        "overlap a written and a read copy window, forcing one copy-on-write",
    );
    reg.register_program(
        "copy-partition-violation",
        "cpv_main",
        "acquire a block that still has copy children (fails with partition-protocol-violation)",
    );
}
