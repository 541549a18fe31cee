//! Partitioned block summation.
//!
//! `partition-sum` splits a 4096-byte block of ones into two partition
//! blocks, lets one worker multiply each half in place under exclusive
//! write, and has a finish task sum the whole parent afterwards. Each
//! worker signals a completion event before destroying its partition
//! block, so the finish task's read acquire on the parent can arrive while
//! partitions are still alive — the runtime then holds the grant back
//! until both partition blocks are destroyed, which is the ordering the
//! trace makes visible.
//!
//! `partition-deadlock` wires a parent block and one of its own partitions
//! into the same task, an acquire set that can never be granted; the
//! runtime rejects it at wiring time.

use crate::ctx::TaskCtx;
use crate::datablock::DepRecord;
use crate::error::RuntimeError;
use crate::harness::Registry;
use crate::ident::Identifier;
use crate::message::AcquireMode;

const BLOCK: u64 = 4096;
const WORDS: usize = (BLOCK / 4) as usize;

/// Parameter-block layout: one completion-event id per worker.
const OFF_EVENT: [usize; 2] = [0, 16];

fn ps_main(
    ctx: &mut TaskCtx<'_>,
    _params: &[u64],
    _deps: &[DepRecord],
) -> Result<Identifier, RuntimeError> {
    let (db, view) = ctx.db_create(BLOCK)?;
    for i in 0..WORDS {
        view.set_u32(i, 1)?;
    }
    ctx.db_release(db)?;

    let done = [ctx.event_create()?, ctx.event_create()?];
    let (params, pv) = ctx.db_create(32)?;
    pv.write_id(OFF_EVENT[0], ctx.get_guid(done[0])?)?;
    pv.write_id(OFF_EVENT[1], ctx.get_guid(done[1])?)?;
    ctx.db_release(params)?;

    let worker = ctx.template_create("ps_worker", 2, 2)?;
    let finisher = ctx.template_create("ps_finish", 0, 4)?;
    let parts = ctx.db_partition(db, &[(0, BLOCK / 2), (BLOCK / 2, BLOCK / 2)], false)?;
    // Worker parameters: multiplier, index of its completion event.
    let w1 = ctx.edt_create(worker, vec![2, 0], None)?;
    let finish = ctx.edt_create(finisher, vec![], None)?;
    let w2 = ctx.edt_create(worker, vec![6, 1], None)?;

    // The finish task names the parent block before the workers have even
    // seen their halves; its acquire stays queued until both partition
    // blocks are gone.
    ctx.add_dependence(db, finish, 0, AcquireMode::Ro)?;
    ctx.add_dependence(done[0], finish, 1, AcquireMode::Default)?;
    ctx.add_dependence(done[1], finish, 2, AcquireMode::Default)?;
    ctx.add_dependence(params, finish, 3, AcquireMode::Ro)?;
    ctx.add_dependence(parts[0], w1, 0, AcquireMode::Ew)?;
    ctx.add_dependence(parts[1], w2, 0, AcquireMode::Ew)?;
    ctx.add_dependence(params, w1, 1, AcquireMode::Const)?;
    ctx.add_dependence(params, w2, 1, AcquireMode::Const)?;
    Ok(Identifier::Null)
}

fn ps_worker(
    ctx: &mut TaskCtx<'_>,
    params: &[u64],
    deps: &[DepRecord],
) -> Result<Identifier, RuntimeError> {
    let view = deps[0].view.as_ref().expect("partition block is acquired");
    for i in 0..WORDS / 2 {
        view.set_u32(i, view.get_u32(i)?.wrapping_mul(params[0] as u32))?;
    }
    let pv = deps[1].view.as_ref().expect("parameter block is acquired");
    let event = pv.read_id(OFF_EVENT[params[1] as usize])?;
    // Signal completion first, then destroy the partition: the finish
    // task's acquire on the parent may now overtake the destroy, and the
    // runtime has to hold its grant back.
    ctx.event_satisfy(event, Identifier::Null)?;
    ctx.destroy(deps[0].id)?;
    Ok(Identifier::Null)
}

fn ps_finish(
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

fn pd_main(
    ctx: &mut TaskCtx<'_>,
    _params: &[u64],
    _deps: &[DepRecord],
) -> Result<Identifier, RuntimeError> {
    let (db, _view) = ctx.db_create(BLOCK)?;
    ctx.db_release(db)?;
    let parts = ctx.db_partition(db, &[(0, BLOCK / 2), (BLOCK / 2, BLOCK / 2)], false)?;
    let template = ctx.template_create("pd_never", 0, 2)?;
    let task = ctx.edt_create(template, vec![], None)?;
    // A task acquiring both a block and one of its own partitions can never
    // become runnable: the parent grant waits for the partition to die, and
    // the partition can only die after this task ran. The runtime reports
    // the cycle when the second of these two dependences is wired.
    ctx.add_dependence(db, task, 0, AcquireMode::Ro)?;
    ctx.add_dependence(parts[0], task, 1, AcquireMode::Ro)?;
    Ok(Identifier::Null)
}

fn pd_never(
    _ctx: &mut TaskCtx<'_>,
    _params: &[u64],
    _deps: &[DepRecord],
) -> Result<Identifier, RuntimeError> {
    Ok(Identifier::Null)
}

pub(super) fn register(reg: &mut Registry) {
    reg.register_task("ps_main", ps_main);
    reg.register_task("ps_worker", ps_worker);
    reg.register_task("ps_finish", ps_finish);
    reg.register_task("pd_main", pd_main);
    reg.register_task("pd_never", pd_never);
    reg.register_program(
        "partition-sum",
        "ps_main",
        "scale two partitions of a block in place, then sum the reunited parent",
    );
    reg.register_program(
        "partition-deadlock",
        "pd_main",
        "wire a block and its own partition into one task (fails with partition-deadlock)",
    );
}
