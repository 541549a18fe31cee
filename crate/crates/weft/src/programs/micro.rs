//! Small single-purpose programs exercising one runtime mechanism each.
//!
//! * `launch-task` — the deferred-identifier round trip in its smallest
//!   form: a remote create answered by a resolution, with a dependence
//!   parked against the unresolved id in between.
//! * `lid-pair` — one message naming two unresolved local ids at once.
//! * `map-stress` — eight tasks race sixteen lookups each against one
//!   labeled map; every element's creator must run exactly once and all
//!   tasks must agree on the resolved ids.
//! * `ew-pair` — two exclusive-write acquires on one block serialize.
//! * `stall` — a task whose slot is never satisfied; the run ends in
//!   deadlock detection instead of hanging.
//! * `shutdown-only` — the smallest complete run.

use crate::ctx::{CreatorCtx, TaskCtx};
use crate::datablock::DepRecord;
use crate::error::RuntimeError;
use crate::harness::Registry;
use crate::ident::Identifier;
use crate::message::AcquireMode;

fn launch_main(
    ctx: &mut TaskCtx<'_>,
    _params: &[u64],
    _deps: &[DepRecord],
) -> Result<Identifier, RuntimeError> {
    let template = ctx.template_create("launch_worker", 0, 1)?;
    let child = ctx.edt_create(template, vec![], None)?;
    // In deferred mode `child` is still a local id here; this dependence
    // waits in the deferral arena until the resolution comes back.
    ctx.add_dependence(Identifier::Null, child, 0, AcquireMode::Default)?;
    Ok(Identifier::Null)
}

fn launch_worker(
    ctx: &mut TaskCtx<'_>,
    _params: &[u64],
    _deps: &[DepRecord],
) -> Result<Identifier, RuntimeError> {
    ctx.report("ran", 1);
    ctx.shutdown();
    Ok(Identifier::Null)
}

fn lid_pair_main(
    ctx: &mut TaskCtx<'_>,
    _params: &[u64],
    _deps: &[DepRecord],
) -> Result<Identifier, RuntimeError> {
    let event = ctx.event_create()?;
    let template = ctx.template_create("lid_pair_worker", 0, 1)?;
    let task = ctx.edt_create(template, vec![], None)?;
    // With more than one node this names two unresolved ids in a single
    // message, which must stay parked until both have resolved.
    ctx.add_dependence(event, task, 0, AcquireMode::Default)?;
    ctx.event_satisfy(event, Identifier::Null)?;
    Ok(Identifier::Null)
}

fn lid_pair_worker(
    ctx: &mut TaskCtx<'_>,
    _params: &[u64],
    _deps: &[DepRecord],
) -> Result<Identifier, RuntimeError> {
    ctx.report("ran", 1);
    ctx.shutdown();
    Ok(Identifier::Null)
}

const STRESS_ELEMENTS: u64 = 16;
const STRESS_PROBERS: u64 = 8;

fn stress_main(
    ctx: &mut TaskCtx<'_>,
    _params: &[u64],
    _deps: &[DepRecord],
) -> Result<Identifier, RuntimeError> {
    let map = ctx.map_create(STRESS_ELEMENTS, "stress_creator", vec![], vec![])?;
    let (db, view) = ctx.db_create(16)?;
    view.write_id(0, ctx.get_guid(map)?)?;
    ctx.db_release(db)?;

    let prober = ctx.template_create("stress_prober", 1, 1)?;
    let finisher = ctx.template_create("stress_finish", 0, 1 + STRESS_PROBERS as u32)?;
    let finish = ctx.edt_create(finisher, vec![], None)?;
    ctx.add_dependence(db, finish, 0, AcquireMode::Ro)?;
    for i in 0..STRESS_PROBERS {
        let (p, done) = ctx.edt_create_with_event(prober, vec![i], None)?;
        ctx.add_dependence(db, p, 0, AcquireMode::Ro)?;
        ctx.add_dependence(done, finish, 1 + i as u32, AcquireMode::Default)?;
    }
    Ok(Identifier::Null)
}

fn stress_creator(
    ctx: &mut CreatorCtx<'_>,
    bound: &mut Identifier,
    _index: u64,
    _params: &[u64],
    _guids: &[Identifier],
) -> Result<(), RuntimeError> {
    ctx.event_create_mapped(bound)
}

fn stress_prober(
    ctx: &mut TaskCtx<'_>,
    params: &[u64],
    deps: &[DepRecord],
) -> Result<Identifier, RuntimeError> {
    let view = deps[0].view.as_ref().expect("map-id block is acquired");
    let map = view.read_id(0)?;
    let mut seen = Vec::new();
    for index in 0..STRESS_ELEMENTS {
        let id = ctx.map_get(map, index)?;
        seen.push(ctx.get_guid(id)?.to_string());
    }
    // Every prober must report the same id list, no matter which of them
    // triggered each element's creator.
    ctx.report(&format!("prober{}", params[0]), seen.join("+"));
    Ok(Identifier::Null)
}

fn stress_finish(
    ctx: &mut TaskCtx<'_>,
    _params: &[u64],
    deps: &[DepRecord],
) -> Result<Identifier, RuntimeError> {
    let view = deps[0].view.as_ref().expect("map-id block is acquired");
    let map = view.read_id(0)?;
    ctx.destroy(map)?;
    ctx.destroy(deps[0].id)?;
    ctx.shutdown();
    Ok(Identifier::Null)
}

fn ew_main(
    ctx: &mut TaskCtx<'_>,
    _params: &[u64],
    _deps: &[DepRecord],
) -> Result<Identifier, RuntimeError> {
    let (db, view) = ctx.db_create(4)?;
    view.set_u32(0, 0)?;
    ctx.db_release(db)?;
    let bump = ctx.template_create("ew_bump", 0, 1)?;
    let finisher = ctx.template_create("ew_finish", 0, 3)?;
    let (b1, e1) = ctx.edt_create_with_event(bump, vec![], None)?;
    let (b2, e2) = ctx.edt_create_with_event(bump, vec![], None)?;
    let finish = ctx.edt_create(finisher, vec![], None)?;
    ctx.add_dependence(db, b1, 0, AcquireMode::Ew)?;
    ctx.add_dependence(db, b2, 0, AcquireMode::Ew)?;
    ctx.add_dependence(e1, finish, 0, AcquireMode::Default)?;
    ctx.add_dependence(e2, finish, 1, AcquireMode::Default)?;
    ctx.add_dependence(db, finish, 2, AcquireMode::Ro)?;
    Ok(Identifier::Null)
}

fn ew_bump(
    _ctx: &mut TaskCtx<'_>,
    _params: &[u64],
    deps: &[DepRecord],
) -> Result<Identifier, RuntimeError> {
    let view = deps[0].view.as_ref().expect("counter block is acquired");
    // Exclusive write: each bump sees the other's increment or none, never
    // a torn in-between.
    view.set_u32(0, view.get_u32(0)? + 1)?;
    Ok(Identifier::Null)
}

fn ew_finish(
    ctx: &mut TaskCtx<'_>,
    _params: &[u64],
    deps: &[DepRecord],
) -> Result<Identifier, RuntimeError> {
    let view = deps[2].view.as_ref().expect("counter block is acquired");
    ctx.report("count", view.get_u32(0)?);
    ctx.destroy(deps[2].id)?;
    ctx.shutdown();
    Ok(Identifier::Null)
}

fn stall_main(
    ctx: &mut TaskCtx<'_>,
    _params: &[u64],
    _deps: &[DepRecord],
) -> Result<Identifier, RuntimeError> {
    let template = ctx.template_create("stall_never", 0, 1)?;
    // The single slot is never wired, so this task can never run and the
    // run must end in deadlock detection.
    ctx.edt_create(template, vec![], None)?;
    Ok(Identifier::Null)
}

fn stall_never(
    _ctx: &mut TaskCtx<'_>,
    _params: &[u64],
    _deps: &[DepRecord],
) -> Result<Identifier, RuntimeError> {
    Ok(Identifier::Null)
}

fn shutdown_main(
    ctx: &mut TaskCtx<'_>,
    _params: &[u64],
    _deps: &[DepRecord],
) -> Result<Identifier, RuntimeError> {
    ctx.report("ok", 1);
    ctx.shutdown();
    Ok(Identifier::Null)
}

pub(super) fn register(reg: &mut Registry) {
    reg.register_task("launch_main", launch_main);
    reg.register_task("launch_worker", launch_worker);
    reg.register_task("lid_pair_main", lid_pair_main);
    reg.register_task("lid_pair_worker", lid_pair_worker);
    reg.register_task("stress_main", stress_main);
    reg.register_task("stress_prober", stress_prober);
    reg.register_task("stress_finish", stress_finish);
    reg.register_creator("stress_creator", stress_creator);
    reg.register_task("ew_main", ew_main);
    reg.register_task("ew_bump", ew_bump);
    reg.register_task("ew_finish", ew_finish);
    reg.register_task("stall_main", stall_main);
    reg.register_task("stall_never", stall_never);
    reg.register_task("shutdown_main", shutdown_main);
    reg.register_program(
        "launch-task",
        "launch_main",
        "smallest deferred-identifier round trip: remote create, parked dependence, resolution",
    );
    reg.register_program(
        "lid-pair",
        "lid_pair_main",
        "one message naming two unresolved local ids",
    );
    reg.register_program(
        "map-stress",
        "stress_main",
        "eight tasks race sixteen labeled-map lookups; each creator runs once",
    );
    reg.register_program(
        "ew-pair",
        "ew_main",
        "two exclusive-write acquires on one block serialize",
    );
    reg.register_program(
        "stall",
        "stall_main",
        "a never-satisfied task, ending in deadlock detection",
    );
    reg.register_program("shutdown-only", "shutdown_main", "the smallest complete run");
}
