//! Programs that stream a host file through file-mapped chunk blocks.
//!
//! `file-double` doubles every 32-bit little-endian value in the fixture
//! file in place: a check task opens the file through its descriptor block,
//! maps the two halves as chunk blocks, and hands each half to a worker
//! under an exclusive-write acquire; the doubled bytes reach the host file
//! when the chunk blocks are destroyed.
//!
//! `file-double-ro` maps the same halves read-only and only sums them, so
//! the host file must come out bit-identical. `file-chunk-overlap` asks for
//! two chunks covering the same bytes, which the runtime rejects.
//! `file-open-missing` opens a path that does not exist and shows the
//! failure arriving as a flagged descriptor instead of a run error.

use crate::ctx::TaskCtx;
use crate::datablock::DepRecord;
use crate::error::RuntimeError;
use crate::harness::Registry;
use crate::ident::Identifier;
use crate::message::{AcquireMode, FileMode};

/// Descriptor-block layout: file id at 0, size at open at 16.
const OFF_FILE: usize = 0;
const OFF_SIZE: usize = 16;

fn fixture(ctx: &mut TaskCtx<'_>) -> Result<String, RuntimeError> {
    ctx.fixture_path()
        .ok_or_else(|| RuntimeError::Io("this program needs --fixture <path>".into()))
}

fn open_and_check(
    ctx: &mut TaskCtx<'_>,
    mode: FileMode,
    check_template: &str,
) -> Result<Identifier, RuntimeError> {
    let path = fixture(ctx)?;
    let (_file, desc) = ctx.file_open(&path, mode, true)?;
    let template = ctx.template_create(check_template, 0, 1)?;
    let desc = desc.expect("descriptor requested");
    ctx.edt_create(template, vec![], Some(vec![desc]))?;
    Ok(Identifier::Null)
}

fn fd_main(
    ctx: &mut TaskCtx<'_>,
    _params: &[u64],
    _deps: &[DepRecord],
) -> Result<Identifier, RuntimeError> {
    open_and_check(ctx, FileMode::ReadWrite, "fd_check")
}

/// Reads the descriptor, maps the file as two half-size chunks, and wires
/// each chunk to a doubling worker. A finish task waits on both workers'
/// output events and shuts the run down.
fn fd_check(
    ctx: &mut TaskCtx<'_>,
    _params: &[u64],
    deps: &[DepRecord],
) -> Result<Identifier, RuntimeError> {
    let view = deps[0].view.as_ref().expect("descriptor is acquired");
    let file = view.read_id(OFF_FILE)?;
    let size = view.read_u64(OFF_SIZE)?;
    let half = size / 2;
    let c1 = ctx.file_get_chunk(file, 0, half)?;
    let c2 = ctx.file_get_chunk(file, half, size - half)?;
    ctx.file_release(file)?;
    ctx.destroy(deps[0].id)?;

    let worker = ctx.template_create("fd_worker", 1, 1)?;
    let (w1, e1) = ctx.edt_create_with_event(worker, vec![half / 4], None)?;
    let (w2, e2) = ctx.edt_create_with_event(worker, vec![(size - half) / 4], None)?;
    ctx.add_dependence(c1, w1, 0, AcquireMode::Ew)?;
    ctx.add_dependence(c2, w2, 0, AcquireMode::Ew)?;
    let finish = ctx.template_create("fd_finish", 0, 2)?;
    ctx.edt_create(finish, vec![], Some(vec![e1, e2]))?;
    Ok(Identifier::Null)
}

fn fd_worker(
    ctx: &mut TaskCtx<'_>,
    params: &[u64],
    deps: &[DepRecord],
) -> Result<Identifier, RuntimeError> {
    let view = deps[0].view.as_ref().expect("chunk is acquired");
    for i in 0..params[0] as usize {
        view.set_u32(i, view.get_u32(i)?.wrapping_mul(2))?;
    }
    // Destroying the chunk block writes the doubled bytes back to the file.
    ctx.destroy(deps[0].id)?;
    Ok(Identifier::Null)
}

fn fd_finish(
    ctx: &mut TaskCtx<'_>,
    _params: &[u64],
    _deps: &[DepRecord],
) -> Result<Identifier, RuntimeError> {
    ctx.report("chunks", 2);
    ctx.shutdown();
    Ok(Identifier::Null)
}

fn fdro_main(
    ctx: &mut TaskCtx<'_>,
    _params: &[u64],
    _deps: &[DepRecord],
) -> Result<Identifier, RuntimeError> {
    open_and_check(ctx, FileMode::ReadOnly, "fdro_check")
}

fn fdro_check(
    ctx: &mut TaskCtx<'_>,
    _params: &[u64],
    deps: &[DepRecord],
) -> Result<Identifier, RuntimeError> {
    let view = deps[0].view.as_ref().expect("descriptor is acquired");
    let file = view.read_id(OFF_FILE)?;
    let size = view.read_u64(OFF_SIZE)?;
    let half = size / 2;
    let c1 = ctx.file_get_chunk(file, 0, half)?;
    let c2 = ctx.file_get_chunk(file, half, size - half)?;
    ctx.file_release(file)?;
    ctx.destroy(deps[0].id)?;

    let worker = ctx.template_create("fdro_worker", 2, 1)?;
    let (w1, e1) = ctx.edt_create_with_event(worker, vec![half / 4, 0], None)?;
    let (w2, e2) = ctx.edt_create_with_event(worker, vec![(size - half) / 4, 1], None)?;
    ctx.add_dependence(c1, w1, 0, AcquireMode::Ro)?;
    ctx.add_dependence(c2, w2, 0, AcquireMode::Ro)?;
    let finish = ctx.template_create("fd_finish", 0, 2)?;
    ctx.edt_create(finish, vec![], Some(vec![e1, e2]))?;
    Ok(Identifier::Null)
}

fn fdro_worker(
    ctx: &mut TaskCtx<'_>,
    params: &[u64],
    deps: &[DepRecord],
) -> Result<Identifier, RuntimeError> {
    let view = deps[0].view.as_ref().expect("chunk is acquired");
    let mut sum: u64 = 0;
    for i in 0..params[0] as usize {
        sum += view.get_u32(i)? as u64;
    }
    ctx.report(&format!("part{}", params[1]), sum);
    ctx.destroy(deps[0].id)?;
    Ok(Identifier::Null)
}

fn fdov_main(
    ctx: &mut TaskCtx<'_>,
    _params: &[u64],
    _deps: &[DepRecord],
) -> Result<Identifier, RuntimeError> {
    let path = fixture(ctx)?;
    let (file, _) = ctx.file_open(&path, FileMode::ReadOnly, false)?;
    ctx.file_get_chunk(file, 0, 8)?;
    // Bytes 4..8 are already covered by the first chunk; the runtime
    // reports the overlap as the run's error.
    ctx.file_get_chunk(file, 4, 8)?;
    ctx.shutdown();
    Ok(Identifier::Null)
}

fn fdmiss_main(
    ctx: &mut TaskCtx<'_>,
    _params: &[u64],
    _deps: &[DepRecord],
) -> Result<Identifier, RuntimeError> {
    let (_file, desc) = ctx.file_open(
        "/nonexistent/weft-missing-fixture.bin",
        FileMode::ReadWrite,
        true,
    )?;
    let template = ctx.template_create("fdmiss_check", 0, 1)?;
    ctx.edt_create(template, vec![], Some(vec![desc.expect("descriptor requested")]))?;
    Ok(Identifier::Null)
}

fn fdmiss_check(
    ctx: &mut TaskCtx<'_>,
    _params: &[u64],
    deps: &[DepRecord],
) -> Result<Identifier, RuntimeError> {
    let view = deps[0].view.as_ref().expect("descriptor is acquired");
    let file = view.read_id(OFF_FILE)?;
    ctx.report("open_failed", u64::from(deps[0].failed));
    ctx.report("size_at_open", view.read_u64(OFF_SIZE)?);
    ctx.file_release(file)?;
    ctx.destroy(deps[0].id)?;
    ctx.shutdown();
    Ok(Identifier::Null)
}

pub(super) fn register(reg: &mut Registry) {
    reg.register_task("fd_main", fd_main);
    reg.register_task("fd_check", fd_check);
    reg.register_task("fd_worker", fd_worker);
    reg.register_task("fd_finish", fd_finish);
    reg.register_task("fdro_main", fdro_main);
    reg.register_task("fdro_check", fdro_check);
    reg.register_task("fdro_worker", fdro_worker);
    reg.register_task("fdov_main", fdov_main);
    reg.register_task("fdmiss_main", fdmiss_main);
    reg.register_task("fdmiss_check", fdmiss_check);
    reg.register_program(
        "file-double",
        "fd_main",
        "double every 32-bit value of the fixture file through exclusive-write chunk blocks",
    );
    reg.register_program(
        "file-double-ro",
        "fdro_main",
        "sum the fixture file through read-only chunk blocks, leaving it untouched",
    );
    reg.register_program(
        "file-chunk-overlap",
        "fdov_main",
        "request two overlapping chunks of the fixture file (fails with chunk-overlap)",
    );
    reg.register_program(
        "file-open-missing",
        "fdmiss_main",
        "open a missing path and observe the failure through the descriptor flag",
    );
}
