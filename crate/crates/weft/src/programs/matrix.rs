//! Wavefront over a width x height grid of tasks, driven by a labeled map.
//!
//! The main task creates one shared data block, a work template, and a map
//! whose creator instantiates the work task for a grid cell on first lookup.
//! Cell `(x, y)` depends on the shared block plus completion signals from its
//! left and upper neighbours; when a cell finishes it looks up (and thereby
//! creates, if needed) its right and lower neighbours and satisfies their
//! pending slots. The bottom-right cell tears everything down and shuts the
//! run down, so exactly `width * height` work tasks execute.

use crate::ctx::{CreatorCtx, TaskCtx};
use crate::datablock::DepRecord;
use crate::error::RuntimeError;
use crate::harness::Registry;
use crate::ident::Identifier;
use crate::message::AcquireMode;

const WIDTH: u64 = 3;
const HEIGHT: u64 = 3;

/// Shared-block layout: map id, template id, then the grid dimensions.
const OFF_MAP: usize = 0;
const OFF_TEMPLATE: usize = 16;
const OFF_WIDTH: usize = 32;
const OFF_HEIGHT: usize = 40;

fn matrix_main(
    ctx: &mut TaskCtx<'_>,
    _params: &[u64],
    _deps: &[DepRecord],
) -> Result<Identifier, RuntimeError> {
    let (db, view) = ctx.db_create(48)?;
    let template = ctx.template_create("matrix_work", 2, 3)?;
    let map = ctx.map_create(
        WIDTH * HEIGHT,
        "matrix_cell_creator",
        vec![WIDTH, HEIGHT],
        vec![db, template],
    )?;

    // Work tasks read these ids out of the block, so they must be written
    // as resolved global ids.
    let map_gid = ctx.get_guid(map)?;
    let template_gid = ctx.get_guid(template)?;
    view.write_id(OFF_MAP, map_gid)?;
    view.write_id(OFF_TEMPLATE, template_gid)?;
    view.write_u64(OFF_WIDTH, WIDTH)?;
    view.write_u64(OFF_HEIGHT, HEIGHT)?;
    ctx.db_release(db)?;

    // Looking up the first cell sets the whole wavefront in motion.
    ctx.map_get(map, 0)?;
    Ok(Identifier::Null)
}

fn matrix_cell_creator(
    ctx: &mut CreatorCtx<'_>,
    bound: &mut Identifier,
    index: u64,
    params: &[u64],
    guids: &[Identifier],
) -> Result<(), RuntimeError> {
    let width = params[0];
    let x = index % width;
    let y = index / width;
    // Slot 0: shared block. Slots 1 and 2: left and upper neighbour signals;
    // border cells have no such neighbour, so those slots are pre-satisfied.
    let left = if x == 0 { Identifier::Null } else { Identifier::Uninitialized };
    let up = if y == 0 { Identifier::Null } else { Identifier::Uninitialized };
    ctx.edt_create_mapped(bound, guids[1], vec![x, y], Some(vec![guids[0], left, up]))
}

fn matrix_work(
    ctx: &mut TaskCtx<'_>,
    params: &[u64],
    deps: &[DepRecord],
) -> Result<Identifier, RuntimeError> {
    let (x, y) = (params[0], params[1]);
    let view = deps[0].view.as_ref().expect("shared block is acquired");
    let map = view.read_id(OFF_MAP)?;
    let template = view.read_id(OFF_TEMPLATE)?;
    let width = view.read_u64(OFF_WIDTH)?;
    let height = view.read_u64(OFF_HEIGHT)?;

    if x + 1 == width && y + 1 == height {
        // Bottom-right corner: the wavefront is complete.
        ctx.report("cells", width * height);
        ctx.destroy(template)?;
        ctx.destroy(map)?;
        ctx.destroy(deps[0].id)?;
        ctx.shutdown();
        return Ok(Identifier::Null);
    }
    if x + 1 < width {
        let right = ctx.map_get(map, y * width + (x + 1))?;
        ctx.add_dependence(Identifier::Null, right, 1, AcquireMode::Default)?;
    }
    if y + 1 < height {
        let below = ctx.map_get(map, (y + 1) * width + x)?;
        ctx.add_dependence(Identifier::Null, below, 2, AcquireMode::Default)?;
    }
    Ok(Identifier::Null)
}

pub(super) fn register(reg: &mut Registry) {
    reg.register_task("matrix_main", matrix_main);
    reg.register_task("matrix_work", matrix_work);
    reg.register_creator("matrix_cell_creator", matrix_cell_creator);
    reg.register_program(
        "matrix",
        "matrix_main",
        "wavefront grid of tasks created on demand through a labeled map",
    );
}
