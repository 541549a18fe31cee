//! The API handed to running task code and to map creators.
//!
//! Every method is called from inside a task (or creator) executing on one
//! virtual node, and each operation that targets another node travels as a
//! message. What a creation call returns depends on the run mode:
//!
//! * **deferred** — a remote creation returns a local id immediately; the
//!   global id materializes later, and any call that names the local id in
//!   the meantime is parked by the runtime until the resolution arrives.
//! * **eager** — the same messages are sent, but the call pumps the
//!   delivery loop until the resolution is back and returns a global id.
//!
//! Either way a creation homed on the calling node (and naming no pending
//! local ids) happens synchronously, with no messages at all.
//!
//! Local ids are private to one execution: passing another task's local id
//! into any method is an ownership violation. [`TaskCtx::get_guid`] is the
//! explicit bridge from a local id to its global id — it blocks — and is
//! needed before writing an id into a data block, since local ids have no
//! wire encoding.

use crate::datablock::ByteView;
use crate::error::RuntimeError;
use crate::harness::RunMode;
use crate::ident::{ExecId, GlobalId, Identifier, LocalId, NodeId, ObjectKind};
use crate::message::{AcquireMode, CopyKind, CreateSpec, FileMode, FileOp, Payload, ReplyTo};
use crate::state::{MapSlot, Runtime};

/// Execution context of a running task.
pub struct TaskCtx<'a> {
    rt: &'a mut Runtime,
    node: NodeId,
    task: GlobalId,
    exec: ExecId,
    lid_seq: u64,
}

impl<'a> TaskCtx<'a> {
    pub(crate) fn new(rt: &'a mut Runtime, node: NodeId, task: GlobalId, exec: ExecId) -> Self {
        TaskCtx { rt, node, task, exec, lid_seq: 0 }
    }

    /// The virtual node this task executes on.
    pub fn node(&self) -> u32 {
        self.node.0
    }

    /// Host file path handed to the run, for programs that operate on one.
    pub fn fixture_path(&self) -> Option<String> {
        self.rt
            .cfg
            .fixture
            .as_ref()
            .map(|p| p.to_string_lossy().into_owned())
    }

    /// Ownership gate plus cheap resolution: a caller-owned local id that
    /// has already resolved is upgraded to its global id on the spot.
    fn norm(&mut self, id: Identifier) -> Result<Identifier, RuntimeError> {
        match id {
            Identifier::Local(l) => {
                if l.owner != self.exec {
                    return Err(RuntimeError::LidOwnershipViolation);
                }
                Ok(self.rt.lid_resolution(l).map(Identifier::Global).unwrap_or(id))
            }
            other => Ok(other),
        }
    }

    fn fresh_lid(&mut self) -> LocalId {
        self.rt.alloc_lid(self.exec, &mut self.lid_seq)
    }

    /// Central creation path. `home` is the new object's home node when the
    /// caller chooses it; `None` lets the payload route itself (used when
    /// the home depends on an id that may still be deferred).
    fn create(
        &mut self,
        home: Option<NodeId>,
        spec: CreateSpec,
        count: usize,
    ) -> Result<Vec<Identifier>, RuntimeError> {
        let names_pending_lids = {
            let mut probe = Payload::CreateObject { spec: spec.clone(), replies: Vec::new() };
            !probe.unresolved_lids(&|_| false).is_empty()
        };
        if home == Some(self.node) && !names_pending_lids {
            let gids = self.rt.create_locally(self.node, spec)?;
            return Ok(gids.into_iter().map(Identifier::Global).collect());
        }
        let lids: Vec<LocalId> = (0..count).map(|_| self.fresh_lid()).collect();
        let replies = lids
            .iter()
            .map(|&lid| ReplyTo::Lid { lid, origin: self.node })
            .collect();
        self.rt
            .submit(self.node, home, Payload::CreateObject { spec, replies })?;
        self.finish_ids(lids)
    }

    /// Deferred mode hands back the local ids; eager mode pumps until each
    /// resolution arrives.
    fn finish_ids(&mut self, lids: Vec<LocalId>) -> Result<Vec<Identifier>, RuntimeError> {
        if self.rt.cfg.mode == RunMode::Eager {
            lids.into_iter()
                .map(|l| self.rt.wait_for_lid(l).map(Identifier::Global))
                .collect()
        } else {
            Ok(lids.into_iter().map(Identifier::Local).collect())
        }
    }

    /// Blocks until `id` is global. Needed before an id can be serialized
    /// into a data block.
    pub fn get_guid(&mut self, id: Identifier) -> Result<Identifier, RuntimeError> {
        match self.norm(id)? {
            Identifier::Local(l) => self.rt.wait_for_lid(l).map(Identifier::Global),
            other => Ok(other),
        }
    }

    /// Kind of an already-resolved identifier.
    pub fn id_type(&mut self, id: Identifier) -> Result<ObjectKind, RuntimeError> {
        match self.norm(id)? {
            Identifier::Global(g) => Ok(g.kind),
            _ => Err(RuntimeError::InvalidId),
        }
    }

    pub fn template_create(
        &mut self,
        function: &str,
        paramc: u32,
        depc: u32,
    ) -> Result<Identifier, RuntimeError> {
        // Fail on unknown names at the call site, not at a later delivery.
        self.rt.registry.task_fn(function)?;
        let home = self.rt.placement_home(self.node);
        let spec = CreateSpec::Template { name: function.to_string(), paramc, depc };
        Ok(self.create(Some(home), spec, 1)?[0])
    }

    /// Creates a task from a template. Slots listed as `Uninitialized` (or
    /// the whole list when `deps` is `None`) must be wired later with
    /// [`TaskCtx::add_dependence`].
    pub fn edt_create(
        &mut self,
        template: Identifier,
        params: Vec<u64>,
        deps: Option<Vec<Identifier>>,
    ) -> Result<Identifier, RuntimeError> {
        let (ids, _) = self.edt_create_inner(template, params, deps, false)?;
        Ok(ids)
    }

    /// Like [`TaskCtx::edt_create`], additionally returning a once-event
    /// that fires with the task's returned identifier when it finishes.
    pub fn edt_create_with_event(
        &mut self,
        template: Identifier,
        params: Vec<u64>,
        deps: Option<Vec<Identifier>>,
    ) -> Result<(Identifier, Identifier), RuntimeError> {
        let (task, ev) = self.edt_create_inner(template, params, deps, true)?;
        Ok((task, ev.expect("event requested")))
    }

    fn edt_create_inner(
        &mut self,
        template: Identifier,
        params: Vec<u64>,
        deps: Option<Vec<Identifier>>,
        output_event: bool,
    ) -> Result<(Identifier, Option<Identifier>), RuntimeError> {
        let template = self.norm(template)?;
        let deps = match deps {
            None => None,
            Some(d) => Some(
                d.into_iter()
                    .map(|i| self.norm(i))
                    .collect::<Result<Vec<_>, _>>()?,
            ),
        };
        let home = self.rt.placement_home(self.node);
        let spec = CreateSpec::Edt { template, params, deps, output_event };
        let count = if output_event { 2 } else { 1 };
        let ids = self.create(Some(home), spec, count)?;
        Ok((ids[0], ids.get(1).copied()))
    }

    pub fn event_create(&mut self) -> Result<Identifier, RuntimeError> {
        let home = self.rt.placement_home(self.node);
        Ok(self.create(Some(home), CreateSpec::Event, 1)?[0])
    }

    pub fn event_satisfy(
        &mut self,
        event: Identifier,
        payload: Identifier,
    ) -> Result<(), RuntimeError> {
        let event = self.norm(event)?;
        let payload = self.norm(payload)?;
        self.rt.submit(
            self.node,
            None,
            Payload::Satisfy { dest: event, slot: None, payload, mode: None, grant: false },
        )
    }

    /// Wires `source` (an event, a data block, or `Null`) into slot `slot`
    /// of `dest` (a task, or an event for chaining).
    pub fn add_dependence(
        &mut self,
        source: Identifier,
        dest: Identifier,
        slot: u32,
        mode: AcquireMode,
    ) -> Result<(), RuntimeError> {
        let source = self.norm(source)?;
        let dest = self.norm(dest)?;
        self.rt
            .submit(self.node, None, Payload::AddDependence { source, dest, slot, mode })
    }

    /// Creates a data block and returns a writable creator view. Blocks
    /// until the id is global in every mode: there is no view without
    /// storage. The view stays valid until released with
    /// [`TaskCtx::db_release`] or the task returns.
    pub fn db_create(&mut self, size: u64) -> Result<(Identifier, ByteView), RuntimeError> {
        let home = self.rt.placement_home(self.node);
        let spec = CreateSpec::Block { size, no_acquire: false, creator: Some(self.task) };
        let id = self.create(Some(home), spec, 1)?[0];
        let g = match id {
            Identifier::Global(g) => g,
            Identifier::Local(l) => self.rt.wait_for_lid(l)?,
            _ => unreachable!("creation returns an id"),
        };
        self.rt.task_mut(self.task)?.granted.push((g, AcquireMode::Rw));
        let view = self.rt.make_view(g, true)?;
        Ok((Identifier::Global(g), view))
    }

    /// Creates a data block without acquiring it; storage allocation may be
    /// deferred. The usual deferred-mode rules apply: a remote creation
    /// returns a local id.
    pub fn db_create_no_acquire(&mut self, size: u64) -> Result<Identifier, RuntimeError> {
        let home = self.rt.placement_home(self.node);
        let spec = CreateSpec::Block { size, no_acquire: true, creator: None };
        Ok(self.create(Some(home), spec, 1)?[0])
    }

    /// Gives up a block this task holds, whether from a creator view or a
    /// dependence grant. The matching view must not be used afterwards.
    pub fn db_release(&mut self, block: Identifier) -> Result<(), RuntimeError> {
        let block = self.norm(block)?;
        if let Identifier::Global(g) = block {
            let t = self.rt.task_mut(self.task)?;
            if let Some(i) = t.granted.iter().position(|(b, _)| *b == g) {
                t.granted.remove(i);
            }
        }
        self.rt.submit(
            self.node,
            None,
            Payload::ReleaseNotice { block, holder: self.task },
        )
    }

    /// Splits `parent` into one child block per `(offset, size)`
    /// descriptor. Children alias the parent's bytes; the parent defers
    /// acquires until every child is destroyed. Ranges of a non-static
    /// batch stay reserved forever; a static batch's ranges free once the
    /// whole batch is gone.
    pub fn db_partition(
        &mut self,
        parent: Identifier,
        descs: &[(u64, u64)],
        static_partitioning: bool,
    ) -> Result<Vec<Identifier>, RuntimeError> {
        let parent = self.norm(parent)?;
        let home = match parent {
            Identifier::Global(g) => Some(g.node),
            Identifier::Local(_) => None,
            _ => return Err(RuntimeError::InvalidId),
        };
        let spec =
            CreateSpec::Partitions { parent, descs: descs.to_vec(), static_partitioning };
        self.create(home, spec, descs.len())
    }

    /// Bulk copy between blocks. Returns a fresh once-event, homed on the
    /// calling node, that fires with the destination block's id when the
    /// copy has been performed on the destination's home node.
    pub fn db_copy(
        &mut self,
        dest: Identifier,
        dest_offset: u64,
        source: Identifier,
        source_offset: u64,
        size: u64,
        kind: CopyKind,
    ) -> Result<Identifier, RuntimeError> {
        let dest = self.norm(dest)?;
        let source = self.norm(source)?;
        let ev = self.rt.create_locally(self.node, CreateSpec::Event)?[0];
        self.rt.submit(
            self.node,
            None,
            Payload::CopyData {
                dest,
                dest_offset,
                source,
                source_offset,
                size,
                kind,
                completion: Identifier::Global(ev),
            },
        )?;
        Ok(Identifier::Global(ev))
    }

    pub fn map_create(
        &mut self,
        size: u64,
        creator: &str,
        params: Vec<u64>,
        guids: Vec<Identifier>,
    ) -> Result<Identifier, RuntimeError> {
        self.rt.registry.creator_fn(creator)?;
        let guids = guids
            .into_iter()
            .map(|g| self.norm(g))
            .collect::<Result<Vec<_>, _>>()?;
        let home = self.rt.placement_home(self.node);
        let spec =
            CreateSpec::Map { size, creator: creator.to_string(), params, guids };
        Ok(self.create(Some(home), spec, 1)?[0])
    }

    /// Get-or-create of a map element. When the map is homed here and the
    /// element already exists the global id comes back without a message;
    /// every other case goes through the map's home node.
    pub fn map_get(&mut self, map: Identifier, index: u64) -> Result<Identifier, RuntimeError> {
        let map = self.norm(map)?;
        if let Identifier::Global(mg) = map {
            if mg.kind != ObjectKind::Map {
                return Err(RuntimeError::InvalidId);
            }
            if mg.node == self.node {
                let m = self.rt.map_mut(mg)?;
                if index >= m.slots.len() as u64 {
                    return Err(RuntimeError::BadIndex);
                }
                if let MapSlot::Created(g) = m.slots[index as usize] {
                    return Ok(Identifier::Global(g));
                }
            }
        }
        Ok(self.create(None, CreateSpec::MapElement { map, index }, 1)?[0])
    }

    /// Destroys a template, event, map, or data block. Blocks tear down
    /// lazily: destruction waits until every grant, queued acquire, live
    /// partition, and outstanding copy child is gone.
    pub fn destroy(&mut self, id: Identifier) -> Result<(), RuntimeError> {
        let id = self.norm(id)?;
        self.rt.submit(self.node, None, Payload::DestroyObject { id })
    }

    /// Opens a host file. The operation is always asynchronous — the host
    /// `open(2)` happens on the file's home node — and a failed open is
    /// reported through the descriptor block, not as a run error.
    /// Returns the file id and, when asked for, the 24-byte descriptor
    /// block: the file id at offset 0 and the file size at offset 16.
    pub fn file_open(
        &mut self,
        path: &str,
        mode: FileMode,
        want_descriptor: bool,
    ) -> Result<(Identifier, Option<Identifier>), RuntimeError> {
        let home = self.rt.placement_home(self.node);
        let count = if want_descriptor { 2 } else { 1 };
        let lids: Vec<LocalId> = (0..count).map(|_| self.fresh_lid()).collect();
        let replies = lids
            .iter()
            .map(|&lid| ReplyTo::Lid { lid, origin: self.node })
            .collect();
        self.rt.submit(
            self.node,
            Some(home),
            Payload::FileOp(FileOp::Open {
                path: path.to_string(),
                mode,
                want_descriptor,
                replies,
            }),
        )?;
        let ids = self.finish_ids(lids)?;
        Ok((ids[0], ids.get(1).copied()))
    }

    /// Materializes `[offset, offset + size)` of the file as a data block.
    /// The range must not overlap any chunk ever taken from this file.
    /// On a writable file a range past the end grows the file immediately;
    /// on a read-only file it is an error.
    pub fn file_get_chunk(
        &mut self,
        file: Identifier,
        offset: u64,
        size: u64,
    ) -> Result<Identifier, RuntimeError> {
        let file = self.norm(file)?;
        let lid = self.fresh_lid();
        self.rt.submit(
            self.node,
            None,
            Payload::FileOp(FileOp::Chunk {
                file,
                offset,
                size,
                reply: Some(ReplyTo::Lid { lid, origin: self.node }),
            }),
        )?;
        Ok(self.finish_ids(vec![lid])?[0])
    }

    /// Ends the file handle: no further chunks may be taken, and the host
    /// file closes once every outstanding chunk block is destroyed.
    pub fn file_release(&mut self, file: Identifier) -> Result<(), RuntimeError> {
        let file = self.norm(file)?;
        self.rt
            .submit(self.node, None, Payload::FileOp(FileOp::Release { file }))
    }

    /// Records a `key=value` pair surfaced in the run summary.
    pub fn report(&mut self, key: &str, value: impl std::fmt::Display) {
        self.rt.report(key, value.to_string());
    }

    /// Requests termination. After the current task returns, the runtime
    /// stops dispatching tasks, drains in-flight messages, and the run
    /// ends.
    pub fn shutdown(&mut self) {
        self.rt.shutdown = true;
    }
}

/// Context of a map-element creator, running on the map's home node.
///
/// The creator must bind exactly one newly created object to the element
/// being created, through the `bound` out-parameter its own signature
/// receives.
pub struct CreatorCtx<'a> {
    rt: &'a mut Runtime,
    node: NodeId,
    map: GlobalId,
    index: u64,
    exec: ExecId,
    lid_seq: u64,
    bound_done: bool,
}

impl<'a> CreatorCtx<'a> {
    pub(crate) fn new(
        rt: &'a mut Runtime,
        node: NodeId,
        map: GlobalId,
        index: u64,
        exec: ExecId,
    ) -> Self {
        CreatorCtx { rt, node, map, index, exec, lid_seq: 0, bound_done: false }
    }

    pub(crate) fn bound_done(&self) -> bool {
        self.bound_done
    }

    /// The element index being created.
    pub fn index(&self) -> u64 {
        self.index
    }

    fn norm(&mut self, id: Identifier) -> Result<Identifier, RuntimeError> {
        match id {
            Identifier::Local(l) => {
                if l.owner != self.exec {
                    return Err(RuntimeError::LidOwnershipViolation);
                }
                Ok(self.rt.lid_resolution(l).map(Identifier::Global).unwrap_or(id))
            }
            other => Ok(other),
        }
    }

    /// Creates a task and binds it to the map element. Binding is the one
    /// creation the creator must perform; a second bound create is a
    /// contract violation.
    pub fn edt_create_mapped(
        &mut self,
        bound: &mut Identifier,
        template: Identifier,
        params: Vec<u64>,
        deps: Option<Vec<Identifier>>,
    ) -> Result<(), RuntimeError> {
        let template = self.norm(template)?;
        let deps = match deps {
            None => None,
            Some(d) => Some(
                d.into_iter()
                    .map(|i| self.norm(i))
                    .collect::<Result<Vec<_>, _>>()?,
            ),
        };
        self.bind_create(bound, CreateSpec::Edt { template, params, deps, output_event: false })
    }

    /// Creates a once-event and binds it to the map element.
    pub fn event_create_mapped(&mut self, bound: &mut Identifier) -> Result<(), RuntimeError> {
        self.bind_create(bound, CreateSpec::Event)
    }

    fn bind_create(
        &mut self,
        bound: &mut Identifier,
        spec: CreateSpec,
    ) -> Result<(), RuntimeError> {
        if self.bound_done {
            return Err(RuntimeError::CreatorContractViolation);
        }
        let home = self.rt.placement_home(self.node);
        if home == self.node {
            let gid = self.rt.create_locally(home, spec)?[0];
            *bound = Identifier::Global(gid);
            self.bound_done = true;
            return self.rt.handle_slot_bound(self.map, self.index, gid);
        }
        // Remote bind: the created node reports straight to the map slot,
        // and the creator's own local id rides along as a slot waiter so
        // anything the creator deferred against it is patched too.
        let lid = self.rt.alloc_lid(self.exec, &mut self.lid_seq);
        {
            let m = self.rt.map_mut(self.map)?;
            match &mut m.slots[self.index as usize] {
                MapSlot::Creating(w) => w.push(ReplyTo::Lid { lid, origin: self.node }),
                _ => unreachable!("creator runs while its element is in the creating state"),
            }
        }
        self.rt.submit(
            self.node,
            Some(home),
            Payload::CreateObject {
                spec,
                replies: vec![ReplyTo::MapSlot { map: self.map, index: self.index }],
            },
        )?;
        self.bound_done = true;
        *bound = if self.rt.cfg.mode == RunMode::Eager {
            Identifier::Global(self.rt.wait_for_lid(lid)?)
        } else {
            Identifier::Local(lid)
        };
        Ok(())
    }
}
