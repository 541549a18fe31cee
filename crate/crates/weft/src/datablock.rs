//! Data blocks: byte storage, mode-gated grants, and task views.
//!
//! A block's home node owns a strict-FIFO acquire queue. The head request
//! is granted when its mode is compatible with the outstanding grants
//! (read-only, const, and read-write grants coexist; exclusive-write
//! excludes everything) and no partition gating applies: a block with live
//! explicit partitions defers all acquires until the partitions are
//! destroyed, and a block with outstanding copy-partition children rejects
//! acquires outright. A stalled head stalls everything behind it, which is
//! what makes grant order per block deterministic.
//!
//! Storage may alias another block (explicit partitions, zero-copy
//! partition copies) or stay unallocated until first touch. Views resolve
//! alias chains once, at construction; see `cow_on_grant` for how aliased
//! copies are snapshotted before conflicting access can observe them.

use std::cell::RefCell;
use std::rc::Rc;

use crate::error::RuntimeError;
use crate::ident::{GlobalId, Identifier, ObjectKind};
use crate::message::{AcquireMode, Payload};
use crate::state::{AcqReq, BlockObj, Object, Runtime, SharedBytes, Slot, Storage};

/// Window onto a block's bytes handed to task code. Reads and writes are
/// bounds-checked against the window and writes require a writing mode.
#[derive(Debug, Clone)]
pub struct ByteView {
    bytes: SharedBytes,
    offset: usize,
    len: usize,
    writable: bool,
}

impl ByteView {
    pub(crate) fn new(bytes: SharedBytes, offset: usize, len: usize, writable: bool) -> ByteView {
        ByteView { bytes, offset, len, writable }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn writable(&self) -> bool {
        self.writable
    }

    fn check(&self, offset: usize, n: usize) -> Result<usize, RuntimeError> {
        if offset.checked_add(n).is_none_or(|end| end > self.len) {
            return Err(RuntimeError::BadRange);
        }
        Ok(self.offset + offset)
    }

    fn check_write(&self, offset: usize, n: usize) -> Result<usize, RuntimeError> {
        if !self.writable {
            return Err(RuntimeError::ReadOnlyView);
        }
        self.check(offset, n)
    }

    /// Reads the `index`-th 32-bit little-endian element.
    pub fn get_u32(&self, index: usize) -> Result<u32, RuntimeError> {
        let at = self.check(index * 4, 4)?;
        let b = self.bytes.borrow();
        Ok(u32::from_le_bytes(b[at..at + 4].try_into().unwrap()))
    }

    pub fn set_u32(&self, index: usize, value: u32) -> Result<(), RuntimeError> {
        let at = self.check_write(index * 4, 4)?;
        self.bytes.borrow_mut()[at..at + 4].copy_from_slice(&value.to_le_bytes());
        Ok(())
    }

    /// Reads a 64-bit little-endian value at a byte offset.
    pub fn read_u64(&self, offset: usize) -> Result<u64, RuntimeError> {
        let at = self.check(offset, 8)?;
        let b = self.bytes.borrow();
        Ok(u64::from_le_bytes(b[at..at + 8].try_into().unwrap()))
    }

    pub fn write_u64(&self, offset: usize, value: u64) -> Result<(), RuntimeError> {
        let at = self.check_write(offset, 8)?;
        self.bytes.borrow_mut()[at..at + 8].copy_from_slice(&value.to_le_bytes());
        Ok(())
    }

    /// Decodes a 16-byte identifier at a byte offset.
    pub fn read_id(&self, offset: usize) -> Result<Identifier, RuntimeError> {
        let at = self.check(offset, 16)?;
        let b = self.bytes.borrow();
        Identifier::decode(b[at..at + 16].try_into().unwrap())
    }

    /// Encodes an identifier into 16 bytes at a byte offset. Local ids do
    /// not serialize; resolve them first.
    pub fn write_id(&self, offset: usize, id: Identifier) -> Result<(), RuntimeError> {
        let at = self.check_write(offset, 16)?;
        let enc = id.encode()?;
        self.bytes.borrow_mut()[at..at + 16].copy_from_slice(&enc);
        Ok(())
    }

    /// Copies the window's bytes out.
    pub fn to_vec(&self) -> Vec<u8> {
        self.bytes.borrow()[self.offset..self.offset + self.len].to_vec()
    }
}

/// What a task sees on one dependence slot: the payload identifier, the
/// mode it was acquired under, a byte view for block payloads in viewing
/// modes, and a failure marker for descriptor blocks of failed opens.
#[derive(Debug, Clone)]
pub struct DepRecord {
    pub id: Identifier,
    pub mode: AcquireMode,
    pub view: Option<ByteView>,
    pub failed: bool,
}

/// True when a request in `mode` can run beside the existing grants.
fn compatible(grants: &[(GlobalId, AcquireMode)], mode: AcquireMode) -> bool {
    if mode == AcquireMode::Ew {
        return grants.is_empty();
    }
    !grants.iter().any(|(_, m)| *m == AcquireMode::Ew)
}

pub(crate) fn ranges_overlap(a_off: u64, a_len: u64, b_off: u64, b_len: u64) -> bool {
    a_off < b_off + b_len && b_off < a_off + a_len
}

enum Gate {
    Grant(AcqReq),
    Defer,
    Violation,
}

impl Runtime {
    /// Creates a block homed at `home`. Unless `no_acquire` is set the
    /// storage is allocated zeroed and `creator`, when given, immediately
    /// holds a read-write grant.
    pub(crate) fn create_block(
        &mut self,
        home: crate::ident::NodeId,
        size: u64,
        no_acquire: bool,
        creator: Option<GlobalId>,
    ) -> Result<GlobalId, RuntimeError> {
        if size == 0 {
            return Err(RuntimeError::BadSize);
        }
        let storage = if no_acquire {
            Storage::Unallocated
        } else {
            Storage::Owned(Rc::new(RefCell::new(vec![0u8; size as usize])))
        };
        let gid = self.next_gid(home, ObjectKind::DataBlock);
        let mut b = BlockObj::new(size, storage);
        if !no_acquire {
            if let Some(task) = creator {
                b.grants.push((task, AcquireMode::Rw));
                b.write_mode_seen = true;
            }
        }
        self.objects.insert(gid, Object::Block(b));
        Ok(gid)
    }

    /// Resolves a block to its owning byte buffer, accumulating alias
    /// offsets and allocating unallocated storage on the way. Returns the
    /// buffer plus the block's window (offset, length) within it.
    pub(crate) fn block_bytes(
        &mut self,
        g: GlobalId,
    ) -> Result<(SharedBytes, u64, u64), RuntimeError> {
        let len = self.block(g)?.size;
        let mut cur = g;
        let mut off = 0u64;
        loop {
            match &self.block(cur)?.storage {
                Storage::Owned(rc) => return Ok((rc.clone(), off, len)),
                Storage::Alias { parent, offset } => {
                    off += offset;
                    cur = *parent;
                }
                Storage::Unallocated => {
                    let size = self.block(cur)?.size as usize;
                    let rc = Rc::new(RefCell::new(vec![0u8; size]));
                    self.block_mut(cur)?.storage = Storage::Owned(rc.clone());
                    return Ok((rc, off, len));
                }
            }
        }
    }

    pub(crate) fn make_view(&mut self, g: GlobalId, writable: bool) -> Result<ByteView, RuntimeError> {
        let (rc, off, len) = self.block_bytes(g)?;
        Ok(ByteView::new(rc, off as usize, len as usize, writable))
    }

    /// Builds the per-slot records handed to a task's function. Called when
    /// the task is dispatched, after every grant has been issued, so views
    /// see post-snapshot storage.
    pub(crate) fn build_dep_records(&mut self, tid: GlobalId) -> Result<Vec<DepRecord>, RuntimeError> {
        let slots = self.task_mut(tid)?.slots.clone();
        let mut out = Vec::with_capacity(slots.len());
        for s in slots {
            let Slot::Satisfied { payload, mode, granted } = s else {
                debug_assert!(false, "dispatched task has an unsatisfied slot");
                return Err(RuntimeError::InvalidId);
            };
            debug_assert!(granted, "dispatched task has an ungranted slot");
            let rec = match payload {
                Identifier::Global(g)
                    if g.kind == ObjectKind::DataBlock && mode != AcquireMode::Null =>
                {
                    let failed = self.block(g)?.open_failed;
                    let view = self.make_view(g, mode.is_writing())?;
                    DepRecord { id: payload, mode, view: Some(view), failed }
                }
                _ => DepRecord { id: payload, mode, view: None, failed: false },
            };
            out.push(rec);
        }
        Ok(out)
    }

    pub(crate) fn handle_acquire_request(
        &mut self,
        block: Identifier,
        task: GlobalId,
        slot: u32,
        mode: AcquireMode,
    ) -> Result<(), RuntimeError> {
        let g = block.as_global().ok_or(RuntimeError::InvalidId)?;
        if self.is_destroyed(g) {
            return Err(RuntimeError::TargetDestroyed);
        }
        debug_assert!(
            !matches!(mode, AcquireMode::Null | AcquireMode::Default),
            "no-view modes never queue an acquire"
        );
        self.block_mut(g)?.queue.push_back(AcqReq { task, slot, mode });
        self.pump_grants(g)
    }

    /// Grants queue heads for as long as gating and mode compatibility
    /// allow.
    pub(crate) fn pump_grants(&mut self, g: GlobalId) -> Result<(), RuntimeError> {
        loop {
            let decision = {
                let b = self.block(g)?;
                match b.queue.front() {
                    None => break,
                    Some(req) => {
                        if !b.copy_children.is_empty() {
                            // The program promised not to touch a
                            // copy-partitioned source before copy-back.
                            Gate::Violation
                        } else if b.has_live_parts() {
                            Gate::Defer
                        } else if compatible(&b.grants, req.mode) {
                            Gate::Grant(*req)
                        } else {
                            Gate::Defer
                        }
                    }
                }
            };
            match decision {
                Gate::Defer => break,
                Gate::Violation => return Err(RuntimeError::PartitionProtocolViolation),
                Gate::Grant(req) => {
                    {
                        let b = self.block_mut(g)?;
                        b.queue.pop_front();
                        b.grants.push((req.task, req.mode));
                        if req.mode.is_writing() {
                            b.write_mode_seen = true;
                        }
                    }
                    self.stats.acquires_pending -= 1;
                    self.tr(format!(
                        "grant {g} task={} slot={} mode={}",
                        req.task, req.slot, req.mode
                    ));
                    self.cow_on_grant(g, req.mode)?;
                    self.submit(
                        g.node,
                        None,
                        Payload::Satisfy {
                            dest: Identifier::Global(req.task),
                            slot: Some(req.slot),
                            payload: Identifier::Global(g),
                            mode: Some(req.mode),
                            grant: true,
                        },
                    )?;
                }
            }
        }
        Ok(())
    }

    /// Copy-on-write snapshotting for aliased copy-partition children.
    ///
    /// When a grant lands on an aliased child that overlaps other aliased
    /// children of the same source, somebody is about to observe shared
    /// bytes. A writing grant snapshots every overlapping sibling (they
    /// must keep seeing the copy-time bytes); a reading grant snapshots the
    /// granted child itself (a sibling writer may be granted later, before
    /// this reader's task runs). Either way each child is copied at most
    /// once, and programs whose copies never overlap never pay for one.
    fn cow_on_grant(&mut self, g: GlobalId, mode: AcquireMode) -> Result<(), RuntimeError> {
        let (source, my_off, my_len) = {
            let b = self.block(g)?;
            let Some(source) = b.copy_of else { return Ok(()) };
            let Storage::Alias { offset, .. } = b.storage else { return Ok(()) };
            (source, offset, b.size)
        };
        let mut overlapping: Vec<GlobalId> = Vec::new();
        for c in self.block(source)?.copy_children.clone() {
            if c == g {
                continue;
            }
            let cb = self.block(c)?;
            if let Storage::Alias { offset, .. } = cb.storage {
                if ranges_overlap(offset, cb.size, my_off, my_len) {
                    overlapping.push(c);
                }
            }
        }
        if overlapping.is_empty() {
            return Ok(());
        }
        if mode.is_writing() {
            for c in overlapping {
                self.materialize(c)?;
            }
        } else {
            self.materialize(g)?;
        }
        Ok(())
    }

    /// Breaks an alias by copying the aliased bytes into owned storage.
    pub(crate) fn materialize(&mut self, g: GlobalId) -> Result<(), RuntimeError> {
        let (rc, off, len) = self.block_bytes(g)?;
        let owned = rc.borrow()[off as usize..(off + len) as usize].to_vec();
        self.block_mut(g)?.storage = Storage::Owned(Rc::new(RefCell::new(owned)));
        self.stats.cow_copies += 1;
        self.stats.bytes_bulk_copied += len;
        self.tr(format!("cow {g} bytes={len}"));
        Ok(())
    }

    pub(crate) fn handle_release(
        &mut self,
        block: Identifier,
        holder: GlobalId,
    ) -> Result<(), RuntimeError> {
        let g = block.as_global().ok_or(RuntimeError::InvalidId)?;
        if self.is_destroyed(g) {
            return Err(RuntimeError::TargetDestroyed);
        }
        {
            let b = self.block_mut(g)?;
            let at = b
                .grants
                .iter()
                .position(|(h, _)| *h == holder)
                .ok_or(RuntimeError::NotAcquired)?;
            b.grants.remove(at);
        }
        self.pump_grants(g)?;
        self.try_finalize_destroy(g)
    }

    /// Marks a block for destruction. Actual teardown waits for grants,
    /// queued acquires, live partitions, and outstanding copy children.
    pub(crate) fn destroy_block(&mut self, g: GlobalId) -> Result<(), RuntimeError> {
        {
            let b = self.block_mut(g)?;
            if b.pending_destroy {
                return Err(RuntimeError::InvalidId);
            }
            b.pending_destroy = true;
        }
        self.try_finalize_destroy(g)
    }

    pub(crate) fn try_finalize_destroy(&mut self, g: GlobalId) -> Result<(), RuntimeError> {
        let (parent, copy_of, backing, write_back) = {
            let b = self.block(g)?;
            if !b.pending_destroy
                || !b.grants.is_empty()
                || !b.queue.is_empty()
                || b.has_live_parts()
                || !b.copy_children.is_empty()
            {
                return Ok(());
            }
            (b.parent, b.copy_of, b.backing, b.write_mode_seen)
        };
        if let Some(backing) = backing {
            self.chunk_finalize(g, backing, write_back)?;
        }
        self.tombstone(g);
        if let Some(p) = parent {
            {
                let pb = self.block_mut(p)?;
                let entry = pb
                    .parts
                    .iter_mut()
                    .find(|e| e.child == g)
                    .expect("partition child is registered on its parent");
                entry.live = false;
                let static_done = entry.static_batch
                    && !pb.parts.iter().any(|e| e.static_batch && e.live);
                if static_done {
                    // Full destruction of a static batch frees its ranges
                    // for re-partitioning; other dead ranges stay reserved.
                    pb.parts.retain(|e| !e.static_batch);
                }
            }
            self.pump_grants(p)?;
            self.try_finalize_destroy(p)?;
        }
        if let Some(src) = copy_of {
            if !self.is_destroyed(src) {
                self.block_mut(src)?.copy_children.retain(|c| *c != g);
                self.pump_grants(src)?;
                self.try_finalize_destroy(src)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctx::TaskCtx;
    use crate::harness::{Registry, RunConfig};
    use crate::ident::NodeId;
    use crate::message::CreateSpec;

    fn noop(_: &mut TaskCtx<'_>, _: &[u64], _: &[DepRecord]) -> Result<Identifier, RuntimeError> {
        Ok(Identifier::Null)
    }

    fn rt() -> Runtime {
        let mut reg = Registry::new();
        reg.register_task("noop", noop);
        Runtime::new(reg, RunConfig::new("test"))
    }

    fn task(rt: &mut Runtime, depc: u32) -> GlobalId {
        let tmpl = rt
            .create_locally(NodeId(0), CreateSpec::Template { name: "noop".into(), paramc: 0, depc })
            .unwrap()[0];
        rt.create_locally(
            NodeId(0),
            CreateSpec::Edt {
                template: Identifier::Global(tmpl),
                params: vec![],
                deps: None,
                output_event: false,
            },
        )
        .unwrap()[0]
    }

    #[test]
    fn zero_size_is_rejected() {
        let mut rt = rt();
        assert_eq!(rt.create_block(NodeId(0), 0, false, None), Err(RuntimeError::BadSize));
    }

    #[test]
    fn fresh_block_reads_as_zeros() {
        let mut rt = rt();
        let g = rt.create_block(NodeId(0), 16, false, None).unwrap();
        let v = rt.make_view(g, false).unwrap();
        for i in 0..4 {
            assert_eq!(v.get_u32(i).unwrap(), 0);
        }
    }

    #[test]
    fn view_bounds_and_write_protection() {
        let mut rt = rt();
        let g = rt.create_block(NodeId(0), 8, false, None).unwrap();
        let ro = rt.make_view(g, false).unwrap();
        assert_eq!(ro.get_u32(2), Err(RuntimeError::BadRange));
        assert_eq!(ro.set_u32(0, 1), Err(RuntimeError::ReadOnlyView));
        let rw = rt.make_view(g, true).unwrap();
        rw.set_u32(1, 77).unwrap();
        assert_eq!(ro.get_u32(1).unwrap(), 77);
    }

    #[test]
    fn identifier_roundtrip_through_block() {
        let mut rt = rt();
        let g = rt.create_block(NodeId(0), 32, false, None).unwrap();
        let v = rt.make_view(g, true).unwrap();
        v.write_id(4, Identifier::Global(g)).unwrap();
        assert_eq!(v.read_id(4).unwrap(), Identifier::Global(g));
        v.write_id(4, Identifier::Null).unwrap();
        assert_eq!(v.read_id(4).unwrap(), Identifier::Null);
    }

    #[test]
    fn exclusive_write_excludes_and_readers_coexist() {
        let mut rt = rt();
        let g = rt.create_block(NodeId(0), 8, false, None).unwrap();
        let t1 = task(&mut rt, 0);
        let t2 = task(&mut rt, 0);
        let t3 = task(&mut rt, 0);
        rt.stats.acquires_pending = 3;
        rt.handle_acquire_request(Identifier::Global(g), t1, 0, AcquireMode::Ro).unwrap();
        rt.handle_acquire_request(Identifier::Global(g), t2, 0, AcquireMode::Rw).unwrap();
        rt.handle_acquire_request(Identifier::Global(g), t3, 0, AcquireMode::Ew).unwrap();
        // RO and RW granted together; EW stalls behind them.
        assert_eq!(rt.block(g).unwrap().grants.len(), 2);
        assert_eq!(rt.block(g).unwrap().queue.len(), 1);
        rt.handle_release(Identifier::Global(g), t1).unwrap();
        assert_eq!(rt.block(g).unwrap().queue.len(), 1);
        rt.handle_release(Identifier::Global(g), t2).unwrap();
        // Both readers gone: EW grants.
        assert_eq!(rt.block(g).unwrap().grants, vec![(t3, AcquireMode::Ew)]);
    }

    #[test]
    fn release_without_grant_is_rejected() {
        let mut rt = rt();
        let g = rt.create_block(NodeId(0), 8, false, None).unwrap();
        let t = task(&mut rt, 0);
        assert_eq!(
            rt.handle_release(Identifier::Global(g), t),
            Err(RuntimeError::NotAcquired)
        );
    }

    #[test]
    fn destroy_waits_for_release_and_double_destroy_fails() {
        let mut rt = rt();
        let t = task(&mut rt, 0);
        let g = rt.create_block(NodeId(0), 8, false, Some(t)).unwrap();
        rt.destroy_block(g).unwrap();
        // Creator grant still out: the block survives.
        assert!(rt.block(g).is_ok());
        assert_eq!(rt.destroy_block(g), Err(RuntimeError::InvalidId));
        rt.handle_release(Identifier::Global(g), t).unwrap();
        assert!(rt.is_destroyed(g));
    }
}
