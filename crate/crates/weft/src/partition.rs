//! Explicit block partitioning and bulk copies.
//!
//! Partitioning splits a block into child blocks that alias disjoint byte
//! ranges of the parent. While any child is live the parent defers all
//! acquires, so a task can never hold overlapping storage through both a
//! block and one of its partitions — and a task *wired* to both is
//! rejected up front (`PartitionDeadlock`), because neither acquire could
//! ever be granted.
//!
//! Range reservations outlive the children: destroying a child from a
//! non-static batch leaves its range permanently reserved, while a static
//! batch frees all its ranges once every child in the batch is destroyed.
//!
//! Bulk copies come in three flavors. `Plain` moves bytes. `Partition`
//! establishes a copy-out relationship from a source block into a
//! destination block (the whole destination, from source offset); under
//! the zero-copy implementation an untouched destination aliases the
//! source instead of copying, deferring the copy to first conflicting
//! access (see `cow_on_grant` in the data-block module). `PartitionBack`
//! ends the relationship: bytes flow back (for free when the alias is
//! still intact and lines up), the destination satisfies the completion
//! event, and the source copy is destroyed. Until every copy child has
//! been copied back, acquiring the original source is a protocol
//! violation, not a wait — the program promised not to look.

use crate::datablock::ranges_overlap;
use crate::error::RuntimeError;
use crate::harness::PartitionImpl;
use crate::ident::{GlobalId, Identifier, NodeId, ObjectKind};
use crate::message::{AcquireMode, CopyKind, Payload};
use crate::state::{BlockObj, Object, PartEntry, Runtime, Slot, Storage};

/// Validates one partitioning call: each descriptor `(offset, size)` is
/// checked in order for zero size, parent bounds, and overlap against both
/// the already-reserved ranges and the earlier descriptors of the same
/// batch. The first failure wins.
pub fn validate_partition_batch(
    parent_size: u64,
    reserved: &[(u64, u64)],
    descs: &[(u64, u64)],
) -> Result<(), RuntimeError> {
    let mut seen: Vec<(u64, u64)> = Vec::new();
    for &(offset, size) in descs {
        if size == 0 {
            return Err(RuntimeError::BadSize);
        }
        if offset.checked_add(size).is_none_or(|end| end > parent_size) {
            return Err(RuntimeError::BadRange);
        }
        if reserved
            .iter()
            .chain(seen.iter())
            .any(|&(o, s)| ranges_overlap(offset, size, o, s))
        {
            return Err(RuntimeError::PartitionOverlap);
        }
        seen.push((offset, size));
    }
    Ok(())
}

impl Runtime {
    /// Creates one child block per descriptor, each aliasing its range of
    /// `parent`, and reserves the ranges. Rejected wholesale if the parent
    /// still has live children from a static batch.
    pub(crate) fn create_partitions(
        &mut self,
        at: NodeId,
        parent: Identifier,
        descs: &[(u64, u64)],
        static_batch: bool,
    ) -> Result<Vec<GlobalId>, RuntimeError> {
        let pg = parent.as_global().ok_or(RuntimeError::InvalidId)?;
        if self.is_destroyed(pg) {
            return Err(RuntimeError::TargetDestroyed);
        }
        let (psize, reserved, live_static) = {
            let b = self.block(pg)?;
            (
                b.size,
                b.parts.iter().map(|e| (e.offset, e.size)).collect::<Vec<_>>(),
                b.parts.iter().any(|e| e.static_batch && e.live),
            )
        };
        if live_static {
            return Err(RuntimeError::StaticPartitioned);
        }
        validate_partition_batch(psize, &reserved, descs)?;
        let mut out = Vec::with_capacity(descs.len());
        for &(offset, size) in descs {
            let gid = self.next_gid(at, ObjectKind::DataBlock);
            let mut b = BlockObj::new(size, Storage::Alias { parent: pg, offset });
            b.parent = Some(pg);
            self.objects.insert(gid, Object::Block(b));
            self.block_mut(pg)?.parts.push(PartEntry {
                child: gid,
                offset,
                size,
                static_batch,
                live: true,
            });
            out.push(gid);
        }
        Ok(out)
    }

    /// Rejects wiring `block` into `task` when another slot already names
    /// one of its partition ancestors or descendants: the parent defers
    /// acquires while children live, but the children only die after the
    /// task that holds them runs, so such a task could never start.
    pub(crate) fn check_partition_deadlock(
        &mut self,
        task: GlobalId,
        block: GlobalId,
        exclude_slot: u32,
    ) -> Result<(), RuntimeError> {
        let others: Vec<GlobalId> = self
            .task_mut(task)?
            .slots
            .iter()
            .enumerate()
            .filter(|(i, _)| *i as u32 != exclude_slot)
            .filter_map(|(_, s)| match s {
                Slot::Connected(Identifier::Global(g)) if g.kind == ObjectKind::DataBlock => {
                    Some(*g)
                }
                Slot::Satisfied { payload: Identifier::Global(g), mode, .. }
                    if g.kind == ObjectKind::DataBlock && *mode != AcquireMode::Null =>
                {
                    Some(*g)
                }
                _ => None,
            })
            .collect();
        for other in others {
            // The same block in two slots is fine (one acquire covers it);
            // only a strict ancestor/descendant pair can never both grant.
            if other != block
                && (self.is_partition_ancestor(other, block)
                    || self.is_partition_ancestor(block, other))
            {
                return Err(RuntimeError::PartitionDeadlock);
            }
        }
        Ok(())
    }

    fn is_partition_ancestor(&self, anc: GlobalId, start: GlobalId) -> bool {
        let mut cur = start;
        while let Some(p) = self.block(cur).ok().and_then(|b| b.parent) {
            if p == anc {
                return true;
            }
            cur = p;
        }
        false
    }

    // The argument list mirrors the CopyData message fields one-to-one.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn handle_copy(
        &mut self,
        dest: Identifier,
        dest_offset: u64,
        source: Identifier,
        source_offset: u64,
        size: u64,
        kind: CopyKind,
        completion: Identifier,
    ) -> Result<(), RuntimeError> {
        let dg = dest.as_global().ok_or(RuntimeError::InvalidId)?;
        let sg = source.as_global().ok_or(RuntimeError::InvalidId)?;
        for g in [dg, sg] {
            if self.is_destroyed(g) {
                return Err(RuntimeError::TargetDestroyed);
            }
            if g.kind != ObjectKind::DataBlock {
                return Err(RuntimeError::InvalidId);
            }
        }
        {
            let sb = self.block(sg)?;
            if source_offset.checked_add(size).is_none_or(|end| end > sb.size) {
                return Err(RuntimeError::BadRange);
            }
            let db = self.block(dg)?;
            if dest_offset.checked_add(size).is_none_or(|end| end > db.size) {
                return Err(RuntimeError::BadRange);
            }
        }
        match kind {
            CopyKind::Plain => {
                self.copy_plain(dg, dest_offset, sg, source_offset, size)?;
            }
            CopyKind::Partition => {
                // Partition semantics need the copy to cover the whole
                // destination; anything else quietly degrades to a plain
                // copy with no copy-out relationship.
                if dest_offset == 0 && size == self.block(dg)?.size {
                    self.copy_out(dg, sg, source_offset, size)?;
                } else {
                    self.copy_plain(dg, dest_offset, sg, source_offset, size)?;
                }
            }
            CopyKind::PartitionBack => {
                self.copy_back(dg, dest_offset, sg, source_offset, size)?;
            }
        }
        if !completion.is_null() {
            // Copy completions always announce the destination block.
            self.submit(
                dg.node,
                None,
                Payload::Satisfy {
                    dest: completion,
                    slot: None,
                    payload: Identifier::Global(dg),
                    mode: None,
                    grant: false,
                },
            )?;
        }
        Ok(())
    }

    fn copy_plain(
        &mut self,
        dg: GlobalId,
        dest_offset: u64,
        sg: GlobalId,
        source_offset: u64,
        size: u64,
    ) -> Result<(), RuntimeError> {
        if size == 0 {
            return Ok(());
        }
        if dg == sg && ranges_overlap(dest_offset, size, source_offset, size) {
            return Err(RuntimeError::BadRange);
        }
        self.copy_bytes(dg, dest_offset, sg, source_offset, size)
    }

    /// Physical byte move through a temporary, so physically-overlapping
    /// alias windows of distinct blocks still copy correctly.
    fn copy_bytes(
        &mut self,
        dg: GlobalId,
        dest_offset: u64,
        sg: GlobalId,
        source_offset: u64,
        size: u64,
    ) -> Result<(), RuntimeError> {
        let (src_rc, src_base, _) = self.block_bytes(sg)?;
        let at = (src_base + source_offset) as usize;
        let tmp = src_rc.borrow()[at..at + size as usize].to_vec();
        let (dst_rc, dst_base, _) = self.block_bytes(dg)?;
        let at = (dst_base + dest_offset) as usize;
        dst_rc.borrow_mut()[at..at + size as usize].copy_from_slice(&tmp);
        self.stats.bytes_bulk_copied += size;
        Ok(())
    }

    fn copy_out(
        &mut self,
        dg: GlobalId,
        sg: GlobalId,
        source_offset: u64,
        size: u64,
    ) -> Result<(), RuntimeError> {
        if self.block(dg)?.copy_of.is_some() {
            return Err(RuntimeError::PartitionProtocolViolation);
        }
        let can_alias = self.cfg.partition_impl == PartitionImpl::ZeroCopy && {
            let db = self.block(dg)?;
            matches!(db.storage, Storage::Unallocated) && db.grants.is_empty()
        };
        if can_alias {
            self.block_mut(dg)?.storage = Storage::Alias { parent: sg, offset: source_offset };
        } else {
            self.copy_bytes(dg, 0, sg, source_offset, size)?;
        }
        self.block_mut(dg)?.copy_of = Some(sg);
        self.block_mut(sg)?.copy_children.push(dg);
        Ok(())
    }

    fn copy_back(
        &mut self,
        dg: GlobalId,
        dest_offset: u64,
        sg: GlobalId,
        source_offset: u64,
        size: u64,
    ) -> Result<(), RuntimeError> {
        if self.block(sg)?.copy_of != Some(dg) {
            return Err(RuntimeError::PartitionProtocolViolation);
        }
        let in_place = match self.block(sg)?.storage {
            // Still aliasing the destination at exactly the copy-back
            // window: the bytes never left.
            Storage::Alias { parent, offset } => {
                parent == dg && offset + source_offset == dest_offset
            }
            _ => false,
        };
        if !in_place {
            self.copy_bytes(dg, dest_offset, sg, source_offset, size)?;
        }
        {
            let sb = self.block_mut(sg)?;
            sb.copy_of = None;
            sb.storage = match std::mem::replace(&mut sb.storage, Storage::Unallocated) {
                // Detach from the parent so teardown never reads back
                // through a block being destroyed.
                Storage::Alias { .. } => Storage::Unallocated,
                other => other,
            };
        }
        self.block_mut(dg)?.copy_children.retain(|c| *c != sg);
        self.destroy_block(sg)?;
        self.pump_grants(dg)?;
        self.try_finalize_destroy(dg)
    }
}
