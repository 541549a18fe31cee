//! Deferred local identifiers.
//!
//! A local id (LID) is a future for a global id that a remote node has not
//! assigned yet. API calls that name a LID are not rejected and not blocked:
//! the outgoing message is parked in a deferral table and released, patched
//! to name the real global id, once the matching resolution arrives. A
//! message naming several unresolved LIDs waits for all of them. Messages
//! parked under the same LID are released in their original submission
//! order, so per-channel FIFO guarantees carry over to deferred traffic.
//!
//! `wait_for_lid` is the one sanctioned blocking path: it pumps the global
//! delivery loop until the resolution arrives, which may process other
//! nodes' messages first.

use crate::error::RuntimeError;
use crate::ident::{ExecId, GlobalId, Identifier, LocalId, NodeId};
use crate::message::{CreateSpec, FileOp, Payload, Subject};
use crate::state::Runtime;
use crate::substrate::DeliveryOutcome;

#[derive(Debug, Clone)]
pub(crate) enum LidState {
    Pending {
        /// Indices into the runtime's deferral arena.
        queue: Vec<usize>,
    },
    Resolved(GlobalId),
}

/// A message held back because its payload names unresolved LIDs.
#[derive(Debug, Clone)]
pub(crate) struct DeferredEntry {
    pub origin: NodeId,
    pub fixed_target: Option<NodeId>,
    pub payload: Payload,
    pub remaining: usize,
}

impl Runtime {
    /// Allocates a fresh LID owned by `owner`. Sequence numbers restart at
    /// one for every execution context.
    pub(crate) fn alloc_lid(&mut self, owner: ExecId, seq_hint: &mut u64) -> LocalId {
        *seq_hint += 1;
        let l = LocalId { owner, seq: *seq_hint };
        self.lids.insert(l, LidState::Pending { queue: Vec::new() });
        l
    }

    pub(crate) fn lid_resolution(&self, l: LocalId) -> Option<GlobalId> {
        match self.lids.get(&l) {
            Some(LidState::Resolved(g)) => Some(*g),
            _ => None,
        }
    }

    /// Substitutes every already-resolved LID in the payload.
    fn patch_resolved(&self, payload: &mut Payload) {
        let lids = &self.lids;
        payload.for_each_id(&mut |id| {
            if let Identifier::Local(l) = id {
                if let Some(LidState::Resolved(g)) = lids.get(l) {
                    *id = Identifier::Global(*g);
                }
            }
        });
    }

    /// Queues a payload for delivery, or parks it if it still names
    /// unresolved LIDs. `fixed_target` overrides payload-derived routing and
    /// is required for payloads whose target is chosen by the sender.
    pub(crate) fn submit(
        &mut self,
        origin: NodeId,
        fixed_target: Option<NodeId>,
        mut payload: Payload,
    ) -> Result<(), RuntimeError> {
        self.patch_resolved(&mut payload);
        let unresolved = payload.unresolved_lids(&|_| false);
        if unresolved.is_empty() {
            return self.enqueue(origin, fixed_target, payload);
        }
        self.tr(format!("defer {} {}", payload.kind_label(), payload.summary()));
        let idx = self.deferred.len();
        self.deferred.push(Some(DeferredEntry {
            origin,
            fixed_target,
            payload,
            remaining: unresolved.len(),
        }));
        self.stats.deferred_outstanding += 1;
        for l in unresolved {
            match self.lids.get_mut(&l) {
                Some(LidState::Pending { queue, .. }) => queue.push(idx),
                // Resolved entries were patched above; an unknown LID here is
                // a runtime bug, not a user error.
                _ => unreachable!("deferred message names an unknown lid"),
            }
        }
        Ok(())
    }

    /// Records a resolution and releases every parked message whose last
    /// unresolved LID this was.
    pub(crate) fn resolve_lid(&mut self, l: LocalId, g: GlobalId) {
        self.tr(format!("resolve {l} -> {g}"));
        let queue = match self.lids.insert(l, LidState::Resolved(g)) {
            Some(LidState::Pending { queue, .. }) => queue,
            Some(LidState::Resolved(prev)) => {
                debug_assert_eq!(prev, g, "lid resolved twice with different ids");
                Vec::new()
            }
            None => Vec::new(),
        };
        for idx in queue {
            let ready = {
                let entry = self.deferred[idx].as_mut().expect("released entry still queued");
                entry.payload.for_each_id(&mut |id| {
                    if *id == Identifier::Local(l) {
                        *id = Identifier::Global(g);
                    }
                });
                entry.remaining -= 1;
                entry.remaining == 0
            };
            if ready {
                let entry = self.deferred[idx].take().unwrap();
                self.stats.deferred_outstanding -= 1;
                if let Err(e) = self.enqueue(entry.origin, entry.fixed_target, entry.payload) {
                    self.fail(e);
                }
            }
        }
    }

    fn enqueue(
        &mut self,
        origin: NodeId,
        fixed_target: Option<NodeId>,
        payload: Payload,
    ) -> Result<(), RuntimeError> {
        debug_assert!(
            payload.clone().unresolved_lids(&|_| false).is_empty(),
            "delivered payloads never name local ids"
        );
        let target = match fixed_target {
            Some(t) => t,
            None => route(&payload)?,
        };
        self.channels.entry((origin, target)).or_default().push_back(payload);
        Ok(())
    }

    /// Blocks the calling context on a LID by pumping the delivery loop.
    pub(crate) fn wait_for_lid(&mut self, l: LocalId) -> Result<GlobalId, RuntimeError> {
        loop {
            if let Some(g) = self.lid_resolution(l) {
                return Ok(g);
            }
            if let Some(e) = &self.error {
                return Err(e.clone());
            }
            match self.deliver_next() {
                DeliveryOutcome::Delivered => {}
                DeliveryOutcome::Idle => return Err(RuntimeError::DeadlockDetected),
            }
        }
    }
}

/// Target node derived from a fully resolved payload.
fn route(payload: &Payload) -> Result<NodeId, RuntimeError> {
    let home = |id: &Identifier| id.as_global().map(|g| g.node).ok_or(RuntimeError::InvalidId);
    match payload {
        Payload::CreateObject { spec: CreateSpec::MapElement { map, .. }, .. } => home(map),
        Payload::CreateObject { spec: CreateSpec::Partitions { parent, .. }, .. } => home(parent),
        // Other creations carry an explicit home chosen by placement.
        Payload::CreateObject { .. } => Err(RuntimeError::InvalidId),
        Payload::AddDependence { source, dest, .. } => {
            if source.is_null() {
                home(dest)
            } else {
                home(source)
            }
        }
        Payload::Satisfy { dest, .. } => home(dest),
        Payload::MapResolution { subject: Subject::MapSlot { map, .. }, .. } => Ok(map.node),
        Payload::MapResolution { subject: Subject::Lid(_), .. } => Err(RuntimeError::InvalidId),
        Payload::AcquireRequest { block, .. } => home(block),
        Payload::ReleaseNotice { block, .. } => home(block),
        Payload::DestroyObject { id } => home(id),
        Payload::CopyData { dest, .. } => home(dest),
        Payload::FileOp(FileOp::Open { .. }) => Err(RuntimeError::InvalidId),
        Payload::FileOp(FileOp::Chunk { file, .. }) => home(file),
        Payload::FileOp(FileOp::Release { file }) => home(file),
    }
}
