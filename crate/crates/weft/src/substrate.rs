//! Delivery loop over the simulated message fabric.
//!
//! Nodes exchange messages over per-(origin, target) FIFO channels,
//! including self-channels. Each turn the scheduler picks one nonempty
//! channel, or one node with a runnable task, using a seeded generator.
//! Per-channel order is never reordered; cross-channel interleaving is
//! whatever the seed produces. Fixing the program, node count, and seed
//! fixes the entire delivery sequence, which is what makes traces
//! reproducible byte for byte.

use rand_core::RngCore;

use crate::error::RuntimeError;
use crate::ident::NodeId;
use crate::message::{Payload, Subject};
use crate::state::Runtime;

/// Result of a single pump of the delivery loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeliveryOutcome {
    Delivered,
    /// No undelivered message exists anywhere.
    Idle,
}

/// One schedulable unit of progress.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Choice {
    Deliver(NodeId, NodeId),
    RunTask(NodeId),
}

impl Runtime {
    /// All currently available scheduling choices, in a canonical order:
    /// channels ascending by (origin, target), then nodes with runnable
    /// tasks ascending. The canonical order is what the seed indexes into.
    pub(crate) fn candidates(&self) -> Vec<Choice> {
        let mut out: Vec<Choice> = self
            .channels
            .iter()
            .filter(|(_, q)| !q.is_empty())
            .map(|(&(o, t), _)| Choice::Deliver(o, t))
            .collect();
        for (i, q) in self.runnable.iter().enumerate() {
            if !q.is_empty() {
                out.push(Choice::RunTask(NodeId(i as u32)));
            }
        }
        out
    }

    pub(crate) fn apply(&mut self, choice: Choice) {
        self.step += 1;
        match choice {
            Choice::Deliver(origin, target) => {
                let payload = self
                    .channels
                    .get_mut(&(origin, target))
                    .and_then(|q| q.pop_front())
                    .expect("chosen channel is nonempty");
                self.stats.deliveries += 1;
                self.tr(format!(
                    "deliver {} {origin}\u{2192}{target} {}",
                    payload.kind_label(),
                    payload.summary()
                ));
                if let Err(e) = self.dispatch(target, payload) {
                    self.fail(e);
                }
            }
            Choice::RunTask(node) => {
                let task = self.runnable[node.0 as usize]
                    .pop_front()
                    .expect("chosen node has a runnable task");
                self.execute_task(node, task);
            }
        }
    }

    /// Delivers one message chosen by seed, ignoring runnable tasks. This is
    /// the pump used by blocking waits inside a running task; new tasks are
    /// only dispatched from the top-level loop, so task execution never
    /// nests.
    pub(crate) fn deliver_next(&mut self) -> DeliveryOutcome {
        let deliveries: Vec<Choice> = self
            .candidates()
            .into_iter()
            .filter(|c| matches!(c, Choice::Deliver(..)))
            .collect();
        if deliveries.is_empty() {
            return DeliveryOutcome::Idle;
        }
        let i = (self.rng.next_u64() % deliveries.len() as u64) as usize;
        self.apply(deliveries[i]);
        DeliveryOutcome::Delivered
    }

    /// Runs until shutdown, an error, or quiescence. Reaching quiescence
    /// without shutdown while work is still pending is a deadlock.
    pub(crate) fn run_to_quiescence(&mut self) {
        loop {
            if self.error.is_some() {
                return;
            }
            if self.shutdown {
                self.drain_messages();
                return;
            }
            let candidates = self.candidates();
            if candidates.is_empty() {
                if self.pending_work() {
                    self.fail(RuntimeError::DeadlockDetected);
                }
                return;
            }
            let i = (self.rng.next_u64() % candidates.len() as u64) as usize;
            self.apply(candidates[i]);
        }
    }

    /// After shutdown no new task is dispatched, but in-flight messages are
    /// still processed so releases, destroys, and file write-backs settle.
    fn drain_messages(&mut self) {
        while self.error.is_none() {
            if self.deliver_next() == DeliveryOutcome::Idle {
                return;
            }
        }
    }

    fn pending_work(&self) -> bool {
        self.stats.deferred_outstanding > 0
            || self.stats.tasks_created > self.stats.tasks_executed
            || self.stats.acquires_pending > 0
    }

    fn dispatch(&mut self, target: NodeId, payload: Payload) -> Result<(), RuntimeError> {
        match payload {
            Payload::CreateObject { spec, replies } => self.handle_create(target, spec, replies),
            Payload::AddDependence { source, dest, slot, mode } => {
                self.handle_add_dependence(source, dest, slot, mode)
            }
            Payload::Satisfy { dest, slot, payload, mode, grant } => {
                self.handle_satisfy(dest, slot, payload, mode, grant)
            }
            Payload::MapResolution { subject, guid } => match subject {
                Subject::Lid(l) => {
                    self.resolve_lid(l, guid);
                    Ok(())
                }
                Subject::MapSlot { map, index } => self.handle_slot_bound(map, index, guid),
            },
            Payload::AcquireRequest { block, task, slot, mode } => {
                self.handle_acquire_request(block, task, slot, mode)
            }
            Payload::ReleaseNotice { block, holder } => self.handle_release(block, holder),
            Payload::DestroyObject { id } => self.handle_destroy(id),
            Payload::CopyData { dest, dest_offset, source, source_offset, size, kind, completion } => {
                self.handle_copy(dest, dest_offset, source, source_offset, size, kind, completion)
            }
            Payload::FileOp(op) => self.handle_file_op(target, op),
        }
    }
}
