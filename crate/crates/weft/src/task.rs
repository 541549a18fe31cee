//! Task, template, and event lifecycle.
//!
//! A task is created from a template, carries a fixed parameter list, and
//! waits on a fixed number of dependence slots. Readiness is two-phased:
//! first every slot must be satisfied with a payload, then every slot whose
//! payload is a data block (in a viewing mode) must be granted by the
//! block's home node. Only a fully granted task enters a node's runnable
//! queue. When a task's function returns, every block it still holds is
//! released and its output event, if it has one, is satisfied with the
//! returned identifier.
//!
//! Once-events hold at most one payload. Satisfying an event forwards the
//! payload to every registered sink; sinks registered after satisfaction are
//! forwarded immediately. A second satisfaction is an error.

use crate::error::RuntimeError;
use crate::ident::{GlobalId, Identifier, NodeId, ObjectKind};
use crate::message::{AcquireMode, CreateSpec, Payload, ReplyTo, Subject};
use crate::state::{EventObj, Object, Runtime, Sink, Slot, TaskObj, TaskState, TemplateObj};

/// Resolves `Default` against the payload that arrived in the slot: block
/// payloads default to a read-only view, anything else to no view at all.
pub(crate) fn effective_mode(declared: AcquireMode, payload: Identifier) -> AcquireMode {
    match declared {
        AcquireMode::Default => match payload {
            Identifier::Global(g) if g.kind == ObjectKind::DataBlock => AcquireMode::Ro,
            _ => AcquireMode::Null,
        },
        m => m,
    }
}

impl Runtime {
    /// Processes a `CreateObject` on the object's home node and reports the
    /// assigned ids back to whoever asked.
    pub(crate) fn handle_create(
        &mut self,
        target: NodeId,
        spec: CreateSpec,
        replies: Vec<ReplyTo>,
    ) -> Result<(), RuntimeError> {
        if let CreateSpec::MapElement { map, index } = spec {
            return self.handle_map_get(map, index, replies);
        }
        let gids = self.create_locally(target, spec)?;
        debug_assert!(replies.len() <= gids.len(), "more replies than created objects");
        for (gid, reply) in gids.into_iter().zip(replies) {
            self.send_reply(reply, gid)?;
        }
        Ok(())
    }

    /// Routes an assigned global id to a reply token: either a deferred
    /// local id at its origin node or a labeled-map slot.
    pub(crate) fn send_reply(&mut self, reply: ReplyTo, gid: GlobalId) -> Result<(), RuntimeError> {
        match reply {
            ReplyTo::Lid { lid, origin } => self.submit(
                gid.node,
                Some(origin),
                Payload::MapResolution { subject: Subject::Lid(lid), guid: gid },
            ),
            ReplyTo::MapSlot { map, index } => self.submit(
                gid.node,
                Some(map.node),
                Payload::MapResolution { subject: Subject::MapSlot { map, index }, guid: gid },
            ),
        }
    }

    /// Creates the objects described by `spec` with `home` as their home
    /// node, returning ids in creation order. Used both by the message
    /// handler and by the synchronous local-creation shortcut.
    pub(crate) fn create_locally(
        &mut self,
        home: NodeId,
        spec: CreateSpec,
    ) -> Result<Vec<GlobalId>, RuntimeError> {
        match spec {
            CreateSpec::Template { name, paramc, depc } => {
                let entry = self.registry.task_fn(&name)?;
                let gid = self.next_gid(home, ObjectKind::TaskTemplate);
                self.objects
                    .insert(gid, Object::Template(TemplateObj { name, entry, paramc, depc }));
                Ok(vec![gid])
            }
            CreateSpec::Edt { template, params, deps, output_event } => {
                self.create_edt(home, template, params, deps, output_event)
            }
            CreateSpec::Event => {
                let gid = self.next_gid(home, ObjectKind::Event);
                self.objects
                    .insert(gid, Object::Event(EventObj { satisfied: None, sinks: Vec::new() }));
                Ok(vec![gid])
            }
            CreateSpec::Block { size, no_acquire, creator } => {
                self.create_block(home, size, no_acquire, creator).map(|g| vec![g])
            }
            CreateSpec::Map { size, creator, params, guids } => {
                self.create_map(home, size, creator, params, guids).map(|g| vec![g])
            }
            CreateSpec::Partitions { parent, descs, static_partitioning } => {
                self.create_partitions(home, parent, &descs, static_partitioning)
            }
            // Map elements are get-or-create and always travel as messages;
            // they never take the plain creation path.
            CreateSpec::MapElement { .. } => Err(RuntimeError::InvalidId),
        }
    }

    fn create_edt(
        &mut self,
        home: NodeId,
        template: Identifier,
        params: Vec<u64>,
        deps: Option<Vec<Identifier>>,
        output_event: bool,
    ) -> Result<Vec<GlobalId>, RuntimeError> {
        let tgid = template.as_global().ok_or(RuntimeError::InvalidId)?;
        let (name, entry, paramc, depc) = match self.object(tgid)? {
            Object::Template(t) => (t.name.clone(), t.entry, t.paramc, t.depc),
            _ => return Err(RuntimeError::InvalidId),
        };
        if params.len() != paramc as usize {
            return Err(RuntimeError::BadArity);
        }
        let dep_list = match deps {
            Some(d) => {
                if d.len() != depc as usize {
                    return Err(RuntimeError::BadArity);
                }
                d
            }
            None => vec![Identifier::Uninitialized; depc as usize],
        };

        let gid = self.next_gid(home, ObjectKind::Task);
        let mut created = vec![gid];
        let ev = if output_event {
            let e = self.next_gid(home, ObjectKind::Event);
            self.objects
                .insert(e, Object::Event(EventObj { satisfied: None, sinks: Vec::new() }));
            created.push(e);
            Some(e)
        } else {
            None
        };

        self.objects.insert(
            gid,
            Object::Task(TaskObj {
                template_name: name,
                entry,
                params,
                slots: vec![Slot::Unconnected; depc as usize],
                output_event: ev,
                state: TaskState::Waiting,
                granted: Vec::new(),
            }),
        );
        self.stats.tasks_created += 1;

        for (i, d) in dep_list.iter().enumerate() {
            if !matches!(d, Identifier::Uninitialized) {
                self.wire_dependence(*d, gid, i as u32, AcquireMode::Default)?;
            }
        }
        self.task_try_progress(gid)?;
        Ok(created)
    }

    pub(crate) fn handle_add_dependence(
        &mut self,
        source: Identifier,
        dest: Identifier,
        slot: u32,
        mode: AcquireMode,
    ) -> Result<(), RuntimeError> {
        let d = dest.as_global().ok_or(RuntimeError::InvalidId)?;
        self.wire_dependence(source, d, slot, mode)
    }

    /// Connects `source` to one dependence slot of `dest`. The slot is
    /// occupied immediately; the payload arrives later as a `Satisfy`
    /// message from the source's home node, so satisfaction order is
    /// whatever the delivery schedule produces.
    pub(crate) fn wire_dependence(
        &mut self,
        source: Identifier,
        dest: GlobalId,
        slot: u32,
        mode: AcquireMode,
    ) -> Result<(), RuntimeError> {
        if self.is_destroyed(dest) {
            return Err(RuntimeError::TargetDestroyed);
        }
        if dest.kind == ObjectKind::Event {
            return self.wire_event_dest(source, dest);
        }
        {
            let t = self.task_mut(dest)?;
            let k = slot as usize;
            if k >= t.slots.len() {
                return Err(RuntimeError::BadSlot);
            }
            match &t.slots[k] {
                Slot::Unconnected => t.slots[k] = Slot::Connected(source),
                _ => return Err(RuntimeError::SlotOccupied),
            }
        }
        match source {
            Identifier::Null => self.submit(
                dest.node,
                None,
                Payload::Satisfy {
                    dest: Identifier::Global(dest),
                    slot: Some(slot),
                    payload: Identifier::Null,
                    mode: Some(mode),
                    grant: false,
                },
            ),
            Identifier::Global(src) => {
                if self.is_destroyed(src) {
                    return Err(RuntimeError::TargetDestroyed);
                }
                match self.object(src)?.kind() {
                    ObjectKind::Event => {
                        let fire = {
                            let e = self.event_mut(src)?;
                            e.sinks.push(Sink { dest, slot, mode });
                            e.satisfied
                        };
                        if let Some(payload) = fire {
                            self.submit(
                                src.node,
                                None,
                                Payload::Satisfy {
                                    dest: Identifier::Global(dest),
                                    slot: Some(slot),
                                    payload,
                                    mode: Some(mode),
                                    grant: false,
                                },
                            )?;
                        }
                        Ok(())
                    }
                    ObjectKind::DataBlock => {
                        self.check_partition_deadlock(dest, src, slot)?;
                        self.submit(
                            src.node,
                            None,
                            Payload::Satisfy {
                                dest: Identifier::Global(dest),
                                slot: Some(slot),
                                payload: Identifier::Global(src),
                                mode: Some(mode),
                                grant: false,
                            },
                        )
                    }
                    _ => Err(RuntimeError::InvalidId),
                }
            }
            Identifier::Local(_) | Identifier::Uninitialized => Err(RuntimeError::InvalidId),
        }
    }

    /// Wiring whose destination is an event: the event is satisfied when the
    /// source produces, chaining payloads through.
    fn wire_event_dest(&mut self, source: Identifier, dest: GlobalId) -> Result<(), RuntimeError> {
        let satisfy = |payload: Identifier| Payload::Satisfy {
            dest: Identifier::Global(dest),
            slot: None,
            payload,
            mode: None,
            grant: false,
        };
        match source {
            Identifier::Null => self.submit(dest.node, None, satisfy(Identifier::Null)),
            Identifier::Global(src) => {
                if self.is_destroyed(src) {
                    return Err(RuntimeError::TargetDestroyed);
                }
                match self.object(src)?.kind() {
                    ObjectKind::Event => {
                        let fire = {
                            let e = self.event_mut(src)?;
                            e.sinks.push(Sink { dest, slot: 0, mode: AcquireMode::Default });
                            e.satisfied
                        };
                        if let Some(payload) = fire {
                            self.submit(src.node, None, satisfy(payload))?;
                        }
                        Ok(())
                    }
                    // A block is always "already produced".
                    ObjectKind::DataBlock => {
                        self.submit(src.node, None, satisfy(Identifier::Global(src)))
                    }
                    _ => Err(RuntimeError::InvalidId),
                }
            }
            Identifier::Local(_) | Identifier::Uninitialized => Err(RuntimeError::InvalidId),
        }
    }

    pub(crate) fn handle_satisfy(
        &mut self,
        dest: Identifier,
        slot: Option<u32>,
        payload: Identifier,
        mode: Option<AcquireMode>,
        grant: bool,
    ) -> Result<(), RuntimeError> {
        let d = dest.as_global().ok_or(RuntimeError::InvalidId)?;
        if self.is_destroyed(d) {
            return Err(RuntimeError::TargetDestroyed);
        }
        match self.object(d)?.kind() {
            ObjectKind::Event => self.satisfy_event(d, payload),
            ObjectKind::Task => {
                let k = slot.ok_or(RuntimeError::BadSlot)?;
                if grant {
                    self.apply_grant(d, k, payload, mode)
                } else {
                    self.satisfy_task_slot(d, k, payload, mode.unwrap_or(AcquireMode::Default))
                }
            }
            _ => Err(RuntimeError::InvalidId),
        }
    }

    pub(crate) fn satisfy_event(
        &mut self,
        ev: GlobalId,
        payload: Identifier,
    ) -> Result<(), RuntimeError> {
        let sinks = {
            let e = self.event_mut(ev)?;
            if e.satisfied.is_some() {
                return Err(RuntimeError::AlreadySatisfied);
            }
            e.satisfied = Some(payload);
            e.sinks.clone()
        };
        for s in sinks {
            self.submit(
                ev.node,
                None,
                Payload::Satisfy {
                    dest: Identifier::Global(s.dest),
                    slot: Some(s.slot),
                    payload,
                    mode: Some(s.mode),
                    grant: false,
                },
            )?;
        }
        Ok(())
    }

    fn satisfy_task_slot(
        &mut self,
        tid: GlobalId,
        k: u32,
        payload: Identifier,
        declared: AcquireMode,
    ) -> Result<(), RuntimeError> {
        let eff = effective_mode(declared, payload);
        let is_block =
            matches!(payload, Identifier::Global(g) if g.kind == ObjectKind::DataBlock);
        let needs_grant = is_block && eff != AcquireMode::Null;
        {
            let t = self.task_mut(tid)?;
            let ki = k as usize;
            if ki >= t.slots.len() {
                return Err(RuntimeError::BadSlot);
            }
            match &t.slots[ki] {
                Slot::Satisfied { .. } => return Err(RuntimeError::SlotOccupied),
                _ => t.slots[ki] = Slot::Satisfied { payload, mode: eff, granted: !needs_grant },
            }
        }
        // A block forwarded through an event is first seen by the task here,
        // so the partition relation check repeats at satisfaction time.
        if let Identifier::Global(g) = payload {
            if g.kind == ObjectKind::DataBlock {
                self.check_partition_deadlock(tid, g, k)?;
            }
        }
        self.task_try_progress(tid)
    }

    fn apply_grant(
        &mut self,
        tid: GlobalId,
        k: u32,
        payload: Identifier,
        mode: Option<AcquireMode>,
    ) -> Result<(), RuntimeError> {
        let block = payload.as_global().ok_or(RuntimeError::InvalidId)?;
        let m = mode.unwrap_or(AcquireMode::Ro);
        {
            let t = self.task_mut(tid)?;
            let ki = k as usize;
            if ki >= t.slots.len() {
                return Err(RuntimeError::BadSlot);
            }
            match &mut t.slots[ki] {
                Slot::Satisfied { granted, .. } if !*granted => *granted = true,
                _ => return Err(RuntimeError::InvalidId),
            }
            t.granted.push((block, m));
        }
        self.task_try_progress(tid)
    }

    /// Advances a task through the readiness phases. Acquire requests go out
    /// in slot order once every slot is satisfied; the task queues as
    /// runnable once every requested grant has come back.
    pub(crate) fn task_try_progress(&mut self, tid: GlobalId) -> Result<(), RuntimeError> {
        let (state, all_satisfied, all_granted, needs) = {
            let t = self.task_mut(tid)?;
            let mut all_satisfied = true;
            let mut all_granted = true;
            let mut needs: Vec<(u32, GlobalId, AcquireMode)> = Vec::new();
            for (i, s) in t.slots.iter().enumerate() {
                match s {
                    Slot::Satisfied { payload, mode, granted } => {
                        if !*granted {
                            all_granted = false;
                            if let Identifier::Global(g) = payload {
                                needs.push((i as u32, *g, *mode));
                            }
                        }
                    }
                    _ => {
                        all_satisfied = false;
                        all_granted = false;
                    }
                }
            }
            (t.state, all_satisfied, all_granted, needs)
        };
        match state {
            TaskState::Waiting if all_satisfied => {
                if needs.is_empty() {
                    self.mark_runnable(tid);
                } else {
                    self.task_mut(tid)?.state = TaskState::Acquiring;
                    for (slot, block, mode) in needs {
                        self.stats.acquires_pending += 1;
                        self.submit(
                            tid.node,
                            None,
                            Payload::AcquireRequest {
                                block: Identifier::Global(block),
                                task: tid,
                                slot,
                                mode,
                            },
                        )?;
                    }
                }
            }
            TaskState::Acquiring if all_granted => self.mark_runnable(tid),
            _ => {}
        }
        Ok(())
    }

    fn mark_runnable(&mut self, tid: GlobalId) {
        if let Ok(t) = self.task_mut(tid) {
            t.state = TaskState::Runnable;
        }
        self.runnable[tid.node.0 as usize].push_back(tid);
    }

    pub(crate) fn execute_task(&mut self, node: NodeId, tid: GlobalId) {
        if let Err(e) = self.execute_task_inner(node, tid) {
            self.fail(e);
        }
    }

    fn execute_task_inner(&mut self, node: NodeId, tid: GlobalId) -> Result<(), RuntimeError> {
        let (entry, params, name, output_event) = {
            let t = self.task_mut(tid)?;
            t.state = TaskState::Done;
            (t.entry, t.params.clone(), t.template_name.clone(), t.output_event)
        };
        self.tr(format!("run-task {tid} template={name} params={params:?}"));
        self.stats.tasks_executed += 1;
        let deps = self.build_dep_records(tid)?;
        let exec = self.next_exec();
        let ret = {
            let mut ctx = crate::ctx::TaskCtx::new(self, node, tid, exec);
            entry(&mut ctx, &params, &deps)?
        };
        // Whatever the task still holds is released in grant order.
        let held = std::mem::take(&mut self.task_mut(tid)?.granted);
        for (b, _) in held {
            self.submit(
                node,
                None,
                Payload::ReleaseNotice { block: Identifier::Global(b), holder: tid },
            )?;
        }
        if let Some(ev) = output_event {
            // The returned identifier may still be one of the task's own
            // deferred local ids; submission parks the satisfy until the
            // matching resolution arrives.
            self.submit(
                node,
                None,
                Payload::Satisfy {
                    dest: Identifier::Global(ev),
                    slot: None,
                    payload: ret,
                    mode: None,
                    grant: false,
                },
            )?;
        }
        Ok(())
    }

    /// Seeds the run: a zero-arity template and one instance of it on node
    /// zero, runnable immediately.
    pub(crate) fn bootstrap(&mut self, main_name: &str) -> Result<(), RuntimeError> {
        let node = NodeId(0);
        let tmpl = self.create_locally(
            node,
            CreateSpec::Template { name: main_name.to_string(), paramc: 0, depc: 0 },
        )?[0];
        self.create_locally(
            node,
            CreateSpec::Edt {
                template: Identifier::Global(tmpl),
                params: Vec::new(),
                deps: Some(Vec::new()),
                output_event: false,
            },
        )?;
        Ok(())
    }

    pub(crate) fn handle_destroy(&mut self, id: Identifier) -> Result<(), RuntimeError> {
        let g = id.as_global().ok_or(RuntimeError::InvalidId)?;
        match self.object(g)? {
            Object::Block(_) => return self.destroy_block(g),
            Object::Template(_) | Object::Event(_) | Object::Map(_) => {}
            // Tasks retire on their own and files go through release.
            Object::Task(_) | Object::File(_) => return Err(RuntimeError::InvalidId),
            Object::Tombstone(_) => unreachable!("object() filters tombstones"),
        }
        self.tombstone(g);
        Ok(())
    }

    pub(crate) fn tombstone(&mut self, g: GlobalId) {
        self.tr(format!("destroy {g}"));
        self.objects.insert(g, Object::Tombstone(g.kind));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datablock::DepRecord;
    use crate::ctx::TaskCtx;
    use crate::error::Outcome;
    use crate::harness::{Registry, RunConfig};

    fn noop(_: &mut TaskCtx<'_>, _: &[u64], _: &[DepRecord]) -> Result<Identifier, RuntimeError> {
        Ok(Identifier::Null)
    }

    fn rt() -> Runtime {
        let mut reg = Registry::new();
        reg.register_task("noop", noop);
        Runtime::new(reg, RunConfig::new("test"))
    }

    fn template(rt: &mut Runtime, depc: u32) -> GlobalId {
        rt.create_locally(
            NodeId(0),
            CreateSpec::Template { name: "noop".into(), paramc: 0, depc },
        )
        .unwrap()[0]
    }

    #[test]
    fn null_deps_run_after_delivery() {
        let mut rt = rt();
        let tmpl = template(&mut rt, 2);
        rt.create_locally(
            NodeId(0),
            CreateSpec::Edt {
                template: Identifier::Global(tmpl),
                params: vec![],
                deps: Some(vec![Identifier::Null, Identifier::Null]),
                output_event: false,
            },
        )
        .unwrap();
        assert_eq!(rt.stats.tasks_executed, 0);
        rt.run_to_quiescence();
        assert_eq!(rt.error, None);
        assert_eq!(rt.stats.tasks_executed, 1);
    }

    #[test]
    fn event_forwards_to_sink_registered_after_satisfaction() {
        let mut rt = rt();
        let tmpl = template(&mut rt, 1);
        let ev = rt.create_locally(NodeId(1), CreateSpec::Event).unwrap()[0];
        rt.satisfy_event(ev, Identifier::Null).unwrap();
        rt.create_locally(
            NodeId(0),
            CreateSpec::Edt {
                template: Identifier::Global(tmpl),
                params: vec![],
                deps: Some(vec![Identifier::Global(ev)]),
                output_event: false,
            },
        )
        .unwrap();
        rt.run_to_quiescence();
        assert_eq!(rt.error, None);
        assert_eq!(rt.stats.tasks_executed, 1);
    }

    #[test]
    fn second_wire_to_same_slot_is_rejected() {
        let mut rt = rt();
        let tmpl = template(&mut rt, 1);
        let task = rt
            .create_locally(
                NodeId(0),
                CreateSpec::Edt {
                    template: Identifier::Global(tmpl),
                    params: vec![],
                    deps: None,
                    output_event: false,
                },
            )
            .unwrap()[0];
        rt.wire_dependence(Identifier::Null, task, 0, AcquireMode::Default).unwrap();
        let err = rt.wire_dependence(Identifier::Null, task, 0, AcquireMode::Default);
        assert_eq!(err, Err(RuntimeError::SlotOccupied));
    }

    #[test]
    fn double_event_satisfaction_is_rejected() {
        let mut rt = rt();
        let ev = rt.create_locally(NodeId(0), CreateSpec::Event).unwrap()[0];
        rt.satisfy_event(ev, Identifier::Null).unwrap();
        assert_eq!(
            rt.satisfy_event(ev, Identifier::Null),
            Err(RuntimeError::AlreadySatisfied)
        );
    }

    #[test]
    fn parameter_arity_is_checked() {
        let mut rt = rt();
        let tmpl = template(&mut rt, 0);
        let err = rt.create_locally(
            NodeId(0),
            CreateSpec::Edt {
                template: Identifier::Global(tmpl),
                params: vec![7],
                deps: Some(vec![]),
                output_event: false,
            },
        );
        assert!(matches!(err, Err(RuntimeError::BadArity)));
    }

    #[test]
    fn unfinished_task_reads_as_deadlock() {
        let mut rt = rt();
        let tmpl = template(&mut rt, 1);
        // One slot never wired: the task can never run.
        rt.create_locally(
            NodeId(0),
            CreateSpec::Edt {
                template: Identifier::Global(tmpl),
                params: vec![],
                deps: None,
                output_event: false,
            },
        )
        .unwrap();
        rt.run_to_quiescence();
        assert_eq!(rt.outcome(), Outcome::DeadlockDetected);
    }
}
