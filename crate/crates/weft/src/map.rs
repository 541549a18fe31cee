//! Labeled object maps: get-or-create tables of global ids.
//!
//! A map is homed on one node and owns a fixed number of slots. Asking for
//! a slot either answers with the already-created object, parks the asker
//! behind an in-flight creation, or — on first touch — runs the map's
//! creator function right there on the map's home node. The creator must
//! bind exactly one freshly created object to the slot; the bind may
//! travel as a message when the new object is homed elsewhere, so a slot
//! can stay in the creating state across many deliveries while every
//! later asker just piles onto its waiter list.
//!
//! This funnels all creation races through the home node: no matter how
//! many tasks race to name the same slot, the creator runs once and every
//! asker eventually receives the same id.

use crate::error::RuntimeError;
use crate::ident::{GlobalId, Identifier, NodeId, ObjectKind};
use crate::message::ReplyTo;
use crate::state::{MapObj, MapSlot, Object, Runtime};

impl Runtime {
    pub(crate) fn create_map(
        &mut self,
        home: NodeId,
        size: u64,
        creator: String,
        params: Vec<u64>,
        guids: Vec<Identifier>,
    ) -> Result<GlobalId, RuntimeError> {
        if size == 0 {
            return Err(RuntimeError::BadSize);
        }
        let f = self.registry.creator_fn(&creator)?;
        // The capture list is shipped to the creator on every invocation;
        // deferred ids must have been resolved before they get here.
        if guids
            .iter()
            .any(|g| !matches!(g, Identifier::Global(_) | Identifier::Null))
        {
            return Err(RuntimeError::InvalidId);
        }
        let gid = self.next_gid(home, ObjectKind::Map);
        self.objects.insert(
            gid,
            Object::Map(MapObj {
                creator: f,
                params,
                guids,
                slots: vec![MapSlot::Empty; size as usize],
            }),
        );
        Ok(gid)
    }

    /// Get-or-create of one map slot, running on the map's home node.
    pub(crate) fn handle_map_get(
        &mut self,
        map: Identifier,
        index: u64,
        replies: Vec<ReplyTo>,
    ) -> Result<(), RuntimeError> {
        let mg = map.as_global().ok_or(RuntimeError::InvalidId)?;
        if mg.kind != ObjectKind::Map {
            return Err(RuntimeError::InvalidId);
        }
        enum Next {
            Answer(GlobalId, Vec<ReplyTo>),
            Parked,
            RunCreator,
        }
        let next = {
            let m = self.map_mut(mg)?;
            if index >= m.slots.len() as u64 {
                return Err(RuntimeError::BadIndex);
            }
            match &mut m.slots[index as usize] {
                MapSlot::Created(g) => Next::Answer(*g, replies),
                MapSlot::Creating(waiters) => {
                    waiters.extend(replies);
                    Next::Parked
                }
                MapSlot::Empty => {
                    m.slots[index as usize] = MapSlot::Creating(replies);
                    Next::RunCreator
                }
            }
        };
        match next {
            Next::Answer(g, replies) => {
                for r in replies {
                    self.send_reply(r, g)?;
                }
                Ok(())
            }
            Next::Parked => Ok(()),
            Next::RunCreator => self.run_creator(mg, index),
        }
    }

    fn run_creator(&mut self, mg: GlobalId, index: u64) -> Result<(), RuntimeError> {
        let (f, params, guids) = {
            let m = self.map_mut(mg)?;
            (m.creator, m.params.clone(), m.guids.clone())
        };
        self.stats.creator_invocations += 1;
        let exec = self.next_exec();
        let mut bound = Identifier::Uninitialized;
        let bound_done = {
            let mut ctx = crate::ctx::CreatorCtx::new(self, mg.node, mg, index, exec);
            f(&mut ctx, &mut bound, index, &params, &guids)?;
            ctx.bound_done()
        };
        if !bound_done {
            return Err(RuntimeError::CreatorContractViolation);
        }
        Ok(())
    }

    /// The bind for an in-flight slot creation arrived: record the id and
    /// answer everyone who asked while it was pending.
    pub(crate) fn handle_slot_bound(
        &mut self,
        map: GlobalId,
        index: u64,
        guid: GlobalId,
    ) -> Result<(), RuntimeError> {
        if self.is_destroyed(map) {
            return Err(RuntimeError::TargetDestroyed);
        }
        let waiters = {
            let m = self.map_mut(map)?;
            let slot = m
                .slots
                .get_mut(index as usize)
                .ok_or(RuntimeError::BadIndex)?;
            match std::mem::replace(slot, MapSlot::Created(guid)) {
                MapSlot::Creating(w) => w,
                other => {
                    *slot = other;
                    return Err(RuntimeError::InvalidId);
                }
            }
        };
        for r in waiters {
            self.send_reply(r, guid)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctx::{CreatorCtx, TaskCtx};
    use crate::datablock::DepRecord;
    use crate::harness::{Placement, Registry, RunConfig};
    use crate::message::CreateSpec;

    fn noop(_: &mut TaskCtx<'_>, _: &[u64], _: &[DepRecord]) -> Result<Identifier, RuntimeError> {
        Ok(Identifier::Null)
    }

    fn bind_task(
        ctx: &mut CreatorCtx<'_>,
        bound: &mut Identifier,
        _index: u64,
        _params: &[u64],
        guids: &[Identifier],
    ) -> Result<(), RuntimeError> {
        ctx.edt_create_mapped(bound, guids[0], vec![], Some(vec![Identifier::Null]))?;
        Ok(())
    }

    fn bind_nothing(
        _: &mut CreatorCtx<'_>,
        _: &mut Identifier,
        _: u64,
        _: &[u64],
        _: &[Identifier],
    ) -> Result<(), RuntimeError> {
        Ok(())
    }

    fn bind_twice(
        ctx: &mut CreatorCtx<'_>,
        bound: &mut Identifier,
        _index: u64,
        _params: &[u64],
        guids: &[Identifier],
    ) -> Result<(), RuntimeError> {
        ctx.edt_create_mapped(bound, guids[0], vec![], Some(vec![Identifier::Null]))?;
        ctx.edt_create_mapped(bound, guids[0], vec![], Some(vec![Identifier::Null]))
    }

    fn rt() -> Runtime {
        let mut reg = Registry::new();
        reg.register_task("noop", noop);
        reg.register_creator("bind_task", bind_task);
        reg.register_creator("bind_nothing", bind_nothing);
        reg.register_creator("bind_twice", bind_twice);
        let mut cfg = RunConfig::new("test");
        cfg.nodes = 1;
        cfg.placement = Placement::Local;
        Runtime::new(reg, cfg)
    }

    fn map_with(rt: &mut Runtime, creator: &str) -> GlobalId {
        let tmpl = rt
            .create_locally(
                NodeId(0),
                CreateSpec::Template { name: "noop".into(), paramc: 0, depc: 1 },
            )
            .unwrap()[0];
        rt.create_map(NodeId(0), 4, creator.into(), vec![], vec![Identifier::Global(tmpl)])
            .unwrap()
    }

    #[test]
    fn creation_validates_size_and_creator() {
        let mut rt = rt();
        assert_eq!(
            rt.create_map(NodeId(0), 0, "bind_task".into(), vec![], vec![]),
            Err(RuntimeError::BadSize)
        );
        assert!(matches!(
            rt.create_map(NodeId(0), 4, "missing".into(), vec![], vec![]),
            Err(RuntimeError::UnknownFunction(_))
        ));
    }

    #[test]
    fn first_get_runs_creator_once_and_later_gets_agree() {
        let mut rt = rt();
        let m = map_with(&mut rt, "bind_task");
        rt.handle_map_get(Identifier::Global(m), 2, vec![]).unwrap();
        assert_eq!(rt.stats.creator_invocations, 1);
        let MapSlot::Created(first) = rt.map_mut(m).unwrap().slots[2] else {
            panic!("slot should be bound synchronously on a single node");
        };
        rt.handle_map_get(Identifier::Global(m), 2, vec![]).unwrap();
        assert_eq!(rt.stats.creator_invocations, 1);
        let MapSlot::Created(second) = rt.map_mut(m).unwrap().slots[2] else {
            panic!("slot lost its binding");
        };
        assert_eq!(first, second);
    }

    #[test]
    fn out_of_range_index_is_rejected() {
        let mut rt = rt();
        let m = map_with(&mut rt, "bind_task");
        assert_eq!(
            rt.handle_map_get(Identifier::Global(m), 4, vec![]),
            Err(RuntimeError::BadIndex)
        );
    }

    #[test]
    fn creator_must_bind_exactly_once() {
        let mut rt = rt();
        let m = map_with(&mut rt, "bind_nothing");
        assert_eq!(
            rt.handle_map_get(Identifier::Global(m), 0, vec![]),
            Err(RuntimeError::CreatorContractViolation)
        );
        let m = map_with(&mut rt, "bind_twice");
        assert_eq!(
            rt.handle_map_get(Identifier::Global(m), 0, vec![]),
            Err(RuntimeError::CreatorContractViolation)
        );
    }

    #[test]
    fn get_on_destroyed_map_is_invalid() {
        let mut rt = rt();
        let m = map_with(&mut rt, "bind_task");
        rt.handle_destroy(Identifier::Global(m)).unwrap();
        assert_eq!(
            rt.handle_map_get(Identifier::Global(m), 0, vec![]),
            Err(RuntimeError::InvalidId)
        );
    }
}
