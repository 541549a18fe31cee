//! Central simulation state.
//!
//! One [`Runtime`] owns every virtual node, all objects, the per-channel
//! message queues, and the deferred-identifier table. Handlers live in the
//! subsystem modules as `impl Runtime` blocks; this module only defines the
//! data and a few small allocation helpers.
//!
//! The simulation is single threaded. "Remote" is a routing property: all
//! object records live in one address space, and a message handler runs on
//! behalf of the target node when the delivery loop picks its channel.

use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap, VecDeque};
use std::rc::Rc;

use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;

use crate::error::RuntimeError;
use crate::harness::{Placement, Registry, RunConfig};
use crate::ident::{ExecId, GlobalId, Identifier, LocalId, NodeId, ObjectKind};
use crate::lid::{DeferredEntry, LidState};
use crate::message::{AcquireMode, FileMode, Payload, ReplyTo};

/// Task entry function. Receives the execution context, the parameter list
/// copied from the creation call, and one record per dependence slot.
pub type TaskFn = fn(
    &mut crate::ctx::TaskCtx<'_>,
    &[u64],
    &[crate::datablock::DepRecord],
) -> Result<Identifier, RuntimeError>;

/// Map element creator. Runs on the map's home node when an element is first
/// requested. Must bind exactly one created object to `bound` using the
/// bound-create methods on the context.
pub type CreatorFn = fn(
    &mut crate::ctx::CreatorCtx<'_>,
    &mut Identifier,
    u64,
    &[u64],
    &[Identifier],
) -> Result<(), RuntimeError>;

#[derive(Debug, Clone)]
pub(crate) struct TemplateObj {
    pub name: String,
    pub entry: TaskFn,
    pub paramc: u32,
    pub depc: u32,
}

/// Dependence slot of a task.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Slot {
    /// Nothing wired yet.
    Unconnected,
    /// A source has been wired but has not produced a payload.
    Connected(Identifier),
    /// Payload arrived. `granted` is false while a data-block acquire is
    /// still queued on the block's home node.
    Satisfied {
        payload: Identifier,
        mode: AcquireMode,
        granted: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum TaskState {
    Waiting,
    Acquiring,
    Runnable,
    Done,
}

#[derive(Debug, Clone)]
pub(crate) struct TaskObj {
    pub template_name: String,
    pub entry: TaskFn,
    pub params: Vec<u64>,
    pub slots: Vec<Slot>,
    pub output_event: Option<GlobalId>,
    pub state: TaskState,
    /// Blocks currently granted to this task, including creator views.
    pub granted: Vec<(GlobalId, AcquireMode)>,
}

#[derive(Debug, Clone)]
pub(crate) struct EventObj {
    pub satisfied: Option<Identifier>,
    pub sinks: Vec<Sink>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Sink {
    pub dest: GlobalId,
    pub slot: u32,
    pub mode: AcquireMode,
}

/// Shared, interior-mutable byte buffer backing one or more blocks.
pub(crate) type SharedBytes = Rc<RefCell<Vec<u8>>>;

/// Backing bytes of a data block.
#[derive(Debug, Clone)]
pub(crate) enum Storage {
    Owned(SharedBytes),
    /// Bytes live inside another block at the given offset. Used by explicit
    /// partitions and by zero-copy partition copies.
    Alias { parent: GlobalId, offset: u64 },
    /// Allocation deferred until first use.
    Unallocated,
}

/// Queued acquire on a block, waiting for mode compatibility and gating.
#[derive(Debug, Clone, Copy)]
pub(crate) struct AcqReq {
    pub task: GlobalId,
    pub slot: u32,
    pub mode: AcquireMode,
}

/// One partition issued from a parent block by the batch partition call.
/// Dead entries keep their range reserved; dead entries of a static batch
/// are purged once the whole batch is destroyed.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PartEntry {
    pub child: GlobalId,
    pub offset: u64,
    pub size: u64,
    pub static_batch: bool,
    pub live: bool,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ChunkBacking {
    pub file: GlobalId,
    pub offset: u64,
}

#[derive(Debug, Clone)]
pub(crate) struct BlockObj {
    pub size: u64,
    pub storage: Storage,
    pub grants: Vec<(GlobalId, AcquireMode)>,
    pub queue: VecDeque<AcqReq>,
    pub pending_destroy: bool,
    /// Explicit-partition child: the block this one aliases into.
    pub parent: Option<GlobalId>,
    /// Partitions issued from this block, live and dead.
    pub parts: Vec<PartEntry>,
    /// Copy-partition children not yet copied back.
    pub copy_children: Vec<GlobalId>,
    /// Copy-partition child: the block this one was filled from.
    pub copy_of: Option<GlobalId>,
    /// File chunk backing, when this block maps a file range.
    pub backing: Option<ChunkBacking>,
    pub write_mode_seen: bool,
    /// Set on descriptor blocks of files whose host open failed.
    pub open_failed: bool,
}

impl BlockObj {
    pub fn new(size: u64, storage: Storage) -> BlockObj {
        BlockObj {
            size,
            storage,
            grants: Vec::new(),
            queue: VecDeque::new(),
            pending_destroy: false,
            parent: None,
            parts: Vec::new(),
            copy_children: Vec::new(),
            copy_of: None,
            backing: None,
            write_mode_seen: false,
            open_failed: false,
        }
    }

    pub fn has_live_parts(&self) -> bool {
        self.parts.iter().any(|p| p.live)
    }
}

#[derive(Debug, Clone)]
pub(crate) enum MapSlot {
    Empty,
    /// Creation in flight; waiting replies are answered when the bind
    /// arrives.
    Creating(Vec<ReplyTo>),
    Created(GlobalId),
}

#[derive(Debug, Clone)]
pub(crate) struct MapObj {
    pub creator: CreatorFn,
    pub params: Vec<u64>,
    pub guids: Vec<Identifier>,
    pub slots: Vec<MapSlot>,
}

#[derive(Debug)]
pub(crate) struct ChunkRec {
    pub offset: u64,
    pub size: u64,
    pub block: GlobalId,
    pub live: bool,
}

#[derive(Debug)]
pub(crate) struct FileObj {
    pub mode: FileMode,
    /// Host length as the runtime last saw it, including eager growth.
    pub cur_size: u64,
    pub host: Option<std::fs::File>,
    /// Every chunk ever taken, live and dead; ranges never unburn.
    pub chunks: Vec<ChunkRec>,
    pub released: bool,
    pub open_failed: bool,
}

#[derive(Debug)]
pub(crate) enum Object {
    Template(TemplateObj),
    Task(TaskObj),
    Event(EventObj),
    Block(BlockObj),
    Map(MapObj),
    File(FileObj),
    /// Destroyed object; kept so stale references fail loudly.
    Tombstone(ObjectKind),
}

impl Object {
    pub fn kind(&self) -> ObjectKind {
        match self {
            Object::Template(_) => ObjectKind::TaskTemplate,
            Object::Task(_) => ObjectKind::Task,
            Object::Event(_) => ObjectKind::Event,
            Object::Block(_) => ObjectKind::DataBlock,
            Object::Map(_) => ObjectKind::Map,
            Object::File(_) => ObjectKind::File,
            Object::Tombstone(k) => *k,
        }
    }
}

/// Counters reported in the run summary and used for quiescence analysis.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Stats {
    pub deliveries: u64,
    pub tasks_executed: u64,
    pub tasks_created: u64,
    pub bytes_bulk_copied: u64,
    pub cow_copies: u64,
    pub creator_invocations: u64,
    /// Deferred messages not yet released.
    pub deferred_outstanding: u64,
    /// Acquire requests queued on blocks.
    pub acquires_pending: u64,
}

pub(crate) struct Runtime {
    pub cfg: RunConfig,
    pub registry: Registry,
    pub rng: ChaCha8Rng,
    /// Per-channel FIFO queues keyed by (origin, target).
    pub channels: BTreeMap<(NodeId, NodeId), VecDeque<Payload>>,
    /// Per-node queues of runnable tasks.
    pub runnable: Vec<VecDeque<GlobalId>>,
    /// Per-node object sequence counters; the next issued value is counter+1.
    pub node_seq: Vec<u64>,
    /// Per-node placement counters for round-robin homing.
    pub node_place: Vec<u64>,
    pub objects: HashMap<GlobalId, Object>,
    pub lids: HashMap<LocalId, LidState>,
    pub deferred: Vec<Option<DeferredEntry>>,
    pub exec_counter: u64,
    pub shutdown: bool,
    pub error: Option<RuntimeError>,
    pub stats: Stats,
    pub results: BTreeMap<String, String>,
    pub trace: Vec<String>,
    pub step: u64,
}

impl Runtime {
    pub fn new(registry: Registry, cfg: RunConfig) -> Runtime {
        let n = cfg.nodes as usize;
        Runtime {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            registry,
            channels: BTreeMap::new(),
            runnable: vec![VecDeque::new(); n],
            node_seq: vec![0; n],
            node_place: vec![0; n],
            objects: HashMap::new(),
            lids: HashMap::new(),
            deferred: Vec::new(),
            exec_counter: 0,
            shutdown: false,
            error: None,
            stats: Stats::default(),
            results: BTreeMap::new(),
            trace: Vec::new(),
            step: 0,
            cfg,
        }
    }

    pub fn next_gid(&mut self, node: NodeId, kind: ObjectKind) -> GlobalId {
        let c = &mut self.node_seq[node.0 as usize];
        *c += 1;
        GlobalId { node, seq: *c, kind }
    }

    pub fn next_exec(&mut self) -> ExecId {
        self.exec_counter += 1;
        ExecId(self.exec_counter)
    }

    /// Home node for the next object created from `from` under the configured
    /// placement policy.
    pub fn placement_home(&mut self, from: NodeId) -> NodeId {
        match self.cfg.placement {
            Placement::Local => from,
            Placement::RoundRobin => {
                let c = &mut self.node_place[from.0 as usize];
                *c += 1;
                NodeId((from.0 + (*c % self.cfg.nodes as u64) as u32) % self.cfg.nodes)
            }
        }
    }

    pub fn tr(&mut self, line: String) {
        self.trace.push(format!("step={} {}", self.step, line));
    }

    pub fn fail(&mut self, err: RuntimeError) {
        if self.error.is_none() {
            self.error = Some(err);
        }
    }

    pub fn report(&mut self, key: &str, value: String) {
        self.results.insert(key.to_string(), value);
    }

    pub fn outcome(&self) -> crate::error::Outcome {
        match &self.error {
            None => crate::error::Outcome::Success,
            Some(RuntimeError::DeadlockDetected) => crate::error::Outcome::DeadlockDetected,
            Some(e) => crate::error::Outcome::Error(e.clone()),
        }
    }

    /// Live object lookup. Destroyed and never-issued ids both read as
    /// invalid; handlers that must report a stale target distinctly probe
    /// [`Runtime::is_destroyed`] first.
    pub fn object(&self, g: GlobalId) -> Result<&Object, RuntimeError> {
        match self.objects.get(&g) {
            Some(Object::Tombstone(_)) | None => Err(RuntimeError::InvalidId),
            Some(o) => Ok(o),
        }
    }

    pub fn object_mut(&mut self, g: GlobalId) -> Result<&mut Object, RuntimeError> {
        match self.objects.get_mut(&g) {
            Some(Object::Tombstone(_)) | None => Err(RuntimeError::InvalidId),
            Some(o) => Ok(o),
        }
    }

    /// True when the id was issued and later destroyed.
    pub fn is_destroyed(&self, g: GlobalId) -> bool {
        matches!(self.objects.get(&g), Some(Object::Tombstone(_)))
    }

    pub fn block(&self, g: GlobalId) -> Result<&BlockObj, RuntimeError> {
        match self.object(g)? {
            Object::Block(b) => Ok(b),
            _ => Err(RuntimeError::InvalidId),
        }
    }

    pub fn block_mut(&mut self, g: GlobalId) -> Result<&mut BlockObj, RuntimeError> {
        match self.object_mut(g)? {
            Object::Block(b) => Ok(b),
            _ => Err(RuntimeError::InvalidId),
        }
    }

    pub fn task_mut(&mut self, g: GlobalId) -> Result<&mut TaskObj, RuntimeError> {
        match self.object_mut(g)? {
            Object::Task(t) => Ok(t),
            _ => Err(RuntimeError::InvalidId),
        }
    }

    pub fn event_mut(&mut self, g: GlobalId) -> Result<&mut EventObj, RuntimeError> {
        match self.object_mut(g)? {
            Object::Event(e) => Ok(e),
            _ => Err(RuntimeError::InvalidId),
        }
    }

    pub fn map_mut(&mut self, g: GlobalId) -> Result<&mut MapObj, RuntimeError> {
        match self.object_mut(g)? {
            Object::Map(m) => Ok(m),
            _ => Err(RuntimeError::InvalidId),
        }
    }

    pub fn file_mut(&mut self, g: GlobalId) -> Result<&mut FileObj, RuntimeError> {
        match self.object_mut(g)? {
            Object::File(f) => Ok(f),
            _ => Err(RuntimeError::InvalidId),
        }
    }
}
