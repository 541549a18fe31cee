//! Message shapes exchanged between simulated nodes.
//!
//! Every runtime operation that crosses a node boundary travels as one of
//! nine message kinds. Payloads may name identifiers that are still deferred
//! local ids at submission time; the resolution machinery patches them to
//! global ids before delivery, so handlers only ever see resolved payloads.

use crate::ident::{GlobalId, Identifier, LocalId, NodeId};

/// Access mode requested for a data-block dependence.
///
/// `Default` resolves to `Ro` for data-block payloads and to `Null` for
/// event-only slots. `Null` establishes ordering without a view. Any number
/// of `Ro`/`Const`/`Rw` grants may coexist; `Ew` excludes everything else.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AcquireMode {
    Default,
    Null,
    Ro,
    Const,
    Rw,
    Ew,
}

impl AcquireMode {
    pub fn is_writing(self) -> bool {
        matches!(self, AcquireMode::Rw | AcquireMode::Ew)
    }
}

impl std::fmt::Display for AcquireMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            AcquireMode::Default => "Default",
            AcquireMode::Null => "Null",
            AcquireMode::Ro => "RO",
            AcquireMode::Const => "CONST",
            AcquireMode::Rw => "RW",
            AcquireMode::Ew => "EW",
        };
        f.write_str(s)
    }
}

/// Flavor of a bulk copy.
///
/// `Partition` marks the destination as a logical partition of the source
/// that will be copied back before it is destroyed; `PartitionBack` performs
/// that write-back and destroys the source of the copy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CopyKind {
    Plain,
    Partition,
    PartitionBack,
}

impl std::fmt::Display for CopyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            CopyKind::Plain => "Plain",
            CopyKind::Partition => "Partition",
            CopyKind::PartitionBack => "PartitionBack",
        };
        f.write_str(s)
    }
}

/// Host file open disposition. `ReadWriteCreate` truncates like `wb+`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileMode {
    ReadOnly,
    ReadWrite,
    ReadWriteCreate,
}

impl FileMode {
    pub fn writable(self) -> bool {
        !matches!(self, FileMode::ReadOnly)
    }

    pub fn label(self) -> &'static str {
        match self {
            FileMode::ReadOnly => "rb",
            FileMode::ReadWrite => "rb+",
            FileMode::ReadWriteCreate => "wb+",
        }
    }
}

/// Where a creation handler should report the assigned global id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReplyTo {
    /// Resolve a deferred local id at its origin node.
    Lid { lid: LocalId, origin: NodeId },
    /// Bind a labeled-map slot on the map's home node.
    MapSlot { map: GlobalId, index: u64 },
}

/// Subject of a resolution message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Subject {
    Lid(LocalId),
    MapSlot { map: GlobalId, index: u64 },
}

/// Parameters of an object creation, processed on the object's home node.
#[derive(Debug, Clone, PartialEq)]
pub enum CreateSpec {
    Template {
        name: String,
        paramc: u32,
        depc: u32,
    },
    Edt {
        template: Identifier,
        params: Vec<u64>,
        deps: Option<Vec<Identifier>>,
        output_event: bool,
    },
    Event,
    Block {
        size: u64,
        no_acquire: bool,
        /// Task receiving the creator view, when one is handed out.
        creator: Option<GlobalId>,
    },
    Map {
        size: u64,
        creator: String,
        params: Vec<u64>,
        guids: Vec<Identifier>,
    },
    /// Get-or-create of a labeled map element.
    MapElement { map: Identifier, index: u64 },
    /// Batch creation of explicit partitions of a parent block.
    Partitions {
        parent: Identifier,
        descs: Vec<(u64, u64)>,
        static_partitioning: bool,
    },
}

/// File subsystem operations, routed to the file's home node.
#[derive(Debug, Clone, PartialEq)]
pub enum FileOp {
    Open {
        path: String,
        mode: FileMode,
        want_descriptor: bool,
        replies: Vec<ReplyTo>,
    },
    Chunk {
        file: Identifier,
        offset: u64,
        size: u64,
        reply: Option<ReplyTo>,
    },
    Release { file: Identifier },
}

/// Message payload. The enum arms are the nine wire kinds.
#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    CreateObject {
        spec: CreateSpec,
        /// One entry per object the creation produces, in creation order.
        replies: Vec<ReplyTo>,
    },
    AddDependence {
        source: Identifier,
        dest: Identifier,
        slot: u32,
        mode: AcquireMode,
    },
    Satisfy {
        dest: Identifier,
        slot: Option<u32>,
        payload: Identifier,
        mode: Option<AcquireMode>,
        /// True when this satisfaction finalizes a granted acquire.
        grant: bool,
    },
    MapResolution {
        subject: Subject,
        guid: GlobalId,
    },
    AcquireRequest {
        block: Identifier,
        task: GlobalId,
        slot: u32,
        mode: AcquireMode,
    },
    ReleaseNotice {
        block: Identifier,
        holder: GlobalId,
    },
    DestroyObject { id: Identifier },
    CopyData {
        dest: Identifier,
        dest_offset: u64,
        source: Identifier,
        source_offset: u64,
        size: u64,
        kind: CopyKind,
        completion: Identifier,
    },
    FileOp(FileOp),
}

impl Payload {
    pub fn kind_label(&self) -> &'static str {
        match self {
            Payload::CreateObject { .. } => "CreateObject",
            Payload::AddDependence { .. } => "AddDependence",
            Payload::Satisfy { .. } => "Satisfy",
            Payload::MapResolution { .. } => "MapResolution",
            Payload::AcquireRequest { .. } => "AcquireRequest",
            Payload::ReleaseNotice { .. } => "ReleaseNotice",
            Payload::DestroyObject { .. } => "DestroyObject",
            Payload::CopyData { .. } => "CopyData",
            Payload::FileOp(_) => "FileOp",
        }
    }

    /// Visits every patchable identifier in the payload. Reply tokens and
    /// resolution subjects are bookkeeping, not object references, and are
    /// deliberately skipped.
    pub fn for_each_id(&mut self, f: &mut dyn FnMut(&mut Identifier)) {
        match self {
            Payload::CreateObject { spec, .. } => match spec {
                CreateSpec::Template { .. } | CreateSpec::Event | CreateSpec::Block { .. } => {}
                CreateSpec::Edt { template, deps, .. } => {
                    f(template);
                    if let Some(deps) = deps {
                        for d in deps {
                            f(d);
                        }
                    }
                }
                CreateSpec::Map { guids, .. } => {
                    for g in guids {
                        f(g);
                    }
                }
                CreateSpec::MapElement { map, .. } => f(map),
                CreateSpec::Partitions { parent, .. } => f(parent),
            },
            Payload::AddDependence { source, dest, .. } => {
                f(source);
                f(dest);
            }
            Payload::Satisfy { dest, payload, .. } => {
                f(dest);
                f(payload);
            }
            Payload::MapResolution { .. } => {}
            Payload::AcquireRequest { block, .. } => f(block),
            Payload::ReleaseNotice { block, .. } => f(block),
            Payload::DestroyObject { id } => f(id),
            Payload::CopyData { dest, source, completion, .. } => {
                f(dest);
                f(source);
                f(completion);
            }
            Payload::FileOp(op) => match op {
                FileOp::Open { .. } => {}
                FileOp::Chunk { file, .. } => f(file),
                FileOp::Release { file } => f(file),
            },
        }
    }

    /// Unresolved local ids named by the payload, deduplicated.
    pub fn unresolved_lids(&mut self, is_resolved: &dyn Fn(LocalId) -> bool) -> Vec<LocalId> {
        let mut out: Vec<LocalId> = Vec::new();
        self.for_each_id(&mut |id| {
            if let Identifier::Local(l) = id {
                if !is_resolved(*l) && !out.contains(l) {
                    out.push(*l);
                }
            }
        });
        out
    }

    /// Compact single-line description used by the trace.
    pub fn summary(&self) -> String {
        match self {
            Payload::CreateObject { spec, replies } => {
                let reply = replies
                    .iter()
                    .map(|r| match r {
                        ReplyTo::Lid { lid, .. } => lid.to_string(),
                        ReplyTo::MapSlot { map, index } => format!("{map}[{index}]"),
                    })
                    .collect::<Vec<_>>()
                    .join(",");
                let body = match spec {
                    CreateSpec::Template { name, paramc, depc } => {
                        format!("template {name} paramc={paramc} depc={depc}")
                    }
                    CreateSpec::Edt { template, params, deps, output_event } => format!(
                        "edt tmpl={} params={} deps={} ev={}",
                        template,
                        params.len(),
                        deps.as_ref().map(|d| d.len() as i64).unwrap_or(-1),
                        output_event
                    ),
                    CreateSpec::Event => "event".to_string(),
                    CreateSpec::Block { size, no_acquire, .. } => {
                        format!("block size={size} no_acquire={no_acquire}")
                    }
                    CreateSpec::Map { size, creator, .. } => {
                        format!("map size={size} creator={creator}")
                    }
                    CreateSpec::MapElement { map, index } => {
                        format!("map-get map={map} index={index}")
                    }
                    CreateSpec::Partitions { parent, descs, static_partitioning } => format!(
                        "partitions parent={} n={} static={}",
                        parent,
                        descs.len(),
                        static_partitioning
                    ),
                };
                format!("{body} reply=[{reply}]")
            }
            Payload::AddDependence { source, dest, slot, mode } => {
                format!("src={source} dest={dest} slot={slot} mode={mode}")
            }
            Payload::Satisfy { dest, slot, payload, mode, grant } => {
                let mut s = format!("dest={dest}");
                if let Some(k) = slot {
                    s.push_str(&format!(" slot={k}"));
                }
                s.push_str(&format!(" payload={payload}"));
                if let Some(m) = mode {
                    s.push_str(&format!(" mode={m}"));
                }
                if *grant {
                    s.push_str(" grant=true");
                }
                s
            }
            Payload::MapResolution { subject, guid } => match subject {
                Subject::Lid(l) => format!("{l} -> {guid}"),
                Subject::MapSlot { map, index } => format!("{map}[{index}] -> {guid}"),
            },
            Payload::AcquireRequest { block, task, slot, mode } => {
                format!("block={block} task={task} slot={slot} mode={mode}")
            }
            Payload::ReleaseNotice { block, holder } => {
                format!("block={block} holder={holder}")
            }
            Payload::DestroyObject { id } => format!("id={id}"),
            Payload::CopyData { dest, dest_offset, source, source_offset, size, kind, completion } => {
                format!(
                    "dest={dest}+{dest_offset} src={source}+{source_offset} size={size} kind={kind} ev={completion}"
                )
            }
            Payload::FileOp(op) => match op {
                FileOp::Open { path, mode, want_descriptor, .. } => {
                    format!("open path={} mode={} desc={}", path, mode.label(), want_descriptor)
                }
                FileOp::Chunk { file, offset, size, .. } => {
                    format!("chunk file={file} offset={offset} size={size}")
                }
                FileOp::Release { file } => format!("release file={file}"),
            },
        }
    }
}
