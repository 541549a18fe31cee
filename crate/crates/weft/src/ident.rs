//! Identifier model: global ids, deferred local ids, and classification.
//!
//! Every runtime object is named by a [`GlobalId`]: the node that created it,
//! a per-node sequence number, and the object kind. Sequence numbers start at
//! one so the all-zero 16-byte encoding is unambiguously the null identifier.
//!
//! A [`LocalId`] is a placeholder handed out when an object is created on a
//! remote node and the caller does not want to wait for the round trip. It is
//! only meaningful inside the execution context that received it; the
//! resolution machinery in the `lid` module patches local ids out of message
//! payloads before they are delivered.

use crate::error::RuntimeError;

/// Kind tag carried inside every global identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ObjectKind {
    Task,
    TaskTemplate,
    Event,
    DataBlock,
    Map,
    File,
}

impl ObjectKind {
    pub fn label(self) -> &'static str {
        match self {
            ObjectKind::Task => "Task",
            ObjectKind::TaskTemplate => "TaskTemplate",
            ObjectKind::Event => "Event",
            ObjectKind::DataBlock => "DataBlock",
            ObjectKind::Map => "Map",
            ObjectKind::File => "File",
        }
    }

    fn wire_code(self) -> u32 {
        match self {
            ObjectKind::Task => 1,
            ObjectKind::TaskTemplate => 2,
            ObjectKind::Event => 3,
            ObjectKind::DataBlock => 4,
            ObjectKind::Map => 5,
            ObjectKind::File => 6,
        }
    }

    fn from_wire(code: u32) -> Option<ObjectKind> {
        Some(match code {
            1 => ObjectKind::Task,
            2 => ObjectKind::TaskTemplate,
            3 => ObjectKind::Event,
            4 => ObjectKind::DataBlock,
            5 => ObjectKind::Map,
            6 => ObjectKind::File,
            _ => return None,
        })
    }
}

impl std::fmt::Display for ObjectKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Virtual node index inside one simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Identity of one execution context: a task run or a creator invocation.
/// Local identifiers are owned by the context that allocated them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ExecId(pub u64);

/// Globally unique object name. The node field doubles as the home node
/// for message routing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GlobalId {
    pub node: NodeId,
    pub seq: u64,
    pub kind: ObjectKind,
}

impl std::fmt::Display for GlobalId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "G{}.{}:{}", self.node, self.seq, self.kind)
    }
}

/// Deferred identifier: a future for a [`GlobalId`] that is still being
/// assigned on a remote node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LocalId {
    pub owner: ExecId,
    pub seq: u64,
}

impl std::fmt::Display for LocalId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "L{}.{}", self.owner.0, self.seq)
    }
}

/// An identifier as seen by task code: resolved, deferred, absent, or a
/// placeholder for a dependence slot that will be connected later.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Identifier {
    Global(GlobalId),
    Local(LocalId),
    Null,
    Uninitialized,
}

impl Identifier {
    pub fn is_null(self) -> bool {
        self == Identifier::Null
    }

    pub fn is_uninitialized(self) -> bool {
        self == Identifier::Uninitialized
    }

    pub fn as_global(self) -> Option<GlobalId> {
        match self {
            Identifier::Global(g) => Some(g),
            _ => None,
        }
    }

    pub fn as_local(self) -> Option<LocalId> {
        match self {
            Identifier::Local(l) => Some(l),
            _ => None,
        }
    }

    /// Serialized form used when identifiers are stored in data-block bytes:
    /// node, kind code, then sequence, all little endian. Null encodes as all
    /// zeroes. Local identifiers are never serialized.
    pub fn encode(self) -> Result<[u8; 16], RuntimeError> {
        match self {
            Identifier::Null => Ok([0; 16]),
            Identifier::Global(g) => {
                let mut out = [0u8; 16];
                out[0..4].copy_from_slice(&g.node.0.to_le_bytes());
                out[4..8].copy_from_slice(&g.kind.wire_code().to_le_bytes());
                out[8..16].copy_from_slice(&g.seq.to_le_bytes());
                Ok(out)
            }
            Identifier::Local(_) | Identifier::Uninitialized => Err(RuntimeError::InvalidId),
        }
    }

    pub fn decode(bytes: &[u8; 16]) -> Result<Identifier, RuntimeError> {
        if bytes.iter().all(|b| *b == 0) {
            return Ok(Identifier::Null);
        }
        let node = u32::from_le_bytes(bytes[0..4].try_into().unwrap());
        let kind = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        let seq = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
        let kind = ObjectKind::from_wire(kind).ok_or(RuntimeError::InvalidId)?;
        if seq == 0 {
            return Err(RuntimeError::InvalidId);
        }
        Ok(Identifier::Global(GlobalId { node: NodeId(node), seq, kind }))
    }
}

impl std::fmt::Display for Identifier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Identifier::Global(g) => write!(f, "{g}"),
            Identifier::Local(l) => write!(f, "{l}"),
            Identifier::Null => write!(f, "NULL"),
            Identifier::Uninitialized => write!(f, "UNINIT"),
        }
    }
}

impl From<GlobalId> for Identifier {
    fn from(g: GlobalId) -> Identifier {
        Identifier::Global(g)
    }
}
