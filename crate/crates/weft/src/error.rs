use thiserror::Error;

/// Errors surfaced by runtime operations and message handlers.
///
/// An error raised inside a message handler aborts the run; the harness
/// reports it in the summary as `outcome=Error:<code>`. Errors returned
/// from a context method propagate out of the task body and abort the
/// run the same way.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuntimeError {
    #[error("unknown, destroyed, or wrongly typed identifier")]
    InvalidId,
    #[error("parameter or dependence count does not match the template")]
    BadArity,
    #[error("slot index out of range for the destination")]
    BadSlot,
    #[error("slot already connected or satisfied")]
    SlotOccupied,
    #[error("once-event satisfied twice")]
    AlreadySatisfied,
    #[error("object size must be positive")]
    BadSize,
    #[error("map index out of range")]
    BadIndex,
    #[error("release without a matching grant")]
    NotAcquired,
    #[error("local identifier used outside its owning context")]
    LidOwnershipViolation,
    #[error("creator returned without binding an object")]
    CreatorContractViolation,
    #[error("idle with unresolved identifiers or unfinished tasks and no shutdown")]
    DeadlockDetected,
    #[error("file chunk overlaps an existing chunk")]
    ChunkOverlap,
    #[error("byte range out of bounds")]
    BadRange,
    #[error("file already released")]
    FileReleased,
    #[error("host open failed")]
    OpenFailed,
    #[error("descriptor block has the wrong size or content")]
    BadDescriptor,
    #[error("unsupported file open mode")]
    BadMode,
    #[error("partition descriptor overlaps a live or reserved partition")]
    PartitionOverlap,
    #[error("block is statically partitioned and partitions are still live")]
    StaticPartitioned,
    #[error("task requires both a block and one of its partitions")]
    PartitionDeadlock,
    #[error("partitioned block used before its partitions were copied back")]
    PartitionProtocolViolation,
    #[error("message targets a destroyed object")]
    TargetDestroyed,
    #[error("write through a read-only view")]
    ReadOnlyView,
    #[error("task or creator function not registered: {0}")]
    UnknownFunction(String),
    #[error("host io failure: {0}")]
    Io(String),
}

impl RuntimeError {
    /// Short stable name used in summaries and exit-code mapping.
    pub fn code(&self) -> &'static str {
        match self {
            RuntimeError::InvalidId => "InvalidId",
            RuntimeError::BadArity => "BadArity",
            RuntimeError::BadSlot => "BadSlot",
            RuntimeError::SlotOccupied => "SlotOccupied",
            RuntimeError::AlreadySatisfied => "AlreadySatisfied",
            RuntimeError::BadSize => "BadSize",
            RuntimeError::BadIndex => "BadIndex",
            RuntimeError::NotAcquired => "NotAcquired",
            RuntimeError::LidOwnershipViolation => "LidOwnershipViolation",
            RuntimeError::CreatorContractViolation => "CreatorContractViolation",
            RuntimeError::DeadlockDetected => "DeadlockDetected",
            RuntimeError::ChunkOverlap => "ChunkOverlap",
            RuntimeError::BadRange => "BadRange",
            RuntimeError::FileReleased => "FileReleased",
            RuntimeError::OpenFailed => "OpenFailed",
            RuntimeError::BadDescriptor => "BadDescriptor",
            RuntimeError::BadMode => "BadMode",
            RuntimeError::PartitionOverlap => "PartitionOverlap",
            RuntimeError::StaticPartitioned => "StaticPartitioned",
            RuntimeError::PartitionDeadlock => "PartitionDeadlock",
            RuntimeError::PartitionProtocolViolation => "PartitionProtocolViolation",
            RuntimeError::TargetDestroyed => "TargetDestroyed",
            RuntimeError::ReadOnlyView => "ReadOnlyView",
            RuntimeError::UnknownFunction(_) => "UnknownFunction",
            RuntimeError::Io(_) => "IoError",
        }
    }
}

/// Final disposition of a run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Success,
    DeadlockDetected,
    Error(RuntimeError),
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Outcome::Success => write!(f, "Success"),
            Outcome::DeadlockDetected => write!(f, "DeadlockDetected"),
            Outcome::Error(e) => write!(f, "Error:{}", e.code()),
        }
    }
}
