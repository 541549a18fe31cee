//! Deterministic simulation of a distributed task-dataflow runtime.
//!
//! `weft` models a cluster of nodes that exchange asynchronous messages to
//! run a dataflow program: tasks with dependence slots, once-events, and
//! byte-array data blocks that tasks acquire in reader/writer modes. The
//! whole cluster runs inside one thread — "remote" is a routing property,
//! and a seeded scheduler picks the next message delivery, so every run
//! with the same program, node count, and seed replays the same schedule,
//! byte for byte, in the trace.
//!
//! On top of the base model the library provides four extensions:
//!
//! * **Deferred local identifiers** — remote object creation returns a
//!   placeholder id immediately; calls naming it are parked and released,
//!   patched, when the real id arrives ([`TaskCtx`]).
//! * **Labeled object maps** — get-or-create tables that funnel racing
//!   creations of the same logical object through one creator invocation
//!   ([`TaskCtx::map_get`]).
//! * **File-mapped blocks** — host-file ranges materialized as data
//!   blocks, written back on destruction ([`TaskCtx::file_get_chunk`]).
//! * **Block partitioning with copy-on-write** — blocks split into
//!   aliasing children, plus bulk copies that defer the actual byte copy
//!   until someone would observe the difference ([`TaskCtx::db_partition`],
//!   [`TaskCtx::db_copy`]).
//!
//! The crate ships a set of example programs (see [`programs`]) and a CLI
//! harness (`weft run <program>`) around [`run_builtin`]. Start with
//! [`RunConfig`] and [`run`].
//!
//! # Example
//!
//! ```
//! use weft::{run_builtin, Outcome, RunConfig};
//!
//! # fn main() -> Result<(), weft::RuntimeError> {
//! // Defaults: 2 nodes, seed 1, deferred identifiers, round-robin
//! // placement, zero-copy partitioning.
//! let summary = run_builtin(RunConfig::new("partition-sum"))?;
//!
//! assert_eq!(summary.outcome, Outcome::Success);
//! assert_eq!(summary.result_values["sum"], "4096");
//! assert!(!summary.trace.is_empty());
//! # Ok(())
//! # }
//! ```
//!
//! The `book/` directory of the repository holds a guide with one chapter
//! per mechanism; its code snippets compile and run as part of this
//! crate's doc-tests, so guide and library cannot drift apart.

mod ctx;
mod datablock;
mod error;
mod file;
mod harness;
mod ident;
mod lid;
mod map;
mod message;
mod partition;
pub mod programs;
mod state;
mod substrate;
mod task;

pub use ctx::{CreatorCtx, TaskCtx};
pub use datablock::{ByteView, DepRecord};
pub use error::{Outcome, RuntimeError};
pub use harness::{
    run, run_builtin, PartitionImpl, Placement, ProgramDef, Registry, RunConfig, RunMode,
    RunSummary,
};
pub use ident::{ExecId, GlobalId, Identifier, LocalId, NodeId, ObjectKind};
pub use message::{AcquireMode, CopyKind, FileMode};
pub use partition::validate_partition_batch;
pub use state::{CreatorFn, TaskFn};

/// The guide's chapters double as doc-tests: every fenced Rust block in
/// `book/src/*.md` is compiled and run by `cargo test`, keeping the book
/// and the library in lockstep.
#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $path:literal) => {
            #[doc = include_str!($path)]
            mod $name {}
        };
    }

    chapter!(readme, "../../../README.md");
    chapter!(introduction, "../../../book/src/introduction.md");
    chapter!(substrate, "../../../book/src/substrate.md");
    chapter!(identifiers, "../../../book/src/identifiers.md");
    chapter!(tasks, "../../../book/src/tasks.md");
    chapter!(maps, "../../../book/src/maps.md");
    chapter!(files, "../../../book/src/files.md");
    chapter!(partitioning, "../../../book/src/partitioning.md");
    chapter!(cli, "../../../book/src/cli.md");
}
