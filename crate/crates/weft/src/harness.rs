//! Run configuration, function registry, and the top-level run harness.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use crate::error::{Outcome, RuntimeError};
use crate::state::{CreatorFn, Runtime, TaskFn};

/// When do identifiers of remote creations materialize.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    /// Creation calls pump the delivery loop and return global ids.
    Eager,
    /// Creation calls return local ids immediately; uses are parked until
    /// the resolution arrives.
    Deferred,
}

/// Home-node choice for objects created by a task.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    /// Everything lives on the creating node.
    Local,
    /// Creations rotate over all nodes, per creating node.
    RoundRobin,
}

/// Strategy for `Partition`-kind bulk copies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionImpl {
    /// Copy bytes at copy-out time.
    Eager,
    /// Alias the source and copy only on conflicting access.
    ZeroCopy,
}

/// Everything that pins down a run. Program, node count, seed, and the
/// option fields below fully determine the delivery schedule and thus the
/// trace.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub program: String,
    pub nodes: u32,
    pub seed: u64,
    pub mode: RunMode,
    pub placement: Placement,
    pub partition_impl: PartitionImpl,
    /// Where the CLI writes the trace; the library always collects it.
    pub trace: Option<PathBuf>,
    /// Host file handed to programs that operate on one.
    pub fixture: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(program: &str) -> RunConfig {
        RunConfig {
            program: program.to_string(),
            nodes: 2,
            seed: 1,
            mode: RunMode::Deferred,
            placement: Placement::RoundRobin,
            partition_impl: PartitionImpl::ZeroCopy,
            trace: None,
            fixture: None,
        }
    }
}

/// A runnable example program: the name of its entry task function.
#[derive(Debug, Clone)]
pub struct ProgramDef {
    pub main: String,
    pub description: String,
}

/// Name-to-function tables. Task and creator functions are registered
/// under the names templates and maps refer to them by; programs tie an
/// entry function to a runnable name.
#[derive(Clone, Default)]
pub struct Registry {
    tasks: BTreeMap<String, TaskFn>,
    creators: BTreeMap<String, CreatorFn>,
    programs: BTreeMap<String, ProgramDef>,
}

impl Registry {
    pub fn new() -> Registry {
        Registry::default()
    }

    pub fn register_task(&mut self, name: &str, f: TaskFn) {
        self.tasks.insert(name.to_string(), f);
    }

    pub fn register_creator(&mut self, name: &str, f: CreatorFn) {
        self.creators.insert(name.to_string(), f);
    }

    pub fn register_program(&mut self, name: &str, main: &str, description: &str) {
        self.programs.insert(
            name.to_string(),
            ProgramDef { main: main.to_string(), description: description.to_string() },
        );
    }

    pub fn task_fn(&self, name: &str) -> Result<TaskFn, RuntimeError> {
        self.tasks
            .get(name)
            .copied()
            .ok_or_else(|| RuntimeError::UnknownFunction(name.to_string()))
    }

    pub fn creator_fn(&self, name: &str) -> Result<CreatorFn, RuntimeError> {
        self.creators
            .get(name)
            .copied()
            .ok_or_else(|| RuntimeError::UnknownFunction(name.to_string()))
    }

    pub fn program(&self, name: &str) -> Result<&ProgramDef, RuntimeError> {
        self.programs
            .get(name)
            .ok_or_else(|| RuntimeError::UnknownFunction(name.to_string()))
    }

    /// Registered program names, sorted.
    pub fn program_names(&self) -> Vec<(String, String)> {
        self.programs
            .iter()
            .map(|(k, v)| (k.clone(), v.description.clone()))
            .collect()
    }
}

/// What a finished run reports.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub outcome: Outcome,
    pub tasks_created: u64,
    pub tasks_executed: u64,
    pub deliveries: u64,
    pub bytes_bulk_copied: u64,
    pub cow_copies: u64,
    pub creator_invocations: u64,
    /// Values reported by task code via `TaskCtx::report`.
    pub result_values: BTreeMap<String, String>,
    /// One line per scheduling step.
    pub trace: Vec<String>,
}

impl fmt::Display for RunSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "outcome={}", self.outcome)?;
        writeln!(f, "tasks_executed={}", self.tasks_executed)?;
        writeln!(f, "deliveries={}", self.deliveries)?;
        writeln!(f, "bytes_bulk_copied={}", self.bytes_bulk_copied)?;
        writeln!(f, "cow_copies={}", self.cow_copies)?;
        writeln!(f, "creator_invocations={}", self.creator_invocations)?;
        for (k, v) in &self.result_values {
            writeln!(f, "result.{k}={v}")?;
        }
        Ok(())
    }
}

/// Runs `cfg.program` out of `registry` to completion and summarizes.
/// `Err` is returned only for setup problems (unknown program); anything
/// that happens during the run is reported in the summary's outcome.
pub fn run(registry: Registry, cfg: RunConfig) -> Result<RunSummary, RuntimeError> {
    let main = registry.program(&cfg.program)?.main.clone();
    let mut rt = Runtime::new(registry, cfg);
    match rt.bootstrap(&main) {
        Ok(()) => rt.run_to_quiescence(),
        Err(e) => rt.fail(e),
    }
    Ok(RunSummary {
        outcome: rt.outcome(),
        tasks_created: rt.stats.tasks_created,
        tasks_executed: rt.stats.tasks_executed,
        deliveries: rt.stats.deliveries,
        bytes_bulk_copied: rt.stats.bytes_bulk_copied,
        cow_copies: rt.stats.cow_copies,
        creator_invocations: rt.stats.creator_invocations,
        result_values: rt.results.clone(),
        trace: rt.trace.clone(),
    })
}

/// Runs one of the example programs shipped with the crate.
pub fn run_builtin(cfg: RunConfig) -> Result<RunSummary, RuntimeError> {
    run(crate::programs::builtin_registry(), cfg)
}
