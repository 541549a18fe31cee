//! Property tests for the public invariants: identifier serialization,
//! partition-batch validation, and schedule-independent program outcomes.

use proptest::prelude::*;
use weft::{
    run_builtin, validate_partition_batch, GlobalId, Identifier, NodeId, ObjectKind, Outcome,
    Placement, RunConfig, RunMode,
};

fn any_kind() -> impl Strategy<Value = ObjectKind> {
    prop_oneof![
        Just(ObjectKind::Task),
        Just(ObjectKind::TaskTemplate),
        Just(ObjectKind::Event),
        Just(ObjectKind::DataBlock),
        Just(ObjectKind::Map),
        Just(ObjectKind::File),
    ]
}

/// Same interval soundness oracle as the acceptance fuzz: non-empty,
/// in-bounds, pairwise disjoint.
fn intervals_ok(parent: u64, descs: &[(u64, u64)]) -> bool {
    let mut all: Vec<(u64, u64)> = Vec::new();
    for &(off, size) in descs {
        if size == 0 {
            return false;
        }
        match off.checked_add(size) {
            Some(end) if end <= parent => all.push((off, end)),
            _ => return false,
        }
    }
    all.sort();
    all.windows(2).all(|w| w[0].1 <= w[1].0)
}

proptest! {
    /// Global identifiers survive the 16-byte block encoding.
    #[test]
    fn identifier_roundtrip(node in any::<u32>(), seq in 1u64.., kind in any_kind()) {
        let id = Identifier::Global(GlobalId { node: NodeId(node), seq, kind });
        let bytes = id.encode().unwrap();
        prop_assert_eq!(Identifier::decode(&bytes).unwrap(), id);
    }

    /// Anything that decodes re-encodes to the identical bytes, so stored
    /// identifiers cannot drift through a round trip.
    #[test]
    fn decode_then_encode_is_identity(bytes in any::<[u8; 16]>()) {
        if let Ok(id) = Identifier::decode(&bytes) {
            prop_assert_eq!(id.encode().unwrap(), bytes);
        }
    }

    /// The all-zero block is the null identifier, and vice versa.
    #[test]
    fn null_is_all_zero(_x in 0..1u8) {
        prop_assert_eq!(Identifier::Null.encode().unwrap(), [0u8; 16]);
        prop_assert_eq!(Identifier::decode(&[0u8; 16]).unwrap(), Identifier::Null);
    }

    /// Partition batches are admitted exactly when the independent
    /// interval oracle calls them sound.
    #[test]
    fn partition_validation_matches_oracle(
        parent in 1u64..300,
        descs in proptest::collection::vec((0u64..400, 0u64..200), 1..6),
    ) {
        let admitted = validate_partition_batch(parent, &[], &descs).is_ok();
        prop_assert_eq!(admitted, intervals_ok(parent, &descs));
    }

    /// Reserved ranges block later batches exactly like in-batch ranges:
    /// re-reserving the same range fails, the leading gap is fine.
    #[test]
    fn reserved_ranges_conflict(
        parent in 50u64..300,
        off in 0u64..200,
        size in 1u64..100,
    ) {
        prop_assume!(off + size <= parent);
        let reserved = [(off, size)];
        prop_assert!(validate_partition_batch(parent, &reserved, &[(off, size)]).is_err());
        if off > 0 {
            // [0, off) touches the reserved range without overlapping it.
            prop_assert!(validate_partition_batch(parent, &reserved, &[(0, off)]).is_ok());
        }
    }
}

fn quick(program: &str, nodes: u32, seed: u64, mode: RunMode) -> weft::RunSummary {
    let mut c = RunConfig::new(program);
    c.nodes = nodes;
    c.seed = seed;
    c.mode = mode;
    c.placement = Placement::RoundRobin;
    run_builtin(c).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// The deferred-create round trip completes for every schedule.
    #[test]
    fn launch_task_always_completes(seed in any::<u64>(), nodes in 1u32..5) {
        let s = quick("launch-task", nodes, seed, RunMode::Deferred);
        prop_assert_eq!(s.outcome, Outcome::Success);
        prop_assert_eq!(s.tasks_executed, 2);
    }

    /// Exclusive-write serialization holds under every schedule and mode.
    #[test]
    fn ew_increments_never_lost(seed in any::<u64>(), nodes in 1u32..5, eager in any::<bool>()) {
        let mode = if eager { RunMode::Eager } else { RunMode::Deferred };
        let s = quick("ew-pair", nodes, seed, mode);
        prop_assert_eq!(s.outcome, Outcome::Success);
        prop_assert_eq!(s.result_values.get("count").map(String::as_str), Some("2"));
    }

    /// The wavefront always runs exactly its nine cells, whatever the
    /// schedule does.
    #[test]
    fn matrix_cell_count_is_schedule_independent(seed in any::<u64>()) {
        let s = quick("matrix", 2, seed, RunMode::Deferred);
        prop_assert_eq!(s.outcome, Outcome::Success);
        prop_assert_eq!(s.tasks_executed, 10);
        prop_assert_eq!(s.creator_invocations, 9);
    }

    /// Identical configurations yield identical traces.
    #[test]
    fn repeat_runs_are_identical(seed in any::<u64>(), nodes in 1u32..5) {
        let a = quick("partition-sum", nodes, seed, RunMode::Deferred);
        let b = quick("partition-sum", nodes, seed, RunMode::Deferred);
        prop_assert_eq!(a.trace, b.trace);
    }
}
