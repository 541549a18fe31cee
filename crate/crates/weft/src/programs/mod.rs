//! Built-in example programs.
//!
//! Each submodule registers its task functions, creators, and program
//! entries into a [`Registry`]; [`builtin_registry`] collects them all.
//! These are the programs the command-line harness offers, and the corpus
//! the test suite runs across modes, placements, and seeds.

use crate::harness::Registry;

mod copy_partition_sum;
mod file_double;
mod matrix;
mod micro;
mod partition_sum;

/// A registry holding every built-in program.
pub fn builtin_registry() -> Registry {
    let mut reg = Registry::new();
    matrix::register(&mut reg);
    file_double::register(&mut reg);
    partition_sum::register(&mut reg);
    copy_partition_sum::register(&mut reg);
    micro::register(&mut reg);
    reg
}
