//! Calculator and refinement checker for reactive design contracts over
//! finite universes: bounded traces, finite state spaces, explicit relations.

pub mod circus;
pub mod contracts;
pub mod designs;
pub mod healthiness;
pub mod model;
pub mod parallel;
pub mod reactive_relations;
pub mod trace_algebra;

/// CLI entry point; returns the process exit code.
pub fn run() -> i32 {
    eprintln!("not yet wired");
    2
}
