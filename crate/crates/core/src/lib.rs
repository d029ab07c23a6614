//! Deterministic tiered-VM simulator and benchmark harness.

pub mod cli;
pub mod config;
pub mod harness;
pub mod interp;
pub mod ir;
pub mod jit;
pub mod runtime;
pub mod suites;
