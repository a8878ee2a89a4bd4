//! Detection and repair of precision-specific floating-point operations.
//!
//! Programs are written in a small three-address code ([`tac`]) and executed
//! by a dual-lane interpreter ([`engine`]): every float value is computed at
//! the program's native binary64 precision and, side by side, at a higher
//! shadow precision. The [`detector`] aggregates per-instruction relative
//! errors across many inputs and flags instructions whose error is large
//! for most executions. Flagged instructions are fixed by precision
//! barriers, which run the instruction at native precision inside the
//! shadow lane. The [`evaluator`] compares native, high-precision and fixed
//! results against the [`transcendental`] reference functions.

pub mod corpus;
pub mod detector;
pub mod engine;
pub mod evaluator;
pub mod tac;
pub mod transcendental;
