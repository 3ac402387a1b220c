//! Timed motion planning for a disturbed robot: tube-based receding-horizon
//! navigation abstracted into a weighted transition system, MITL task
//! compilation to timed Büchi automata, product search, and closed-loop
//! execution with trace verification.

// `!(x >= 0.0)` style checks also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod abstraction;
pub mod dynamics;
pub mod geometry;
pub mod harness;
pub mod mitl;
pub mod rational;
pub mod synthesis;
pub mod tube;
