//! Metric interval temporal logic: syntax, point-based monitor and timed
//! Büchi automata for the flat fragment.

pub mod ast;
pub mod monitor;
pub mod parser;
pub mod tba;

pub use ast::{letter, to_string, Formula, Interval, Letter, TimedWord};
pub use monitor::{monitor, monitor_positions};
pub use parser::{parse, SyntaxError};
pub use tba::{build_tba, ClockConstraint, CmpOp, Edge, Location, TimedAutomaton, UnsupportedFragment};
