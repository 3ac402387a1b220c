//! Scenario ingestion, plan execution under disturbance, trace verification
//! and persistence.

pub mod execute;
pub mod scenario;
pub mod trace;
pub mod verify;

pub use execute::{execute_plan, leg_seed, HarnessError};
pub use scenario::{load_scenario, Region, Scenario, ScenarioError, ScenarioFile, NEXUS_SML};
pub use trace::{export_plot_data, export_trace, import_trace, Counters, Event, EventKind, Sample, Trace, TraceError};
pub use verify::{count_violations, tube_allowance, verify_trace, Containment, Report, ViolationScan};
