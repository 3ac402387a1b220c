//! Independent checks of an executed trace.

use std::fmt;

use crate::geometry::{self, MEMBERSHIP_TOL};
use crate::mitl::{monitor, Formula};
use crate::rational::{format_rational, Rational};

use super::scenario::Scenario;
use super::trace::{Counters, EventKind, Sample, Trace};

/// Counters plus the first offending sample of each kind as `(t, vector)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ViolationScan {
    pub counters: Counters,
    pub first_obstacle: Option<(f64, Vec<f64>)>,
    pub first_workspace: Option<(f64, Vec<f64>)>,
    pub first_input: Option<(f64, Vec<f64>)>,
    pub first_tube: Option<(f64, f64)>,
}

/// Allowed `‖x − x̂‖₂`: the tube radius with a relative slack of 10⁻³ plus
/// ten integration substeps' worth of disturbance.
pub fn tube_allowance(scenario: &Scenario) -> f64 {
    let dt = scenario.h() / scenario.fhocp.closed_loop_substeps as f64;
    scenario.tube.tube_radius * (1.0 + 1e-3) + 10.0 * dt * scenario.file.disturbance.bound
}

pub fn count_violations(scenario: &Scenario, samples: &[Sample]) -> ViolationScan {
    let pos = scenario.model().position_indices();
    let eta = scenario.file.robot_radius;
    let inner = geometry::erode_box_by_ball(&scenario.file.workspace, eta).expect("validated workspace");
    let obstacles = scenario.obstacle_balls();
    let allowance = tube_allowance(scenario);
    let mut scan = ViolationScan::default();
    for s in samples {
        let p = [s.x[pos[0]], s.x[pos[1]]];
        if obstacles.iter().any(|(_, b)| geometry::distance(&p, &b.center) < b.radius - MEMBERSHIP_TOL) {
            scan.counters.obstacle += 1;
            scan.first_obstacle.get_or_insert((s.t, s.x.clone()));
        }
        if !inner.contains(&p, MEMBERSHIP_TOL) {
            scan.counters.workspace += 1;
            scan.first_workspace.get_or_insert((s.t, s.x.clone()));
        }
        if !scenario.file.input_set.contains(&s.u, MEMBERSHIP_TOL) {
            scan.counters.input += 1;
            scan.first_input.get_or_insert((s.t, s.u.clone()));
        }
        let dev = geometry::distance(&s.x, &s.nominal);
        if dev > allowance {
            scan.counters.tube += 1;
            scan.first_tube.get_or_insert((s.t, dev));
        }
    }
    scan
}

/// Robot-disc containment at one word position.
#[derive(Debug, Clone, PartialEq)]
pub struct Containment {
    pub region: String,
    pub stamp: Rational,
    /// `p_j − η − ‖x − y_j‖₂`; nonnegative when contained.
    pub slack: f64,
}

impl Containment {
    pub fn ok(&self) -> bool {
        self.slack >= -MEMBERSHIP_TOL
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub containment: Vec<Containment>,
    pub monitor: bool,
    pub scan: ViolationScan,
    /// Word stamps in order, with the region labels read there.
    pub word: Vec<(Rational, Vec<String>)>,
}

impl Report {
    pub fn containment_ok(&self) -> bool {
        !self.containment.is_empty() && self.containment.iter().all(Containment::ok)
    }

    pub fn pass(&self) -> bool {
        self.containment_ok() && self.monitor && self.scan.counters.obstacle == 0 && self.scan.counters.workspace == 0
            && self.scan.counters.input == 0
            && self.scan.counters.tube == 0
    }
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.scan.counters;
        writeln!(f, "containment  {}", verdict(self.containment_ok()))?;
        for k in self.containment.iter().filter(|k| !k.ok()) {
            writeln!(f, "  {} at {} outside by {:.3e}", k.region, format_rational(&k.stamp), -k.slack)?;
        }
        writeln!(f, "monitor      {}", verdict(self.monitor))?;
        writeln!(f, "obstacles    {} ({} samples)", verdict(c.obstacle == 0), c.obstacle)?;
        if let Some((t, x)) = &self.scan.first_obstacle {
            writeln!(f, "  first at t={t:.3} x={x:?}")?;
        }
        writeln!(f, "workspace    {} ({} samples)", verdict(c.workspace == 0), c.workspace)?;
        if let Some((t, x)) = &self.scan.first_workspace {
            writeln!(f, "  first at t={t:.3} x={x:?}")?;
        }
        writeln!(f, "inputs       {} ({} samples)", verdict(c.input == 0), c.input)?;
        if let Some((t, u)) = &self.scan.first_input {
            writeln!(f, "  first at t={t:.3} u={u:?}")?;
        }
        writeln!(f, "tube         {} ({} samples)", verdict(c.tube == 0), c.tube)?;
        if let Some((t, d)) = &self.scan.first_tube {
            writeln!(f, "  first at t={t:.3} deviation={d:.4e}")?;
        }
        write!(f, "word        ")?;
        for (t, l) in &self.word {
            write!(f, " ({}, {{{}}})", format_rational(t), l.join(","))?;
        }
        writeln!(f)?;
        write!(f, "overall      {}", verdict(self.pass()))
    }
}

/// Checks containment at every word stamp, the formula on the derived word,
/// and obstacle, workspace, input and tube bounds on every sample.
pub fn verify_trace(scenario: &Scenario, trace: &Trace, formula: &Formula) -> Report {
    let pos = scenario.model().position_indices();
    let eta = scenario.file.robot_radius;
    let mut containment = Vec::new();
    let mut word = Vec::new();
    for e in trace.events.iter().filter(|e| e.kind != EventKind::Depart) {
        let slack = match (scenario.region_index(&e.region), trace.samples.get(e.sample)) {
            (Some(r), Some(s)) => {
                let reg = &scenario.regions[r];
                reg.radius - eta - geometry::distance(&[s.x[pos[0]], s.x[pos[1]]], &reg.center)
            }
            _ => f64::NEG_INFINITY,
        };
        containment.push(Containment { region: e.region.clone(), stamp: e.stamp, slack });
        word.push((e.stamp, e.labels.iter().cloned().collect()));
    }
    let ev: Vec<_> = trace.events.iter().filter(|e| e.kind != EventKind::Depart).collect();
    let monitor_ok = crate::mitl::TimedWord::new(ev.iter().map(|e| e.labels.clone()).collect(), ev.iter().map(|e| e.stamp).collect())
        .map(|w| monitor(formula, &w))
        .unwrap_or(false);
    Report { containment, monitor: monitor_ok, scan: count_violations(scenario, &trace.samples), word }
}
