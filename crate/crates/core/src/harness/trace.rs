//! Executed trajectories, their event lists and the text export format.
//!
//! A trace file starts with `#` header lines (format tag, scenario hash,
//! column names, events, counters) followed by one whitespace-separated row
//! per sample: `t`, the state, the nominal state, the applied input, the
//! disturbance and the active plan transition (`-1` while parked).

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::mitl::{Letter, TimedWord};
use crate::rational::{format_rational, parse_rational, Rational};

const FORMAT_TAG: &str = "tube-mitl trace v1";

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace file: {0}")]
    Io(#[from] io::Error),
    #[error("trace file line {line}: {message}")]
    Format { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub x: Vec<f64>,
    pub nominal: Vec<f64>,
    pub u: Vec<f64>,
    pub d: Vec<f64>,
    pub transition: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Depart,
    Arrive,
    Park,
}

impl EventKind {
    fn as_str(self) -> &'static str {
        match self {
            EventKind::Depart => "depart",
            EventKind::Arrive => "arrive",
            EventKind::Park => "park",
        }
    }

    fn parse(s: &str) -> Option<EventKind> {
        match s {
            "depart" => Some(EventKind::Depart),
            "arrive" => Some(EventKind::Arrive),
            "park" => Some(EventKind::Park),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub kind: EventKind,
    pub region: String,
    pub labels: Letter,
    /// Executed stamp.
    pub stamp: Rational,
    /// Stamp the plan asked for.
    pub plan_stamp: Rational,
    /// Index of the sample at `stamp`.
    pub sample: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counters {
    /// Samples inside an obstacle inflated by the robot radius.
    pub obstacle: usize,
    /// Samples whose robot disc leaves the workspace.
    pub workspace: usize,
    /// Samples with the applied input outside `U`.
    pub input: usize,
    /// Samples with `‖x − x̂‖` beyond the tube radius.
    pub tube: usize,
    /// Integration stages where the ancillary input left `U` and was projected.
    pub saturation: usize,
}

impl Counters {
    pub fn all_zero(&self) -> bool {
        *self == Counters::default()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    pub scenario_hash: String,
    pub dim: usize,
    pub samples: Vec<Sample>,
    pub events: Vec<Event>,
    pub counters: Counters,
}

impl Trace {
    /// The word read at arrival and park events.
    pub fn word(&self) -> TimedWord {
        let ev: Vec<&Event> = self.events.iter().filter(|e| e.kind != EventKind::Depart).collect();
        TimedWord::new(ev.iter().map(|e| e.labels.clone()).collect(), ev.iter().map(|e| e.stamp).collect())
            .expect("arrival stamps start at 0 and increase")
    }

    /// Largest `‖x − x̂‖₂` over the samples.
    pub fn max_deviation(&self) -> f64 {
        self.samples.iter().map(|s| crate::geometry::distance(&s.x, &s.nominal)).fold(0.0, f64::max)
    }

    /// Largest `|executed − planned|` over arrival and park events.
    pub fn max_jitter(&self) -> Rational {
        self.events
            .iter()
            .filter(|e| e.kind != EventKind::Depart)
            .map(|e| if e.stamp > e.plan_stamp { e.stamp - e.plan_stamp } else { e.plan_stamp - e.stamp })
            .max()
            .unwrap_or_default()
    }

    /// Serializes to the text format.
    pub fn to_text(&self) -> String {
        let n = self.dim;
        let mut s = String::new();
        writeln!(s, "# {FORMAT_TAG}").unwrap();
        writeln!(s, "# scenario_hash {}", self.scenario_hash).unwrap();
        writeln!(s, "# dim {n}").unwrap();
        let mut cols = vec!["t".to_string()];
        for prefix in ["x", "nominal", "u", "d"] {
            cols.extend((0..n).map(|k| format!("{prefix}{k}")));
        }
        cols.push("transition".into());
        writeln!(s, "# columns {}", cols.join(" ")).unwrap();
        writeln!(s, "# units t:s x,nominal:state u:state/s d:state/s").unwrap();
        let c = &self.counters;
        writeln!(s, "# counters {} {} {} {} {}", c.obstacle, c.workspace, c.input, c.tube, c.saturation).unwrap();
        for e in &self.events {
            let labels = if e.labels.is_empty() { "-".to_string() } else { e.labels.iter().cloned().collect::<Vec<_>>().join(",") };
            writeln!(
                s,
                "# event {} {} {} {} {} {}",
                e.kind.as_str(),
                e.region,
                format_rational(&e.stamp),
                format_rational(&e.plan_stamp),
                e.sample,
                labels
            )
            .unwrap();
        }
        for smp in &self.samples {
            write!(s, "{:.16e}", smp.t).unwrap();
            for v in smp.x.iter().chain(&smp.nominal).chain(&smp.u).chain(&smp.d) {
                write!(s, " {v:.16e}").unwrap();
            }
            match smp.transition {
                Some(i) => writeln!(s, " {i}").unwrap(),
                None => writeln!(s, " -1").unwrap(),
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Trace, TraceError> {
        let mut trace = Trace::default();
        let mut seen_tag = false;
        for (ln, line) in text.lines().enumerate() {
            let bad = |message: &str| TraceError::Format { line: ln + 1, message: message.to_string() };
            if let Some(h) = line.strip_prefix("# ") {
                let mut parts = h.split_whitespace();
                match parts.next() {
                    Some("tube-mitl") => seen_tag = h == FORMAT_TAG,
                    Some("scenario_hash") => trace.scenario_hash = parts.next().unwrap_or("").to_string(),
                    Some("dim") => trace.dim = parts.next().and_then(|v| v.parse().ok()).ok_or_else(|| bad("bad dim"))?,
                    Some("counters") => {
                        let v: Vec<usize> = parts.map(|p| p.parse()).collect::<Result<_, _>>().map_err(|_| bad("bad counters"))?;
                        if v.len() != 5 {
                            return Err(bad("expected 5 counters"));
                        }
                        trace.counters = Counters { obstacle: v[0], workspace: v[1], input: v[2], tube: v[3], saturation: v[4] };
                    }
                    Some("event") => {
                        let f: Vec<&str> = parts.collect();
                        if f.len() != 6 {
                            return Err(bad("expected 6 event fields"));
                        }
                        let rat = |s: &str| parse_rational(s).map_err(|e| bad(&e.to_string()));
                        trace.events.push(Event {
                            kind: EventKind::parse(f[0]).ok_or_else(|| bad("unknown event kind"))?,
                            region: f[1].to_string(),
                            stamp: rat(f[2])?,
                            plan_stamp: rat(f[3])?,
                            sample: f[4].parse().map_err(|_| bad("bad sample index"))?,
                            labels: if f[5] == "-" { Letter::new() } else { f[5].split(',').map(String::from).collect() },
                        });
                    }
                    _ => {}
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            if !seen_tag {
                return Err(bad("missing format header"));
            }
            let n = trace.dim;
            let vals: Vec<&str> = line.split_whitespace().collect();
            if vals.len() != 4 * n + 2 {
                return Err(bad(&format!("expected {} columns, found {}", 4 * n + 2, vals.len())));
            }
            let nums: Vec<f64> = vals[..4 * n + 1].iter().map(|v| v.parse()).collect::<Result<_, _>>().map_err(|_| bad("bad number"))?;
            let tr: i64 = vals[4 * n + 1].parse().map_err(|_| bad("bad transition index"))?;
            trace.samples.push(Sample {
                t: nums[0],
                x: nums[1..1 + n].to_vec(),
                nominal: nums[1 + n..1 + 2 * n].to_vec(),
                u: nums[1 + 2 * n..1 + 3 * n].to_vec(),
                d: nums[1 + 3 * n..1 + 4 * n].to_vec(),
                transition: usize::try_from(tr).ok(),
            });
        }
        if !seen_tag {
            return Err(TraceError::Format { line: 1, message: "missing format header".into() });
        }
        Ok(trace)
    }
}

pub fn export_trace(trace: &Trace, path: &Path) -> Result<(), TraceError> {
    std::fs::write(path, trace.to_text())?;
    Ok(())
}

pub fn import_trace(path: &Path) -> Result<Trace, TraceError> {
    Trace::from_text(&std::fs::read_to_string(path)?)
}

/// Series names for the state coordinates.
fn state_names(n: usize) -> Vec<String> {
    if n == 3 {
        vec!["x".into(), "y".into(), "angle".into()]
    } else {
        (0..n).map(|k| format!("x{k}")).collect()
    }
}

/// Writes one two-column `t value` file per state coordinate and input
/// component into `dir`; returns the written paths.
pub fn export_plot_data(trace: &Trace, dir: &Path) -> Result<Vec<std::path::PathBuf>, TraceError> {
    std::fs::create_dir_all(dir)?;
    let n = trace.dim;
    let mut written = Vec::new();
    // (name, input?, component)
    let series: Vec<(String, bool, usize)> = state_names(n)
        .into_iter()
        .enumerate()
        .map(|(k, name)| (name, false, k))
        .chain((0..n).map(|k| (format!("u{}", k + 1), true, k)))
        .collect();
    for (name, input, k) in series {
        let mut s = format!("# t {name}\n");
        for smp in &trace.samples {
            let v = if input { smp.u[k] } else { smp.x[k] };
            writeln!(s, "{:.16e} {:.16e}", smp.t, v).unwrap();
        }
        let path = dir.join(format!("{name}.dat"));
        std::fs::write(&path, s)?;
        written.push(path);
    }
    Ok(written)
}
