//! Weighted transition system over the regions of a scenario. Transitions are
//! navigation controllers between safe regions, weighted by the number of
//! sampling steps the disturbance-free controller needs before the stop test
//! fires.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{DisturbanceGenerator, DisturbanceSpec};
use crate::geometry;
use crate::harness::scenario::Scenario;
use crate::mitl::{Letter, TimedWord};
use crate::rational::{serde_rational, Rational};
use crate::tube::{navigate, ControlError, FhocpParams, NavStatus, NavigationOutcome, NavigationRequest, TubeParams};

#[derive(Debug, Error)]
pub enum AbstractionError {
    #[error("regions {0} and {1} overlap after inflation by the robot radius")]
    Overlap(String, String),
    #[error("no transition from {from} to {to}")]
    NoTransition { from: String, to: String },
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error("abstraction file: {0}")]
    Io(#[from] std::io::Error),
    #[error("abstraction file parse error: {0}")]
    Parse(String),
}

/// What is needed to re-run a navigation controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerDescriptor {
    pub source: String,
    pub target: String,
    pub sigma: f64,
    pub tube_radius: f64,
    #[serde(with = "serde_rational")]
    pub horizon: Rational,
    #[serde(with = "serde_rational")]
    pub step: Rational,
    pub terminal_level: f64,
    /// Start position relative to the source center that realized the weight.
    pub start_offset: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WtsState {
    pub id: String,
    pub labels: BTreeSet<String>,
    pub obstacle: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub source: usize,
    pub target: usize,
    #[serde(with = "serde_rational")]
    pub weight: Rational,
    pub controller: Option<ControllerDescriptor>,
    /// Smallest `p_j − η − ‖x − y_j‖₂` over the arrival samples.
    pub arrival_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Wts {
    pub states: Vec<WtsState>,
    pub initial: usize,
    /// Sorted by `(source, target)`.
    pub transitions: Vec<Transition>,
    #[serde(with = "serde_rational")]
    pub step: Rational,
    pub abstraction_hash: String,
}

impl Wts {
    pub fn outgoing(&self, s: usize) -> impl Iterator<Item = (usize, &Transition)> {
        self.transitions.iter().enumerate().filter(move |(_, t)| t.source == s)
    }

    pub fn find(&self, source: usize, target: usize) -> Option<&Transition> {
        self.transitions.iter().find(|t| t.source == source && t.target == target)
    }

    pub fn labels(&self, s: usize) -> &Letter {
        &self.states[s].labels
    }

    pub fn state_index(&self, id: &str) -> Option<usize> {
        self.states.iter().position(|s| s.id == id)
    }

    /// The word `(σ_0,τ_0)…` as a chain of states with one transition each.
    pub fn from_word(word: &TimedWord) -> Wts {
        let states = word
            .letters
            .iter()
            .enumerate()
            .map(|(l, s)| WtsState { id: format!("w{l}"), labels: s.clone(), obstacle: false })
            .collect();
        let transitions = (0..word.len().saturating_sub(1))
            .map(|l| Transition {
                source: l,
                target: l + 1,
                weight: word.stamps[l + 1] - word.stamps[l],
                controller: None,
                arrival_gap: 0.0,
            })
            .collect();
        Wts {
            states,
            initial: 0,
            transitions,
            step: crate::rational::rational_gcd(word.stamps.iter()).unwrap_or_else(|| Rational::from_integer(1)),
            abstraction_hash: String::new(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("wts serializes")
    }

    pub fn from_toml(text: &str) -> Result<Wts, AbstractionError> {
        toml::from_str(text).map_err(|e| AbstractionError::Parse(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<(), AbstractionError> {
        std::fs::write(path, self.to_toml())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Wts, AbstractionError> {
        Wts::from_toml(&std::fs::read_to_string(path)?)
    }
}

/// Stored weight of `r_i → r_j`.
pub fn weight_of(wts: &Wts, r_i: usize, r_j: usize) -> Result<Rational, AbstractionError> {
    wts.find(r_i, r_j).map(|t| t.weight).ok_or_else(|| AbstractionError::NoTransition {
        from: wts.states.get(r_i).map(|s| s.id.clone()).unwrap_or_default(),
        to: wts.states.get(r_j).map(|s| s.id.clone()).unwrap_or_default(),
    })
}

/// Number of extra start directions on the ring around the source center.
pub const RING_STARTS: usize = 6;

/// Start offsets: the center, then the ring of radius `arrival + tube`
/// beginning with the direction pointing away from the target.
pub fn start_offsets(source: &[f64], target: &[f64], radius: f64) -> Vec<[f64; 2]> {
    let mut out = vec![[0.0, 0.0]];
    if radius > 0.0 {
        let away = (source[1] - target[1]).atan2(source[0] - target[0]);
        for k in 0..RING_STARTS {
            let a = away + std::f64::consts::TAU * k as f64 / RING_STARTS as f64;
            out.push([radius * a.cos(), radius * a.sin()]);
        }
    }
    out
}

/// Disturbance-free navigation from `source` center plus `offset` to `target`.
pub fn navigate_nominal(
    scenario: &Scenario,
    tube: &TubeParams,
    fhocp: &FhocpParams,
    t_max: Rational,
    source: usize,
    target: usize,
    offset: &[f64],
) -> Result<NavigationOutcome, ControlError> {
    let model = scenario.model();
    let pos = model.position_indices();
    let mut start = scenario.region_state(source);
    start[pos[0]] += offset[0];
    start[pos[1]] += offset[1];
    let goal = scenario.region_state(target);
    let x_set = scenario.state_set(source, target);
    let req = NavigationRequest {
        model: model.as_ref(),
        x_start: &start,
        start_time: 0.0,
        target: &goal,
        state_set: &x_set,
        input_set: &scenario.file.input_set,
        tube,
        fhocp,
        t_max,
        hold: Rational::from_integer(0),
    };
    let mut gen = DisturbanceGenerator::new(DisturbanceSpec::zero(), model.dim(), 0);
    navigate(&req, &mut gen)
}

/// Builds the WTS: one navigation per ordered pair of distinct safe regions
/// and start offset; the weight is the largest stop-test time over the
/// starts. Pairs where any start fails are left without a transition.
pub fn build_wts(scenario: &Scenario, tube: &TubeParams, fhocp: &FhocpParams, t_max: Rational) -> Result<Wts, AbstractionError> {
    let eta = scenario.file.robot_radius;
    let regions = &scenario.regions;
    for i in 0..regions.len() {
        for j in i + 1..regions.len() {
            if geometry::distance(&regions[i].center, &regions[j].center) <= regions[i].radius + regions[j].radius + 2.0 * eta {
                return Err(AbstractionError::Overlap(regions[i].id.clone(), regions[j].id.clone()));
            }
        }
    }
    let model = scenario.model();
    let pos = model.position_indices();
    let ring = fhocp.arrival_radius() + tube.tube_radius;
    let mut transitions = Vec::new();
    for (i, src) in regions.iter().enumerate() {
        for (j, dst) in regions.iter().enumerate() {
            if i == j || src.obstacle || dst.obstacle {
                continue;
            }
            let mut worst: Option<(Rational, Vec<f64>)> = None;
            let mut gap = f64::INFINITY;
            let mut ok = true;
            for off in start_offsets(&src.center, &dst.center, ring) {
                let out = navigate_nominal(scenario, tube, fhocp, t_max, i, j, &off)?;
                if out.status != NavStatus::Arrived || out.constraint_violations > 0 {
                    ok = false;
                    break;
                }
                let t = out.arrival_time.expect("arrived");
                let x = &out.trace.states[out.arrival_index.expect("arrived")];
                gap = gap.min(dst.radius - eta - geometry::distance(&[x[pos[0]], x[pos[1]]], &dst.center));
                if worst.as_ref().is_none_or(|(w, _)| t > *w) {
                    worst = Some((t, off.to_vec()));
                }
            }
            let Some((weight, start_offset)) = worst else { continue };
            if !ok || weight <= Rational::from_integer(0) {
                continue;
            }
            transitions.push(Transition {
                source: i,
                target: j,
                weight,
                controller: Some(ControllerDescriptor {
                    source: src.id.clone(),
                    target: dst.id.clone(),
                    sigma: tube.sigma,
                    tube_radius: tube.tube_radius,
                    horizon: fhocp.horizon,
                    step: fhocp.step,
                    terminal_level: fhocp.terminal_level,
                    start_offset,
                }),
                arrival_gap: gap,
            });
        }
    }
    Ok(Wts {
        states: regions
            .iter()
            .map(|r| WtsState { id: r.id.clone(), labels: r.labels.clone(), obstacle: r.obstacle })
            .collect(),
        initial: scenario.initial,
        transitions,
        step: fhocp.step,
        abstraction_hash: scenario.abstraction_hash(),
    })
}

/// [`build_wts`] with the scenario's own parameters.
pub fn abstract_scenario(scenario: &Scenario) -> Result<Wts, AbstractionError> {
    build_wts(scenario, &scenario.tube, &scenario.fhocp, scenario.t_max())
}

pub fn cache_path(dir: &Path, scenario: &Scenario) -> PathBuf {
    dir.join(format!("abstraction-{}.toml", &scenario.abstraction_hash()[..16]))
}

/// Loads the cached abstraction for `scenario` from `dir`, building and
/// storing it when absent or stale. Returns whether the cache was used.
pub fn load_or_build(scenario: &Scenario, dir: &Path) -> Result<(Wts, bool), AbstractionError> {
    let path = cache_path(dir, scenario);
    if let Ok(w) = Wts::load(&path) {
        if w.abstraction_hash == scenario.abstraction_hash() {
            return Ok((w, true));
        }
    }
    let w = abstract_scenario(scenario)?;
    std::fs::create_dir_all(dir)?;
    w.save(&path)?;
    Ok((w, false))
}
