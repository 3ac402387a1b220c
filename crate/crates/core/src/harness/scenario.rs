//! Scenario files: the full problem instance in TOML, validated on load.

use std::collections::BTreeSet;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dynamics::{estimate_lipschitz, min_eig_g, DisturbanceSpec, Dynamics, ModelSpec};
use crate::geometry::{self, AxisBox, Ball, ConstraintSet, InputSet};
use crate::mitl::{self, Formula};
use crate::rational::{serde_rational, to_f64, Rational};
use crate::tube::{make_tube_params, FhocpParams, TubeParams};

/// The shipped default scenario.
pub const NEXUS_SML: &str = include_str!("../../scenarios/nexus_sml.toml");

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("scenario validation failed:\n  - {}", .0.join("\n  - "))]
    Validation(Vec<String>),
}

/// A constant given analytically or estimated by sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Constant {
    Value(f64),
    /// Must be the string `"estimate"`.
    Keyword(String),
}

/// A weight matrix given as `c` (meaning `c·I`) or as explicit rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Weight {
    Scalar(f64),
    Rows(Vec<Vec<f64>>),
}

impl Weight {
    fn matrix(&self, n: usize) -> Result<DMatrix<f64>, String> {
        match self {
            Weight::Scalar(c) => Ok(DMatrix::identity(n, n) * *c),
            Weight::Rows(rows) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(format!("weight matrix must be {n}x{n}"));
                }
                Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSpec {
    pub id: String,
    pub center: Vec<f64>,
    pub radius: f64,
    #[serde(default)]
    pub labels: Vec<String>,
    #[serde(default)]
    pub obstacle: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TubeSection {
    pub lipschitz: Constant,
    pub gain_lower: Constant,
    pub sigma_margin: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_samples() -> usize {
    4000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FhocpSection {
    #[serde(with = "serde_rational")]
    pub horizon: Rational,
    #[serde(with = "serde_rational")]
    pub step: Rational,
    pub q: Weight,
    pub p: Weight,
    pub r: Weight,
    pub terminal_level: f64,
    pub segments: Option<usize>,
    pub rollout_substeps: Option<usize>,
    pub closed_loop_substeps: Option<usize>,
    pub max_iters: Option<usize>,
    pub tolerance: Option<f64>,
}

/// On-disk scenario layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    pub seed: u64,
    pub formula: String,
    /// Extra propositions beyond those used as region labels.
    #[serde(default)]
    pub propositions: Vec<String>,
    pub initial_region: String,
    pub robot_radius: f64,
    /// Per-navigation time budget (s).
    #[serde(with = "serde_rational")]
    pub t_max: Rational,
    /// Slack in the region-radius rule.
    #[serde(default = "default_margin")]
    pub margin: f64,
    pub workspace: AxisBox,
    pub regions: Vec<RegionSpec>,
    pub model: ModelSpec,
    pub disturbance: DisturbanceSpec,
    pub input_set: InputSet,
    pub tube: TubeSection,
    pub fhocp: FhocpSection,
}

fn default_margin() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub id: String,
    pub center: Vec<f64>,
    pub radius: f64,
    pub labels: BTreeSet<String>,
    pub obstacle: bool,
}

impl Region {
    pub fn ball(&self) -> Ball {
        Ball { center: self.center.clone(), radius: self.radius }
    }
}

/// A validated scenario with resolved tube and controller parameters.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub regions: Vec<Region>,
    pub initial: usize,
    pub formula: Formula,
    pub propositions: BTreeSet<String>,
    pub tube: TubeParams,
    pub fhocp: FhocpParams,
}

fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Scenario, ScenarioError> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        Scenario::from_file(file)
    }

    pub fn nexus_sml() -> Scenario {
        Scenario::from_toml(NEXUS_SML).expect("shipped scenario is valid")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.file).expect("scenario serializes")
    }

    /// Validates every invariant, collecting all violations.
    pub fn from_file(file: ScenarioFile) -> Result<Scenario, ScenarioError> {
        let mut errs: Vec<String> = Vec::new();
        let n = file.model.dim();
        let eta = file.robot_radius;
        if !(eta >= 0.0) {
            errs.push(format!("robot radius {eta} must be nonnegative"));
        }
        if n < 2 {
            errs.push("model dimension must be at least 2".into());
        }
        if file.workspace.lower.len() != 2
            || file.workspace.upper.len() != 2
            || file.workspace.lower.iter().zip(&file.workspace.upper).any(|(l, u)| !(l < u))
        {
            errs.push("workspace must be a nonempty 2-D box".into());
        }
        if file.input_set.dim() != n {
            errs.push(format!("input set dimension {} differs from model dimension {n}", file.input_set.dim()));
        }
        if !(file.disturbance.bound >= 0.0) {
            errs.push("disturbance bound must be nonnegative".into());
        }

        // regions
        let mut regions = Vec::new();
        let mut ids = BTreeSet::new();
        for r in &file.regions {
            if !ids.insert(r.id.clone()) {
                errs.push(format!("duplicate region id {}", r.id));
            }
            if r.center.len() != 2 {
                errs.push(format!("region {} center must be 2-D", r.id));
                continue;
            }
            if !(r.radius > 0.0) {
                errs.push(format!("region {} radius must be positive", r.id));
            }
            let inflated = r.radius + eta;
            let inside = (0..2).all(|k| {
                r.center[k] - inflated >= file.workspace.lower.get(k).copied().unwrap_or(f64::NAN)
                    && r.center[k] + inflated <= file.workspace.upper.get(k).copied().unwrap_or(f64::NAN)
            });
            if !inside {
                errs.push(format!("region {} inflated by the robot radius leaves the workspace", r.id));
            }
            regions.push(Region {
                id: r.id.clone(),
                center: r.center.clone(),
                radius: r.radius,
                labels: r.labels.iter().cloned().collect(),
                obstacle: r.obstacle,
            });
        }
        for i in 0..regions.len() {
            for j in i + 1..regions.len() {
                let (a, b) = (&regions[i], &regions[j]);
                if geometry::distance(&a.center, &b.center) <= a.radius + b.radius + 2.0 * eta {
                    errs.push(format!("regions {} and {} overlap after inflation by the robot radius", a.id, b.id));
                }
            }
        }
        let initial = regions.iter().position(|r| r.id == file.initial_region);
        match initial {
            None => errs.push(format!("initial region {} is not declared", file.initial_region)),
            Some(i) if regions[i].obstacle => errs.push(format!("initial region {} is an obstacle", file.initial_region)),
            _ => {}
        }

        // propositions and formula
        let mut propositions: BTreeSet<String> = file.propositions.iter().cloned().collect();
        for r in &regions {
            propositions.extend(r.labels.iter().cloned());
        }
        let formula = match mitl::parse(&file.formula) {
            Ok(f) => {
                for a in f.atoms() {
                    if !propositions.contains(&a) {
                        errs.push(format!("formula atom {a} is not a declared proposition"));
                    }
                }
                f
            }
            Err(e) => {
                errs.push(format!("formula: {e}"));
                Formula::True
            }
        };

        // controller
        let model = file.model.build();
        let domain = estimation_domain(&file.workspace, n);
        let lipschitz = match &file.tube.lipschitz {
            Constant::Value(v) => Some(*v),
            Constant::Keyword(k) if k == "estimate" => Some(estimate_lipschitz(model.as_ref(), &domain, file.tube.samples, file.seed)),
            Constant::Keyword(k) => {
                errs.push(format!("tube.lipschitz must be a number or \"estimate\", got {k:?}"));
                None
            }
        };
        let gain_lower = match &file.tube.gain_lower {
            Constant::Value(v) => Some(*v),
            Constant::Keyword(k) if k == "estimate" => match min_eig_g(model.as_ref(), &domain, file.tube.samples, file.seed) {
                Ok(g) => Some(g),
                Err(e) => {
                    errs.push(e.to_string());
                    None
                }
            },
            Constant::Keyword(k) => {
                errs.push(format!("tube.gain_lower must be a number or \"estimate\", got {k:?}"));
                None
            }
        };
        let tube = match (lipschitz, gain_lower) {
            (Some(l), Some(g)) => match make_tube_params(l, g, file.tube.sigma_margin, file.disturbance.bound) {
                Ok(t) => Some(t),
                Err(e) => {
                    errs.push(e.to_string());
                    None
                }
            },
            _ => None,
        };
        let fhocp = match build_fhocp(&file.fhocp, n) {
            Ok(p) => {
                if let Err(e) = p.validate() {
                    errs.push(e.to_string());
                }
                if !(file.t_max / p.step).is_integer() || file.t_max <= Rational::from_integer(0) {
                    errs.push("t_max must be a positive multiple of the sampling step".into());
                }
                Some(p)
            }
            Err(e) => {
                errs.push(e);
                None
            }
        };

        if let (Some(t), Some(p)) = (&tube, &fhocp) {
            if p.validate().is_ok() {
                let need = eta + p.arrival_radius() + t.tube_radius + file.margin;
                for r in regions.iter().filter(|r| !r.obstacle) {
                    if r.radius < need {
                        errs.push(format!(
                            "region {} radius {} is below robot radius + arrival radius + tube radius + margin = {need:.6}",
                            r.id, r.radius
                        ));
                    }
                }
            }
            if let Ok(u) = geometry::tighten_input_constraints(&file.input_set, t.sigma, t.tube_radius) {
                if u.inner_radius() <= 0.0 {
                    errs.push("tightened input set has empty interior".into());
                }
            } else {
                errs.push("tightened input set is empty".into());
            }
        }

        if !errs.is_empty() {
            return Err(ScenarioError::Validation(errs));
        }
        Ok(Scenario {
            initial: initial.expect("checked"),
            regions,
            formula,
            propositions,
            tube: tube.expect("checked"),
            fhocp: fhocp.expect("checked"),
            file,
        })
    }

    pub fn model(&self) -> Box<dyn Dynamics> {
        self.file.model.build()
    }

    pub fn dim(&self) -> usize {
        self.file.model.dim()
    }

    pub fn region_index(&self, id: &str) -> Option<usize> {
        self.regions.iter().position(|r| r.id == id)
    }

    /// Full state at the center of region `i` (zero in non-position coordinates).
    pub fn region_state(&self, i: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        let pos = self.model().position_indices();
        x[pos[0]] = self.regions[i].center[0];
        x[pos[1]] = self.regions[i].center[1];
        x
    }

    /// `X` for a navigation from `source` to `target`: the workspace shrunk by
    /// the robot radius, avoiding every other region inflated by it.
    pub fn state_set(&self, source: usize, target: usize) -> ConstraintSet {
        let eta = self.file.robot_radius;
        let region = geometry::erode_box_by_ball(&self.file.workspace, eta).expect("validated workspace");
        let exclusions = self
            .regions
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != source && *k != target)
            .map(|(_, r)| r.ball().inflate(eta))
            .collect();
        ConstraintSet::new(region, exclusions)
    }

    /// Obstacle regions inflated by the robot radius.
    pub fn obstacle_balls(&self) -> Vec<(usize, Ball)> {
        self.regions
            .iter()
            .enumerate()
            .filter(|(_, r)| r.obstacle)
            .map(|(k, r)| (k, r.ball().inflate(self.file.robot_radius)))
            .collect()
    }

    /// Hash of the whole file.
    pub fn hash(&self) -> String {
        sha256_hex(&self.to_toml())
    }

    /// Hash of everything the abstraction depends on: the run seed, task
    /// formula and disturbance policy are excluded, the disturbance bound is not.
    pub fn abstraction_hash(&self) -> String {
        let mut f = self.file.clone();
        f.name = String::new();
        f.seed = 0;
        f.formula = String::new();
        f.propositions.clear();
        f.disturbance.policy = crate::dynamics::DisturbancePolicy::Zero;
        let mut text = toml::to_string(&f).expect("scenario serializes");
        text.push_str(&format!("\nresolved = [{:e}, {:e}]\n", self.tube.sigma, self.tube.tube_radius));
        sha256_hex(&text)
    }

    pub fn t_max(&self) -> Rational {
        self.file.t_max
    }

    pub fn h(&self) -> f64 {
        to_f64(&self.fhocp.step)
    }
}

fn build_fhocp(s: &FhocpSection, n: usize) -> Result<FhocpParams, String> {
    let mut p = FhocpParams::new(s.horizon, s.step, n, 1.0, s.terminal_level);
    p.q = s.q.matrix(n)?;
    p.p = s.p.matrix(n)?;
    p.r = s.r.matrix(n)?;
    if let Some(m) = s.segments {
        p.segments = m;
    }
    if let Some(v) = s.rollout_substeps {
        p.rollout_substeps = v;
    }
    if let Some(v) = s.closed_loop_substeps {
        p.closed_loop_substeps = v;
    }
    if let Some(v) = s.max_iters {
        p.max_iters = v;
    }
    if let Some(v) = s.tolerance {
        p.tolerance = v;
    }
    Ok(p)
}

/// Workspace on the position coordinates, `[-π, π]` on the others.
fn estimation_domain(workspace: &AxisBox, n: usize) -> AxisBox {
    let mut lower = vec![-std::f64::consts::PI; n];
    let mut upper = vec![std::f64::consts::PI; n];
    for k in 0..2.min(n) {
        lower[k] = workspace.lower.get(k).copied().unwrap_or(-1.0);
        upper[k] = workspace.upper.get(k).copied().unwrap_or(1.0);
    }
    AxisBox { lower, upper }
}

/// Reads and validates a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path)?;
    Scenario::from_toml(&text)
}
