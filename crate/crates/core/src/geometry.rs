//! Closed-form set algebra on Euclidean balls and axis-aligned boxes.
//!
//! Only the combinations needed for constraint tightening are supported:
//! box ⊖ ball, ball ⊖ ball, ball ⊕ ball, scalar image of a ball, and the
//! inflation of exclusion balls. Points are plain `&[f64]` slices.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default tolerance for membership tests.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("set difference is empty")]
    EmptySet,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid set: {0}")]
    Invalid(String),
}

/// The ball `{z : ‖z − center‖₂ ≤ radius}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self, GeometryError> {
        if !(radius >= 0.0) || !radius.is_finite() {
            return Err(GeometryError::Invalid(format!("ball radius {radius}")));
        }
        Ok(Ball { center, radius })
    }

    /// Ball of the given radius centered at the origin of `dim`-space.
    pub fn origin(dim: usize, radius: f64) -> Self {
        Ball { center: vec![0.0; dim], radius }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// Closed-ball membership with tolerance `tol`.
    pub fn contains(&self, p: &[f64], tol: f64) -> bool {
        distance(p, &self.center) <= self.radius + tol
    }

    /// True when `p` lies strictly outside the ball (contact is not exterior).
    pub fn strictly_excludes(&self, p: &[f64]) -> bool {
        distance(p, &self.center) > self.radius
    }

    pub fn translate(&self, shift: &[f64]) -> Ball {
        Ball {
            center: self.center.iter().zip(shift).map(|(c, s)| c + s).collect(),
            radius: self.radius,
        }
    }

    pub fn inflate(&self, by: f64) -> Ball {
        Ball { center: self.center.clone(), radius: self.radius + by }
    }
}

/// Axis-aligned box `{x : lower ≤ x ≤ upper}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl AxisBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, GeometryError> {
        if lower.len() != upper.len() {
            return Err(GeometryError::DimensionMismatch { expected: lower.len(), got: upper.len() });
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l <= u)) {
            return Err(GeometryError::Invalid("box lower bound exceeds upper bound".into()));
        }
        Ok(AxisBox { lower, upper })
    }

    /// The box `[-half, half]^dim`.
    pub fn symmetric(dim: usize, half: f64) -> Self {
        AxisBox { lower: vec![-half; dim], upper: vec![half; dim] }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, p: &[f64], tol: f64) -> bool {
        p.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(x, (l, u))| *x >= l - tol && *x <= u + tol)
    }

    pub fn translate(&self, shift: &[f64]) -> AxisBox {
        AxisBox {
            lower: self.lower.iter().zip(shift).map(|(l, s)| l + s).collect(),
            upper: self.upper.iter().zip(shift).map(|(u, s)| u + s).collect(),
        }
    }

    /// Euclidean projection (component clamp).
    pub fn project(&self, p: &mut [f64]) {
        for ((x, l), u) in p.iter_mut().zip(&self.lower).zip(&self.upper) {
            *x = x.clamp(*l, *u);
        }
    }

    /// Sum of squared out-of-box distances per coordinate.
    pub fn violation_sq(&self, p: &[f64]) -> f64 {
        p.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(x, (l, u))| {
                let d = if x < l {
                    l - x
                } else if x > u {
                    x - u
                } else {
                    0.0
                };
                d * d
            })
            .sum()
    }

    /// Minkowski sum with a ball of radius `r`, over-approximated by its
    /// bounding box (exact per axis).
    pub fn dilate(&self, r: f64) -> AxisBox {
        AxisBox {
            lower: self.lower.iter().map(|l| l - r).collect(),
            upper: self.upper.iter().map(|u| u + r).collect(),
        }
    }
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `B ⊖ M(0, r)`: every bound moved inward by `r`.
pub fn erode_box_by_ball(b: &AxisBox, r: f64) -> Result<AxisBox, GeometryError> {
    if !(r >= 0.0) {
        return Err(GeometryError::Invalid(format!("erosion radius {r}")));
    }
    if b.lower.iter().zip(&b.upper).any(|(l, u)| u - l < 2.0 * r) {
        return Err(GeometryError::EmptySet);
    }
    Ok(AxisBox {
        lower: b.lower.iter().map(|l| l + r).collect(),
        upper: b.upper.iter().map(|u| u - r).collect(),
    })
}

/// `M(c₁, r₁) ⊕ M(c₂, r₂) = M(c₁ + c₂, r₁ + r₂)`.
pub fn ball_minkowski_ball(b1: &Ball, b2: &Ball) -> Ball {
    Ball {
        center: b1.center.iter().zip(&b2.center).map(|(a, b)| a + b).collect(),
        radius: b1.radius + b2.radius,
    }
}

/// `M(c₁, r₁) ⊖ M(·, r₂)`, shrinking the radius.
pub fn erode_ball_by_ball(b1: &Ball, r: f64) -> Result<Ball, GeometryError> {
    if b1.radius < r {
        return Err(GeometryError::EmptySet);
    }
    Ok(Ball { center: b1.center.clone(), radius: b1.radius - r })
}

/// Image of a ball under the linear map `m·I`.
pub fn scale_ball(m: f64, b: &Ball) -> Ball {
    Ball {
        center: b.center.iter().map(|c| m * c).collect(),
        radius: m.abs() * b.radius,
    }
}

/// A kept-inside box together with kept-outside balls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    pub region: AxisBox,
    pub exclusions: Vec<Ball>,
}

impl ConstraintSet {
    pub fn new(region: AxisBox, exclusions: Vec<Ball>) -> Self {
        ConstraintSet { region, exclusions }
    }

    /// Region membership within `tol`; exclusions are strict (touching an
    /// exclusion ball counts as inside it).
    pub fn contains(&self, p: &[f64], tol: f64) -> bool {
        self.region.contains(p, tol) && self.exclusions.iter().all(|b| b.strictly_excludes(p))
    }

    /// Total squared violation: box overshoot plus exclusion penetration,
    /// with exclusions inflated by `margin`.
    pub fn violation_sq(&self, p: &[f64], margin: f64) -> f64 {
        let mut v = self.region.violation_sq(p);
        for b in &self.exclusions {
            let pen = b.radius + margin - distance(p, &b.center);
            if pen > 0.0 {
                v += pen * pen;
            }
        }
        v
    }
}

/// `E = [X ⊕ (−shift)] ⊖ M(0, tube_radius)`.
pub fn tighten_state_constraints(
    x_set: &ConstraintSet,
    target_shift: &[f64],
    tube_radius: f64,
) -> Result<ConstraintSet, GeometryError> {
    if !(tube_radius >= 0.0) {
        return Err(GeometryError::Invalid(format!("tube radius {tube_radius}")));
    }
    let neg: Vec<f64> = target_shift.iter().map(|s| -s).collect();
    let region = erode_box_by_ball(&x_set.region.translate(&neg), tube_radius)?;
    let exclusions = x_set
        .exclusions
        .iter()
        .map(|b| b.translate(&neg).inflate(tube_radius))
        .collect();
    Ok(ConstraintSet { region, exclusions })
}

/// Input constraint set: per-component box or Euclidean ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputSet {
    Box(AxisBox),
    Ball(Ball),
}

impl InputSet {
    pub fn dim(&self) -> usize {
        match self {
            InputSet::Box(b) => b.dim(),
            InputSet::Ball(b) => b.dim(),
        }
    }

    pub fn contains(&self, u: &[f64], tol: f64) -> bool {
        match self {
            InputSet::Box(b) => b.contains(u, tol),
            InputSet::Ball(b) => b.contains(u, tol),
        }
    }

    /// Closed-form Euclidean projection: box clamp or radial scaling.
    pub fn project(&self, u: &mut [f64]) {
        match self {
            InputSet::Box(b) => b.project(u),
            InputSet::Ball(b) => {
                let mut d = 0.0;
                for (x, c) in u.iter().zip(&b.center) {
                    d += (x - c) * (x - c);
                }
                let d = d.sqrt();
                if d > b.radius {
                    let s = if d > 0.0 { b.radius / d } else { 0.0 };
                    for (x, c) in u.iter_mut().zip(&b.center) {
                        *x = c + (*x - c) * s;
                    }
                }
            }
        }
    }

    /// Largest `r` with `M(0, r) ⊆ self` (for centered sets).
    pub fn inner_radius(&self) -> f64 {
        match self {
            InputSet::Box(b) => b
                .lower
                .iter()
                .zip(&b.upper)
                .map(|(l, u)| (-l).min(*u))
                .fold(f64::INFINITY, f64::min),
            InputSet::Ball(b) => b.radius - norm(&b.center),
        }
    }
}

/// `𝕌 = U ⊖ [−σ ∘ M(0, tube_radius)]`.
pub fn tighten_input_constraints(
    u_set: &InputSet,
    sigma: f64,
    tube_radius: f64,
) -> Result<InputSet, GeometryError> {
    if !(sigma > 0.0) || !(tube_radius >= 0.0) {
        return Err(GeometryError::Invalid(format!("sigma {sigma}, tube radius {tube_radius}")));
    }
    let tube = scale_ball(-sigma, &Ball::origin(u_set.dim(), tube_radius));
    match u_set {
        InputSet::Box(b) => Ok(InputSet::Box(erode_box_by_ball(b, tube.radius)?)),
        InputSet::Ball(b) => Ok(InputSet::Ball(erode_ball_by_ball(b, tube.radius)?)),
    }
}
