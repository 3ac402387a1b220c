//! Control-affine robot models `ẋ = f(x) + g(x)u + δ`, fixed-step RK4
//! integration, disturbance generators, and sampled estimates of the
//! constants that size the tube.

use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::AxisBox;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("state became non-finite at t = {t}")]
    NonFinite { t: f64 },
    #[error("assumption violated: {0}")]
    AssumptionViolated(String),
    #[error("invalid integration request: {0}")]
    InvalidRequest(String),
}

/// A control-affine model with drift `f` and square input gain `g`.
pub trait Dynamics: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    fn drift(&self, x: &[f64], out: &mut [f64]);

    /// Input gain as an `n × n` matrix.
    fn gain(&self, x: &[f64]) -> DMatrix<f64>;

    /// Writes `g(x)·u` into `out`.
    fn gain_mul(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        let g = self.gain(x);
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..u.len()).map(|j| g[(i, j)] * u[j]).sum();
        }
    }

    /// Writes `f(x) + g(x)u + δ` into `out`.
    fn rhs(&self, x: &[f64], u: &[f64], d: &[f64], out: &mut [f64]) {
        let n = self.dim();
        let mut gu = [0.0; 8];
        let gu = if n <= 8 { &mut gu[..n] } else { return self.rhs_alloc(x, u, d, out) };
        self.drift(x, out);
        self.gain_mul(x, u, gu);
        for i in 0..n {
            out[i] += gu[i] + d[i];
        }
    }

    #[doc(hidden)]
    fn rhs_alloc(&self, x: &[f64], u: &[f64], d: &[f64], out: &mut [f64]) {
        let mut gu = vec![0.0; self.dim()];
        self.drift(x, out);
        self.gain_mul(x, u, &mut gu);
        for i in 0..out.len() {
            out[i] += gu[i] + d[i];
        }
    }

    /// Indices of the workspace (position) coordinates.
    fn position_indices(&self) -> [usize; 2] {
        [0, 1]
    }
}

/// Omnidirectional base `ẋ = u + δ` (planar position plus heading for `dim = 3`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingleIntegrator {
    pub dim: usize,
}

impl Dynamics for SingleIntegrator {
    fn dim(&self) -> usize {
        self.dim
    }
    fn drift(&self, _x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
    }
    fn gain(&self, _x: &[f64]) -> DMatrix<f64> {
        DMatrix::identity(self.dim, self.dim)
    }
    fn gain_mul(&self, _x: &[f64], u: &[f64], out: &mut [f64]) {
        out.copy_from_slice(u);
    }
}

/// Nonlinear demonstration model:
/// `f(x) = −a·x·‖x‖₂`, `g(x) = (1 + b·‖x‖₂)·I`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemoNonlinear {
    pub dim: usize,
    pub drift_coeff: f64,
    pub gain_slope: f64,
}

impl Default for DemoNonlinear {
    fn default() -> Self {
        DemoNonlinear { dim: 3, drift_coeff: 0.1, gain_slope: 0.1 }
    }
}

impl Dynamics for DemoNonlinear {
    fn dim(&self) -> usize {
        self.dim
    }
    fn drift(&self, x: &[f64], out: &mut [f64]) {
        let r = crate::geometry::norm(x);
        for (o, xi) in out.iter_mut().zip(x) {
            *o = -self.drift_coeff * xi * r;
        }
    }
    fn gain(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::identity(self.dim, self.dim) * (1.0 + self.gain_slope * crate::geometry::norm(x))
    }
    fn gain_mul(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        let s = 1.0 + self.gain_slope * crate::geometry::norm(x);
        for (o, ui) in out.iter_mut().zip(u) {
            *o = s * ui;
        }
    }
}

type DriftFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;
type GainFn = dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync;

/// Model assembled from closures; handy for experiments and tests.
pub struct FnModel {
    dim: usize,
    drift: Box<DriftFn>,
    gain: Box<GainFn>,
}

impl FnModel {
    pub fn new(
        dim: usize,
        drift: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        gain: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        FnModel { dim, drift: Box::new(drift), gain: Box::new(gain) }
    }
}

impl fmt::Debug for FnModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnModel").field("dim", &self.dim).finish_non_exhaustive()
    }
}

impl Dynamics for FnModel {
    fn dim(&self) -> usize {
        self.dim
    }
    fn drift(&self, x: &[f64], out: &mut [f64]) {
        (self.drift)(x, out)
    }
    fn gain(&self, x: &[f64]) -> DMatrix<f64> {
        (self.gain)(x)
    }
}

/// Serializable model selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    SingleIntegrator {
        #[serde(default = "default_dim")]
        dim: usize,
    },
    DemoNonlinear {
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default = "default_coeff")]
        drift_coeff: f64,
        #[serde(default = "default_coeff")]
        gain_slope: f64,
    },
}

fn default_dim() -> usize {
    3
}
fn default_coeff() -> f64 {
    0.1
}

impl ModelSpec {
    pub fn build(&self) -> Box<dyn Dynamics> {
        match *self {
            ModelSpec::SingleIntegrator { dim } => Box::new(SingleIntegrator { dim }),
            ModelSpec::DemoNonlinear { dim, drift_coeff, gain_slope } => {
                Box::new(DemoNonlinear { dim, drift_coeff, gain_slope })
            }
        }
    }

    pub fn dim(&self) -> usize {
        match *self {
            ModelSpec::SingleIntegrator { dim } | ModelSpec::DemoNonlinear { dim, .. } => dim,
        }
    }
}

fn check_dim(expected: usize, got: usize) -> Result<(), DynamicsError> {
    if expected != got {
        return Err(DynamicsError::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// `f(x) + g(x)u + δ`.
pub fn eval_dynamics(
    model: &dyn Dynamics,
    x: &[f64],
    u: &[f64],
    d: &[f64],
) -> Result<Vec<f64>, DynamicsError> {
    let n = model.dim();
    check_dim(n, x.len())?;
    check_dim(n, u.len())?;
    check_dim(n, d.len())?;
    let mut out = vec![0.0; n];
    model.rhs(x, u, d, &mut out);
    Ok(out)
}

/// Checks `f(0) = 0`.
pub fn check_equilibrium(model: &dyn Dynamics) -> Result<(), DynamicsError> {
    let n = model.dim();
    let mut out = vec![0.0; n];
    model.drift(&vec![0.0; n], &mut out);
    if out.iter().any(|v| v.abs() > 1e-12) {
        return Err(DynamicsError::AssumptionViolated("f(0) != 0".into()));
    }
    Ok(())
}

/// Sampled closed-loop record on a uniform grid.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
    pub disturbances: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_state(&self) -> Option<&[f64]> {
        self.states.last().map(|s| s.as_slice())
    }
}

/// One classical RK4 step with `u` and `d` held constant.
pub fn rk4_step(model: &dyn Dynamics, x: &[f64], u: &[f64], d: &[f64], dt: f64, out: &mut [f64]) {
    let n = x.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    model.rhs(x, u, d, &mut k1);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * dt * k1[i];
    }
    model.rhs(&tmp, u, d, &mut k2);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * dt * k2[i];
    }
    model.rhs(&tmp, u, d, &mut k3);
    for i in 0..n {
        tmp[i] = x[i] + dt * k3[i];
    }
    model.rhs(&tmp, u, d, &mut k4);
    for i in 0..n {
        out[i] = x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

/// Fixed-step RK4 over `[t0, t0 + duration]`. Control and disturbance are
/// queried at the start of every step and held for that step.
pub fn integrate(
    model: &dyn Dynamics,
    x0: &[f64],
    control: &dyn Fn(f64, &[f64]) -> Vec<f64>,
    disturbance: &mut dyn FnMut(f64, &[f64]) -> Vec<f64>,
    t0: f64,
    duration: f64,
    dt: f64,
) -> Result<Trajectory, DynamicsError> {
    let n = model.dim();
    check_dim(n, x0.len())?;
    if !(duration > 0.0) || !(dt > 0.0) {
        return Err(DynamicsError::InvalidRequest(format!("duration {duration}, dt {dt}")));
    }
    let ratio = duration / dt;
    let steps = ratio.round();
    if (ratio - steps).abs() > 1e-9 * ratio.max(1.0) {
        return Err(DynamicsError::InvalidRequest(format!("dt {dt} does not divide {duration}")));
    }
    let steps = steps as usize;
    let mut traj = Trajectory::default();
    let mut x = x0.to_vec();
    let mut next = vec![0.0; n];
    for k in 0..=steps {
        let t = t0 + k as f64 * dt;
        let u = control(t, &x);
        let d = disturbance(t, &x);
        check_dim(n, u.len())?;
        check_dim(n, d.len())?;
        traj.times.push(t);
        traj.states.push(x.clone());
        traj.inputs.push(u.clone());
        traj.disturbances.push(d.clone());
        if k == steps {
            break;
        }
        rk4_step(model, &x, &u, &d, dt, &mut next);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(DynamicsError::NonFinite { t: t + dt });
        }
        std::mem::swap(&mut x, &mut next);
    }
    Ok(traj)
}

/// Safety factor applied to sampled Lipschitz estimates.
pub const LIPSCHITZ_INFLATION: f64 = 1.2;
/// Safety factor applied to the sampled eigenvalue lower bound.
pub const EIG_DEFLATION: f64 = 0.9;

fn sample_in(domain: &AxisBox, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n)
        .map(|i| {
            if i < domain.dim() {
                rng.gen_range(domain.lower[i]..=domain.upper[i])
            } else {
                0.0
            }
        })
        .collect()
}

/// Sampled `max{L_f, L_g}` over `domain`, inflated by [`LIPSCHITZ_INFLATION`].
///
/// Half of the sampled pairs are global, half are local perturbations so
/// that steep regions are probed at derivative scale. Coordinates beyond the
/// domain's dimension are held at zero.
pub fn estimate_lipschitz(model: &dyn Dynamics, domain: &AxisBox, samples: usize, seed: u64) -> f64 {
    let n = model.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let diam = domain
        .lower
        .iter()
        .zip(&domain.upper)
        .map(|(l, u)| (u - l).powi(2))
        .sum::<f64>()
        .sqrt();
    let local = 1e-3 * diam.max(1e-9);
    let mut fx = vec![0.0; n];
    let mut fy = vec![0.0; n];
    let mut best: f64 = 0.0;
    for s in 0..samples.max(2) {
        let x = sample_in(domain, n, &mut rng);
        let y = if s % 2 == 0 {
            sample_in(domain, n, &mut rng)
        } else {
            let mut y = x.clone();
            for (i, yi) in y.iter_mut().enumerate().take(domain.dim()) {
                *yi = (*yi + rng.gen_range(-local..=local)).clamp(domain.lower[i], domain.upper[i]);
            }
            y
        };
        let dxy = crate::geometry::distance(&x, &y);
        if dxy < 1e-12 {
            continue;
        }
        model.drift(&x, &mut fx);
        model.drift(&y, &mut fy);
        let lf = crate::geometry::distance(&fx, &fy) / dxy;
        let lg = (model.gain(&x) - model.gain(&y)).norm() / dxy;
        best = best.max(lf).max(lg);
    }
    LIPSCHITZ_INFLATION * best
}

/// Smallest eigenvalue of `(g + gᵀ)/2`.
pub fn sym_min_eig(g: &DMatrix<f64>) -> f64 {
    let s = (g + g.transpose()) * 0.5;
    SymmetricEigen::new(s).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Sampled lower bound `g̲` on `λ_min[(g + gᵀ)/2]`, deflated by
/// [`EIG_DEFLATION`]. The domain's corners and the origin are always probed.
pub fn min_eig_g(model: &dyn Dynamics, domain: &AxisBox, samples: usize, seed: u64) -> Result<f64, DynamicsError> {
    let n = model.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = vec![vec![0.0; n]];
    let dd = domain.dim().min(n);
    for mask in 0..(1usize << dd) {
        let mut p = vec![0.0; n];
        for (i, pi) in p.iter_mut().enumerate().take(dd) {
            *pi = if mask >> i & 1 == 1 { domain.upper[i] } else { domain.lower[i] };
        }
        points.push(p);
    }
    for _ in 0..samples.max(1) {
        points.push(sample_in(domain, n, &mut rng));
    }
    let mut lowest = f64::INFINITY;
    for p in &points {
        let e = sym_min_eig(&model.gain(p));
        if !(e > 0.0) {
            return Err(DynamicsError::AssumptionViolated(format!(
                "λ_min of symmetric input gain is {e} at {p:?}"
            )));
        }
        lowest = lowest.min(e);
    }
    Ok(EIG_DEFLATION * lowest)
}

/// How disturbance samples are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DisturbancePolicy {
    Zero,
    /// Magnitude `δ̃`, pointing away from the current target position.
    WorstCaseRadial,
    /// Fresh uniform sample in the ball at every integration step.
    UniformInBall,
    /// Uniform sample in the ball, redrawn every `hold` seconds.
    PiecewiseConstant { hold: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceSpec {
    pub bound: f64,
    pub policy: DisturbancePolicy,
}

impl DisturbanceSpec {
    pub fn zero() -> Self {
        DisturbanceSpec { bound: 0.0, policy: DisturbancePolicy::Zero }
    }
}

/// Stateful, seeded realization of a [`DisturbanceSpec`].
#[derive(Debug, Clone)]
pub struct DisturbanceGenerator {
    spec: DisturbanceSpec,
    dim: usize,
    rng: ChaCha8Rng,
    held: Vec<f64>,
    next_draw: f64,
}

impl DisturbanceGenerator {
    pub fn new(spec: DisturbanceSpec, dim: usize, seed: u64) -> Self {
        DisturbanceGenerator {
            spec,
            dim,
            rng: ChaCha8Rng::seed_from_u64(seed),
            held: vec![0.0; dim],
            next_draw: f64::NEG_INFINITY,
        }
    }

    pub fn spec(&self) -> &DisturbanceSpec {
        &self.spec
    }

    fn uniform_in_ball(&mut self) -> Vec<f64> {
        loop {
            let v: Vec<f64> = (0..self.dim).map(|_| self.rng.gen_range(-1.0..=1.0)).collect();
            if crate::geometry::norm(&v) <= 1.0 {
                return v.into_iter().map(|c| c * self.spec.bound).collect();
            }
        }
    }

    /// Disturbance at time `t` for a robot at `pos` heading to `target`
    /// (both position projections).
    pub fn sample(&mut self, t: f64, pos: &[f64], target: &[f64], pos_idx: [usize; 2]) -> Vec<f64> {
        let bound = self.spec.bound;
        let mut d = match self.spec.policy {
            _ if bound == 0.0 => vec![0.0; self.dim],
            DisturbancePolicy::Zero => vec![0.0; self.dim],
            DisturbancePolicy::WorstCaseRadial => {
                let mut d = vec![0.0; self.dim];
                let dx = pos[0] - target[0];
                let dy = pos[1] - target[1];
                let r = (dx * dx + dy * dy).sqrt();
                let (ux, uy) = if r > 1e-12 { (dx / r, dy / r) } else { (1.0, 0.0) };
                d[pos_idx[0]] = bound * ux;
                d[pos_idx[1]] = bound * uy;
                d
            }
            DisturbancePolicy::UniformInBall => self.uniform_in_ball(),
            DisturbancePolicy::PiecewiseConstant { hold } => {
                if t >= self.next_draw {
                    self.held = self.uniform_in_ball();
                    self.next_draw = if self.next_draw.is_finite() { self.next_draw + hold } else { t + hold };
                    while self.next_draw <= t {
                        self.next_draw += hold;
                    }
                }
                self.held.clone()
            }
        };
        let m = crate::geometry::norm(&d);
        if m > bound {
            let s = bound / m;
            d.iter_mut().for_each(|c| *c *= s);
        }
        assert!(crate::geometry::norm(&d) <= bound * (1.0 + 4.0 * f64::EPSILON), "disturbance exceeds bound");
        d
    }
}
