//! Tube-based receding-horizon navigation between two regions.
//!
//! The applied input is `u = û − σ(e − ê)`: `û` is the first piece of the
//! finite-horizon optimal control computed for the nominal (disturbance-free)
//! error dynamics, and the ancillary term keeps the true error `e` inside a
//! ball of radius `δ̃/σ̲` around the nominal error `ê`. The nominal state is
//! reset to the measured state at every sampling instant.
//!
//! The finite-horizon problem is solved by direct single shooting over `m`
//! piecewise-constant control segments with projected gradient descent,
//! central finite-difference gradients and a Barzilai–Borwein trial step
//! refined by Armijo backtracking. State-path constraints enter as quadratic
//! hinge penalties whose weight is ramped until the sampled nominal path is
//! strictly feasible.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{Dynamics, DisturbanceGenerator, DynamicsError};
use crate::geometry::{
    self, tighten_input_constraints, tighten_state_constraints, ConstraintSet, GeometryError,
    InputSet, MEMBERSHIP_TOL,
};
use crate::rational::{to_f64, Rational};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("optimizer diverged (non-finite cost)")]
    SolverDiverged,
    #[error("finite-horizon problem infeasible: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// Ancillary gain and tube size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TubeParams {
    pub lipschitz: f64,
    pub gain_lower: f64,
    pub sigma_margin: f64,
    pub sigma: f64,
    pub disturbance_bound: f64,
    pub tube_radius: f64,
}

/// `σ = L/g̲ + σ̲`, tube radius `δ̃/σ̲`.
pub fn make_tube_params(
    lipschitz: f64,
    gain_lower: f64,
    sigma_margin: f64,
    disturbance_bound: f64,
) -> Result<TubeParams, ControlError> {
    if !(gain_lower > 0.0) || !(sigma_margin > 0.0) || !(disturbance_bound >= 0.0) || !(lipschitz >= 0.0) {
        return Err(ControlError::InvalidParam(format!(
            "L = {lipschitz}, g = {gain_lower}, sigma_margin = {sigma_margin}, disturbance = {disturbance_bound}"
        )));
    }
    Ok(TubeParams {
        lipschitz,
        gain_lower,
        sigma_margin,
        sigma: lipschitz / gain_lower + sigma_margin,
        disturbance_bound,
        tube_radius: disturbance_bound / sigma_margin,
    })
}

/// `u = û − σ(e − ê)`.
pub fn ancillary_control(u_nom: &[f64], e_nom: &[f64], e: &[f64], sigma: f64) -> Vec<f64> {
    u_nom
        .iter()
        .zip(e.iter().zip(e_nom))
        .map(|(u, (e, en))| u - sigma * (e - en))
        .collect()
}

/// `êᵀPê ≤ ε²`.
pub fn terminal_check(e: &[f64], p: &DMatrix<f64>, eps: f64) -> bool {
    quad_form(p.as_slice(), p.nrows(), e) <= eps * eps
}

// `DMatrix` is column-major; symmetric matrices read the same either way.
fn quad_form(m: &[f64], n: usize, v: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            row += m[j * n + i] * v[j];
        }
        s += v[i] * row;
    }
    s
}

fn min_eig_sym(m: &DMatrix<f64>) -> f64 {
    nalgebra::SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Finite-horizon problem settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FhocpParams {
    /// Prediction horizon `N` (s).
    #[serde(with = "crate::rational::serde_rational")]
    pub horizon: Rational,
    /// Sampling step `h` (s).
    #[serde(with = "crate::rational::serde_rational")]
    pub step: Rational,
    pub q: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub r: DMatrix<f64>,
    /// Terminal level `ε`.
    pub terminal_level: f64,
    /// Number of piecewise-constant control segments `m`.
    pub segments: usize,
    /// RK4 steps per control segment inside the optimizer.
    pub rollout_substeps: usize,
    /// RK4 steps per sampling interval in closed loop.
    pub closed_loop_substeps: usize,
    pub max_iters: usize,
    pub tolerance: f64,
    pub penalty_start: f64,
    pub penalty_max: f64,
    /// Exclusions are penalized as if inflated by this much.
    pub penalty_margin: f64,
    pub terminal_weight: f64,
}

impl FhocpParams {
    /// Diagonal-weight defaults with `m = round(N/h)`.
    pub fn new(horizon: Rational, step: Rational, dim: usize, weight: f64, terminal_level: f64) -> Self {
        let segments = (to_f64(&horizon) / to_f64(&step)).round().max(1.0) as usize;
        let w = DMatrix::identity(dim, dim) * weight;
        FhocpParams {
            horizon,
            step,
            q: w.clone(),
            p: w.clone(),
            r: w,
            terminal_level,
            segments,
            rollout_substeps: 2,
            closed_loop_substeps: 5,
            max_iters: 100,
            tolerance: 1e-7,
            penalty_start: 1e2,
            penalty_max: 1e6,
            penalty_margin: 1e-2,
            terminal_weight: 1.0,
        }
    }

    pub fn h(&self) -> f64 {
        to_f64(&self.step)
    }

    pub fn n(&self) -> f64 {
        to_f64(&self.horizon)
    }

    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    /// Arrival radius `ε/√λ_min(P)` of the stop test.
    pub fn arrival_radius(&self) -> f64 {
        self.terminal_level / min_eig_sym(&self.p).sqrt()
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        let bad = |m: &str| Err(ControlError::InvalidParam(m.to_string()));
        let zero = Rational::from_integer(0);
        if !(self.step > zero && self.horizon > self.step) {
            return bad("need N > h > 0");
        }
        if !(self.terminal_level > 0.0) {
            return bad("terminal level must be positive");
        }
        if self.segments == 0 || self.rollout_substeps == 0 || self.closed_loop_substeps == 0 {
            return bad("segment and substep counts must be positive");
        }
        let n = self.dim();
        for (name, m) in [("Q", &self.q), ("P", &self.p), ("R", &self.r)] {
            if m.nrows() != n || m.ncols() != n {
                return bad(&format!("{name} must be {n}x{n}"));
            }
            if (m - m.transpose()).amax() > 1e-12 {
                return bad(&format!("{name} must be symmetric"));
            }
            if !(min_eig_sym(m) > 0.0) {
                return bad(&format!("{name} must be positive definite"));
            }
        }
        Ok(())
    }
}

/// Result of one finite-horizon solve.
#[derive(Debug, Clone, PartialEq)]
pub struct FhocpSolution {
    /// `m × n` controls, segment-major.
    pub controls: Vec<f64>,
    /// Nominal error at every rollout sample, starting with `ê(t_k)`.
    pub nominal: Vec<Vec<f64>>,
    /// Sample times relative to `t_k`.
    pub times: Vec<f64>,
    /// Objective value without penalty terms.
    pub cost: f64,
    pub terminal_reached: bool,
    pub iterations: usize,
    pub penalty_weight: f64,
    pub max_violation: f64,
}

struct Shooting<'a> {
    model: &'a dyn Dynamics,
    offset: &'a [f64],
    n: usize,
    m: usize,
    sub: usize,
    dt: f64,
    q: Vec<f64>,
    p: Vec<f64>,
    r: Vec<f64>,
    eps: f64,
    e_set: &'a ConstraintSet,
    penalty_box: geometry::AxisBox,
    pos: [usize; 2],
    margin: f64,
    terminal_weight: f64,
}

#[derive(Clone, Copy, Default)]
struct Acc {
    cost: f64,
    penalty: f64,
}

struct Scratch {
    x: Vec<f64>,
    xa: Vec<f64>,
    tmp: Vec<f64>,
    k: [Vec<f64>; 4],
    gu: Vec<f64>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Scratch {
            x: vec![0.0; n],
            xa: vec![0.0; n],
            tmp: vec![0.0; n],
            k: [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            gu: vec![0.0; n],
        }
    }
}

impl<'a> Shooting<'a> {
    fn deriv(&self, e: &[f64], u: &[f64], xa: &mut [f64], gu: &mut [f64], out: &mut [f64]) -> f64 {
        for i in 0..self.n {
            xa[i] = e[i] + self.offset[i];
        }
        self.model.drift(xa, out);
        self.model.gain_mul(xa, u, gu);
        for i in 0..self.n {
            out[i] += gu[i];
        }
        quad_form(&self.q, self.n, e) + quad_form(&self.r, self.n, u)
    }

    /// One augmented RK4 step; returns the running-cost increment.
    fn step(&self, s: &mut Scratch, u: &[f64]) -> f64 {
        let n = self.n;
        let h = self.dt;
        let Scratch { x, xa, tmp, k, gu } = s;
        let [k1, k2, k3, k4] = k;
        let c1 = self.deriv(x, u, xa, gu, k1);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k1[i];
        }
        let c2 = self.deriv(tmp, u, xa, gu, k2);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k2[i];
        }
        let c3 = self.deriv(tmp, u, xa, gu, k3);
        for i in 0..n {
            tmp[i] = x[i] + h * k3[i];
        }
        let c4 = self.deriv(tmp, u, xa, gu, k4);
        for i in 0..n {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        h / 6.0 * (c1 + 2.0 * c2 + 2.0 * c3 + c4)
    }

    fn penalty_at(&self, e: &[f64]) -> f64 {
        let p = [e[self.pos[0]], e[self.pos[1]]];
        let mut v = self.penalty_box.violation_sq(&p);
        for b in &self.e_set.exclusions {
            let pen = b.radius + self.margin - geometry::distance(&p, &b.center);
            if pen > 0.0 {
                v += pen * pen;
            }
        }
        v
    }

    fn violation_at(&self, e: &[f64]) -> f64 {
        let p = [e[self.pos[0]], e[self.pos[1]]];
        let mut v = self.e_set.region.violation_sq(&p).sqrt();
        for b in &self.e_set.exclusions {
            let d = geometry::distance(&p, &b.center);
            if d <= b.radius {
                v = v.max(b.radius - d).max(f64::MIN_POSITIVE);
            }
        }
        v
    }

    fn terminal(&self, e: &[f64]) -> (f64, f64) {
        let t = quad_form(&self.p, self.n, e);
        let excess = (t.sqrt() - self.eps).max(0.0);
        (t, excess * excess)
    }

    /// Rolls out the whole horizon; returns the penalized objective, the
    /// running accumulators and the terminal cost.
    fn rollout(&self, s: &mut Scratch, u: &[f64], start: &[f64], w: f64) -> (f64, Acc, f64) {
        s.x.copy_from_slice(start);
        let mut acc = Acc::default();
        for j in 0..self.m {
            let uj = &u[j * self.n..(j + 1) * self.n];
            for _ in 0..self.sub {
                acc.cost += self.step(s, uj);
                acc.penalty += self.penalty_at(&s.x);
            }
        }
        let (term, tv) = self.terminal(&s.x);
        let objective = acc.cost + term + w * acc.penalty + self.terminal_weight * tv;
        (objective, acc, term)
    }
}

impl<'a> Shooting<'a> {
    fn new(model: &'a dyn Dynamics, offset: &'a [f64], params: &FhocpParams, e_set: &'a ConstraintSet) -> Self {
        let n = model.dim();
        let m = params.segments;
        let sub = params.rollout_substeps;
        let margin = params.penalty_margin;
        let penalty_box = geometry::erode_box_by_ball(&e_set.region, margin).unwrap_or_else(|_| e_set.region.clone());
        Shooting {
            model,
            offset,
            n,
            m,
            sub,
            dt: params.n() / m as f64 / sub as f64,
            q: params.q.as_slice().to_vec(),
            p: params.p.as_slice().to_vec(),
            r: params.r.as_slice().to_vec(),
            eps: params.terminal_level,
            e_set,
            penalty_box,
            pos: model.position_indices(),
            margin,
            terminal_weight: params.terminal_weight,
        }
    }
}

struct AdjointScratch {
    states: Vec<Vec<f64>>,
    lambda: Vec<f64>,
    next: Vec<f64>,
    xp: Vec<f64>,
    up: Vec<f64>,
    plus: Vec<f64>,
}

impl AdjointScratch {
    fn new(n: usize, steps: usize) -> Self {
        AdjointScratch {
            states: vec![vec![0.0; n]; steps + 1],
            lambda: vec![0.0; n],
            next: vec![0.0; n],
            xp: vec![0.0; n],
            up: vec![0.0; n],
            plus: vec![0.0; n],
        }
    }
}

const FD_STEP: f64 = 1e-6;

impl Shooting<'_> {
    /// Step from `x` with input `u`; the successor lands in `s.x`.
    fn step_from(&self, s: &mut Scratch, x: &[f64], u: &[f64]) -> f64 {
        s.x.copy_from_slice(x);
        self.step(s, u)
    }

    /// Terminal and per-sample penalty part of the objective at the final state.
    fn final_terms(&self, e: &[f64], w: f64) -> f64 {
        let (t, tv) = self.terminal(e);
        t + self.terminal_weight * tv + w * self.penalty_at(e)
    }

    /// Objective and its gradient by a backward pass through step Jacobians
    /// taken with central differences of the discrete step map.
    fn objective_and_gradient(&self, s: &mut Scratch, a: &mut AdjointScratch, u: &[f64], e0: &[f64], w: f64, g: &mut [f64]) -> f64 {
        let n = self.n;
        let steps = self.m * self.sub;
        a.states[0].copy_from_slice(e0);
        let mut objective = 0.0;
        for k in 0..steps {
            let j = k / self.sub;
            let (head, tail) = a.states.split_at_mut(k + 1);
            objective += self.step_from(s, &head[k], &u[j * n..(j + 1) * n]);
            tail[0].copy_from_slice(&s.x);
            if k + 1 < steps {
                objective += w * self.penalty_at(&s.x);
            }
        }
        objective += self.final_terms(&a.states[steps], w);

        // λ_K = ∇ final terms
        g.iter_mut().for_each(|v| *v = 0.0);
        let last = a.states[steps].clone();
        for i in 0..n {
            a.xp.copy_from_slice(&last);
            a.xp[i] = last[i] + FD_STEP;
            let fp = self.final_terms(&a.xp, w);
            a.xp[i] = last[i] - FD_STEP;
            let fm = self.final_terms(&a.xp, w);
            a.lambda[i] = (fp - fm) / (2.0 * FD_STEP);
        }
        for k in (0..steps).rev() {
            let j = k / self.sub;
            let uj = &u[j * n..(j + 1) * n];
            let xk = a.states[k].clone();
            // input sensitivities: ∂(c + λ·Φ)/∂u
            for c in 0..n {
                a.up.copy_from_slice(uj);
                a.up[c] = uj[c] + FD_STEP;
                let cp = self.step_from(s, &xk, &a.up);
                a.plus.copy_from_slice(&s.x);
                a.up[c] = uj[c] - FD_STEP;
                let cm = self.step_from(s, &xk, &a.up);
                let mut d = (cp - cm) / (2.0 * FD_STEP);
                for i in 0..n {
                    d += a.lambda[i] * (a.plus[i] - s.x[i]) / (2.0 * FD_STEP);
                }
                g[j * n + c] += d;
            }
            if k == 0 {
                break;
            }
            // state sensitivities, plus the sample penalty at x_k
            for c in 0..n {
                a.xp.copy_from_slice(&xk);
                a.xp[c] = xk[c] + FD_STEP;
                let cp = self.step_from(s, &a.xp, uj) + w * self.penalty_at(&a.xp);
                a.plus.copy_from_slice(&s.x);
                a.xp[c] = xk[c] - FD_STEP;
                let cm = self.step_from(s, &a.xp, uj) + w * self.penalty_at(&a.xp);
                let mut d = (cp - cm) / (2.0 * FD_STEP);
                for i in 0..n {
                    d += a.lambda[i] * (a.plus[i] - s.x[i]) / (2.0 * FD_STEP);
                }
                a.next[c] = d;
            }
            std::mem::swap(&mut a.lambda, &mut a.next);
        }
        objective
    }

    /// Gradient by central differences of whole rollouts.
    #[cfg(test)]
    fn fd_gradient(&self, s: &mut Scratch, u: &[f64], e0: &[f64], w: f64, g: &mut [f64]) -> f64 {
        let mut v = u.to_vec();
        let f = self.rollout(s, &v, e0, w).0;
        for i in 0..v.len() {
            let orig = v[i];
            v[i] = orig + FD_STEP;
            let fp = self.rollout(s, &v, e0, w).0;
            v[i] = orig - FD_STEP;
            let fm = self.rollout(s, &v, e0, w).0;
            v[i] = orig;
            g[i] = (fp - fm) / (2.0 * FD_STEP);
        }
        f
    }
}

fn project_controls(u: &mut [f64], set: &InputSet, n: usize) {
    for seg in u.chunks_mut(n) {
        set.project(seg);
    }
}

/// Solves the finite-horizon problem from `e_now` (error w.r.t. `offset`).
///
/// `e_set` is the tightened state set in error coordinates over the position
/// projection, `u_set` the tightened input set.
#[allow(clippy::too_many_arguments)]
pub fn solve_fhocp(
    e_now: &[f64],
    offset: &[f64],
    model: &dyn Dynamics,
    params: &FhocpParams,
    e_set: &ConstraintSet,
    u_set: &InputSet,
    warm_start: Option<&[f64]>,
) -> Result<FhocpSolution, ControlError> {
    solve_fhocp_with_penalty(e_now, offset, model, params, e_set, u_set, warm_start, params.penalty_start)
}

/// [`solve_fhocp`] starting the penalty ramp at `penalty_start`.
#[allow(clippy::too_many_arguments)]
pub fn solve_fhocp_with_penalty(
    e_now: &[f64],
    offset: &[f64],
    model: &dyn Dynamics,
    params: &FhocpParams,
    e_set: &ConstraintSet,
    u_set: &InputSet,
    warm_start: Option<&[f64]>,
    penalty_start: f64,
) -> Result<FhocpSolution, ControlError> {
    let n = model.dim();
    if e_now.len() != n || offset.len() != n || params.dim() != n || u_set.dim() != n {
        return Err(ControlError::Dynamics(DynamicsError::DimensionMismatch {
            expected: n,
            got: e_now.len(),
        }));
    }
    let pos = model.position_indices();
    if !e_set.contains(&[e_now[pos[0]], e_now[pos[1]]], MEMBERSHIP_TOL) {
        return Err(ControlError::Infeasible("initial error outside the tightened state set".into()));
    }
    let prob = Shooting::new(model, offset, params, e_set);
    let (m, sub, seg_len) = (prob.m, prob.sub, params.n() / prob.m as f64);
    let dim = m * n;
    let mut u = match warm_start {
        Some(w) if w.len() == dim => w.to_vec(),
        _ => vec![0.0; dim],
    };
    project_controls(&mut u, u_set, n);

    let mut s = Scratch::new(n);
    let mut bounds = Vec::with_capacity(m);
    let mut grad = vec![0.0; dim];
    let mut trial = vec![0.0; dim];
    let mut grad_new = vec![0.0; dim];
    let mut w = penalty_start.clamp(params.penalty_start, params.penalty_max);
    let mut total_iters = 0;
    let mut adj = AdjointScratch::new(n, m * sub);
    let mut objective_and_grad =
        |u: &mut Vec<f64>, w: f64, g: &mut [f64], s: &mut Scratch, _bounds: &mut Vec<(Vec<f64>, Acc)>| -> f64 {
            prob.objective_and_gradient(s, &mut adj, u, e_now, w, g)
        };

    loop {
        let mut f = objective_and_grad(&mut u, w, &mut grad, &mut s, &mut bounds);
        if !f.is_finite() {
            return Err(ControlError::SolverDiverged);
        }
        let mut alpha = 1.0;
        for _ in 0..params.max_iters {
            total_iters += 1;
            // projected-gradient stationarity
            let mut pg: f64 = 0.0;
            for i in 0..dim {
                trial[i] = u[i] - grad[i];
            }
            project_controls(&mut trial, u_set, n);
            for i in 0..dim {
                pg = pg.max((trial[i] - u[i]).abs());
            }
            if pg <= params.tolerance {
                break;
            }
            let mut accepted = false;
            let mut a = alpha;
            let mut f_trial = f;
            for _ in 0..40 {
                for i in 0..dim {
                    trial[i] = u[i] - a * grad[i];
                }
                project_controls(&mut trial, u_set, n);
                let decrease: f64 = (0..dim).map(|i| grad[i] * (trial[i] - u[i])).sum();
                let (ft, _, _) = prob.rollout(&mut s, &trial, e_now, w);
                if !ft.is_finite() {
                    return Err(ControlError::SolverDiverged);
                }
                if ft <= f + 1e-4 * decrease {
                    accepted = true;
                    f_trial = ft;
                    break;
                }
                a *= 0.5;
            }
            if !accepted {
                break;
            }
            let f_new = objective_and_grad(&mut trial, w, &mut grad_new, &mut s, &mut bounds);
            debug_assert!((f_new - f_trial).abs() <= 1e-9 * (1.0 + f_trial.abs()));
            let mut ss = 0.0;
            let mut sy = 0.0;
            for i in 0..dim {
                let si = trial[i] - u[i];
                let yi = grad_new[i] - grad[i];
                ss += si * si;
                sy += si * yi;
            }
            let rel = (f - f_new).abs() / f.abs().max(1e-12);
            std::mem::swap(&mut u, &mut trial);
            std::mem::swap(&mut grad, &mut grad_new);
            f = f_new;
            alpha = if sy > 1e-300 { (ss / sy).clamp(1e-6, 1e6) } else { (a * 2.0).min(1e6) };
            if rel < 1e-8 {
                break;
            }
        }

        // measure true feasibility on the sampled nominal path
        let (nominal, times, cost, max_violation) = full_rollout(&prob, &mut s, &u, e_now, seg_len);
        if !cost.is_finite() {
            return Err(ControlError::SolverDiverged);
        }
        if max_violation <= 1e-6 {
            let last = nominal.last().expect("nonempty rollout");
            let terminal_reached = terminal_check(last, &params.p, params.terminal_level);
            return Ok(FhocpSolution {
                controls: u,
                nominal,
                times,
                cost,
                terminal_reached,
                iterations: total_iters,
                penalty_weight: w,
                max_violation,
            });
        }
        if w >= params.penalty_max {
            return Err(ControlError::Infeasible(format!(
                "nominal path violates state constraints by {max_violation:.3e} at penalty weight {w:e}"
            )));
        }
        w = (w * 10.0).min(params.penalty_max);
    }
}

fn full_rollout(
    prob: &Shooting<'_>,
    s: &mut Scratch,
    u: &[f64],
    e0: &[f64],
    seg_len: f64,
) -> (Vec<Vec<f64>>, Vec<f64>, f64, f64) {
    s.x.copy_from_slice(e0);
    let mut states = vec![e0.to_vec()];
    let mut times = vec![0.0];
    let mut cost = 0.0;
    let mut viol: f64 = 0.0;
    for j in 0..prob.m {
        let uj = &u[j * prob.n..(j + 1) * prob.n];
        for k in 0..prob.sub {
            cost += prob.step(s, uj);
            viol = viol.max(prob.violation_at(&s.x));
            states.push(s.x.clone());
            times.push(j as f64 * seg_len + (k + 1) as f64 * prob.dt);
        }
    }
    let (term, _) = prob.terminal(&s.x);
    (states, times, cost + term, viol)
}

/// Outcome classification of a navigation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NavStatus {
    Arrived,
    InfeasibleFhocp,
    TimedOut,
}

/// Closed-loop samples on the uniform integration grid. Sample `j > 0`
/// carries the input and disturbance applied on `(t_{j-1}, t_j]`; nominal
/// values at sampling instants are taken before the reset.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NavTrace {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub nominal: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
    pub disturbances: Vec<Vec<f64>>,
}

impl NavTrace {
    fn push(&mut self, t: f64, x: &[f64], xn: &[f64], u: &[f64], d: &[f64]) {
        self.times.push(t);
        self.states.push(x.to_vec());
        self.nominal.push(xn.to_vec());
        self.inputs.push(u.to_vec());
        self.disturbances.push(d.to_vec());
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NavigationOutcome {
    pub status: NavStatus,
    pub trace: NavTrace,
    /// Stop-test step count `k`; the transition time is `k·h`.
    pub arrival_steps: Option<u64>,
    pub arrival_time: Option<Rational>,
    /// Index into `trace` of the arrival sample.
    pub arrival_index: Option<usize>,
    /// Optimal nominal cost at every solved sampling instant.
    pub costs: Vec<f64>,
    pub saturations: usize,
    /// Samples outside the untightened state set.
    pub constraint_violations: usize,
    /// Samples where `ê ∈ E` but `e ∉ X − x_T`.
    pub transfer_violations: usize,
    /// Largest `‖e − ê‖₂` over all samples.
    pub max_deviation: f64,
    pub solver_iterations: usize,
    pub message: Option<String>,
}

/// A navigation that has not reduced its distance to the target by
/// [`STALL_PROGRESS`] within this many sampling steps is abandoned as timed out.
pub const STALL_STEPS: u64 = 50;
pub const STALL_PROGRESS: f64 = 1e-3;

/// Everything needed to drive the robot from its current state into a
/// target region.
pub struct NavigationRequest<'a> {
    pub model: &'a dyn Dynamics,
    pub x_start: &'a [f64],
    /// Absolute start time (s), used for time stamps and the disturbance.
    pub start_time: f64,
    /// Full target state: region center on the position coordinates, zero elsewhere.
    pub target: &'a [f64],
    /// Untightened state set on positions (absolute coordinates).
    pub state_set: &'a ConstraintSet,
    pub input_set: &'a InputSet,
    pub tube: &'a TubeParams,
    pub fhocp: &'a FhocpParams,
    pub t_max: Rational,
    /// Keep regulating for this long after the stop test fires.
    pub hold: Rational,
}

/// Runs the tube controller until the stop test `‖x̂(t_k) − x_j‖₂ ≤ ε/√λ_min(P)`
/// fires (then holds for `req.hold`), the time budget runs out, or the
/// finite-horizon problem becomes infeasible.
pub fn navigate(req: &NavigationRequest<'_>, disturbance: &mut DisturbanceGenerator) -> Result<NavigationOutcome, ControlError> {
    let model = req.model;
    let n = model.dim();
    let fh = req.fhocp;
    fh.validate()?;
    if req.x_start.len() != n || req.target.len() != n {
        return Err(ControlError::Dynamics(DynamicsError::DimensionMismatch { expected: n, got: req.x_start.len() }));
    }
    let h = fh.h();
    let pos = model.position_indices();
    let target_pos = [req.target[pos[0]], req.target[pos[1]]];
    let e_set = tighten_state_constraints(req.state_set, &target_pos, req.tube.tube_radius)?;
    let u_tight = tighten_input_constraints(req.input_set, req.tube.sigma, req.tube.tube_radius)?;
    let x_rel = tighten_state_constraints(req.state_set, &target_pos, 0.0)?;
    let arrival_radius = fh.arrival_radius();
    let sub = fh.closed_loop_substeps;
    let dt = h / sub as f64;
    let max_steps = (req.t_max / fh.step).to_integer().max(0) as u64;
    let hold_steps = (req.hold / fh.step).to_integer().max(0) as u64;
    let m = fh.segments;
    let seg_len = fh.n() / m as f64;
    let sigma = req.tube.sigma;

    let mut out = NavigationOutcome {
        status: NavStatus::TimedOut,
        trace: NavTrace::default(),
        arrival_steps: None,
        arrival_time: None,
        arrival_index: None,
        costs: Vec::new(),
        saturations: 0,
        constraint_violations: 0,
        transfer_violations: 0,
        max_deviation: 0.0,
        solver_iterations: 0,
        message: None,
    };

    let mut x = req.x_start.to_vec();
    let mut e: Vec<f64> = x.iter().zip(req.target).map(|(a, b)| a - b).collect();
    let mut warm: Option<Vec<f64>> = None;
    let mut penalty = fh.penalty_start;
    let mut d = vec![0.0; n];
    let mut u_applied = vec![0.0; n];
    let mut first_sample = true;
    let mut scratch = JointScratch::new(n);

    let mut k: u64 = 0;
    let mut best_dist = f64::INFINITY;
    let mut best_step: u64 = 0;
    loop {
        let x_nom_now = x.clone();
        let dist = geometry::distance(&x_nom_now, req.target);
        if dist < best_dist - STALL_PROGRESS {
            best_dist = dist;
            best_step = k;
        }
        if out.arrival_steps.is_none() && geometry::distance(&x_nom_now, req.target) <= arrival_radius {
            out.arrival_steps = Some(k);
            out.arrival_time = Some(fh.step * Rational::from_integer(k as i64));
            out.status = NavStatus::Arrived;
            if first_sample {
                out.trace.push(req.start_time, &x, &x, &u_applied, &d);
                first_sample = false;
            }
            out.arrival_index = Some(out.trace.len() - 1);
        }
        match out.arrival_steps {
            Some(ka) if k >= ka + hold_steps => break,
            None if k >= max_steps => {
                out.status = NavStatus::TimedOut;
                break;
            }
            None if k >= best_step + STALL_STEPS => {
                out.status = NavStatus::TimedOut;
                out.message = Some(format!("no progress toward the target for {STALL_STEPS} steps"));
                break;
            }
            _ => {}
        }

        let sol = match solve_fhocp_with_penalty(&e, req.target, model, fh, &e_set, &u_tight, warm.as_deref(), penalty) {
            Ok(s) => s,
            Err(ControlError::Infeasible(msg)) => {
                out.status = NavStatus::InfeasibleFhocp;
                out.message = Some(msg);
                if first_sample {
                    out.trace.push(req.start_time, &x, &x, &u_applied, &d);
                }
                break;
            }
            Err(err) => return Err(err),
        };
        out.solver_iterations += sol.iterations;
        penalty = sol.penalty_weight / 10.0;
        out.costs.push(sol.cost);

        // closed loop over [t_k, t_k + h]
        let mut e_nom = e.clone();
        let t_k = k as f64 * h;
        for j in 0..sub {
            let t_rel = j as f64 * dt;
            let t_abs = req.start_time + t_k + t_rel;
            let seg = ((t_rel / seg_len) as usize).min(m - 1);
            let u_nom = &sol.controls[seg * n..(seg + 1) * n];
            let xp = [x[pos[0]], x[pos[1]]];
            d = disturbance.sample(t_abs, &xp, &target_pos, pos);
            if first_sample {
                let u0 = ancillary_control(u_nom, &e_nom, &e, sigma);
                out.trace.push(req.start_time + t_k, &x, &x, &u0, &d);
                first_sample = false;
            }
            let saturated = joint_rk4(
                model,
                req.target,
                &mut scratch,
                &mut e_nom,
                &mut e,
                u_nom,
                &d,
                sigma,
                req.input_set,
                dt,
                &mut u_applied,
            );
            if saturated {
                out.saturations += 1;
            }
            if e.iter().chain(e_nom.iter()).any(|v| !v.is_finite()) {
                return Err(ControlError::Dynamics(DynamicsError::NonFinite { t: t_abs + dt }));
            }
            for i in 0..n {
                x[i] = e[i] + req.target[i];
            }
            let x_nom: Vec<f64> = e_nom.iter().zip(req.target).map(|(a, b)| a + b).collect();
            let t_sample = req.start_time + t_k + (j + 1) as f64 * dt;
            out.trace.push(t_sample, &x, &x_nom, &u_applied, &d);

            let q = geometry::distance(&e, &e_nom);
            out.max_deviation = out.max_deviation.max(q);
            let xp = [x[pos[0]], x[pos[1]]];
            if !req.state_set.contains(&xp, MEMBERSHIP_TOL) {
                out.constraint_violations += 1;
            }
            let ep = [e_nom[pos[0]], e_nom[pos[1]]];
            let er = [e[pos[0]], e[pos[1]]];
            if e_set.contains(&ep, MEMBERSHIP_TOL) && !x_rel.contains(&er, MEMBERSHIP_TOL) {
                out.transfer_violations += 1;
            }
        }

        // shift the solution by one sampling step
        let mut next = vec![0.0; m * n];
        for i in 0..m {
            let t = i as f64 * seg_len + h;
            let src = (t / seg_len + 1e-9) as usize;
            if src < m {
                next[i * n..(i + 1) * n].copy_from_slice(&sol.controls[src * n..(src + 1) * n]);
            }
        }
        warm = Some(next);
        k += 1;
    }
    Ok(out)
}

struct JointScratch {
    ka: [Vec<f64>; 4],
    kb: [Vec<f64>; 4],
    ta: Vec<f64>,
    tb: Vec<f64>,
    xa: Vec<f64>,
    gu: Vec<f64>,
    u: Vec<f64>,
}

impl JointScratch {
    fn new(n: usize) -> Self {
        let z = || vec![0.0; n];
        JointScratch {
            ka: [z(), z(), z(), z()],
            kb: [z(), z(), z(), z()],
            ta: z(),
            tb: z(),
            xa: z(),
            gu: z(),
            u: z(),
        }
    }
}

/// RK4 on the joint nominal/true error system with the ancillary law
/// evaluated at every stage. Returns whether any stage input left `U`.
#[allow(clippy::too_many_arguments)]
fn joint_rk4(
    model: &dyn Dynamics,
    offset: &[f64],
    s: &mut JointScratch,
    e_nom: &mut [f64],
    e: &mut [f64],
    u_nom: &[f64],
    d: &[f64],
    sigma: f64,
    u_set: &InputSet,
    dt: f64,
    u_first: &mut [f64],
) -> bool {
    let n = e.len();
    let mut saturated = false;
    let JointScratch { ka, kb, ta, tb, xa, gu, u } = s;
    let coef = [0.0, 0.5, 0.5, 1.0];
    for stage in 0..4 {
        if stage == 0 {
            ta.copy_from_slice(e_nom);
            tb.copy_from_slice(e);
        } else {
            let c = coef[stage] * dt;
            for i in 0..n {
                ta[i] = e_nom[i] + c * ka[stage - 1][i];
                tb[i] = e[i] + c * kb[stage - 1][i];
            }
        }
        // nominal
        for i in 0..n {
            xa[i] = ta[i] + offset[i];
        }
        model.drift(xa, &mut ka[stage]);
        model.gain_mul(xa, u_nom, gu);
        for i in 0..n {
            ka[stage][i] += gu[i];
        }
        // true
        for i in 0..n {
            u[i] = u_nom[i] - sigma * (tb[i] - ta[i]);
        }
        if !u_set.contains(u, 1e-12) {
            saturated = true;
            u_set.project(u);
        }
        if stage == 0 {
            u_first.copy_from_slice(u);
        }
        for i in 0..n {
            xa[i] = tb[i] + offset[i];
        }
        model.drift(xa, &mut kb[stage]);
        model.gain_mul(xa, u, gu);
        for i in 0..n {
            kb[stage][i] += gu[i] + d[i];
        }
    }
    for i in 0..n {
        e_nom[i] += dt / 6.0 * (ka[0][i] + 2.0 * ka[1][i] + 2.0 * ka[2][i] + ka[3][i]);
        e[i] += dt / 6.0 * (kb[0][i] + 2.0 * kb[1][i] + 2.0 * kb[2][i] + kb[3][i]);
    }
    saturated
}
