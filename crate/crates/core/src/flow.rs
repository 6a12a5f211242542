//! Driver's flow: the flow on path space generated by `γ ↦ U_s(γ)h(s)`, its
//! pull-back `ξ_t = I⁻¹∘Φ_t∘I` to the anti-development, and the
//! Radon–Nikodym density `K_t = exp(∫₀ᵗ δ(h)(Φ_{−s}γ) ds)`.
//!
//! Two integrators are provided. [`FlowScheme::Development`] moves every grid
//! point of `γ` along the geodesic `exp(dt·U_s h(s))` with the velocity taken
//! at the implicit midpoint; frames are recomputed by anti-development. It
//! keeps `γ(1)` fixed when `h(1) = 0` and moves each point by at most
//! `dt·|h(s)|` per step. [`FlowScheme::Pullback`] integrates the pulled-back
//! equation
//!
//! `∂_t ξ(s) = h(s) + ½∫₀ˢ Ric_{U(τ)}h(τ) dτ − ∫₀ˢ q_h(τ) dξ(τ)`,
//! `q_h(s) = ∫₀ˢ Ω_{U(τ)}(h(τ), ∘dξ(τ))`,
//!
//! directly on `ξ` and re-develops the frames after every step. On a grid path
//! it uses the Stratonovich form `∂_t ξ(s) = h(s) − ∫₀ˢ q_h∘dξ`, which carries
//! no Ricci term and agrees with the Itô form above for Brownian `ξ`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::functionals::{divergence, CameronMartinVector};
use crate::manifold::{frame_apply, FramePoint, ManifoldModel};
use crate::transport::{antidevelop_with_frames, develop, EuclideanPath, FramePath, ManifoldPath};

pub const DEFAULT_PICARD_ITERS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowScheme {
    Development,
    Pullback,
}

/// Flow-time integration parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowConfig {
    pub dt: f64,
    pub t_final: f64,
    pub picard_iters: usize,
    pub scheme: FlowScheme,
}

impl FlowConfig {
    pub fn new(dt: f64, t_final: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) || !t_final.is_finite() {
            return Err(Error::ContractViolation(format!("invalid flow step {dt} or time {t_final}")));
        }
        let ratio = t_final.abs() / dt;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::ContractViolation(format!(
                "flow time {t_final} is not a whole number of steps {dt}"
            )));
        }
        Ok(Self {
            dt,
            t_final,
            picard_iters: DEFAULT_PICARD_ITERS,
            scheme: FlowScheme::Development,
        })
    }

    pub fn with_picard_iters(mut self, iters: usize) -> Self {
        self.picard_iters = iters;
        self
    }

    pub fn with_scheme(mut self, scheme: FlowScheme) -> Self {
        self.scheme = scheme;
        self
    }

    /// Step count and effective step for flowing by `t`: `⌈|t|/dt⌉` equal
    /// steps covering `t` exactly.
    pub fn steps_for(&self, t: f64) -> (usize, f64) {
        if t == 0.0 {
            return (0, 0.0);
        }
        let n = ((t.abs() / self.dt) - 1e-9).ceil().max(1.0) as usize;
        (n, t / n as f64)
    }
}

/// A path together with its anti-development and frames at flow time `t`.
#[derive(Debug, Clone)]
pub struct FlowState {
    pub xi: EuclideanPath,
    pub path: ManifoldPath,
    pub frames: FramePath,
    pub t: f64,
}

impl FlowState {
    pub fn from_path(model: &ManifoldModel, path: ManifoldPath, r0: &FramePoint) -> Result<Self> {
        let (xi, frames) = antidevelop_with_frames(model, &path, r0)?;
        Ok(Self { xi, path, frames, t: 0.0 })
    }

    pub fn from_input(model: &ManifoldModel, xi: EuclideanPath, r0: &FramePoint) -> Result<Self> {
        let (path, frames) = develop(model, &xi, r0)?;
        Ok(Self { xi, path, frames, t: 0.0 })
    }
}

fn check_direction(state: &FlowState, h: &CameronMartinVector) -> Result<()> {
    if h.grid() != state.xi.grid() || h.dim() != state.xi.dim() {
        return Err(Error::ContractViolation("direction and path use different grids".into()));
    }
    Ok(())
}

/// `q_h(s_k) = Σ_{i<k} Ω_{U_i}(h_{i+½}, Δξ_i)`, skew-symmetric by construction.
pub fn q_kernel(model: &ManifoldModel, state: &FlowState, h: &CameronMartinVector, k: usize) -> Result<DMatrix<f64>> {
    check_direction(state, h)?;
    let d = model.dim();
    let q = q_profile(model, &state.xi, &state.frames, h);
    Ok(DMatrix::from_column_slice(d, d, &q[k * d * d..(k + 1) * d * d]))
}

/// `q_h` at every grid point, as consecutive column-major `d × d` blocks.
fn q_profile(model: &ManifoldModel, xi: &EuclideanPath, frames: &FramePath, h: &CameronMartinVector) -> Vec<f64> {
    let n = xi.grid().steps();
    let d = model.dim();
    let dd = d * d;
    let mut q = vec![0.0; (n + 1) * dd];
    if model.is_flat() {
        return q;
    }
    let mut om = vec![0.0; dd];
    let mut hm = vec![0.0; d];
    for i in 0..n {
        let (h0, h1) = (h.h_at(i), h.h_at(i + 1));
        for j in 0..d {
            hm[j] = 0.5 * (h0[j] + h1[j]);
        }
        let dx = xi.increment(i);
        model.curvature_form_raw(frames.at(i), &hm, &dx, &mut om);
        for a in 0..dd {
            q[(i + 1) * dd + a] = q[i * dd + a] + om[a];
        }
    }
    q
}

/// Right-hand side of the pulled-back equation at every grid point, in the
/// Stratonovich form `h(s) − ∫₀ˢ q_h∘dξ` with `q_h` taken at segment
/// midpoints. For Brownian `ξ` this equals the Itô form with the `½Ric h`
/// correction. `sign` multiplies the `q`-term; the derived equation has
/// `sign = −1`.
fn pullback_velocity(
    model: &ManifoldModel,
    xi: &EuclideanPath,
    frames: &FramePath,
    h: &CameronMartinVector,
    sign: f64,
) -> Vec<f64> {
    let n = xi.grid().steps();
    let d = model.dim();
    let mut v = h.h().to_vec();
    if model.is_flat() {
        return v;
    }
    let q = q_profile(model, xi, frames, h);
    let mut acc = vec![0.0; d];
    for i in 0..n {
        let dx = xi.increment(i);
        let (q0, q1) = (&q[i * d * d..(i + 1) * d * d], &q[(i + 1) * d * d..(i + 2) * d * d]);
        for a in 0..d {
            let q_dx: f64 = (0..d).map(|b| 0.5 * (q0[b * d + a] + q1[b * d + a]) * dx[b]).sum();
            acc[a] += sign * q_dx;
        }
        for a in 0..d {
            v[(i + 1) * d + a] += acc[a];
        }
    }
    v
}

/// One flow step of size `dt` (negative steps flow backward).
pub fn flow_step(
    model: &ManifoldModel,
    r0: &FramePoint,
    state: &FlowState,
    h: &CameronMartinVector,
    dt: f64,
    cfg: &FlowConfig,
) -> Result<FlowState> {
    check_direction(state, h)?;
    match cfg.scheme {
        FlowScheme::Development => development_step(model, r0, state, h, dt, cfg.picard_iters),
        FlowScheme::Pullback => pullback_step(model, r0, state, h, dt, cfg.picard_iters, -1.0),
    }
}

fn integration_error(e: Error) -> Error {
    match e {
        Error::StepTooLarge { dist, .. } => {
            Error::Integration(format!("re-development failed: step of length {dist} reached the cut locus"))
        }
        other => other,
    }
}

fn development_step(
    model: &ManifoldModel,
    r0: &FramePoint,
    state: &FlowState,
    h: &CameronMartinVector,
    dt: f64,
    picard_iters: usize,
) -> Result<FlowState> {
    let grid = state.path.grid();
    let n = grid.steps();
    let (l, d) = (model.embed_dim(), model.dim());
    let p = state.path.raw();
    let mut w = vec![0.0; (n + 1) * l];
    for k in 0..=n {
        w[k * l..(k + 1) * l].copy_from_slice(&frame_apply(state.frames.at(k), l, d, h.h_at(k)));
    }
    if !model.is_flat() {
        let mut mid = vec![0.0; (n + 1) * l];
        let mut back = vec![0.0; l];
        for _ in 0..=picard_iters {
            mid.copy_from_slice(p);
            for k in 0..=n {
                let step: Vec<f64> = w[k * l..(k + 1) * l].iter().map(|v| 0.5 * dt * v).collect();
                model.exp_in_place(&mut mid[k * l..(k + 1) * l], &step);
            }
            let mid_path = ManifoldPath::from_raw(grid, l, mid.clone());
            let (_, mid_frames) = antidevelop_with_frames(model, &mid_path, r0).map_err(integration_error)?;
            for k in 0..=n {
                let mk = &mid[k * l..(k + 1) * l];
                let mut v = frame_apply(mid_frames.at(k), l, d, h.h_at(k));
                model.log_raw(mk, &p[k * l..(k + 1) * l], &mut back).map_err(integration_error)?;
                model.transport_along(mk, &back, &mut v);
                w[k * l..(k + 1) * l].copy_from_slice(&v);
            }
        }
    }
    let mut next = p.to_vec();
    for k in 0..=n {
        let step: Vec<f64> = w[k * l..(k + 1) * l].iter().map(|v| dt * v).collect();
        model.exp_in_place(&mut next[k * l..(k + 1) * l], &step);
    }
    let path = ManifoldPath::from_raw(grid, l, next);
    let (xi, frames) = antidevelop_with_frames(model, &path, r0).map_err(integration_error)?;
    Ok(FlowState {
        xi,
        path,
        frames,
        t: state.t + dt,
    })
}

fn pullback_step(
    model: &ManifoldModel,
    r0: &FramePoint,
    state: &FlowState,
    h: &CameronMartinVector,
    dt: f64,
    picard_iters: usize,
    sign: f64,
) -> Result<FlowState> {
    let grid = state.xi.grid();
    let d = model.dim();
    let mut v = pullback_velocity(model, &state.xi, &state.frames, h, sign);
    if !model.is_flat() {
        for _ in 0..=picard_iters {
            let half = state.xi.axpy(0.5 * dt, &EuclideanPath::from_values(grid, d, v.clone())?)?;
            let (_, frames) = develop(model, &half, r0)?;
            v = pullback_velocity(model, &half, &frames, h, sign);
        }
    }
    let xi = state.xi.axpy(dt, &EuclideanPath::from_values(grid, d, v)?)?;
    let (path, frames) = develop(model, &xi, r0)?;
    Ok(FlowState {
        xi,
        path,
        frames,
        t: state.t + dt,
    })
}

/// Flows `state` by time `t` in `⌈|t|/dt⌉` equal steps.
pub fn flow_by(
    model: &ManifoldModel,
    r0: &FramePoint,
    state: &FlowState,
    h: &CameronMartinVector,
    t: f64,
    cfg: &FlowConfig,
) -> Result<FlowState> {
    let (steps, dt) = cfg.steps_for(t);
    let mut s = state.clone();
    for _ in 0..steps {
        s = flow_step(model, r0, &s, h, dt, cfg)?;
    }
    Ok(s)
}

/// `ξ_t(x)`: the pulled-back flow applied to a Euclidean input.
pub fn flow_integrate(
    model: &ManifoldModel,
    r0: &FramePoint,
    x: &EuclideanPath,
    h: &CameronMartinVector,
    t: f64,
    cfg: &FlowConfig,
) -> Result<FlowState> {
    let state = FlowState::from_input(model, x.clone(), r0)?;
    flow_by(model, r0, &state, h, t, cfg)
}

/// `Φ_t(γ) = I(ξ_t(I⁻¹γ))`. On a flat torus this is the exact translation
/// `γ + t·r₀h`.
pub fn flow_on_loops(
    model: &ManifoldModel,
    r0: &FramePoint,
    path: &ManifoldPath,
    h: &CameronMartinVector,
    t: f64,
    cfg: &FlowConfig,
) -> Result<FlowState> {
    if model.is_flat() {
        let (xi, _) = antidevelop_with_frames(model, path, r0)?;
        let moved = xi.axpy(t, &h.as_path())?;
        let mut state = FlowState::from_input(model, moved, r0)?;
        state.t = t;
        return Ok(state);
    }
    let state = FlowState::from_path(model, path.clone(), r0)?;
    flow_by(model, r0, &state, h, t, cfg)
}

/// `K_t(γ)` and the values `δ(h)(Φ_{−s}γ)` on the flow-time grid used by the
/// trapezoid rule.
#[derive(Debug, Clone)]
pub struct DensityEstimate {
    pub k_t: f64,
    pub log_k_t: f64,
    pub divergences: Vec<f64>,
}

/// `K_t(γ) = exp(∫₀ᵗ δ(h)(Φ_{−s}γ) ds)` by the trapezoid rule on the backward
/// orbit, computed with flow step `cfg.dt`.
pub fn radon_nikodym(
    model: &ManifoldModel,
    r0: &FramePoint,
    path: &ManifoldPath,
    h: &CameronMartinVector,
    t: f64,
    cfg: &FlowConfig,
) -> Result<DensityEstimate> {
    if !h.in_h0() {
        return Err(Error::ContractViolation("density requires h(1) = 0".into()));
    }
    let mut state = FlowState::from_path(model, path.clone(), r0)?;
    let (steps, dt) = cfg.steps_for(t);
    let mut divs = Vec::with_capacity(steps + 1);
    divs.push(divergence(model, h, &state.xi, &state.frames)?);
    for _ in 0..steps {
        state = if model.is_flat() {
            let xi = state.xi.axpy(-dt, &h.as_path())?;
            FlowState::from_input(model, xi, r0)?
        } else {
            flow_step(model, r0, &state, h, -dt, cfg)?
        };
        divs.push(divergence(model, h, &state.xi, &state.frames)?);
    }
    let log_k = if steps == 0 {
        0.0
    } else {
        let inner: f64 = divs[1..steps].iter().sum();
        dt * (0.5 * (divs[0] + divs[steps]) + inner)
    };
    Ok(DensityEstimate {
        k_t: log_k.exp(),
        log_k_t: log_k,
        divergences: divs,
    })
}

/// `K_t = exp(tδ(h) − t²‖h‖²_H/2)` on a flat torus.
pub fn flat_density(delta: f64, h_norm_sq: f64, t: f64) -> f64 {
    (t * delta - 0.5 * t * t * h_norm_sq).exp()
}

/// `‖ξ_s(ξ_t(x)) − ξ_{s+t}(x)‖_∞`.
pub fn flow_property_check(
    model: &ManifoldModel,
    r0: &FramePoint,
    x: &EuclideanPath,
    h: &CameronMartinVector,
    s: f64,
    t: f64,
    cfg: &FlowConfig,
) -> Result<f64> {
    let after_t = flow_integrate(model, r0, x, h, t, cfg)?;
    let composed = flow_by(model, r0, &after_t, h, s, cfg)?;
    let direct = flow_integrate(model, r0, x, h, s + t, cfg)?;
    Ok(composed.xi.sup_distance(&direct.xi))
}

/// Largest deviation from `∇_t U = U q_h` between two consecutive flow
/// states: `‖P_T(F(t+dt) − F(t))/dt − F(t)q‖` over grid points, with `P_T`
/// the tangential projection at `γ_t(s)`.
pub fn bismut_defect(
    model: &ManifoldModel,
    before: &FramePath,
    before_state: &FlowState,
    after: &FramePath,
    h: &CameronMartinVector,
    dt: f64,
) -> f64 {
    let (l, d) = (model.embed_dim(), model.dim());
    let q = q_profile(model, &before_state.xi, before, h);
    let mut worst: f64 = 0.0;
    for k in 0..=before.grid().steps() {
        let f0 = before.at(k);
        let f1 = after.at(k);
        let p = before_state.path.at(k);
        let qk = &q[k * d * d..(k + 1) * d * d];
        for j in 0..d {
            let mut diff: Vec<f64> = (0..l).map(|a| (f1[j * l + a] - f0[j * l + a]) / dt).collect();
            if !model.is_flat() {
                let r: f64 = diff.iter().zip(p).map(|(a, b)| a * b).sum();
                diff.iter_mut().zip(p).for_each(|(a, b)| *a -= r * b);
            }
            for a in 0..l {
                let fq: f64 = (0..d).map(|b| f0[b * l + a] * qk[j * d + b]).sum();
                worst = worst.max((diff[a] - fq).abs());
            }
        }
    }
    worst
}
