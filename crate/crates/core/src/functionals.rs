//! Cameron–Martin directions, divergence functionals, cylindrical functionals
//! and their directional derivatives, the first Malliavin derivative of the
//! divergence, and fractional Hölder norms of paths.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::manifold::{dot, ManifoldKind, ManifoldModel, FramePoint};
use crate::transport::{develop, EuclideanPath, FramePath, ManifoldPath, TimeGrid};

/// A finite-energy direction `h` with `h(0) = 0`: `ḣ` on step midpoints and
/// `h` at grid points, both row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CameronMartinVector {
    grid: TimeGrid,
    dim: usize,
    hdot: Vec<f64>,
    h: Vec<f64>,
    in_h0: bool,
}

impl CameronMartinVector {
    /// Builds `h` as the cumulative midpoint integral of `ḣ` (`N·d` values).
    pub fn from_hdot(grid: TimeGrid, dim: usize, hdot: Vec<f64>) -> Result<Self> {
        let n = grid.steps();
        if hdot.len() != n * dim {
            return Err(Error::ContractViolation(format!(
                "ḣ needs {} values, got {}",
                n * dim,
                hdot.len()
            )));
        }
        if hdot.iter().any(|v| !v.is_finite()) {
            return Err(Error::ContractViolation("non-finite ḣ".into()));
        }
        let dt = grid.dt();
        let mut h = vec![0.0; (n + 1) * dim];
        for k in 0..n {
            for j in 0..dim {
                h[(k + 1) * dim + j] = h[k * dim + j] + hdot[k * dim + j] * dt;
            }
        }
        let end = &h[n * dim..];
        let in_h0 = end.iter().map(|v| v * v).sum::<f64>().sqrt() < 1e-12;
        Ok(Self {
            grid,
            dim,
            hdot,
            h,
            in_h0,
        })
    }

    pub fn zero(grid: TimeGrid, dim: usize) -> Self {
        Self::from_hdot(grid, dim, vec![0.0; grid.steps() * dim]).expect("sizes match")
    }

    /// `ḣ` sampled from a function at the step midpoints.
    pub fn from_fn<F: Fn(f64) -> Vec<f64>>(grid: TimeGrid, dim: usize, hdot: F) -> Result<Self> {
        let dt = grid.dt();
        let mut v = Vec::with_capacity(grid.steps() * dim);
        for k in 0..grid.steps() {
            let val = hdot((k as f64 + 0.5) * dt);
            if val.len() != dim {
                return Err(Error::ContractViolation("ḣ has the wrong dimension".into()));
            }
            v.extend(val);
        }
        Self::from_hdot(grid, dim, v)
    }

    /// `Σ c·√2cos(kπs)·e_j` over `(k, j, c)` modes; in `H₀` for `k ≥ 1`
    /// (the midpoint sums of the cosines vanish).
    pub fn fourier(grid: TimeGrid, dim: usize, modes: &[FourierMode]) -> Result<Self> {
        for m in modes {
            if m.component >= dim || m.k == 0 {
                return Err(Error::ContractViolation(format!(
                    "invalid Fourier mode k={} in component {}",
                    m.k, m.component
                )));
            }
        }
        Self::from_fn(grid, dim, |s| {
            let mut v = vec![0.0; dim];
            for m in modes {
                v[m.component] += m.coeff * 2f64.sqrt() * (m.k as f64 * PI * s).cos();
            }
            v
        })
    }

    /// `ḣ(s) = Σ_i c_i sⁱ·e_j`.
    pub fn polynomial(grid: TimeGrid, dim: usize, component: usize, coeffs: &[f64]) -> Result<Self> {
        if component >= dim {
            return Err(Error::ContractViolation("component out of range".into()));
        }
        Self::from_fn(grid, dim, |s| {
            let mut v = vec![0.0; dim];
            v[component] = coeffs.iter().rev().fold(0.0, |acc, c| acc * s + c);
            v
        })
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        if self.grid != other.grid || self.dim != other.dim {
            return Err(Error::ContractViolation("directions live on different grids".into()));
        }
        let hdot = self
            .hdot
            .iter()
            .zip(&other.hdot)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Self::from_hdot(self.grid, self.dim, hdot)
    }

    pub fn scale(&self, c: f64) -> Self {
        Self::from_hdot(self.grid, self.dim, self.hdot.iter().map(|v| c * v).collect())
            .expect("sizes match")
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn in_h0(&self) -> bool {
        self.in_h0
    }

    pub fn hdot(&self) -> &[f64] {
        &self.hdot
    }

    pub fn h(&self) -> &[f64] {
        &self.h
    }

    pub fn hdot_at(&self, k: usize) -> &[f64] {
        &self.hdot[k * self.dim..(k + 1) * self.dim]
    }

    pub fn h_at(&self, k: usize) -> &[f64] {
        &self.h[k * self.dim..(k + 1) * self.dim]
    }

    /// `h` as a Euclidean path (it starts at the origin).
    pub fn as_path(&self) -> EuclideanPath {
        EuclideanPath::from_values(self.grid, self.dim, self.h.clone()).expect("h(0) = 0")
    }

    /// `(∫_s¹|ḣ|²)^{1/2}` for grid time `s`.
    pub fn tail_energy(&self, k: usize) -> f64 {
        (self.hdot[k * self.dim..].iter().map(|v| v * v).sum::<f64>() * self.grid.dt()).sqrt()
    }
}

/// One Fourier direction `coeff·√2cos(kπs)·e_component`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourierMode {
    pub k: usize,
    pub component: usize,
    pub coeff: f64,
}

impl FourierMode {
    pub fn new(k: usize, component: usize, coeff: f64) -> Self {
        Self { k, component, coeff }
    }
}

/// `‖h‖_H = (Σ|ḣ_k|²Δt)^{1/2}`.
pub fn cm_norm(h: &CameronMartinVector) -> f64 {
    cm_inner(h, h).sqrt()
}

/// `⟨h, k⟩_H` by the midpoint rule.
pub fn cm_inner(h: &CameronMartinVector, k: &CameronMartinVector) -> f64 {
    h.hdot.iter().zip(&k.hdot).map(|(a, b)| a * b).sum::<f64>() * h.grid.dt()
}

fn check_shared(h: &CameronMartinVector, x: &EuclideanPath, frames: &FramePath) -> Result<()> {
    if h.grid != x.grid() || h.grid != frames.grid() {
        return Err(Error::ContractViolation("direction, path and frames use different grids".into()));
    }
    if h.dim != x.dim() || h.dim != frames.dim() {
        return Err(Error::ContractViolation("direction and path dimensions differ".into()));
    }
    Ok(())
}

/// Running values `δ_{t_k}(h)` for every grid index `k`: left-point sums
/// `Σ_{i<k} ⟨ḣ_i + ½Ric_{r_i}h_i, Δx_i⟩`.
pub fn divergence_profile(
    model: &ManifoldModel,
    h: &CameronMartinVector,
    x: &EuclideanPath,
    frames: &FramePath,
) -> Result<Vec<f64>> {
    check_shared(h, x, frames)?;
    let n = h.grid.steps();
    let d = h.dim;
    let mut out = Vec::with_capacity(n + 1);
    out.push(0.0);
    let mut ric = vec![0.0; d * d];
    let mut integrand = vec![0.0; d];
    let mut acc = 0.0;
    let flat = model.is_flat();
    for k in 0..n {
        integrand.copy_from_slice(h.hdot_at(k));
        if !flat {
            model.ricci_raw(frames.at(k), &mut ric);
            let hk = h.h_at(k);
            for i in 0..d {
                integrand[i] += 0.5 * (0..d).map(|j| ric[j * d + i] * hk[j]).sum::<f64>();
            }
        }
        let xk = x.at(k);
        let xk1 = x.at(k + 1);
        acc += (0..d).map(|i| integrand[i] * (xk1[i] - xk[i])).sum::<f64>();
        out.push(acc);
    }
    Ok(out)
}

/// Truncated divergence `δ_s(h)` at grid time `s`.
pub fn divergence_trunc(
    model: &ManifoldModel,
    h: &CameronMartinVector,
    x: &EuclideanPath,
    frames: &FramePath,
    s: f64,
) -> Result<f64> {
    let k = h.grid.index_of(s)?;
    Ok(divergence_profile(model, h, x, frames)?[k])
}

/// `δ(h) = δ₁(h)`.
pub fn divergence(
    model: &ManifoldModel,
    h: &CameronMartinVector,
    x: &EuclideanPath,
    frames: &FramePath,
) -> Result<f64> {
    Ok(*divergence_profile(model, h, x, frames)?.last().expect("non-empty"))
}

/// Discrete quadratic variation `Σ|ḣ_k + ½Ric_k h_k|²Δt` of the divergence
/// integrand along the frames.
pub fn divergence_qv(model: &ManifoldModel, h: &CameronMartinVector, frames: &FramePath) -> f64 {
    let d = h.dim;
    let mut ric = vec![0.0; d * d];
    let mut total = 0.0;
    for k in 0..h.grid.steps() {
        model.ricci_raw(frames.at(k), &mut ric);
        let hk = h.h_at(k);
        let hd = h.hdot_at(k);
        for i in 0..d {
            let v = hd[i] + 0.5 * (0..d).map(|j| ric[j * d + i] * hk[j]).sum::<f64>();
            total += v * v;
        }
    }
    total * h.grid.dt()
}

/// The bound `((1 + ‖Ric‖_∞/2)‖h‖_H)²` on [`divergence_qv`].
pub fn divergence_qv_bound(model: &ManifoldModel, h: &CameronMartinVector) -> f64 {
    ((1.0 + model.ricci_sup_norm() / 2.0) * cm_norm(h)).powi(2)
}

/// A smooth real function on `M` with a closed-form gradient.
#[derive(Debug, Clone, PartialEq)]
pub enum PointFunction {
    Constant(f64),
    /// `⟨a, y⟩` in ambient coordinates (degree-1 harmonic on the sphere).
    Linear(Vec<f64>),
    /// `⟨y, A y⟩` for a symmetric `A` (row-major); trace-free `A` gives a
    /// degree-2 harmonic on the sphere.
    Quadratic(Vec<f64>),
    /// `cos(Σ 2πk_i y_i/L_i + phase)` on a torus.
    TorusFourier { wavenumbers: Vec<i32>, phase: f64 },
}

impl PointFunction {
    /// `cos(y_j·2π/L_j + phase)` shortcut.
    pub fn torus_cos(dim: usize, component: usize, phase: f64) -> Self {
        let mut k = vec![0; dim];
        k[component] = 1;
        PointFunction::TorusFourier {
            wavenumbers: k,
            phase,
        }
    }

    pub fn eval(&self, model: &ManifoldModel, y: &[f64]) -> f64 {
        match self {
            PointFunction::Constant(c) => *c,
            PointFunction::Linear(a) => dot(a, y),
            PointFunction::Quadratic(a) => {
                let l = y.len();
                (0..l)
                    .map(|i| y[i] * (0..l).map(|j| a[i * l + j] * y[j]).sum::<f64>())
                    .sum()
            }
            PointFunction::TorusFourier { wavenumbers, phase } => {
                (torus_phase(model, wavenumbers, y) + phase).cos()
            }
        }
    }

    /// Riemannian gradient (ambient, tangent at `y`).
    pub fn grad(&self, model: &ManifoldModel, y: &[f64]) -> Vec<f64> {
        let l = y.len();
        let mut g = match self {
            PointFunction::Constant(_) => vec![0.0; l],
            PointFunction::Linear(a) => a.clone(),
            PointFunction::Quadratic(a) => (0..l)
                .map(|i| (0..l).map(|j| (a[i * l + j] + a[j * l + i]) * y[j]).sum())
                .collect(),
            PointFunction::TorusFourier { wavenumbers, phase } => {
                let s = -(torus_phase(model, wavenumbers, y) + phase).sin();
                let lengths = model.torus_lengths().unwrap_or(&[]);
                wavenumbers
                    .iter()
                    .zip(lengths)
                    .map(|(&k, &len)| s * 2.0 * PI * k as f64 / len)
                    .collect()
            }
        };
        if let ManifoldKind::UnitSphere2 = model.kind() {
            let r = dot(&g, y);
            g.iter_mut().zip(y).for_each(|(gi, yi)| *gi -= r * yi);
        }
        g
    }

    fn validate(&self, model: &ManifoldModel) -> Result<()> {
        let l = model.embed_dim();
        let ok = match self {
            PointFunction::Constant(_) => true,
            PointFunction::Linear(a) => a.len() == l && !model.is_flat(),
            PointFunction::Quadratic(a) => {
                a.len() == l * l
                    && !model.is_flat()
                    && (0..l).all(|i| (0..l).all(|j| (a[i * l + j] - a[j * l + i]).abs() < 1e-14))
            }
            PointFunction::TorusFourier { wavenumbers, .. } => model.is_flat() && wavenumbers.len() == l,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::ContractViolation(format!(
                "point function {self:?} is not a smooth function on this manifold"
            )))
        }
    }
}

fn torus_phase(model: &ManifoldModel, k: &[i32], y: &[f64]) -> f64 {
    let lengths = model.torus_lengths().unwrap_or(&[]);
    k.iter()
        .zip(lengths)
        .zip(y)
        .map(|((&k, &len), &yi)| 2.0 * PI * k as f64 * yi / len)
        .sum()
}

/// `F(γ) = c·Π_i φ_i(γ(s_i))` for grid times `0 < s_i < 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct CylindricalFunctional {
    scale: f64,
    factors: Vec<(f64, PointFunction)>,
}

impl CylindricalFunctional {
    pub fn new(model: &ManifoldModel, scale: f64, factors: Vec<(f64, PointFunction)>) -> Result<Self> {
        for (s, f) in &factors {
            if !(*s > 0.0 && *s < 1.0) {
                return Err(Error::ContractViolation(format!(
                    "evaluation time {s} is not inside (0, 1)"
                )));
            }
            f.validate(model)?;
        }
        Ok(Self { scale, factors })
    }

    pub fn constant(c: f64) -> Self {
        Self {
            scale: c,
            factors: Vec::new(),
        }
    }

    pub fn factors(&self) -> &[(f64, PointFunction)] {
        &self.factors
    }

    fn indices(&self, grid: TimeGrid) -> Result<Vec<usize>> {
        self.factors.iter().map(|(s, _)| grid.index_of(*s)).collect()
    }

    pub fn eval(&self, model: &ManifoldModel, path: &ManifoldPath) -> Result<f64> {
        let idx = self.indices(path.grid())?;
        Ok(self.scale
            * self
                .factors
                .iter()
                .zip(&idx)
                .map(|((_, f), &k)| f.eval(model, path.at(k)))
                .product::<f64>())
    }

    /// `D_hF(γ) = Σ_i ⟨grad⁽ⁱ⁾f, U_{s_i}h(s_i)⟩`.
    pub fn dh(
        &self,
        model: &ManifoldModel,
        h: &CameronMartinVector,
        path: &ManifoldPath,
        frames: &FramePath,
    ) -> Result<f64> {
        if h.grid() != path.grid() || h.grid() != frames.grid() {
            return Err(Error::ContractViolation("direction and path use different grids".into()));
        }
        let idx = self.indices(path.grid())?;
        let values: Vec<f64> = self
            .factors
            .iter()
            .zip(&idx)
            .map(|((_, f), &k)| f.eval(model, path.at(k)))
            .collect();
        let (l, d) = (model.embed_dim(), model.dim());
        let mut total = 0.0;
        for (i, ((_, f), &k)) in self.factors.iter().zip(&idx).enumerate() {
            let others: f64 = values
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, v)| v)
                .product();
            if others == 0.0 {
                continue;
            }
            let g = f.grad(model, path.at(k));
            let frame = frames.at(k);
            let hk = h.h_at(k);
            let uh: Vec<f64> = (0..l)
                .map(|a| (0..d).map(|j| frame[j * l + a] * hk[j]).sum())
                .collect();
            total += others * dot(&g, &uh);
        }
        Ok(self.scale * total)
    }
}

/// Convenience wrapper for [`CylindricalFunctional::dh`].
pub fn dh_cylindrical(
    model: &ManifoldModel,
    f: &CylindricalFunctional,
    h: &CameronMartinVector,
    path: &ManifoldPath,
    frames: &FramePath,
) -> Result<f64> {
    f.dh(model, h, path, frames)
}

/// Perturbation size for the finite-difference covariant derivative of `J`.
const JACOBI_FD_EPS: f64 = 1e-5;

/// `⟨∇δ̂(h), k⟩ = ∫⟨ḣ + J h, k̇⟩ds + ∫⟨(∇_kJ)h, dx⟩` with `J = ½Ric` along
/// the development of `x`. The second term differences `J` along the
/// developments of `x ± εk`.
pub fn malliavin_deriv_div(
    model: &ManifoldModel,
    r0: &FramePoint,
    h: &CameronMartinVector,
    k: &CameronMartinVector,
    x: &EuclideanPath,
) -> Result<f64> {
    let (_, frames) = develop(model, x, r0)?;
    check_shared(h, x, &frames)?;
    if k.grid != h.grid || k.dim != h.dim {
        return Err(Error::ContractViolation("directions use different grids".into()));
    }
    let n = h.grid.steps();
    let d = h.dim;
    let dt = h.grid.dt();
    let mut ric = vec![0.0; d * d];
    let mut first = 0.0;
    for i in 0..n {
        model.ricci_raw(frames.at(i), &mut ric);
        let hi = h.h_at(i);
        let hd = h.hdot_at(i);
        let kd = k.hdot_at(i);
        for a in 0..d {
            let jh = 0.5 * (0..d).map(|b| ric[b * d + a] * hi[b]).sum::<f64>();
            first += (hd[a] + jh) * kd[a] * dt;
        }
    }
    if model.is_flat() {
        return Ok(first);
    }
    let kp = k.as_path();
    let (_, plus) = develop(model, &x.axpy(JACOBI_FD_EPS, &kp)?, r0)?;
    let (_, minus) = develop(model, &x.axpy(-JACOBI_FD_EPS, &kp)?, r0)?;
    let mut rp = vec![0.0; d * d];
    let mut rm = vec![0.0; d * d];
    let mut second = 0.0;
    for i in 0..n {
        model.ricci_raw(plus.at(i), &mut rp);
        model.ricci_raw(minus.at(i), &mut rm);
        let hi = h.h_at(i);
        let dx = x.increment(i);
        for a in 0..d {
            let djh: f64 = (0..d)
                .map(|b| 0.5 * (rp[b * d + a] - rm[b * d + a]) / (2.0 * JACOBI_FD_EPS) * hi[b])
                .sum();
            second += djh * dx[a];
        }
    }
    Ok(first + second)
}

/// The divergence as a function of the Wiener input: `δ̂(h)(x)` along the
/// development of `x`.
pub fn divergence_of_input(
    model: &ManifoldModel,
    r0: &FramePoint,
    h: &CameronMartinVector,
    x: &EuclideanPath,
) -> Result<f64> {
    let (_, frames) = develop(model, x, r0)?;
    divergence(model, h, x, &frames)
}

/// Exponent pair `(m, α)` of the fractional Hölder norm `‖·‖_{2m,α}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HolderParams {
    m: u32,
    alpha: f64,
}

impl HolderParams {
    /// Requires `m ≥ 1` and `0 < α < 1/2`. The Fernique-type results need
    /// additionally `m ≥ 2` and `α > 1/(2m)`; see [`Self::in_embedding_range`].
    pub fn new(m: u32, alpha: f64) -> Result<Self> {
        if m < 1 || !(alpha > 0.0 && alpha < 0.5) {
            return Err(Error::ContractViolation(format!(
                "Hölder parameters need m ≥ 1 and 0 < α < 1/2, got m={m}, α={alpha}"
            )));
        }
        Ok(Self { m, alpha })
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `m ≥ 2` and `1/(2m) < α < 1/2`, where the norm controls the sup norm
    /// and is finite on Brownian paths.
    pub fn in_embedding_range(&self) -> bool {
        self.m >= 2 && self.alpha > 1.0 / (2.0 * self.m as f64)
    }
}

/// Pair weights `w_i w_j Δt² / |t_i − t_j|^{1+2mα}` by lag, with trapezoid end
/// weights folded in per pair.
struct HolderKernel {
    n: usize,
    lag_weight: Vec<f64>,
    p: i32,
}

impl HolderKernel {
    fn new(grid: TimeGrid, params: &HolderParams) -> Self {
        let n = grid.steps();
        let dt = grid.dt();
        let expo = 1.0 + 2.0 * params.m as f64 * params.alpha;
        let lag_weight = (0..=n)
            .map(|lag| if lag == 0 { 0.0 } else { dt * dt / (lag as f64 * dt).powf(expo) })
            .collect();
        Self {
            n,
            lag_weight,
            p: 2 * params.m as i32,
        }
    }

    fn end_weight(&self, i: usize) -> f64 {
        if i == 0 || i == self.n {
            0.5
        } else {
            1.0
        }
    }

    /// `Σ_{i≠j}` of the weighted integrand for a path with `dim` components.
    fn sum(&self, values: &[f64], dim: usize) -> f64 {
        let mut total = 0.0;
        for i in 0..=self.n {
            let wi = self.end_weight(i);
            let xi = &values[i * dim..(i + 1) * dim];
            let mut row = 0.0;
            for j in (i + 1)..=self.n {
                let xj = &values[j * dim..(j + 1) * dim];
                let r2: f64 = xi.iter().zip(xj).map(|(a, b)| (a - b) * (a - b)).sum();
                row += self.end_weight(j) * self.lag_weight[j - i] * r2.powi(self.p / 2);
            }
            total += wi * row;
        }
        2.0 * total
    }

    /// Gradient of [`Self::sum`] for a scalar path.
    fn grad_scalar(&self, w: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|g| *g = 0.0);
        for i in 0..=self.n {
            let wi = self.end_weight(i);
            for j in (i + 1)..=self.n {
                let diff = w[i] - w[j];
                let c = 2.0
                    * wi
                    * self.end_weight(j)
                    * self.lag_weight[j - i]
                    * self.p as f64
                    * diff.powi(self.p - 1);
                out[i] += c;
                out[j] -= c;
            }
        }
    }
}

/// `‖x‖_{2m,α} = (∬ |x(t)−x(s)|^{2m}/|t−s|^{1+2mα} dt ds)^{1/2m}` by the
/// double trapezoid rule over grid pairs, excluding the diagonal.
pub fn holder_norm(x: &EuclideanPath, params: &HolderParams) -> f64 {
    let kernel = HolderKernel::new(x.grid(), params);
    kernel.sum(x.values(), x.dim()).powf(1.0 / (2.0 * params.m as f64))
}

/// Outcome of the variational problem for the Fernique constant.
#[derive(Debug, Clone, PartialEq)]
pub struct RateConstant {
    /// `½ inf{‖w‖_H² : ‖w‖_{2m,α} = level}` over the starts.
    pub value: f64,
    /// Values reached from each start.
    pub per_start: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

const RATE_MAX_ITERS: usize = 5000;
const RATE_TOL: f64 = 1e-13;

/// `λ₀ = ½ inf{‖w‖_H² : ‖w‖_{2m,α} = 1}` over scalar grid paths `w(0) = 0`.
///
/// Equivalent to maximizing the convex 1-homogeneous `u ↦ ‖w(u)‖_{2m,α}` over
/// the unit sphere of `ẇ = u` in `L²`; the normalized-gradient iteration
/// `u ← ∇/‖∇‖` ascends monotonically from each start.
pub fn holder_rate_constant(params: &HolderParams, grid: TimeGrid, starts: usize, seed: u64) -> RateConstant {
    holder_rate_constant_at_level(params, grid, starts, seed, 1.0)
}

/// As [`holder_rate_constant`] with the constraint `‖w‖_{2m,α} = level`.
pub fn holder_rate_constant_at_level(
    params: &HolderParams,
    grid: TimeGrid,
    starts: usize,
    seed: u64,
    level: f64,
) -> RateConstant {
    let kernel = HolderKernel::new(grid, params);
    let n = grid.steps();
    let dt = grid.dt();
    let inv_p = 1.0 / (2.0 * params.m as f64);
    let mut per_start = Vec::with_capacity(starts);
    let mut converged = true;
    let mut iterations = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = vec![0.0; n + 1];
    let mut gw = vec![0.0; n + 1];
    for _ in 0..starts.max(1) {
        let mut u: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        normalize_l2(&mut u, dt);
        let mut best = 0.0;
        let mut done = false;
        for it in 0..RATE_MAX_ITERS {
            integrate_scalar(&u, dt, &mut w);
            let s = kernel.sum(&w, 1);
            let norm = s.powf(inv_p);
            // ∂‖w‖/∂w_i, then the L² gradient in u is the reverse cumulative sum.
            kernel.grad_scalar(&w, &mut gw);
            let scale = inv_p * s.powf(inv_p - 1.0);
            let mut acc = 0.0;
            for k in (0..n).rev() {
                acc += gw[k + 1] * scale;
                u[k] = acc;
            }
            normalize_l2(&mut u, dt);
            iterations = iterations.max(it + 1);
            if (norm - best).abs() <= RATE_TOL * norm {
                best = norm;
                done = true;
                break;
            }
            best = norm;
        }
        converged &= done;
        // With ‖u‖_{L²} = 1, λ = ½(level / max‖w‖)².
        per_start.push(0.5 * (level / best).powi(2));
    }
    let value = per_start.iter().copied().fold(f64::INFINITY, f64::min);
    RateConstant {
        value,
        per_start,
        converged,
        iterations,
    }
}

fn normalize_l2(u: &mut [f64], dt: f64) {
    let norm = (u.iter().map(|v| v * v).sum::<f64>() * dt).sqrt();
    u.iter_mut().for_each(|v| *v /= norm);
}

fn integrate_scalar(u: &[f64], dt: f64, w: &mut [f64]) {
    w[0] = 0.0;
    for k in 0..u.len() {
        w[k + 1] = w[k] + u[k] * dt;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::develop;

    fn grid(n: usize) -> TimeGrid {
        TimeGrid::new(n).unwrap()
    }

    #[test]
    fn cm_norm_values() {
        let g = grid(1024);
        assert_eq!(cm_norm(&CameronMartinVector::zero(g, 2)), 0.0);
        let h = CameronMartinVector::fourier(g, 1, &[FourierMode::new(1, 0, 1.0)]).unwrap();
        assert!((cm_norm(&h) - 1.0).abs() < 1e-10);
        assert!(h.in_h0());
        assert_eq!(cm_norm(&h.scale(-2.0)), 2.0 * cm_norm(&h));
        assert!((cm_norm(&h.scale(-3.0)) - 3.0 * cm_norm(&h)).abs() < 1e-14);
        let p = CameronMartinVector::polynomial(g, 1, 0, &[1.0]).unwrap();
        assert!(!p.in_h0());
    }

    #[test]
    fn deterministic_line_divergence_is_h() {
        let m = ManifoldModel::torus(vec![2.0 * PI, 2.0 * PI]).unwrap();
        let g = grid(1024);
        let r0 = m.standard_frame(&m.default_base_point());
        let x = EuclideanPath::from_fn(g, 2, |t| vec![t, 0.0]);
        let (_, frames) = develop(&m, &x, &r0).unwrap();
        let h = CameronMartinVector::fourier(g, 2, &[FourierMode::new(1, 0, 1.0)]).unwrap();
        let closed = |s: f64| 2f64.sqrt() * (PI * s).sin() / PI;
        for s in [0.25, 0.5, 1.0] {
            let v = divergence_trunc(&m, &h, &x, &frames, s).unwrap();
            assert!((v - closed(s)).abs() < 1e-6);
        }
    }

    #[test]
    fn point_function_gradients_match_finite_differences() {
        let sphere = ManifoldModel::sphere2();
        let a = vec![1.0, 0.5, -0.2, 0.5, -0.3, 0.1, -0.2, 0.1, -0.7];
        let fs = [
            PointFunction::Linear(vec![0.2, -1.0, 0.4]),
            PointFunction::Quadratic(a),
        ];
        let fp = sphere.sample_frames(7)[5].clone();
        let p = fp.base().coords().to_vec();
        for f in &fs {
            let g = f.grad(&sphere, &p);
            for j in 0..2 {
                let dir: Vec<f64> = fp.frame().column(j).iter().copied().collect();
                let mut plus = p.clone();
                let mut minus = p.clone();
                sphere.exp_in_place(&mut plus, &dir.iter().map(|v| v * 1e-5).collect::<Vec<_>>());
                sphere.exp_in_place(&mut minus, &dir.iter().map(|v| -v * 1e-5).collect::<Vec<_>>());
                let fd = (f.eval(&sphere, &plus) - f.eval(&sphere, &minus)) / 2e-5;
                assert!((fd - dot(&g, &dir)).abs() < 1e-6);
            }
        }
        let torus = ManifoldModel::torus(vec![1.0, 3.0]).unwrap();
        let f = PointFunction::TorusFourier {
            wavenumbers: vec![2, -1],
            phase: 0.3,
        };
        let y = [0.2, 1.1];
        let g = f.grad(&torus, &y);
        for j in 0..2 {
            let mut plus = y;
            let mut minus = y;
            plus[j] += 1e-5;
            minus[j] -= 1e-5;
            let fd = (f.eval(&torus, &plus) - f.eval(&torus, &minus)) / 2e-5;
            assert!((fd - g[j]).abs() < 1e-6);
        }
    }

    #[test]
    fn torus_cos_directional_derivative() {
        let m = ManifoldModel::circle(2.0 * PI).unwrap();
        let g = grid(1024);
        let r0 = m.standard_frame(&m.default_base_point());
        let x = EuclideanPath::from_fn(g, 1, |t| vec![(7.0 * t).sin() + 2.0 * t]);
        let (path, frames) = develop(&m, &x, &r0).unwrap();
        let h = CameronMartinVector::fourier(g, 1, &[FourierMode::new(1, 0, 1.0)]).unwrap();
        let f = CylindricalFunctional::new(&m, 1.0, vec![(0.5, PointFunction::torus_cos(1, 0, 0.0))]).unwrap();
        let v = f.dh(&m, &h, &path, &frames).unwrap();
        let y = path.at(512)[0];
        assert!((v - (-y.sin() * h.h_at(512)[0])).abs() < 1e-14);
        assert_eq!(CylindricalFunctional::constant(3.0).dh(&m, &h, &path, &frames).unwrap(), 0.0);
    }

    #[test]
    fn flat_malliavin_derivative_is_inner_product() {
        let m = ManifoldModel::torus(vec![1.0, 1.0]).unwrap();
        let g = grid(256);
        let r0 = m.standard_frame(&m.default_base_point());
        let x = EuclideanPath::from_fn(g, 2, |t| vec![t.sin(), t * t]);
        let h = CameronMartinVector::fourier(g, 2, &[FourierMode::new(1, 0, 1.0), FourierMode::new(2, 1, 0.5)]).unwrap();
        let k = CameronMartinVector::fourier(g, 2, &[FourierMode::new(1, 0, 0.3), FourierMode::new(2, 1, 2.0)]).unwrap();
        let v = malliavin_deriv_div(&m, &r0, &h, &k, &x).unwrap();
        assert!((v - cm_inner(&h, &k)).abs() < 1e-13);
        let zero = CameronMartinVector::zero(g, 2);
        assert_eq!(malliavin_deriv_div(&m, &r0, &h, &zero, &x).unwrap(), 0.0);
    }

    #[test]
    fn holder_norm_linear_path() {
        let p = HolderParams::new(2, 0.25).unwrap();
        let x = EuclideanPath::from_fn(grid(1024), 1, |t| vec![t]);
        assert!((holder_norm(&x, &p) - (1.0f64 / 6.0).powf(0.25)).abs() < 1e-3);
        let y = EuclideanPath::from_fn(grid(1024), 1, |t| vec![-2.5 * t]);
        assert!((holder_norm(&y, &p) - 2.5 * holder_norm(&x, &p)).abs() < 1e-12);
        assert_eq!(holder_norm(&EuclideanPath::zeros(grid(64), 2), &p), 0.0);
    }

    #[test]
    fn holder_params_ranges() {
        assert!(HolderParams::new(2, 0.5).is_err());
        assert!(!HolderParams::new(2, 0.25).unwrap().in_embedding_range());
        assert!(HolderParams::new(2, 0.3).unwrap().in_embedding_range());
    }

    #[test]
    fn rate_constant_scaling_and_reproducibility() {
        let p = HolderParams::new(2, 0.3).unwrap();
        let g = grid(64);
        let a = holder_rate_constant(&p, g, 4, 1);
        let b = holder_rate_constant(&p, g, 4, 2);
        assert!(a.converged);
        assert!((a.value - b.value).abs() < 1e-6 * a.value);
        let c = holder_rate_constant_at_level(&p, g, 4, 1, 2.0);
        assert!((c.value - 4.0 * a.value).abs() < 1e-9 * c.value);
    }
}
