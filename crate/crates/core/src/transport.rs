//! Development, anti-development and stochastic parallel transport on a
//! uniform time grid.
//!
//! Development feeds each increment `Δx_k` through the rolling step of
//! [`ManifoldModel::roll_step`]; anti-development inverts it with the geodesic
//! logarithm. Both are exact on piecewise-geodesic paths, so
//! `antidevelop ∘ develop` is the identity up to rounding.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::manifold::{
    frame_apply_transpose, nearest_image, reorthonormalize_sphere_frame, wrap, FramePoint,
    ManifoldKind, ManifoldModel, Point,
};

/// Uniform grid `t_k = k/N` on `[0, 1]` with `N` a power of two.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeGrid {
    n: usize,
}

impl TimeGrid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::ContractViolation(format!(
                "grid size must be a power of two ≥ 2, got {n}"
            )));
        }
        Ok(Self { n })
    }

    /// Number of steps `N`.
    pub fn steps(&self) -> usize {
        self.n
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 / self.n as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n).map(|k| self.time(k)).collect()
    }

    /// Index of grid time `s`, if `s` lies on the grid.
    pub fn index_of(&self, s: f64) -> Result<usize> {
        let k = (s * self.n as f64).round();
        if !(0.0..=self.n as f64).contains(&k) || (k - s * self.n as f64).abs() > 1e-9 {
            return Err(Error::ContractViolation(format!(
                "time {s} is not on the grid with N = {}",
                self.n
            )));
        }
        Ok(k as usize)
    }

    /// The grid with `N / factor` steps, when `factor` divides `N`.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || self.n % factor != 0 {
            return Err(Error::ContractViolation(format!(
                "cannot coarsen N = {} by {factor}",
                self.n
            )));
        }
        Self::new(self.n / factor)
    }
}

/// A grid-sampled `ℝ^d` path starting at the origin, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EuclideanPath {
    grid: TimeGrid,
    dim: usize,
    values: Vec<f64>,
}

impl EuclideanPath {
    pub fn zeros(grid: TimeGrid, dim: usize) -> Self {
        Self {
            grid,
            dim,
            values: vec![0.0; (grid.steps() + 1) * dim],
        }
    }

    /// Builds a path from `(N+1)·d` row-major values; the first row must be 0.
    pub fn from_values(grid: TimeGrid, dim: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != (grid.steps() + 1) * dim {
            return Err(Error::ContractViolation(format!(
                "path needs {} values, got {}",
                (grid.steps() + 1) * dim,
                values.len()
            )));
        }
        if values[..dim].iter().any(|&v| v != 0.0) {
            return Err(Error::ContractViolation("path must start at the origin".into()));
        }
        Ok(Self { grid, dim, values })
    }

    /// Cumulative sum of `N·d` row-major increments.
    pub fn from_increments(grid: TimeGrid, dim: usize, increments: &[f64]) -> Result<Self> {
        if increments.len() != grid.steps() * dim {
            return Err(Error::ContractViolation(format!(
                "expected {} increments, got {}",
                grid.steps() * dim,
                increments.len()
            )));
        }
        let mut values = vec![0.0; (grid.steps() + 1) * dim];
        for k in 0..grid.steps() {
            for j in 0..dim {
                values[(k + 1) * dim + j] = values[k * dim + j] + increments[k * dim + j];
            }
        }
        Ok(Self { grid, dim, values })
    }

    /// Samples a function of time on the grid, shifted so that it starts at 0.
    pub fn from_fn<F: Fn(f64) -> Vec<f64>>(grid: TimeGrid, dim: usize, f: F) -> Self {
        let f0 = f(0.0);
        let mut values = Vec::with_capacity((grid.steps() + 1) * dim);
        for k in 0..=grid.steps() {
            let v = f(grid.time(k));
            values.extend(v.iter().zip(&f0).map(|(a, b)| a - b));
        }
        Self { grid, dim, values }
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn increment(&self, k: usize) -> Vec<f64> {
        (0..self.dim)
            .map(|j| self.values[(k + 1) * self.dim + j] - self.values[k * self.dim + j])
            .collect()
    }

    /// Every `factor`-th grid value.
    pub fn subsample(&self, factor: usize) -> Result<Self> {
        let grid = self.grid.coarsen(factor)?;
        let mut values = Vec::with_capacity((grid.steps() + 1) * self.dim);
        for k in 0..=grid.steps() {
            values.extend_from_slice(self.at(k * factor));
        }
        Ok(Self {
            grid,
            dim: self.dim,
            values,
        })
    }

    /// `self + c·other` on the same grid.
    pub fn axpy(&self, c: f64, other: &EuclideanPath) -> Result<Self> {
        if self.grid != other.grid || self.dim != other.dim {
            return Err(Error::ContractViolation("paths live on different grids".into()));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + c * b)
            .collect();
        Ok(Self {
            grid: self.grid,
            dim: self.dim,
            values,
        })
    }

    /// `max_k |self(t_k) − other(t_k)|`.
    pub fn sup_distance(&self, other: &EuclideanPath) -> f64 {
        self.values
            .chunks_exact(self.dim)
            .zip(other.values.chunks_exact(other.dim))
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }
}

/// A grid-sampled path on `M` starting at `m₀`, stored as flat ambient coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldPath {
    grid: TimeGrid,
    embed_dim: usize,
    points: Vec<f64>,
}

impl ManifoldPath {
    pub(crate) fn from_raw(grid: TimeGrid, embed_dim: usize, points: Vec<f64>) -> Self {
        debug_assert_eq!(points.len(), (grid.steps() + 1) * embed_dim);
        Self {
            grid,
            embed_dim,
            points,
        }
    }

    /// Builds a path from explicit points, validating each.
    pub fn from_points(model: &ManifoldModel, grid: TimeGrid, points: &[Point]) -> Result<Self> {
        if points.len() != grid.steps() + 1 {
            return Err(Error::ContractViolation(format!(
                "expected {} points, got {}",
                grid.steps() + 1,
                points.len()
            )));
        }
        let mut flat = Vec::with_capacity(points.len() * model.embed_dim());
        for p in points {
            flat.extend_from_slice(model.point(p.coords())?.coords());
        }
        Ok(Self::from_raw(grid, model.embed_dim(), flat))
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn raw(&self) -> &[f64] {
        &self.points
    }

    pub fn at(&self, k: usize) -> &[f64] {
        &self.points[k * self.embed_dim..(k + 1) * self.embed_dim]
    }

    pub fn point(&self, k: usize) -> Point {
        Point::from_raw(self.at(k).to_vec())
    }

    pub fn start(&self) -> Point {
        self.point(0)
    }

    pub fn end(&self) -> Point {
        self.point(self.grid.steps())
    }

    pub fn subsample(&self, factor: usize) -> Result<Self> {
        let grid = self.grid.coarsen(factor)?;
        let mut points = Vec::with_capacity((grid.steps() + 1) * self.embed_dim);
        for k in 0..=grid.steps() {
            points.extend_from_slice(self.at(k * factor));
        }
        Ok(Self::from_raw(grid, self.embed_dim, points))
    }
}

/// Frames along a path, stored as consecutive column-major `l × d` blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePath {
    grid: TimeGrid,
    embed_dim: usize,
    dim: usize,
    frames: Vec<f64>,
}

impl FramePath {
    pub(crate) fn from_raw(grid: TimeGrid, embed_dim: usize, dim: usize, frames: Vec<f64>) -> Self {
        debug_assert_eq!(frames.len(), (grid.steps() + 1) * embed_dim * dim);
        Self {
            grid,
            embed_dim,
            dim,
            frames,
        }
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    /// Column-major frame at grid index `k`.
    pub fn at(&self, k: usize) -> &[f64] {
        let b = self.embed_dim * self.dim;
        &self.frames[k * b..(k + 1) * b]
    }

    pub fn frame(&self, k: usize) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.embed_dim, self.dim, self.at(k))
    }

    pub fn frame_point(&self, path: &ManifoldPath, k: usize) -> FramePoint {
        FramePoint::from_raw(path.point(k), self.frame(k))
    }

    /// Largest `‖FᵀF − I‖_∞` along the path.
    pub fn max_orthonormality_defect(&self) -> f64 {
        (0..=self.grid.steps())
            .map(|k| {
                let f = self.frame(k);
                (f.transpose() * &f - DMatrix::identity(self.dim, self.dim)).amax()
            })
            .fold(0.0, f64::max)
    }
}

fn check_grid_dim(model: &ManifoldModel, x: &EuclideanPath, r0: &FramePoint) -> Result<()> {
    if x.dim() != model.dim() {
        return Err(Error::ContractViolation(format!(
            "path dimension {} does not match manifold dimension {}",
            x.dim(),
            model.dim()
        )));
    }
    if r0.frame().nrows() != model.embed_dim() || r0.frame().ncols() != model.dim() {
        return Err(Error::ContractViolation("frame has the wrong shape".into()));
    }
    Ok(())
}

/// The Itô development `γ = I(x)` together with its horizontal frame path.
///
/// On the torus this is `γ(t) = m₀ + r₀x(t) mod L` evaluated directly, which
/// is what the rolling scheme computes without the accumulated rounding.
pub fn develop(model: &ManifoldModel, x: &EuclideanPath, r0: &FramePoint) -> Result<(ManifoldPath, FramePath)> {
    check_grid_dim(model, x, r0)?;
    let grid = x.grid();
    let n = grid.steps();
    let (l, d) = (model.embed_dim(), model.dim());
    let mut points = Vec::with_capacity((n + 1) * l);
    let mut frames = Vec::with_capacity((n + 1) * l * d);
    let f0 = r0.frame().as_slice();
    match model.kind() {
        ManifoldKind::FlatTorus { lengths } => {
            let m0 = r0.base().coords();
            for k in 0..=n {
                let xk = x.at(k);
                for i in 0..l {
                    let v: f64 = (0..d).map(|j| f0[j * l + i] * xk[j]).sum();
                    points.push(wrap(m0[i] + v, lengths[i]));
                }
                frames.extend_from_slice(f0);
            }
        }
        ManifoldKind::UnitSphere2 => {
            let mut p = r0.base().coords().to_vec();
            let mut f = f0.to_vec();
            points.extend_from_slice(&p);
            frames.extend_from_slice(&f);
            for k in 0..n {
                let dx = x.increment(k);
                model.roll_step(&mut p, &mut f, &dx);
                points.extend_from_slice(&p);
                frames.extend_from_slice(&f);
            }
        }
    }
    Ok((
        ManifoldPath::from_raw(grid, l, points),
        FramePath::from_raw(grid, l, d, frames),
    ))
}

/// The stochastic anti-development `x = I⁻¹(γ)` (rolling `M` back onto `ℝ^d`).
pub fn antidevelop(model: &ManifoldModel, gamma: &ManifoldPath, r0: &FramePoint) -> Result<EuclideanPath> {
    antidevelop_with_frames(model, gamma, r0).map(|(x, _)| x)
}

/// Anti-development together with the parallel frames along `γ`.
pub fn antidevelop_with_frames(
    model: &ManifoldModel,
    gamma: &ManifoldPath,
    r0: &FramePoint,
) -> Result<(EuclideanPath, FramePath)> {
    if gamma.embed_dim() != model.embed_dim() {
        return Err(Error::ContractViolation("path does not live on this manifold".into()));
    }
    if model.dist_raw(gamma.at(0), r0.base().coords()) > 1e-12 {
        return Err(Error::ContractViolation("frame is not based at the path start".into()));
    }
    let grid = gamma.grid();
    let n = grid.steps();
    let (l, d) = (model.embed_dim(), model.dim());
    let mut values = vec![0.0; (n + 1) * d];
    let mut frames = Vec::with_capacity((n + 1) * l * d);
    let mut f = r0.frame().as_slice().to_vec();
    frames.extend_from_slice(&f);
    let mut v = vec![0.0; l];
    let mut dx = vec![0.0; d];
    for k in 0..n {
        let p = gamma.at(k);
        let q = gamma.at(k + 1);
        match model.kind() {
            ManifoldKind::FlatTorus { lengths } => {
                for i in 0..l {
                    v[i] = nearest_image(q[i] - p[i], lengths[i]);
                }
            }
            ManifoldKind::UnitSphere2 => {
                model.log_raw(p, q, &mut v)?;
            }
        }
        frame_apply_transpose(&f, l, d, &v, &mut dx);
        for j in 0..d {
            values[(k + 1) * d + j] = values[k * d + j] + dx[j];
        }
        if !model.is_flat() {
            model.transport_along(p, &v, &mut f);
            reorthonormalize_sphere_frame(q, &mut f);
        }
        frames.extend_from_slice(&f);
    }
    Ok((
        EuclideanPath { grid, dim: d, values },
        FramePath::from_raw(grid, l, d, frames),
    ))
}

/// `U_s` at grid index `k`, as the `l × d` matrix acting on `ℝ^d ≅ T_{m₀}M`
/// (coordinates relative to `r₀`), i.e. `frame_k ∘ r₀⁻¹ ∘ r₀`.
pub fn parallel_transport(fp: &FramePath, k: usize) -> Result<DMatrix<f64>> {
    if k > fp.grid().steps() {
        return Err(Error::ContractViolation(format!(
            "index {k} beyond grid of {} steps",
            fp.grid().steps()
        )));
    }
    Ok(fp.frame(k))
}

/// `U_s` at grid index `k` as an ambient `l × l` map `T_{m₀}M → T_{γ(s)}M`,
/// `frame_k·frame_0ᵀ`.
pub fn parallel_transport_ambient(fp: &FramePath, k: usize) -> Result<DMatrix<f64>> {
    let fk = parallel_transport(fp, k)?;
    Ok(fk * fp.frame(0).transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sphere_r0() -> (ManifoldModel, FramePoint) {
        let m = ManifoldModel::sphere2();
        let r0 = m.standard_frame(&m.default_base_point());
        (m, r0)
    }

    #[test]
    fn grid_contracts() {
        assert!(TimeGrid::new(1000).is_err());
        let g = TimeGrid::new(1024).unwrap();
        assert_eq!(g.time(1024), 1.0);
        assert_eq!(g.index_of(0.5).unwrap(), 512);
        assert!(g.index_of(0.3).is_err());
    }

    #[test]
    fn zero_path_develops_to_constant() {
        let (m, r0) = sphere_r0();
        let g = TimeGrid::new(64).unwrap();
        let (gamma, fp) = develop(&m, &EuclideanPath::zeros(g, 2), &r0).unwrap();
        for k in 0..=64 {
            assert_eq!(gamma.at(k), r0.base().coords());
            assert_eq!(fp.at(k), r0.frame().as_slice());
        }
        let x = antidevelop(&m, &gamma, &r0).unwrap();
        assert!(x.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn straight_line_develops_to_great_circle() {
        let (m, r0) = sphere_r0();
        let g = TimeGrid::new(128).unwrap();
        let x = EuclideanPath::from_fn(g, 2, |t| vec![t, 0.0]);
        let (gamma, _) = develop(&m, &x, &r0).unwrap();
        let expected = [1f64.sin(), 0.0, 1f64.cos()];
        assert!(m.dist_raw(gamma.at(128), &expected) < 1e-10);
    }

    #[test]
    fn torus_development_is_translation() {
        let m = ManifoldModel::torus(vec![1.0, 2.0]).unwrap();
        let r0 = m.standard_frame(&m.point(&[0.25, 1.5]).unwrap());
        let g = TimeGrid::new(32).unwrap();
        let x = EuclideanPath::from_fn(g, 2, |t| vec![3.0 * t, (5.0 * t).sin()]);
        let (gamma, fp) = develop(&m, &x, &r0).unwrap();
        for k in 0..=32 {
            let xk = x.at(k);
            assert_eq!(gamma.at(k)[0], wrap(0.25 + xk[0], 1.0));
            assert_eq!(gamma.at(k)[1], wrap(1.5 + xk[1], 2.0));
            assert_eq!(parallel_transport(&fp, k).unwrap(), DMatrix::identity(2, 2));
        }
        let back = antidevelop(&m, &gamma, &r0).unwrap();
        assert!(back.sup_distance(&x) < 1e-13);
    }

    #[test]
    fn smooth_round_trip_on_sphere() {
        let (m, r0) = sphere_r0();
        let g = TimeGrid::new(1024).unwrap();
        let x = EuclideanPath::from_fn(g, 2, |t| vec![2.0 * (3.0 * t).sin(), t * t - 0.7 * t]);
        let (gamma, _) = develop(&m, &x, &r0).unwrap();
        let back = antidevelop(&m, &gamma, &r0).unwrap();
        assert!(back.sup_distance(&x) < 1e-9);
    }

    #[test]
    fn transport_quarter_turn() {
        let (m, r0) = sphere_r0();
        let g = TimeGrid::new(16).unwrap();
        let x = EuclideanPath::from_fn(g, 2, |t| vec![t * PI / 2.0, 0.0]);
        let (_, fp) = develop(&m, &x, &r0).unwrap();
        let u = parallel_transport(&fp, 16).unwrap();
        let expected = DMatrix::from_column_slice(3, 2, &[0.0, 0.0, -1.0, 0.0, 1.0, 0.0]);
        assert!((u - expected).amax() < 1e-10);
        assert!((parallel_transport(&fp, 0).unwrap() - r0.frame()).amax() == 0.0);
    }

    #[test]
    fn antidevelop_rejects_antipodal_step() {
        let (m, r0) = sphere_r0();
        let g = TimeGrid::new(2).unwrap();
        let pts = vec![
            m.default_base_point(),
            m.point(&[1.0, 0.0, 0.0]).unwrap(),
            m.point(&[0.0, 0.0, -1.0]).unwrap(),
        ];
        let gamma = ManifoldPath::from_points(&m, g, &pts).unwrap();
        assert!(antidevelop(&m, &gamma, &r0).is_ok());
        let pts2 = vec![m.default_base_point(), pts[2].clone(), pts[2].clone()];
        let gamma2 = ManifoldPath::from_points(&m, g, &pts2).unwrap();
        assert!(matches!(antidevelop(&m, &gamma2, &r0), Err(Error::StepTooLarge { .. })));
    }
}
