//! Geometry kernel for the model manifolds.
//!
//! Two models are supported: flat tori `ℝ^d / (L_1ℤ × … × L_dℤ)` and the unit
//! sphere `S² ⊂ ℝ³`. Both have closed-form geodesics, geodesic logarithms and
//! parallel transport, which is what the rolling integrators in
//! [`crate::transport`] rely on.
//!
//! Frames are stored extrinsically as `l × d` matrices (column-major slices of
//! length `l·d` in the hot kernels). The curvature convention is
//! `R(X,Y)Z = K(⟨X,Z⟩Y − ⟨Y,Z⟩X)` on a space form of curvature `K`, so that
//! `Ric_r(a) = Σ_i r⁻¹R(re_i, ra)re_i` is `+(d−1)K·a`.

use nalgebra::{DMatrix, Matrix2, SymmetricEigen, Vector3};

use crate::error::{Error, Result};

/// Distance to the antipode below which a sphere logarithm is accepted.
pub const SPHERE_INJECTIVITY_GUARD: f64 = std::f64::consts::PI - 1e-6;

const TANGENT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub enum ManifoldKind {
    /// Flat torus with the given side lengths; the intrinsic dimension is
    /// `lengths.len()` and points are stored as periodic representatives.
    FlatTorus { lengths: Vec<f64> },
    /// The round unit sphere in `ℝ³`.
    UnitSphere2,
}

/// A model compact Riemannian manifold.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldModel {
    kind: ManifoldKind,
}

/// A point given by its ambient coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    coords: Vec<f64>,
}

/// A tangent vector stored in ambient coordinates together with its base point.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    base: Point,
    vec: Vec<f64>,
}

/// A point of the orthonormal frame bundle `O(M)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePoint {
    base: Point,
    frame: DMatrix<f64>,
}

impl Point {
    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub(crate) fn from_raw(coords: Vec<f64>) -> Self {
        Self { coords }
    }
}

impl TangentVector {
    pub fn base(&self) -> &Point {
        &self.base
    }

    pub fn vec(&self) -> &[f64] {
        &self.vec
    }

    pub fn norm(&self) -> f64 {
        norm(&self.vec)
    }
}

impl FramePoint {
    pub fn base(&self) -> &Point {
        &self.base
    }

    /// The `l × d` frame matrix; its columns are an orthonormal tangent basis.
    pub fn frame(&self) -> &DMatrix<f64> {
        &self.frame
    }

    pub(crate) fn from_raw(base: Point, frame: DMatrix<f64>) -> Self {
        Self { base, frame }
    }

    /// `‖frameᵀframe − I‖_∞`.
    pub fn orthonormality_defect(&self) -> f64 {
        let d = self.frame.ncols();
        let gram = self.frame.transpose() * &self.frame;
        (gram - DMatrix::identity(d, d)).amax()
    }

    /// Right action of `O(d)`: the frame `r·O`.
    pub fn rotate(&self, o: &DMatrix<f64>) -> FramePoint {
        FramePoint {
            base: self.base.clone(),
            frame: &self.frame * o,
        }
    }
}

impl ManifoldModel {
    pub fn torus(lengths: Vec<f64>) -> Result<Self> {
        if lengths.is_empty() {
            return Err(Error::ContractViolation(
                "torus dimension must be at least 1".into(),
            ));
        }
        if lengths.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::ContractViolation(format!(
                "torus side lengths must be positive, got {lengths:?}"
            )));
        }
        Ok(Self {
            kind: ManifoldKind::FlatTorus { lengths },
        })
    }

    /// The circle of circumference `length`.
    pub fn circle(length: f64) -> Result<Self> {
        Self::torus(vec![length])
    }

    pub fn sphere2() -> Self {
        Self {
            kind: ManifoldKind::UnitSphere2,
        }
    }

    pub fn kind(&self) -> &ManifoldKind {
        &self.kind
    }

    /// Intrinsic dimension `d`.
    pub fn dim(&self) -> usize {
        match &self.kind {
            ManifoldKind::FlatTorus { lengths } => lengths.len(),
            ManifoldKind::UnitSphere2 => 2,
        }
    }

    /// Ambient dimension `l`.
    pub fn embed_dim(&self) -> usize {
        match &self.kind {
            ManifoldKind::FlatTorus { lengths } => lengths.len(),
            ManifoldKind::UnitSphere2 => 3,
        }
    }

    pub fn is_flat(&self) -> bool {
        matches!(self.kind, ManifoldKind::FlatTorus { .. })
    }

    pub fn torus_lengths(&self) -> Option<&[f64]> {
        match &self.kind {
            ManifoldKind::FlatTorus { lengths } => Some(lengths),
            ManifoldKind::UnitSphere2 => None,
        }
    }

    /// Validates and canonicalizes ambient coordinates: torus coordinates are
    /// wrapped into `[0, L_i)`, sphere coordinates must have unit norm to 1e−8
    /// and are renormalized.
    pub fn point(&self, coords: &[f64]) -> Result<Point> {
        if coords.len() != self.embed_dim() {
            return Err(Error::ContractViolation(format!(
                "point has {} coordinates, expected {}",
                coords.len(),
                self.embed_dim()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::ContractViolation("non-finite coordinates".into()));
        }
        let mut c = coords.to_vec();
        match &self.kind {
            ManifoldKind::FlatTorus { lengths } => {
                for (x, &l) in c.iter_mut().zip(lengths) {
                    *x = wrap(*x, l);
                }
            }
            ManifoldKind::UnitSphere2 => {
                let n = norm(&c);
                if (n - 1.0).abs() > 1e-8 {
                    return Err(Error::ContractViolation(format!(
                        "sphere point has norm {n}"
                    )));
                }
                c.iter_mut().for_each(|x| *x /= n);
            }
        }
        Ok(Point { coords: c })
    }

    /// The base point used by default: the origin of the torus or the north
    /// pole `(0, 0, 1)` of the sphere.
    pub fn default_base_point(&self) -> Point {
        match &self.kind {
            ManifoldKind::FlatTorus { lengths } => Point {
                coords: vec![0.0; lengths.len()],
            },
            ManifoldKind::UnitSphere2 => Point {
                coords: vec![0.0, 0.0, 1.0],
            },
        }
    }

    pub fn tangent(&self, p: &Point, vec: &[f64]) -> Result<TangentVector> {
        if vec.len() != self.embed_dim() {
            return Err(Error::ContractViolation(format!(
                "tangent vector has {} components, expected {}",
                vec.len(),
                self.embed_dim()
            )));
        }
        if let ManifoldKind::UnitSphere2 = self.kind {
            let radial = dot(vec, &p.coords);
            if radial.abs() > TANGENT_TOL * (1.0 + norm(vec)) {
                return Err(Error::ContractViolation(format!(
                    "vector is not tangent: ⟨v, p⟩ = {radial:e}"
                )));
            }
        }
        Ok(TangentVector {
            base: p.clone(),
            vec: vec.to_vec(),
        })
    }

    /// A deterministic orthonormal frame at `p`. At the sphere's north pole
    /// this is `(e₁, e₂)`; on the torus it is the identity.
    pub fn standard_frame(&self, p: &Point) -> FramePoint {
        match &self.kind {
            ManifoldKind::FlatTorus { lengths } => FramePoint {
                base: p.clone(),
                frame: DMatrix::identity(lengths.len(), lengths.len()),
            },
            ManifoldKind::UnitSphere2 => {
                let pv = Vector3::from_column_slice(&p.coords);
                let axis = (0..3)
                    .min_by(|&a, &b| pv[a].abs().total_cmp(&pv[b].abs()))
                    .unwrap_or(0);
                let mut e = Vector3::zeros();
                e[axis] = 1.0;
                let f1 = (e - pv * pv.dot(&e)).normalize();
                let f2 = pv.cross(&f1);
                let frame = DMatrix::from_column_slice(
                    3,
                    2,
                    &[f1[0], f1[1], f1[2], f2[0], f2[1], f2[2]],
                );
                FramePoint {
                    base: p.clone(),
                    frame,
                }
            }
        }
    }

    /// Builds a frame point from a matrix, checking orthonormality and
    /// tangency.
    pub fn frame_point(&self, p: &Point, frame: DMatrix<f64>) -> Result<FramePoint> {
        if frame.nrows() != self.embed_dim() || frame.ncols() != self.dim() {
            return Err(Error::ContractViolation(format!(
                "frame must be {}x{}",
                self.embed_dim(),
                self.dim()
            )));
        }
        let fp = FramePoint {
            base: p.clone(),
            frame,
        };
        if fp.orthonormality_defect() > 1e-10 {
            return Err(Error::ContractViolation("frame is not orthonormal".into()));
        }
        if let ManifoldKind::UnitSphere2 = self.kind {
            for j in 0..2 {
                let col: Vec<f64> = fp.frame.column(j).iter().copied().collect();
                if dot(&col, &p.coords).abs() > TANGENT_TOL {
                    return Err(Error::ContractViolation(
                        "frame column is not tangent".into(),
                    ));
                }
            }
        }
        Ok(fp)
    }

    /// Geodesic endpoint `exp_p(v)`.
    pub fn exp_map(&self, p: &Point, v: &TangentVector) -> Result<Point> {
        self.check_same_base(p, v.base())?;
        let mut out = p.coords.clone();
        self.exp_in_place(&mut out, &v.vec);
        Ok(Point { coords: out })
    }

    /// Geodesic logarithm `log_p(q)`: the nearest-image displacement on the
    /// torus, the minimizing great-circle initial velocity on the sphere.
    pub fn log_map(&self, p: &Point, q: &Point) -> Result<TangentVector> {
        let mut out = vec![0.0; self.embed_dim()];
        self.log_raw(&p.coords, &q.coords, &mut out)?;
        Ok(TangentVector {
            base: p.clone(),
            vec: out,
        })
    }

    /// Riemannian distance.
    pub fn dist(&self, p: &Point, q: &Point) -> f64 {
        self.dist_raw(&p.coords, &q.coords)
    }

    /// One horizontal (rolling) step: move along the geodesic
    /// `exp_{base}(frame·dx)` and carry the frame by exact parallel transport,
    /// followed by polar re-orthonormalization.
    pub fn parallel_frame_step(&self, r: &FramePoint, dx: &[f64]) -> Result<FramePoint> {
        if dx.len() != self.dim() {
            return Err(Error::ContractViolation(format!(
                "increment has {} components, expected {}",
                dx.len(),
                self.dim()
            )));
        }
        if dx.iter().any(|x| !x.is_finite()) {
            return Err(Error::ContractViolation("non-finite increment".into()));
        }
        let mut p = r.base.coords.clone();
        let mut f: Vec<f64> = r.frame.as_slice().to_vec();
        self.roll_step(&mut p, &mut f, dx);
        Ok(FramePoint {
            base: Point { coords: p },
            frame: DMatrix::from_column_slice(self.embed_dim(), self.dim(), &f),
        })
    }

    /// Curvature 2-form pulled back through the frame:
    /// `Ω_r(a,b)_{ij} = ⟨r⁻¹R(ra, rb)re_j, e_i⟩`.
    pub fn curvature_form(&self, r: &FramePoint, a: &[f64], b: &[f64]) -> DMatrix<f64> {
        let d = self.dim();
        let mut out = vec![0.0; d * d];
        self.curvature_form_raw(r.frame.as_slice(), a, b, &mut out);
        DMatrix::from_column_slice(d, d, &out)
    }

    /// The matrix of `a ↦ Ric_r(a) = Σ_i r⁻¹R(re_i, ra)re_i`.
    pub fn ricci(&self, r: &FramePoint) -> DMatrix<f64> {
        let d = self.dim();
        let mut out = vec![0.0; d * d];
        self.ricci_raw(r.frame.as_slice(), &mut out);
        DMatrix::from_column_slice(d, d, &out)
    }

    /// `‖Ric‖_∞`: the largest operator norm of [`Self::ricci`] over a fixed
    /// sample of frames (points on a Fibonacci lattice, two frame rotations
    /// each).
    pub fn ricci_sup_norm(&self) -> f64 {
        let mut best: f64 = 0.0;
        for fp in self.sample_frames(64) {
            let ric = self.ricci(&fp);
            let eig = SymmetricEigen::new(ric);
            let n = eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            best = best.max(n);
        }
        best
    }

    /// Deterministic sample of frame points used for sup-norm estimates.
    pub fn sample_frames(&self, count: usize) -> Vec<FramePoint> {
        let d = self.dim();
        let mut out = Vec::with_capacity(2 * count);
        for i in 0..count {
            let p = match &self.kind {
                ManifoldKind::FlatTorus { lengths } => {
                    let coords: Vec<f64> = lengths
                        .iter()
                        .enumerate()
                        .map(|(j, &l)| l * frac((i as f64 + 0.5) * golden_step(j)))
                        .collect();
                    Point { coords }
                }
                ManifoldKind::UnitSphere2 => {
                    let z = 1.0 - (2.0 * i as f64 + 1.0) / count as f64;
                    let rho = (1.0 - z * z).sqrt();
                    let phi = std::f64::consts::PI * (3.0 - 5f64.sqrt()) * i as f64;
                    Point {
                        coords: vec![rho * phi.cos(), rho * phi.sin(), z],
                    }
                }
            };
            let base = self.standard_frame(&p);
            out.push(base.clone());
            let angle = 0.7 + i as f64;
            let mut o = DMatrix::identity(d, d);
            if d >= 2 {
                o[(0, 0)] = angle.cos();
                o[(0, 1)] = -angle.sin();
                o[(1, 0)] = angle.sin();
                o[(1, 1)] = angle.cos();
            }
            out.push(base.rotate(&o));
        }
        out
    }

    fn check_same_base(&self, p: &Point, q: &Point) -> Result<()> {
        if self.dist_raw(&p.coords, &q.coords) > 1e-12 {
            return Err(Error::ContractViolation(
                "tangent vector is based at a different point".into(),
            ));
        }
        Ok(())
    }

    // ------------------------------------------------------------------
    // Slice kernels used by the path integrators.
    // ------------------------------------------------------------------

    /// `p ← exp_p(v)` for an ambient tangent vector `v`.
    pub fn exp_in_place(&self, p: &mut [f64], v: &[f64]) {
        match &self.kind {
            ManifoldKind::FlatTorus { lengths } => {
                for ((x, &dv), &l) in p.iter_mut().zip(v).zip(lengths) {
                    *x = wrap(*x + dv, l);
                }
            }
            ManifoldKind::UnitSphere2 => {
                let pv = Vector3::new(p[0], p[1], p[2]);
                let vv = Vector3::new(v[0], v[1], v[2]);
                let theta = vv.norm();
                if theta == 0.0 {
                    return;
                }
                let q = (pv * theta.cos() + vv * (theta.sin() / theta)).normalize();
                p.copy_from_slice(q.as_slice());
            }
        }
    }

    /// Writes `log_p(q)` into `out` and returns the geodesic distance.
    pub fn log_raw(&self, p: &[f64], q: &[f64], out: &mut [f64]) -> Result<f64> {
        match &self.kind {
            ManifoldKind::FlatTorus { lengths } => {
                let mut s = 0.0;
                for i in 0..lengths.len() {
                    out[i] = nearest_image(q[i] - p[i], lengths[i]);
                    s += out[i] * out[i];
                }
                Ok(s.sqrt())
            }
            ManifoldKind::UnitSphere2 => {
                let pv = Vector3::new(p[0], p[1], p[2]);
                let qv = Vector3::new(q[0], q[1], q[2]);
                let c = pv.dot(&qv);
                let w = qv - pv * c;
                let s = w.norm();
                let theta = s.atan2(c);
                if theta >= SPHERE_INJECTIVITY_GUARD {
                    return Err(Error::StepTooLarge {
                        dist: theta,
                        limit: SPHERE_INJECTIVITY_GUARD,
                    });
                }
                let scale = if s > 0.0 { theta / s } else { 1.0 };
                out[0] = w[0] * scale;
                out[1] = w[1] * scale;
                out[2] = w[2] * scale;
                Ok(theta)
            }
        }
    }

    pub fn dist_raw(&self, p: &[f64], q: &[f64]) -> f64 {
        match &self.kind {
            ManifoldKind::FlatTorus { lengths } => lengths
                .iter()
                .enumerate()
                .map(|(i, &l)| nearest_image(q[i] - p[i], l).powi(2))
                .sum::<f64>()
                .sqrt(),
            ManifoldKind::UnitSphere2 => {
                let pv = Vector3::new(p[0], p[1], p[2]);
                let qv = Vector3::new(q[0], q[1], q[2]);
                pv.cross(&qv).norm().atan2(pv.dot(&qv))
            }
        }
    }

    /// Parallel transport of the columns of `frame` along `t ↦ exp_p(tv)`,
    /// `t ∈ [0,1]`. The base point is not modified.
    pub fn transport_along(&self, p: &[f64], v: &[f64], frame: &mut [f64]) {
        if let ManifoldKind::UnitSphere2 = self.kind {
            let theta = norm3(v);
            if theta == 0.0 {
                return;
            }
            let u = [v[0] / theta, v[1] / theta, v[2] / theta];
            let (s, c) = theta.sin_cos();
            let dir = [
                (c - 1.0) * u[0] - s * p[0],
                (c - 1.0) * u[1] - s * p[1],
                (c - 1.0) * u[2] - s * p[2],
            ];
            for col in frame.chunks_exact_mut(3) {
                let uw = u[0] * col[0] + u[1] * col[1] + u[2] * col[2];
                col[0] += uw * dir[0];
                col[1] += uw * dir[1];
                col[2] += uw * dir[2];
            }
        }
    }

    /// One rolling step in place: base point and frame move along the
    /// geodesic with initial velocity `frame·dx`.
    pub fn roll_step(&self, p: &mut [f64], frame: &mut [f64], dx: &[f64]) {
        match &self.kind {
            ManifoldKind::FlatTorus { lengths } => {
                let d = lengths.len();
                for (i, (x, &l)) in p.iter_mut().zip(lengths).enumerate() {
                    let dv: f64 = (0..d).map(|j| frame[j * d + i] * dx[j]).sum();
                    *x = wrap(*x + dv, l);
                }
            }
            ManifoldKind::UnitSphere2 => {
                let v = [
                    frame[0] * dx[0] + frame[3] * dx[1],
                    frame[1] * dx[0] + frame[4] * dx[1],
                    frame[2] * dx[0] + frame[5] * dx[1],
                ];
                self.transport_along(p, &v, frame);
                self.exp_in_place(p, &v);
                reorthonormalize_sphere_frame(p, frame);
            }
        }
    }

    /// Writes `R(x, y)z` (ambient) for tangent vectors at `p` into `out`.
    pub fn curvature_tensor_raw(&self, x: &[f64], y: &[f64], z: &[f64], out: &mut [f64]) {
        match &self.kind {
            ManifoldKind::FlatTorus { .. } => out.iter_mut().for_each(|o| *o = 0.0),
            ManifoldKind::UnitSphere2 => {
                let xz = dot(x, z);
                let yz = dot(y, z);
                for i in 0..3 {
                    out[i] = xz * y[i] - yz * x[i];
                }
            }
        }
    }

    /// Column-major `d × d` curvature form `Ω_r(a, b)` for a raw frame.
    pub fn curvature_form_raw(&self, frame: &[f64], a: &[f64], b: &[f64], out: &mut [f64]) {
        let d = self.dim();
        if self.is_flat() {
            out[..d * d].iter_mut().for_each(|o| *o = 0.0);
            return;
        }
        let l = self.embed_dim();
        let ra = frame_apply(frame, l, d, a);
        let rb = frame_apply(frame, l, d, b);
        let mut r = vec![0.0; l];
        for j in 0..d {
            let col_j = &frame[j * l..(j + 1) * l];
            self.curvature_tensor_raw(&ra, &rb, col_j, &mut r);
            for i in 0..d {
                out[j * d + i] = dot(&r, &frame[i * l..(i + 1) * l]);
            }
        }
    }

    /// Column-major `d × d` Ricci matrix for a raw frame.
    pub fn ricci_raw(&self, frame: &[f64], out: &mut [f64]) {
        let d = self.dim();
        if self.is_flat() {
            out[..d * d].iter_mut().for_each(|o| *o = 0.0);
            return;
        }
        let l = self.embed_dim();
        let mut r = vec![0.0; l];
        let mut acc = vec![0.0; l];
        for j in 0..d {
            let ra = &frame[j * l..(j + 1) * l];
            acc.iter_mut().for_each(|v| *v = 0.0);
            for i in 0..d {
                let ei = &frame[i * l..(i + 1) * l];
                self.curvature_tensor_raw(ei, ra, ei, &mut r);
                acc.iter_mut().zip(&r).for_each(|(a, v)| *a += v);
            }
            for i in 0..d {
                out[j * d + i] = dot(&acc, &frame[i * l..(i + 1) * l]);
            }
        }
    }
}

/// Projects the frame columns onto `T_pS²` and applies the polar factor
/// `F(FᵀF)^{-1/2}`.
pub(crate) fn reorthonormalize_sphere_frame(p: &[f64], frame: &mut [f64]) {
    for col in frame.chunks_exact_mut(3) {
        let r = col[0] * p[0] + col[1] * p[1] + col[2] * p[2];
        col[0] -= r * p[0];
        col[1] -= r * p[1];
        col[2] -= r * p[2];
    }
    let (c0, c1) = frame.split_at(3);
    let s = Matrix2::new(dot(c0, c0), dot(c0, c1), dot(c0, c1), dot(c1, c1));
    let Some(w) = inv_sqrt_spd2(&s) else {
        return;
    };
    let old = [frame[0], frame[1], frame[2], frame[3], frame[4], frame[5]];
    for k in 0..3 {
        frame[k] = old[k] * w[(0, 0)] + old[3 + k] * w[(1, 0)];
        frame[3 + k] = old[k] * w[(0, 1)] + old[3 + k] * w[(1, 1)];
    }
}

fn inv_sqrt_spd2(s: &Matrix2<f64>) -> Option<Matrix2<f64>> {
    let det = s.determinant();
    if det <= 0.0 {
        return None;
    }
    let sd = det.sqrt();
    let tau = (s.trace() + 2.0 * sd).sqrt();
    let sqrt = (s + Matrix2::identity() * sd) / tau;
    sqrt.try_inverse()
}

pub(crate) fn frame_apply(frame: &[f64], l: usize, d: usize, a: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; l];
    for j in 0..d {
        let col = &frame[j * l..(j + 1) * l];
        for i in 0..l {
            out[i] += col[i] * a[j];
        }
    }
    out
}

/// `frameᵀ·v`.
pub(crate) fn frame_apply_transpose(frame: &[f64], l: usize, d: usize, v: &[f64], out: &mut [f64]) {
    for j in 0..d {
        out[j] = dot(&frame[j * l..(j + 1) * l], v);
    }
}

pub(crate) fn wrap(x: f64, l: f64) -> f64 {
    let r = x.rem_euclid(l);
    if r >= l {
        0.0
    } else {
        r
    }
}

/// Representative of `delta` modulo `l` in `[−l/2, l/2)`.
pub(crate) fn nearest_image(delta: f64, l: f64) -> f64 {
    delta - l * (delta / l).round()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn norm3(v: &[f64]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn frac(x: f64) -> f64 {
    x - x.floor()
}

fn golden_step(j: usize) -> f64 {
    // Additive recurrence constants 1/φ, 1/φ², … for a low-discrepancy torus sample.
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    phi.powi(-(j as i32 + 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn north() -> Point {
        ManifoldModel::sphere2().default_base_point()
    }

    #[test]
    fn sphere_exp_quarter_turn() {
        let m = ManifoldModel::sphere2();
        let p = north();
        let v = m.tangent(&p, &[PI / 2.0, 0.0, 0.0]).unwrap();
        let q = m.exp_map(&p, &v).unwrap();
        assert_abs_diff_eq!(q.coords()[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(q.coords()[2], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn exp_of_zero_is_identity() {
        for m in [ManifoldModel::sphere2(), ManifoldModel::torus(vec![1.0, 2.0]).unwrap()] {
            let p = m.sample_frames(3)[4].base().clone();
            let v = m.tangent(&p, &vec![0.0; m.embed_dim()]).unwrap();
            assert_eq!(m.exp_map(&p, &v).unwrap(), p);
        }
    }

    #[test]
    fn torus_full_wrap() {
        let m = ManifoldModel::circle(2.0 * PI).unwrap();
        let p = m.point(&[0.5]).unwrap();
        let v = m.tangent(&p, &[2.0 * PI]).unwrap();
        let q = m.exp_map(&p, &v).unwrap();
        assert_abs_diff_eq!(q.coords()[0], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn non_tangent_vector_rejected() {
        let m = ManifoldModel::sphere2();
        assert!(matches!(
            m.tangent(&north(), &[0.0, 0.0, 0.1]),
            Err(Error::ContractViolation(_))
        ));
    }

    #[test]
    fn torus_step_translates_and_keeps_frame() {
        let m = ManifoldModel::torus(vec![1.0, 3.0]).unwrap();
        let p = m.point(&[0.9, 0.2]).unwrap();
        let r = m.standard_frame(&p);
        let r2 = m.parallel_frame_step(&r, &[0.3, -0.5]).unwrap();
        assert_abs_diff_eq!(r2.base().coords()[0], 0.2, epsilon = 1e-14);
        assert_abs_diff_eq!(r2.base().coords()[1], 2.7, epsilon = 1e-14);
        assert_eq!(r2.frame(), r.frame());
    }

    #[test]
    fn sphere_step_quarter_circle_rotation() {
        let m = ManifoldModel::sphere2();
        let r = m.standard_frame(&north());
        let r2 = m.parallel_frame_step(&r, &[PI / 2.0, 0.0]).unwrap();
        // Rotation about e₂ by π/2: e₃ ↦ e₁, e₁ ↦ −e₃, e₂ fixed.
        let expected = DMatrix::from_column_slice(3, 2, &[0.0, 0.0, -1.0, 0.0, 1.0, 0.0]);
        assert!((r2.frame() - expected).amax() < 1e-14);
        assert_abs_diff_eq!(r2.base().coords()[0], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn zero_step_leaves_frame() {
        let m = ManifoldModel::sphere2();
        let r = m.sample_frames(5)[3].clone();
        let r2 = m.parallel_frame_step(&r, &[0.0, 0.0]).unwrap();
        assert!((r2.frame() - r.frame()).amax() < 1e-15);
        assert_eq!(r2.base(), r.base());
    }

    #[test]
    fn curvature_form_values() {
        let m = ManifoldModel::sphere2();
        let r = m.standard_frame(&north());
        let om = m.curvature_form(&r, &[1.0, 0.0], &[0.0, 1.0]);
        let expected = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert!((om - expected).amax() < 1e-15);
        let zero = m.curvature_form(&r, &[0.3, 0.4], &[0.3, 0.4]);
        assert!(zero.amax() < 1e-15);

        let t = ManifoldModel::torus(vec![1.0, 1.0]).unwrap();
        let rt = t.standard_frame(&t.default_base_point());
        assert_eq!(t.curvature_form(&rt, &[1.0, 2.0], &[3.0, -1.0]).amax(), 0.0);
    }

    #[test]
    fn ricci_values() {
        let m = ManifoldModel::sphere2();
        for fp in m.sample_frames(8) {
            assert!((m.ricci(&fp) - DMatrix::identity(2, 2)).amax() < 1e-12);
        }
        assert!((m.ricci_sup_norm() - 1.0).abs() < 1e-12);
        let t = ManifoldModel::torus(vec![2.0, 2.0, 2.0]).unwrap();
        assert_eq!(t.ricci_sup_norm(), 0.0);
    }

    #[test]
    fn ricci_frame_equivariance() {
        let m = ManifoldModel::sphere2();
        let r = m.sample_frames(4)[2].clone();
        let a = 0.83_f64;
        let o = DMatrix::from_row_slice(2, 2, &[a.cos(), a.sin(), a.sin(), -a.cos()]);
        let lhs = m.ricci(&r.rotate(&o));
        let rhs = o.transpose() * m.ricci(&r) * &o;
        assert!((lhs - rhs).amax() < 1e-13);
    }

    #[test]
    fn distances() {
        let m = ManifoldModel::sphere2();
        let p = north();
        let q = m.point(&[1.0, 0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(m.dist(&p, &q), PI / 2.0, epsilon = 1e-15);
        assert_eq!(m.dist(&p, &p), 0.0);
        let c = ManifoldModel::circle(2.0 * PI).unwrap();
        let a = c.point(&[0.1]).unwrap();
        let b = c.point(&[6.2]).unwrap();
        assert_abs_diff_eq!(c.dist(&a, &b), 2.0 * PI - 6.1, epsilon = 1e-14);
    }

    #[test]
    fn log_rejects_near_antipode() {
        let m = ManifoldModel::sphere2();
        let q = m.point(&[0.0, 0.0, -1.0]).unwrap();
        assert!(matches!(
            m.log_map(&north(), &q),
            Err(Error::StepTooLarge { .. })
        ));
    }

    #[test]
    fn log_inverts_exp() {
        let m = ManifoldModel::sphere2();
        let r = m.sample_frames(6)[7].clone();
        let p = r.base().clone();
        let v: Vec<f64> = (0..3)
            .map(|i| r.frame()[(i, 0)] * 0.7 - r.frame()[(i, 1)] * 1.1)
            .collect();
        let q = m.exp_map(&p, &m.tangent(&p, &v).unwrap()).unwrap();
        let back = m.log_map(&p, &q).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(back.vec()[i], v[i], epsilon = 1e-13);
        }
    }
}
