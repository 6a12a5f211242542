//! Heat kernel of the generator `Δ/2` on the model manifolds.
//!
//! Torus: product of wrapped Gaussians, images summed symmetrically outward
//! from the nearest one. Sphere: the Legendre series
//! `Σ_ℓ (2ℓ+1)/(4π)·exp(−ℓ(ℓ+1)t/2)·P_ℓ(cos θ)`. Both series are truncated at
//! the first term below `series_tol`; eigenvalues carry the factor 1/2 of the
//! generator.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::manifold::{dot, nearest_image, ManifoldKind, ManifoldModel, Point, TangentVector};
use crate::quadrature;

pub const DEFAULT_SERIES_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_TERMS: usize = 10_000;
pub const DEFAULT_T_MIN: f64 = 1e-4;

/// Relative size of the sphere series below which cancellation has eaten the
/// significant digits.
const SERIES_RESOLUTION: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct HeatKernelEvaluator {
    model: ManifoldModel,
    series_tol: f64,
    max_terms: usize,
    t_min: f64,
}

/// Truncated Legendre coefficients `a_ℓ(t)` of the sphere kernel at a fixed time.
#[derive(Debug, Clone)]
pub struct SphereSeries {
    coeffs: Vec<f64>,
}

/// Value, derivative and absolute mass of a sphere series evaluation.
#[derive(Debug, Clone, Copy)]
pub struct SeriesValue {
    pub value: f64,
    pub derivative: f64,
    pub abs_sum: f64,
    pub abs_dsum: f64,
}

impl SeriesValue {
    /// Whether the value and the log-derivative still carry significant
    /// digits after cancellation in the alternating tail.
    pub fn resolved(&self) -> bool {
        self.value > SERIES_RESOLUTION * self.abs_sum
            && 1e-15 * self.abs_dsum < 1e-7 * self.value
    }
}

impl SphereSeries {
    /// Coefficients up to the first `ℓ` with `a_ℓ·max(1, ℓ(ℓ+1)/2) < tol`,
    /// which bounds both the omitted value and derivative terms since
    /// `|P_ℓ| ≤ 1` and `|P_ℓ'| ≤ ℓ(ℓ+1)/2` on `[−1, 1]`.
    pub fn new(t: f64, tol: f64, max_terms: usize) -> Result<Self> {
        let mut coeffs = Vec::new();
        for l in 0..max_terms {
            let lf = l as f64;
            let a = (2.0 * lf + 1.0) / (4.0 * PI) * (-lf * (lf + 1.0) * t / 2.0).exp();
            let bound = a * (lf * (lf + 1.0) / 2.0).max(1.0);
            if bound < tol && l > 0 {
                return Ok(Self { coeffs });
            }
            coeffs.push(a);
        }
        Err(Error::SeriesNotConverged { tol, max_terms })
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// `f(c) = Σ a_ℓ P_ℓ(c)` and `f'(c)`.
    #[inline]
    pub fn eval(&self, c: f64) -> SeriesValue {
        let a = &self.coeffs;
        let mut value = a[0];
        let mut derivative = 0.0;
        let mut abs_sum = a[0];
        let mut abs_dsum = 0.0;
        if a.len() > 1 {
            let (mut p0, mut p1) = (1.0, c);
            let (mut d0, mut d1) = (0.0, 1.0);
            value += a[1] * c;
            derivative += a[1];
            abs_sum += a[1] * c.abs();
            abs_dsum += a[1];
            for (l, &al) in a.iter().enumerate().skip(2) {
                let lf = (l - 1) as f64;
                let p2 = ((2.0 * lf + 1.0) * c * p1 - lf * p0) / (lf + 1.0);
                let d2 = d0 + (2.0 * lf + 1.0) * p1;
                value += al * p2;
                derivative += al * d2;
                abs_sum += al * p2.abs();
                abs_dsum += al * d2.abs();
                p0 = p1;
                p1 = p2;
                d0 = d1;
                d1 = d2;
            }
        }
        SeriesValue {
            value,
            derivative,
            abs_sum,
            abs_dsum,
        }
    }
}

/// Wrapped Gaussian on a circle of length `l` at displacement `delta`:
/// returns `(value, d/dδ log value)`.
pub(crate) fn wrapped_gaussian(t: f64, delta: f64, l: f64, tol: f64, max_terms: usize) -> Result<(f64, f64)> {
    let d0 = nearest_image(delta, l);
    let norm = (2.0 * PI * t).sqrt().recip();
    let lead = (-d0 * d0 / (2.0 * t)).exp();
    let mut w_sum = 1.0;
    let mut wd_sum = d0;
    let mut k = 1usize;
    loop {
        if k > max_terms {
            return Err(Error::SeriesNotConverged { tol, max_terms });
        }
        let mut any = false;
        for sgn in [1.0, -1.0] {
            let y = d0 + sgn * k as f64 * l;
            let w = (-(y * y - d0 * d0) / (2.0 * t)).exp();
            if w >= tol || norm * lead * w >= tol {
                any = true;
            }
            w_sum += w;
            wd_sum += w * y;
        }
        if !any {
            break;
        }
        k += 1;
    }
    Ok((norm * lead * w_sum, -wd_sum / (t * w_sum)))
}

impl HeatKernelEvaluator {
    pub fn new(model: ManifoldModel) -> Self {
        Self {
            model,
            series_tol: DEFAULT_SERIES_TOL,
            max_terms: DEFAULT_MAX_TERMS,
            t_min: DEFAULT_T_MIN,
        }
    }

    pub fn with_params(model: ManifoldModel, series_tol: f64, max_terms: usize, t_min: f64) -> Result<Self> {
        if !(series_tol > 0.0) || max_terms < 1 || !(t_min > 0.0) {
            return Err(Error::ContractViolation(format!(
                "invalid heat kernel parameters: tol={series_tol}, max_terms={max_terms}, t_min={t_min}"
            )));
        }
        Ok(Self {
            model,
            series_tol,
            max_terms,
            t_min,
        })
    }

    pub fn model(&self) -> &ManifoldModel {
        &self.model
    }

    pub fn series_tol(&self) -> f64 {
        self.series_tol
    }

    pub fn max_terms(&self) -> usize {
        self.max_terms
    }

    pub fn t_min(&self) -> f64 {
        self.t_min
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(t >= self.t_min) || !t.is_finite() {
            return Err(Error::Domain(format!(
                "heat kernel time {t} below floor {}",
                self.t_min
            )));
        }
        Ok(())
    }

    pub fn sphere_series(&self, t: f64) -> Result<SphereSeries> {
        self.check_time(t)?;
        SphereSeries::new(t, self.series_tol, self.max_terms)
    }

    /// `p_t(p, q)`.
    pub fn heat_kernel(&self, t: f64, p: &Point, q: &Point) -> Result<f64> {
        self.heat_kernel_raw(t, p.coords(), q.coords())
    }

    pub fn heat_kernel_raw(&self, t: f64, p: &[f64], q: &[f64]) -> Result<f64> {
        self.check_time(t)?;
        match self.model.kind() {
            ManifoldKind::FlatTorus { lengths } => {
                let mut v = 1.0;
                for (i, &l) in lengths.iter().enumerate() {
                    v *= wrapped_gaussian(t, p[i] - q[i], l, self.series_tol, self.max_terms)?.0;
                }
                Ok(v)
            }
            ManifoldKind::UnitSphere2 => {
                let series = SphereSeries::new(t, self.series_tol, self.max_terms)?;
                Ok(series.eval(dot(p, q).clamp(-1.0, 1.0)).value.max(0.0))
            }
        }
    }

    /// Gradient in the first argument of `log p_t(·, q)`, from the termwise
    /// differentiated series.
    pub fn grad_log_heat_kernel(&self, t: f64, p: &Point, q: &Point) -> Result<TangentVector> {
        let mut out = vec![0.0; self.model.embed_dim()];
        self.grad_log_raw(t, p.coords(), q.coords(), &mut out)?;
        self.model.tangent(p, &out)
    }

    pub fn grad_log_raw(&self, t: f64, p: &[f64], q: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_time(t)?;
        match self.model.kind() {
            ManifoldKind::FlatTorus { lengths } => {
                for (i, &l) in lengths.iter().enumerate() {
                    out[i] = wrapped_gaussian(t, p[i] - q[i], l, self.series_tol, self.max_terms)?.1;
                }
                Ok(())
            }
            ManifoldKind::UnitSphere2 => {
                let series = SphereSeries::new(t, self.series_tol, self.max_terms)?;
                sphere_grad_log(&series, p, q, out)
            }
        }
    }

    /// `∫_M p_t(x, y) dy` by quadrature: product trapezoid (2048 nodes per
    /// axis) on the torus, 64-node Gauss–Legendre in `cos θ` on the sphere.
    pub fn normalization_check(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        match self.model.kind() {
            ManifoldKind::FlatTorus { lengths } => {
                let n = 2048;
                let mut total = 1.0;
                for &l in lengths {
                    let h = l / n as f64;
                    let mut s = 0.0;
                    for j in 0..n {
                        s += wrapped_gaussian(t, j as f64 * h, l, self.series_tol, self.max_terms)?.0;
                    }
                    total *= s * h;
                }
                Ok(total)
            }
            ManifoldKind::UnitSphere2 => {
                let series = SphereSeries::new(t, self.series_tol, self.max_terms)?;
                let (x, w) = quadrature::gauss_legendre(64);
                Ok(2.0 * PI * x.iter().zip(&w).map(|(c, w)| w * series.eval(*c).value).sum::<f64>())
            }
        }
    }
}

/// `∇_p log f(⟨p,q⟩) = f'(c)/f(c)·(q − c p)`; errors when the series has lost
/// its significant digits.
pub(crate) fn sphere_grad_log(series: &SphereSeries, p: &[f64], q: &[f64], out: &mut [f64]) -> Result<()> {
    let c = dot(p, q).clamp(-1.0, 1.0);
    let v = series.eval(c);
    if !v.resolved() {
        return Err(Error::Domain(format!(
            "heat kernel value {:e} below series resolution at cos θ = {c}",
            v.value
        )));
    }
    let g = v.derivative / v.value;
    for i in 0..3 {
        out[i] = g * (q[i] - c * p[i]);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circle() -> HeatKernelEvaluator {
        HeatKernelEvaluator::new(ManifoldModel::circle(2.0 * PI).unwrap())
    }

    fn eigen_circle(t: f64, delta: f64, l: f64) -> f64 {
        let mut s = 1.0 / l;
        for n in 1..200 {
            let k = 2.0 * PI * n as f64 / l;
            s += 2.0 / l * (-k * k * t / 2.0).exp() * (k * delta).cos();
        }
        s
    }

    #[test]
    fn circle_large_time_limit() {
        let hk = circle();
        let m = hk.model().clone();
        let p = m.point(&[0.3]).unwrap();
        let q = m.point(&[2.9]).unwrap();
        let v = hk.heat_kernel(50.0, &p, &q).unwrap();
        // The image sum agrees with the eigenfunction expansion to the series tolerance.
        assert!((v - eigen_circle(50.0, 2.6, 2.0 * PI)).abs() < 1e-12);
        // The first non-constant mode contributes e^{−25}/π ≈ 4.4e−12.
        assert!((v - 1.0 / (2.0 * PI)).abs() < 1e-10);
    }

    #[test]
    fn image_sum_matches_eigen_sum() {
        let hk = circle();
        let m = hk.model().clone();
        for &(t, a, b) in &[(0.05, 0.1, 3.0), (0.5, 1.0, 5.5), (2.0, 0.0, 3.14)] {
            let v = hk.heat_kernel(t, &m.point(&[a]).unwrap(), &m.point(&[b]).unwrap()).unwrap();
            assert!((v - eigen_circle(t, b - a, 2.0 * PI)).abs() < 1e-11, "t={t}");
        }
    }

    #[test]
    fn time_floor_enforced() {
        let hk = circle();
        let p = hk.model().default_base_point();
        assert!(matches!(hk.heat_kernel(1e-5, &p, &p), Err(Error::Domain(_))));
        assert!(matches!(hk.grad_log_heat_kernel(1e-5, &p, &p), Err(Error::Domain(_))));
    }

    #[test]
    fn gradient_vanishes_at_coincidence() {
        for m in [ManifoldModel::sphere2(), ManifoldModel::torus(vec![1.0, 2.0]).unwrap()] {
            let hk = HeatKernelEvaluator::new(m.clone());
            let p = m.sample_frames(3)[2].base().clone();
            let g = hk.grad_log_heat_kernel(0.3, &p, &p).unwrap();
            assert!(g.norm() < 1e-10);
        }
    }

    #[test]
    fn circle_small_time_gradient() {
        let hk = circle();
        let m = hk.model().clone();
        let p = m.point(&[1.0]).unwrap();
        let q = m.point(&[1.3]).unwrap();
        let g = hk.grad_log_heat_kernel(0.01, &p, &q).unwrap();
        let expected = 0.3 / 0.01;
        assert!(((g.vec()[0] - expected) / expected).abs() < 0.01);
    }

    #[test]
    fn normalization() {
        assert!((circle().normalization_check(0.5).unwrap() - 1.0).abs() < 1e-10);
        let s = HeatKernelEvaluator::new(ManifoldModel::sphere2());
        assert!((s.normalization_check(0.2).unwrap() - 1.0).abs() < 1e-8);
        let t2 = HeatKernelEvaluator::new(ManifoldModel::torus(vec![2.0 * PI, 2.0 * PI]).unwrap());
        assert!((t2.normalization_check(1.0).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn truncation_is_stable_under_more_terms() {
        let s = SphereSeries::new(0.05, 1e-12, 10_000).unwrap();
        let omitted = {
            let l = s.len() as f64;
            (2.0 * l + 1.0) / (4.0 * PI) * (-l * (l + 1.0) * 0.05 / 2.0).exp()
        };
        assert!(omitted < 1e-12);
        let mut longer = s.clone();
        for l in s.len()..2 * s.len() {
            let lf = l as f64;
            longer.coeffs.push((2.0 * lf + 1.0) / (4.0 * PI) * (-lf * (lf + 1.0) * 0.05 / 2.0).exp());
        }
        for c in [-1.0, -0.3, 0.2, 0.9, 1.0] {
            assert!((s.eval(c).value - longer.eval(c).value).abs() < 1e-12);
        }
    }

    #[test]
    fn max_terms_cap_reports_nonconvergence() {
        assert!(matches!(
            SphereSeries::new(1e-4, 1e-12, 5),
            Err(Error::SeriesNotConverged { .. })
        ));
    }
}
