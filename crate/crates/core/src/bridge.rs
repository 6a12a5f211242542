//! Samplers for pinned Brownian motion (Brownian loops at `m₀`) and for
//! unpinned Brownian motion, plus the exact one-point marginal law of the loop.
//!
//! The loop sampler runs the Doob h-transformed SDE in the anti-development,
//! `db = dβ + U⁻¹∇log p_{1−s}(γ_s, m₀) ds`, feeding each increment through the
//! rolling step. Near `s = 1` the heat-kernel drift is replaced by the
//! small-time drift `log_γ(m₀)/(1−s)` on the last `ε` of the interval. Noise is
//! scaled by `√((1−s_{k+1})/(1−s_k))` throughout, which makes the scheme exact
//! for the Euclidean bridge, and the last step lands on `m₀` exactly.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::heatkernel::{wrapped_gaussian, HeatKernelEvaluator, SphereSeries};
use crate::manifold::{
    dot, frame_apply_transpose, ManifoldKind, ManifoldModel, Point, FramePoint,
    SPHERE_INJECTIVITY_GUARD,
};
use crate::mc::sample_rng;
use crate::quadrature;
use crate::transport::{develop, EuclideanPath, FramePath, ManifoldPath, TimeGrid};

pub const DEFAULT_EPS_SPLICE: f64 = 0.005;

const MAX_ATTEMPTS: usize = 1000;

/// Sampler configuration: model, grid, splice cutoff, seed and base frame.
#[derive(Debug, Clone)]
pub struct BridgeConfig {
    heat: HeatKernelEvaluator,
    grid: TimeGrid,
    eps_splice: f64,
    seed: u64,
    r0: FramePoint,
}

impl BridgeConfig {
    /// Config with the model's default base point and standard frame there.
    pub fn new(model: ManifoldModel, grid: TimeGrid, eps_splice: f64, seed: u64) -> Result<Self> {
        let r0 = model.standard_frame(&model.default_base_point());
        Self::with_frame(HeatKernelEvaluator::new(model), grid, eps_splice, seed, r0)
    }

    pub fn with_frame(
        heat: HeatKernelEvaluator,
        grid: TimeGrid,
        eps_splice: f64,
        seed: u64,
        r0: FramePoint,
    ) -> Result<Self> {
        if !(eps_splice > 0.0 && eps_splice <= 0.01) {
            return Err(Error::ContractViolation(format!(
                "splice cutoff must lie in (0, 0.01], got {eps_splice}"
            )));
        }
        if eps_splice < 4.0 * grid.dt() {
            return Err(Error::ContractViolation(format!(
                "grid with N = {} does not resolve splice cutoff {eps_splice} (need ε ≥ 4/N)",
                grid.steps()
            )));
        }
        if eps_splice < heat.t_min() {
            return Err(Error::ContractViolation(format!(
                "splice cutoff {eps_splice} below heat kernel time floor {}",
                heat.t_min()
            )));
        }
        let model = heat.model().clone();
        let r0 = model.frame_point(r0.base(), r0.frame().clone())?;
        Ok(Self {
            heat,
            grid,
            eps_splice,
            seed,
            r0,
        })
    }

    pub fn model(&self) -> &ManifoldModel {
        self.heat.model()
    }

    pub fn heat(&self) -> &HeatKernelEvaluator {
        &self.heat
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn eps_splice(&self) -> f64 {
        self.eps_splice
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn m0(&self) -> &Point {
        self.r0.base()
    }

    pub fn r0(&self) -> &FramePoint {
        &self.r0
    }

    /// The same configuration with a different cutoff (common random numbers
    /// are preserved since the seed is unchanged).
    pub fn with_eps(&self, eps_splice: f64) -> Result<Self> {
        Self::with_frame(self.heat.clone(), self.grid, eps_splice, self.seed, self.r0.clone())
    }

    pub fn with_grid(&self, grid: TimeGrid) -> Result<Self> {
        Self::with_frame(self.heat.clone(), grid, self.eps_splice, self.seed, self.r0.clone())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    /// First grid index inside the splice region `1 − s < ε`.
    pub fn splice_index(&self) -> usize {
        let n = self.grid.steps();
        (0..n)
            .find(|&k| 1.0 - self.grid.time(k) < self.eps_splice)
            .unwrap_or(n)
    }
}

/// A sampled path with its horizontal frames and anti-development.
#[derive(Debug, Clone)]
pub struct PathSample {
    pub path: ManifoldPath,
    pub frames: FramePath,
    pub x: EuclideanPath,
    /// Attempts rejected by the injectivity guard before this sample.
    pub rejections: usize,
    /// Steps whose heat-kernel drift fell below series resolution and used
    /// the small-time drift instead.
    pub drift_fallbacks: usize,
}

/// Precomputed drift data for repeated loop sampling.
#[derive(Debug, Clone)]
pub struct BridgeSampler {
    cfg: BridgeConfig,
    splice_at: usize,
    series: Vec<SphereSeries>,
}

enum StepOutcome {
    Done { fallbacks: usize },
    Rejected,
}

impl BridgeSampler {
    pub fn new(cfg: BridgeConfig) -> Result<Self> {
        let splice_at = cfg.splice_index();
        let mut series = Vec::new();
        if let ManifoldKind::UnitSphere2 = cfg.model().kind() {
            for k in 0..splice_at {
                series.push(cfg.heat.sphere_series(1.0 - cfg.grid.time(k))?);
            }
        }
        Ok(Self {
            cfg,
            splice_at,
            series,
        })
    }

    pub fn config(&self) -> &BridgeConfig {
        &self.cfg
    }

    /// Draws loop number `sample_id` from its own substream.
    pub fn sample(&self, sample_id: u64) -> Result<PathSample> {
        let mut rng = sample_rng(self.cfg.seed, sample_id);
        self.sample_with(&mut rng)
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<PathSample> {
        let model = self.cfg.model();
        let n = self.cfg.grid.steps();
        let (l, d) = (model.embed_dim(), model.dim());
        let mut points = vec![0.0; (n + 1) * l];
        let mut frames = vec![0.0; (n + 1) * l * d];
        let mut incs = vec![0.0; n * d];
        for attempt in 0..MAX_ATTEMPTS {
            match self.run(rng, &mut points, &mut frames, &mut incs)? {
                StepOutcome::Done { fallbacks } => {
                    let grid = self.cfg.grid;
                    return Ok(PathSample {
                        path: ManifoldPath::from_raw(grid, l, points),
                        frames: FramePath::from_raw(grid, l, d, frames),
                        x: EuclideanPath::from_increments(grid, d, &incs)?,
                        rejections: attempt,
                        drift_fallbacks: fallbacks,
                    });
                }
                StepOutcome::Rejected => continue,
            }
        }
        Err(Error::SpliceRejected {
            dist: SPHERE_INJECTIVITY_GUARD,
        })
    }

    fn run<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        points: &mut [f64],
        frames: &mut [f64],
        incs: &mut [f64],
    ) -> Result<StepOutcome> {
        let model = self.cfg.model();
        let grid = self.cfg.grid;
        let n = grid.steps();
        let dt = grid.dt();
        let (l, d) = (model.embed_dim(), model.dim());
        let fb = l * d;
        let m0 = self.cfg.m0().coords();
        let mut p = m0.to_vec();
        let mut f = self.cfg.r0.frame().as_slice().to_vec();
        points[..l].copy_from_slice(&p);
        frames[..fb].copy_from_slice(&f);
        let mut drift = vec![0.0; l];
        let mut db = vec![0.0; d];
        let mut fallbacks = 0;
        for k in 0..n {
            let tau = 1.0 - grid.time(k);
            let last = k + 1 == n;
            if k < self.splice_at && !last {
                if !self.heat_drift(k, tau, &p, m0, &mut drift)? {
                    fallbacks += 1;
                    if !self.flat_drift(tau, &p, m0, &mut drift) {
                        return Ok(StepOutcome::Rejected);
                    }
                }
            } else if !self.flat_drift(tau, &p, m0, &mut drift) {
                return Ok(StepOutcome::Rejected);
            }
            frame_apply_transpose(&f, l, d, &drift, &mut db);
            let sigma = if last {
                0.0
            } else {
                ((tau - dt) / tau * dt).sqrt()
            };
            for b in db.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *b = *b * dt + sigma * z;
            }
            model.roll_step(&mut p, &mut f, &db);
            if last {
                p.copy_from_slice(m0);
            }
            incs[k * d..(k + 1) * d].copy_from_slice(&db);
            points[(k + 1) * l..(k + 2) * l].copy_from_slice(&p);
            frames[(k + 1) * fb..(k + 2) * fb].copy_from_slice(&f);
        }
        Ok(StepOutcome::Done { fallbacks })
    }

    /// `∇log p_τ(·, m₀)` at `p`; `false` when the series has lost resolution.
    fn heat_drift(&self, k: usize, tau: f64, p: &[f64], m0: &[f64], out: &mut [f64]) -> Result<bool> {
        match self.cfg.model().kind() {
            ManifoldKind::FlatTorus { lengths } => {
                let h = &self.cfg.heat;
                for (i, &len) in lengths.iter().enumerate() {
                    out[i] = wrapped_gaussian(tau, p[i] - m0[i], len, h.series_tol(), h.max_terms())?.1;
                }
                Ok(true)
            }
            ManifoldKind::UnitSphere2 => {
                let c = dot(p, m0).clamp(-1.0, 1.0);
                let v = self.series[k].eval(c);
                if !v.resolved() {
                    return Ok(false);
                }
                let g = v.derivative / v.value;
                for i in 0..3 {
                    out[i] = g * (m0[i] - c * p[i]);
                }
                Ok(true)
            }
        }
    }

    /// `log_p(m₀)/τ`; `false` past the injectivity guard.
    fn flat_drift(&self, tau: f64, p: &[f64], m0: &[f64], out: &mut [f64]) -> bool {
        if self.cfg.model().log_raw(p, m0, out).is_err() {
            return false;
        }
        out.iter_mut().for_each(|v| *v /= tau);
        true
    }
}

/// Draws one loop with the sampler built from `cfg`.
pub fn sample_bridge(cfg: &BridgeConfig, sample_id: u64) -> Result<PathSample> {
    BridgeSampler::new(cfg.clone())?.sample(sample_id)
}

/// Unpinned Brownian motion: a standard Wiener path and its development.
pub fn sample_wiener(cfg: &BridgeConfig, sample_id: u64) -> Result<PathSample> {
    let mut rng = sample_rng(cfg.seed, sample_id);
    sample_wiener_with(cfg.model(), cfg.grid, cfg.r0(), &mut rng)
}

pub fn sample_wiener_with<R: Rng + ?Sized>(
    model: &ManifoldModel,
    grid: TimeGrid,
    r0: &FramePoint,
    rng: &mut R,
) -> Result<PathSample> {
    let x = wiener_path(grid, model.dim(), rng);
    let (path, frames) = develop(model, &x, r0)?;
    Ok(PathSample {
        path,
        frames,
        x,
        rejections: 0,
        drift_fallbacks: 0,
    })
}

/// Standard `d`-dimensional Wiener path on the grid.
pub fn wiener_path<R: Rng + ?Sized>(grid: TimeGrid, dim: usize, rng: &mut R) -> EuclideanPath {
    let sd = grid.dt().sqrt();
    let incs: Vec<f64> = (0..grid.steps() * dim)
        .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    EuclideanPath::from_increments(grid, dim, &incs).expect("increment count matches grid")
}

/// Exact Brownian loop on a flat torus: a winding vector `k` drawn with
/// weight `exp(−|k∘L|²/2)`, then the Euclidean bridge from 0 to `k∘L`.
/// Returns the unwrapped Euclidean path (the anti-development of the loop
/// when `r₀` is the identity frame).
pub fn exact_torus_bridge<R: Rng + ?Sized>(lengths: &[f64], grid: TimeGrid, rng: &mut R) -> EuclideanPath {
    let d = lengths.len();
    let w = wiener_path(grid, d, rng);
    let ends: Vec<f64> = w.at(grid.steps()).to_vec();
    let winding: Vec<f64> = lengths
        .iter()
        .map(|&l| sample_winding(l, rng) as f64 * l)
        .collect();
    let n = grid.steps();
    let values: Vec<f64> = (0..=n)
        .flat_map(|k| {
            let t = grid.time(k);
            let row = w.at(k).to_vec();
            (0..d)
                .map(|j| row[j] - t * ends[j] + t * winding[j])
                .collect::<Vec<_>>()
        })
        .collect();
    EuclideanPath::from_values(grid, d, values).expect("bridge starts at the origin")
}

fn sample_winding<R: Rng + ?Sized>(l: f64, rng: &mut R) -> i64 {
    let weights: Vec<(i64, f64)> = (-8..=8)
        .map(|k: i64| (k, (-(k as f64 * l).powi(2) / 2.0).exp()))
        .collect();
    let total: f64 = weights.iter().map(|w| w.1).sum();
    let mut u = rng.random::<f64>() * total;
    for (k, w) in &weights {
        if u < *w {
            return *k;
        }
        u -= w;
    }
    0
}

/// One-point density of the loop at time `s`:
/// `p_s(m₀, y)·p_{1−s}(y, m₀) / p₁(m₀, m₀)`.
pub fn bridge_marginal_density(cfg: &BridgeConfig, s: f64, y: &Point) -> Result<f64> {
    let h = &cfg.heat;
    let t_min = h.t_min();
    if !(s >= t_min && s <= 1.0 - t_min) {
        return Err(Error::Domain(format!(
            "marginal time {s} outside [{t_min}, {}]",
            1.0 - t_min
        )));
    }
    let m0 = cfg.m0();
    Ok(h.heat_kernel(s, m0, y)? * h.heat_kernel(1.0 - s, y, m0)? / h.heat_kernel(1.0, m0, m0)?)
}

/// The law of a scalar summary of `γ(s)`, with its CDF tabulated for
/// goodness-of-fit tests. On a torus the summary is the signed nearest-image
/// displacement of the first coordinate from `m₀`; on the sphere it is
/// `⟨γ(s), m₀⟩`.
#[derive(Debug, Clone)]
pub struct MarginalOracle {
    lo: f64,
    hi: f64,
    breaks: Vec<f64>,
    cum: Vec<f64>,
    density: DensityKind,
}

#[derive(Debug, Clone)]
enum DensityKind {
    Circle { s: f64, len: f64, tol: f64, max_terms: usize, norm: f64 },
    Sphere { a: SphereSeries, b: SphereSeries, norm: f64 },
}

const ORACLE_PANELS: usize = 4096;
const ORACLE_ORDER: usize = 8;

impl MarginalOracle {
    pub fn new(cfg: &BridgeConfig, s: f64) -> Result<Self> {
        let h = &cfg.heat;
        if !(s >= h.t_min() && s <= 1.0 - h.t_min()) {
            return Err(Error::Domain(format!("marginal time {s} out of range")));
        }
        let (lo, hi, density) = match cfg.model().kind() {
            ManifoldKind::FlatTorus { lengths } => {
                let len = lengths[0];
                let (tol, max_terms) = (h.series_tol(), h.max_terms());
                let norm = wrapped_gaussian(1.0, 0.0, len, tol, max_terms)?.0;
                (-len / 2.0, len / 2.0, DensityKind::Circle { s, len, tol, max_terms, norm })
            }
            ManifoldKind::UnitSphere2 => {
                let a = h.sphere_series(s)?;
                let b = h.sphere_series(1.0 - s)?;
                let norm = h.sphere_series(1.0)?.eval(1.0).value;
                (-1.0, 1.0, DensityKind::Sphere { a, b, norm })
            }
        };
        let mut oracle = Self {
            lo,
            hi,
            breaks: Vec::new(),
            cum: Vec::new(),
            density,
        };
        let w = (hi - lo) / ORACLE_PANELS as f64;
        oracle.breaks = (0..=ORACLE_PANELS).map(|i| lo + i as f64 * w).collect();
        oracle.cum = vec![0.0; ORACLE_PANELS + 1];
        for i in 0..ORACLE_PANELS {
            let (a, b) = (oracle.breaks[i], oracle.breaks[i + 1]);
            let piece = quadrature::integrate(|y| oracle.pdf(y), a, b, 1, ORACLE_ORDER);
            oracle.cum[i + 1] = oracle.cum[i] + piece;
        }
        Ok(oracle)
    }

    pub fn support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    /// Total mass of the tabulated density.
    pub fn total_mass(&self) -> f64 {
        self.cum[ORACLE_PANELS]
    }

    pub fn pdf(&self, y: f64) -> f64 {
        match &self.density {
            DensityKind::Circle { s, len, tol, max_terms, norm } => {
                let a = wrapped_gaussian(*s, y, *len, *tol, *max_terms).map(|v| v.0).unwrap_or(0.0);
                let b = wrapped_gaussian(1.0 - s, y, *len, *tol, *max_terms).map(|v| v.0).unwrap_or(0.0);
                a * b / norm
            }
            DensityKind::Sphere { a, b, norm } => {
                2.0 * PI * a.eval(y).value.max(0.0) * b.eval(y).value.max(0.0) / norm
            }
        }
    }

    pub fn cdf(&self, y: f64) -> f64 {
        if y <= self.lo {
            return 0.0;
        }
        if y >= self.hi {
            return self.cum[ORACLE_PANELS];
        }
        let w = (self.hi - self.lo) / ORACLE_PANELS as f64;
        let i = (((y - self.lo) / w) as usize).min(ORACLE_PANELS - 1);
        let a = self.breaks[i];
        self.cum[i] + quadrature::integrate(|t| self.pdf(t), a, y, 1, ORACLE_ORDER)
    }

    /// The scalar summary of a point that this oracle describes.
    pub fn summary(cfg: &BridgeConfig, y: &[f64]) -> f64 {
        let m0 = cfg.m0().coords();
        match cfg.model().kind() {
            ManifoldKind::FlatTorus { lengths } => crate::manifold::nearest_image(y[0] - m0[0], lengths[0]),
            ManifoldKind::UnitSphere2 => dot(y, m0).clamp(-1.0, 1.0),
        }
    }

    /// Probabilities of `bins` equal-width bins over the support.
    pub fn bin_probabilities(&self, bins: usize) -> Vec<f64> {
        let w = (self.hi - self.lo) / bins as f64;
        (0..bins)
            .map(|i| self.cdf(self.lo + (i + 1) as f64 * w) - self.cdf(self.lo + i as f64 * w))
            .collect()
    }
}

/// Writes samples as CSV rows `(sample_id, s, coords..., x...)`.
pub fn write_samples_csv<W: Write>(out: W, samples: &[(u64, &PathSample)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let Some((_, first)) = samples.first() else {
        w.flush()?;
        return Ok(());
    };
    let l = first.path.embed_dim();
    let d = first.x.dim();
    let mut header = vec!["sample_id".to_string(), "s".to_string()];
    header.extend((0..l).map(|i| format!("coord{i}")));
    header.extend((0..d).map(|i| format!("x{i}")));
    w.write_record(&header)?;
    for (id, sample) in samples {
        let grid = sample.path.grid();
        for k in 0..=grid.steps() {
            let mut row = vec![id.to_string(), grid.time(k).to_string()];
            row.extend(sample.path.at(k).iter().map(|v| v.to_string()));
            row.extend(sample.x.at(k).iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_samples_file(path: &Path, samples: &[(u64, &PathSample)]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_samples_csv(std::io::BufWriter::new(file), samples)
}
