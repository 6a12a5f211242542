//! Named experiments. Each run returns a [`Report`] holding the measured
//! values, the thresholds they are judged against, and plot data. A report
//! passes iff every threshold check passes.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use crate::bridge::{
    exact_torus_bridge, sample_wiener_with, wiener_path, BridgeConfig, BridgeSampler, MarginalOracle, PathSample,
};
use crate::config::{ExperimentConfig, ManifoldChoice};
use crate::error::{Error, Result};
use crate::flow::{
    bismut_defect, flat_density, flow_by, flow_integrate, flow_on_loops, flow_property_check, flow_step, q_kernel,
    radon_nikodym, FlowConfig, FlowScheme, FlowState,
};
use crate::functionals::{
    cm_inner, cm_norm, divergence, divergence_of_input, divergence_profile, holder_norm, holder_rate_constant,
    malliavin_deriv_div, CameronMartinVector, CylindricalFunctional, FourierMode, HolderParams, PointFunction,
};
use crate::heatkernel::HeatKernelEvaluator;
use crate::manifold::{FramePoint, ManifoldKind, ManifoldModel};
use crate::mc::{
    chi_square_test, estimate, exp_moment, fit_rate, ks_test, l2_norm_se, lp_norm, mean, sample_rng, tail_exponent,
    try_par_samples, MCStat, Stability, TailOptions,
};
use crate::quadrature::gauss_legendre;
use crate::transport::{antidevelop, develop, EuclideanPath, ManifoldPath, TimeGrid};

/// Experiment names accepted by [`run_experiment`].
pub const EXPERIMENTS: &[&str] = &[
    "bridge-marginal",
    "ibp",
    "divergence-rate",
    "antidev-rate",
    "fernique-sup",
    "fernique-holder",
    "div-tail",
    "exp-linear",
    "driver-flow",
    "quasi-invariance",
    "gradient-check",
    "structural",
];

const RATE_TIMES: [f64; 4] = [0.5, 0.75, 0.875, 0.9375];
const DEFAULT_SEED: u64 = 7;

/// One measured quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub statistic: String,
    pub value: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub n: usize,
    pub flags: String,
}

/// A threshold check: passes iff `lo ≤ value ≤ hi`.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    pub passed: bool,
}

/// One curve as two columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Plot {
    pub name: String,
    pub columns: (String, String),
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub experiment: String,
    pub rows: Vec<ResultRow>,
    pub checks: Vec<Check>,
    pub plots: Vec<Plot>,
    pub notes: Vec<String>,
}

impl Report {
    pub fn new(experiment: &str) -> Self {
        Self {
            experiment: experiment.to_string(),
            rows: Vec::new(),
            checks: Vec::new(),
            plots: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn row(&mut self, statistic: impl Into<String>, value: f64, ci: (f64, f64), n: usize, flags: &str) {
        self.rows.push(ResultRow {
            statistic: statistic.into(),
            value,
            ci_lo: ci.0,
            ci_hi: ci.1,
            n,
            flags: flags.to_string(),
        });
    }

    pub fn value(&mut self, statistic: impl Into<String>, value: f64, n: usize) {
        self.row(statistic, value, (f64::NAN, f64::NAN), n, "");
    }

    pub fn stat(&mut self, statistic: impl Into<String>, st: &MCStat) {
        let flags = st.stability.to_string();
        self.row(statistic, st.mean, st.ci(), st.n, &flags);
    }

    pub fn check(&mut self, name: impl Into<String>, value: f64, lo: f64, hi: f64, n: usize) -> bool {
        let passed = value >= lo && value <= hi;
        self.checks.push(Check {
            name: name.into(),
            value,
            lo,
            hi,
            n,
            passed,
        });
        passed
    }

    pub fn plot(&mut self, name: impl Into<String>, x: &str, y: &str, points: Vec<(f64, f64)>) {
        self.plots.push(Plot {
            name: name.into(),
            columns: (x.to_string(), y.to_string()),
            points,
        });
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    /// Appends another report's content, prefixing nothing.
    pub fn absorb(&mut self, other: Report) {
        self.rows.extend(other.rows);
        self.checks.extend(other.checks);
        self.plots.extend(other.plots);
        self.notes.extend(other.notes);
    }

    /// Writes `results.csv`, `summary.txt` and `plots/*.dat` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir.join("plots"))?;
        let mut w = csv::Writer::from_path(dir.join("results.csv"))?;
        w.write_record(["experiment", "statistic", "value", "ci_lo", "ci_hi", "n", "flags"])?;
        for r in &self.rows {
            w.write_record([
                self.experiment.clone(),
                r.statistic.clone(),
                fmt_num(r.value),
                fmt_num(r.ci_lo),
                fmt_num(r.ci_hi),
                r.n.to_string(),
                r.flags.clone(),
            ])?;
        }
        for c in &self.checks {
            w.write_record([
                self.experiment.clone(),
                format!("check: {}", c.name),
                fmt_num(c.value),
                fmt_num(c.lo),
                fmt_num(c.hi),
                c.n.to_string(),
                if c.passed { "PASS".to_string() } else { "FAIL".to_string() },
            ])?;
        }
        w.flush()?;
        std::fs::write(dir.join("summary.txt"), self.summary())?;
        for p in &self.plots {
            let mut text = format!("# {} {}\n", p.columns.0, p.columns.1);
            for (x, y) in &p.points {
                let _ = writeln!(text, "{x:.10e} {y:.10e}");
            }
            std::fs::write(dir.join("plots").join(format!("{}.dat", p.name)), text)?;
        }
        Ok(())
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "experiment: {}", self.experiment);
        let _ = writeln!(s, "status: {}", if self.passed() { "PASS" } else { "FAIL" });
        let _ = writeln!(s, "\nchecks:");
        for c in &self.checks {
            let _ = writeln!(
                s,
                "  [{}] {}: {} (accept [{}, {}], n = {})",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                fmt_num(c.value),
                fmt_num(c.lo),
                fmt_num(c.hi),
                c.n
            );
        }
        let _ = writeln!(s, "\nmeasurements:");
        for r in &self.rows {
            let ci = if r.ci_lo.is_nan() {
                String::new()
            } else {
                format!(" [{}, {}]", fmt_num(r.ci_lo), fmt_num(r.ci_hi))
            };
            let flags = if r.flags.is_empty() { String::new() } else { format!(" {}", r.flags) };
            let _ = writeln!(s, "  {}: {}{} (n = {}){}", r.statistic, fmt_num(r.value), ci, r.n, flags);
        }
        if !self.notes.is_empty() {
            let _ = writeln!(s, "\nnotes:");
            for n in &self.notes {
                let _ = writeln!(s, "  {n}");
            }
        }
        s
    }
}

fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.6e}")
    }
}

/// Runs a named experiment.
pub fn run_experiment(name: &str, cfg: &ExperimentConfig) -> Result<Report> {
    let mut report = match name {
        "bridge-marginal" => bridge_marginal(cfg),
        "ibp" => ibp(cfg),
        "divergence-rate" => divergence_rate(cfg),
        "antidev-rate" => antidev_rate(cfg),
        "fernique-sup" => fernique_sup(cfg),
        "fernique-holder" => fernique_holder(cfg),
        "div-tail" => div_tail(cfg),
        "exp-linear" => exp_linear(cfg),
        "driver-flow" => driver_flow(cfg),
        "quasi-invariance" => quasi_invariance(cfg),
        "gradient-check" => gradient_check(cfg),
        "structural" => structural(cfg),
        other => {
            return Err(Error::Config(format!(
                "unknown experiment '{other}'; expected one of {}",
                EXPERIMENTS.join(", ")
            )))
        }
    }?;
    report.experiment = name.to_string();
    Ok(report)
}

fn seed(cfg: &ExperimentConfig) -> u64 {
    cfg.seed.unwrap_or(DEFAULT_SEED)
}

fn models(cfg: &ExperimentConfig, default: &[ManifoldChoice]) -> Vec<ManifoldChoice> {
    cfg.manifold.map_or_else(|| default.to_vec(), |m| vec![m])
}

const BOTH: &[ManifoldChoice] = &[ManifoldChoice::Torus, ManifoldChoice::Sphere2];

fn samples(cfg: &ExperimentConfig, default: usize) -> usize {
    cfg.samples.unwrap_or(default)
}

/// Smallest splice cutoff of the form `0.005·2^j` that the grid resolves.
fn default_eps(n: usize) -> f64 {
    let mut eps = 0.005;
    while eps < 4.0 / n as f64 && eps < 0.01 {
        eps *= 2.0;
    }
    eps.min(0.01)
}

fn bridge_config(cfg: &ExperimentConfig, choice: ManifoldChoice, default_n: usize) -> Result<BridgeConfig> {
    let n = cfg.grid.n.unwrap_or(default_n);
    let grid = TimeGrid::new(n)?;
    let eps = cfg.bridge.eps_splice.unwrap_or_else(|| default_eps(n));
    let model = cfg.model(choice)?;
    let heat = cfg.heat_kernel(model.clone())?;
    let r0 = model.standard_frame(&model.default_base_point());
    BridgeConfig::with_frame(heat, grid, eps, seed(cfg), r0).map_err(|e| Error::Config(e.to_string()))
}

/// The configured direction, or `ḣ = 0.8·√2cos(πs)e₁ + 0.6·√2cos(2πs)e₂`
/// (unit norm) by default.
fn direction(cfg: &ExperimentConfig, grid: TimeGrid, dim: usize) -> Result<CameronMartinVector> {
    if let Some(h) = cfg.direction(grid, dim)? {
        return Ok(h);
    }
    let modes = if dim >= 2 {
        vec![FourierMode::new(1, 0, 0.8), FourierMode::new(2, 1, 0.6)]
    } else {
        vec![FourierMode::new(1, 0, 1.0)]
    };
    CameronMartinVector::fourier(grid, dim, &modes)
}

fn z_score(diff: &MCStat) -> f64 {
    let se = diff.se();
    if se == 0.0 {
        if diff.mean == 0.0 { 0.0 } else { f64::INFINITY }
    } else {
        diff.mean.abs() / se
    }
}

fn stable_indicator(st: &MCStat) -> f64 {
    if st.stability == Stability::Stable { 1.0 } else { 0.0 }
}

fn sample_all<T, F>(sampler: &BridgeSampler, n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&PathSample) -> Result<T> + Sync + Send,
{
    try_par_samples(n, |id| f(&sampler.sample(id)?))
}

// ---------------------------------------------------------------- bridge

fn bridge_marginal(cfg: &ExperimentConfig) -> Result<Report> {
    let mut rep = Report::new("bridge-marginal");
    let th = &cfg.thresholds;
    for choice in models(cfg, BOTH) {
        let name = choice.name();
        let bc = bridge_config(cfg, choice, 1024)?;
        let n = samples(cfg, 100_000);
        let nn = bc.grid().steps();
        // Three interior times plus one inside the wider splice region, where
        // the cutoff actually acts.
        let idx = [nn / 4, nn / 2, 3 * nn / 4, nn - 8];
        let times = idx.map(|k| bc.grid().time(k));
        let run = |bc: &BridgeConfig| -> Result<(Vec<[f64; 4]>, usize, usize)> {
            let sampler = BridgeSampler::new(bc.clone())?;
            let out = sample_all(&sampler, n, |s| {
                let v = idx.map(|k| MarginalOracle::summary(bc, s.path.at(k)));
                Ok((v, s.rejections, s.drift_fallbacks))
            })?;
            let rej = out.iter().map(|o| o.1).sum();
            let fb = out.iter().map(|o| o.2).sum();
            Ok((out.into_iter().map(|o| o.0).collect(), rej, fb))
        };
        let (values, rej, fb) = run(&bc)?;
        rep.value(format!("{name} rejections"), rej as f64, n);
        rep.value(format!("{name} drift fallbacks"), fb as f64, n);
        let mut p_values = Vec::new();
        let mut ks_stats = Vec::new();
        let mut oracles = Vec::new();
        for (j, &s) in times.iter().enumerate() {
            let oracle = MarginalOracle::new(&bc, s)?;
            let col: Vec<f64> = values.iter().map(|v| v[j]).collect();
            let ks = ks_test(&col, |y| oracle.cdf(y));
            let (lo, hi) = oracle.support();
            rep.row(format!("{name} s={s} KS D"), ks.statistic, (f64::NAN, f64::NAN), n, &format!("p={:.4}", ks.p_value));
            if j < 3 {
                let chi = chi_square_test(&col, lo, hi, &oracle.bin_probabilities(32))?;
                rep.row(format!("{name} s={s} chi2"), chi.statistic, (f64::NAN, f64::NAN), n, &format!("p={:.4}", chi.p_value));
                p_values.extend([ks.p_value, chi.p_value]);
            }
            ks_stats.push(ks.statistic);
            if j == 1 {
                let bins = 60;
                let w = (hi - lo) / bins as f64;
                let mut counts = vec![0usize; bins];
                for &v in &col {
                    counts[(((v - lo) / w) as usize).min(bins - 1)] += 1;
                }
                let hist = (0..bins)
                    .map(|i| (lo + (i as f64 + 0.5) * w, counts[i] as f64 / (n as f64 * w)))
                    .collect();
                rep.plot(format!("bridge_{name}_s0.5_empirical"), "summary", "density", hist);
                let pdf = (0..=200).map(|i| {
                    let y = lo + (hi - lo) * i as f64 / 200.0;
                    (y, oracle.pdf(y))
                });
                rep.plot(format!("bridge_{name}_s0.5_oracle"), "summary", "density", pdf.collect());
            }
            oracles.push(oracle);
        }
        let tests = p_values.len() as f64;
        let p_min = p_values.iter().copied().fold(1.0, f64::min);
        rep.check(
            format!("{name} Bonferroni-corrected min p over {tests} tests at s = 1/4, 1/2, 3/4"),
            (p_min * tests).min(1.0),
            th.gof_p_min,
            1.0,
            n,
        );

        // Same seed with the cutoff doubled (or halved if already at the cap).
        let alt_eps = if bc.eps_splice() * 2.0 <= 0.01 { bc.eps_splice() * 2.0 } else { bc.eps_splice() / 2.0 };
        match bc.with_eps(alt_eps) {
            Ok(alt) => {
                let (alt_values, _, _) = run(&alt)?;
                let mut worst: f64 = 0.0;
                for (j, oracle) in oracles.iter().enumerate() {
                    let col: Vec<f64> = alt_values.iter().map(|v| v[j]).collect();
                    let ks = ks_test(&col, |y| oracle.cdf(y));
                    if j == 3 {
                        rep.row(
                            format!("{name} s={} KS D with cutoff {alt_eps}", times[j]),
                            ks.statistic,
                            (f64::NAN, f64::NAN),
                            n,
                            &format!("p={:.4}", ks.p_value),
                        );
                    }
                    worst = worst.max((ks.statistic - ks_stats[j]).abs());
                }
                rep.check(
                    format!("{name} max |ΔD| between cutoffs {} and {alt_eps}", bc.eps_splice()),
                    worst,
                    0.0,
                    1.36 / (n as f64).sqrt(),
                    n,
                );
            }
            Err(e) => rep.note(format!("{name}: cutoff comparison skipped ({e})")),
        }
    }
    Ok(rep)
}

// ---------------------------------------------------------------- ibp

struct Triple {
    name: &'static str,
    f: CylindricalFunctional,
    g: CylindricalFunctional,
}

fn torus_sin(dim: usize, comp: usize) -> PointFunction {
    PointFunction::torus_cos(dim, comp, -PI / 2.0)
}

fn builtin_triples(model: &ManifoldModel) -> Result<Vec<Triple>> {
    let one = CylindricalFunctional::constant(1.0);
    let single = |s: f64, f: PointFunction| CylindricalFunctional::new(model, 1.0, vec![(s, f)]);
    Ok(match model.kind() {
        ManifoldKind::FlatTorus { .. } => {
            let d = model.dim();
            let c2 = if d > 1 { 1 } else { 0 };
            let mut both = vec![0; d];
            both[0] = 1;
            both[c2] += 1;
            vec![
                Triple { name: "F=G=1", f: one.clone(), g: one.clone() },
                Triple { name: "F=sin(y1(1/2)), G=1", f: single(0.5, torus_sin(d, 0))?, g: one.clone() },
                Triple {
                    name: "F=cos(y1(1/4)), G=sin(y2(3/4))",
                    f: single(0.25, PointFunction::torus_cos(d, 0, 0.0))?,
                    g: single(0.75, torus_sin(d, c2))?,
                },
                Triple {
                    name: "F=cos(y1(3/8)+y2(3/8)), G=cos(y1(5/8))",
                    f: single(0.375, PointFunction::TorusFourier { wavenumbers: both, phase: 0.0 })?,
                    g: single(0.625, PointFunction::torus_cos(d, 0, 0.0))?,
                },
                Triple {
                    name: "F=cos(y1(1/4))cos(y2(1/2)), G=sin(y1(3/4))",
                    f: CylindricalFunctional::new(
                        model,
                        1.0,
                        vec![(0.25, PointFunction::torus_cos(d, 0, 0.0)), (0.5, PointFunction::torus_cos(d, c2, 0.3))],
                    )?,
                    g: single(0.75, torus_sin(d, 0))?,
                },
            ]
        }
        ManifoldKind::UnitSphere2 => {
            let e = |i: usize| {
                let mut a = vec![0.0; 3];
                a[i] = 1.0;
                PointFunction::Linear(a)
            };
            let zonal = PointFunction::Quadratic(vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -2.0]);
            let xy = PointFunction::Quadratic(vec![0.0, 0.5, 0.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0]);
            vec![
                Triple { name: "F=G=1", f: one.clone(), g: one.clone() },
                Triple { name: "F=<y(3/8),e3>, G=<y(5/8),e3>", f: single(0.375, e(2))?, g: single(0.625, e(2))? },
                Triple { name: "F=<y(1/2),e1>, G=<y(1/4),e2>", f: single(0.5, e(0))?, g: single(0.25, e(1))? },
                Triple { name: "F=zonal quadratic at 1/2, G=1", f: single(0.5, zonal)?, g: one.clone() },
                Triple {
                    name: "F=<y(1/4),e3><y(3/4),e1>, G=xy at 1/2",
                    f: CylindricalFunctional::new(model, 1.0, vec![(0.25, e(2)), (0.75, e(0))])?,
                    g: single(0.5, xy)?,
                },
            ]
        }
    })
}

/// `E[D_hF]` for `F = sin(2πy₁(½)/L)` on the flat torus: the loop value at
/// time ½ is `N(kL/2, ¼)` given winding `k`, with winding weights
/// `∝ exp(−(kL)²/2)`.
fn torus_sin_closed_form(len: f64, h_half: f64) -> f64 {
    let w = 2.0 * PI / len;
    let (mut num, mut den) = (0.0, 0.0);
    for k in -8i32..=8 {
        let weight = (-(k as f64 * len).powi(2) / 2.0).exp();
        num += weight * if k % 2 == 0 { 1.0 } else { -1.0 };
        den += weight;
    }
    w * (-w * w / 8.0).exp() * num / den * h_half
}

fn ibp(cfg: &ExperimentConfig) -> Result<Report> {
    let mut rep = Report::new("ibp");
    let th = &cfg.thresholds;
    for choice in models(cfg, BOTH) {
        let name = choice.name();
        let bc = bridge_config(cfg, choice, 1024)?;
        let model = bc.model().clone();
        let n = samples(cfg, if choice == ManifoldChoice::Torus { 100_000 } else { 10_000 });
        let h = direction(cfg, bc.grid(), model.dim())?;
        if !h.in_h0() {
            return Err(Error::Config("integration by parts needs h(1) = 0".into()));
        }
        let triples = builtin_triples(&model)?;
        let sampler = BridgeSampler::new(bc.clone())?;
        let out = sample_all(&sampler, n, |s| {
            let delta = divergence(&model, &h, &s.x, &s.frames)?;
            triples
                .iter()
                .map(|t| {
                    let f = t.f.eval(&model, &s.path)?;
                    let g = t.g.eval(&model, &s.path)?;
                    let dhf = t.f.dh(&model, &h, &s.path, &s.frames)?;
                    let dhg = t.g.dh(&model, &h, &s.path, &s.frames)?;
                    Ok((dhf * g, f * (-dhg + delta * g)))
                })
                .collect::<Result<Vec<_>>>()
        })?;
        for (j, t) in triples.iter().enumerate() {
            let lhs: Vec<f64> = out.iter().map(|o| o[j].0).collect();
            let rhs: Vec<f64> = out.iter().map(|o| o[j].1).collect();
            let diff: Vec<f64> = out.iter().map(|o| o[j].0 - o[j].1).collect();
            let (sl, sr, sd) = (estimate(&lhs)?, estimate(&rhs)?, estimate(&diff)?);
            rep.stat(format!("{name} [{}] E[D_hF G]", t.name), &sl);
            rep.stat(format!("{name} [{}] E[F(-D_hG + delta G)]", t.name), &sr);
            rep.stat(format!("{name} [{}] difference", t.name), &sd);
            rep.check(format!("{name} [{}] |difference|/SE", t.name), z_score(&sd), 0.0, th.z_max, n);
            if let (ManifoldKind::FlatTorus { lengths }, 1) = (model.kind(), j) {
                let k_half = bc.grid().index_of(0.5)?;
                let c = torus_sin_closed_form(lengths[0], h.h_at(k_half)[0]);
                rep.value(format!("{name} [{}] closed form", t.name), c, n);
                let zl = (sl.mean - c).abs() / sl.se();
                let zr = (sr.mean - c).abs() / sr.se();
                rep.check(format!("{name} [{}] |E[D_hF] - closed form|/SE", t.name), zl, 0.0, th.z_max, n);
                rep.check(format!("{name} [{}] |E[F delta] - closed form|/SE", t.name), zr, 0.0, th.z_max, n);
            }
        }
    }
    Ok(rep)
}

// ---------------------------------------------------------------- rates

fn rate_indices(grid: TimeGrid) -> Result<Vec<usize>> {
    RATE_TIMES.iter().map(|&s| grid.index_of(s)).collect()
}

fn divergence_rate(cfg: &ExperimentConfig) -> Result<Report> {
    let mut rep = Report::new("divergence-rate");
    let th = &cfg.thresholds;
    for choice in models(cfg, BOTH) {
        let name = choice.name();
        let bc = bridge_config(cfg, choice, 1024)?;
        let model = bc.model().clone();
        let grid = bc.grid();
        let n = samples(cfg, 100_000);
        let h = direction(cfg, grid, model.dim())?;
        let idx = rate_indices(grid)?;
        let sampler = BridgeSampler::new(bc.clone())?;
        let out = sample_all(&sampler, n, |s| {
            let prof = divergence_profile(&model, &h, &s.x, &s.frames)?;
            let full = prof[grid.steps()];
            Ok(idx.iter().map(|&k| prof[k] - full).collect::<Vec<f64>>())
        })?;
        let dt = grid.dt();
        let d = model.dim();
        let mut points = Vec::new();
        for (j, &k) in idx.iter().enumerate() {
            let col: Vec<f64> = out.iter().map(|o| o[j]).collect();
            let est = lp_norm(&col, 2.0)?;
            let se = l2_norm_se(&col)?;
            let energy: f64 = (k..grid.steps()).map(|i| h.hdot_at(i).iter().map(|v| v * v).sum::<f64>() * dt).sum();
            let abscissa = energy.sqrt();
            let s = RATE_TIMES[j];
            rep.row(format!("{name} s={s} ||delta_s - delta||_L2"), est, (est - 2.576 * se, est + 2.576 * se), n, "");
            rep.value(format!("{name} s={s} (int_s^1 |hdot|^2)^(1/2)"), abscissa, n);
            points.push((abscissa, est));
            if model.is_flat() {
                // Var of −Σ_{i≥k} ḣ_i·Δx_i under the Euclidean bridge.
                let tail_sum: Vec<f64> =
                    (0..d).map(|c| (k..grid.steps()).map(|i| h.hdot_at(i)[c] * dt).sum()).collect();
                let closed = (energy - tail_sum.iter().map(|v| v * v).sum::<f64>()).max(0.0).sqrt();
                rep.value(format!("{name} s={s} closed form"), closed, n);
                rep.check(format!("{name} s={s} |L2 - closed form|/SE"), (est - closed).abs() / se, 0.0, th.z_max, n);
            }
        }
        let fit = fit_rate(&points)?;
        rep.value(format!("{name} log-log slope"), fit.slope, n);
        rep.value(format!("{name} log-log r2"), fit.r2, n);
        if !model.is_flat() {
            rep.check(format!("{name} log-log slope"), fit.slope, th.div_slope[0], th.div_slope[1], n);
        }
        rep.plot(format!("divergence_rate_{name}"), "abscissa", "l2_norm", points);
    }
    Ok(rep)
}

fn antidev_rate(cfg: &ExperimentConfig) -> Result<Report> {
    let mut rep = Report::new("antidev-rate");
    let th = &cfg.thresholds;
    for choice in models(cfg, BOTH) {
        let name = choice.name();
        let bc = bridge_config(cfg, choice, 1024)?;
        let grid = bc.grid();
        let n = samples(cfg, 100_000);
        let idx = rate_indices(grid)?;
        let sampler = BridgeSampler::new(bc.clone())?;
        let out = sample_all(&sampler, n, |s| {
            let end = s.x.at(grid.steps());
            Ok(idx
                .iter()
                .map(|&k| s.x.at(k).iter().zip(end).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
                .collect::<Vec<f64>>())
        })?;
        let d = bc.model().dim() as f64;
        let mut points = Vec::new();
        for (j, &s) in RATE_TIMES.iter().enumerate() {
            let col: Vec<f64> = out.iter().map(|o| o[j]).collect();
            let est = lp_norm(&col, 2.0)?;
            let se = l2_norm_se(&col)?;
            rep.row(format!("{name} s={s} ||x(s) - x(1)||_L2"), est, (est - 2.576 * se, est + 2.576 * se), n, "");
            points.push((1.0 - s, est));
            if bc.model().is_flat() {
                let closed = (d * s * (1.0 - s)).sqrt();
                rep.value(format!("{name} s={s} Euclidean bridge value (d s(1-s))^(1/2)"), closed, n);
            }
        }
        let fit = fit_rate(&points)?;
        rep.value(format!("{name} log-log r2"), fit.r2, n);
        rep.check(format!("{name} log-log slope"), fit.slope, th.antidev_slope[0], th.antidev_slope[1], n);
        if bc.model().is_flat() {
            let exact: Vec<(f64, f64)> = RATE_TIMES.iter().map(|&s| (1.0 - s, (d * s * (1.0 - s)).sqrt())).collect();
            let exact_fit = fit_rate(&exact)?;
            rep.value(format!("{name} log-log slope of the exact bridge value"), exact_fit.slope, n);
            rep.note(format!(
                "{name}: the Euclidean bridge has ||x(s)-x(1)||_L2 = (d s(1-s))^(1/2) exactly; on s in {RATE_TIMES:?} \
                 its log-log slope against 1-s is {:.3}, because the factor s^(1/2) is far from constant on this window",
                exact_fit.slope
            ));
        }
        rep.plot(format!("antidev_rate_{name}"), "1-s", "l2_norm", points);
    }
    Ok(rep)
}

// ---------------------------------------------------------------- Fernique

fn sup_norm(x: &EuclideanPath) -> f64 {
    x.values()
        .chunks_exact(x.dim())
        .map(|r| r.iter().map(|v| v * v).sum::<f64>())
        .fold(0.0, f64::max)
        .sqrt()
}

fn fernique_sup(cfg: &ExperimentConfig) -> Result<Report> {
    let mut rep = Report::new("fernique-sup");
    let th = &cfg.thresholds;
    let lambda = th.fernique_lambda;
    for choice in models(cfg, BOTH) {
        let name = choice.name();
        let bc = bridge_config(cfg, choice, 1024)?;
        let n = samples(cfg, 100_000);
        let sampler = BridgeSampler::new(bc.clone())?;
        let sups = sample_all(&sampler, n, |s| Ok(sup_norm(&s.x)))?;
        let st = exp_moment(&sups, lambda, true)?;
        rep.stat(format!("{name} E[exp({lambda} sup|x|^2)]"), &st);
        rep.value(format!("{name} top sample share"), st.top_sample_share, n);
        rep.check(format!("{name} estimate is STABLE"), stable_indicator(&st), 1.0, 1.0, n);
        if let ManifoldKind::FlatTorus { lengths } = bc.model().kind() {
            let grid = bc.grid();
            let oracle_seed = seed(cfg) ^ 0x9e37_79b9_7f4a_7c15;
            let exact = try_par_samples(n, |id| {
                Ok(sup_norm(&exact_torus_bridge(lengths, grid, &mut sample_rng(oracle_seed, id))))
            })?;
            let so = exp_moment(&exact, lambda, true)?;
            rep.stat(format!("{name} exact Euclidean bridge E[exp({lambda} sup|x|^2)]"), &so);
            let z = (st.mean - so.mean).abs() / (st.se().powi(2) + so.se().powi(2)).sqrt();
            rep.check(format!("{name} |sampler - exact bridge|/SE"), z, 0.0, th.z_max, n);
        }
    }
    Ok(rep)
}

/// Grid on which Hölder norms are evaluated: the pair sum is quadratic in N.
const HOLDER_GRID: usize = 256;

fn fernique_holder(cfg: &ExperimentConfig) -> Result<Report> {
    let mut rep = Report::new("fernique-holder");
    let th = &cfg.thresholds;
    let fine = TimeGrid::new(1024)?;
    let linear = EuclideanPath::from_fn(fine, 1, |t| vec![t]);
    let reference = (1.0f64 / 6.0).powf(0.25);
    let value = holder_norm(&linear, &HolderParams::new(2, 0.25)?);
    rep.value("linear path norm (2m=4, alpha=1/4, N=1024)", value, 1);
    rep.value("linear path closed form (1/6)^(1/4)", reference, 1);
    rep.check("|linear path norm - (1/6)^(1/4)|", (value - reference).abs(), 0.0, th.holder_linear_tol, 1);

    let params = cfg.holder_params()?;
    let coarse = TimeGrid::new(HOLDER_GRID)?;
    let rc = holder_rate_constant(&params, coarse, 16, seed(cfg));
    rep.row(
        format!("reference lambda0 (m={}, alpha={}, N={HOLDER_GRID})", params.m(), params.alpha()),
        rc.value,
        (
            rc.per_start.iter().copied().fold(f64::INFINITY, f64::min),
            rc.per_start.iter().copied().fold(0.0, f64::max),
        ),
        rc.per_start.len(),
        if rc.converged { "converged" } else { "not-converged" },
    );
    let lambda = th.holder_lambda_fraction * rc.value;
    for choice in models(cfg, BOTH) {
        let name = choice.name();
        let bc = bridge_config(cfg, choice, 1024)?;
        let n = samples(cfg, 100_000);
        let factor = bc.grid().steps() / HOLDER_GRID;
        if factor == 0 {
            return Err(Error::Config(format!("grid.N must be at least {HOLDER_GRID}")));
        }
        let sampler = BridgeSampler::new(bc.clone())?;
        let norms = sample_all(&sampler, n, |s| Ok(holder_norm(&s.x.subsample(factor)?, &params)))?;
        let st = exp_moment(&norms, lambda, true)?;
        rep.stat(format!("{name} E[exp({lambda:.4} ||x||^2)]"), &st);
        rep.stat(format!("{name} E[||x||]"), &estimate(&norms)?);
        rep.check(format!("{name} estimate is STABLE"), stable_indicator(&st), 1.0, 1.0, n);
    }
    Ok(rep)
}

// ---------------------------------------------------------------- divergence tails

fn unit_direction(cfg: &ExperimentConfig, grid: TimeGrid, dim: usize) -> Result<CameronMartinVector> {
    let h = direction(cfg, grid, dim)?;
    let norm = cm_norm(&h);
    if norm == 0.0 {
        return Err(Error::Config("direction must be nonzero".into()));
    }
    Ok(h.scale(1.0 / norm))
}

fn sample_divergences(bc: &BridgeConfig, h: &CameronMartinVector, n: usize) -> Result<Vec<f64>> {
    let model = bc.model().clone();
    let sampler = BridgeSampler::new(bc.clone())?;
    sample_all(&sampler, n, |s| divergence(&model, h, &s.x, &s.frames))
}

fn div_tail(cfg: &ExperimentConfig) -> Result<Report> {
    let mut rep = Report::new("div-tail");
    let th = &cfg.thresholds;
    for choice in models(cfg, &[ManifoldChoice::Sphere2]) {
        let name = choice.name();
        let bc = bridge_config(cfg, choice, 512)?;
        let model = bc.model().clone();
        let n = samples(cfg, 1_000_000);
        let h = unit_direction(cfg, bc.grid(), model.dim())?;
        let ric = model.ricci_sup_norm();
        let lambda0 = 1.0 / ((2.0 + ric) * cm_norm(&h));
        rep.value(format!("{name} sup-norm of Ricci"), ric, 0);
        rep.value(format!("{name} lambda0 = 1/((2+|Ric|)|h|_H)"), lambda0, 0);
        let deltas = sample_divergences(&bc, &h, n)?;
        rep.stat(format!("{name} delta(h)"), &estimate(&deltas)?);
        let fit = tail_exponent(&deltas, &TailOptions { seed: seed(cfg), ..TailOptions::default() })?;
        rep.row(format!("{name} tail slope of log P(|delta|>t) vs t^2"), fit.slope, (fit.ci_lo, fit.ci_hi), fit.tail_count, "");
        let margin = 0.5 * (fit.ci_hi - fit.ci_lo);
        rep.check(format!("{name} tail slope <= -lambda0 + CI margin"), fit.slope, f64::NEG_INFINITY, -lambda0 + margin, n);
        let lam = th.tail_lambda_fraction * lambda0;
        let st = exp_moment(&deltas, lam, true)?;
        rep.stat(format!("{name} E[exp({lam:.4} delta^2)]"), &st);
        rep.check(format!("{name} exp moment at {} lambda0 is STABLE", th.tail_lambda_fraction), stable_indicator(&st), 1.0, 1.0, n);
        let curve = fit.thresholds.iter().zip(&fit.survival).map(|(t, s)| (t * t, s.ln())).collect();
        rep.plot(format!("div_tail_{name}"), "t^2", "log_survival", curve);
    }
    Ok(rep)
}

fn exp_linear(cfg: &ExperimentConfig) -> Result<Report> {
    let mut rep = Report::new("exp-linear");
    let th = &cfg.thresholds;
    for choice in models(cfg, &[ManifoldChoice::Sphere2]) {
        let name = choice.name();
        let bc = bridge_config(cfg, choice, 512)?;
        let n = samples(cfg, 100_000);
        let h = unit_direction(cfg, bc.grid(), bc.model().dim())?;
        let deltas = sample_divergences(&bc, &h, n)?;
        let sd = estimate(&deltas)?.variance.sqrt();
        rep.value(format!("{name} standard deviation of delta(h)"), sd, n);
        let mut curve = Vec::new();
        for lam in [0.5, 1.0, 2.0, 5.0, th.exp_linear_lambda] {
            let st = exp_moment(&deltas, lam, false)?;
            rep.stat(format!("{name} E[exp({lam} |delta|)]"), &st);
            rep.value(format!("{name} lambda={lam} top sample share"), st.top_sample_share, n);
            curve.push((lam, st.mean.ln()));
        }
        let st = exp_moment(&deltas, th.exp_linear_lambda, false)?;
        rep.check(format!("{name} exp moment at lambda={} is STABLE", th.exp_linear_lambda), stable_indicator(&st), 1.0, 1.0, n);
        if st.stability != Stability::Stable {
            rep.note(format!(
                "{name}: with sd(delta) = {sd:.3}, exp(lambda |delta|) at lambda = {} puts its mass near |delta| = lambda sd^2 = {:.1}, \
                 beyond the largest of {n} samples, so the sample mean is carried by the top order statistics",
                th.exp_linear_lambda,
                th.exp_linear_lambda * sd * sd
            ));
        }
        rep.plot(format!("exp_linear_{name}"), "lambda", "log_moment", curve);
    }
    Ok(rep)
}

// ---------------------------------------------------------------- flow

fn driver_flow(cfg: &ExperimentConfig) -> Result<Report> {
    let mut rep = Report::new("driver-flow");
    let th = &cfg.thresholds;
    let t = cfg.flow.t_final.unwrap_or(0.25);
    let dt = cfg.flow.dt.unwrap_or(1e-3);
    let picard = cfg.flow.picard_iters.unwrap_or(crate::flow::DEFAULT_PICARD_ITERS);
    let fc = FlowConfig::new(dt, t).map_err(|e| Error::Config(e.to_string()))?.with_picard_iters(picard);
    for choice in models(cfg, BOTH) {
        let name = choice.name();
        let bc = bridge_config(cfg, choice, 512)?;
        let model = bc.model().clone();
        let r0 = bc.r0().clone();
        let grid = bc.grid();
        let h = direction(cfg, grid, model.dim())?;
        let sampler = BridgeSampler::new(bc.clone())?;

        if model.is_flat() {
            let mut worst: f64 = 0.0;
            for id in 0..10 {
                let s = sampler.sample(id)?;
                let expected = s.x.axpy(t, &h.as_path())?;
                for scheme in [FlowScheme::Development, FlowScheme::Pullback] {
                    let out = flow_integrate(&model, &r0, &s.x, &h, t, &fc.with_scheme(scheme))?;
                    worst = worst.max(out.xi.sup_distance(&expected));
                }
                let g = flow_property_check(&model, &r0, &s.x, &h, 0.1, 0.15, &fc)?;
                worst = worst.max(g);
            }
            rep.check(format!("{name} sup |xi_t - (x + t h)| and group defect"), worst, 0.0, 1e-10, 10);
        } else {
            let s0 = sampler.sample(0)?;
            // 0.1/dt is never an integer, so the composed and direct flows
            // never take identical steps.
            let dts = [0.03, 0.015, 0.0075, 0.00375];
            let mut points = Vec::new();
            for &step in &dts {
                let c = FlowConfig::new(step, step)?.with_picard_iters(picard);
                let defect = flow_property_check(&model, &r0, &s0.x, &h, 0.1, 0.15, &c)?;
                rep.value(format!("{name} group defect s=0.1 t=0.15 dt={step}"), defect, 1);
                points.push((step, defect));
            }
            let fit = fit_rate(&points)?;
            rep.check(format!("{name} group defect order under dt halving"), fit.slope, th.group_slope_min, f64::INFINITY, 1);
            rep.plot(format!("flow_group_{name}"), "dt", "defect", points);
            let same = flow_property_check(&model, &r0, &s0.x, &h, 0.1, 0.1, &fc)?;
            rep.value(format!("{name} group defect s=t=0.1 dt={dt}"), same, 1);

            let fwd = flow_integrate(&model, &r0, &s0.x, &h, 0.2, &fc)?;
            let back = flow_by(&model, &r0, &fwd, &h, -0.2, &fc)?;
            rep.value(format!("{name} reversibility error t=0.2 dt={dt}"), back.xi.sup_distance(&s0.x), 1);

            let state = FlowState::from_input(&model, s0.x.clone(), &r0)?;
            let bismut: Vec<f64> = [1e-2, 5e-3]
                .iter()
                .map(|&step| {
                    let next = flow_step(&model, &r0, &state, &h, step, &fc)?;
                    Ok(bismut_defect(&model, &state.frames, &state, &next.frames, &h, step))
                })
                .collect::<Result<_>>()?;
            rep.value(format!("{name} transport-equation defect dt=0.01"), bismut[0], 1);
            rep.value(format!("{name} transport-equation defect dt=0.005"), bismut[1], 1);

            let smooth = EuclideanPath::from_fn(grid, model.dim(), |s| vec![1.2 * (2.0 * s).sin(), 0.8 * s * s]);
            let a = flow_integrate(&model, &r0, &smooth, &h, 0.2, &FlowConfig::new(0.01, 0.2)?)?;
            let b = flow_integrate(&model, &r0, &smooth, &h, 0.2, &FlowConfig::new(0.01, 0.2)?.with_scheme(FlowScheme::Pullback))?;
            rep.value(format!("{name} development vs pull-back scheme on a smooth path"), a.xi.sup_distance(&b.xi), 1);

            let q = q_kernel(&model, &state, &h, grid.steps())?;
            rep.value(format!("{name} max |q + q^T|"), (&q + q.transpose()).amax(), 1);
        }

        let n = samples(cfg, 1000);
        let m0 = r0.base().coords().to_vec();
        let per = try_par_samples(n, |id| {
            let s = sampler.sample(id)?;
            let out = flow_on_loops(&model, &r0, &s.path, &h, t, &fc)?;
            let end = model.dist_raw(out.path.at(grid.steps()), &m0);
            let excess = (0..=grid.steps())
                .map(|k| {
                    let hk = h.h_at(k).iter().map(|v| v * v).sum::<f64>().sqrt();
                    model.dist_raw(out.path.at(k), s.path.at(k)) - t.abs() * hk
                })
                .fold(f64::NEG_INFINITY, f64::max);
            Ok((end, excess))
        })?;
        let end = per.iter().map(|p| p.0).fold(0.0, f64::max);
        let excess = per.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        rep.check(format!("{name} max dist(Phi_t(loop)(1), m0), t={t}"), end, 0.0, th.endpoint_tol, n);
        rep.check(format!("{name} max of dist(Phi_t(loop)(s), loop(s)) - |t||h(s)|"), excess, f64::NEG_INFINITY, th.distance_tol, n);
    }
    Ok(rep)
}

fn qi_test_function(model: &ManifoldModel, y: &[f64]) -> f64 {
    match model.kind() {
        ManifoldKind::FlatTorus { lengths } => (2.0 * PI * y[0] / lengths[0]).cos(),
        ManifoldKind::UnitSphere2 => y[2],
    }
}

fn quasi_invariance(cfg: &ExperimentConfig) -> Result<Report> {
    let mut rep = Report::new("quasi-invariance");
    let th = &cfg.thresholds;
    let t = cfg.flow.t_final.unwrap_or(0.25);
    let dt = cfg.flow.dt.unwrap_or(0.025);
    let picard = cfg.flow.picard_iters.unwrap_or(crate::flow::DEFAULT_PICARD_ITERS);
    let fc = FlowConfig::new(dt, t).map_err(|e| Error::Config(e.to_string()))?.with_picard_iters(picard);
    for choice in models(cfg, BOTH) {
        let name = choice.name();
        let bc = bridge_config(cfg, choice, 512)?;
        let model = bc.model().clone();
        let r0 = bc.r0().clone();
        let grid = bc.grid();
        let n = samples(cfg, if model.is_flat() { 100_000 } else { 10_000 });
        let h = direction(cfg, grid, model.dim())?;
        if !h.in_h0() {
            return Err(Error::Config("quasi-invariance needs h(1) = 0".into()));
        }
        let h_sq = cm_norm(&h).powi(2);
        let half = grid.index_of(0.5)?;
        let sampler = BridgeSampler::new(bc.clone())?;
        let out = sample_all(&sampler, n, |s| {
            let moved = flow_on_loops(&model, &r0, &s.path, &h, t, &fc)?;
            let dens = radon_nikodym(&model, &r0, &s.path, &h, t, &fc)?;
            let delta = dens.divergences[0];
            let closed = if model.is_flat() { flat_density(delta, h_sq, t) } else { f64::NAN };
            let a = qi_test_function(&model, moved.path.at(half));
            let b = qi_test_function(&model, s.path.at(half)) * dens.k_t;
            Ok([a, b, dens.k_t, closed, (4.0 * t * delta.abs()).exp()])
        })?;
        let col = |j: usize| out.iter().map(|o| o[j]).collect::<Vec<f64>>();
        let (a, b, k) = (estimate(&col(0))?, estimate(&col(1))?, estimate(&col(2))?);
        let diff = estimate(&out.iter().map(|o| o[0] - o[1]).collect::<Vec<_>>())?;
        rep.stat(format!("{name} A = E[f(Phi_t)]"), &a);
        rep.stat(format!("{name} B = E[f K_t]"), &b);
        rep.stat(format!("{name} A - B"), &diff);
        rep.check(format!("{name} |A - B|/SE"), z_score(&diff), 0.0, th.z_max, n);
        rep.stat(format!("{name} E[K_t]"), &k);
        rep.check(format!("{name} |E[K_t] - 1|/SE"), (k.mean - 1.0).abs() / k.se(), 0.0, th.z_max, n);
        if model.is_flat() {
            let rel = out.iter().map(|o| ((o[2] - o[3]) / o[3]).abs()).fold(0.0, f64::max);
            rep.check(format!("{name} max relative |K_t - closed form|"), rel, 0.0, th.closed_form_rel, n);
        }
        let k2 = estimate(&out.iter().map(|o| o[2] * o[2]).collect::<Vec<_>>())?;
        let e4 = estimate(&col(4))?;
        rep.stat(format!("{name} E[K_t^2]"), &k2);
        rep.stat(format!("{name} E[exp(4t|delta|)]"), &e4);
        let bound = e4.mean * (1.0 + th.z_max * e4.se() / e4.mean);
        rep.check(format!("{name} E[K_t^2] / (E[exp(4t|delta|)] (1 + 3 rel SE))"), k2.mean / bound, 0.0, 1.0, n);
    }
    Ok(rep)
}

// ---------------------------------------------------------------- gradient

fn gradient_check(cfg: &ExperimentConfig) -> Result<Report> {
    let mut rep = Report::new("gradient-check");
    let th = &cfg.thresholds;
    let eps = 1e-4;
    for choice in models(cfg, BOTH) {
        let name = choice.name();
        let model = cfg.model(choice)?;
        let grid = TimeGrid::new(cfg.grid.n.unwrap_or(512))?;
        let r0 = model.standard_frame(&model.default_base_point());
        let d = model.dim();
        let h = direction(cfg, grid, d)?;
        let k = if d >= 2 {
            CameronMartinVector::fourier(
                grid,
                d,
                &[FourierMode::new(1, 0, 0.5), FourierMode::new(2, 1, 0.4), FourierMode::new(3, 0, 0.7)],
            )?
        } else {
            CameronMartinVector::fourier(grid, d, &[FourierMode::new(1, 0, 0.5), FourierMode::new(3, 0, 0.7)])?
        };
        let n = samples(cfg, 100);
        let sd = seed(cfg);
        let out = try_par_samples(n, |id| {
            let x = wiener_path(grid, d, &mut sample_rng(sd, id));
            let exact = malliavin_deriv_div(&model, &r0, &h, &k, &x)?;
            let plus = divergence_of_input(&model, &r0, &h, &x.axpy(eps, &k.as_path())?)?;
            let minus = divergence_of_input(&model, &r0, &h, &x.axpy(-eps, &k.as_path())?)?;
            let fd = (plus - minus) / (2.0 * eps);
            Ok((exact, fd))
        })?;
        let rel = out.iter().map(|(a, b)| (a - b).abs() / b.abs()).fold(0.0, f64::max);
        rep.check(format!("{name} max relative |formula - finite difference|"), rel, 0.0, th.gradient_rel, n);
        rep.plot(format!("gradient_{name}"), "finite_difference", "formula", out.iter().map(|&(a, b)| (b, a)).collect());
        if model.is_flat() {
            let inner = cm_inner(&h, &k);
            let dev = out.iter().map(|(a, _)| (a - inner).abs()).fold(0.0, f64::max);
            rep.value(format!("{name} <h,k>_H"), inner, n);
            rep.check(format!("{name} max |formula - <h,k>_H|"), dev, 0.0, 1e-10, n);
        }
    }
    Ok(rep)
}

// ---------------------------------------------------------------- structural

/// `p_{s+t}(x, y)` against `∫ p_s(x, z) p_t(z, y) dz` by product quadrature.
pub fn chapman_kolmogorov_defect(heat: &HeatKernelEvaluator, s: f64, t: f64, x: &[f64], y: &[f64]) -> Result<f64> {
    let model = heat.model();
    let direct = heat.heat_kernel_raw(s + t, x, y)?;
    let composed = match model.kind() {
        ManifoldKind::FlatTorus { lengths } => {
            let m = 4096;
            let mut total = 0.0;
            let mut z = x.to_vec();
            let cells = lengths.iter().map(|l| l / m as f64).product::<f64>();
            if lengths.len() != 1 {
                return Err(Error::ContractViolation("torus check is one-dimensional".into()));
            }
            for i in 0..m {
                z[0] = lengths[0] * i as f64 / m as f64;
                total += heat.heat_kernel_raw(s, x, &z)? * heat.heat_kernel_raw(t, &z, y)?;
            }
            total * cells
        }
        ManifoldKind::UnitSphere2 => {
            // Polar coordinates about x, so the sharper kernel p_s(x, ·) is
            // smooth in cos θ and the φ-dependence sits in p_t(·, y).
            let (u, w) = gauss_legendre(96);
            let nphi = 192;
            let (e1, e2) = orthonormal_complement(x);
            let mut total = 0.0;
            for (ui, wi) in u.iter().zip(&w) {
                let st = (1.0 - ui * ui).max(0.0).sqrt();
                let z0: Vec<f64> = x.iter().map(|v| ui * v).collect();
                let pxz = heat.heat_kernel_raw(s, x, &normalize(&z0, &e1, &e2, st, 0.0))?;
                let mut ring = 0.0;
                for j in 0..nphi {
                    let phi = 2.0 * PI * j as f64 / nphi as f64;
                    ring += heat.heat_kernel_raw(t, &normalize(&z0, &e1, &e2, st, phi), y)?;
                }
                total += wi * pxz * ring * 2.0 * PI / nphi as f64;
            }
            total
        }
    };
    Ok((direct - composed).abs())
}

fn orthonormal_complement(x: &[f64]) -> ([f64; 3], [f64; 3]) {
    let a = if x[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let d = a[0] * x[0] + a[1] * x[1] + a[2] * x[2];
    let mut e1 = [a[0] - d * x[0], a[1] - d * x[1], a[2] - d * x[2]];
    let n = (e1[0] * e1[0] + e1[1] * e1[1] + e1[2] * e1[2]).sqrt();
    e1.iter_mut().for_each(|v| *v /= n);
    let e2 = [x[1] * e1[2] - x[2] * e1[1], x[2] * e1[0] - x[0] * e1[2], x[0] * e1[1] - x[1] * e1[0]];
    (e1, e2)
}

fn normalize(z0: &[f64], e1: &[f64; 3], e2: &[f64; 3], st: f64, phi: f64) -> Vec<f64> {
    let (sp, cp) = phi.sin_cos();
    (0..3).map(|i| z0[i] + st * (cp * e1[i] + sp * e2[i])).collect()
}

/// Round-trip error on a grid of `n` steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundTripError {
    pub n: usize,
    /// `max_k |x̂(t_k) − x(t_k)|` over the coarse grid.
    pub sup: f64,
    /// `|x̂(1) − x(1)|`.
    pub endpoint: f64,
}

/// Errors of developing a fine Wiener path and anti-developing its subsample
/// on grids of `n` steps, against the subsampled input.
pub fn round_trip_errors(
    model: &ManifoldModel,
    r0: &FramePoint,
    fine: &EuclideanPath,
    ns: &[usize],
) -> Result<Vec<RoundTripError>> {
    let (path, _) = develop(model, fine, r0)?;
    ns.iter()
        .map(|&n| {
            let factor = fine.grid().steps() / n;
            let coarse: ManifoldPath = path.subsample(factor)?;
            let x = antidevelop(model, &coarse, r0)?;
            let reference = fine.subsample(factor)?;
            let endpoint = x
                .at(n)
                .iter()
                .zip(reference.at(n))
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            Ok(RoundTripError {
                n,
                sup: x.sup_distance(&reference),
                endpoint,
            })
        })
        .collect()
}

fn structural(cfg: &ExperimentConfig) -> Result<Report> {
    let mut rep = Report::new("structural");
    let sd = seed(cfg);
    let sphere = ManifoldModel::sphere2();
    let r0 = sphere.standard_frame(&sphere.default_base_point());

    let long = TimeGrid::new(16384)?;
    let s = sample_wiener_with(&sphere, long, &r0, &mut sample_rng(sd, 1))?;
    rep.check("sphere frame orthonormality defect over 16384 steps", s.frames.max_orthonormality_defect(), 0.0, 1e-8, 1);

    let bc = bridge_config(cfg, ManifoldChoice::Sphere2, 512)?;
    let sampler = BridgeSampler::new(bc.clone())?;
    let grid = bc.grid();
    let h = direction(cfg, grid, 2)?;
    let mut skew: f64 = 0.0;
    for id in 0..20 {
        let p = sampler.sample(id)?;
        let state = FlowState::from_input(&sphere, p.x, &r0)?;
        for k in (0..=grid.steps()).step_by(64) {
            let q = q_kernel(&sphere, &state, &h, k)?;
            skew = skew.max((&q + q.transpose()).amax());
        }
    }
    rep.check("max |q + q^T| over 20 loops", skew, 0.0, 1e-13, 20);

    let heat = cfg.heat_kernel(sphere.clone())?;
    let x = [0.0, 0.0, 1.0];
    let y = [0.6, 0.0, 0.8];
    let ck = chapman_kolmogorov_defect(&heat, 0.1, 0.2, &x, &y)?;
    rep.check("sphere Chapman-Kolmogorov defect (s=0.1, t=0.2)", ck, 0.0, 1e-8, 1);
    let circle = ManifoldModel::circle(2.0 * PI)?;
    let ck_circle = chapman_kolmogorov_defect(&cfg.heat_kernel(circle)?, 0.1, 0.2, &[0.3], &[2.0])?;
    rep.check("circle Chapman-Kolmogorov defect (s=0.1, t=0.2)", ck_circle, 0.0, 1e-8, 1);

    // The strong order is read off the RMS endpoint error; the mean sup
    // error carries an extra √log N factor and is reported alongside.
    let ns = [128, 256, 512, 1024, 2048];
    let paths = 128;
    let per_path = (0..paths)
        .map(|id| round_trip_errors(&sphere, &r0, &wiener_path(long, 2, &mut sample_rng(sd, 100 + id as u64)), &ns))
        .collect::<Result<Vec<_>>>()?;
    let column = |j: usize, f: &dyn Fn(&RoundTripError) -> f64| per_path.iter().map(|p| f(&p[j])).collect::<Vec<f64>>();
    let rms: Vec<(f64, f64)> = (0..ns.len())
        .map(|j| (ns[j] as f64, mean(&column(j, &|e| e.endpoint * e.endpoint)).sqrt()))
        .collect();
    let sup: Vec<(f64, f64)> = (0..ns.len()).map(|j| (ns[j] as f64, mean(&column(j, &|e| e.sup)))).collect();
    for (&(n, r), &(_, s)) in rms.iter().zip(&sup) {
        rep.value(format!("round-trip RMS endpoint error N={n}"), r, paths);
        rep.value(format!("round-trip mean sup error N={n}"), s, paths);
    }
    rep.value("round-trip sup-error order -slope", -fit_rate(&sup)?.slope, paths);
    rep.check("round-trip strong order -slope (RMS endpoint error)", -fit_rate(&rms)?.slope, 0.4, f64::INFINITY, paths);
    rep.plot("round_trip_sphere_sup", "N", "sup_error", sup);
    let errs = rms;
    rep.plot("round_trip_sphere_rms", "N", "rms_endpoint_error", errs);
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_experiment_is_config_error() {
        let err = run_experiment("nope", &ExperimentConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn default_eps_respects_grid() {
        assert_eq!(default_eps(1024), 0.005);
        assert_eq!(default_eps(512), 0.01);
    }

    #[test]
    fn sin_closed_form_matches_gaussian() {
        let c = torus_sin_closed_form(2.0 * PI, 1.0);
        assert!((c - (-0.125f64).exp()).abs() < 1e-8);
    }

    #[test]
    fn report_files_round_trip() {
        let mut rep = Report::new("demo");
        rep.value("x", 1.5, 3);
        rep.check("x below 2", 1.5, 0.0, 2.0, 3);
        rep.plot("curve", "a", "b", vec![(1.0, 2.0)]);
        assert!(rep.passed());
        let dir = tempfile::tempdir().unwrap();
        rep.write(dir.path()).unwrap();
        let csv = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
        assert!(csv.starts_with("experiment,statistic,value,ci_lo,ci_hi,n,flags"));
        assert!(csv.contains("check: x below 2"));
        assert!(csv.contains("PASS"));
        assert!(dir.path().join("plots/curve.dat").exists());
        rep.check("fails", 3.0, 0.0, 2.0, 3);
        assert!(!rep.passed());
    }

    #[test]
    fn small_ibp_run_is_reproducible() {
        let cfg = ExperimentConfig {
            samples: Some(200),
            manifold: Some(ManifoldChoice::Sphere2),
            ..Default::default()
        };
        let a = run_experiment("ibp", &cfg).unwrap();
        let b = run_experiment("ibp", &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.checks.len(), 5);
    }
}
