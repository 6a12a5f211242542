//! Monte Carlo estimation and the statistical tests used by the experiments.
//!
//! Samples are generated in parallel over seed-derived substreams but always
//! collected in sample-id order and reduced by pairwise summation, so every
//! estimate is bit-reproducible for a given seed regardless of worker count.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Poisson;
use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

/// Two-sided 99% normal quantile.
pub const Z99: f64 = 2.576;

/// Heuristic stability classification of a Monte Carlo mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stability {
    Stable,
    /// The largest summand carries more than half of the sum.
    Unstable,
    /// Overflow, or a tail-index estimate of the summands below 1.
    InfiniteSuspect,
}

impl fmt::Display for Stability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stability::Stable => "STABLE",
            Stability::Unstable => "UNSTABLE",
            Stability::InfiniteSuspect => "INFINITE-SUSPECT",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MCStat {
    pub n: usize,
    pub mean: f64,
    pub variance: f64,
    /// `Z99·√(variance/n)`.
    pub ci_half_width: f64,
    /// Largest `|summand|` divided by `Σ|summand|`.
    pub top_sample_share: f64,
    pub stability: Stability,
}

impl MCStat {
    /// Standard error `√(variance/n)`.
    pub fn se(&self) -> f64 {
        (self.variance / self.n as f64).sqrt()
    }

    pub fn ci(&self) -> (f64, f64) {
        (self.mean - self.ci_half_width, self.mean + self.ci_half_width)
    }
}

/// Independent RNG substream `stream` of the generator seeded with `seed`.
pub fn sample_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Sum in a fixed binary reduction tree.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    const LEAF: usize = 64;
    if v.len() <= LEAF {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

pub fn mean(v: &[f64]) -> f64 {
    pairwise_sum(v) / v.len() as f64
}

/// Sample mean and unbiased variance of a collected buffer.
pub fn estimate(samples: &[f64]) -> Result<MCStat> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!("need at least 2 samples, got {n}")));
    }
    let m = mean(samples);
    let sq: Vec<f64> = samples.iter().map(|x| (x - m) * (x - m)).collect();
    let variance = pairwise_sum(&sq) / (n - 1) as f64;
    let abs: Vec<f64> = samples.iter().map(|x| x.abs()).collect();
    let total = pairwise_sum(&abs);
    let top = abs.iter().copied().fold(0.0, f64::max);
    let top_sample_share = if total > 0.0 { top / total } else { 0.0 };
    let stability = if !m.is_finite() || !variance.is_finite() {
        Stability::InfiniteSuspect
    } else if top_sample_share > 0.5 {
        Stability::Unstable
    } else {
        Stability::Stable
    };
    Ok(MCStat {
        n,
        mean: m,
        variance,
        ci_half_width: Z99 * (variance / n as f64).sqrt(),
        top_sample_share,
        stability,
    })
}

/// Evaluates `f(sample_id)` for ids `0..n` in parallel, returning results in
/// id order.
pub fn par_samples<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    (0..n as u64).into_par_iter().map(f).collect()
}

/// Fallible variant of [`par_samples`]; the first error in id order wins.
pub fn try_par_samples<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    (0..n as u64).into_par_iter().map(f).collect()
}

/// Estimates `E[f]` from `n` draws, each using the substream of its index.
pub fn estimate_with<F>(n: usize, seed: u64, f: F) -> Result<MCStat>
where
    F: Fn(&mut ChaCha8Rng) -> f64 + Sync + Send,
{
    let samples = par_samples(n, |id| f(&mut sample_rng(seed, id)));
    estimate(&samples)
}

/// `(mean |x|^p)^{1/p}`.
pub fn lp_norm(samples: &[f64], p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::Domain(format!("L^p norm needs p ≥ 1, got {p}")));
    }
    if samples.is_empty() {
        return Err(Error::InsufficientData("no samples".into()));
    }
    let pow: Vec<f64> = samples.iter().map(|x| x.abs().powf(p)).collect();
    Ok(mean(&pow).powf(1.0 / p))
}

/// Standard error of the `L²` norm estimate via the delta method.
pub fn l2_norm_se(samples: &[f64]) -> Result<f64> {
    let sq: Vec<f64> = samples.iter().map(|x| x * x).collect();
    let st = estimate(&sq)?;
    Ok(if st.mean > 0.0 { st.se() / (2.0 * st.mean.sqrt()) } else { 0.0 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    /// `(log x, log y)` pairs.
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Least-squares fit of `log y = intercept + slope·log x`.
pub fn fit_rate(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "rate fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|&(x, y)| !(x > 0.0) || !(y > 0.0)) {
        return Err(Error::Domain("rate fit needs positive abscissae and ordinates".into()));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let (slope, intercept, r2) = ols(&logs);
    Ok(RateFit {
        points: logs,
        slope,
        intercept,
        r2,
    })
}

/// Ordinary least squares `(slope, intercept, r²)`.
pub fn ols(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    } else {
        1.0
    };
    (slope, intercept, r2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailFit {
    pub slope: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// Thresholds `t` used in the regression.
    pub thresholds: Vec<f64>,
    /// Empirical survival `P(|Z| > t)` at the thresholds.
    pub survival: Vec<f64>,
    pub tail_count: usize,
}

/// Options for [`tail_exponent`].
#[derive(Debug, Clone, Copy)]
pub struct TailOptions {
    pub q_lo: f64,
    pub q_hi: f64,
    pub points: usize,
    pub bootstrap: usize,
    /// Regress `log S(t) + log t` instead of `log S(t)`, removing the
    /// `1/t` prefactor of Gaussian-type tails from the finite window.
    pub mills_correction: bool,
    pub seed: u64,
}

impl Default for TailOptions {
    fn default() -> Self {
        Self {
            q_lo: 0.99,
            q_hi: 0.9999,
            points: 20,
            bootstrap: 200,
            mills_correction: true,
            seed: 0,
        }
    }
}

/// Slope of log-survival of `|Z|` against `t²` over a quantile window, with a
/// Poisson-bootstrap 95% percentile interval.
pub fn tail_exponent(samples: &[f64], opts: &TailOptions) -> Result<TailFit> {
    if !(opts.q_lo > 0.9 && opts.q_lo < opts.q_hi && opts.q_hi < 0.99995) {
        return Err(Error::ContractViolation(format!(
            "tail window ({}, {}) must lie in (0.9, 0.9999]",
            opts.q_lo, opts.q_hi
        )));
    }
    let n = samples.len();
    let mut abs: Vec<f64> = samples.iter().map(|x| x.abs()).collect();
    abs.sort_by(|a, b| b.total_cmp(a));
    let tail_count = ((1.0 - opts.q_lo) * n as f64).floor() as usize;
    let top_count = ((1.0 - opts.q_hi) * n as f64).floor() as usize;
    if top_count < 10 || tail_count < 100 {
        return Err(Error::InsufficientData(format!(
            "{n} samples leave {top_count} beyond the upper quantile; need ≥ 10"
        )));
    }
    let t_lo = abs[tail_count];
    let t_hi = abs[top_count];
    let m = opts.points.max(3);
    let thresholds: Vec<f64> = (0..m)
        .map(|i| t_lo + (t_hi - t_lo) * i as f64 / (m - 1) as f64)
        .collect();
    let tail = &abs[..=tail_count];
    let weighted_fit = |w: Option<&[f64]>| -> (f64, Vec<f64>) {
        let surv: Vec<f64> = thresholds
            .iter()
            .map(|&t| {
                let c: f64 = match w {
                    None => tail.iter().filter(|&&z| z > t).count() as f64,
                    Some(w) => tail.iter().zip(w).filter(|(z, _)| **z > t).map(|(_, w)| w).sum(),
                };
                c / n as f64
            })
            .collect();
        let pts: Vec<(f64, f64)> = thresholds
            .iter()
            .zip(&surv)
            .filter(|(_, s)| **s > 0.0)
            .map(|(&t, &s)| {
                let y = if opts.mills_correction { s.ln() + t.ln() } else { s.ln() };
                (t * t, y)
            })
            .collect();
        let slope = if pts.len() >= 3 { ols(&pts).0 } else { f64::NAN };
        (slope, surv)
    };
    let (slope, survival) = weighted_fit(None);
    let mut rng = sample_rng(opts.seed, u64::MAX);
    let pois = Poisson::new(1.0).expect("unit rate");
    let mut boots: Vec<f64> = (0..opts.bootstrap)
        .map(|_| {
            let w: Vec<f64> = (0..tail.len()).map(|_| rng.sample(pois)).collect();
            weighted_fit(Some(&w)).0
        })
        .filter(|s| s.is_finite())
        .collect();
    boots.sort_by(|a, b| a.total_cmp(b));
    let (ci_lo, ci_hi) = if boots.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        (quantile_sorted(&boots, 0.025), quantile_sorted(&boots, 0.975))
    };
    Ok(TailFit {
        slope,
        ci_lo,
        ci_hi,
        thresholds,
        survival,
        tail_count,
    })
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let j = (i + 1).min(sorted.len() - 1);
    sorted[i] + (pos - i as f64) * (sorted[j] - sorted[i])
}

/// `E[exp(λZ²)]` (or `E[exp(λ|Z|)]`) with stability diagnostics. Overflow
/// or a Hill tail-index estimate below 1 for the summands flags
/// `INFINITE-SUSPECT`; a single summand carrying over half the sum flags
/// `UNSTABLE`.
pub fn exp_moment(samples: &[f64], lambda: f64, square: bool) -> Result<MCStat> {
    if !(lambda > 0.0) {
        return Err(Error::Domain(format!("exponential moment needs λ > 0, got {lambda}")));
    }
    let exponents: Vec<f64> = samples
        .iter()
        .map(|z| if square { lambda * z * z } else { lambda * z.abs() })
        .collect();
    let values: Vec<f64> = exponents.iter().map(|e| e.exp()).collect();
    let mut st = estimate(&values)?;
    if values.iter().any(|v| !v.is_finite()) || !st.mean.is_finite() {
        st.stability = Stability::InfiniteSuspect;
        return Ok(st);
    }
    if let Some(alpha) = hill_tail_index(&exponents) {
        if alpha < 1.0 {
            st.stability = Stability::InfiniteSuspect;
        }
    }
    Ok(st)
}

/// Hill estimator of the tail index of `exp(e_i)` from the log-values `e_i`,
/// using the top `√n` order statistics.
pub fn hill_tail_index(log_values: &[f64]) -> Option<f64> {
    let n = log_values.len();
    let k = ((n as f64).sqrt() as usize).max(10);
    if n <= k + 1 {
        return None;
    }
    let mut v = log_values.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    let base = v[k];
    let m = v[..k].iter().map(|e| e - base).sum::<f64>() / k as f64;
    if m > 0.0 {
        Some(1.0 / m)
    } else {
        None
    }
}

/// Result of a goodness-of-fit test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GofResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// One-sample Kolmogorov–Smirnov test against a continuous CDF.
pub fn ks_test<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> GofResult {
    let mut v = samples.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in v.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    GofResult {
        statistic: d,
        p_value: kolmogorov_q((n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d),
    }
}

/// Complementary Kolmogorov distribution `Q(λ) = 2Σ(−1)^{k−1}e^{−2k²λ²}`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// Pearson chi-square test of `values` binned on `[lo, hi]` into
/// `probs.len()` equal-width bins. Adjacent bins are merged until each group
/// expects at least 5 counts.
pub fn chi_square_test(values: &[f64], lo: f64, hi: f64, probs: &[f64]) -> Result<GofResult> {
    let bins = probs.len();
    if bins < 2 {
        return Err(Error::InsufficientData("chi-square needs at least 2 bins".into()));
    }
    let mut counts = vec![0usize; bins];
    for &v in values {
        let i = (((v - lo) / (hi - lo)) * bins as f64).floor();
        counts[(i.max(0.0) as usize).min(bins - 1)] += 1;
    }
    let n = values.len() as f64;
    let mut groups: Vec<(f64, f64)> = Vec::new();
    let (mut c_acc, mut e_acc) = (0.0, 0.0);
    for (c, p) in counts.iter().zip(probs) {
        c_acc += *c as f64;
        e_acc += n * p;
        if e_acc >= 5.0 {
            groups.push((c_acc, e_acc));
            c_acc = 0.0;
            e_acc = 0.0;
        }
    }
    if c_acc > 0.0 || e_acc > 0.0 {
        match groups.last_mut() {
            Some(last) => {
                last.0 += c_acc;
                last.1 += e_acc;
            }
            None => groups.push((c_acc, e_acc)),
        }
    }
    if groups.len() < 2 {
        return Err(Error::InsufficientData("too few samples for a chi-square test".into()));
    }
    let stat: f64 = groups.iter().map(|(c, e)| (c - e).powi(2) / e).sum();
    let dist = ChiSquared::new((groups.len() - 1) as f64)
        .map_err(|e| Error::Domain(format!("chi-square distribution: {e}")))?;
    Ok(GofResult {
        statistic: stat,
        p_value: 1.0 - dist.cdf(stat),
    })
}

/// Anderson–Darling normality test with estimated mean and variance.
pub fn anderson_darling_normal(samples: &[f64]) -> Result<GofResult> {
    let n = samples.len();
    if n < 8 {
        return Err(Error::InsufficientData("Anderson–Darling needs at least 8 samples".into()));
    }
    let st = estimate(samples)?;
    let sd = st.variance.sqrt();
    let mut z: Vec<f64> = samples.iter().map(|x| (x - st.mean) / sd).collect();
    z.sort_by(|a, b| a.total_cmp(b));
    let nf = n as f64;
    let mut s = 0.0;
    for i in 0..n {
        let fi = normal_cdf(z[i]).clamp(1e-300, 1.0 - 1e-16);
        let fj = normal_cdf(z[n - 1 - i]).clamp(1e-300, 1.0 - 1e-16);
        s += (2.0 * i as f64 + 1.0) * (fi.ln() + (1.0 - fj).ln());
    }
    let a2 = -nf - s / nf;
    let a = a2 * (1.0 + 0.75 / nf + 2.25 / (nf * nf));
    let p = if a >= 10.0 {
        // The quadratic fit below turns upward beyond its range.
        0.0
    } else if a >= 0.6 {
        (1.2937 - 5.709 * a + 0.0186 * a * a).exp()
    } else if a >= 0.34 {
        (0.9177 - 4.279 * a - 1.38 * a * a).exp()
    } else if a >= 0.2 {
        1.0 - (-8.318 + 42.796 * a - 59.938 * a * a).exp()
    } else {
        1.0 - (-13.436 + 101.14 * a - 223.73 * a * a).exp()
    };
    Ok(GofResult {
        statistic: a,
        p_value: p.clamp(0.0, 1.0),
    })
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}
