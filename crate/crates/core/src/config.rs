//! Experiment configuration: flat `key = value` TOML with dotted sections.
//! Every key is optional; experiments fill in their own defaults. Unknown
//! keys are rejected.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::functionals::{CameronMartinVector, FourierMode, HolderParams};
use crate::heatkernel::{HeatKernelEvaluator, DEFAULT_MAX_TERMS, DEFAULT_SERIES_TOL, DEFAULT_T_MIN};
use crate::manifold::ManifoldModel;
use crate::transport::TimeGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ManifoldChoice {
    Torus,
    #[serde(alias = "sphere")]
    Sphere2,
}

impl ManifoldChoice {
    pub fn name(&self) -> &'static str {
        match self {
            ManifoldChoice::Torus => "torus",
            ManifoldChoice::Sphere2 => "sphere2",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "torus" => Ok(ManifoldChoice::Torus),
            "sphere" | "sphere2" => Ok(ManifoldChoice::Sphere2),
            other => Err(Error::Config(format!("unknown manifold '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TorusSection {
    pub dims: Option<usize>,
    pub lengths: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(rename = "N")]
    pub n: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BridgeSection {
    pub eps_splice: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatKernelSection {
    pub series_tol: Option<f64>,
    pub max_terms: Option<usize>,
    pub t_min: Option<f64>,
}

/// Direction family. Fourier modes give `ḣ(s) = c·√2cos(kπs)·e_j`; the
/// polynomial family gives `ḣ(s) = Σ aᵢ sⁱ` in one component.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HSection {
    pub family: Option<String>,
    pub modes: Option<Vec<usize>>,
    pub components: Option<Vec<usize>>,
    pub coeffs: Option<Vec<f64>>,
    pub poly_component: Option<usize>,
    pub poly_coeffs: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSection {
    pub dt: Option<f64>,
    pub t_final: Option<f64>,
    pub picard_iters: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HolderSection {
    pub m: Option<u32>,
    pub alpha: Option<f64>,
}

/// Pass/fail thresholds, defaulting to the acceptance values.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    pub z_max: f64,
    pub gof_p_min: f64,
    pub div_slope: [f64; 2],
    pub antidev_slope: [f64; 2],
    pub group_slope_min: f64,
    pub endpoint_tol: f64,
    pub distance_tol: f64,
    pub closed_form_rel: f64,
    pub gradient_rel: f64,
    pub holder_linear_tol: f64,
    pub tail_lambda_fraction: f64,
    pub exp_linear_lambda: f64,
    pub fernique_lambda: f64,
    pub holder_lambda_fraction: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            z_max: 3.0,
            gof_p_min: 0.01,
            div_slope: [0.8, 1.2],
            antidev_slope: [0.4, 0.6],
            group_slope_min: 1.8,
            endpoint_tol: 1e-3,
            distance_tol: 1e-4,
            closed_form_rel: 1e-6,
            gradient_rel: 1e-3,
            holder_linear_tol: 1e-3,
            tail_lambda_fraction: 0.3,
            exp_linear_lambda: 10.0,
            fernique_lambda: 0.4,
            holder_lambda_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Option<String>,
    pub manifold: Option<ManifoldChoice>,
    pub seed: Option<u64>,
    pub samples: Option<usize>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub torus: TorusSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub bridge: BridgeSection,
    #[serde(default)]
    pub heatkernel: HeatKernelSection,
    #[serde(default)]
    pub h: HSection,
    #[serde(default)]
    pub flow: FlowSection,
    #[serde(default)]
    pub holder: HolderSection,
    #[serde(default)]
    pub thresholds: Thresholds,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Checks every set key against the invariants of the type it feeds.
    pub fn validate(&self) -> Result<()> {
        self.torus_model()?;
        if let Some(n) = self.grid.n {
            TimeGrid::new(n)?;
        }
        if let Some(eps) = self.bridge.eps_splice {
            if !(eps > 0.0 && eps <= 0.01) {
                return Err(Error::Config(format!("bridge.eps_splice = {eps} outside (0, 0.01]")));
            }
        }
        self.heat_kernel(ManifoldModel::sphere2())?;
        if let Some(samples) = self.samples {
            if samples < 2 {
                return Err(Error::Config("samples must be at least 2".into()));
            }
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be positive".into()));
        }
        if let Some(dt) = self.flow.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::Config(format!("flow.dt = {dt} must be positive")));
            }
        }
        if let (Some(dt), Some(t)) = (self.flow.dt, self.flow.t_final) {
            crate::flow::FlowConfig::new(dt, t).map_err(|e| Error::Config(e.to_string()))?;
        }
        if self.holder.m.is_some() || self.holder.alpha.is_some() {
            self.holder_params()?;
        }
        let dim = self.torus_model()?.dim().max(2);
        self.direction(TimeGrid::new(64)?, dim)?;
        Ok(())
    }

    pub fn torus_model(&self) -> Result<ManifoldModel> {
        let dims = self.torus.dims.unwrap_or_else(|| self.torus.lengths.as_ref().map_or(2, |l| l.len()));
        let lengths = self.torus.lengths.clone().unwrap_or_else(|| vec![2.0 * PI; dims]);
        if lengths.len() != dims {
            return Err(Error::Config(format!("torus.lengths has {} entries, torus.dims = {dims}", lengths.len())));
        }
        ManifoldModel::torus(lengths).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn model(&self, choice: ManifoldChoice) -> Result<ManifoldModel> {
        match choice {
            ManifoldChoice::Torus => self.torus_model(),
            ManifoldChoice::Sphere2 => Ok(ManifoldModel::sphere2()),
        }
    }

    pub fn heat_kernel(&self, model: ManifoldModel) -> Result<HeatKernelEvaluator> {
        HeatKernelEvaluator::with_params(
            model,
            self.heatkernel.series_tol.unwrap_or(DEFAULT_SERIES_TOL),
            self.heatkernel.max_terms.unwrap_or(DEFAULT_MAX_TERMS),
            self.heatkernel.t_min.unwrap_or(DEFAULT_T_MIN),
        )
        .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn holder_params(&self) -> Result<HolderParams> {
        HolderParams::new(self.holder.m.unwrap_or(2), self.holder.alpha.unwrap_or(0.25))
            .map_err(|e| Error::Config(e.to_string()))
    }

    /// The configured direction, or `None` when no `h.*` key is set.
    pub fn direction(&self, grid: TimeGrid, dim: usize) -> Result<Option<CameronMartinVector>> {
        let h = &self.h;
        let family = h.family.as_deref().unwrap_or(if h.poly_coeffs.is_some() { "polynomial" } else { "fourier" });
        let bad = |msg: String| Error::Config(msg);
        match family {
            "fourier" => {
                let Some(modes) = &h.modes else {
                    if h.components.is_some() || h.coeffs.is_some() {
                        return Err(bad("h.modes is required with h.components or h.coeffs".into()));
                    }
                    return Ok(None);
                };
                let components = h.components.clone().unwrap_or_else(|| vec![0; modes.len()]);
                let coeffs = h.coeffs.clone().unwrap_or_else(|| vec![1.0; modes.len()]);
                if components.len() != modes.len() || coeffs.len() != modes.len() {
                    return Err(bad("h.modes, h.components and h.coeffs must have equal lengths".into()));
                }
                if modes.iter().any(|&k| k == 0) {
                    return Err(bad("Fourier mode indices start at 1".into()));
                }
                let list: Vec<FourierMode> = modes
                    .iter()
                    .zip(&components)
                    .zip(&coeffs)
                    .map(|((&k, &c), &a)| FourierMode::new(k, c, a))
                    .collect();
                if components.iter().any(|&c| c >= dim) {
                    return Err(bad(format!("h.components exceed the dimension {dim}")));
                }
                CameronMartinVector::fourier(grid, dim, &list).map(Some).map_err(|e| bad(e.to_string()))
            }
            "polynomial" => {
                let coeffs = h.poly_coeffs.clone().ok_or_else(|| bad("h.poly_coeffs is required".into()))?;
                let c = h.poly_component.unwrap_or(0);
                if c >= dim {
                    return Err(bad(format!("h.poly_component exceeds the dimension {dim}")));
                }
                CameronMartinVector::polynomial(grid, dim, c, &coeffs)
                    .map(Some)
                    .map_err(|e| bad(e.to_string()))
            }
            other => Err(bad(format!("unknown h.family '{other}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dotted_keys_parse() {
        let cfg = ExperimentConfig::from_toml(
            r#"
            manifold = "sphere2"
            seed = 9
            grid.N = 512
            bridge.eps_splice = 0.01
            flow.dt = 0.001
            flow.t_final = 0.25
            holder.m = 2
            holder.alpha = 0.3
            h.modes = [1, 2]
            h.components = [0, 1]
            h.coeffs = [0.8, 0.6]
            thresholds.z_max = 4.0
            "#,
        )
        .unwrap();
        assert_eq!(cfg.manifold, Some(ManifoldChoice::Sphere2));
        assert_eq!(cfg.grid.n, Some(512));
        assert_eq!(cfg.thresholds.z_max, 4.0);
        assert_eq!(cfg.thresholds.gof_p_min, 0.01);
        let h = cfg.direction(TimeGrid::new(64).unwrap(), 2).unwrap().unwrap();
        assert!(h.in_h0());
    }

    #[test]
    fn unknown_and_invalid_keys_rejected() {
        assert!(ExperimentConfig::from_toml("gird.N = 512").is_err());
        assert!(ExperimentConfig::from_toml("grid.N = 500").is_err());
        assert!(ExperimentConfig::from_toml("bridge.eps_splice = 0.5").is_err());
        assert!(ExperimentConfig::from_toml("flow.dt = 0.003\nflow.t_final = 0.01").is_err());
        assert!(ExperimentConfig::from_toml("holder.alpha = 0.7").is_err());
        assert!(ExperimentConfig::from_toml("torus.dims = 3\ntorus.lengths = [1.0, 2.0]").is_err());
        assert!(ExperimentConfig::from_toml("manifold = \"klein\"").is_err());
        assert!(ExperimentConfig::from_toml("h.modes = [0]").is_err());
    }

    #[test]
    fn empty_config_is_valid() {
        let cfg = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(cfg.torus_model().unwrap().dim(), 2);
        assert!(cfg.direction(TimeGrid::new(64).unwrap(), 2).unwrap().is_none());
    }
}
