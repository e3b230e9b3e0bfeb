//! Experiment configuration: a single TOML file describing geometry, time
//! window, model constants, sources, phantom, noise, solver settings, and
//! output location. Every field has a desk-scale default, so an empty file
//! is a valid (if boring) experiment; `--fine-scale` switches the mesh
//! size to the finer reference value.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adaptivity::AdaptiveSettings;
use crate::error::{Error, Result};
use crate::geo::Vec3;
use crate::mesh::{BoundaryTag, BoxBounds};
use crate::optimizer::CgSettings;
use crate::phantom::PhantomSpec;
use crate::wave::{BcMode, SourceSpec};

/// Computational box, interior (reconstruction) box, and base mesh size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub outer_min: Vec3,
    pub outer_max: Vec3,
    pub inner_min: Vec3,
    pub inner_max: Vec3,
    pub h0: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig {
            outer_min: [-0.8; 3],
            outer_max: [0.8; 3],
            inner_min: [-0.7; 3],
            inner_max: [0.7; 3],
            h0: 0.1,
        }
    }
}

impl GeometryConfig {
    pub fn outer(&self) -> Result<BoxBounds> {
        BoxBounds::new(self.outer_min, self.outer_max)
    }

    pub fn inner(&self) -> Result<BoxBounds> {
        BoxBounds::new(self.inner_min, self.inner_max)
    }

    pub fn validate(&self) -> Result<()> {
        let outer = self.outer()?;
        let inner = self.inner()?;
        for a in 0..3 {
            if inner.min[a] < outer.min[a] || inner.max[a] > outer.max[a] {
                return Err(Error::config(format!(
                    "interior box leaves the computational box on axis {a}"
                )));
            }
        }
        if !(self.h0 > 0.0) {
            return Err(Error::config(format!("mesh size must be positive, got {}", self.h0)));
        }
        for (a, name) in ["x", "y", "z"].iter().enumerate() {
            let edge = outer.max[a] - outer.min[a];
            let cells = edge / self.h0;
            if (cells - cells.round()).abs() > 1e-9 * cells.max(1.0) {
                return Err(Error::config(format!(
                    "edge length {edge} on axis {name} is not a multiple of h0 = {}",
                    self.h0
                )));
            }
        }
        Ok(())
    }
}

/// Time window; the step count is derived from the stability rule unless
/// pinned explicitly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeConfig {
    pub t_final: f64,
    /// Fixed number of steps; omit to derive it from the CFL rule.
    pub n_steps: Option<usize>,
}

impl Default for TimeConfig {
    fn default() -> Self {
        TimeConfig { t_final: 3.0, n_steps: None }
    }
}

/// Model constants shared by the forward, adjoint, and objective layers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Divergence-penalty weight (at least 1).
    pub s: f64,
    /// Upper bound of the admissible coefficient set.
    pub eps_max: f64,
    /// Regularization weight.
    pub alpha: f64,
    /// Width of the observation cut-off window, as a fraction of `t_final`.
    pub delta_fraction: f64,
    /// Treatment of the non-source boundary.
    pub bc: BcMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { s: 1.0, eps_max: 5.0, alpha: 0.01, delta_fraction: 0.1, bc: BcMode::Hybrid }
    }
}

/// One illumination: the radiating face, pulse parameters, and the faces
/// whose traces are recorded for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceConfig {
    pub face: BoundaryTag,
    pub omega: f64,
    pub amplitude: f64,
    /// Polarised field component, 0-based.
    pub component: usize,
    pub observe: Vec<BoundaryTag>,
}

impl Default for SourceConfig {
    fn default() -> Self {
        SourceConfig {
            face: BoundaryTag::Front,
            omega: 40.0,
            amplitude: 1.0,
            component: 1,
            observe: vec![BoundaryTag::Back],
        }
    }
}

impl SourceConfig {
    pub fn spec(&self) -> Result<SourceSpec> {
        SourceSpec::new(self.face, self.omega, self.amplitude, self.component)
    }
}

/// Additive noise: amplitude as a fraction of the record maximum, plus the
/// generator seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub sigma: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig { sigma: 0.0, seed: 7 }
    }
}

/// How the synthetic observations are manufactured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Generate on the inversion mesh itself instead of a once-refined one.
    /// Deliberately committing the inverse crime is useful for consistency
    /// tests only.
    pub same_mesh: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig { same_mesh: false }
    }
}

/// The full experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub geometry: GeometryConfig,
    pub time: TimeConfig,
    pub model: ModelConfig,
    pub sources: Vec<SourceConfig>,
    pub phantom: PhantomSpec,
    pub noise: NoiseConfig,
    pub data: DataConfig,
    pub cg: CgSettings,
    pub adaptive: AdaptiveSettings,
    pub output_dir: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            geometry: GeometryConfig::default(),
            time: TimeConfig::default(),
            model: ModelConfig::default(),
            sources: vec![SourceConfig::default()],
            phantom: PhantomSpec::default(),
            noise: NoiseConfig::default(),
            data: DataConfig::default(),
            cg: CgSettings::default(),
            adaptive: AdaptiveSettings::default(),
            output_dir: "out".to_string(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        if !(self.time.t_final > 0.0) {
            return Err(Error::config(format!(
                "final time must be positive, got {}",
                self.time.t_final
            )));
        }
        if self.time.n_steps == Some(0) {
            return Err(Error::config("pinned step count must be positive".to_string()));
        }
        if !(self.model.s >= 1.0) {
            return Err(Error::config(format!(
                "divergence penalty must be at least 1, got {}",
                self.model.s
            )));
        }
        if !(self.model.eps_max >= 1.0) {
            return Err(Error::config(format!(
                "coefficient upper bound must be at least 1, got {}",
                self.model.eps_max
            )));
        }
        if !(self.model.alpha > 0.0) {
            return Err(Error::config(format!(
                "regularization weight must be positive, got {}",
                self.model.alpha
            )));
        }
        if !(self.model.delta_fraction > 0.0 && self.model.delta_fraction < 1.0) {
            return Err(Error::config(format!(
                "cut-off fraction must lie in (0, 1), got {}",
                self.model.delta_fraction
            )));
        }
        if self.sources.is_empty() {
            return Err(Error::config("at least one source is required".to_string()));
        }
        for src in &self.sources {
            src.spec()?;
            if src.observe.is_empty() {
                return Err(Error::config(
                    "every source needs at least one observation face".to_string(),
                ));
            }
        }
        self.phantom.validate(&self.geometry.inner()?)?;
        if !(self.noise.sigma >= 0.0 && self.noise.sigma.is_finite()) {
            return Err(Error::config(format!(
                "noise level must be a nonnegative fraction, got {}",
                self.noise.sigma
            )));
        }
        self.cg.validate()?;
        self.adaptive.validate()?;
        if self.output_dir.is_empty() {
            return Err(Error::config("output directory must not be empty".to_string()));
        }
        Ok(())
    }

    /// Source/observation pairs in the form the adaptive loop consumes.
    pub fn source_channels(&self) -> Result<Vec<(SourceSpec, Vec<BoundaryTag>)>> {
        self.sources
            .iter()
            .map(|s| Ok((s.spec()?, s.observe.clone())))
            .collect()
    }

    /// Switches the geometry to the reference mesh size.
    pub fn apply_fine_scale(&mut self) {
        self.geometry.h0 = 0.05;
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::config(format!("config parse error: {e}")))?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self)
            .map_err(|e| Error::config(format!("config serialize error: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let config = Self::from_toml_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string()?)?;
        Ok(())
    }

    /// Content hash of the canonical serialized form, for the manifest.
    pub fn hash(&self) -> Result<String> {
        let text = self.to_toml_string()?;
        let mut hasher = Sha256::new();
        hasher.update(text.as_bytes());
        Ok(format!("{:x}", hasher.finalize()))
    }
}
