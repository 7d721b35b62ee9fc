//! Run configuration (TOML) and the assembled problem it describes.

use crate::constraints::Continuity;
use crate::error::{Error, Result};
use crate::fem::{voigt_len, FemModel, Material, SolverOptions};
use crate::grid::{build_preset, init_node_time_field, init_time_field, planar_time_field, DomainGrid, Preset, StartRegion};
use crate::io::{read_mask, VoxelField};
use crate::measures::{DistortionMeasure, QuadraticForm};
use crate::optimizer::{choose_layer_count, OptProblem, OptimizerSettings};
use crate::process::{InherentStrain, Process, StrainMode};
use crate::timefield::TimeField;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Component geometry and fabrication start.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    /// Named benchmark geometry; exclusive with `mask`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    /// Voxel mask file; exclusive with `preset`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<PathBuf>,
    /// Grid extents; required with `preset`, must match the file with `mask`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<StartRegion>,
}

/// Layer count, given directly or from a nominal layer thickness and mean
/// layer extent.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thickness: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extent: Option<f64>,
}

/// Inherent strain; a single isotropic value means uniform shrinkage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrainConfig {
    pub mode: StrainMode,
    pub values: Vec<f64>,
}

impl Default for StrainConfig {
    fn default() -> Self {
        Self {
            mode: StrainMode::Isotropic,
            values: vec![-0.01],
        }
    }
}

impl StrainConfig {
    pub fn resolve(&self, dim: usize) -> Result<InherentStrain> {
        let s = match (self.mode, self.values.as_slice()) {
            (StrainMode::Isotropic, &[eps]) => InherentStrain::isotropic(dim, eps),
            (mode, values) => InherentStrain { values: values.to_vec(), mode },
        };
        if s.values.len() != voigt_len(dim) {
            return Err(Error::config(
                "strain.values",
                format!("expected 1 or {} components for a {dim}D grid", voigt_len(dim)),
            ));
        }
        s.validate(dim)?;
        Ok(s)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstraintConfig {
    /// Let inactive cells count as continuity neighbours.
    pub include_inactive_neighbors: bool,
}

/// Starting time field.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialField {
    /// Normalized geodesic distance from the start region.
    #[default]
    Distance,
    /// Horizontal layers.
    Planar,
    /// Voxel field file.
    File(PathBuf),
}

/// Finite-difference check settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckConfig {
    /// Grid used for the check (defaults to the run's grid).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resolution: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layers: Option<usize>,
    pub beta: f64,
    pub step: f64,
    /// Random single components.
    pub components: usize,
    /// Random dense directions.
    pub directions: usize,
    pub seed: u64,
    /// Largest accepted relative error.
    pub tolerance: f64,
    /// Blend of the initial field with uniform noise, to leave plateaus.
    pub perturbation: f64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            resolution: None,
            layers: None,
            beta: 30.0,
            step: 1e-6,
            components: 20,
            directions: 4,
            seed: 1,
            tolerance: 1e-3,
            perturbation: 0.2,
        }
    }
}

/// Complete description of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub domain: DomainConfig,
    pub layers: LayerConfig,
    #[serde(default)]
    pub material: Material,
    #[serde(default)]
    pub strain: StrainConfig,
    pub measure: DistortionMeasure,
    #[serde(default)]
    pub initial: InitialField,
    #[serde(default)]
    pub optimizer: OptimizerSettings,
    #[serde(default)]
    pub constraints: ConstraintConfig,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub gradcheck: GradcheckConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

fn absolutize(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    /// Parses TOML; relative paths are resolved against `base`.
    pub fn from_toml_str(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let path = match e.span() {
                Some(s) if s.end > 0 => {
                    let before = &text[..s.start.min(text.len())];
                    let line = before.matches('\n').count() + 1;
                    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
                    format!("line {line}, column {column}")
                }
                _ => "top level".to_string(),
            };
            Error::config(path, e.message().to_string())
        })?;
        if let Some(m) = &mut cfg.domain.mask {
            absolutize(base, m);
        }
        if let InitialField::File(p) = &mut cfg.initial {
            absolutize(base, p);
        }
        if let Some(o) = &mut cfg.output {
            absolutize(base, o);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::config(path.display().to_string(), format!("cannot read: {e}"))
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base).map_err(|e| match e {
            Error::Config { path: p, reason } => {
                Error::config(format!("{}: {p}", path.display()), reason)
            }
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks everything that can be checked without building the grid.
    pub fn validate(&self) -> Result<()> {
        let d = &self.domain;
        match (&d.preset, &d.mask) {
            (Some(_), Some(_)) => {
                return Err(Error::config("domain", "`preset` and `mask` are mutually exclusive"))
            }
            (None, None) => return Err(Error::config("domain", "one of `preset` or `mask` is required")),
            (Some(p), None) => {
                Preset::from_name(p).map_err(|e| Error::config("domain.preset", e.to_string()))?;
                if d.resolution.is_none() {
                    return Err(Error::config("domain.resolution", "required with a preset"));
                }
            }
            (None, Some(_)) => {}
        }
        let l = &self.layers;
        match (l.count, l.thickness, l.extent) {
            (Some(n), None, None) if n >= 1 => {}
            (Some(_), None, None) => return Err(Error::config("layers.count", "must be at least 1")),
            (None, Some(h), Some(e)) if h > 0.0 && e > 0.0 => {}
            (None, Some(_), Some(_)) => {
                return Err(Error::config("layers", "thickness and extent must be positive"))
            }
            _ => {
                return Err(Error::config(
                    "layers",
                    "give either `count` or both `thickness` and `extent`",
                ))
            }
        }
        self.material.validate()?;
        if self.measure.terms.is_empty() {
            log::warn!("empty distortion measure; the objective is identically zero");
        }
        let o = &self.optimizer;
        if !(o.gamma_c > 0.0) || !(o.gamma_v > 0.0) {
            return Err(Error::config("optimizer", "gamma_c and gamma_v must be positive"));
        }
        let c = &o.continuation;
        if !(c.start > 0.0) || c.max < c.start || c.step < 0.0 {
            return Err(Error::config("optimizer.continuation", "need 0 < start <= max and step >= 0"));
        }
        let m = &o.mma;
        if !(m.move_limit > 0.0 && m.move_limit <= 1.0) {
            return Err(Error::config("optimizer.mma.move_limit", "must lie in (0, 1]"));
        }
        if !(m.asymptote_min > 0.0 && m.asymptote_min < m.asymptote_max) {
            return Err(Error::config("optimizer.mma", "need 0 < asymptote_min < asymptote_max"));
        }
        if !(self.solver.tolerance > 0.0) {
            return Err(Error::config("solver.tolerance", "must be positive"));
        }
        let g = &self.gradcheck;
        if !(g.step > 0.0) || !(g.beta > 0.0) || g.components + g.directions == 0 {
            return Err(Error::config("gradcheck", "need positive step and beta and at least one check"));
        }
        Ok(())
    }

    /// Builds the grid, measure, FE model and constraints.
    pub fn build(&self) -> Result<Setup> {
        let d = &self.domain;
        let grid = match (&d.preset, &d.mask) {
            (Some(name), _) => {
                let preset = Preset::from_name(name)?;
                build_preset(&preset, d.resolution.as_deref().unwrap_or(&[]), d.start.as_ref())?
            }
            (None, Some(path)) => {
                let (shape, mask) = read_mask(path)?;
                if let Some(r) = &d.resolution {
                    if r.as_slice() != shape.extents() {
                        return Err(Error::config(
                            "domain.resolution",
                            format!("{r:?} does not match the mask's {:?}", shape.extents()),
                        ));
                    }
                }
                build_preset(&Preset::Mask(mask), shape.extents(), d.start.as_ref())?
            }
            (None, None) => return Err(Error::config("domain", "one of `preset` or `mask` is required")),
        };
        let strain = self.strain.resolve(grid.dim())?;
        let layers = match self.layers.count {
            Some(n) => n,
            None => choose_layer_count(
                grid.n_active() as f64,
                self.layers.thickness.unwrap_or(1.0),
                self.layers.extent.unwrap_or(1.0),
            ),
        };
        let measure = self.measure.compile(&grid)?;
        let continuity = Continuity::new(&grid, self.constraints.include_inactive_neighbors)?;
        let fem = FemModel::new(&grid, &self.material, self.solver)?;
        Ok(Setup {
            grid,
            fem,
            strain,
            layers,
            measure,
            continuity,
            settings: self.optimizer,
            initial: self.initial.clone(),
        })
    }

    /// Copy with a different resolution (and optionally layer count), for
    /// quick checks on shrunken problems.
    pub fn shrunk(&self, resolution: Option<Vec<usize>>, layers: Option<usize>) -> Self {
        let mut c = self.clone();
        if resolution.is_some() {
            c.domain.resolution = resolution;
        }
        if let Some(n) = layers {
            c.layers = LayerConfig { count: Some(n), thickness: None, extent: None };
        }
        c
    }
}

/// A fully assembled problem.
pub struct Setup {
    pub grid: DomainGrid,
    pub fem: FemModel,
    pub strain: InherentStrain,
    pub layers: usize,
    pub measure: QuadraticForm,
    pub continuity: Continuity,
    pub settings: OptimizerSettings,
    pub initial: InitialField,
}

impl Setup {
    pub fn process(&self) -> Process<'_> {
        Process {
            grid: &self.grid,
            fem: &self.fem,
            strain: &self.strain,
            layers: self.layers,
        }
    }

    pub fn problem(&self) -> OptProblem<'_> {
        OptProblem {
            process: self.process(),
            measure: &self.measure,
            continuity: &self.continuity,
            settings: self.settings,
        }
    }

    /// Field required by the strain model, built as configured.
    pub fn initial_field(&self) -> Result<TimeField> {
        let mode = self.strain.field_mode();
        let field = match &self.initial {
            InitialField::Distance => match mode {
                crate::timefield::FieldMode::Element => init_time_field(&self.grid)?,
                crate::timefield::FieldMode::Node => init_node_time_field(&self.grid)?,
            },
            InitialField::Planar => planar_time_field(&self.grid, mode),
            InitialField::File(p) => self.read_field(p)?,
        };
        field.validate(&self.grid)?;
        Ok(field)
    }

    pub fn planar_field(&self) -> TimeField {
        planar_time_field(&self.grid, self.strain.field_mode())
    }

    /// Reads a voxel time field and checks it fits this problem.
    pub fn read_field(&self, path: &Path) -> Result<TimeField> {
        let f = VoxelField::read(path)?;
        if f.shape != *self.grid.shape() {
            return Err(Error::Format {
                path: path.to_path_buf(),
                reason: format!("grid {:?} does not match {:?}", f.shape.extents(), self.grid.shape().extents()),
            });
        }
        if f.mode != self.strain.field_mode() {
            return Err(Error::Format {
                path: path.to_path_buf(),
                reason: format!("{:?} field, but the strain model needs {:?}", f.mode, self.strain.field_mode()),
            });
        }
        let t = f.into_time_field();
        t.validate(&self.grid)?;
        Ok(t)
    }
}
