//! Run configuration: a TOML file with `geometry`, `grid`, `material`,
//! `spectrum`, `dispersion` and `validate` sections.

use crate::error::{Error, Result};
use crate::geometry::{validate_cell, MaterialCell, Permittivity, Rotation, Shape};
use crate::inclusion_spectrum::{EigenMethod, SpectrumOptions};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometryConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub material: MaterialConfig,
    #[serde(default)]
    pub cell: CellConfig,
    #[serde(default)]
    pub spectrum: SpectrumConfig,
    #[serde(default)]
    pub dispersion: DispersionConfig,
    #[serde(default)]
    pub validate: ValidateConfig,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    /// `empty`, `ball`, `box` or `cylinder`.
    pub shape: String,
    #[serde(default)]
    pub params: ShapeParams,
    /// Declared rotations, e.g. `["pi/2:1", "pi:3"]`.
    #[serde(default)]
    pub symmetry: Vec<String>,
    #[serde(default)]
    pub smoothing: f64,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeParams {
    pub center: Option<[f64; 3]>,
    pub radius: Option<f64>,
    pub half: Option<[f64; 3]>,
    /// Cylinder axis, 0-based.
    pub axis: Option<usize>,
    pub half_height: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    /// Unit-cell resolution for the supercell ladder; defaults to `n`.
    pub n_cell: Option<usize>,
}

/// A permittivity given as a number or as an expression in `x`, `y`, `z`.
#[derive(Debug, Clone, Deserialize, Serialize, PartialEq)]
#[serde(untagged)]
pub enum PermittivitySpec {
    Constant(f64),
    Expr(String),
}

impl PermittivitySpec {
    pub fn build(&self) -> Result<Permittivity> {
        match self {
            PermittivitySpec::Constant(c) => Ok(Permittivity::Constant(*c)),
            PermittivitySpec::Expr(s) => Permittivity::expr(s),
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialConfig {
    pub eps0: PermittivitySpec,
    pub eps1: PermittivitySpec,
}

impl Default for MaterialConfig {
    fn default() -> Self {
        MaterialConfig { eps0: PermittivitySpec::Constant(1.0), eps1: PermittivitySpec::Constant(1.0) }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct CellConfig {
    pub tol: f64,
}

impl Default for CellConfig {
    fn default() -> Self {
        CellConfig { tol: 1e-10 }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumConfig {
    pub k: usize,
    pub tol: f64,
    /// `auto`, `dense` or `iterative`.
    pub method: String,
    pub zero_mean_tol: f64,
    pub cluster_tol: f64,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        let d = SpectrumOptions::default();
        SpectrumConfig {
            k: d.k,
            tol: d.tol,
            method: "auto".into(),
            zero_mean_tol: d.zero_mean_tol,
            cluster_tol: d.cluster_tol,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct DispersionConfig {
    pub m_max: i64,
    /// Defaults to `0.9 sqrt(alpha_K)`.
    pub omega_max: Option<f64>,
    pub samples: usize,
    pub refine: usize,
    pub null_tol: f64,
    pub merge_tol: f64,
    /// Frequency samples for `gaps`.
    pub gap_samples: usize,
}

impl Default for DispersionConfig {
    fn default() -> Self {
        DispersionConfig {
            m_max: 2,
            omega_max: None,
            samples: 64,
            refine: 8,
            null_tol: 1e-8,
            merge_tol: 1e-9,
            gap_samples: 2048,
        }
    }
}

/// A homogenised root selected by wave vector and branch index.
#[derive(Debug, Clone, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TargetRoot {
    pub m: [i64; 3],
    /// 0 is the lowest root for this `m`.
    #[serde(default)]
    pub branch: usize,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidateConfig {
    pub ladder: Vec<usize>,
    pub count: usize,
    pub tol: f64,
    pub max_grid: usize,
    pub targets: Vec<TargetRoot>,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        ValidateConfig {
            ladder: vec![2, 3, 4],
            count: 24,
            tol: 1e-8,
            max_grid: crate::supercell_validation::MAX_GRID,
            targets: vec![TargetRoot { m: [1, 0, 0], branch: 0 }],
        }
    }
}

/// A parsed configuration together with the digest of its source text.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    /// Hex SHA-256 of the file bytes.
    pub hash: String,
}

pub fn hash_bytes(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn parse_config(text: &str) -> Result<LoadedConfig> {
    let config: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
    config.validate()?;
    Ok(LoadedConfig { config, hash: hash_bytes(text.as_bytes()) })
}

pub fn load_config(path: &Path) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive, got {v}")))
    }
}

impl RunConfig {
    pub fn shape(&self) -> Result<Shape> {
        let p = &self.geometry.params;
        let need = |name: &str| Error::Config(format!("geometry.params.{name} is required for shape '{}'", self.geometry.shape));
        let center = p.center.unwrap_or([0.5; 3]);
        let shape = match self.geometry.shape.as_str() {
            "empty" => Shape::Empty,
            "ball" => {
                let radius = p.radius.ok_or_else(|| need("radius"))?;
                positive("geometry.params.radius", radius)?;
                Shape::Ball { center, radius }
            }
            "box" => {
                let half = p.half.ok_or_else(|| need("half"))?;
                for h in half {
                    positive("geometry.params.half", h)?;
                }
                Shape::Box { center, half }
            }
            "cylinder" => {
                let axis = p.axis.ok_or_else(|| need("axis"))?;
                if axis > 2 {
                    return Err(Error::Config(format!("geometry.params.axis must be 0, 1 or 2, got {axis}")));
                }
                let radius = p.radius.ok_or_else(|| need("radius"))?;
                let half_height = p.half_height.ok_or_else(|| need("half_height"))?;
                positive("geometry.params.radius", radius)?;
                positive("geometry.params.half_height", half_height)?;
                Shape::Cylinder { axis, center, radius, half_height }
            }
            other => return Err(Error::Config(format!("unknown shape '{other}'"))),
        };
        Ok(shape)
    }

    pub fn symmetry(&self) -> Result<Vec<Rotation>> {
        self.geometry.symmetry.iter().map(|t| Rotation::parse(t)).collect()
    }

    pub fn cell(&self) -> Result<MaterialCell> {
        let mut cell = MaterialCell::new(self.grid.n, self.shape()?, self.material.eps0.build()?, self.material.eps1.build()?)
            .with_symmetry(&self.symmetry()?);
        cell.smoothing = self.geometry.smoothing;
        Ok(cell)
    }

    /// The unit cell at the supercell resolution `n_cell`.
    pub fn ladder_cell(&self) -> Result<MaterialCell> {
        Ok(self.cell()?.with_resolution(self.grid.n_cell.unwrap_or(self.grid.n)))
    }

    pub fn spectrum_options(&self, seed: u64) -> Result<SpectrumOptions> {
        let s = &self.spectrum;
        let method = match s.method.as_str() {
            "auto" => EigenMethod::Auto,
            "dense" => EigenMethod::Dense,
            "iterative" => EigenMethod::Iterative,
            other => return Err(Error::Config(format!("unknown spectrum.method '{other}'"))),
        };
        Ok(SpectrumOptions { k: s.k, tol: s.tol, method, seed, zero_mean_tol: s.zero_mean_tol, cluster_tol: s.cluster_tol })
    }

    pub fn scan_options(&self) -> crate::dispersion::ScanOptions {
        let d = &self.dispersion;
        crate::dispersion::ScanOptions { samples: d.samples, refine: d.refine, null_tol: d.null_tol, merge_tol: d.merge_tol }
    }

    /// Checks everything that can be checked without solving.
    pub fn validate(&self) -> Result<()> {
        let cell = self.cell()?;
        validate_cell(&cell).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(nc) = self.grid.n_cell {
            validate_cell(&cell.with_resolution(nc)).map_err(|e| Error::Config(e.to_string()))?;
        }
        positive("cell.tol", self.cell.tol)?;
        let s = &self.spectrum;
        if s.k == 0 {
            return Err(Error::Config("spectrum.k must be at least 1".into()));
        }
        positive("spectrum.tol", s.tol)?;
        positive("spectrum.zero_mean_tol", s.zero_mean_tol)?;
        positive("spectrum.cluster_tol", s.cluster_tol)?;
        self.spectrum_options(0)?;
        let d = &self.dispersion;
        if d.m_max < 1 {
            return Err(Error::Config("dispersion.m_max must be at least 1".into()));
        }
        if let Some(w) = d.omega_max {
            positive("dispersion.omega_max", w)?;
        }
        if d.samples < 2 || d.gap_samples < 2 {
            return Err(Error::Config("dispersion sample counts must be at least 2".into()));
        }
        positive("dispersion.null_tol", d.null_tol)?;
        positive("dispersion.merge_tol", d.merge_tol)?;
        let v = &self.validate;
        if v.ladder.is_empty() || v.ladder.contains(&0) {
            return Err(Error::Config("validate.ladder must be a nonempty list of positive integers".into()));
        }
        let nc = self.grid.n_cell.unwrap_or(self.grid.n);
        if let Some(p) = v.ladder.iter().find(|&&p| p * nc > v.max_grid) {
            return Err(Error::Config(format!("validate.ladder entry {p} gives a {}^3 grid above max_grid = {}", p * nc, v.max_grid)));
        }
        if v.count == 0 {
            return Err(Error::Config("validate.count must be positive".into()));
        }
        positive("validate.tol", v.tol)?;
        if v.targets.iter().any(|t| t.m == [0, 0, 0]) {
            return Err(Error::Config("validate.targets: m must be nonzero".into()));
        }
        Ok(())
    }
}
