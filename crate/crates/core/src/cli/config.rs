//! Strict JSON run configuration.

use nalgebra::Vector3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::error::{CliError, ErrorCategory};
use crate::model::{build_plane_wave_basis, potential_from_fourier, CrystalLattice};
use crate::solver::{BlochModel, GaugeTag};

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Vectors {
    Flat(Vec<f64>),
    Nested(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Coordinate {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl Coordinate {
    fn components(&self) -> Vec<f64> {
        match self {
            Coordinate::Scalar(x) => vec![*x],
            Coordinate::Vector(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSpec {
    pub g: Vec<i32>,
    /// [re, im].
    pub v: [f64; 2],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KPathSpec {
    pub points: Vec<Coordinate>,
    /// Samples per segment, end point excluded except on the last segment.
    #[serde(default = "default_path_samples")]
    pub samples: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KGridSpec {
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "default_identity_tol")]
    pub identity: f64,
    #[serde(default = "default_boundary_tol")]
    pub boundary: f64,
    #[serde(default = "default_degeneracy_tol")]
    pub degeneracy: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            identity: default_identity_tol(),
            boundary: default_boundary_tol(),
            degeneracy: default_degeneracy_tol(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeltaSpec {
    pub k_points: Vec<Coordinate>,
    pub bands: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreeParticleSpec {
    pub box_length: f64,
    pub pairs: Vec<(Coordinate, Coordinate)>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RampConfig {
    pub k0: Coordinate,
    pub rate: Coordinate,
    pub duration: f64,
    pub samples: usize,
    #[serde(default)]
    pub initial_band: usize,
    pub n_bands: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub k0: Coordinate,
    pub k1: Coordinate,
    pub rates: Vec<f64>,
    #[serde(default = "default_sweep_samples")]
    pub samples: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputPaths {
    #[serde(default = "o_bands")]
    pub bands: String,
    #[serde(default = "o_curvature")]
    pub curvature: String,
    #[serde(default = "o_comparison")]
    pub comparison: String,
    #[serde(default = "o_delta")]
    pub delta_report: String,
    #[serde(default = "o_free")]
    pub free_particle_report: String,
    #[serde(default = "o_trajectory")]
    pub trajectory: String,
    #[serde(default = "o_adiabatic")]
    pub adiabatic_report: String,
    #[serde(default = "o_verification")]
    pub verification_report: String,
}

impl Default for OutputPaths {
    fn default() -> Self {
        Self {
            bands: o_bands(),
            curvature: o_curvature(),
            comparison: o_comparison(),
            delta_report: o_delta(),
            free_particle_report: o_free(),
            trajectory: o_trajectory(),
            adiabatic_report: o_adiabatic(),
            verification_report: o_verification(),
        }
    }
}

fn o_bands() -> String {
    "bands.csv".into()
}
fn o_curvature() -> String {
    "curvature.csv".into()
}
fn o_comparison() -> String {
    "comparison.json".into()
}
fn o_delta() -> String {
    "delta_report.json".into()
}
fn o_free() -> String {
    "free_particle_report.json".into()
}
fn o_trajectory() -> String {
    "trajectory.csv".into()
}
fn o_adiabatic() -> String {
    "adiabatic_report.json".into()
}
fn o_verification() -> String {
    "verification_report.json".into()
}
fn default_path_samples() -> usize {
    32
}
fn default_sweep_samples() -> usize {
    3
}
fn default_identity_tol() -> f64 {
    1e-6
}
fn default_boundary_tol() -> f64 {
    1e-8
}
fn default_degeneracy_tol() -> f64 {
    1e-8
}
fn default_bands() -> Vec<usize> {
    vec![0]
}
fn default_gauge() -> GaugeTag {
    GaugeTag::MaxReal
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    name: Option<String>,
    dimension: usize,
    a: Vectors,
    coeffs: Vec<CoefficientSpec>,
    e_cut: f64,
    n_bands: usize,
    k_path: Option<KPathSpec>,
    k_grid: Option<KGridSpec>,
    #[serde(default = "default_bands")]
    bands: Vec<usize>,
    #[serde(default = "default_gauge")]
    gauge: GaugeTag,
    dk: Option<f64>,
    grid_resolution: Option<usize>,
    #[serde(default)]
    tolerances: Tolerances,
    delta: Option<DeltaSpec>,
    free_particle: Option<FreeParticleSpec>,
    ramp: Option<RampConfig>,
    sweep: Option<SweepConfig>,
    #[serde(default)]
    outputs: OutputPaths,
}

#[derive(Debug, Clone)]
pub struct Ramp {
    pub k0: Vector3<f64>,
    pub rate: Vector3<f64>,
    pub duration: f64,
    pub samples: usize,
    pub initial_band: usize,
    pub n_bands: usize,
}

#[derive(Debug, Clone)]
pub struct Sweep {
    pub k0: Vector3<f64>,
    pub k1: Vector3<f64>,
    pub rates: Vec<f64>,
    pub samples: usize,
}

#[derive(Debug, Clone)]
pub struct KPath {
    pub vertices: Vec<Vector3<f64>>,
    pub samples: usize,
}

impl KPath {
    /// Vertices joined by `samples` evenly spaced points per segment.
    pub fn points(&self) -> Vec<Vector3<f64>> {
        if self.vertices.len() == 1 {
            return self.vertices.clone();
        }
        let mut out = Vec::new();
        for w in self.vertices.windows(2) {
            for j in 0..self.samples {
                out.push(w[0] + (w[1] - w[0]) * (j as f64 / self.samples as f64));
            }
        }
        out.push(*self.vertices.last().unwrap_or(&Vector3::zeros()));
        out
    }
}

pub type FreeParticlePair = (Vec<f64>, Vec<f64>);

/// Validated configuration with documented defaults filled in.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub name: String,
    pub dimension: usize,
    pub lattice: Vec<Vec<f64>>,
    pub coeffs: Vec<(Vec<i32>, Complex64)>,
    pub e_cut: f64,
    pub n_bands: usize,
    pub k_path: Option<KPath>,
    pub k_grid: Option<Vec<usize>>,
    pub bands: Vec<usize>,
    pub gauge: GaugeTag,
    /// |delta k|; 1e-4 |b_1| when not given.
    pub dk: Option<f64>,
    pub grid_resolution: Option<usize>,
    pub tolerances: Tolerances,
    pub delta_points: Vec<Vector3<f64>>,
    pub delta_bands: usize,
    pub free_particle: Option<(f64, Vec<FreeParticlePair>)>,
    pub ramp: Option<Ramp>,
    pub sweep: Option<Sweep>,
    pub outputs: OutputPaths,
}

impl RunConfig {
    pub fn build_model(&self) -> Result<BlochModel, CliError> {
        let lat = CrystalLattice::new(&self.lattice).map_err(CliError::physics)?;
        let basis = build_plane_wave_basis(&lat, self.e_cut).map_err(CliError::physics)?;
        let pot = potential_from_fourier(&lat, &self.coeffs).map_err(CliError::physics)?;
        let model = BlochModel::new(basis, pot).map_err(CliError::physics)?;
        if self.n_bands > model.basis().len() {
            return Err(CliError::new(
                ErrorCategory::Physics,
                Some("n_bands".into()),
                format!(
                    "n_bands = {} exceeds the basis size {} at e_cut = {}",
                    self.n_bands,
                    model.basis().len(),
                    self.e_cut
                ),
            ));
        }
        Ok(model)
    }
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let msg = inner.to_string();
        let category = match inner.classify() {
            serde_json::error::Category::Syntax | serde_json::error::Category::Eof => ErrorCategory::Json,
            serde_json::error::Category::Io => ErrorCategory::Io,
            serde_json::error::Category::Data => {
                if msg.starts_with("missing field") {
                    ErrorCategory::MissingField
                } else if msg.starts_with("unknown field") {
                    ErrorCategory::UnknownKey
                } else {
                    ErrorCategory::Schema
                }
            }
        };
        let path = (path != ".").then_some(path);
        CliError::new(category, path, msg)
    })?;
    validate(raw)
}

fn dim_error(path: String, msg: String) -> CliError {
    CliError::new(ErrorCategory::Dimension, Some(path), msg)
}

fn value_error(path: &str, msg: String) -> CliError {
    CliError::new(ErrorCategory::Value, Some(path.into()), msg)
}

fn wavevector(c: &Coordinate, dim: usize, path: String) -> Result<Vector3<f64>, CliError> {
    let v = c.components();
    if v.len() != dim {
        return Err(dim_error(path, format!("expected {dim} component(s), got {}", v.len())));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(value_error(&path, "components must be finite".into()));
    }
    let mut k = Vector3::zeros();
    k.as_mut_slice()[..dim].copy_from_slice(&v);
    Ok(k)
}

fn positive(x: f64, path: &str) -> Result<(), CliError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(value_error(path, format!("must be positive and finite, got {x}")))
    }
}

fn validate(raw: RawConfig) -> Result<RunConfig, CliError> {
    let dim = raw.dimension;
    if !(1..=3).contains(&dim) {
        return Err(value_error("dimension", format!("must be 1, 2 or 3, got {dim}")));
    }
    let lattice = match raw.a {
        Vectors::Flat(v) if dim == 1 => vec![v],
        Vectors::Flat(v) => {
            return Err(dim_error(
                "a".into(),
                format!("a flat list of {} numbers only describes a 1D lattice", v.len()),
            ))
        }
        Vectors::Nested(v) => v,
    };
    if lattice.len() != dim {
        return Err(dim_error(
            "a".into(),
            format!("expected {dim} vector(s), got {}", lattice.len()),
        ));
    }
    for (i, v) in lattice.iter().enumerate() {
        if v.len() != dim {
            return Err(dim_error(
                format!("a[{i}]"),
                format!("expected {dim} component(s), got {}", v.len()),
            ));
        }
    }
    let mut coeffs = Vec::with_capacity(raw.coeffs.len());
    for (i, c) in raw.coeffs.iter().enumerate() {
        if c.g.len() != dim {
            return Err(dim_error(
                format!("coeffs[{i}].g"),
                format!("expected {dim} integer(s), got {}", c.g.len()),
            ));
        }
        coeffs.push((c.g.clone(), Complex64::new(c.v[0], c.v[1])));
    }
    positive(raw.e_cut, "e_cut")?;
    if raw.n_bands == 0 {
        return Err(value_error("n_bands", "must be at least 1".into()));
    }
    let k_path = match raw.k_path {
        Some(p) => {
            if p.points.is_empty() {
                return Err(value_error("k_path.points", "needs at least one point".into()));
            }
            if p.samples == 0 {
                return Err(value_error("k_path.samples", "must be at least 1".into()));
            }
            let vertices = p
                .points
                .iter()
                .enumerate()
                .map(|(i, c)| wavevector(c, dim, format!("k_path.points[{i}]")))
                .collect::<Result<Vec<_>, _>>()?;
            Some(KPath {
                vertices,
                samples: p.samples,
            })
        }
        None => None,
    };
    let k_grid = match raw.k_grid {
        Some(g) => {
            if g.counts.len() != dim {
                return Err(dim_error(
                    "k_grid.counts".into(),
                    format!("expected {dim} count(s), got {}", g.counts.len()),
                ));
            }
            if g.counts.iter().any(|&c| c < 2) {
                return Err(value_error("k_grid.counts", "every count must be at least 2".into()));
            }
            Some(g.counts)
        }
        None => None,
    };
    for (i, &b) in raw.bands.iter().enumerate() {
        if b >= raw.n_bands {
            return Err(value_error(
                &format!("bands[{i}]"),
                format!("band {b} outside 0..{}", raw.n_bands),
            ));
        }
    }
    if raw.gauge == GaugeTag::Unfixed {
        return Err(value_error("gauge", "must be max-real or parallel-transport".into()));
    }
    if let Some(dk) = raw.dk {
        positive(dk, "dk")?;
    }
    if raw.grid_resolution == Some(0) {
        return Err(value_error("grid_resolution", "must be positive".into()));
    }
    positive(raw.tolerances.identity, "tolerances.identity")?;
    positive(raw.tolerances.boundary, "tolerances.boundary")?;
    positive(raw.tolerances.degeneracy, "tolerances.degeneracy")?;

    let (delta_points, delta_bands) = match raw.delta {
        Some(d) => {
            if d.bands < 2 || d.bands > raw.n_bands {
                return Err(value_error("delta.bands", format!("must lie in 2..={}", raw.n_bands)));
            }
            let pts = d
                .k_points
                .iter()
                .enumerate()
                .map(|(i, c)| wavevector(c, dim, format!("delta.k_points[{i}]")))
                .collect::<Result<Vec<_>, _>>()?;
            (pts, d.bands)
        }
        None => (Vec::new(), 0),
    };
    let free_particle = match raw.free_particle {
        Some(f) => {
            positive(f.box_length, "free_particle.box_length")?;
            let mut pairs = Vec::with_capacity(f.pairs.len());
            for (i, (k, kp)) in f.pairs.iter().enumerate() {
                let k = k.components();
                let kp = kp.components();
                if k.len() != dim || kp.len() != dim {
                    return Err(dim_error(
                        format!("free_particle.pairs[{i}]"),
                        format!("expected {dim} component(s) per wavevector"),
                    ));
                }
                pairs.push((k, kp));
            }
            Some((f.box_length, pairs))
        }
        None => None,
    };
    let ramp = match raw.ramp {
        Some(r) => {
            let n_bands = r.n_bands.unwrap_or(raw.n_bands.min(4));
            if n_bands == 0 || n_bands > raw.n_bands {
                return Err(value_error("ramp.n_bands", format!("must lie in 1..={}", raw.n_bands)));
            }
            if r.initial_band >= n_bands {
                return Err(value_error(
                    "ramp.initial_band",
                    format!("band {} outside 0..{n_bands}", r.initial_band),
                ));
            }
            positive(r.duration, "ramp.duration")?;
            if r.samples < 2 {
                return Err(value_error("ramp.samples", "must be at least 2".into()));
            }
            Some(Ramp {
                k0: wavevector(&r.k0, dim, "ramp.k0".into())?,
                rate: wavevector(&r.rate, dim, "ramp.rate".into())?,
                duration: r.duration,
                samples: r.samples,
                initial_band: r.initial_band,
                n_bands,
            })
        }
        None => None,
    };
    let sweep = match raw.sweep {
        Some(s) => {
            if s.rates.len() < 2 {
                return Err(value_error("sweep.rates", "needs at least 2 rates".into()));
            }
            for (i, &r) in s.rates.iter().enumerate() {
                positive(r, &format!("sweep.rates[{i}]"))?;
            }
            if s.samples < 2 {
                return Err(value_error("sweep.samples", "must be at least 2".into()));
            }
            let k0 = wavevector(&s.k0, dim, "sweep.k0".into())?;
            let k1 = wavevector(&s.k1, dim, "sweep.k1".into())?;
            if k0 == k1 {
                return Err(value_error("sweep.k1", "must differ from sweep.k0".into()));
            }
            Some(Sweep {
                k0,
                k1,
                rates: s.rates,
                samples: s.samples,
            })
        }
        None => None,
    };
    Ok(RunConfig {
        name: raw.name.unwrap_or_else(|| "config".into()),
        dimension: dim,
        lattice,
        coeffs,
        e_cut: raw.e_cut,
        n_bands: raw.n_bands,
        k_path,
        k_grid,
        bands: raw.bands,
        gauge: raw.gauge,
        dk: raw.dk,
        grid_resolution: raw.grid_resolution,
        tolerances: raw.tolerances,
        delta_points,
        delta_bands,
        free_particle,
        ramp,
        sweep,
        outputs: raw.outputs,
    })
}
