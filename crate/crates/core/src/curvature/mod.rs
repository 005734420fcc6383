//! Berry curvature by plaquette Wilson loops, the standard sum over states and the
//! corrected sum over states, with the sum-rule, gauge and divergence checks.

mod checks;
mod grid;
mod wilson;

pub use checks::{
    divergence_check, gauge_invariance_check, sum_rule_check, wilson_frame_phase, DivergenceReport, GaugeReport,
    SumRuleReport,
};
pub use grid::KGrid;
pub use wilson::{
    curvature_wilson_loop, plaquette_phase, wilson_cube_fluxes, wilson_plaquette, CubeFluxReport, LINK_MIN_OVERLAP,
};

use nalgebra::Vector3;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::delta::{delta_closed_form_for, DeltaBlock};
use crate::elements::{momentum_matrix, VectorBlock};
use crate::error::{Error, Result};
use crate::solver::{is_degenerate, BlochModel, BlochSolution, DEGENERACY_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Wilson,
    Kubo,
    Corrected,
    Mixed,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Wilson => "wilson",
            Method::Kubo => "kubo",
            Method::Corrected => "corrected",
            Method::Mixed => "mixed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "wilson" => Some(Method::Wilson),
            "kubo" => Some(Method::Kubo),
            "corrected" => Some(Method::Corrected),
            "mixed" => Some(Method::Mixed),
            _ => None,
        }
    }
}

/// Curvature of one band at one k.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureEntry {
    /// Pseudovector; only z is populated in 2D and nothing in 1D.
    pub omega: Vector3<f64>,
    /// Largest imaginary part discarded from the sum.
    pub imag_residual: f64,
    /// Partner bands skipped as degenerate or missing.
    pub skipped: Vec<usize>,
}

/// i sum_{m != n} N[n][m] x N[m][n] / (e_n - e_m)^2 over the bands in `numer`.
///
/// `missing` marks entries that cannot be used; such partners are skipped.
pub fn sum_over_states(
    numer: &VectorBlock,
    energies: &[f64],
    n: usize,
    missing: impl Fn(usize, usize) -> bool,
) -> CurvatureEntry {
    let mut acc = Vector3::<Complex64>::zeros();
    let mut skipped = Vec::new();
    if numer.dim() < 2 {
        return CurvatureEntry {
            omega: Vector3::zeros(),
            imag_residual: 0.0,
            skipped,
        };
    }
    for m in 0..numer.n_bands() {
        if m == n {
            continue;
        }
        if is_degenerate(energies[n], energies[m], DEGENERACY_TOL) || missing(n, m) || missing(m, n) {
            skipped.push(m);
            continue;
        }
        let de = energies[n] - energies[m];
        let cross = numer.get(n, m).cross(&numer.get(m, n));
        acc += cross * Complex64::new(0.0, 1.0 / (de * de));
    }
    CurvatureEntry {
        omega: acc.map(|c| c.re),
        imag_residual: acc.iter().map(|c| c.im.abs()).fold(0.0, f64::max),
        skipped,
    }
}

pub fn curvature_kubo_standard(sol: &BlochSolution, n: usize) -> CurvatureEntry {
    sum_over_states(&momentum_matrix(sol), &sol.energies, n, |_, _| false)
}

/// Kubo form with the parameter-free numerator Delta^H; missing entries are skipped.
pub fn curvature_corrected(delta: &DeltaBlock, energies: &[f64], n: usize) -> CurvatureEntry {
    sum_over_states(&delta.values, energies, n, |a, b| !delta.valid[a][b])
}

/// Numerator P + Delta^H of the general form with both derivative and correction present.
pub fn curvature_mixed(p: &VectorBlock, delta: &DeltaBlock, energies: &[f64], n: usize) -> CurvatureEntry {
    let mut numer = p.clone();
    for (c, d) in numer.components_mut().iter_mut().zip(delta.values.components()) {
        *c += d;
    }
    sum_over_states(&numer, energies, n, |a, b| !delta.valid[a][b])
}

/// Sum-over-states curvature from a solution.
pub fn curvature_at(sol: &BlochSolution, n: usize, method: Method) -> Result<CurvatureEntry> {
    match method {
        Method::Kubo => Ok(curvature_kubo_standard(sol, n)),
        Method::Corrected => Ok(curvature_corrected(&delta_closed_form_for(sol)?, &sol.energies, n)),
        Method::Mixed => Ok(curvature_mixed(
            &momentum_matrix(sol),
            &delta_closed_form_for(sol)?,
            &sol.energies,
            n,
        )),
        Method::Wilson => Err(Error::InvalidArgument(
            "the Wilson-loop method needs neighbouring k-points".into(),
        )),
    }
}

/// Per-k samples of one band's curvature for one method.
#[derive(Debug, Clone)]
pub struct CurvatureField {
    pub grid: KGrid,
    pub band: usize,
    pub method: Method,
    /// Sample sites, in grid order (plaquette or cube centers, or grid points).
    pub sites: Vec<Vector3<f64>>,
    pub omega: Vec<Vector3<f64>>,
    /// true where the sample is unusable (degeneracy or crossing).
    pub masked: Vec<bool>,
    /// Degenerate partner pairs skipped across all samples.
    pub skipped_pairs: usize,
}

impl CurvatureField {
    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    pub fn max_norm(&self) -> f64 {
        self.omega
            .iter()
            .zip(&self.masked)
            .filter(|(_, m)| !**m)
            .map(|(o, _)| o.norm())
            .fold(0.0, f64::max)
    }
}

/// Where sum-over-states samples are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sites {
    Points,
    Centers,
}

/// Sum-over-states curvature of `band` sampled on the grid.
pub fn curvature_field(
    model: &BlochModel,
    grid: &KGrid,
    band: usize,
    n_bands: usize,
    method: Method,
    sites: Sites,
) -> Result<CurvatureField> {
    let ks = match sites {
        Sites::Points => grid.points(),
        Sites::Centers => grid.centers(),
    };
    let entries = ks
        .par_iter()
        .map(|k| {
            let sol = model.solve(k, n_bands)?;
            curvature_at(&sol, band, method)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(field_from_entries(grid, band, method, ks, entries))
}

pub(crate) fn field_from_entries(
    grid: &KGrid,
    band: usize,
    method: Method,
    sites: Vec<Vector3<f64>>,
    entries: Vec<CurvatureEntry>,
) -> CurvatureField {
    let skipped_pairs = entries.iter().map(|e| e.skipped.len()).sum();
    // Skipped partners are degenerate with the band itself.
    let masked = entries.iter().map(|e| !e.skipped.is_empty()).collect();
    CurvatureField {
        grid: grid.clone(),
        band,
        method,
        sites,
        omega: entries.into_iter().map(|e| e.omega).collect(),
        masked,
        skipped_pairs,
    }
}

/// Wilson, Kubo and corrected samples of one band at the same plaquette centers.
#[derive(Debug, Clone)]
pub struct CurvatureComparison {
    pub wilson: CurvatureField,
    pub kubo: CurvatureField,
    pub corrected: CurvatureField,
}

impl CurvatureComparison {
    /// sqrt(sum |kubo - wilson|^2 / sum |wilson|^2) over unmasked samples.
    pub fn relative_rms(&self) -> f64 {
        relative_rms(&self.kubo, &self.wilson)
    }
}

pub fn relative_rms(a: &CurvatureField, reference: &CurvatureField) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..reference.len() {
        if a.masked[i] || reference.masked[i] {
            continue;
        }
        num += (a.omega[i] - reference.omega[i]).norm_squared();
        den += reference.omega[i].norm_squared();
    }
    if den > 0.0 {
        (num / den).sqrt()
    } else {
        num.sqrt()
    }
}

/// Runs all three methods for `band` on a 2D grid.
pub fn curvature_comparison(
    model: &BlochModel,
    grid: &KGrid,
    band: usize,
    n_bands: usize,
) -> Result<CurvatureComparison> {
    let wilson = curvature_wilson_loop(model, grid, band)?;
    let centers = grid.centers();
    let pairs = centers
        .par_iter()
        .map(|k| {
            let sol = model.solve(k, n_bands)?;
            let kubo = curvature_kubo_standard(&sol, band);
            let corrected = curvature_corrected(&delta_closed_form_for(&sol)?, &sol.energies, band);
            Ok((kubo, corrected))
        })
        .collect::<Result<Vec<_>>>()?;
    let (kubo, corrected): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    Ok(CurvatureComparison {
        kubo: field_from_entries(grid, band, Method::Kubo, centers.clone(), kubo),
        corrected: field_from_entries(grid, band, Method::Corrected, centers, corrected),
        wilson,
    })
}
