use nalgebra::{DVector, Matrix3, Vector3};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use super::{CurvatureField, KGrid, Method};
use crate::error::{Error, Result};
use crate::solver::{is_degenerate, BlochModel, BlochSolution, DEGENERACY_TOL};

/// Link overlaps smaller than this signal a band crossing inside a plaquette.
pub const LINK_MIN_OVERLAP: f64 = 1e-8;

/// -arg of the ordered loop product of overlaps, and the smallest link magnitude.
pub fn plaquette_phase(states: [&DVector<Complex64>; 4]) -> (f64, f64) {
    let mut prod = Complex64::new(1.0, 0.0);
    let mut min_link = f64::INFINITY;
    for i in 0..4 {
        let link = states[i].dotc(states[(i + 1) % 4]);
        min_link = min_link.min(link.norm());
        prod *= link;
    }
    (-prod.arg(), min_link)
}

/// Curvature flux through the plaquette k0 -> k0 + da -> k0 + da + db -> k0 + db.
///
/// Returns the loop phase divided by |da x db| (signed by the z-component in 2D).
pub fn wilson_plaquette(
    model: &BlochModel,
    k0: &Vector3<f64>,
    da: &Vector3<f64>,
    db: &Vector3<f64>,
    band: usize,
) -> Result<f64> {
    let nb = band + 1;
    let ks = [*k0, k0 + da, k0 + da + db, k0 + db];
    let sols = ks.iter().map(|k| model.solve(k, nb)).collect::<Result<Vec<_>>>()?;
    let cols: Vec<DVector<Complex64>> = sols.iter().map(|s| s.coeffs.column(band).into_owned()).collect();
    let (phase, min_link) = plaquette_phase([&cols[0], &cols[1], &cols[2], &cols[3]]);
    if min_link < LINK_MIN_OVERLAP {
        return Err(Error::BandCrossing {
            band,
            overlap: min_link,
        });
    }
    let s = da.cross(db);
    let area = if model.dim() == 2 { s[2] } else { s.norm() };
    Ok(phase / area)
}

pub(crate) struct CornerStates {
    pub columns: Vec<DVector<Complex64>>,
    pub degenerate: Vec<bool>,
}

pub(crate) fn corner_states(model: &BlochModel, grid: &KGrid, band: usize) -> Result<CornerStates> {
    let nb = band + 2;
    let solved = grid
        .corners()
        .par_iter()
        .map(|k| model.solve(k, nb))
        .collect::<Result<Vec<BlochSolution>>>()?;
    let degenerate = solved
        .iter()
        .map(|s| {
            let e = &s.energies;
            is_degenerate(e[band], e[band + 1], DEGENERACY_TOL)
                || (band > 0 && is_degenerate(e[band], e[band - 1], DEGENERACY_TOL))
        })
        .collect();
    let columns = solved.into_iter().map(|s| s.coeffs.column(band).into_owned()).collect();
    Ok(CornerStates { columns, degenerate })
}

fn axes_of(normal: usize) -> (usize, usize) {
    ((normal + 1) % 3, (normal + 2) % 3)
}

/// Oriented face loop with base corner `c`, spanned by the axes cyclically following `normal`.
fn face(grid: &KGrid, st: &CornerStates, c: [usize; 3], normal: usize) -> (f64, f64, bool) {
    let (a, b) = axes_of(normal);
    let mut ids = [c; 4];
    ids[1][a] += 1;
    ids[2][a] += 1;
    ids[2][b] += 1;
    ids[3][b] += 1;
    let idx: Vec<usize> = ids.iter().map(|i| grid.corner_index(&i[..grid.dim()])).collect();
    let (phase, link) = plaquette_phase([
        &st.columns[idx[0]],
        &st.columns[idx[1]],
        &st.columns[idx[2]],
        &st.columns[idx[3]],
    ]);
    let deg = idx.iter().any(|&i| st.degenerate[i]);
    (phase, link, deg)
}

/// Plaquette (2D) or cube-averaged (3D) Wilson-loop curvature of one band.
///
/// Eigenstates are solved at every cell corner at the actual k, so no
/// periodic-gauge identification is needed.
pub fn curvature_wilson_loop(model: &BlochModel, grid: &KGrid, band: usize) -> Result<CurvatureField> {
    let dim = grid.dim();
    if dim != 2 && dim != 3 {
        return Err(Error::InvalidArgument(
            "plaquette curvature needs a 2D or 3D grid".into(),
        ));
    }
    let st = corner_states(model, grid, band)?;
    let mut omega = Vec::with_capacity(grid.len());
    let mut masked = Vec::with_capacity(grid.len());
    for flat in 0..grid.len() {
        let mut c = [0usize; 3];
        c[..dim].copy_from_slice(&grid.coords(flat));
        if dim == 2 {
            let (phase, link, deg) = face(grid, &st, c, 2);
            omega.push(Vector3::new(0.0, 0.0, phase / grid.plaquette_area(0, 1)));
            masked.push(deg || link < LINK_MIN_OVERLAP);
        } else {
            let mut rows = Matrix3::zeros();
            let mut rhs = Vector3::zeros();
            let mut bad = false;
            for normal in 0..3 {
                let (a, b) = axes_of(normal);
                let mut upper = c;
                upper[normal] += 1;
                let (p0, l0, d0) = face(grid, &st, c, normal);
                let (p1, l1, d1) = face(grid, &st, upper, normal);
                bad |= d0 || d1 || l0.min(l1) < LINK_MIN_OVERLAP;
                let s = grid.step(a).cross(&grid.step(b));
                rows.set_row(normal, &s.transpose());
                rhs[normal] = 0.5 * (p0 + p1);
            }
            let sol = rows.lu().solve(&rhs).unwrap_or_else(Vector3::zeros);
            omega.push(sol);
            masked.push(bad);
        }
    }
    Ok(CurvatureField {
        grid: grid.clone(),
        band,
        method: Method::Wilson,
        sites: grid.centers(),
        omega,
        masked,
        skipped_pairs: 0,
    })
}

/// Total outward Wilson flux through every closed cube of a 3D grid.
#[derive(Debug, Clone, Serialize)]
pub struct CubeFluxReport {
    pub band: usize,
    pub cubes: usize,
    pub masked: usize,
    /// max over cubes of the distance of the flux from the nearest multiple of 2 pi.
    pub max_integer_residual: f64,
    /// max |flux| over unmasked cubes.
    pub max_unmasked_flux: f64,
    /// Unmasked cubes whose flux is a nonzero multiple of 2 pi.
    pub nonzero_unmasked: usize,
    /// Cubes whose flux is a nonzero multiple of 2 pi (monopole candidates).
    pub charged: Vec<(Vec<usize>, i64)>,
}

pub fn wilson_cube_fluxes(model: &BlochModel, grid: &KGrid, band: usize) -> Result<CubeFluxReport> {
    if grid.dim() != 3 {
        return Err(Error::InvalidArgument("cube fluxes need a 3D grid".into()));
    }
    let st = corner_states(model, grid, band)?;
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut report = CubeFluxReport {
        band,
        cubes: grid.len(),
        masked: 0,
        max_integer_residual: 0.0,
        max_unmasked_flux: 0.0,
        nonzero_unmasked: 0,
        charged: Vec::new(),
    };
    for flat in 0..grid.len() {
        let gc = grid.coords(flat);
        let c = [gc[0], gc[1], gc[2]];
        let mut flux = 0.0;
        let mut bad = false;
        for normal in 0..3 {
            let mut upper = c;
            upper[normal] += 1;
            let (p0, l0, d0) = face(grid, &st, c, normal);
            let (p1, l1, d1) = face(grid, &st, upper, normal);
            bad |= d0 || d1 || l0.min(l1) < LINK_MIN_OVERLAP;
            flux += p1 - p0;
        }
        let winding = (flux / two_pi).round();
        report.max_integer_residual = report.max_integer_residual.max((flux - winding * two_pi).abs());
        if winding != 0.0 {
            report.charged.push((gc.clone(), winding as i64));
        }
        if bad {
            report.masked += 1;
        } else {
            report.max_unmasked_flux = report.max_unmasked_flux.max(flux.abs());
            if winding != 0.0 {
                report.nonzero_unmasked += 1;
            }
        }
    }
    Ok(report)
}
