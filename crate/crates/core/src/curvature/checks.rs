use nalgebra::{DMatrix, Matrix3, Vector3};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{curvature_corrected, curvature_kubo_standard, plaquette_phase, CurvatureField, Method};
use crate::delta::delta_closed_form_for;
use crate::error::{Error, Result};
use crate::solver::{BlochModel, BlochSolution};

#[derive(Debug, Clone, Serialize)]
pub struct SumRuleReport {
    pub method: Method,
    pub n_bands: usize,
    pub total: [f64; 3],
    pub max_band_norm: f64,
    pub residual: f64,
    /// residual / max_band_norm (residual itself when every band vanishes).
    pub relative: f64,
}

/// Sum over all retained bands of the truncated sum-over-states curvature.
pub fn sum_rule_check(sol: &BlochSolution, method: Method) -> Result<SumRuleReport> {
    let n = sol.n_bands();
    let entries = match method {
        Method::Kubo => (0..n).map(|b| curvature_kubo_standard(sol, b)).collect::<Vec<_>>(),
        Method::Corrected => {
            let delta = delta_closed_form_for(sol)?;
            (0..n).map(|b| curvature_corrected(&delta, &sol.energies, b)).collect()
        }
        Method::Mixed => (0..n)
            .map(|b| super::curvature_at(sol, b, Method::Mixed))
            .collect::<Result<Vec<_>>>()?,
        Method::Wilson => {
            return Err(Error::InvalidArgument(
                "use wilson_frame_phase for the plaquette sum rule".into(),
            ))
        }
    };
    let mut total = Vector3::zeros();
    let mut max_band_norm: f64 = 0.0;
    for e in &entries {
        total += e.omega;
        max_band_norm = max_band_norm.max(e.omega.norm());
    }
    let residual = total.norm();
    Ok(SumRuleReport {
        method,
        n_bands: n,
        total: [total[0], total[1], total[2]],
        max_band_norm,
        residual,
        relative: if max_band_norm > 0.0 {
            residual / max_band_norm
        } else {
            residual
        },
    })
}

/// Total loop phase of the complete eigenframe around one plaquette, and its
/// distance from the nearest multiple of 2 pi.
pub fn wilson_frame_phase(
    model: &BlochModel,
    k0: &Vector3<f64>,
    da: &Vector3<f64>,
    db: &Vector3<f64>,
) -> Result<(f64, f64)> {
    let full = model.basis().len();
    let ks = [*k0, k0 + da, k0 + da + db, k0 + db];
    let sols = ks.iter().map(|k| model.solve(k, full)).collect::<Result<Vec<_>>>()?;
    let mut prod = Complex64::new(1.0, 0.0);
    for i in 0..4 {
        let link: DMatrix<Complex64> = sols[i].coeffs.adjoint() * &sols[(i + 1) % 4].coeffs;
        prod *= link.determinant();
    }
    let phase = -prod.arg();
    let two_pi = 2.0 * std::f64::consts::PI;
    Ok((phase, (phase - (phase / two_pi).round() * two_pi).abs()))
}

#[derive(Debug, Clone, Serialize)]
pub struct GaugeReport {
    pub k: [f64; 3],
    pub seed: u64,
    pub kubo: f64,
    pub corrected: f64,
    /// Change of the plaquette field strength (Berry phase around the plaquette, radians).
    pub wilson: f64,
    /// The same change divided by the plaquette area.
    pub wilson_curvature: f64,
}

fn random_phases(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI))
        .collect()
}

/// Largest change of each method's curvature over `bands` after random per-band phases.
///
/// The plaquette for the Wilson method has corner `k` and edges `da`, `db`;
/// every corner receives its own random phases.
pub fn gauge_invariance_check(
    model: &BlochModel,
    k: &Vector3<f64>,
    da: &Vector3<f64>,
    db: &Vector3<f64>,
    n_bands: usize,
    bands: &[usize],
    seed: u64,
) -> Result<GaugeReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sol = model.solve(k, n_bands)?;
    let twisted = sol.with_phases(&random_phases(&mut rng, n_bands));
    let d0 = delta_closed_form_for(&sol)?;
    let d1 = delta_closed_form_for(&twisted)?;
    let mut kubo: f64 = 0.0;
    let mut corrected: f64 = 0.0;
    for &b in bands {
        let a = curvature_kubo_standard(&sol, b).omega;
        let t = curvature_kubo_standard(&twisted, b).omega;
        kubo = kubo.max((a - t).norm());
        let a = curvature_corrected(&d0, &sol.energies, b).omega;
        let t = curvature_corrected(&d1, &twisted.energies, b).omega;
        corrected = corrected.max((a - t).norm());
    }

    let ks = [*k, k + da, k + da + db, k + db];
    let corners = ks.iter().map(|q| model.solve(q, n_bands)).collect::<Result<Vec<_>>>()?;
    let rotated: Vec<BlochSolution> = corners
        .iter()
        .map(|s| s.with_phases(&random_phases(&mut rng, n_bands)))
        .collect();
    let s = da.cross(db);
    let area = if model.dim() == 2 { s[2] } else { s.norm() };
    let mut wilson: f64 = 0.0;
    for &b in bands {
        let cols = |set: &[BlochSolution]| -> Vec<_> { set.iter().map(|s| s.coeffs.column(b).into_owned()).collect() };
        let (c0, c1) = (cols(&corners), cols(&rotated));
        let (p0, _) = plaquette_phase([&c0[0], &c0[1], &c0[2], &c0[3]]);
        let (p1, _) = plaquette_phase([&c1[0], &c1[1], &c1[2], &c1[3]]);
        wilson = wilson.max((p0 - p1).abs());
    }
    Ok(GaugeReport {
        k: [k[0], k[1], k[2]],
        seed,
        kubo,
        corrected,
        wilson,
        wilson_curvature: wilson / area.abs(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DivergenceReport {
    pub band: usize,
    pub method: Method,
    pub max_divergence: f64,
    pub max_omega: f64,
    pub b1_norm: f64,
    /// max_divergence / (max_omega |b_1|).
    pub ratio: f64,
    pub evaluated: usize,
    pub masked: usize,
}

/// Central-difference divergence of a curvature field sampled on the points of a
/// periodic 3D grid.
pub fn divergence_check(field: &CurvatureField) -> Result<DivergenceReport> {
    let grid = &field.grid;
    if grid.dim() != 3 || field.len() != grid.len() {
        return Err(Error::InvalidArgument(
            "divergence check needs a 3D field on every grid point".into(),
        ));
    }
    // grad_k = sum_l (a_l / 2 pi) d/ds_l with k = sum_l s_l b_l.
    let mut b = Matrix3::zeros();
    for l in 0..3 {
        b.set_row(l, &(grid.step(l) * grid.counts()[l] as f64).transpose());
    }
    let dual = b
        .try_inverse()
        .ok_or_else(|| Error::InvalidArgument("singular reciprocal basis".into()))?;
    let mut max_div: f64 = 0.0;
    let mut evaluated = 0;
    let mut masked = 0;
    for flat in 0..grid.len() {
        let nbrs: Vec<(usize, usize)> = (0..3)
            .map(|l| (grid.neighbour(flat, l, 1), grid.neighbour(flat, l, -1)))
            .collect();
        if field.masked[flat] || nbrs.iter().any(|&(p, m)| field.masked[p] || field.masked[m]) {
            masked += 1;
            continue;
        }
        let mut div = 0.0;
        for (l, &(p, m)) in nbrs.iter().enumerate() {
            let ds = 2.0 / grid.counts()[l] as f64;
            let d = (field.omega[p] - field.omega[m]) / ds;
            div += dual.column(l).dot(&d);
        }
        max_div = max_div.max(div.abs());
        evaluated += 1;
    }
    let max_omega = field.max_norm();
    let b1_norm = grid.step(0).norm() * grid.counts()[0] as f64;
    Ok(DivergenceReport {
        band: field.band,
        method: field.method,
        max_divergence: max_div,
        max_omega,
        b1_norm,
        ratio: if max_omega > 0.0 {
            max_div / (max_omega * b1_norm)
        } else {
            max_div
        },
        evaluated,
        masked,
    })
}
