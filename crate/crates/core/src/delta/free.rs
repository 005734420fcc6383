use nalgebra::Vector3;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::quadrature::composite_gauss_legendre;

/// Free-particle identity <k'|grad_k|k> = Delta_{k',k} / (e_k - e_k') in a periodic box.
#[derive(Debug, Clone, Serialize)]
pub struct FreeParticleReport {
    pub dimension: usize,
    pub box_length: f64,
    pub k: Vec<f64>,
    pub k_prime: Vec<f64>,
    /// i int r e^{i(k-k').r} dr / L^d.
    pub direct: Vec<[f64; 2]>,
    /// Delta from the volume integrand, divided by the energy difference.
    pub via_delta: Vec<[f64; 2]>,
    /// Delta from the face integrals of the generalized current, divided likewise.
    pub via_surface: Vec<[f64; 2]>,
    /// 1 / (k - k') along the single axis where k and k' differ, otherwise zero.
    pub expected: Vec<[f64; 2]>,
    pub first_term: f64,
    pub max_relative_difference: f64,
    pub passed: bool,
}

const FIRST_TERM_TOL: f64 = 1e-12;
const AGREEMENT_TOL: f64 = 1e-10;

// int_0^L x^p e^{iqx} dx / L for p = 0, 1 by composite Gauss-Legendre.
fn axis_moments(q: f64, length: f64) -> Result<[Complex64; 2]> {
    let panels = ((q.abs() * length) / std::f64::consts::PI).ceil() as usize + 2;
    let nodes = composite_gauss_legendre(panels, 16)?;
    let mut m = [Complex64::default(); 2];
    for (s, w) in nodes {
        let x = s * length;
        let e = Complex64::from_polar(w, q * x);
        m[0] += e;
        m[1] += e * x;
    }
    Ok(m)
}

fn to_pairs(v: &Vector3<Complex64>, dim: usize) -> Vec<[f64; 2]> {
    (0..dim).map(|i| [v[i].re, v[i].im]).collect()
}

pub fn free_particle_identity_check(
    dimension: usize,
    box_length: f64,
    k: &[f64],
    k_prime: &[f64],
) -> Result<FreeParticleReport> {
    if dimension != 1 && dimension != 3 {
        return Err(Error::InvalidArgument(
            "the free-particle check runs in 1 or 3 dimensions".into(),
        ));
    }
    if k.len() != dimension || k_prime.len() != dimension {
        return Err(Error::InvalidArgument(format!(
            "wavevectors must have {dimension} components"
        )));
    }
    if !(box_length.is_finite() && box_length > 0.0) {
        return Err(Error::InvalidArgument("box length must be positive".into()));
    }
    let dk = 2.0 * std::f64::consts::PI / box_length;
    for &c in k.iter().chain(k_prime) {
        let n = c / dk;
        if !c.is_finite() || (n - n.round()).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "component {c} is not on the box reciprocal grid 2 pi n / {box_length}"
            )));
        }
    }
    if k == k_prime {
        return Err(Error::InvalidArgument("k = k' has no energy denominator".into()));
    }
    let norm_sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
    let (kk, kp) = (norm_sq(k), norm_sq(k_prime));
    if (kk - kp).abs() <= 1e-12 * kk.max(kp).max(1.0) {
        return Err(Error::InvalidArgument(
            "|k| = |k'| gives degenerate free-particle energies".into(),
        ));
    }
    let q: Vec<f64> = k.iter().zip(k_prime).map(|(a, b)| a - b).collect();
    let moments = q
        .iter()
        .map(|&ql| axis_moments(ql, box_length))
        .collect::<Result<Vec<_>>>()?;
    let i = Complex64::i();
    let (d, l) = (dimension, box_length);

    // int r_j e^{iq.r} / L^d and int e^{iq.r} / L^d factorise over axes.
    let overlap: Complex64 = moments.iter().map(|m| m[0]).product();
    let mut r_moment = Vector3::<Complex64>::zeros();
    for j in 0..d {
        r_moment[j] = (0..d).map(|a| moments[a][usize::from(a == j)]).product();
    }
    let direct = r_moment * i;

    let de = 0.5 * (kk - kp);
    let kv = Vector3::from_fn(|a, _| if a < d { k[a] } else { 0.0 });
    let first = kv.map(|c| overlap * c);
    let second = r_moment * (i * (kk - kp));
    let delta_volume = (first * Complex64::new(2.0, 0.0) + second) * Complex64::new(0.5, 0.0);
    let via_delta = delta_volume / Complex64::new(de, 0.0);

    // Faces: T_ij = e^{iq.r} [(k+k')_i r_j - i delta_ij] / (2 L^d), integrated over x_i = L minus x_i = 0.
    let mut delta_surface = Vector3::<Complex64>::zeros();
    for j in 0..d {
        for a in 0..d {
            let edge_phase = Complex64::from_polar(1.0, q[a] * l) - 1.0;
            // product of the other axes' moments, with r_j carried if j != a
            let rest: Complex64 = (0..d)
                .filter(|&b| b != a)
                .map(|b| moments[b][usize::from(b == j)] * l)
                .product();
            let ks = k[a] + k_prime[a];
            let term = if a == j {
                // r_j = L on the upper face, 0 on the lower face
                let upper = Complex64::from_polar(1.0, q[a] * l);
                ks * l * upper * rest - i * edge_phase * rest
            } else {
                ks * edge_phase * rest
            };
            delta_surface[j] += term * 0.5 / l.powi(d as i32);
        }
    }
    let via_surface = delta_surface / Complex64::new(de, 0.0);

    // Nonzero only when k - k' lies along a single axis.
    let expected = Vector3::from_fn(|a, _| {
        if a < d && q[a] != 0.0 && (0..d).all(|b| b == a || q[b] == 0.0) {
            Complex64::new(1.0 / q[a], 0.0)
        } else {
            Complex64::default()
        }
    });
    // Relative to the vector norm so that vanishing components compare sensibly.
    let norm = crate::elements::vec_norm(&expected);
    let scale = if norm > 0.0 { norm } else { 1.0 };
    let diff = |a: &Vector3<Complex64>, b: &Vector3<Complex64>| {
        (0..d).map(|c| (a[c] - b[c]).norm()).fold(0.0, f64::max) / scale
    };
    let max_rel = [
        diff(&direct, &via_delta),
        diff(&direct, &via_surface),
        diff(&direct, &expected),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    let first_term = crate::elements::vec_norm(&first);
    Ok(FreeParticleReport {
        dimension,
        box_length,
        k: k.to_vec(),
        k_prime: k_prime.to_vec(),
        direct: to_pairs(&direct, d),
        via_delta: to_pairs(&via_delta, d),
        via_surface: to_pairs(&via_surface, d),
        expected: to_pairs(&expected, d),
        first_term,
        max_relative_difference: max_rel,
        passed: first_term < FIRST_TERM_TOL && max_rel < AGREEMENT_TOL,
    })
}
