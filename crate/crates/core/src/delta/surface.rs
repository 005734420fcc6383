use nalgebra::{DMatrix, Vector3};
use num_complex::Complex64;

use super::{DeltaBlock, Formulation, Route};
use crate::elements::{StateDerivative, VectorBlock};
use crate::error::{Error, Result};
use crate::wave;

/// Boundary evaluation of Delta on a 1D cell, with its parts reported separately.
#[derive(Debug, Clone)]
pub struct SurfaceReport {
    pub block: DeltaBlock,
    /// Share of the boundary expression carried by d u / d k alone.
    pub dku_contribution: DMatrix<Complex64>,
    /// For H(k): the three boundary terms [u*' w], [-u* w'], [-2ik u* w] (each halved).
    pub terms: Option<[DMatrix<Complex64>; 3]>,
}

struct Endpoint {
    x: f64,
    u: DMatrix<Complex64>,
    du: DMatrix<Complex64>,
    w: DMatrix<Complex64>,
    dw: DMatrix<Complex64>,
}

/// Evaluates the divergence-theorem boundary expression at x = 0 and x = L
/// and returns the difference.
pub fn delta_surface_term(deriv: &StateDerivative, formulation: Formulation) -> Result<SurfaceReport> {
    let sol = &deriv.center;
    if sol.dim() != 1 {
        return Err(Error::InvalidArgument(
            "the surface route is available in one dimension only".into(),
        ));
    }
    let sign = deriv.direction[0];
    if (sign.abs() - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidArgument("stencil must run along the chain".into()));
    }
    let basis = &sol.basis;
    let length = basis.lattice().primitive()[0][0];
    let w_coeffs = &deriv.dcoeffs * Complex64::new(sign, 0.0);
    let ends: Vec<Endpoint> = [0.0, length]
        .iter()
        .map(|&x| {
            let phases = wave::phase_matrix(basis, &[Vector3::new(x, 0.0, 0.0)]);
            Endpoint {
                x,
                u: wave::evaluate(&phases, basis, &sol.coeffs, wave::identity),
                du: wave::evaluate(&phases, basis, &sol.coeffs, wave::gradient(0)),
                w: wave::evaluate(&phases, basis, &w_coeffs, wave::identity),
                dw: wave::evaluate(&phases, basis, &w_coeffs, wave::gradient(0)),
            }
        })
        .collect();
    let k = sol.k[0];
    let n = sol.n_bands();
    let i = Complex64::i();
    let half = Complex64::new(0.5, 0.0);

    let mut total = DMatrix::zeros(n, n);
    let mut dku = DMatrix::zeros(n, n);
    let mut terms = [DMatrix::zeros(n, n), DMatrix::zeros(n, n), DMatrix::zeros(n, n)];
    for (idx, e) in ends.iter().enumerate() {
        let s = if idx == 0 { -1.0 } else { 1.0 };
        let x = Complex64::new(e.x, 0.0);
        let bloch = Complex64::from_polar(1.0, k * e.x);
        for a in 0..n {
            for b in 0..n {
                let (ua, dua) = (e.u[(0, a)], e.du[(0, a)]);
                let (ub, dub) = (e.u[(0, b)], e.du[(0, b)]);
                let (wb, dwb) = (e.w[(0, b)], e.dw[(0, b)]);
                match formulation {
                    Formulation::H => {
                        let f_a = bloch * ua;
                        let df_a = bloch * (dua + i * k * ua);
                        let dkf_b = bloch * (i * x * ub + wb);
                        let dxdkf_b = bloch * (i * k * (i * x * ub + wb) + i * ub + i * x * dub + dwb);
                        let value = half * (df_a.conj() * dkf_b - f_a.conj() * dxdkf_b);
                        let w_only = half * (df_a.conj() * bloch * wb - f_a.conj() * bloch * (i * k * wb + dwb));
                        total[(a, b)] += value * s;
                        dku[(a, b)] += w_only * s;
                    }
                    Formulation::Hk => {
                        let t1 = half * dua.conj() * wb;
                        let t2 = -half * ua.conj() * dwb;
                        let t3 = -i * k * ua.conj() * wb;
                        terms[0][(a, b)] += t1 * s;
                        terms[1][(a, b)] += t2 * s;
                        terms[2][(a, b)] += t3 * s;
                        total[(a, b)] += (t1 + t2 + t3) * s;
                        dku[(a, b)] += (t1 + t2 + t3) * s;
                    }
                }
            }
        }
    }
    let route = match formulation {
        Formulation::H => Route::Surface,
        Formulation::Hk => Route::Boundary,
    };
    Ok(SurfaceReport {
        block: DeltaBlock {
            k: sol.k,
            formulation,
            route,
            values: VectorBlock::new(vec![total]),
            valid: vec![vec![true; n]; n],
        },
        dku_contribution: dku,
        terms: (formulation == Formulation::Hk).then_some(terms),
    })
}
