use nalgebra::{DMatrix, Matrix3, Vector3};
use num_complex::Complex64;

use super::Formulation;
use crate::elements::GradientStates;
use crate::error::{Error, Result};
use crate::quadrature::CellQuadrature;
use crate::wave;

pub type CurrentFormulation = Formulation;

/// J_ij(r) for one band pair: spatial index i (row), parameter index j (column),
/// with its divergence sum_i d_i J_ij, sampled on a cell quadrature.
#[derive(Debug, Clone)]
pub struct GeneralizedCurrent {
    pub formulation: Formulation,
    pub row: usize,
    pub col: usize,
    pub dim: usize,
    pub quadrature: CellQuadrature,
    pub current: Vec<Matrix3<Complex64>>,
    pub divergence: Vec<Vector3<Complex64>>,
}

impl GeneralizedCurrent {
    /// Quadrature of the divergence over the cell.
    pub fn divergence_integral(&self) -> Vector3<Complex64> {
        let mut acc = Vector3::zeros();
        for (d, &w) in self.divergence.iter().zip(&self.quadrature.weights) {
            acc += d * Complex64::new(w, 0.0);
        }
        acc
    }

    pub fn max_abs(&self) -> f64 {
        self.current
            .iter()
            .flat_map(|m| m.iter().map(|c| c.norm()))
            .fold(0.0, f64::max)
    }

    /// Fraction of the spectral weight of J on a uniform n^d grid that lies outside
    /// |q_l| <= `support` along every axis.
    pub fn band_limit_leakage(&self, n: usize, support: i32) -> Result<f64> {
        let dim = self.dim;
        if self.current.len() != n.pow(dim as u32) {
            return Err(Error::InvalidArgument(
                "band-limit check needs the uniform grid quadrature".into(),
            ));
        }
        let mut inside = 0.0;
        let mut outside = 0.0;
        for a in 0..dim {
            for b in 0..dim {
                let field: Vec<Complex64> = self.current.iter().map(|m| m[(a, b)]).collect();
                let spectrum = dft(&field, n, dim);
                for (idx, c) in spectrum.iter().enumerate() {
                    let mut rem = idx;
                    let mut within = true;
                    for _ in 0..dim {
                        let q = rem % n;
                        rem /= n;
                        let signed = if q > n / 2 { q as i64 - n as i64 } else { q as i64 };
                        within &= signed.unsigned_abs() <= support as u64;
                    }
                    if within {
                        inside += c.norm_sqr();
                    } else {
                        outside += c.norm_sqr();
                    }
                }
            }
        }
        let total = inside + outside;
        Ok(if total > 0.0 { (outside / total).sqrt() } else { 0.0 })
    }
}

// Separable DFT of a row-major n^dim array (last axis fastest).
fn dft(data: &[Complex64], n: usize, dim: usize) -> Vec<Complex64> {
    let twiddle: Vec<Complex64> = (0..n)
        .map(|j| Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * j as f64 / n as f64))
        .collect();
    let mut out = data.to_vec();
    for axis in 0..dim {
        let stride = n.pow((dim - 1 - axis) as u32);
        let mut next = vec![Complex64::default(); out.len()];
        for start in 0..out.len() {
            if !(start / stride).is_multiple_of(n) {
                continue;
            }
            for q in 0..n {
                let mut acc = Complex64::default();
                for j in 0..n {
                    acc += out[start + j * stride] * twiddle[(q * j) % n];
                }
                next[start + q * stride] = acc / n as f64;
            }
        }
        out = next;
    }
    out
}

/// The generalized current density of the correction term for the pair (row, col).
///
/// For H the fields are full Bloch functions f = u e^{ik.r} with A = 0; for H(k)
/// they are the cell functions u with the constant vector potential A = k.
pub fn generalized_current(
    grads: &GradientStates,
    row: usize,
    col: usize,
    formulation: Formulation,
    quadrature: &CellQuadrature,
) -> Result<GeneralizedCurrent> {
    let dim = grads.axes.len();
    let Some(first) = grads.axes.first() else {
        return Err(Error::InvalidArgument("no derivative axes".into()));
    };
    let sol = &first.center;
    if dim != sol.dim() {
        return Err(Error::InvalidArgument("one derivative per axis is required".into()));
    }
    for (j, ax) in grads.axes.iter().enumerate() {
        if (ax.direction[j] - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(
                "derivatives must run along the positive Cartesian axes".into(),
            ));
        }
    }
    let n = sol.n_bands();
    if row >= n || col >= n {
        return Err(Error::InvalidArgument("band index out of range".into()));
    }
    let basis = &sol.basis;
    let k = sol.k;
    let phases = wave::phase_matrix(basis, &quadrature.points);
    let pick = |m: &DMatrix<Complex64>, c: usize| m.columns(c, 1).into_owned();
    let c_row = pick(&sol.coeffs, row);
    let c_col = pick(&sol.coeffs, col);
    let ws: Vec<DMatrix<Complex64>> = grads.axes.iter().map(|a| pick(&a.dcoeffs, col)).collect();
    let i = Complex64::i();
    let half = Complex64::new(0.5, 0.0);

    // Derivatives act on e^{ik.r} u for H and on u for H(k).
    let shift = match formulation {
        Formulation::H => k,
        Formulation::Hk => Vector3::zeros(),
    };
    let ev = |c: &DMatrix<Complex64>, f: &dyn Fn(&Vector3<f64>) -> Complex64| {
        wave::evaluate(&phases, basis, c, |g| f(&(g + shift)))
    };
    let one = |_: &Vector3<f64>| Complex64::new(1.0, 0.0);
    let grad = |a: usize| move |q: &Vector3<f64>| Complex64::new(0.0, q[a]);
    let lap = |q: &Vector3<f64>| Complex64::new(-q.iter().take(dim).map(|x| x * x).sum::<f64>(), 0.0);

    let u_row = ev(&c_row, &one);
    let u_col = ev(&c_col, &one);
    let lap_row = ev(&c_row, &lap);
    let grad_row: Vec<_> = (0..dim).map(|a| ev(&c_row, &grad(a))).collect();
    let grad_col: Vec<_> = (0..dim).map(|a| ev(&c_col, &grad(a))).collect();
    let lap_col = ev(&c_col, &lap);
    let w: Vec<_> = ws.iter().map(|c| ev(c, &one)).collect();
    let grad_w: Vec<Vec<_>> = ws.iter().map(|c| (0..dim).map(|a| ev(c, &grad(a))).collect()).collect();
    let lap_w: Vec<_> = ws.iter().map(|c| ev(c, &lap)).collect();

    let mut current = Vec::with_capacity(quadrature.len());
    let mut divergence = Vec::with_capacity(quadrature.len());
    for p in 0..quadrature.len() {
        let r = quadrature.points[p];
        let bloch = match formulation {
            Formulation::H => Complex64::from_polar(1.0, k.dot(&r)),
            Formulation::Hk => Complex64::new(1.0, 0.0),
        };
        let fa = (bloch * u_row[(p, 0)]).conj();
        let lap_fa = (bloch * lap_row[(p, 0)]).conj();
        let grad_fa: Vec<Complex64> = (0..dim).map(|a| (bloch * grad_row[a][(p, 0)]).conj()).collect();
        let mut jm = Matrix3::zeros();
        let mut div = Vector3::zeros();
        for j in 0..dim {
            let wj = bloch * w[j][(p, 0)];
            match formulation {
                Formulation::H => {
                    let rj = Complex64::new(r[j], 0.0);
                    let fb = bloch * u_col[(p, 0)];
                    // d_kj f = i r_j f + e^{ikr} w_j
                    let dkf = i * rj * fb + wj;
                    for a in 0..dim {
                        let delta = if a == j {
                            Complex64::new(1.0, 0.0)
                        } else {
                            Complex64::default()
                        };
                        let d_a_dkf =
                            i * delta * fb + i * rj * bloch * grad_col[a][(p, 0)] + bloch * grad_w[j][a][(p, 0)];
                        jm[(a, j)] = half * (grad_fa[a] * dkf - fa * d_a_dkf);
                    }
                    let lap_dkf = i * (bloch * grad_col[j][(p, 0)] * 2.0 + rj * bloch * lap_col[(p, 0)])
                        + bloch * lap_w[j][(p, 0)];
                    div[j] = half * (lap_fa * dkf - fa * lap_dkf);
                }
                Formulation::Hk => {
                    let mut kterm = Complex64::default();
                    for a in 0..dim {
                        let ka = Complex64::new(k[a], 0.0);
                        let dwa = grad_w[j][a][(p, 0)];
                        jm[(a, j)] = half * (grad_fa[a] * wj - fa * dwa - i * ka * fa * wj * 2.0);
                        kterm += ka * (grad_fa[a] * wj + fa * dwa);
                    }
                    div[j] = half * (lap_fa * wj - fa * lap_w[j][(p, 0)] - i * kterm * 2.0);
                }
            }
        }
        current.push(jm);
        divergence.push(div);
    }
    Ok(GeneralizedCurrent {
        formulation,
        row,
        col,
        dim,
        quadrature: quadrature.clone(),
        current,
        divergence,
    })
}
