//! Real-space evaluation of plane-wave expansions.

use nalgebra::{DMatrix, Vector3};
use num_complex::Complex64;

use crate::model::PlaneWaveBasis;

/// Rows are points, columns basis vectors: e^{iG.r} / sqrt(V_cell).
pub fn phase_matrix(basis: &PlaneWaveBasis, points: &[Vector3<f64>]) -> DMatrix<Complex64> {
    let norm = 1.0 / basis.lattice().volume().sqrt();
    let g = basis.gvecs();
    DMatrix::from_fn(points.len(), g.len(), |p, j| {
        Complex64::from_polar(norm, g[j].dot(&points[p]))
    })
}

/// sum_G f(G) C[G][n] e^{iG.r} / sqrt(V) at each point (rows) for each column of `coeffs`.
///
/// `f = |_| 1` gives u itself; `f = |g| i g_x` gives du/dx, and so on.
pub fn evaluate(
    phases: &DMatrix<Complex64>,
    basis: &PlaneWaveBasis,
    coeffs: &DMatrix<Complex64>,
    f: impl Fn(&Vector3<f64>) -> Complex64,
) -> DMatrix<Complex64> {
    let mut scaled = coeffs.clone();
    for (j, g) in basis.gvecs().iter().enumerate() {
        let s = f(g);
        scaled.row_mut(j).iter_mut().for_each(|c| *c *= s);
    }
    phases * scaled
}

pub fn identity(_: &Vector3<f64>) -> Complex64 {
    Complex64::new(1.0, 0.0)
}

/// Factor for the gradient component along `axis`.
pub fn gradient(axis: usize) -> impl Fn(&Vector3<f64>) -> Complex64 {
    move |g| Complex64::new(0.0, g[axis])
}

/// Factor for the mixed second derivative d_a d_b.
pub fn hessian(a: usize, b: usize) -> impl Fn(&Vector3<f64>) -> Complex64 {
    move |g| Complex64::new(-g[a] * g[b], 0.0)
}
