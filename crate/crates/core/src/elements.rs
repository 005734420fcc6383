//! Momentum, unit-cell position and k-derivative matrix elements between bands.

use nalgebra::{DMatrix, Vector3};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::RealGrid;
use crate::solver::{check_wavevector, fix_gauge, BlochModel, BlochSolution, Gauge};
use crate::wave;

/// A matrix of vectors, stored as one band x band matrix per Cartesian axis.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorBlock {
    comps: Vec<DMatrix<Complex64>>,
}

impl VectorBlock {
    pub fn new(comps: Vec<DMatrix<Complex64>>) -> Self {
        assert!(!comps.is_empty() && comps.len() <= 3);
        let shape = comps[0].shape();
        assert!(comps.iter().all(|c| c.shape() == shape));
        Self { comps }
    }

    pub fn zeros(dim: usize, n: usize) -> Self {
        Self::new(vec![DMatrix::zeros(n, n); dim])
    }

    pub fn dim(&self) -> usize {
        self.comps.len()
    }

    pub fn n_bands(&self) -> usize {
        self.comps[0].nrows()
    }

    pub fn component(&self, axis: usize) -> &DMatrix<Complex64> {
        &self.comps[axis]
    }

    pub fn components(&self) -> &[DMatrix<Complex64>] {
        &self.comps
    }

    pub fn components_mut(&mut self) -> &mut [DMatrix<Complex64>] {
        &mut self.comps
    }

    /// Entry (row, col) padded to three components.
    pub fn get(&self, row: usize, col: usize) -> Vector3<Complex64> {
        let mut v = Vector3::zeros();
        for (i, c) in self.comps.iter().enumerate() {
            v[i] = c[(row, col)];
        }
        v
    }

    pub fn set(&mut self, row: usize, col: usize, v: &Vector3<Complex64>) {
        for (i, c) in self.comps.iter_mut().enumerate() {
            c[(row, col)] = v[i];
        }
    }

    /// max |X[a][b] - conj(X[b][a])| over all pairs, optionally skipping the diagonal.
    pub fn hermiticity_residual(&self, include_diagonal: bool) -> f64 {
        self.symmetry_residual(1.0, include_diagonal)
    }

    /// max |X[a][b] + conj(X[b][a])| over the off-diagonal pairs.
    pub fn anti_hermiticity_residual(&self) -> f64 {
        self.symmetry_residual(-1.0, false)
    }

    fn symmetry_residual(&self, sign: f64, include_diagonal: bool) -> f64 {
        let n = self.n_bands();
        let mut worst: f64 = 0.0;
        for c in &self.comps {
            for a in 0..n {
                for b in 0..n {
                    if a == b && !include_diagonal {
                        continue;
                    }
                    worst = worst.max((c[(a, b)] - c[(b, a)].conj() * sign).norm());
                }
            }
        }
        worst
    }

    pub fn max_norm(&self) -> f64 {
        let n = self.n_bands();
        let mut worst: f64 = 0.0;
        for a in 0..n {
            for b in 0..n {
                worst = worst.max(vec_norm(&self.get(a, b)));
            }
        }
        worst
    }

    /// The entry-wise map X[a][b] -> f(a, b) X[a][b].
    pub fn scaled(&self, f: impl Fn(usize, usize) -> Complex64) -> Self {
        let mut out = self.clone();
        for c in &mut out.comps {
            for a in 0..c.nrows() {
                for b in 0..c.ncols() {
                    c[(a, b)] *= f(a, b);
                }
            }
        }
        out
    }
}

pub fn vec_norm(v: &Vector3<Complex64>) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

/// Momentum, position and optional k-derivative blocks at one k.
#[derive(Debug, Clone)]
pub struct MatrixElementBlock {
    pub k: Vector3<f64>,
    pub n_bands: usize,
    pub p: VectorBlock,
    pub r: VectorBlock,
    pub dku: Option<VectorBlock>,
}

impl MatrixElementBlock {
    pub fn new(sol: &BlochSolution) -> Self {
        Self {
            k: sol.k,
            n_bands: sol.n_bands(),
            p: momentum_matrix(sol),
            r: position_matrix(sol),
            dku: None,
        }
    }
}

/// P[n'][n] = sum_G conj(C[G][n']) (k+G) C[G][n].
pub fn momentum_matrix(sol: &BlochSolution) -> VectorBlock {
    let c = &sol.coeffs;
    let ch = c.adjoint();
    let comps = (0..sol.dim())
        .map(|i| {
            let mut scaled = c.clone();
            for (j, g) in sol.basis.gvecs().iter().enumerate() {
                let f = sol.k[i] + g[i];
                scaled.row_mut(j).iter_mut().for_each(|x| *x *= f);
            }
            &ch * scaled
        })
        .collect();
    VectorBlock::new(comps)
}

/// Unit-cell position elements int_cell r conj(u_n') u_n, origin at the cell corner,
/// from the analytic plane-wave moments.
pub fn position_matrix(sol: &BlochSolution) -> VectorBlock {
    let ch = sol.coeffs.adjoint();
    let comps = sol
        .basis
        .position_moments()
        .iter()
        .map(|m| &ch * m * &sol.coeffs)
        .collect();
    VectorBlock::new(comps)
}

/// Points per axis needed by [`position_matrix_unit_cell`].
pub fn position_grid_resolution(sol: &BlochSolution) -> usize {
    4 * sol.basis.max_miller() as usize + 2
}

/// Unit-cell position elements by quadrature of r conj(u_n') u_n on a real-space grid.
///
/// The periodic sawtooth weights integrate r against every product of two
/// basis functions exactly once the grid is fine enough.
pub fn position_matrix_unit_cell(sol: &BlochSolution, grid: &RealGrid) -> Result<VectorBlock> {
    if grid.lattice() != sol.basis.lattice() {
        return Err(Error::LatticeMismatch);
    }
    let required = position_grid_resolution(sol);
    if grid.n_per_dim() < required {
        return Err(Error::UnderResolvedGrid {
            given: grid.n_per_dim(),
            required,
        });
    }
    let dim = sol.dim();
    let q_max = 2 * sol.basis.max_miller();
    let zeta = |s: f64| {
        0.5 - (1..=q_max)
            .map(|q| {
                let q = f64::from(q);
                (2.0 * std::f64::consts::PI * q * s).sin() / (std::f64::consts::PI * q)
            })
            .sum::<f64>()
    };
    let phases = wave::phase_matrix(&sol.basis, grid.points());
    let u = wave::evaluate(&phases, &sol.basis, &sol.coeffs, wave::identity);
    let prim = grid.lattice().primitive();
    let comps = (0..dim)
        .map(|i| {
            let mut weighted = u.clone();
            for (p, s) in grid.fractional().iter().enumerate() {
                let w: f64 = (0..dim).map(|l| prim[l][i] * zeta(s[l])).sum::<f64>() * grid.weight();
                weighted.row_mut(p).iter_mut().for_each(|x| *x *= w);
            }
            u.adjoint() * weighted
        })
        .collect();
    Ok(VectorBlock::new(comps))
}

/// Alignment of the displaced stencil solutions before differencing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Alignment {
    ParallelTransport,
    AsGiven,
}

/// Centered finite-difference derivative of the cell functions along one direction.
#[derive(Debug, Clone)]
pub struct StateDerivative {
    pub center: BlochSolution,
    /// Unit vector of the stencil direction.
    pub direction: Vector3<f64>,
    /// |delta k|.
    pub step: f64,
    /// Plane-wave coefficients of d u_n / d k along `direction` (basis x bands).
    pub dcoeffs: DMatrix<Complex64>,
    /// <u_n'(k)| d u_n / dk> along `direction`.
    pub dku: DMatrix<Complex64>,
}

pub fn dk_derivative_states(
    minus: &BlochSolution,
    center: &BlochSolution,
    plus: &BlochSolution,
    dk: &Vector3<f64>,
) -> Result<StateDerivative> {
    dk_derivative_states_with(minus, center, plus, dk, Alignment::ParallelTransport)
}

pub fn dk_derivative_states_with(
    minus: &BlochSolution,
    center: &BlochSolution,
    plus: &BlochSolution,
    dk: &Vector3<f64>,
    alignment: Alignment,
) -> Result<StateDerivative> {
    let step = dk.norm();
    if step == 0.0 || !step.is_finite() {
        return Err(Error::InvalidArgument("stencil step must be nonzero and finite".into()));
    }
    let tol = 1e-9 * (1.0 + center.k.norm());
    if ((plus.k - center.k) - dk).norm() > tol || ((center.k - minus.k) - dk).norm() > tol {
        return Err(Error::InvalidArgument(
            "stencil solutions are not spaced by the given step".into(),
        ));
    }
    let (m, p) = match alignment {
        Alignment::ParallelTransport => (
            fix_gauge(minus, Gauge::ParallelTransport(center))?,
            fix_gauge(plus, Gauge::ParallelTransport(center))?,
        ),
        Alignment::AsGiven => (minus.clone(), plus.clone()),
    };
    let dcoeffs = (&p.coeffs - &m.coeffs) / Complex64::new(2.0 * step, 0.0);
    let dku = center.coeffs.adjoint() * &dcoeffs;
    Ok(StateDerivative {
        center: center.clone(),
        direction: dk / step,
        step,
        dcoeffs,
        dku,
    })
}

impl StateDerivative {
    /// Solves the two displaced points around `center` along `dk`.
    pub fn compute(model: &BlochModel, center: &BlochSolution, dk: &Vector3<f64>) -> Result<Self> {
        check_wavevector(dk, model.dim())?;
        let n = center.n_bands();
        let minus = model.solve(&(center.k - dk), n)?;
        let plus = model.solve(&(center.k + dk), n)?;
        dk_derivative_states(&minus, center, &plus, dk)
    }
}

/// Derivatives along every Cartesian axis with equal step.
#[derive(Debug, Clone)]
pub struct GradientStates {
    pub axes: Vec<StateDerivative>,
}

impl GradientStates {
    pub fn compute(model: &BlochModel, center: &BlochSolution, step: f64) -> Result<Self> {
        let axes = (0..model.dim())
            .map(|i| {
                let mut dk = Vector3::zeros();
                dk[i] = step;
                StateDerivative::compute(model, center, &dk)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { axes })
    }

    /// DkU[n'][n] = <u_n'|grad_k u_n>.
    pub fn dku(&self) -> VectorBlock {
        VectorBlock::new(self.axes.iter().map(|a| a.dku.clone()).collect())
    }
}

/// Default finite-difference step 1e-4 |b_1|.
pub fn default_dk(model: &BlochModel) -> f64 {
    1e-4 * model.basis().lattice().reciprocal()[0].norm()
}

/// A_n = i <u_n|grad_k u_n>, with the magnitude of its imaginary part.
pub fn berry_connection(dku: &VectorBlock, n: usize) -> (Vector3<f64>, f64) {
    let d = dku.get(n, n);
    let a = d.map(|c| c * Complex64::new(0.0, 1.0));
    let imag = a.iter().map(|c| c.im * c.im).sum::<f64>().sqrt();
    (a.map(|c| c.re), imag)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        build_plane_wave_basis, potential_from_fourier, sample_unit_cell_grid, CrystalLattice, PeriodicPotential,
    };
    use std::f64::consts::PI;

    fn mathieu(v0: f64, e_cut: f64) -> BlochModel {
        let lat = CrystalLattice::chain(1.0).unwrap();
        let basis = build_plane_wave_basis(&lat, e_cut).unwrap();
        let pot = potential_from_fourier(&lat, &[(vec![1], Complex64::new(v0, 0.0))]).unwrap();
        BlochModel::new(basis, pot).unwrap()
    }

    fn free2d(e_cut: f64) -> BlochModel {
        let lat = CrystalLattice::new(&[vec![1.0, 0.0], vec![0.4, 0.9]]).unwrap();
        let basis = build_plane_wave_basis(&lat, e_cut).unwrap();
        BlochModel::new(basis, PeriodicPotential::free(&lat)).unwrap()
    }

    fn kx(x: f64) -> Vector3<f64> {
        Vector3::new(x, 0.0, 0.0)
    }

    fn band_of(model: &BlochModel, sol: &BlochSolution, m: i32) -> usize {
        let idx = model.basis().index_of(&[m, 0, 0]).unwrap();
        (0..sol.n_bands()).find(|&n| sol.coeffs[(idx, n)].norm() > 0.5).unwrap()
    }

    #[test]
    fn free_momentum() {
        let model = mathieu(0.0, 200.0);
        let sol = model.solve(&kx(0.3), 5).unwrap();
        let p = momentum_matrix(&sol);
        let n = band_of(&model, &sol, 1);
        assert!((p.get(n, n)[0].re - (0.3 + 2.0 * PI)).abs() < 1e-12);
        assert!((p.get(n, n)[0].re - 6.5832).abs() < 1e-4);
        for a in 0..5 {
            for b in 0..5 {
                if a != b {
                    assert_eq!(p.get(a, b)[0], Complex64::default());
                }
            }
        }
    }

    #[test]
    fn zone_edge_momentum_element() {
        let model = mathieu(0.05, 200.0);
        let sol = model.solve(&kx(PI), 2).unwrap();
        let p = momentum_matrix(&sol);
        let m = p.get(0, 1)[0].norm();
        assert!((m - PI).abs() < 0.02 * PI, "|P01| = {m}");
        assert!(p.hermiticity_residual(true) < 1e-10);
    }

    #[test]
    fn free_position_elements() {
        let model = mathieu(0.0, 200.0);
        let sol = model.solve(&kx(0.0), 5).unwrap();
        let r = position_matrix(&sol);
        let a = band_of(&model, &sol, 0);
        let b = band_of(&model, &sol, 1);
        assert!((r.get(a, a)[0] - Complex64::new(0.5, 0.0)).norm() < 1e-14);
        // R[a][b] with G_b - G_a = 2 pi
        let expect = Complex64::new(0.0, -1.0 / (2.0 * PI));
        assert!((r.get(a, b)[0] - expect).norm() < 1e-14);
        assert!((r.get(a, b)[0].im + 0.159155).abs() < 1e-6);
        assert!(r.hermiticity_residual(false) < 1e-10);
    }

    #[test]
    fn grid_position_matches_moments() {
        let model = mathieu(0.05, 400.0);
        let sol = model.solve(&kx(0.3 * PI), 4).unwrap();
        let grid = sample_unit_cell_grid(model.basis(), position_grid_resolution(&sol)).unwrap();
        let rg = position_matrix_unit_cell(&sol, &grid).unwrap();
        let ra = position_matrix(&sol);
        for a in 0..4 {
            for b in 0..4 {
                assert!((rg.get(a, b)[0] - ra.get(a, b)[0]).norm() < 1e-12);
            }
        }
        let coarse = sample_unit_cell_grid(model.basis(), minimal_resolution_for(&sol)).unwrap();
        assert!(matches!(
            position_matrix_unit_cell(&sol, &coarse),
            Err(Error::UnderResolvedGrid { .. })
        ));
    }

    fn minimal_resolution_for(sol: &BlochSolution) -> usize {
        crate::model::minimal_resolution(&sol.basis)
    }

    #[test]
    fn grid_position_oblique_2d() {
        let lat = CrystalLattice::new(&[vec![1.0, 0.0], vec![0.4, 0.9]]).unwrap();
        let basis = build_plane_wave_basis(&lat, 150.0).unwrap();
        let pot = potential_from_fourier(
            &lat,
            &[
                (vec![1, 0], Complex64::new(0.05, 0.0)),
                (vec![1, 1], Complex64::new(0.04, 0.03)),
            ],
        )
        .unwrap();
        let model = BlochModel::new(basis, pot).unwrap();
        let sol = model.solve(&Vector3::new(0.4, -0.7, 0.0), 4).unwrap();
        let grid = sample_unit_cell_grid(model.basis(), position_grid_resolution(&sol)).unwrap();
        let rg = position_matrix_unit_cell(&sol, &grid).unwrap();
        let ra = position_matrix(&sol);
        for i in 0..2 {
            assert!(crate::solver::max_abs(&(rg.component(i) - ra.component(i))) < 1e-12);
        }
    }

    #[test]
    fn free_dku_vanishes() {
        let model = free2d(150.0);
        let sol = model.solve(&Vector3::new(0.3, 0.2, 0.0), 3).unwrap();
        let d = GradientStates::compute(&model, &sol, default_dk(&model)).unwrap().dku();
        assert!(d.max_norm() < 1e-10);
        for n in 0..3 {
            let (a, _) = berry_connection(&d, n);
            assert!(a.norm() < 1e-10);
        }
    }

    fn dku01(model: &BlochModel, k: f64, h: f64) -> Complex64 {
        let c = model.solve(&kx(k), 3).unwrap();
        StateDerivative::compute(model, &c, &kx(h)).unwrap().dku[(0, 1)]
    }

    #[test]
    fn second_order_convergence() {
        let model = mathieu(0.05, 400.0);
        let k = 0.3 * PI;
        let h = 0.2;
        let d1 = dku01(&model, k, h);
        let d2 = dku01(&model, k, h / 2.0);
        let d3 = dku01(&model, k, h / 4.0);
        let rich = (d3 * 4.0 - d2) / 3.0;
        let ratio = (d1 - rich).norm() / (d2 - rich).norm();
        assert!((ratio - 4.0).abs() < 0.4, "ratio = {ratio}");
    }

    #[test]
    fn anti_hermitian_offdiagonal_and_real_connection() {
        let model = mathieu(0.05, 400.0);
        let sol = model.solve(&kx(0.3 * PI), 4).unwrap();
        let dk = default_dk(&model);
        let d = GradientStates::compute(&model, &sol, dk).unwrap().dku();
        let scale = d.max_norm();
        assert!(d.anti_hermiticity_residual() < 10.0 * dk * dk * scale.max(1.0));
        for n in 0..4 {
            let (_, imag) = berry_connection(&d, n);
            assert!(imag < 1e-8);
        }
    }

    #[test]
    fn linear_gauge_shifts_connection() {
        let model = mathieu(0.05, 400.0);
        let k0 = 0.3 * PI;
        let h = 1e-3;
        let s = 0.37;
        let twisted = |k: f64| {
            let sol = model.solve(&kx(k), 3).unwrap();
            sol.with_phases(&[s * k; 3])
        };
        let grads = |a: Alignment| {
            dk_derivative_states_with(&twisted(k0 - h), &twisted(k0), &twisted(k0 + h), &kx(h), a).unwrap()
        };
        let plain = {
            let c = model.solve(&kx(k0), 3).unwrap();
            StateDerivative::compute(&model, &c, &kx(h)).unwrap()
        };
        let shifted = grads(Alignment::AsGiven);
        for n in 0..3 {
            let a0 = (plain.dku[(n, n)] * Complex64::i()).re;
            let a1 = (shifted.dku[(n, n)] * Complex64::i()).re;
            assert!((a1 - a0 + s).abs() < 1e-6, "{a0} {a1}");
        }
        // parallel transport removes the imposed gauge gradient
        let aligned = grads(Alignment::ParallelTransport);
        for n in 0..3 {
            assert!(aligned.dku[(n, n)].norm() < 1e-6);
        }
    }

    #[test]
    fn stencil_spacing_checked() {
        let model = mathieu(0.05, 200.0);
        let a = model.solve(&kx(0.0), 2).unwrap();
        let b = model.solve(&kx(0.1), 2).unwrap();
        let c = model.solve(&kx(0.3), 2).unwrap();
        assert!(dk_derivative_states(&a, &b, &c, &kx(0.1)).is_err());
    }
}
