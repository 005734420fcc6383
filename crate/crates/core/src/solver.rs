//! Plane-wave Bloch Hamiltonian, dense diagonalization and gauge fixing.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Vector3};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{PeriodicPotential, PlaneWaveBasis};

/// Overlaps below this magnitude mean the reference band is a different state.
pub const PARALLEL_TRANSPORT_MIN_OVERLAP: f64 = 1e-8;

/// Relative energy window within which two bands count as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-8;

/// Relative tie window when picking the dominant coefficient.
const MAX_REAL_TIE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GaugeTag {
    Unfixed,
    MaxReal,
    ParallelTransport,
}

impl GaugeTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            GaugeTag::Unfixed => "unfixed",
            GaugeTag::MaxReal => "max-real",
            GaugeTag::ParallelTransport => "parallel-transport",
        }
    }
}

/// Phase convention applied by [`fix_gauge`].
#[derive(Debug, Clone, Copy)]
pub enum Gauge<'a> {
    /// Largest-magnitude coefficient of every column real and positive.
    MaxReal,
    /// Overlap with the same band of the reference real and positive.
    ParallelTransport(&'a BlochSolution),
}

/// Eigen-decomposition of H(k): u_{n,k}(r) = sum_G C[G][n] e^{iG.r} / sqrt(V_cell).
#[derive(Debug, Clone)]
pub struct BlochSolution {
    pub basis: Arc<PlaneWaveBasis>,
    pub k: Vector3<f64>,
    pub energies: Vec<f64>,
    pub coeffs: DMatrix<Complex64>,
    pub gauge: GaugeTag,
}

/// Lowest eigenpairs of a Hermitian matrix in ascending order.
#[derive(Debug, Clone)]
pub struct Eigenpairs {
    pub values: Vec<f64>,
    pub vectors: DMatrix<Complex64>,
}

/// A basis together with its potential; the solver context for every k.
#[derive(Debug, Clone)]
pub struct BlochModel {
    basis: Arc<PlaneWaveBasis>,
    potential: PeriodicPotential,
}

impl BlochModel {
    pub fn new(basis: PlaneWaveBasis, potential: PeriodicPotential) -> Result<Self> {
        if basis.lattice() != potential.lattice() {
            return Err(Error::LatticeMismatch);
        }
        Ok(Self {
            basis: Arc::new(basis),
            potential,
        })
    }

    pub fn basis(&self) -> &Arc<PlaneWaveBasis> {
        &self.basis
    }

    pub fn potential(&self) -> &PeriodicPotential {
        &self.potential
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn hamiltonian(&self, k: &Vector3<f64>) -> Result<DMatrix<Complex64>> {
        assemble_hk(&self.basis, &self.potential, k)
    }

    /// Diagonalizes H(k) and applies the max-real gauge.
    pub fn solve(&self, k: &Vector3<f64>, n_bands: usize) -> Result<BlochSolution> {
        let h = self.hamiltonian(k)?;
        let eig = diagonalize(&h, n_bands)?;
        let sol = BlochSolution {
            basis: Arc::clone(&self.basis),
            k: *k,
            energies: eig.values,
            coeffs: eig.vectors,
            gauge: GaugeTag::Unfixed,
        };
        fix_gauge(&sol, Gauge::MaxReal)
    }

    /// Solves at `k` and aligns every band to `reference`.
    pub fn solve_transported(&self, k: &Vector3<f64>, reference: &BlochSolution) -> Result<BlochSolution> {
        let sol = self.solve(k, reference.n_bands())?;
        fix_gauge(&sol, Gauge::ParallelTransport(reference))
    }
}

/// M[G'][G] = |k+G|^2/2 delta_{G'G} + V_{G'-G}.
///
/// Fourier coefficients absent from the potential are zero.
pub fn assemble_hk(basis: &PlaneWaveBasis, pot: &PeriodicPotential, k: &Vector3<f64>) -> Result<DMatrix<Complex64>> {
    if basis.lattice() != pot.lattice() {
        return Err(Error::LatticeMismatch);
    }
    check_wavevector(k, basis.dim())?;
    let n = basis.len();
    let millers = basis.millers();
    let gvecs = basis.gvecs();
    let coeffs = pot.coefficients();
    Ok(DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            let kg = k + gvecs[i];
            Complex64::new(0.5 * kg.norm_squared(), 0.0) + pot.coefficient(&[0, 0, 0])
        } else if coeffs.is_empty() {
            Complex64::default()
        } else {
            let d = [
                millers[i][0] - millers[j][0],
                millers[i][1] - millers[j][1],
                millers[i][2] - millers[j][2],
            ];
            pot.coefficient(&d)
        }
    }))
}

pub(crate) fn check_wavevector(k: &Vector3<f64>, dim: usize) -> Result<()> {
    if k.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument(format!("wavevector {k:?} is not finite")));
    }
    if (dim..3).any(|i| k[i] != 0.0) {
        return Err(Error::InvalidArgument(format!(
            "wavevector {:?} has components beyond dimension {dim}",
            k.as_slice()
        )));
    }
    Ok(())
}

/// Lowest `n_bands` eigenpairs of a Hermitian matrix.
pub fn diagonalize(m: &DMatrix<Complex64>, n_bands: usize) -> Result<Eigenpairs> {
    let dim = m.nrows();
    if m.ncols() != dim {
        return Err(Error::InvalidArgument("matrix is not square".into()));
    }
    if n_bands == 0 || n_bands > dim {
        return Err(Error::InvalidArgument(format!(
            "n_bands = {n_bands} must lie in 1..={dim}"
        )));
    }
    let herm = hermiticity_residual(m);
    let eig = m
        .clone()
        .try_symmetric_eigen(f64::EPSILON, 1000 * dim.max(10))
        .ok_or_else(|| Error::EigenNonConvergence {
            dimension: dim,
            frobenius_norm: m.norm(),
            hermiticity_residual: herm,
        })?;
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    order.truncate(n_bands);
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(dim, n_bands, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(Eigenpairs { values, vectors })
}

pub fn hermiticity_residual(m: &DMatrix<Complex64>) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Applies a phase convention to every band.
pub fn fix_gauge(sol: &BlochSolution, gauge: Gauge<'_>) -> Result<BlochSolution> {
    let mut out = sol.clone();
    match gauge {
        Gauge::MaxReal => {
            for n in 0..out.n_bands() {
                let mut col = out.coeffs.column_mut(n);
                let max = col.iter().map(|c| c.norm()).fold(0.0, f64::max);
                if max == 0.0 {
                    continue;
                }
                let pivot = col
                    .iter()
                    .position(|c| c.norm() >= max * (1.0 - MAX_REAL_TIE))
                    .unwrap_or(0);
                let c = col[pivot];
                let phase = c.conj() / c.norm();
                col.iter_mut().for_each(|x| *x *= phase);
                col[pivot] = Complex64::new(col[pivot].norm(), 0.0);
            }
            out.gauge = GaugeTag::MaxReal;
        }
        Gauge::ParallelTransport(reference) => {
            if reference.n_bands() != out.n_bands() || reference.coeffs.nrows() != out.coeffs.nrows() {
                return Err(Error::InvalidArgument(
                    "reference solution has a different shape".into(),
                ));
            }
            for n in 0..out.n_bands() {
                let overlap = reference.coeffs.column(n).dotc(&out.coeffs.column(n));
                let mag = overlap.norm();
                if mag < PARALLEL_TRANSPORT_MIN_OVERLAP {
                    return Err(Error::BandCrossing { band: n, overlap: mag });
                }
                let phase = overlap.conj() / mag;
                out.coeffs.column_mut(n).iter_mut().for_each(|x| *x *= phase);
            }
            out.gauge = GaugeTag::ParallelTransport;
        }
    }
    Ok(out)
}

impl BlochSolution {
    pub fn n_bands(&self) -> usize {
        self.energies.len()
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    /// Multiplies band n by e^{i phases[n]}.
    pub fn with_phases(&self, phases: &[f64]) -> Self {
        let mut out = self.clone();
        for (n, &beta) in phases.iter().enumerate().take(self.n_bands()) {
            let p = Complex64::from_polar(1.0, beta);
            out.coeffs.column_mut(n).iter_mut().for_each(|x| *x *= p);
        }
        out.gauge = GaugeTag::Unfixed;
        out
    }

    /// max |C^H C - I|.
    pub fn orthonormality_residual(&self) -> f64 {
        let g = self.coeffs.adjoint() * &self.coeffs;
        let mut worst: f64 = 0.0;
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                let t = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g[(i, j)] - t).norm());
            }
        }
        worst
    }

    /// Per-band |H c_n - e_n c_n| / max(1, |e_n|).
    pub fn relative_residuals(&self, h: &DMatrix<Complex64>) -> Vec<f64> {
        (0..self.n_bands())
            .map(|n| {
                let c = self.coeffs.column(n);
                let r: DVector<Complex64> = h * c - c * Complex64::new(self.energies[n], 0.0);
                r.norm() / self.energies[n].abs().max(1.0)
            })
            .collect()
    }

    /// Band pairs (a < b) closer than the degeneracy tolerance.
    pub fn degenerate_pairs(&self, tol: f64) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for a in 0..self.n_bands() {
            for b in a + 1..self.n_bands() {
                if is_degenerate(self.energies[a], self.energies[b], tol) {
                    out.push((a, b));
                }
            }
        }
        out
    }

    /// Smallest gap between band n and any other retained band.
    pub fn gap(&self, n: usize) -> f64 {
        self.energies
            .iter()
            .enumerate()
            .filter(|(m, _)| *m != n)
            .map(|(_, e)| (e - self.energies[n]).abs())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Largest entry magnitude of a complex matrix.
pub fn max_abs(m: &DMatrix<Complex64>) -> f64 {
    m.iter().map(|c| c.norm()).fold(0.0, f64::max)
}

/// |e_a - e_b| < tol * max(1, |e_a|).
pub fn is_degenerate(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() < tol * a.abs().max(1.0)
}

/// Energies along a k-path.
#[derive(Debug, Clone)]
pub struct BandTable {
    pub points: Vec<Vector3<f64>>,
    pub energies: Vec<Vec<f64>>,
    pub basis_size: usize,
    pub gauge: GaugeTag,
}

impl BandTable {
    pub fn rows(&self) -> usize {
        self.energies.iter().map(Vec::len).sum()
    }
}

pub fn band_structure(model: &BlochModel, k_path: &[Vector3<f64>], n_bands: usize) -> Result<BandTable> {
    if k_path.is_empty() {
        return Err(Error::InvalidArgument("k-path is empty".into()));
    }
    let energies = k_path
        .par_iter()
        .map(|k| model.solve(k, n_bands).map(|s| s.energies))
        .collect::<Result<Vec<_>>>()?;
    Ok(BandTable {
        points: k_path.to_vec(),
        energies,
        basis_size: model.basis().len(),
        gauge: GaugeTag::MaxReal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_plane_wave_basis, potential_from_fourier, CrystalLattice};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    pub(crate) fn mathieu(v0: f64, e_cut: f64) -> BlochModel {
        let lat = CrystalLattice::chain(1.0).unwrap();
        let basis = build_plane_wave_basis(&lat, e_cut).unwrap();
        let pot = potential_from_fourier(&lat, &[(vec![1], Complex64::new(v0, 0.0))]).unwrap();
        BlochModel::new(basis, pot).unwrap()
    }

    fn kx(x: f64) -> Vector3<f64> {
        Vector3::new(x, 0.0, 0.0)
    }

    #[test]
    fn free_kinetic_diagonal() {
        let model = mathieu(0.0, 20.0);
        let h = model.hamiltonian(&kx(0.0)).unwrap();
        let d: Vec<f64> = (0..3).map(|i| h[(i, i)].re).collect();
        assert_eq!(d[0], 0.0);
        assert!((d[1] - 2.0 * PI * PI).abs() < 1e-12);
        assert!((d[2] - 2.0 * PI * PI).abs() < 1e-12);
        assert!(hermiticity_residual(&h) == 0.0);
    }

    #[test]
    fn cosine_offdiagonals() {
        let model = mathieu(0.05, 20.0);
        let h = model.hamiltonian(&kx(0.0)).unwrap();
        // order [0, -2pi, +2pi]: pairs (0,1), (0,2) differ by one step, (1,2) by two
        assert_eq!(h[(0, 1)], Complex64::new(0.05, 0.0));
        assert_eq!(h[(2, 0)], Complex64::new(0.05, 0.0));
        assert_eq!(h[(1, 2)], Complex64::default());
    }

    #[test]
    fn random_potential_hermitian() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let lat = CrystalLattice::hypercubic(2, 1.0).unwrap();
        let coeffs: Vec<(Vec<i32>, Complex64)> = (0..6)
            .map(|i| {
                (
                    vec![1 + i % 2, i - 2],
                    Complex64::new(rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2)),
                )
            })
            .collect();
        let pot = potential_from_fourier(&lat, &coeffs).unwrap();
        let basis = build_plane_wave_basis(&lat, 200.0).unwrap();
        let k = Vector3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), 0.0);
        let h = assemble_hk(&basis, &pot, &k).unwrap();
        assert!(hermiticity_residual(&h) < 1e-14);
    }

    #[test]
    fn lattice_mismatch_rejected() {
        let basis = build_plane_wave_basis(&CrystalLattice::chain(1.0).unwrap(), 20.0).unwrap();
        let pot = PeriodicPotential::free(&CrystalLattice::chain(2.0).unwrap());
        assert!(matches!(
            assemble_hk(&basis, &pot, &kx(0.0)),
            Err(Error::LatticeMismatch)
        ));
    }

    #[test]
    fn two_level_quadratic_formula() {
        let v = 0.05;
        let m = DMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(0.0, 0.0),
                Complex64::new(v, 0.0),
                Complex64::new(v, 0.0),
                Complex64::new(1.0, 0.0),
            ],
        );
        let eig = diagonalize(&m, 2).unwrap();
        let s = (1.0 + 4.0 * v * v).sqrt();
        assert!((eig.values[0] - (1.0 - s) / 2.0).abs() < 1e-14);
        assert!((eig.values[1] - (1.0 + s) / 2.0).abs() < 1e-14);
        assert!((eig.values[0] + 0.002494).abs() < 1e-6);
    }

    #[test]
    fn diagonal_matrix_sorted() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![
            Complex64::new(3.0, 0.0),
            Complex64::new(-1.0, 0.0),
            Complex64::new(2.0, 0.0),
        ]));
        let eig = diagonalize(&m, 3).unwrap();
        assert_eq!(eig.values, vec![-1.0, 2.0, 3.0]);
        assert!((eig.vectors[(1, 0)].norm() - 1.0).abs() < 1e-15);
        assert!(diagonalize(&m, 4).is_err());
    }

    #[test]
    fn solution_invariants() {
        let model = mathieu(0.05, 400.0);
        let k = kx(0.37);
        let sol = model.solve(&k, 6).unwrap();
        let h = model.hamiltonian(&k).unwrap();
        assert!(sol.orthonormality_residual() < 1e-10);
        assert!(sol.energies.windows(2).all(|w| w[0] <= w[1]));
        assert!(sol.relative_residuals(&h).iter().all(|&r| r < 1e-9));
    }

    #[test]
    fn max_real_removes_phase_and_is_idempotent() {
        let model = mathieu(0.05, 400.0);
        let sol = model.solve(&kx(0.8), 4).unwrap();
        let again = fix_gauge(&sol, Gauge::MaxReal).unwrap();
        assert!(max_abs(&(&again.coeffs - &sol.coeffs)) < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let phases: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
        let refixed = fix_gauge(&sol.with_phases(&phases), Gauge::MaxReal).unwrap();
        let diff = (&refixed.coeffs - &sol.coeffs)
            .iter()
            .map(|c| c.norm())
            .fold(0.0, f64::max);
        assert!(diff < 1e-12, "{diff:e}");
    }

    #[test]
    fn max_real_single_plane_wave() {
        let model = mathieu(0.0, 20.0);
        let mut sol = model.solve(&kx(0.3), 3).unwrap();
        // band with u = e^{i 2 pi x}: basis index of G = +2pi
        let idx = model.basis().index_of(&[1, 0, 0]).unwrap();
        let band = (0..3).find(|&n| sol.coeffs[(idx, n)].norm() > 0.5).unwrap();
        sol.coeffs
            .column_mut(band)
            .iter_mut()
            .for_each(|c| *c *= Complex64::from_polar(1.0, 0.7));
        let fixed = fix_gauge(&sol, Gauge::MaxReal).unwrap();
        assert!((fixed.coeffs[(idx, band)] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn parallel_transport_aligns_and_detects_crossing() {
        let model = mathieu(0.05, 400.0);
        let a = model.solve(&kx(0.5), 3).unwrap();
        let b = model.solve(&kx(0.5001), 3).unwrap().with_phases(&[1.0, -2.0, 0.3]);
        let t = fix_gauge(&b, Gauge::ParallelTransport(&a)).unwrap();
        for n in 0..3 {
            let o = a.coeffs.column(n).dotc(&t.coeffs.column(n));
            assert!(o.im.abs() < 1e-14 && o.re > 0.99);
        }
        let t2 = fix_gauge(&t, Gauge::ParallelTransport(&a)).unwrap();
        assert!(max_abs(&(&t2.coeffs - &t.coeffs)) < 1e-15);

        // Free particle: swapping two bands gives zero overlap.
        let free = mathieu(0.0, 200.0);
        let s = free.solve(&kx(0.3), 3).unwrap();
        let mut swapped = s.clone();
        swapped.coeffs.swap_columns(1, 2);
        assert!(matches!(
            fix_gauge(&swapped, Gauge::ParallelTransport(&s)),
            Err(Error::BandCrossing { band: 1, .. })
        ));
    }

    #[test]
    fn free_particle_bands() {
        let model = mathieu(0.0, 200.0);
        let table = band_structure(&model, &[kx(0.0), kx(1.0)], 3).unwrap();
        assert_eq!(table.energies[0][0], 0.0);
        assert!((table.energies[1][0] - 0.5).abs() < 1e-14);
        assert_eq!(table.rows(), 6);
        assert!(band_structure(&model, &[], 2).is_err());
    }

    #[test]
    fn zone_edge_gap_matches_degenerate_perturbation_theory() {
        // V = 2 V0 cos(2 pi x): the k = pi, k - 2pi pair splits by 2 V0.
        let v0 = 0.05;
        let model = mathieu(v0, 200.0);
        let sol = model.solve(&kx(PI), 2).unwrap();
        let gap = sol.energies[1] - sol.energies[0];
        assert!((gap - 2.0 * v0).abs() < 0.05 * 2.0 * v0, "gap = {gap}");
    }

    #[test]
    fn spectrum_symmetries() {
        let model = mathieu(0.05, 400.0);
        for &k in &[0.3, 1.1, 2.5] {
            let a = model.solve(&kx(k), 5).unwrap().energies;
            let b = model.solve(&kx(-k), 5).unwrap().energies;
            let c = model.solve(&kx(k + 2.0 * PI), 5).unwrap().energies;
            for n in 0..5 {
                assert!((a[n] - b[n]).abs() < 1e-10);
                assert!((a[n] - c[n]).abs() < 1e-8, "{} vs {}", a[n], c[n]);
            }
        }
    }

    /// The parameter-free Hamiltonian acting on f = u e^{ikx}, assembled by
    /// real-space quadrature over explicit Bloch waves, has the same spectrum.
    #[test]
    fn parameter_free_formulation_same_spectrum() {
        let model = mathieu(0.05, 400.0);
        let basis = model.basis();
        let lat = basis.lattice();
        let grid = crate::model::sample_unit_cell_grid(basis, 64).unwrap();
        let k = kx(0.9);
        let n = basis.len();
        let waves: Vec<Vec<Complex64>> = basis
            .gvecs()
            .iter()
            .map(|g| {
                grid.points()
                    .iter()
                    .map(|r| Complex64::from_polar(1.0 / lat.volume().sqrt(), (k + g).dot(r)))
                    .collect()
            })
            .collect();
        let vr: Vec<f64> = grid.points().iter().map(|r| model.potential().evaluate(r)).collect();
        let h = DMatrix::from_fn(n, n, |a, b| {
            let kinetic = if a == b {
                0.5 * (k + basis.gvecs()[a]).norm_squared()
            } else {
                0.0
            };
            let pot: Complex64 = grid.integrate(
                &(0..grid.len())
                    .map(|j| waves[a][j].conj() * vr[j] * waves[b][j])
                    .collect::<Vec<_>>(),
            );
            pot + kinetic
        });
        let e_free = diagonalize(&h, 6).unwrap().values;
        let e_u = model.solve(&k, 6).unwrap().energies;
        for i in 0..6 {
            assert!((e_free[i] - e_u[i]).abs() < 1e-10);
        }
    }
}
