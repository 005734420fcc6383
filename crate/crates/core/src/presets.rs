//! Reference models used by the bundled configurations and the test suites.

use num_complex::Complex64;

use crate::error::Result;
use crate::model::{build_plane_wave_basis, potential_from_fourier, CrystalLattice, PeriodicPotential};
use crate::solver::BlochModel;

fn cosine(amplitude: f64, phase: f64) -> Complex64 {
    Complex64::from_polar(0.5 * amplitude, phase)
}

/// Free particle on a unit hypercubic lattice.
pub fn free(dim: usize, e_cut: f64) -> Result<BlochModel> {
    let lat = CrystalLattice::hypercubic(dim, 1.0)?;
    let basis = build_plane_wave_basis(&lat, e_cut)?;
    BlochModel::new(basis, PeriodicPotential::free(&lat))
}

/// V(x) = amplitude cos(2 pi x) on a unit chain.
pub fn mathieu(amplitude: f64, e_cut: f64) -> Result<BlochModel> {
    let lat = CrystalLattice::chain(1.0)?;
    let pot = potential_from_fourier(&lat, &[(vec![1], cosine(amplitude, 0.0))])?;
    BlochModel::new(build_plane_wave_basis(&lat, e_cut)?, pot)
}

/// V = 0.1 cos(2 pi x) + 0.1 cos(2 pi y), inversion symmetric.
pub fn square_symmetric(e_cut: f64) -> Result<BlochModel> {
    let lat = CrystalLattice::hypercubic(2, 1.0)?;
    let pot = potential_from_fourier(&lat, &[(vec![1, 0], cosine(0.1, 0.0)), (vec![0, 1], cosine(0.1, 0.0))])?;
    BlochModel::new(build_plane_wave_basis(&lat, e_cut)?, pot)
}

/// V = 0.1 cos(2 pi x) + 0.1 cos(2 pi y) + 0.1 cos(2 pi (x + y) + 0.7), inversion broken.
pub fn square_broken(e_cut: f64) -> Result<BlochModel> {
    let lat = CrystalLattice::hypercubic(2, 1.0)?;
    let pot = potential_from_fourier(
        &lat,
        &[
            (vec![1, 0], cosine(0.1, 0.0)),
            (vec![0, 1], cosine(0.1, 0.0)),
            (vec![1, 1], cosine(0.1, 0.7)),
        ],
    )?;
    BlochModel::new(build_plane_wave_basis(&lat, e_cut)?, pot)
}

/// V = 0.1 [cos 2 pi x + cos 2 pi y + cos 2 pi z] + 0.1 cos(2 pi (x + y + z) + 0.7).
pub fn cubic_broken(e_cut: f64) -> Result<BlochModel> {
    let lat = CrystalLattice::hypercubic(3, 1.0)?;
    let pot = potential_from_fourier(
        &lat,
        &[
            (vec![1, 0, 0], cosine(0.1, 0.0)),
            (vec![0, 1, 0], cosine(0.1, 0.0)),
            (vec![0, 0, 1], cosine(0.1, 0.0)),
            (vec![1, 1, 1], cosine(0.1, 0.7)),
        ],
    )?;
    BlochModel::new(build_plane_wave_basis(&lat, e_cut)?, pot)
}
