//! Lattices, plane-wave bases, periodic potentials and real-space grids.
//!
//! Everything here is in natural units (hbar = m = e = c = 1) and immutable
//! once built.

mod basis;
mod grid;
mod lattice;
mod potential;

pub use basis::{build_plane_wave_basis, PlaneWaveBasis, DEFAULT_MAX_BASIS};
pub use grid::{minimal_resolution, sample_unit_cell_grid, RealGrid};
pub use lattice::CrystalLattice;
pub use potential::{potential_from_fourier, PeriodicPotential};

/// Integer coordinates of a reciprocal-lattice vector; unused axes are zero.
pub type Miller = [i32; 3];
