use nalgebra::Vector3;

use super::{CrystalLattice, PlaneWaveBasis};
use crate::error::{Error, Result};

/// Uniform half-open sampling of one unit cell, origin at the cell corner.
///
/// Points are ordered with the last axis fastest.
#[derive(Debug, Clone)]
pub struct RealGrid {
    lattice: CrystalLattice,
    n_per_dim: usize,
    fractional: Vec<[f64; 3]>,
    points: Vec<Vector3<f64>>,
    weight: f64,
}

/// Minimal points per axis at which the trapezoid rule integrates any product
/// of two basis plane waves exactly.
pub fn minimal_resolution(basis: &PlaneWaveBasis) -> usize {
    2 * basis.max_miller() as usize + 2
}

pub fn sample_unit_cell_grid(basis: &PlaneWaveBasis, n_per_dim: usize) -> Result<RealGrid> {
    let required = minimal_resolution(basis);
    if n_per_dim < required {
        return Err(Error::UnderResolvedGrid {
            given: n_per_dim,
            required,
        });
    }
    Ok(RealGrid::new(basis.lattice(), n_per_dim))
}

impl RealGrid {
    pub(crate) fn new(lattice: &CrystalLattice, n: usize) -> Self {
        let dim = lattice.dim();
        let counts: Vec<usize> = (0..3).map(|i| if i < dim { n } else { 1 }).collect();
        let mut fractional = Vec::with_capacity(counts.iter().product());
        for i in 0..counts[0] {
            for j in 0..counts[1] {
                for l in 0..counts[2] {
                    fractional.push([
                        i as f64 / n as f64,
                        if dim > 1 { j as f64 / n as f64 } else { 0.0 },
                        if dim > 2 { l as f64 / n as f64 } else { 0.0 },
                    ]);
                }
            }
        }
        let points = fractional
            .iter()
            .map(|s| lattice.cartesian(&s[..dim]))
            .collect::<Vec<_>>();
        let weight = lattice.volume() / points.len() as f64;
        Self {
            lattice: lattice.clone(),
            n_per_dim: n,
            fractional,
            points,
            weight,
        }
    }

    pub fn lattice(&self) -> &CrystalLattice {
        &self.lattice
    }

    pub fn n_per_dim(&self) -> usize {
        self.n_per_dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn fractional(&self) -> &[[f64; 3]] {
        &self.fractional
    }

    /// Quadrature weight V_cell / N_total.
    pub fn weight(&self) -> f64 {
        self.weight
    }

    /// Trapezoid-rule integral of sampled values over the cell.
    pub fn integrate<T>(&self, values: &[T]) -> T
    where
        T: Copy + std::iter::Sum<T> + std::ops::Mul<f64, Output = T>,
    {
        values.iter().copied().sum::<T>() * self.weight
    }
}
