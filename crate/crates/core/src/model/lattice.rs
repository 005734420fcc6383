use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// Bravais lattice in one to three dimensions.
///
/// Vectors are stored as 3-vectors; components beyond `dim` are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct CrystalLattice {
    dim: usize,
    primitive: Vec<Vector3<f64>>,
    reciprocal: Vec<Vector3<f64>>,
    volume: f64,
}

impl CrystalLattice {
    /// Builds a lattice from `dim` primitive vectors of `dim` components each.
    pub fn new(vectors: &[Vec<f64>]) -> Result<Self> {
        let dim = vectors.len();
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidLattice(format!("dimension must be 1, 2 or 3, got {dim}")));
        }
        for (i, v) in vectors.iter().enumerate() {
            if v.len() != dim {
                return Err(Error::InvalidLattice(format!(
                    "primitive vector {i} has {} components, expected {dim}",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidLattice(format!("primitive vector {i} is not finite")));
            }
        }

        // Pad the unused block with the identity so the 3x3 inverse exists.
        let mut a = Matrix3::<f64>::identity();
        for (j, v) in vectors.iter().enumerate() {
            for i in 0..3 {
                a[(i, j)] = if i < dim {
                    v[i]
                } else if i == j {
                    1.0
                } else {
                    0.0
                };
            }
        }
        let det = a.determinant();
        let scale = vectors
            .iter()
            .map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt())
            .product::<f64>();
        if !(det.abs() > 1e-12 * scale) {
            return Err(Error::InvalidLattice("primitive vectors are linearly dependent".into()));
        }
        let inv = a
            .try_inverse()
            .ok_or_else(|| Error::InvalidLattice("singular primitive matrix".into()))?;
        // Rows of A^{-1} are the dual basis: b_i . a_j = 2 pi delta_ij.
        let primitive = (0..dim).map(|j| zero_tail(a.column(j).into(), dim)).collect();
        let reciprocal = (0..dim)
            .map(|i| zero_tail(inv.row(i).transpose() * (2.0 * PI), dim))
            .collect();

        Ok(Self {
            dim,
            primitive,
            reciprocal,
            volume: det.abs(),
        })
    }

    /// One-dimensional lattice of period `a`.
    pub fn chain(a: f64) -> Result<Self> {
        Self::new(&[vec![a]])
    }

    /// Simple square (2D) or cubic (3D) lattice.
    pub fn hypercubic(dim: usize, a: f64) -> Result<Self> {
        let vectors: Vec<Vec<f64>> = (0..dim)
            .map(|i| (0..dim).map(|j| if i == j { a } else { 0.0 }).collect())
            .collect();
        Self::new(&vectors)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn primitive(&self) -> &[Vector3<f64>] {
        &self.primitive
    }

    pub fn reciprocal(&self) -> &[Vector3<f64>] {
        &self.reciprocal
    }

    /// Cell length, area or volume.
    pub fn volume(&self) -> f64 {
        self.volume
    }

    /// Reciprocal-lattice vector with integer coordinates `m`.
    pub fn g_vector(&self, m: &super::Miller) -> Vector3<f64> {
        self.reciprocal
            .iter()
            .zip(m)
            .fold(Vector3::zeros(), |acc, (b, &mi)| acc + b * f64::from(mi))
    }

    /// Real-space point with fractional coordinates `s`.
    pub fn cartesian(&self, s: &[f64]) -> Vector3<f64> {
        self.primitive
            .iter()
            .zip(s)
            .fold(Vector3::zeros(), |acc, (a, &si)| acc + a * si)
    }

    /// Fractional reciprocal coordinates of `k`, i.e. k = sum_i kappa_i b_i.
    pub fn fractional_k(&self, k: &Vector3<f64>) -> Vector3<f64> {
        let mut out = Vector3::zeros();
        for (i, a) in self.primitive.iter().enumerate() {
            out[i] = a.dot(k) / (2.0 * PI);
        }
        out
    }

    /// Max |a_i . b_j - 2 pi delta_ij|.
    pub fn duality_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, a) in self.primitive.iter().enumerate() {
            for (j, b) in self.reciprocal.iter().enumerate() {
                let target = if i == j { 2.0 * PI } else { 0.0 };
                worst = worst.max((a.dot(b) - target).abs());
            }
        }
        worst
    }
}

fn zero_tail(mut v: Vector3<f64>, dim: usize) -> Vector3<f64> {
    for i in dim..3 {
        v[i] = 0.0;
    }
    v
}
