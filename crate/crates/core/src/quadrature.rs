//! Product quadrature rules over one unit cell.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::model::{CrystalLattice, RealGrid};

/// Nodes and weights of a composite Gauss-Legendre rule on [0, 1].
pub fn composite_gauss_legendre(panels: usize, degree: usize) -> Result<Vec<(f64, f64)>> {
    let deg =
        NonZeroUsize::new(degree).ok_or_else(|| Error::InvalidArgument("quadrature degree must be positive".into()))?;
    if panels == 0 {
        return Err(Error::InvalidArgument("quadrature needs at least one panel".into()));
    }
    let rule = GaussLegendre::new(deg);
    let h = 1.0 / panels as f64;
    let mut out = Vec::with_capacity(panels * degree);
    for p in 0..panels {
        let a = p as f64 * h;
        for (x, w) in rule.iter() {
            out.push((a + 0.5 * h * (x + 1.0), 0.5 * h * w));
        }
    }
    Ok(out)
}

/// Points and weights with sum_p w_p f(r_p) approximating the cell integral of f.
#[derive(Debug, Clone)]
pub struct CellQuadrature {
    pub points: Vec<Vector3<f64>>,
    pub fractional: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl CellQuadrature {
    /// The uniform grid rule; exact for band-limited periodic integrands.
    pub fn uniform(grid: &RealGrid) -> Self {
        Self {
            points: grid.points().to_vec(),
            fractional: grid.fractional().to_vec(),
            weights: vec![grid.weight(); grid.len()],
        }
    }

    /// Tensor-product composite Gauss-Legendre rule along the lattice vectors.
    pub fn gauss_legendre(lattice: &CrystalLattice, panels: usize, degree: usize) -> Result<Self> {
        let nodes = composite_gauss_legendre(panels, degree)?;
        let dim = lattice.dim();
        let one = [(0.0, 1.0)];
        let axis = |i: usize| if i < dim { &nodes[..] } else { &one[..] };
        let mut points = Vec::new();
        let mut fractional = Vec::new();
        let mut weights = Vec::new();
        for &(s0, w0) in axis(0) {
            for &(s1, w1) in axis(1) {
                for &(s2, w2) in axis(2) {
                    let s = [s0, s1, s2];
                    fractional.push(s);
                    points.push(lattice.cartesian(&s[..dim]));
                    weights.push(w0 * w1 * w2 * lattice.volume());
                }
            }
        }
        Ok(Self {
            points,
            fractional,
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_oscillatory_moment() {
        // int_0^1 x e^{2 pi i 3 x} dx = 1 / (2 pi i 3)
        let q = 2.0 * std::f64::consts::PI * 3.0;
        let nodes = composite_gauss_legendre(4, 16).unwrap();
        let (re, im) = nodes.iter().fold((0.0, 0.0), |(a, b), &(x, w)| {
            (a + w * x * (q * x).cos(), b + w * x * (q * x).sin())
        });
        assert!(re.abs() < 1e-14);
        assert!((im + 1.0 / q).abs() < 1e-14);
    }

    #[test]
    fn weights_sum_to_volume() {
        let lat = CrystalLattice::new(&[vec![1.0, 0.0], vec![0.4, 0.9]]).unwrap();
        let q = CellQuadrature::gauss_legendre(&lat, 2, 5).unwrap();
        assert_eq!(q.len(), 100);
        assert!((q.weights.iter().sum::<f64>() - 0.9).abs() < 1e-14);
    }
}
