use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::model::CrystalLattice;

/// Uniform half-open sampling of one Brillouin-zone cell, k = origin + sum_l (i_l / N_l) b_l.
///
/// Points are ordered with the last axis fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct KGrid {
    dim: usize,
    counts: Vec<usize>,
    reciprocal: Vec<Vector3<f64>>,
    origin: Vector3<f64>,
}

impl KGrid {
    pub fn new(lattice: &CrystalLattice, counts: &[usize]) -> Result<Self> {
        Self::with_origin(lattice, counts, Vector3::zeros())
    }

    pub fn with_origin(lattice: &CrystalLattice, counts: &[usize], origin: Vector3<f64>) -> Result<Self> {
        let dim = lattice.dim();
        if counts.len() != dim {
            return Err(Error::InvalidArgument(format!(
                "k-grid needs {dim} counts, got {}",
                counts.len()
            )));
        }
        if counts.contains(&0) {
            return Err(Error::InvalidArgument("k-grid counts must be positive".into()));
        }
        Ok(Self {
            dim,
            counts: counts.to_vec(),
            reciprocal: lattice.reciprocal()[..dim].to_vec(),
            origin,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Spacing vector b_l / N_l along axis l.
    pub fn step(&self, axis: usize) -> Vector3<f64> {
        self.reciprocal[axis] / self.counts[axis] as f64
    }

    /// k at (possibly fractional, possibly out-of-range) grid coordinates.
    pub fn at(&self, coords: &[f64]) -> Vector3<f64> {
        let mut k = self.origin;
        for (l, &c) in coords.iter().enumerate().take(self.dim) {
            k += self.step(l) * c;
        }
        k
    }

    /// Flattened index of integer coordinates.
    pub fn index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.counts).fold(0, |acc, (&i, &n)| acc * n + i)
    }

    /// Integer coordinates of a flattened index.
    pub fn coords(&self, mut flat: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim];
        for l in (0..self.dim).rev() {
            out[l] = flat % self.counts[l];
            flat /= self.counts[l];
        }
        out
    }

    /// Index of coordinates wrapped periodically, with an offset along one axis.
    pub fn neighbour(&self, flat: usize, axis: usize, offset: isize) -> usize {
        let mut c = self.coords(flat);
        let n = self.counts[axis] as isize;
        c[axis] = (c[axis] as isize + offset).rem_euclid(n) as usize;
        self.index(&c)
    }

    pub fn points(&self) -> Vec<Vector3<f64>> {
        (0..self.len())
            .map(|i| {
                let c: Vec<f64> = self.coords(i).iter().map(|&x| x as f64).collect();
                self.at(&c)
            })
            .collect()
    }

    /// Plaquette (2D) or cube (3D) centers in grid order.
    pub fn centers(&self) -> Vec<Vector3<f64>> {
        (0..self.len())
            .map(|i| {
                let c: Vec<f64> = self.coords(i).iter().map(|&x| x as f64 + 0.5).collect();
                self.at(&c)
            })
            .collect()
    }

    /// Corners of all cells, (N_l + 1) per axis, in the same ordering convention.
    pub fn corner_counts(&self) -> Vec<usize> {
        self.counts.iter().map(|c| c + 1).collect()
    }

    pub fn corners(&self) -> Vec<Vector3<f64>> {
        let cc = self.corner_counts();
        let total: usize = cc.iter().product();
        (0..total)
            .map(|mut flat| {
                let mut c = vec![0.0; self.dim];
                for l in (0..self.dim).rev() {
                    c[l] = (flat % cc[l]) as f64;
                    flat /= cc[l];
                }
                self.at(&c)
            })
            .collect()
    }

    pub fn corner_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.counts).fold(0, |acc, (&i, &n)| acc * (n + 1) + i)
    }

    /// Signed k-space area of one plaquette spanned by steps along axes a then b,
    /// measured along the a x b normal.
    pub fn plaquette_area(&self, a: usize, b: usize) -> f64 {
        let s = self.step(a).cross(&self.step(b));
        if self.dim == 2 {
            s[2]
        } else {
            s.norm()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordering_and_spacing() {
        let lat = CrystalLattice::hypercubic(2, 1.0).unwrap();
        let g = KGrid::new(&lat, &[4, 3]).unwrap();
        assert_eq!(g.len(), 12);
        let p = g.points();
        assert_eq!(p[0], Vector3::zeros());
        assert!((p[1][1] - 2.0 * std::f64::consts::PI / 3.0).abs() < 1e-15);
        assert_eq!(g.coords(g.index(&[2, 1])), vec![2, 1]);
        assert_eq!(g.neighbour(g.index(&[3, 0]), 0, 1), g.index(&[0, 0]));
        assert_eq!(g.corners().len(), 20);
        assert!(KGrid::new(&lat, &[4]).is_err());
    }
}
