use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::OnceLock;

use nalgebra::{DMatrix, Vector3};
use num_complex::Complex64;

use super::{CrystalLattice, Miller};
use crate::error::{Error, Result};

/// Hard cap on the number of plane waves.
pub const DEFAULT_MAX_BASIS: usize = 20_000;

/// Reciprocal vectors G with |G|^2 / 2 <= e_cut, ordered by ascending |G|^2 and
/// then lexicographically on integer coordinates. `G = 0` is always index 0.
#[derive(Debug)]
pub struct PlaneWaveBasis {
    lattice: CrystalLattice,
    e_cut: f64,
    millers: Vec<Miller>,
    gvecs: Vec<Vector3<f64>>,
    lookup: HashMap<Miller, usize>,
    position_moments: OnceLock<Vec<DMatrix<Complex64>>>,
}

/// Enumerates the plane-wave basis with the default size cap.
pub fn build_plane_wave_basis(lattice: &CrystalLattice, e_cut: f64) -> Result<PlaneWaveBasis> {
    PlaneWaveBasis::with_cap(lattice, e_cut, DEFAULT_MAX_BASIS)
}

impl PlaneWaveBasis {
    pub fn with_cap(lattice: &CrystalLattice, e_cut: f64, cap: usize) -> Result<Self> {
        if !(e_cut > 0.0) || !e_cut.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "e_cut must be positive and finite, got {e_cut}"
            )));
        }
        let dim = lattice.dim();
        let g_max = (2.0 * e_cut).sqrt();

        // Volume estimate first so absurd cutoffs fail before enumeration.
        let ball = match dim {
            1 => 2.0 * g_max,
            2 => PI * g_max * g_max,
            _ => 4.0 / 3.0 * PI * g_max.powi(3),
        };
        let recip_cell = (2.0 * PI).powi(dim as i32) / lattice.volume();
        let estimate = ball / recip_cell;
        if estimate > 2.0 * cap as f64 + 64.0 {
            return Err(Error::BasisTooLarge {
                size: estimate as usize,
                cap,
                e_cut,
            });
        }

        let bounds: Vec<i32> = (0..3)
            .map(|i| {
                if i < dim {
                    (lattice.primitive()[i].norm() * g_max / (2.0 * PI)).floor() as i32
                } else {
                    0
                }
            })
            .collect();

        let metric = metric_tensor(lattice);
        let mut members: Vec<(f64, Miller)> = Vec::new();
        for m0 in -bounds[0]..=bounds[0] {
            for m1 in -bounds[1]..=bounds[1] {
                for m2 in -bounds[2]..=bounds[2] {
                    let m = [m0, m1, m2];
                    let g2 = norm_sq(&metric, &m);
                    if 0.5 * g2 <= e_cut {
                        members.push((g2, m));
                        if members.len() > cap {
                            return Err(Error::BasisTooLarge {
                                size: members.len(),
                                cap,
                                e_cut,
                            });
                        }
                    }
                }
            }
        }
        members.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));

        let millers: Vec<Miller> = members.into_iter().map(|(_, m)| m).collect();
        let gvecs = millers.iter().map(|m| lattice.g_vector(m)).collect();
        let lookup = millers.iter().enumerate().map(|(i, m)| (*m, i)).collect();
        Ok(Self {
            lattice: lattice.clone(),
            e_cut,
            millers,
            gvecs,
            lookup,
            position_moments: OnceLock::new(),
        })
    }

    pub fn lattice(&self) -> &CrystalLattice {
        &self.lattice
    }

    pub fn dim(&self) -> usize {
        self.lattice.dim()
    }

    pub fn e_cut(&self) -> f64 {
        self.e_cut
    }

    pub fn len(&self) -> usize {
        self.millers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.millers.is_empty()
    }

    pub fn millers(&self) -> &[Miller] {
        &self.millers
    }

    pub fn gvecs(&self) -> &[Vector3<f64>] {
        &self.gvecs
    }

    pub fn zero_index(&self) -> usize {
        0
    }

    pub fn index_of(&self, m: &Miller) -> Option<usize> {
        self.lookup.get(m).copied()
    }

    /// Largest |integer coordinate| over all members and axes.
    pub fn max_miller(&self) -> i32 {
        self.millers
            .iter()
            .flat_map(|m| m.iter().map(|x| x.abs()))
            .max()
            .unwrap_or(0)
    }

    /// Matrices of the unit-cell position operator (1/V) int_cell r_i e^{i(G_b - G_a).r}
    /// between plane waves a (row) and b (column), one per Cartesian axis.
    ///
    /// With r = sum_j s_j a_j and integer q = m_b - m_a the cell integral
    /// factorises: int_0^1 s e^{2 pi i q s} ds is 1/2 for q = 0 and
    /// 1 / (2 pi i q) otherwise, and the remaining axes must have q = 0.
    pub fn position_moments(&self) -> &[DMatrix<Complex64>] {
        self.position_moments.get_or_init(|| {
            let dim = self.dim();
            let n = self.len();
            let mut out = vec![DMatrix::zeros(n, n); dim];
            for a in 0..n {
                for b in 0..n {
                    let q = [
                        self.millers[b][0] - self.millers[a][0],
                        self.millers[b][1] - self.millers[a][1],
                        self.millers[b][2] - self.millers[a][2],
                    ];
                    for (j, avec) in self.lattice.primitive().iter().enumerate() {
                        let Some(w) = fractional_moment(&q, j, dim) else {
                            continue;
                        };
                        for (i, m) in out.iter_mut().enumerate() {
                            m[(a, b)] += w * avec[i];
                        }
                    }
                }
            }
            out
        })
    }
}

/// int_{[0,1]^d} s_j e^{2 pi i q.s} ds, or `None` when it vanishes.
pub(crate) fn fractional_moment(q: &Miller, j: usize, dim: usize) -> Option<Complex64> {
    if (0..dim).any(|l| l != j && q[l] != 0) {
        return None;
    }
    if q[j] == 0 {
        Some(Complex64::new(0.5, 0.0))
    } else {
        Some(Complex64::new(0.0, -1.0 / (2.0 * PI * f64::from(q[j]))))
    }
}

fn metric_tensor(lattice: &CrystalLattice) -> [[f64; 3]; 3] {
    let mut g = [[0.0; 3]; 3];
    for (i, bi) in lattice.reciprocal().iter().enumerate() {
        for (j, bj) in lattice.reciprocal().iter().enumerate() {
            g[i][j] = bi.dot(bj);
        }
    }
    g
}

// Fixed summation order makes |G|^2 bitwise equal for G and -G.
fn norm_sq(metric: &[[f64; 3]; 3], m: &Miller) -> f64 {
    let mut s = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            s += metric[i][j] * f64::from(m[i]) * f64::from(m[j]);
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn low_cutoff_keeps_only_origin() {
        let lat = CrystalLattice::chain(1.0).unwrap();
        let b = build_plane_wave_basis(&lat, 0.1).unwrap();
        assert_eq!(b.millers(), &[[0, 0, 0]]);
    }

    #[test]
    fn one_dimensional_tie_order() {
        let lat = CrystalLattice::chain(1.0).unwrap();
        let b = build_plane_wave_basis(&lat, 20.0).unwrap();
        assert_eq!(b.millers(), &[[0, 0, 0], [-1, 0, 0], [1, 0, 0]]);
        assert!((b.gvecs()[1].x + 2.0 * PI).abs() < 1e-15);
    }

    #[test]
    fn square_lattice_matches_brute_force_count() {
        let lat = CrystalLattice::hypercubic(2, 1.0).unwrap();
        for e_cut in [20.0, 45.0, 100.0, 333.0] {
            let b = build_plane_wave_basis(&lat, e_cut).unwrap();
            let mut count = 0;
            for m in -20i32..=20 {
                for n in -20i32..=20 {
                    if 2.0 * PI * PI * f64::from(m * m + n * n) <= e_cut {
                        count += 1;
                    }
                }
            }
            assert_eq!(b.len(), count, "e_cut = {e_cut}");
        }
        let b = build_plane_wave_basis(&lat, 20.0).unwrap();
        assert_eq!(b.len(), 5);
    }

    #[test]
    fn negation_closure_and_cutoff() {
        let lat = CrystalLattice::new(&[vec![1.0, 0.1, 0.0], vec![0.3, 1.2, 0.0], vec![0.0, 0.2, 0.9]]).unwrap();
        let b = build_plane_wave_basis(&lat, 150.0).unwrap();
        for (m, g) in b.millers().iter().zip(b.gvecs()) {
            assert!(b.index_of(&[-m[0], -m[1], -m[2]]).is_some());
            assert!(0.5 * g.norm_squared() <= 150.0 * (1.0 + 1e-12));
        }
        let g2: Vec<f64> = b.gvecs().iter().map(|g| g.norm_squared()).collect();
        assert!(g2.windows(2).all(|w| w[0] <= w[1] * (1.0 + 1e-12)));
    }

    #[test]
    fn runaway_cutoff_rejected() {
        let lat = CrystalLattice::hypercubic(3, 1.0).unwrap();
        assert!(matches!(
            build_plane_wave_basis(&lat, 1e9),
            Err(Error::BasisTooLarge { .. })
        ));
        assert!(PlaneWaveBasis::with_cap(&lat, 200.0, 10).is_err());
        assert!(build_plane_wave_basis(&lat, 0.0).is_err());
    }

    #[test]
    fn position_moments_closed_form() {
        let lat = CrystalLattice::chain(1.0).unwrap();
        let b = build_plane_wave_basis(&lat, 20.0).unwrap();
        let x = &b.position_moments()[0];
        // diagonal: int_0^1 x dx
        assert!((x[(0, 0)].re - 0.5).abs() < 1e-15);
        // a = G=0 row, b = G=+2pi column: q = 1 -> -i / (2 pi)
        let v = x[(0, 2)];
        assert!(v.re.abs() < 1e-16 && (v.im + 1.0 / (2.0 * PI)).abs() < 1e-15);
    }
}
