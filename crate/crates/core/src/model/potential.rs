use std::collections::BTreeMap;

use num_complex::Complex64;

use super::{CrystalLattice, Miller};
use crate::error::{Error, Result};

const CONSISTENCY_TOL: f64 = 1e-12;

/// Real periodic potential V(r) = sum_G V_G e^{iG.r}, stored with both
/// members of every conjugate pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicPotential {
    lattice: CrystalLattice,
    coeffs: BTreeMap<Miller, Complex64>,
}

/// Builds a potential from Fourier amplitudes, adding missing conjugate partners.
pub fn potential_from_fourier(lattice: &CrystalLattice, coeffs: &[(Vec<i32>, Complex64)]) -> Result<PeriodicPotential> {
    let dim = lattice.dim();
    let mut given: BTreeMap<Miller, Complex64> = BTreeMap::new();
    for (g, v) in coeffs {
        if g.len() != dim {
            return Err(Error::InvalidArgument(format!(
                "potential coefficient G = {g:?} has {} coordinates, lattice dimension is {dim}",
                g.len()
            )));
        }
        if !(v.re.is_finite() && v.im.is_finite()) {
            return Err(Error::InconsistentPotential {
                g: g.clone(),
                detail: "amplitude is not finite".into(),
            });
        }
        let mut m = [0; 3];
        m[..dim].copy_from_slice(g);
        if let Some(prev) = given.get(&m) {
            if (prev - v).norm() > CONSISTENCY_TOL {
                return Err(Error::InconsistentPotential {
                    g: g.clone(),
                    detail: format!("supplied twice with different values {prev} and {v}"),
                });
            }
        }
        given.insert(m, *v);
    }

    let mut out = given.clone();
    for (m, v) in &given {
        let neg = [-m[0], -m[1], -m[2]];
        match given.get(&neg) {
            Some(partner) => {
                if (partner - v.conj()).norm() > CONSISTENCY_TOL {
                    return Err(Error::InconsistentPotential {
                        g: m[..dim].to_vec(),
                        detail: format!(
                            "V(-G) = {partner} is not the conjugate of V(G) = {v}; \
                             only real potentials are supported"
                        ),
                    });
                }
            }
            None => {
                out.insert(neg, v.conj());
            }
        }
    }
    Ok(PeriodicPotential {
        lattice: lattice.clone(),
        coeffs: out,
    })
}

impl PeriodicPotential {
    pub fn free(lattice: &CrystalLattice) -> Self {
        Self {
            lattice: lattice.clone(),
            coeffs: BTreeMap::new(),
        }
    }

    pub fn lattice(&self) -> &CrystalLattice {
        &self.lattice
    }

    /// V_G; absent coefficients are zero.
    pub fn coefficient(&self, m: &Miller) -> Complex64 {
        self.coeffs.get(m).copied().unwrap_or_default()
    }

    pub fn coefficients(&self) -> &BTreeMap<Miller, Complex64> {
        &self.coeffs
    }

    pub fn is_free(&self) -> bool {
        self.coeffs.values().all(|v| v.norm() == 0.0)
    }

    /// V at a Cartesian point.
    pub fn evaluate(&self, r: &nalgebra::Vector3<f64>) -> f64 {
        self.coeffs
            .iter()
            .map(|(m, v)| {
                let phase = self.lattice.g_vector(m).dot(r);
                (v * Complex64::from_polar(1.0, phase)).re
            })
            .sum()
    }
}
