//! The correction term Delta by every available route, and the identities linking them.

mod current;
mod free;
mod surface;

pub use current::{generalized_current, CurrentFormulation, GeneralizedCurrent};
pub use free::{free_particle_identity_check, FreeParticleReport};
pub use surface::{delta_surface_term, SurfaceReport};

use nalgebra::Vector3;
use num_complex::Complex64;
use serde::Serialize;

use crate::elements::{momentum_matrix, position_matrix, vec_norm, VectorBlock};
use crate::error::{Error, Result};
use crate::solver::{is_degenerate, BlochSolution, DEGENERACY_TOL};

/// Which Hamiltonian the derivative is taken against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Formulation {
    /// Parameter-free H acting on full Bloch functions f = u e^{ik.r}.
    #[serde(rename = "H")]
    H,
    /// k-dependent H(k) acting on cell-periodic u.
    #[serde(rename = "H(k)")]
    Hk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Route {
    ClosedForm,
    Surface,
    Boundary,
    Divergence,
}

/// Delta[n'][n] at one k, with a mask of entries that could not be formed.
#[derive(Debug, Clone)]
pub struct DeltaBlock {
    pub k: Vector3<f64>,
    pub formulation: Formulation,
    pub route: Route,
    pub values: VectorBlock,
    pub valid: Vec<Vec<bool>>,
}

impl DeltaBlock {
    pub fn n_bands(&self) -> usize {
        self.values.n_bands()
    }

    pub fn get(&self, row: usize, col: usize) -> Option<Vector3<Complex64>> {
        self.valid[row][col].then(|| self.values.get(row, col))
    }

    /// Off-diagonal pairs flagged missing.
    pub fn missing_pairs(&self) -> Vec<(usize, usize)> {
        let n = self.n_bands();
        (0..n)
            .flat_map(|a| (0..n).map(move |b| (a, b)))
            .filter(|&(a, b)| a != b && !self.valid[a][b])
            .collect()
    }

    /// Largest |entry| over valid entries.
    pub fn max_norm(&self) -> f64 {
        let n = self.n_bands();
        let mut worst: f64 = 0.0;
        for a in 0..n {
            for b in 0..n {
                if let Some(v) = self.get(a, b) {
                    worst = worst.max(vec_norm(&v));
                }
            }
        }
        worst
    }
}

/// Delta^H[n'][n] = P[n'][n] + i (e_n - e_n') R[n'][n] for one pair.
pub fn delta_closed_form_entry(
    p: &VectorBlock,
    r: &VectorBlock,
    energies: &[f64],
    row: usize,
    col: usize,
) -> Result<Vector3<Complex64>> {
    if row == col {
        return Err(Error::InvalidArgument(
            "the closed form is defined for distinct bands only".into(),
        ));
    }
    if is_degenerate(energies[row], energies[col], DEGENERACY_TOL) {
        return Err(Error::Degenerate {
            a: row.min(col),
            b: row.max(col),
            gap: (energies[row] - energies[col]).abs(),
            k: [f64::NAN; 3],
        });
    }
    let de = Complex64::new(0.0, energies[col] - energies[row]);
    Ok(p.get(row, col) + r.get(row, col) * de)
}

/// Closed-form Delta^H over all off-diagonal pairs; diagonal and degenerate pairs are flagged missing.
pub fn delta_closed_form(k: Vector3<f64>, p: &VectorBlock, r: &VectorBlock, energies: &[f64]) -> Result<DeltaBlock> {
    let n = p.n_bands();
    if r.n_bands() != n || energies.len() != n || r.dim() != p.dim() {
        return Err(Error::InvalidArgument("P, R and energies disagree in shape".into()));
    }
    let mut values = VectorBlock::zeros(p.dim(), n);
    let mut valid = vec![vec![false; n]; n];
    for a in 0..n {
        for b in 0..n {
            if let Ok(v) = delta_closed_form_entry(p, r, energies, a, b) {
                values.set(a, b, &v);
                valid[a][b] = true;
            }
        }
    }
    Ok(DeltaBlock {
        k,
        formulation: Formulation::H,
        route: Route::ClosedForm,
        values,
        valid,
    })
}

pub fn delta_closed_form_for(sol: &BlochSolution) -> Result<DeltaBlock> {
    delta_closed_form(sol.k, &momentum_matrix(sol), &position_matrix(sol), &sol.energies)
}

#[derive(Debug, Clone, Serialize)]
pub struct PairResidual {
    pub row: usize,
    pub col: usize,
    pub residual: f64,
    pub relative: f64,
}

/// Residuals of Delta^H - Delta^{H(k)} = P + i (e_n - e_n') R.
#[derive(Debug, Clone, Serialize)]
pub struct IdentityReport {
    pub pairs: Vec<PairResidual>,
    pub max_residual: f64,
    pub max_relative: f64,
}

pub fn delta_difference_identity(
    delta_h: &DeltaBlock,
    delta_hk: &DeltaBlock,
    p: &VectorBlock,
    r: &VectorBlock,
    energies: &[f64],
) -> IdentityReport {
    let n = delta_h.n_bands();
    let mut pairs = Vec::new();
    for a in 0..n {
        for b in 0..n {
            if a == b {
                continue;
            }
            let (Some(dh), Some(dhk)) = (delta_h.get(a, b), delta_hk.get(a, b)) else {
                continue;
            };
            let de = Complex64::new(0.0, energies[b] - energies[a]);
            let rhs = p.get(a, b) + r.get(a, b) * de;
            let residual = vec_norm(&(dh - dhk - rhs));
            let scale = vec_norm(&dh).max(vec_norm(&rhs));
            let relative = if scale > 0.0 { residual / scale } else { residual };
            pairs.push(PairResidual {
                row: a,
                col: b,
                residual,
                relative,
            });
        }
    }
    let max_residual = pairs.iter().map(|p| p.residual).fold(0.0, f64::max);
    let max_relative = pairs.iter().map(|p| p.relative).fold(0.0, f64::max);
    IdentityReport {
        pairs,
        max_residual,
        max_relative,
    }
}

/// A block of zeros standing in for Delta^{H(k)} when only Delta^H is known.
pub fn zero_delta(k: Vector3<f64>, dim: usize, n: usize, formulation: Formulation) -> DeltaBlock {
    DeltaBlock {
        k,
        formulation,
        route: Route::ClosedForm,
        values: VectorBlock::zeros(dim, n),
        valid: vec![vec![true; n]; n],
    }
}
