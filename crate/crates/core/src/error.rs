use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("basis size {size} exceeds the hard cap {cap} (e_cut = {e_cut})")]
    BasisTooLarge { size: usize, cap: usize, e_cut: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("inconsistent potential coefficient at G = {g:?}: {detail}")]
    InconsistentPotential { g: Vec<i32>, detail: String },

    #[error("grid with {given} points per axis under-resolves the basis; need at least {required}")]
    UnderResolvedGrid { given: usize, required: usize },

    #[error("lattice mismatch between basis and potential")]
    LatticeMismatch,

    #[error(
        "eigensolver did not converge (dimension {dimension}, frobenius norm {frobenius_norm:e}, \
         hermiticity residual {hermiticity_residual:e})"
    )]
    EigenNonConvergence {
        dimension: usize,
        frobenius_norm: f64,
        hermiticity_residual: f64,
    },

    #[error("band crossing detected for band {band}: |overlap| = {overlap:e}")]
    BandCrossing { band: usize, overlap: f64 },

    #[error("bands {a} and {b} are degenerate at k = {k:?} (gap {gap:e})")]
    Degenerate { a: usize, b: usize, gap: f64, k: [f64; 3] },

    #[error("integration failed: {0}")]
    Integration(String),
}
