//! Dense linear-algebra helpers shared across the crate.

use nalgebra::{DMatrix, DVector};

/// Spectral norm (largest singular value) of a dense matrix.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// Spectral norm of the horizontal block `[a | b]`.
pub fn block_norm(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let mut block = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    block.view_mut((0, 0), (a.nrows(), a.ncols())).copy_from(a);
    block
        .view_mut((0, a.ncols()), (b.nrows(), b.ncols()))
        .copy_from(b);
    spectral_norm(&block)
}

/// Euclidean norm of a vector.
pub fn vec_norm(v: &DVector<f64>) -> f64 {
    v.norm()
}
