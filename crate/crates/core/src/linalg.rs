//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

/// Smallest eigenvalue of a symmetric matrix. Returns +inf for empty input.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// PSD up to a tolerance relative to the matrix scale.
pub fn is_psd(m: &DMatrix<f64>) -> bool {
    let scale = m.abs().max().max(1.0);
    min_eigenvalue(m) >= -1e-12 * scale
}

/// `[[R, S], [Sᵀ, Q]]` for the control weight block.
pub fn weight_block(r: &DMatrix<f64>, s: &DVector<f64>, q: f64) -> DMatrix<f64> {
    let m = r.nrows();
    let mut block = DMatrix::zeros(m + 1, m + 1);
    block.view_mut((0, 0), (m, m)).copy_from(r);
    for i in 0..m {
        block[(i, m)] = s[i];
        block[(m, i)] = s[i];
    }
    block[(m, m)] = q;
    block
}
