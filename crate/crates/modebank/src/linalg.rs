//! Small dense linear-algebra helpers on top of nalgebra.

use crate::error::{CoreError, Result};
use nalgebra::{DMatrix, DVector};

/// Spectral radius margin: matrices with ρ ≤ 1 - MARGIN count as stable.
/// Guards eigen-solver noise at the unit circle.
pub const STABILITY_MARGIN: f64 = 1e-9;

/// Relative singular-value cutoff for numerical rank decisions.
pub const RANK_REL_TOL: f64 = 1e-9;

/// Spectral radius of a square matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    assert!(m.is_square(), "spectral_radius: matrix must be square");
    if m.nrows() == 0 {
        return 0.0;
    }
    m.complex_eigenvalues()
        .iter()
        .map(|ev| ev.norm())
        .fold(0.0, f64::max)
}

/// True iff every eigenvalue magnitude is below 1 with the configured margin.
pub fn spectral_radius_stable(m: &DMatrix<f64>) -> Result<bool> {
    if !m.is_square() {
        return Err(CoreError::DimensionMismatch(format!(
            "stability check needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(spectral_radius(m) <= 1.0 - STABILITY_MARGIN)
}

/// Numerical rank via SVD: singular values below `RANK_REL_TOL` times the
/// largest count as zero.
pub fn rank(m: &DMatrix<f64>) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let svd = m.clone().svd(false, false);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    svd.singular_values
        .iter()
        .filter(|&&s| s > RANK_REL_TOL * smax)
        .count()
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values[0]
}

/// Solve (I - A) x = b, failing when the matrix is numerically singular.
pub fn solve_i_minus(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let n = a.nrows();
    let m = DMatrix::identity(n, n) - a;
    let lu = m.clone().lu();
    let x = lu
        .solve(b)
        .ok_or_else(|| CoreError::NearSingular("I - A is singular".into()))?;
    let resid = (&m * &x - b).amax();
    let scale = b.amax().max(1.0);
    if resid > 1e-10 * scale {
        return Err(CoreError::NearSingular(format!(
            "I - A solve residual {resid:.3e} exceeds 1e-10 relative tolerance"
        )));
    }
    Ok(x)
}

/// Minimum eigenvalue of a symmetric matrix.
pub fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
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
