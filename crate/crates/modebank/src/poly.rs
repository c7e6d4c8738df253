//! Polynomial-matrix utilities: monic denominators from roots, banded
//! block-Toeplitz stackings and coefficient-level products.
//!
//! A degree-d polynomial matrix Q(q) = Σ_m Q_m q^m is handled as the slice
//! of its constant coefficient matrices `[Q_0, ..., Q_d]`.

use crate::error::{CoreError, Result};
use nalgebra::DMatrix;

/// Coefficients `[a_0, ..., a_{deg-1}]` of the monic polynomial with the
/// given roots: `a(q) = ∏ (q - λ_m) = q^deg + a_{deg-1} q^{deg-1} + ... + a_0`.
pub fn monic_from_roots(roots: &[f64]) -> Vec<f64> {
    let mut coeffs = vec![1.0]; // constant polynomial 1, ascending powers
    for &r in roots {
        // multiply by (q - r)
        let mut next = vec![0.0; coeffs.len() + 1];
        for (p, &c) in coeffs.iter().enumerate() {
            next[p] -= r * c;
            next[p + 1] += c;
        }
        coeffs = next;
    }
    coeffs.pop(); // drop the leading monic 1
    coeffs
}

/// Evaluate `a(q) = q^deg + Σ a_m q^m` at a real point.
pub fn eval_monic(a_coeffs: &[f64], q: f64) -> f64 {
    let deg = a_coeffs.len();
    let mut acc = q.powi(deg as i32);
    for (m, &c) in a_coeffs.iter().enumerate() {
        acc += c * q.powi(m as i32);
    }
    acc
}

/// Evaluate a polynomial row/matrix `Q(q) = Σ Q_m q^m` at a real point.
pub fn eval_poly_matrix(coeffs: &[DMatrix<f64>], q: f64) -> DMatrix<f64> {
    assert!(!coeffs.is_empty());
    let mut acc = DMatrix::zeros(coeffs[0].nrows(), coeffs[0].ncols());
    for (m, c) in coeffs.iter().enumerate() {
        acc += c * q.powi(m as i32);
    }
    acc
}

/// Banded block-Toeplitz stacking of Q2(q) = Σ Q2_m q^m against a degree-d1
/// left factor: block row r of the result carries `[Q2_0 ... Q2_{d2}]`
/// shifted r block-columns right, with d1+1 block rows and d1+d2+1 block
/// columns in total.
pub fn toeplitz_stack(q2: &[DMatrix<f64>], d1: usize) -> Result<DMatrix<f64>> {
    if q2.is_empty() {
        return Err(CoreError::DimensionMismatch("empty coefficient list".into()));
    }
    let (r, c) = q2[0].shape();
    if q2.iter().any(|m| m.shape() != (r, c)) {
        return Err(CoreError::DimensionMismatch(
            "coefficient matrices differ in shape".into(),
        ));
    }
    let d2 = q2.len() - 1;
    let mut out = DMatrix::zeros((d1 + 1) * r, (d1 + d2 + 1) * c);
    for row in 0..=d1 {
        for (m, coeff) in q2.iter().enumerate() {
            out.view_mut((row * r, (row + m) * c), (r, c)).copy_from(coeff);
        }
    }
    Ok(out)
}

/// Coefficient-level product of two polynomial matrices, returning the
/// stacking of Q2 and the coefficients of Q1·Q2 computed as `Q̄1 · Q̄2`.
///
/// The product equals direct convolution `Σ_{a+b=m} Q1_a Q2_b`.
pub fn stack_poly_product(
    q1: &[DMatrix<f64>],
    q2: &[DMatrix<f64>],
) -> Result<(DMatrix<f64>, Vec<DMatrix<f64>>)> {
    if q1.is_empty() || q2.is_empty() {
        return Err(CoreError::DimensionMismatch("empty coefficient list".into()));
    }
    let (n1, n2a) = q1[0].shape();
    let (n2b, n3) = q2[0].shape();
    if n2a != n2b {
        return Err(CoreError::DimensionMismatch(format!(
            "inner dimensions differ: {n2a} vs {n2b}"
        )));
    }
    if q1.iter().any(|m| m.shape() != (n1, n2a)) || q2.iter().any(|m| m.shape() != (n2b, n3)) {
        return Err(CoreError::DimensionMismatch(
            "coefficient matrices differ in shape".into(),
        ));
    }
    let d1 = q1.len() - 1;
    let d2 = q2.len() - 1;

    let mut q1_bar = DMatrix::zeros(n1, (d1 + 1) * n2a);
    for (m, coeff) in q1.iter().enumerate() {
        q1_bar.view_mut((0, m * n2a), (n1, n2a)).copy_from(coeff);
    }
    let q2_bar = toeplitz_stack(q2, d1)?;
    let flat = &q1_bar * &q2_bar;
    let product = (0..=(d1 + d2))
        .map(|m| flat.view((0, m * n3), (n1, n3)).into_owned())
        .collect();
    Ok((q2_bar, product))
}
