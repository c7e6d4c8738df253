//! Shared fixtures for unit tests: the three-mode demo system.

use crate::system::{ModeMatrices, SwitchedAffineSystem};
use nalgebra::DMatrix;

/// Three-mode, two-state switched system with static output feedback, the
/// standing example across the test suite.
pub fn paper_system() -> SwitchedAffineSystem {
    let a = [
        DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, -0.4]),
        DMatrix::from_row_slice(2, 2, &[0.5, -0.2, 0.0, -0.4]),
        DMatrix::from_row_slice(2, 2, &[-0.5, 0.0, 0.1, -0.4]),
    ];
    let b = [
        DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
        DMatrix::from_row_slice(2, 1, &[1.0, 1.0]),
        DMatrix::from_row_slice(2, 1, &[1.0, 0.0]),
    ];
    let k = [
        DMatrix::from_row_slice(1, 2, &[-0.0395, -0.0741]),
        DMatrix::from_row_slice(1, 2, &[-0.0648, 0.0510]),
        DMatrix::from_row_slice(1, 2, &[-0.0420, 0.0326]),
    ];
    let c = [
        DMatrix::identity(2, 2),
        DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
        DMatrix::identity(2, 2),
    ];
    let e = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
    let d = DMatrix::from_row_slice(2, 2, &[0.01, 0.0, 0.01, -0.01]);
    let modes = (0..3)
        .map(|m| ModeMatrices {
            a: a[m].clone(),
            b: b[m].clone(),
            e: e.clone(),
            w: DMatrix::zeros(2, 2),
            c: c[m].clone(),
            d: d.clone(),
            k: k[m].clone(),
        })
        .collect();
    SwitchedAffineSystem::new(modes).unwrap()
}
