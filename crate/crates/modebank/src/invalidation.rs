//! LP-feasibility model invalidation: a window of measured outputs is
//! consistent with the healthy model iff some bounded state, input
//! uncertainty and measurement noise sequence explains it. Infeasibility of
//! the LP invalidates the healthy model over that window.

use crate::conic::{ConicProgram, LinExpr, SolveStatus};
use crate::error::{CoreError, Result};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

/// One invalidation window: model, nominal input, bounds and the measured
/// outputs y(0..T-1).
#[derive(Debug, Clone)]
pub struct InvalidationWindow {
    /// Healthy state matrix (n_x × n_x).
    pub a: DMatrix<f64>,
    /// Input matrix (n_x × n_d).
    pub e: DMatrix<f64>,
    /// Output matrix (n_y × n_x).
    pub c: DMatrix<f64>,
    /// Nominal constant input T_d (n_d).
    pub nominal_input: DVector<f64>,
    /// Coordinate of the input vector the scalar uncertainty ν enters.
    pub uncertainty_coord: usize,
    /// Elementwise state bounds (lower, upper).
    pub x_bounds: (DVector<f64>, DVector<f64>),
    /// Scalar uncertainty bounds (lower, upper).
    pub nu_bounds: (f64, f64),
    /// Elementwise measurement-noise bounds (lower, upper).
    pub w_bounds: (DVector<f64>, DVector<f64>),
    /// Measured outputs, one per tick; length T ≥ 2.
    pub outputs: Vec<DVector<f64>>,
}

/// Outcome of one window check.
#[derive(Debug, Clone, PartialEq)]
pub enum InvalidationOutcome {
    /// A bounded explanation exists; the certificate carries the explaining
    /// state sequence.
    Feasible { states: Vec<DVector<f64>> },
    /// No bounded explanation: the healthy model is invalidated here.
    Infeasible,
}

impl InvalidationWindow {
    fn validate(&self) -> Result<()> {
        let n_x = self.a.nrows();
        let n_y = self.c.nrows();
        let n_d = self.e.ncols();
        if !self.a.is_square() || self.e.nrows() != n_x || self.c.ncols() != n_x {
            return Err(CoreError::DimensionMismatch("model matrices inconsistent".into()));
        }
        if self.nominal_input.len() != n_d {
            return Err(CoreError::DimensionMismatch("nominal input length".into()));
        }
        if self.uncertainty_coord >= n_d {
            return Err(CoreError::InvalidParameter {
                name: "uncertainty_coord",
                reason: format!("{} outside 0..{n_d}", self.uncertainty_coord),
            });
        }
        if self.outputs.len() < 2 {
            return Err(CoreError::InvalidParameter {
                name: "outputs",
                reason: "window length T must be at least 2".into(),
            });
        }
        if self.outputs.iter().any(|y| y.len() != n_y) {
            return Err(CoreError::DimensionMismatch("output sample length".into()));
        }
        let ordered = |l: &DVector<f64>, u: &DVector<f64>| l.iter().zip(u.iter()).all(|(a, b)| a <= b);
        if self.x_bounds.0.len() != n_x
            || self.x_bounds.1.len() != n_x
            || !ordered(&self.x_bounds.0, &self.x_bounds.1)
        {
            return Err(CoreError::InvalidParameter {
                name: "x_bounds",
                reason: "must be elementwise ordered with length n_x".into(),
            });
        }
        if self.nu_bounds.0 > self.nu_bounds.1 {
            return Err(CoreError::InvalidParameter {
                name: "nu_bounds",
                reason: "lower bound exceeds upper".into(),
            });
        }
        if self.w_bounds.0.len() != n_y
            || self.w_bounds.1.len() != n_y
            || !ordered(&self.w_bounds.0, &self.w_bounds.1)
        {
            return Err(CoreError::InvalidParameter {
                name: "w_bounds",
                reason: "must be elementwise ordered with length n_y".into(),
            });
        }
        Ok(())
    }
}

/// Check one window by LP feasibility.
///
/// Variables x(k), ν(k), ω(k) for k < T; constraints
/// `x(k+1) = A x(k) + E (T_d + e_c ν(k))` for k < T-1,
/// `y(k) = C x(k) + ω(k)` for k < T, plus the box bounds.
pub fn invalidate(window: &InvalidationWindow) -> Result<InvalidationOutcome> {
    window.validate()?;
    let t = window.outputs.len();
    let n_x = window.a.nrows();
    let n_y = window.c.nrows();

    let mut p = ConicProgram::new();
    let x_vars: Vec<Vec<usize>> = (0..t)
        .map(|k| (0..n_x).map(|i| p.scalar(format!("x[{k},{i}]"))).collect())
        .collect();
    let nu_vars: Vec<usize> = (0..t).map(|k| p.scalar(format!("nu[{k}]"))).collect();
    let w_vars: Vec<Vec<usize>> = (0..t)
        .map(|k| (0..n_y).map(|i| p.scalar(format!("w[{k},{i}]"))).collect())
        .collect();

    // dynamics: x(k+1) - A x(k) - E T_d - (E e_c) ν(k) = 0
    let e_nu = window.e.column(window.uncertainty_coord).into_owned();
    let e_td = &window.e * &window.nominal_input;
    for k in 0..t - 1 {
        for r in 0..n_x {
            let mut expr = LinExpr::variable(x_vars[k + 1][r]);
            for c_idx in 0..n_x {
                expr = expr.add(&LinExpr::term(x_vars[k][c_idx], -window.a[(r, c_idx)]));
            }
            expr = expr.add(&LinExpr::term(nu_vars[k], -e_nu[r]));
            expr = expr.add_constant(-e_td[r]);
            p.eq_zero(expr);
        }
    }
    // outputs: C x(k) + ω(k) = y(k)
    for k in 0..t {
        for r in 0..n_y {
            let mut expr = LinExpr::term(w_vars[k][r], 1.0);
            for c_idx in 0..n_x {
                expr = expr.add(&LinExpr::term(x_vars[k][c_idx], window.c[(r, c_idx)]));
            }
            expr = expr.add_constant(-window.outputs[k][r]);
            p.eq_zero(expr);
        }
    }
    // box bounds
    for k in 0..t {
        for i in 0..n_x {
            p.geq_zero(LinExpr::variable(x_vars[k][i]).add_constant(-window.x_bounds.0[i]));
            p.geq_zero(LinExpr::term(x_vars[k][i], -1.0).add_constant(window.x_bounds.1[i]));
        }
        p.geq_zero(LinExpr::variable(nu_vars[k]).add_constant(-window.nu_bounds.0));
        p.geq_zero(LinExpr::term(nu_vars[k], -1.0).add_constant(window.nu_bounds.1));
        for i in 0..n_y {
            p.geq_zero(LinExpr::variable(w_vars[k][i]).add_constant(-window.w_bounds.0[i]));
            p.geq_zero(LinExpr::term(w_vars[k][i], -1.0).add_constant(window.w_bounds.1[i]));
        }
    }

    let report = p.solve(1e-7)?;
    match report.status {
        SolveStatus::Optimal => {
            let states = (0..t)
                .map(|k| DVector::from_fn(n_x, |i, _| report.x[x_vars[k][i]]))
                .collect();
            Ok(InvalidationOutcome::Feasible { states })
        }
        SolveStatus::Infeasible => Ok(InvalidationOutcome::Infeasible),
        _ => Err(CoreError::NumericalFailure(format!(
            "invalidation LP: {:?} (violation {:.3e})",
            report.status, report.max_violation
        ))),
    }
}

/// Sliding-window sweep over a measured output sequence: window ending at
/// tick k covers y(k-T+1 ..= k). Returns (end tick, outcome) pairs.
pub fn sweep(
    template: &InvalidationWindow,
    outputs: &[DVector<f64>],
    window_len: usize,
) -> Result<Vec<(usize, InvalidationOutcome)>> {
    if window_len < 2 {
        return Err(CoreError::InvalidParameter {
            name: "window_len",
            reason: "must be at least 2".into(),
        });
    }
    if outputs.len() < window_len {
        return Err(CoreError::InvalidParameter {
            name: "outputs",
            reason: format!(
                "need at least {window_len} samples, got {}",
                outputs.len()
            ),
        });
    }
    let ends: Vec<usize> = (window_len - 1..outputs.len()).collect();
    ends.par_iter()
        .map(|&end| {
            let mut w = template.clone();
            w.outputs = outputs[end + 1 - window_len..=end].to_vec();
            invalidate(&w).map(|o| (end, o))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn surrogate() -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let a = DMatrix::from_row_slice(2, 2, &[0.7, 0.1, 0.0, 0.5]);
        let e = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        (a, e, c)
    }

    fn template(outputs: Vec<DVector<f64>>) -> InvalidationWindow {
        let (a, e, c) = surrogate();
        InvalidationWindow {
            a,
            e,
            c,
            nominal_input: DVector::from_vec(vec![1.0, 0.5]),
            uncertainty_coord: 1,
            x_bounds: (DVector::from_element(2, -10.0), DVector::from_element(2, 10.0)),
            nu_bounds: (-0.3, 0.3),
            w_bounds: (DVector::from_element(2, -0.03), DVector::from_element(2, 0.03)),
            outputs,
        }
    }

    fn healthy_trace(len: usize, seed: u64, nu_scale: f64, w_scale: f64) -> Vec<DVector<f64>> {
        let (a, e, c) = surrogate();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let td = DVector::from_vec(vec![1.0, 0.5]);
        let mut x = DVector::from_vec(vec![4.0, 1.5]);
        let mut ys = Vec::with_capacity(len);
        for _ in 0..len {
            let w = DVector::from_fn(2, |_, _| rng.gen_range(-w_scale..=w_scale));
            ys.push(&c * &x + w);
            let nu = rng.gen_range(-nu_scale..=nu_scale);
            let mut input = td.clone();
            input[1] += nu;
            x = &a * &x + &e * input;
        }
        ys
    }

    #[test]
    fn healthy_data_is_feasible() {
        let ys = healthy_trace(12, 5, 0.2, 0.02);
        let w = template(ys);
        assert!(matches!(
            invalidate(&w).unwrap(),
            InvalidationOutcome::Feasible { .. }
        ));
    }

    #[test]
    fn corrupted_output_is_infeasible() {
        // output corruption 10x the noise bound on a window
        let mut ys = healthy_trace(8, 6, 0.2, 0.02);
        for y in ys.iter_mut().skip(4) {
            y[0] += 0.3; // 10 × the 0.03 noise bound
        }
        let w = template(ys);
        assert_eq!(invalidate(&w).unwrap(), InvalidationOutcome::Infeasible);
    }

    #[test]
    fn sub_window_of_feasible_window_is_feasible() {
        let ys = healthy_trace(12, 7, 0.2, 0.02);
        let whole = template(ys.clone());
        assert!(matches!(
            invalidate(&whole).unwrap(),
            InvalidationOutcome::Feasible { .. }
        ));
        let sub = template(ys[3..9].to_vec());
        assert!(matches!(
            invalidate(&sub).unwrap(),
            InvalidationOutcome::Feasible { .. }
        ));
    }

    #[test]
    fn enlarging_bounds_preserves_feasibility() {
        // nested-box sweep: a window feasible at tight bounds stays feasible
        // at every looser box; an infeasible one can only become feasible.
        let mut ys = healthy_trace(8, 8, 0.25, 0.025);
        ys[5][1] += 0.08;
        let mut last_feasible = false;
        for scale in [1.0, 2.0, 4.0, 16.0] {
            let mut w = template(ys.clone());
            w.nu_bounds = (-0.3 * scale, 0.3 * scale);
            w.w_bounds = (
                DVector::from_element(2, -0.03 * scale),
                DVector::from_element(2, 0.03 * scale),
            );
            let feasible = matches!(
                invalidate(&w).unwrap(),
                InvalidationOutcome::Feasible { .. }
            );
            assert!(feasible || !last_feasible, "feasibility lost when enlarging bounds");
            last_feasible = feasible;
        }
        assert!(last_feasible);
    }

    #[test]
    fn window_too_short_rejected() {
        let w = template(healthy_trace(1, 9, 0.1, 0.01));
        assert!(invalidate(&w).is_err());
    }
}
