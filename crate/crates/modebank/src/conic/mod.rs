//! Solver-agnostic conic programs (linear objective, affine equalities and
//! inequalities, PSD blocks) with a Clarabel backend, plus an independent
//! Gramian-based H2-norm oracle.
//!
//! Every `Optimal` report has been re-verified against the program data; a
//! converged backend point that fails the violation check is downgraded to
//! `NumericalFailure` rather than returned silently.

mod expr;

pub use expr::{ExprMat, LinExpr};

use crate::error::{CoreError, Result};
use crate::linalg;
use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use nalgebra::DMatrix;

/// Default backend tolerance quoted by all downstream certificates.
pub const DEFAULT_TOL: f64 = 1e-8;

/// Symmetric PSD block constraint `M(x) ⪰ 0`, stored as the upper triangle
/// in column-major (svec) order so both mirror entries reference the same
/// affine expression.
#[derive(Debug, Clone)]
pub struct PsdBlock {
    pub n: usize,
    tri: Vec<LinExpr>,
}

impl PsdBlock {
    fn tri_index(n: usize, r: usize, c: usize) -> usize {
        debug_assert!(r <= c && c < n);
        c * (c + 1) / 2 + r
    }

    pub fn entry(&self, r: usize, c: usize) -> &LinExpr {
        let (a, b) = if r <= c { (r, c) } else { (c, r) };
        &self.tri[Self::tri_index(self.n, a, b)]
    }

    /// Evaluate the full symmetric matrix at a point.
    pub fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |r, c| self.entry(r, c).eval(x))
    }
}

/// Solve outcome classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

/// Result of a solve, carrying the verified point when `Optimal`.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub status: SolveStatus,
    /// Assignment for every declared variable (meaningful when Optimal).
    pub x: Vec<f64>,
    /// Linear objective evaluated at `x`.
    pub objective: f64,
    /// Largest constraint violation re-measured from the program data.
    pub max_violation: f64,
    /// Tolerance the verification was run at.
    pub tol: f64,
}

/// A conic program: minimize a linear objective over affine equalities,
/// affine inequalities (`expr >= 0`) and PSD blocks.
#[derive(Debug, Clone, Default)]
pub struct ConicProgram {
    names: Vec<String>,
    objective: LinExpr,
    equalities: Vec<LinExpr>,
    inequalities: Vec<LinExpr>,
    psd_blocks: Vec<PsdBlock>,
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn n_vars(&self) -> usize {
        self.names.len()
    }

    pub fn n_equalities(&self) -> usize {
        self.equalities.len()
    }

    pub fn n_inequalities(&self) -> usize {
        self.inequalities.len()
    }

    pub fn psd_blocks(&self) -> &[PsdBlock] {
        &self.psd_blocks
    }

    pub fn var_name(&self, id: usize) -> &str {
        &self.names[id]
    }

    /// Declare one scalar variable.
    pub fn scalar(&mut self, name: impl Into<String>) -> usize {
        self.names.push(name.into());
        self.names.len() - 1
    }

    /// Declare a scalar constrained to be nonnegative.
    pub fn nonneg(&mut self, name: impl Into<String>) -> usize {
        let id = self.scalar(name);
        self.inequalities.push(LinExpr::variable(id));
        id
    }

    /// Declare a full (not symmetric) matrix of fresh variables.
    pub fn full_matrix(&mut self, name: &str, rows: usize, cols: usize) -> ExprMat {
        let ids: Vec<usize> = (0..rows * cols)
            .map(|k| self.scalar(format!("{name}[{},{}]", k / cols, k % cols)))
            .collect();
        ExprMat::from_var_ids(&ids, rows, cols)
    }

    /// Declare a symmetric matrix: n(n+1)/2 fresh variables mirrored across
    /// the diagonal, so (r,c) and (c,r) are the same expression.
    pub fn symmetric_matrix(&mut self, name: &str, n: usize) -> ExprMat {
        let mut m = ExprMat::zeros(n, n);
        for c in 0..n {
            for r in 0..=c {
                let id = self.scalar(format!("{name}[{r},{c}]"));
                m[(r, c)] = LinExpr::variable(id);
                if r != c {
                    m[(c, r)] = LinExpr::variable(id);
                }
            }
        }
        m
    }

    /// Set the linear objective (minimized).
    pub fn minimize(&mut self, objective: LinExpr) {
        self.objective = objective;
    }

    /// Add `expr == 0`.
    pub fn eq_zero(&mut self, expr: LinExpr) {
        if !expr.is_zero() {
            self.equalities.push(expr);
        }
    }

    /// Add every entry of a matrix expression as an equality to zero.
    pub fn eq_zero_mat(&mut self, m: &ExprMat) {
        for e in m.iter() {
            self.eq_zero(e.clone());
        }
    }

    /// Add `expr >= 0`.
    pub fn geq_zero(&mut self, expr: LinExpr) {
        self.inequalities.push(expr);
    }

    /// Add a PSD constraint `M(x) ⪰ 0`. The matrix must be structurally
    /// symmetric: mirrored entries must be identical affine expressions.
    pub fn psd(&mut self, m: &ExprMat) -> Result<()> {
        let (rows, cols) = m.shape();
        if rows != cols {
            return Err(CoreError::MalformedProgram(format!(
                "PSD block must be square, got {rows}x{cols}"
            )));
        }
        let mut tri = Vec::with_capacity(rows * (rows + 1) / 2);
        for c in 0..cols {
            for r in 0..=c {
                let upper = &m[(r, c)];
                let lower = &m[(c, r)];
                if upper.sub(lower).terms.iter().any(|&(_, v)| v.abs() > 1e-12)
                    || (upper.constant - lower.constant).abs() > 1e-12
                {
                    return Err(CoreError::MalformedProgram(format!(
                        "PSD block asymmetric at ({r},{c})"
                    )));
                }
                tri.push(upper.clone());
            }
        }
        self.psd_blocks.push(PsdBlock { n: rows, tri });
        Ok(())
    }

    /// Add `M(x) ⪰ shift·I`.
    pub fn psd_shifted(&mut self, m: &ExprMat, shift: f64) -> Result<()> {
        let n = m.nrows();
        let shifted = m.sub(&ExprMat::identity(n).scale(shift));
        self.psd(&shifted)
    }

    /// Largest violation of all constraints at a point: |equality|,
    /// negative-part of inequalities, and negative-part of PSD minimum
    /// eigenvalues.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut v: f64 = 0.0;
        for e in &self.equalities {
            v = v.max(e.eval(x).abs());
        }
        for e in &self.inequalities {
            v = v.max(-e.eval(x));
        }
        for b in &self.psd_blocks {
            v = v.max(-linalg::min_symmetric_eigenvalue(&b.eval(x)));
        }
        v.max(0.0)
    }

    fn check_declared(&self) -> Result<()> {
        let n = self.n_vars();
        let check = |e: &LinExpr| -> Result<()> {
            if let Some(id) = e.max_var_id() {
                if id >= n {
                    return Err(CoreError::MalformedProgram(format!(
                        "expression references undeclared variable id {id}"
                    )));
                }
            }
            Ok(())
        };
        check(&self.objective)?;
        for e in self.equalities.iter().chain(&self.inequalities) {
            check(e)?;
        }
        for b in &self.psd_blocks {
            for e in &b.tri {
                check(e)?;
            }
        }
        Ok(())
    }

    /// Solve with Clarabel and verify the returned point independently.
    ///
    /// `Optimal` guarantees all equalities and inequalities hold within
    /// `tol` and every PSD block has minimum eigenvalue ≥ -tol, re-checked
    /// from the program data rather than trusted from the backend.
    pub fn solve(&self, tol: f64) -> Result<SolveReport> {
        if !(tol > 0.0) {
            return Err(CoreError::InvalidParameter {
                name: "tol",
                reason: "must be positive".into(),
            });
        }
        self.check_declared()?;
        let n = self.n_vars();

        // Constant-only programs: evaluate directly.
        if n == 0 {
            let viol = self.max_violation(&[]);
            return Ok(SolveReport {
                status: if viol <= tol {
                    SolveStatus::Optimal
                } else {
                    SolveStatus::Infeasible
                },
                x: Vec::new(),
                objective: self.objective.eval(&[]),
                max_violation: viol,
                tol,
            });
        }

        // Assemble A x + s = b with s in (Zero, Nonneg, PSD-triangle...) cones.
        let mut trips: Vec<(usize, usize, f64)> = Vec::new();
        let mut b = Vec::new();
        let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
        let mut row = 0usize;

        if !self.equalities.is_empty() {
            for e in &self.equalities {
                for &(id, c) in &e.terms {
                    trips.push((row, id, c));
                }
                b.push(-e.constant);
                row += 1;
            }
            cones.push(SupportedConeT::ZeroConeT(self.equalities.len()));
        }
        if !self.inequalities.is_empty() {
            for e in &self.inequalities {
                for &(id, c) in &e.terms {
                    trips.push((row, id, -c));
                }
                b.push(e.constant);
                row += 1;
            }
            cones.push(SupportedConeT::NonnegativeConeT(self.inequalities.len()));
        }
        let sqrt2 = 2f64.sqrt();
        for blk in &self.psd_blocks {
            let mut k = 0usize;
            for c in 0..blk.n {
                for r in 0..=c {
                    let scale = if r == c { 1.0 } else { sqrt2 };
                    let e = &blk.tri[k];
                    for &(id, coeff) in &e.terms {
                        trips.push((row, id, -coeff * scale));
                    }
                    b.push(e.constant * scale);
                    row += 1;
                    k += 1;
                }
            }
            cones.push(SupportedConeT::PSDTriangleConeT(blk.n));
        }

        let a = csc_from_triplets(row, n, &mut trips);
        let p = CscMatrix::zeros((n, n));
        let mut q = vec![0.0; n];
        for &(id, c) in &self.objective.terms {
            q[id] += c;
        }

        let settings = DefaultSettingsBuilder::default()
            .verbose(false)
            .tol_feas(tol * 1e-1)
            .tol_gap_abs(tol * 1e-1)
            .tol_gap_rel(tol * 1e-1)
            .build()
            .map_err(|e| CoreError::NumericalFailure(format!("solver settings: {e}")))?;
        let mut solver = DefaultSolver::new(&p, &q, &a, &b, &cones, settings)
            .map_err(|e| CoreError::NumericalFailure(format!("solver setup: {e:?}")))?;
        solver.solve();

        let status = solver.solution.status;
        let x = solver.solution.x.clone();
        let report = |status, x: Vec<f64>, viol| SolveReport {
            objective: self.objective.eval(&x),
            status,
            x,
            max_violation: viol,
            tol,
        };
        Ok(match status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => {
                let viol = self.max_violation(&x);
                if viol <= tol {
                    report(SolveStatus::Optimal, x, viol)
                } else {
                    report(SolveStatus::NumericalFailure, x, viol)
                }
            }
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                report(SolveStatus::Infeasible, vec![0.0; n], f64::NAN)
            }
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
                report(SolveStatus::Unbounded, vec![0.0; n], f64::NAN)
            }
            _ => report(SolveStatus::NumericalFailure, x, f64::NAN),
        })
    }

    /// Text dump of the assembled program for offline inspection.
    pub fn dump(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        writeln!(s, "variables ({}):", self.n_vars()).unwrap();
        for (i, name) in self.names.iter().enumerate() {
            writeln!(s, "  x{i} = {name}").unwrap();
        }
        writeln!(s, "minimize: {}", self.objective.render(&self.names)).unwrap();
        for (i, e) in self.equalities.iter().enumerate() {
            writeln!(s, "eq[{i}]: {} == 0", e.render(&self.names)).unwrap();
        }
        for (i, e) in self.inequalities.iter().enumerate() {
            writeln!(s, "ineq[{i}]: {} >= 0", e.render(&self.names)).unwrap();
        }
        for (i, blk) in self.psd_blocks.iter().enumerate() {
            writeln!(s, "psd[{i}] ({0}x{0}):", blk.n).unwrap();
            for c in 0..blk.n {
                for r in 0..=c {
                    writeln!(s, "  ({r},{c}): {}", blk.entry(r, c).render(&self.names)).unwrap();
                }
            }
        }
        s
    }
}

fn csc_from_triplets(rows: usize, cols: usize, trips: &mut Vec<(usize, usize, f64)>) -> CscMatrix {
    trips.sort_by_key(|&(r, c, _)| (c, r));
    let mut colptr = vec![0usize; cols + 1];
    let mut rowval = Vec::with_capacity(trips.len());
    let mut nzval = Vec::with_capacity(trips.len());
    let mut k = 0;
    for c in 0..cols {
        while k < trips.len() && trips[k].1 == c {
            // merge duplicates within a column
            let (r, _, mut v) = trips[k];
            k += 1;
            while k < trips.len() && trips[k].1 == c && trips[k].0 == r {
                v += trips[k].2;
                k += 1;
            }
            if v != 0.0 {
                rowval.push(r);
                nzval.push(v);
            }
        }
        colptr[c + 1] = rowval.len();
    }
    CscMatrix::new(rows, cols, colptr, rowval, nzval)
}

/// H2 norm of `C (qI - A)^{-1} B` from the controllability Gramian, solved
/// by fixed-point iteration `P <- A P Aᵀ + B Bᵀ` to residual 1e-12 (at most
/// 10000 iterations). Returns the norm, not its square.
pub fn h2_norm_oracle(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<f64> {
    if !a.is_square() || b.nrows() != a.nrows() || c.ncols() != a.nrows() {
        return Err(CoreError::DimensionMismatch(format!(
            "h2 oracle: A {}x{}, B {}x{}, C {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols(),
            c.nrows(),
            c.ncols()
        )));
    }
    let rho = linalg::spectral_radius(a);
    if rho > 1.0 - linalg::STABILITY_MARGIN {
        return Err(CoreError::Unstable { rho });
    }
    let bbt = b * b.transpose();
    let mut p = bbt.clone();
    let mut converged = false;
    for _ in 0..10_000 {
        let next = a * &p * a.transpose() + &bbt;
        let resid = (&next - &p).amax();
        p = next;
        if resid <= 1e-12 * p.amax().max(1.0) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(CoreError::NumericalFailure(
            "Lyapunov fixed-point iteration did not converge in 10000 steps".into(),
        ));
    }
    Ok((c * &p * c.transpose()).trace().max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn psd_corner_problem() {
        // minimize t s.t. [[t,1],[1,t]] ⪰ 0; PSD iff t >= 0 and t^2 >= 1.
        let mut p = ConicProgram::new();
        let t = p.scalar("t");
        let mut m = ExprMat::from_const(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
        m[(0, 0)] = LinExpr::variable(t);
        m[(1, 1)] = LinExpr::variable(t);
        p.psd(&m).unwrap();
        p.minimize(LinExpr::variable(t));
        let r = p.solve(1e-8).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert_relative_eq!(r.x[t], 1.0, epsilon = 1e-6);
        assert!(r.max_violation <= 1e-8);
    }

    #[test]
    fn contradictory_bounds_infeasible() {
        let mut p = ConicProgram::new();
        let x = p.scalar("x");
        p.geq_zero(LinExpr::variable(x).add_constant(-1.0)); // x >= 1
        p.geq_zero(LinExpr::term(x, -1.0)); // x <= 0
        let r = p.solve(1e-8).unwrap();
        assert_eq!(r.status, SolveStatus::Infeasible);
    }

    #[test]
    fn empty_program_is_optimal_zero() {
        let p = ConicProgram::new();
        let r = p.solve(1e-8).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert_eq!(r.objective, 0.0);
    }

    #[test]
    fn asymmetric_psd_rejected() {
        let mut p = ConicProgram::new();
        let x = p.scalar("x");
        let mut m = ExprMat::zeros(2, 2);
        m[(0, 1)] = LinExpr::variable(x);
        // (1,0) left at zero: asymmetric
        assert!(matches!(p.psd(&m), Err(CoreError::MalformedProgram(_))));
    }

    #[test]
    fn equality_handling() {
        // minimize x + y s.t. x - y == 1, x >= 0, y >= 0 -> (1, 0)
        let mut p = ConicProgram::new();
        let x = p.nonneg("x");
        let y = p.nonneg("y");
        p.eq_zero(
            LinExpr::variable(x)
                .sub(&LinExpr::variable(y))
                .add_constant(-1.0),
        );
        p.minimize(LinExpr::variable(x).add(&LinExpr::variable(y)));
        let r = p.solve(1e-8).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert_relative_eq!(r.objective, 1.0, epsilon = 1e-6);
        assert!(r.max_violation <= 1e-8);
    }

    #[test]
    fn h2_oracle_impulse() {
        let a = DMatrix::zeros(1, 1);
        let b = DMatrix::identity(1, 1);
        let c = DMatrix::identity(1, 1);
        assert_relative_eq!(h2_norm_oracle(&a, &b, &c).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn h2_oracle_geometric_series() {
        // A=0.5, B=C=1: Gramian = 1/(1-0.25) = 4/3.
        let a = DMatrix::from_element(1, 1, 0.5);
        let b = DMatrix::identity(1, 1);
        let c = DMatrix::identity(1, 1);
        assert_relative_eq!(
            h2_norm_oracle(&a, &b, &c).unwrap(),
            (4.0f64 / 3.0).sqrt(),
            epsilon = 1e-10
        );
    }

    #[test]
    fn h2_oracle_unstable_rejected() {
        let a = DMatrix::identity(2, 2);
        let b = DMatrix::identity(2, 2);
        let c = DMatrix::identity(2, 2);
        assert!(matches!(
            h2_norm_oracle(&a, &b, &c),
            Err(CoreError::Unstable { .. })
        ));
    }

    #[test]
    fn dump_lists_blocks() {
        let mut p = ConicProgram::new();
        let t = p.scalar("t");
        p.minimize(LinExpr::variable(t));
        p.geq_zero(LinExpr::variable(t).add_constant(-2.0));
        let text = p.dump();
        assert!(text.contains("minimize"));
        assert!(text.contains("ineq[0]"));
    }
}
