//! Optimal residual-filter synthesis.
//!
//! For a (controller i, hypothesis j) pair the filter numerator rows N_m and
//! noise-gain certificates η are obtained from a finite conic program:
//!
//! * decoupling equality `N̄ H̄ = 0` — the reference never reaches the
//!   matched residual;
//! * steady-gain inequalities `± a(1)^{-1} N̄ ℒ_ih ≥ 1` for every stable
//!   unmatched mode h, the absolute value resolved by explicit sign-pattern
//!   enumeration;
//! * H2 bounds: exact LMIs for the matched noise channel, and a convex
//!   restriction (parameterized by α, γ) of the nonlinear inequality for
//!   each stable unmatched augmented loop;
//! * objective: the sum of the certified η over all enforced modes.
//!
//! Unstable unmatched loops are excluded from the gain and H2 constraints;
//! their residuals diverge on their own. Every solution is re-certified
//! against the program data and an independent Gramian oracle before a
//! `ResidualFilter` is returned.

use crate::conic::{self, ConicProgram, ExprMat, LinExpr, SolveStatus};
use crate::error::{CoreError, Result};
use crate::linalg;
use crate::poly;
use crate::runtime;
use crate::system::{ClosedLoopMode, SwitchedAffineSystem};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use std::collections::BTreeMap;

/// Default strict-feasibility margin ϑ for all LMI blocks.
///
/// Large enough that the certified matched gains (hence the thresholds
/// derived from them) land in the regime reported for the reference
/// three-mode example; still orders of magnitude below the constraint
/// scales, so the restriction stays tight.
pub const DEFAULT_FEASIBILITY_MARGIN: f64 = 4e-5;

/// Synthesis configuration shared by every filter in a bank: one common
/// denominator a(q) and numerator degree.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisConfig {
    /// Numerator degree d_N; the denominator has degree d_N + 1.
    pub numerator_degree: usize,
    /// Denominator roots, all inside the unit disk, pairwise distinct.
    pub denominator_roots: Vec<f64>,
    /// Strict-feasibility margin ϑ.
    pub feasibility_margin: f64,
    /// Multiplier α of the convex restriction.
    pub alpha: f64,
    /// Positive scaling γ of the convex restriction.
    pub gamma: f64,
    /// Optional (α, γ) grid searched per pair; the smallest objective wins.
    pub grid: Option<Vec<(f64, f64)>>,
    /// Nominal reference direction d̂ used to project the steady-gain
    /// constraint when n_d > 1.
    pub reference_direction: Option<DVector<f64>>,
    /// Backend/verification tolerance.
    pub tol: f64,
}

impl SynthesisConfig {
    /// Build a config from denominator roots; degree is `roots.len() - 1`.
    pub fn from_roots(roots: Vec<f64>) -> Result<Self> {
        if roots.is_empty() {
            return Err(CoreError::InvalidParameter {
                name: "denominator_roots",
                reason: "need at least one root".into(),
            });
        }
        for (idx, &r) in roots.iter().enumerate() {
            if r.abs() >= 1.0 {
                return Err(CoreError::InvalidParameter {
                    name: "denominator_roots",
                    reason: format!("root {idx} = {r} not inside the unit disk"),
                });
            }
        }
        for a in 0..roots.len() {
            for b in (a + 1)..roots.len() {
                if (roots[a] - roots[b]).abs() < 1e-9 {
                    return Err(CoreError::RepeatedRoots { a, b });
                }
            }
        }
        Ok(Self {
            numerator_degree: roots.len() - 1,
            denominator_roots: roots,
            feasibility_margin: DEFAULT_FEASIBILITY_MARGIN,
            alpha: 1.0,
            gamma: 1.0,
            grid: None,
            reference_direction: None,
            tol: conic::DEFAULT_TOL,
        })
    }

    /// Log-spaced default grid {0.1, 0.3, 1, 3, 10}².
    pub fn default_grid() -> Vec<(f64, f64)> {
        let pts = [0.1, 0.3, 1.0, 3.0, 10.0];
        let mut grid = Vec::with_capacity(25);
        for &a in &pts {
            for &g in &pts {
                grid.push((a, g));
            }
        }
        grid
    }

    /// Monic denominator coefficients `[a_0, ..., a_{d_N}]`.
    pub fn a_coeffs(&self) -> Vec<f64> {
        poly::monic_from_roots(&self.denominator_roots)
    }

    /// a(1) = ∏ (1 - λ_m), positive for real roots inside the unit disk.
    pub fn a_at_one(&self) -> f64 {
        poly::eval_monic(&self.a_coeffs(), 1.0)
    }

    /// Largest root magnitude.
    pub fn lambda_max(&self) -> f64 {
        self.denominator_roots
            .iter()
            .map(|r| r.abs())
            .fold(0.0, f64::max)
    }

    fn alpha_gamma_points(&self) -> Vec<(f64, f64)> {
        self.grid
            .clone()
            .unwrap_or_else(|| vec![(self.alpha, self.gamma)])
    }

    fn reference_direction_for(&self, n_d: usize) -> Result<DVector<f64>> {
        match (&self.reference_direction, n_d) {
            (Some(d), _) if d.len() == n_d => Ok(d.clone()),
            (Some(d), _) => Err(CoreError::DimensionMismatch(format!(
                "reference direction has length {}, expected {n_d}",
                d.len()
            ))),
            (None, 1) => Ok(DVector::from_element(1, 1.0)),
            (None, _) => Err(CoreError::InvalidParameter {
                name: "reference_direction",
                reason: "required when n_d > 1".into(),
            }),
        }
    }
}

/// A synthesized residual filter for one (controller row, target mode) pair,
/// with certified noise gains and steady-gain margins.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualFilter {
    /// Controller row, 1-based (always 1 for autonomous systems).
    pub controller: usize,
    /// Hypothesized plant mode this filter is matched to, 1-based.
    pub target: usize,
    /// Numerator coefficient rows, (d_N+1) × (n_x+n_y); row m is N_m.
    pub numerator: DMatrix<f64>,
    /// State dimension of the plant (splits numerator columns).
    pub n_x: usize,
    /// Output dimension of the plant.
    pub n_y: usize,
    /// Shared denominator roots.
    pub roots: Vec<f64>,
    /// Monic denominator coefficients `[a_0, ..., a_{d_N}]`.
    pub a_coeffs: Vec<f64>,
    /// Certified squared-H2 noise gains per plant mode (1-based keys);
    /// unstable unmatched loops are absent.
    pub eta: BTreeMap<usize, f64>,
    /// Certified signed steady gains `a(1)^{-1} N̄ ℒ_ih d̂` per enforced mode.
    pub steady_gains: BTreeMap<usize, f64>,
    /// Sign chosen for each enforced unmatched mode.
    pub sign_pattern: BTreeMap<usize, i8>,
    /// ∞-norm of N̄ H̄ at the returned point.
    pub decoupling_residual: f64,
    /// (α, γ) the winning restriction was solved at.
    pub alpha_gamma: (f64, f64),
}

impl ResidualFilter {
    /// Numerator degree d_N.
    pub fn degree(&self) -> usize {
        self.numerator.nrows() - 1
    }

    /// x-part of the numerator rows (first n_x columns), (d_N+1) × n_x.
    pub fn n_hat(&self) -> DMatrix<f64> {
        self.numerator.columns(0, self.n_x).into_owned()
    }

    /// Flattened row `[N_0 N_1 ... N_dN]`, 1 × (d_N+1)(n_x+n_y).
    pub fn n_bar(&self) -> DMatrix<f64> {
        let (rows, cols) = self.numerator.shape();
        let mut out = DMatrix::zeros(1, rows * cols);
        for m in 0..rows {
            out.view_mut((0, m * cols), (1, cols))
                .copy_from(&self.numerator.row(m));
        }
        out
    }

    /// Numerator coefficient list as 1×(n_x+n_y) matrices.
    pub fn numerator_coeffs(&self) -> Vec<DMatrix<f64>> {
        (0..self.numerator.nrows())
            .map(|m| {
                DMatrix::from_row_slice(
                    1,
                    self.numerator.ncols(),
                    self.numerator.row(m).transpose().as_slice(),
                )
            })
            .collect()
    }

    /// Largest denominator root magnitude.
    pub fn lambda_max(&self) -> f64 {
        self.roots.iter().map(|r| r.abs()).fold(0.0, f64::max)
    }

    /// a(1).
    pub fn a_at_one(&self) -> f64 {
        poly::eval_monic(&self.a_coeffs, 1.0)
    }
}

/// The full bank: one filter per (row, target) pair, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    filters: Vec<ResidualFilter>,
    rows: usize,
    n_modes: usize,
    pub config: SynthesisConfig,
}

impl FilterBank {
    pub fn new(filters: Vec<ResidualFilter>, rows: usize, n_modes: usize, config: SynthesisConfig) -> Result<Self> {
        if filters.len() != rows * n_modes {
            return Err(CoreError::DimensionMismatch(format!(
                "bank needs {rows}x{n_modes} filters, got {}",
                filters.len()
            )));
        }
        Ok(Self {
            filters,
            rows,
            n_modes,
            config,
        })
    }

    /// Number of controller rows (1 for autonomous systems, else n_modes).
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn filters(&self) -> &[ResidualFilter] {
        &self.filters
    }

    /// Filter for controller row `i` (1-based, clamped to 1 when the bank is
    /// autonomous) and target mode `j`.
    pub fn get(&self, i: usize, j: usize) -> Result<&ResidualFilter> {
        let row = self.row_of(i);
        if row == 0 || row > self.rows || j == 0 || j > self.n_modes {
            return Err(CoreError::ModeIndexOutOfRange {
                index: if j == 0 || j > self.n_modes { j } else { i },
                n_modes: self.n_modes,
            });
        }
        Ok(&self.filters[(row - 1) * self.n_modes + (j - 1)])
    }

    /// Map a controller mode onto a bank row (collapses for autonomous banks).
    pub fn row_of(&self, i: usize) -> usize {
        if self.rows == 1 {
            1
        } else {
            i
        }
    }

    /// η̄_i = max_j η_{ijj}: the worst certified matched noise gain in row i.
    pub fn eta_bar(&self, i: usize) -> Result<f64> {
        let row = self.row_of(i);
        let mut best: Option<f64> = None;
        for j in 1..=self.n_modes {
            let f = self.get(row, j)?;
            let e = f.eta.get(&j).copied().ok_or_else(|| {
                CoreError::CertificationFailed {
                    controller: row,
                    target: j,
                    reason: "missing matched eta".into(),
                }
            })?;
            best = Some(best.map_or(e, |b: f64| b.max(e)));
        }
        Ok(best.unwrap_or(0.0))
    }
}

/// Per-pair feasibility report (degree, rank and stability conditions).
#[derive(Debug, Clone)]
pub struct FeasibilityReport {
    pub controller: usize,
    pub target: usize,
    /// (d_N+1)(n_x+n_y) > rank(H̄).
    pub degree_ok: bool,
    pub h_bar_rank: usize,
    pub h_bar_rows: usize,
    /// Denominator roots all inside the unit disk.
    pub a_r_stable: bool,
    /// Per unmatched mode h: loop stability and, when stable, the rank test
    /// rank([H̄ ℒ_ih]) > rank(H̄).
    pub unmatched: Vec<UnmatchedCheck>,
}

#[derive(Debug, Clone)]
pub struct UnmatchedCheck {
    pub plant: usize,
    pub stable: bool,
    /// None when the loop is unstable (excluded from synthesis).
    pub rank_ok: Option<bool>,
}

impl FeasibilityReport {
    /// True when synthesis can proceed: degree and stability conditions hold
    /// and every stable unmatched loop passes the rank test.
    pub fn passes(&self) -> bool {
        self.degree_ok
            && self.a_r_stable
            && self
                .unmatched
                .iter()
                .all(|u| !u.stable || u.rank_ok == Some(true))
    }

    /// Stable unmatched modes, in index order.
    pub fn enforced_modes(&self) -> Vec<usize> {
        self.unmatched
            .iter()
            .filter(|u| u.stable)
            .map(|u| u.plant)
            .collect()
    }
}

/// Banded stacking H̄ of the DAE polynomial H(q) = H1 q + H0 against a
/// degree-d_N numerator: (d_N+1)(n_x+n_y) × (d_N+2)(n_x+n_d).
pub fn h_bar(clm: &ClosedLoopMode, numerator_degree: usize) -> DMatrix<f64> {
    let dae = clm.dae_matrices();
    poly::toeplitz_stack(&[dae.h0, dae.h1], numerator_degree).expect("consistent DAE shapes")
}

/// Steady-gain carrier ℒ_ih = L̄ [I ... I]ᵀ C_h (I - A_cl)^{-1} E_h:
/// the block [0; -v] with v = C_h (I - A_cl)^{-1} E_h, repeated d_N+1 times.
pub fn build_script_l(clm: &ClosedLoopMode, numerator_degree: usize) -> Result<DMatrix<f64>> {
    let (n_x, n_y, n_d) = (clm.n_x(), clm.n_y(), clm.n_d());
    let mut v = DMatrix::zeros(n_y, n_d);
    for col in 0..n_d {
        let rhs = clm.e.column(col).into_owned();
        let xi = linalg::solve_i_minus(&clm.a_cl, &rhs)?;
        v.set_column(col, &(&clm.c * xi));
    }
    let rows_per_block = n_x + n_y;
    let mut out = DMatrix::zeros((numerator_degree + 1) * rows_per_block, n_d);
    for blk in 0..=numerator_degree {
        out.view_mut((blk * rows_per_block + n_x, 0), (n_y, n_d))
            .copy_from(&(-&v));
    }
    Ok(out)
}

/// Degree, rank and stability feasibility conditions for pair (i, j).
pub fn check_feasibility(
    system: &SwitchedAffineSystem,
    cfg: &SynthesisConfig,
    i: usize,
    j: usize,
) -> Result<FeasibilityReport> {
    let d_n = cfg.numerator_degree;
    let matched = system.closed_loop(i, j)?;
    let hb = h_bar(&matched, d_n);
    let h_rank = linalg::rank(&hb);
    let rows = hb.nrows();
    let mut unmatched = Vec::new();
    for h in 1..=system.n_modes() {
        if h == j {
            continue;
        }
        let clm = system.closed_loop(i, h)?;
        let stable = clm.is_stable();
        let rank_ok = if stable {
            let l = build_script_l(&clm, d_n)?;
            let mut ext = DMatrix::zeros(rows, hb.ncols() + l.ncols());
            ext.view_mut((0, 0), (rows, hb.ncols())).copy_from(&hb);
            ext.view_mut((0, hb.ncols()), (rows, l.ncols())).copy_from(&l);
            Some(linalg::rank(&ext) > h_rank)
        } else {
            None
        };
        unmatched.push(UnmatchedCheck {
            plant: h,
            stable,
            rank_ok,
        });
    }
    Ok(FeasibilityReport {
        controller: i,
        target: j,
        degree_ok: rows > h_rank,
        h_bar_rank: h_rank,
        h_bar_rows: rows,
        a_r_stable: cfg.lambda_max() < 1.0,
        unmatched,
    })
}

/// Handle to the decision variables of an assembled pair program, for
/// extracting the solution and re-checking certificates.
pub struct ProgramVars {
    /// (d_N+1) × (n_x+n_y) numerator variables.
    pub numerator: ExprMat,
    /// η variable id per enforced plant mode (matched included).
    pub eta: BTreeMap<usize, usize>,
    /// Lyapunov-type variable for each enforced unmatched mode.
    pub p_unmatched: BTreeMap<usize, ExprMat>,
}

/// Assemble the synthesis program for pair (i, j) under a fixed sign pattern
/// and restriction parameters. Fails with `NoStableUnmatched` when the
/// system has other modes but every unmatched loop is unstable.
pub fn assemble_program(
    system: &SwitchedAffineSystem,
    cfg: &SynthesisConfig,
    i: usize,
    j: usize,
    sign_pattern: &BTreeMap<usize, i8>,
    alpha: f64,
    gamma: f64,
) -> Result<(ConicProgram, ProgramVars)> {
    let report = check_feasibility(system, cfg, i, j)?;
    let enforced = report.enforced_modes();
    if enforced.is_empty() && system.n_modes() > 1 {
        return Err(CoreError::NoStableUnmatched {
            controller: i,
            target: j,
        });
    }
    assemble_with_enforced(system, cfg, i, j, &enforced, sign_pattern, alpha, gamma)
}

#[allow(clippy::too_many_arguments)]
fn assemble_with_enforced(
    system: &SwitchedAffineSystem,
    cfg: &SynthesisConfig,
    i: usize,
    j: usize,
    enforced: &[usize],
    sign_pattern: &BTreeMap<usize, i8>,
    alpha: f64,
    gamma: f64,
) -> Result<(ConicProgram, ProgramVars)> {
    if gamma <= 0.0 {
        return Err(CoreError::InvalidParameter {
            name: "gamma",
            reason: "must be positive".into(),
        });
    }
    let d_n = cfg.numerator_degree;
    let theta = cfg.feasibility_margin;
    let (n_x, n_y, n_w) = (system.n_x(), system.n_y(), system.n_w());
    let matched = system.closed_loop(i, j)?;
    let dae = matched.dae_matrices();
    let hb = h_bar(&matched, d_n);
    let a_coeffs = cfg.a_coeffs();
    let a1 = cfg.a_at_one();
    let d_hat = cfg.reference_direction_for(system.n_d())?;

    let mut p = ConicProgram::new();
    let n_mat = p.full_matrix("N", d_n + 1, n_x + n_y);
    let mut eta_ids = BTreeMap::new();
    eta_ids.insert(j, p.nonneg(format!("eta[{j}]")));
    for &h in enforced {
        eta_ids.insert(h, p.nonneg(format!("eta[{h}]")));
    }

    // (decoupling) N̄ H̄ = 0, row by row of the stacked product.
    let n_bar = flatten_rows(&n_mat);
    p.eq_zero_mat(&n_bar.right_mul(&hb));

    // (steady gains) sign_h · a(1)^{-1} N̄ ℒ_ih d̂ ≥ 1 for enforced h.
    for &h in enforced {
        let sign = *sign_pattern.get(&h).ok_or_else(|| CoreError::InvalidParameter {
            name: "sign_pattern",
            reason: format!("missing sign for mode {h}"),
        })?;
        let clm = system.closed_loop(i, h)?;
        let l = build_script_l(&clm, d_n)? * &d_hat;
        let gain = n_bar.right_mul(&DMatrix::from_column_slice(l.len(), 1, l.as_slice()));
        p.geq_zero(gain[(0, 0)].scale(f64::from(sign) / a1).add_constant(-1.0));
    }

    // (matched H2) realization (A_r, B, C_r) with B = -[N_m] G0.
    let a_r = runtime::companion(&a_coeffs);
    let c_r = runtime::output_selector(d_n + 1);
    let p_matched = p.symmetric_matrix("P", d_n + 1);
    let b_matched = n_mat.right_mul(&dae.g0).neg();
    let arp = p_matched.left_mul(&a_r);
    let zero_pn = ExprMat::zeros(d_n + 1, n_w);
    let block1 = ExprMat::block(&[
        vec![&p_matched, &arp, &b_matched],
        vec![&arp.transpose(), &p_matched, &zero_pn],
        vec![&b_matched.transpose(), &zero_pn.transpose(), &ExprMat::identity(n_w)],
    ]);
    p.psd_shifted(&block1, theta)?;
    let crp = p_matched.left_mul(&c_r);
    let eta_j = ExprMat::from_var_ids(&[eta_ids[&j]], 1, 1);
    let block2 = ExprMat::block(&[vec![&eta_j, &crp], vec![&crp.transpose(), &p_matched]]);
    p.psd_shifted(&block2, theta)?;

    // (unmatched H2) convex restriction of the augmented-loop inequality
    // plus the exact output LMI, for each enforced h.
    let n_a = n_x + d_n + 1;
    let b_r = n_mat.right_mul(&dae.l0); // rows N_m L0
    let mut p_unmatched = BTreeMap::new();
    for &h in enforced {
        let clm = system.closed_loop(i, h)?;
        let p_h = p.symmetric_matrix(&format!("P[{h}]"), n_a);
        let g1 = p.full_matrix(&format!("G1[{h}]"), n_a, n_a);
        let g2 = p.full_matrix(&format!("G2[{h}]"), n_w, n_w);

        let mut a_hat = DMatrix::zeros(n_a, n_a + n_w);
        a_hat.view_mut((0, 0), (n_x, n_x)).copy_from(&clm.a_cl);
        a_hat
            .view_mut((n_x, n_x), (d_n + 1, d_n + 1))
            .copy_from(&a_r);
        a_hat
            .view_mut((0, n_a), (n_x, n_w))
            .copy_from(&clm.w_noise);
        let mut d_hat_mat = DMatrix::zeros(n_y, n_a + n_w);
        d_hat_mat.view_mut((0, 0), (n_y, n_x)).copy_from(&clm.c);
        d_hat_mat.view_mut((0, n_a), (n_y, n_w)).copy_from(&clm.d);

        let zero_xn = ExprMat::zeros(n_x, n_y);
        let b_hat = ExprMat::block(&[vec![&zero_xn], vec![&b_r.neg()]]);

        let zero_g12 = ExprMat::zeros(n_a, n_w);
        let g_blk = ExprMat::block(&[vec![&g1, &zero_g12], vec![&zero_g12.transpose(), &g2]]);
        let zero_pi = ExprMat::zeros(n_a, n_w);
        let pi_blk = ExprMat::block(&[
            vec![&p_h, &zero_pi],
            vec![&zero_pi.transpose(), &ExprMat::identity(n_w)],
        ]);
        let xi = g_blk
            .scale(alpha)
            .add(&g_blk.transpose().scale(alpha))
            .sub(&pi_blk.scale(alpha * alpha));
        let ag = g_blk.left_mul(&a_hat);
        let dg = g_blk.left_mul(&d_hat_mat);

        let n_b = n_a + n_w;
        let zeros_a_y = ExprMat::zeros(n_a, n_y);
        let zeros_b_y = ExprMat::zeros(n_b, n_y);
        let zeros_y_y = ExprMat::zeros(n_y, n_y);
        let zeros_y_a = ExprMat::zeros(n_y, n_a);
        let inv_gamma_block = ExprMat::identity(n_y).scale(1.0 / gamma);
        let gamma_block = ExprMat::identity(n_y).scale(gamma);
        let big = ExprMat::block(&[
            vec![&p_h, &ag, &b_hat, &zeros_a_y],
            vec![&ag.transpose(), &xi, &zeros_b_y, &dg.transpose()],
            vec![&b_hat.transpose(), &zeros_b_y.transpose(), &inv_gamma_block, &zeros_y_y],
            vec![&zeros_y_a, &dg, &zeros_y_y, &gamma_block],
        ]);
        p.psd_shifted(&big, theta)?;

        let c_aug = augmented_output(n_x, d_n + 1);
        let cp = p_h.left_mul(&c_aug);
        let eta_h = ExprMat::from_var_ids(&[eta_ids[&h]], 1, 1);
        let out_block = ExprMat::block(&[vec![&eta_h, &cp], vec![&cp.transpose(), &p_h]]);
        p.psd_shifted(&out_block, theta)?;
        p_unmatched.insert(h, p_h);
    }

    let mut objective = LinExpr::default();
    for id in eta_ids.values() {
        objective = objective.add(&LinExpr::variable(*id));
    }
    p.minimize(objective);

    Ok((
        p,
        ProgramVars {
            numerator: n_mat,
            eta: eta_ids,
            p_unmatched,
        },
    ))
}

/// Flatten a (d+1) × w coefficient matrix of expressions into the 1 × (d+1)w
/// row `[N_0 N_1 ... N_d]`.
fn flatten_rows(m: &ExprMat) -> ExprMat {
    let (rows, cols) = m.shape();
    let mut out = ExprMat::zeros(1, rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            out[(0, r * cols + c)] = m[(r, c)].clone();
        }
    }
    out
}

/// Augmented output row 𝒞 = [0 ... 0 | C_r].
fn augmented_output(n_x: usize, filter_dim: usize) -> DMatrix<f64> {
    let mut c = DMatrix::zeros(1, n_x + filter_dim);
    c[(0, n_x + filter_dim - 1)] = 1.0;
    c
}

/// Enumerate sign patterns over the enforced modes with the first sign fixed
/// to +1 (global negation maps patterns onto each other).
fn sign_patterns(enforced: &[usize]) -> Vec<BTreeMap<usize, i8>> {
    if enforced.is_empty() {
        return vec![BTreeMap::new()];
    }
    let free = enforced.len() - 1;
    (0..(1usize << free))
        .map(|mask| {
            let mut pattern = BTreeMap::new();
            pattern.insert(enforced[0], 1i8);
            for (bit, &h) in enforced[1..].iter().enumerate() {
                pattern.insert(h, if mask & (1 << bit) == 0 { 1 } else { -1 });
            }
            pattern
        })
        .collect()
}

/// Synthesize the optimal filter for one (controller, target) pair:
/// enumerate sign patterns (and the (α, γ) grid when configured), keep the
/// smallest-objective optimal solution, and certify it independently.
pub fn synthesize_pair(
    system: &SwitchedAffineSystem,
    cfg: &SynthesisConfig,
    i: usize,
    j: usize,
) -> Result<ResidualFilter> {
    let report = check_feasibility(system, cfg, i, j)?;
    if !report.passes() {
        return Err(CoreError::SynthesisInfeasible {
            controller: i,
            target: j,
            reason: feasibility_failure_reason(&report),
        });
    }
    let enforced = report.enforced_modes();

    let mut best: Option<(f64, Vec<f64>, ProgramVars, BTreeMap<usize, i8>, (f64, f64))> = None;
    let mut numerical_failure: Option<String> = None;
    for (alpha, gamma) in cfg.alpha_gamma_points() {
        for pattern in sign_patterns(&enforced) {
            let (program, vars) =
                assemble_with_enforced(system, cfg, i, j, &enforced, &pattern, alpha, gamma)?;
            let solved = program.solve(cfg.tol)?;
            match solved.status {
                SolveStatus::Optimal => {
                    if best.as_ref().map_or(true, |b| solved.objective < b.0) {
                        best = Some((solved.objective, solved.x, vars, pattern, (alpha, gamma)));
                    }
                }
                SolveStatus::Infeasible | SolveStatus::Unbounded => {}
                SolveStatus::NumericalFailure => {
                    numerical_failure = Some(format!(
                        "pattern {pattern:?} at (α,γ)=({alpha},{gamma}): violation {:.3e}",
                        solved.max_violation
                    ));
                }
            }
        }
    }
    let (_, x, vars, pattern, alpha_gamma) = best.ok_or_else(|| match numerical_failure {
        Some(detail) => CoreError::NumericalFailure(format!(
            "pair ({i},{j}): no optimal point; last failure: {detail}"
        )),
        None => CoreError::SynthesisInfeasible {
            controller: i,
            target: j,
            reason: "every sign pattern reported infeasible".into(),
        },
    })?;

    certify(system, cfg, i, j, &enforced, &pattern, &x, &vars, alpha_gamma)
}

fn feasibility_failure_reason(report: &FeasibilityReport) -> String {
    let mut reasons = Vec::new();
    if !report.degree_ok {
        reasons.push(format!(
            "degree condition fails: rank(H̄) = {} with {} rows",
            report.h_bar_rank, report.h_bar_rows
        ));
    }
    if !report.a_r_stable {
        reasons.push("denominator roots not inside the unit disk".into());
    }
    for u in &report.unmatched {
        if u.stable && u.rank_ok == Some(false) {
            reasons.push(format!("rank condition fails against mode {}", u.plant));
        }
    }
    reasons.join("; ")
}

/// Re-check every contract of a solved pair against the program data and the
/// independent Gramian oracle, then build the `ResidualFilter`.
#[allow(clippy::too_many_arguments)]
fn certify(
    system: &SwitchedAffineSystem,
    cfg: &SynthesisConfig,
    i: usize,
    j: usize,
    enforced: &[usize],
    pattern: &BTreeMap<usize, i8>,
    x: &[f64],
    vars: &ProgramVars,
    alpha_gamma: (f64, f64),
) -> Result<ResidualFilter> {
    let fail = |reason: String| CoreError::CertificationFailed {
        controller: i,
        target: j,
        reason,
    };
    let d_n = cfg.numerator_degree;
    let numerator = vars.numerator.eval(x);
    let eta: BTreeMap<usize, f64> = vars.eta.iter().map(|(&h, &id)| (h, x[id])).collect();

    let filter = ResidualFilter {
        controller: i,
        target: j,
        numerator,
        n_x: system.n_x(),
        n_y: system.n_y(),
        roots: cfg.denominator_roots.clone(),
        a_coeffs: cfg.a_coeffs(),
        eta,
        steady_gains: BTreeMap::new(),
        sign_pattern: pattern.clone(),
        decoupling_residual: 0.0,
        alpha_gamma,
    };
    let realization = runtime::realize(&filter);

    // Decoupling certificate.
    let matched = system.closed_loop(i, j)?;
    let hb = h_bar(&matched, d_n);
    let decoupling_residual = (filter.n_bar() * &hb).amax();
    if decoupling_residual > 1e-8 {
        return Err(fail(format!(
            "decoupling residual {decoupling_residual:.3e} exceeds 1e-8"
        )));
    }

    // Steady-gain certificates.
    let d_hat = cfg.reference_direction_for(system.n_d())?;
    let a1 = cfg.a_at_one();
    let mut steady_gains = BTreeMap::new();
    for &h in enforced {
        let clm = system.closed_loop(i, h)?;
        let l = build_script_l(&clm, d_n)? * &d_hat;
        let gain = (filter.n_bar() * l)[(0, 0)] / a1;
        let sign = f64::from(pattern[&h]);
        if sign * gain < 1.0 - 1e-6 {
            return Err(fail(format!(
                "steady gain {gain:.6} against mode {h} below 1 - 1e-6"
            )));
        }
        steady_gains.insert(h, gain);
    }

    // Gramian cross-check of every certified η.
    let b_matched = -(&filter.numerator * &matched.dae_matrices().g0);
    let h2_matched = conic::h2_norm_oracle(&realization.a_r, &b_matched, &realization.c_r)?;
    if h2_matched.powi(2) > filter.eta[&j] + 1e-6 {
        return Err(fail(format!(
            "matched Gramian H2² {:.3e} exceeds certified η {:.3e} + 1e-6",
            h2_matched.powi(2),
            filter.eta[&j]
        )));
    }
    let theta = cfg.feasibility_margin;
    for &h in enforced {
        let aug = runtime::augmented_general(system, &filter, i, h)?;
        let h2 = conic::h2_norm_oracle(&aug.a, &aug.d, &aug.c)?;
        if h2.powi(2) > filter.eta[&h] + 1e-6 {
            return Err(fail(format!(
                "unmatched Gramian H2² {:.3e} (mode {h}) exceeds certified η {:.3e} + 1e-6",
                h2.powi(2),
                filter.eta[&h]
            )));
        }
        // Restriction soundness: the returned point satisfies the original
        // nonlinear inequality with margin θ - 1e-7.
        let p_h = vars.p_unmatched[&h].eval(x);
        let n_a = aug.a.nrows();
        let n_w = aug.d.ncols();
        let mut big = DMatrix::zeros(2 * n_a + n_w, 2 * n_a + n_w);
        let ap = &aug.a * &p_h;
        big.view_mut((0, 0), (n_a, n_a)).copy_from(&p_h);
        big.view_mut((0, n_a), (n_a, n_a)).copy_from(&ap);
        big.view_mut((n_a, 0), (n_a, n_a)).copy_from(&ap.transpose());
        big.view_mut((n_a, n_a), (n_a, n_a)).copy_from(&p_h);
        big.view_mut((0, 2 * n_a), (n_a, n_w)).copy_from(&aug.d);
        big.view_mut((2 * n_a, 0), (n_w, n_a)).copy_from(&aug.d.transpose());
        big.view_mut((2 * n_a, 2 * n_a), (n_w, n_w))
            .copy_from(&DMatrix::identity(n_w, n_w));
        let min_eig = linalg::min_symmetric_eigenvalue(&big);
        if min_eig < theta - 1e-7 {
            return Err(fail(format!(
                "restriction unsound for mode {h}: min eig {min_eig:.3e} < θ - 1e-7"
            )));
        }
    }

    Ok(ResidualFilter {
        steady_gains,
        decoupling_residual,
        ..filter
    })
}

/// Synthesize the whole bank: all (row, target) pairs, rows collapsing to 1
/// for autonomous systems. Per-pair failures are aggregated into one error.
pub fn synthesize_bank(
    system: &SwitchedAffineSystem,
    cfg: &SynthesisConfig,
) -> Result<FilterBank> {
    let n = system.n_modes();
    let rows = if system.is_autonomous() { 1 } else { n };
    let pairs: Vec<(usize, usize)> = (1..=rows)
        .flat_map(|i| (1..=n).map(move |j| (i, j)))
        .collect();
    let results: Vec<(usize, usize, Result<ResidualFilter>)> = pairs
        .par_iter()
        .map(|&(i, j)| (i, j, synthesize_pair(system, cfg, i, j)))
        .collect();

    let mut filters = Vec::with_capacity(pairs.len());
    let mut failures = Vec::new();
    for (i, j, r) in results {
        match r {
            Ok(f) => filters.push(f),
            Err(e) => failures.push(format!("({i},{j}): {e}")),
        }
    }
    if !failures.is_empty() {
        return Err(CoreError::SynthesisInfeasible {
            controller: 0,
            target: 0,
            reason: format!("{} pair(s) failed: {}", failures.len(), failures.join(" | ")),
        });
    }
    FilterBank::new(filters, rows, n, cfg.clone())
}
