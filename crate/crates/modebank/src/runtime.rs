//! Online execution of residual filters: the observable-canonical
//! realization, per-step residual generation, and the augmented
//! plant-plus-filter dynamics used by the timing analysis.

use crate::error::Result;
use crate::synthesis::{FilterBank, ResidualFilter};
use crate::system::SwitchedAffineSystem;
use nalgebra::{DMatrix, DVector};

/// State-space realization of a filter, strictly proper by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Realization {
    /// Companion matrix of a(q): subdiagonal identity, last column -a_m.
    pub a_r: DMatrix<f64>,
    /// Input rows N_m · L0 (i.e. minus the output-part of each N_m).
    pub b_r: DMatrix<f64>,
    /// Output selector [0 ... 0 1].
    pub c_r: DMatrix<f64>,
}

/// Companion matrix of the monic polynomial with coefficients
/// `[a_0, ..., a_{deg-1}]`.
pub fn companion(a_coeffs: &[f64]) -> DMatrix<f64> {
    let n = a_coeffs.len();
    let mut m = DMatrix::zeros(n, n);
    for r in 1..n {
        m[(r, r - 1)] = 1.0;
    }
    for r in 0..n {
        m[(r, n - 1)] = -a_coeffs[r];
    }
    m
}

/// Output row [0 ... 0 1].
pub fn output_selector(dim: usize) -> DMatrix<f64> {
    let mut c = DMatrix::zeros(1, dim);
    c[(0, dim - 1)] = 1.0;
    c
}

/// Observable-canonical realization of a filter: r(k) = C_r x̄(k),
/// x̄(k+1) = A_r x̄(k) + B_r y(k). No direct feedthrough.
pub fn realize(filter: &ResidualFilter) -> Realization {
    let dim = filter.degree() + 1;
    // B_r row m = N_m · L0 = -(output part of N_m).
    let b_r = DMatrix::from_fn(dim, filter.n_y, |m, c| -filter.numerator[(m, filter.n_x + c)]);
    Realization {
        a_r: companion(&filter.a_coeffs),
        b_r,
        c_r: output_selector(dim),
    }
}

/// Internal state of one filter; a plain value, stepped functionally.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub x: DVector<f64>,
}

impl FilterState {
    pub fn zero(dim: usize) -> Self {
        Self {
            x: DVector::zeros(dim),
        }
    }
}

/// One filter step. The residual uses the current state (output before
/// update, no feedthrough): r(k) = C_r x̄(k), then x̄(k+1) = A_r x̄ + B_r y.
pub fn residual_step(
    state: &FilterState,
    realization: &Realization,
    y: &DVector<f64>,
) -> (FilterState, f64) {
    let r = (&realization.c_r * &state.x)[(0, 0)];
    let next = FilterState {
        x: &realization.a_r * &state.x + &realization.b_r * y,
    };
    (next, r)
}

/// Augmented plant-plus-filter dynamics for one (filter, controller, plant)
/// combination: state [x; x̄].
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedSystem {
    /// [[A_cl, 0], [B_r C_h, A_r]].
    pub a: DMatrix<f64>,
    /// [E_h; 0].
    pub e: DMatrix<f64>,
    /// [W_h + B_h K_i D_h; B_r D_h].
    pub d: DMatrix<f64>,
    /// [0 C_r].
    pub c: DMatrix<f64>,
}

/// Augmented dynamics for the bank filter (i, j) run inside status S_ih
/// (controller i, plant h).
pub fn augmented(
    system: &SwitchedAffineSystem,
    bank: &FilterBank,
    i: usize,
    j: usize,
    h: usize,
) -> Result<AugmentedSystem> {
    augmented_general(system, bank.get(i, j)?, i, h)
}

/// Augmented dynamics for an arbitrary filter under an arbitrary
/// (controller, plant) status; the timing analysis needs combinations where
/// the filter row differs from the active controller.
pub fn augmented_general(
    system: &SwitchedAffineSystem,
    filter: &ResidualFilter,
    controller: usize,
    plant: usize,
) -> Result<AugmentedSystem> {
    let clm = system.closed_loop(controller, plant)?;
    let real = realize(filter);
    let (n_x, dim) = (system.n_x(), filter.degree() + 1);
    let n = n_x + dim;

    let mut a = DMatrix::zeros(n, n);
    a.view_mut((0, 0), (n_x, n_x)).copy_from(&clm.a_cl);
    a.view_mut((n_x, 0), (dim, n_x))
        .copy_from(&(&real.b_r * &clm.c));
    a.view_mut((n_x, n_x), (dim, dim)).copy_from(&real.a_r);

    let mut e = DMatrix::zeros(n, system.n_d());
    e.view_mut((0, 0), (n_x, system.n_d())).copy_from(&clm.e);

    let mut d = DMatrix::zeros(n, system.n_w());
    d.view_mut((0, 0), (n_x, system.n_w())).copy_from(&clm.w_noise);
    d.view_mut((n_x, 0), (dim, system.n_w()))
        .copy_from(&(&real.b_r * &clm.d));

    let mut c = DMatrix::zeros(1, n);
    c[(0, n - 1)] = 1.0;

    Ok(AugmentedSystem { a, e, d, c })
}
