//! Switched affine plant, static output-feedback controllers, closed-loop
//! statuses and their difference-algebraic (DAE) form.
//!
//! A status pairs a controller mode `i` with a plant mode `h`; the matched
//! case is `i == h`. All mode indices are 1-based at the API surface.

use crate::error::{CoreError, Result};
use crate::linalg;
use nalgebra::{DMatrix, DVector};

/// Per-mode plant and controller matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeMatrices {
    /// State matrix, n_x × n_x.
    pub a: DMatrix<f64>,
    /// Input matrix, n_x × n_u.
    pub b: DMatrix<f64>,
    /// Reference matrix, n_x × n_d. Must be nonzero.
    pub e: DMatrix<f64>,
    /// Process-side noise matrix, n_x × n_w.
    pub w: DMatrix<f64>,
    /// Output matrix, n_y × n_x.
    pub c: DMatrix<f64>,
    /// Measurement noise matrix, n_y × n_w.
    pub d: DMatrix<f64>,
    /// Static output-feedback gain, n_u × n_y.
    pub k: DMatrix<f64>,
}

/// A discrete-time switched affine system
/// `x+ = A_σ x + B_σ u + E_σ d + W_σ ω`, `y = C_σ x + D_σ ω`
/// closed with per-mode static output feedback `u = K_i y`.
///
/// Immutable after construction; all operations on it are pure.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchedAffineSystem {
    modes: Vec<ModeMatrices>,
    n_x: usize,
    n_u: usize,
    n_y: usize,
    n_d: usize,
    n_w: usize,
}

impl SwitchedAffineSystem {
    /// Validate dimensions across all modes and build the system.
    ///
    /// `n_u = 0` models an autonomous plant (no control channel); `b` and `k`
    /// must then have zero columns/rows respectively.
    pub fn new(modes: Vec<ModeMatrices>) -> Result<Self> {
        if modes.is_empty() {
            return Err(CoreError::DimensionMismatch("need at least one mode".into()));
        }
        let m0 = &modes[0];
        let (n_x, n_u, n_y, n_d, n_w) = (
            m0.a.nrows(),
            m0.b.ncols(),
            m0.c.nrows(),
            m0.e.ncols(),
            m0.w.ncols(),
        );
        if n_d == 0 {
            return Err(CoreError::DimensionMismatch("n_d must be >= 1".into()));
        }
        for (idx, m) in modes.iter().enumerate() {
            let mode = idx + 1;
            let check = |ok: bool, what: &str| -> Result<()> {
                if ok {
                    Ok(())
                } else {
                    Err(CoreError::DimensionMismatch(format!(
                        "mode {mode}: {what} has inconsistent dimensions"
                    )))
                }
            };
            check(m.a.nrows() == n_x && m.a.ncols() == n_x, "A")?;
            check(m.b.nrows() == n_x && m.b.ncols() == n_u, "B")?;
            check(m.e.nrows() == n_x && m.e.ncols() == n_d, "E")?;
            check(m.w.nrows() == n_x && m.w.ncols() == n_w, "W")?;
            check(m.c.nrows() == n_y && m.c.ncols() == n_x, "C")?;
            check(m.d.nrows() == n_y && m.d.ncols() == n_w, "D")?;
            check(m.k.nrows() == n_u && m.k.ncols() == n_y, "K")?;
            if m.e.amax() == 0.0 {
                return Err(CoreError::InvalidParameter {
                    name: "E",
                    reason: format!("mode {mode}: E must be nonzero"),
                });
            }
        }
        Ok(Self {
            modes,
            n_x,
            n_u,
            n_y,
            n_d,
            n_w,
        })
    }

    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }
    pub fn n_x(&self) -> usize {
        self.n_x
    }
    pub fn n_u(&self) -> usize {
        self.n_u
    }
    pub fn n_y(&self) -> usize {
        self.n_y
    }
    pub fn n_d(&self) -> usize {
        self.n_d
    }
    pub fn n_w(&self) -> usize {
        self.n_w
    }

    /// True when the plant has no control channel; the filter bank then
    /// degenerates to one row.
    pub fn is_autonomous(&self) -> bool {
        self.n_u == 0
    }

    /// Mode matrices for a 1-based index.
    pub fn mode(&self, index: usize) -> Result<&ModeMatrices> {
        self.modes
            .get(index.wrapping_sub(1))
            .ok_or(CoreError::ModeIndexOutOfRange {
                index,
                n_modes: self.modes.len(),
            })
    }

    /// Closed-loop matrices for controller mode `i` against plant mode `h`
    /// (status S_ih): `A_cl = A_h + B_h K_i C_h`, noise input
    /// `W_h + B_h K_i D_h`.
    pub fn closed_loop(&self, i: usize, h: usize) -> Result<ClosedLoopMode> {
        let ctrl = self.mode(i)?;
        let plant = self.mode(h)?;
        let bk = &plant.b * &ctrl.k;
        Ok(ClosedLoopMode {
            controller: i,
            plant: h,
            a_cl: &plant.a + &bk * &plant.c,
            e: plant.e.clone(),
            w_noise: &plant.w + &bk * &plant.d,
            c: plant.c.clone(),
            d: plant.d.clone(),
        })
    }
}

/// One closed-loop status S_ih.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopMode {
    pub controller: usize,
    pub plant: usize,
    /// A_h + B_h K_i C_h.
    pub a_cl: DMatrix<f64>,
    pub e: DMatrix<f64>,
    /// W_h + B_h K_i D_h.
    pub w_noise: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

impl ClosedLoopMode {
    pub fn n_x(&self) -> usize {
        self.a_cl.nrows()
    }
    pub fn n_y(&self) -> usize {
        self.c.nrows()
    }
    pub fn n_d(&self) -> usize {
        self.e.ncols()
    }
    pub fn n_w(&self) -> usize {
        self.d.ncols()
    }

    /// True iff the loop matrix is stable under the shared margin.
    pub fn is_stable(&self) -> bool {
        linalg::spectral_radius_stable(&self.a_cl).expect("a_cl is square")
    }

    /// Steady state `(I - A_cl)^{-1} E d̄` for a constant reference.
    ///
    /// Requires a stable loop; a singular or marginally stable `I - A_cl`
    /// surfaces as `NearSingular`.
    pub fn steady_state(&self, d_bar: &DVector<f64>) -> Result<DVector<f64>> {
        if d_bar.len() != self.n_d() {
            return Err(CoreError::DimensionMismatch(format!(
                "d̄ has length {}, expected {}",
                d_bar.len(),
                self.n_d()
            )));
        }
        if !self.is_stable() {
            return Err(CoreError::Unstable {
                rho: linalg::spectral_radius(&self.a_cl),
            });
        }
        linalg::solve_i_minus(&self.a_cl, &(&self.e * d_bar))
    }

    /// Steady output `C (I - A_cl)^{-1} E d̄` (noise-free mean).
    pub fn steady_output(&self, d_bar: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(&self.c * self.steady_state(d_bar)?)
    }

    /// DAE form of the loop: `H(q)[x; d] + L(q)[y] + G(q)[ω] = 0` with
    /// `H(q) = H1·q + H0`.
    pub fn dae_matrices(&self) -> DaeMatrices {
        let (n_x, n_y, n_d, n_w) = (self.n_x(), self.n_y(), self.n_d(), self.n_w());
        let rows = n_x + n_y;
        let cols = n_x + n_d;

        let mut h1 = DMatrix::zeros(rows, cols);
        h1.view_mut((0, 0), (n_x, n_x))
            .copy_from(&(-DMatrix::<f64>::identity(n_x, n_x)));

        let mut h0 = DMatrix::zeros(rows, cols);
        h0.view_mut((0, 0), (n_x, n_x)).copy_from(&self.a_cl);
        h0.view_mut((0, n_x), (n_x, n_d)).copy_from(&self.e);
        h0.view_mut((n_x, 0), (n_y, n_x)).copy_from(&self.c);

        let mut l0 = DMatrix::zeros(rows, n_y);
        l0.view_mut((n_x, 0), (n_y, n_y))
            .copy_from(&(-DMatrix::<f64>::identity(n_y, n_y)));

        let mut g0 = DMatrix::zeros(rows, n_w);
        g0.view_mut((0, 0), (n_x, n_w)).copy_from(&self.w_noise);
        g0.view_mut((n_x, 0), (n_y, n_w)).copy_from(&self.d);

        DaeMatrices { h1, h0, l0, g0 }
    }
}

/// Constant coefficient matrices of the first-order DAE form.
#[derive(Debug, Clone, PartialEq)]
pub struct DaeMatrices {
    /// Coefficient of q in H(q): -I in the top-left state block, zero elsewhere.
    pub h1: DMatrix<f64>,
    /// Constant term of H(q): [[A_cl, E], [C, 0]].
    pub h0: DMatrix<f64>,
    /// L(q) = L0 = [0; -I].
    pub l0: DMatrix<f64>,
    /// G(q) = G0 = [W + B K D; D].
    pub g0: DMatrix<f64>,
}

impl DaeMatrices {
    /// Residual of the DAE identity at one step:
    /// `H1·[x+; d+] + H0·[x; d] + L0·y + G0·ω` (∞-norm).
    pub fn step_residual(
        &self,
        x_next: &DVector<f64>,
        d_next: &DVector<f64>,
        x: &DVector<f64>,
        d: &DVector<f64>,
        y: &DVector<f64>,
        w: &DVector<f64>,
    ) -> f64 {
        let stack = |xv: &DVector<f64>, dv: &DVector<f64>| {
            let mut v = DVector::zeros(xv.len() + dv.len());
            v.rows_mut(0, xv.len()).copy_from(xv);
            v.rows_mut(xv.len(), dv.len()).copy_from(dv);
            v
        };
        (&self.h1 * stack(x_next, d_next) + &self.h0 * stack(x, d) + &self.l0 * y + &self.g0 * w)
            .amax()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_fixtures::paper_system;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn closed_loop_matched_pair_matches_hand_product() {
        let sys = paper_system();
        let clm = sys.closed_loop(1, 1).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, -0.0395, -0.4741]);
        assert_relative_eq!(clm.a_cl, expected, max_relative = 1e-14);
    }

    #[test]
    fn closed_loop_with_zero_b_is_open_loop() {
        let sys = paper_system();
        let mut modes: Vec<ModeMatrices> = (1..=3).map(|i| sys.mode(i).unwrap().clone()).collect();
        for m in &mut modes {
            m.b = DMatrix::zeros(2, 1);
        }
        let open = SwitchedAffineSystem::new(modes).unwrap();
        for i in 1..=3 {
            for h in 1..=3 {
                let clm = open.closed_loop(i, h).unwrap();
                assert_eq!(clm.a_cl, open.mode(h).unwrap().a);
                assert_eq!(clm.w_noise, open.mode(h).unwrap().w);
            }
        }
    }

    #[test]
    fn closed_loop_unmatched_noise_matrix() {
        // W_2 + B_2 K_1 D_2 with W_2 = 0, by direct brute-force product.
        let sys = paper_system();
        let clm = sys.closed_loop(1, 2).unwrap();
        let b2 = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let k1 = DMatrix::from_row_slice(1, 2, &[-0.0395, -0.0741]);
        let d2 = DMatrix::from_row_slice(2, 2, &[0.01, 0.0, 0.01, -0.01]);
        let expected = b2 * k1 * d2;
        assert_relative_eq!(clm.w_noise, expected, max_relative = 1e-14);
    }

    #[test]
    fn closed_loop_is_pure() {
        let sys = paper_system();
        let a = sys.closed_loop(2, 3).unwrap();
        let b = sys.closed_loop(2, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mode_index_out_of_range() {
        let sys = paper_system();
        assert!(matches!(
            sys.closed_loop(0, 1),
            Err(CoreError::ModeIndexOutOfRange { .. })
        ));
        assert!(matches!(
            sys.closed_loop(1, 4),
            Err(CoreError::ModeIndexOutOfRange { .. })
        ));
    }

    #[test]
    fn paper_closed_loop_singular_values_stable() {
        // Triangular A_cl(1,1): eigenvalues 0.5 and -0.4741.
        let sys = paper_system();
        let clm = sys.closed_loop(1, 1).unwrap();
        assert!(clm.is_stable());
    }

    #[test]
    fn steady_state_identity_solve() {
        // A_cl = 0, E = I: x_ss = d̄.
        let n = 3;
        let clm = ClosedLoopMode {
            controller: 1,
            plant: 1,
            a_cl: DMatrix::zeros(n, n),
            e: DMatrix::identity(n, n),
            w_noise: DMatrix::zeros(n, 1),
            c: DMatrix::identity(n, n),
            d: DMatrix::zeros(n, 1),
        };
        let v = DVector::from_vec(vec![1.0, -2.0, 0.25]);
        assert_relative_eq!(clm.steady_state(&v).unwrap(), v, max_relative = 1e-12);
    }

    #[test]
    fn steady_state_scalar() {
        let clm = ClosedLoopMode {
            controller: 1,
            plant: 1,
            a_cl: DMatrix::from_element(1, 1, 0.5),
            e: DMatrix::from_element(1, 1, 1.0),
            w_noise: DMatrix::zeros(1, 1),
            c: DMatrix::identity(1, 1),
            d: DMatrix::zeros(1, 1),
        };
        let x = clm.steady_state(&DVector::from_element(1, 0.5)).unwrap();
        assert_relative_eq!(x[0], 1.0, max_relative = 1e-12);
    }

    #[test]
    fn steady_state_rejects_unstable_loop() {
        let clm = ClosedLoopMode {
            controller: 1,
            plant: 1,
            a_cl: DMatrix::from_element(1, 1, 2.0),
            e: DMatrix::from_element(1, 1, 1.0),
            w_noise: DMatrix::zeros(1, 1),
            c: DMatrix::identity(1, 1),
            d: DMatrix::zeros(1, 1),
        };
        assert!(matches!(
            clm.steady_state(&DVector::from_element(1, 1.0)),
            Err(CoreError::Unstable { .. })
        ));
    }

    #[test]
    fn steady_state_fixed_point_residual() {
        let sys = paper_system();
        let d_bar = DVector::from_element(1, 0.5);
        for i in 1..=3 {
            for h in 1..=3 {
                let clm = sys.closed_loop(i, h).unwrap();
                let x = clm.steady_state(&d_bar).unwrap();
                let resid = (DMatrix::identity(2, 2) - &clm.a_cl) * &x - &clm.e * &d_bar;
                assert!(resid.amax() <= 1e-10 * x.amax().max(1.0));
            }
        }
    }

    #[test]
    fn dae_structure_blocks() {
        let sys = paper_system();
        let clm = sys.closed_loop(1, 1).unwrap();
        let dae = clm.dae_matrices();
        assert_eq!(dae.h1.shape(), (4, 3));
        assert_eq!(dae.h1[(0, 0)], -1.0);
        assert_eq!(dae.h1[(1, 1)], -1.0);
        assert_eq!(dae.h1.view((0, 2), (4, 1)).amax(), 0.0);
        assert_eq!(dae.l0.shape(), (4, 2));
        assert_eq!(dae.l0[(2, 0)], -1.0);
        assert_eq!(dae.l0[(3, 1)], -1.0);
        // bottom-left block of H0 equals C_h
        assert_eq!(dae.h0.view((2, 0), (2, 2)), clm.c.view((0, 0), (2, 2)));
    }

    #[test]
    fn dae_zero_output_map_reduces_bottom_row() {
        let clm = ClosedLoopMode {
            controller: 1,
            plant: 1,
            a_cl: DMatrix::from_element(1, 1, 0.5),
            e: DMatrix::from_element(1, 1, 1.0),
            w_noise: DMatrix::zeros(1, 1),
            c: DMatrix::zeros(1, 1),
            d: DMatrix::zeros(1, 1),
        };
        let dae = clm.dae_matrices();
        // bottom row: 0·x - y = 0, i.e. the row reduces to -y.
        let y = DVector::from_element(1, 3.0);
        let z = DVector::zeros(1);
        let r = &dae.h0 * DVector::from_vec(vec![0.0, 0.0]) + &dae.l0 * &y + &dae.g0 * &z;
        assert_relative_eq!(r[1], -3.0, max_relative = 1e-14);
    }

    #[test]
    fn dae_consistency_along_noisy_trajectory() {
        // Simulate every stable status for 50 steps; the DAE identity must
        // hold pointwise.
        let sys = paper_system();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let d_bar = DVector::from_element(1, 0.5);
        for i in 1..=3 {
            for h in 1..=3 {
                let clm = sys.closed_loop(i, h).unwrap();
                if !clm.is_stable() {
                    continue;
                }
                let dae = clm.dae_matrices();
                let mut x = clm.steady_state(&d_bar).unwrap();
                let mut samples = Vec::new();
                for _ in 0..50 {
                    let w = DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0));
                    let y = &clm.c * &x + &clm.d * &w;
                    let x_next = &clm.a_cl * &x + &clm.e * &d_bar + &clm.w_noise * &w;
                    samples.push((x.clone(), y, w, x_next.clone()));
                    x = x_next;
                }
                for (x, y, w, x_next) in samples {
                    let r = dae.step_residual(&x_next, &d_bar, &x, &d_bar, &y, &w);
                    assert!(r <= 1e-9, "DAE residual {r:.3e} for status ({i},{h})");
                }
            }
        }
    }
}
