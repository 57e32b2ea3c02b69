//! LADMAP solver for the nonnegative low-rank and sparse representation
//!
//! ```text
//! min ‖Z‖_* + β‖Z‖₁ + λ‖E‖_{2,1}   s.t.  X = AZ + E,  Z ≥ 0
//! ```
//!
//! The program is split with an auxiliary `H = Z`, `H ≥ 0`. Each iteration
//! linearizes the quadratic penalty in `Z` and takes a singular value
//! thresholding step, then solves the `H` and `E` blocks in closed form and
//! updates both multipliers. The penalty `μ` only grows when the iterates
//! have nearly stopped moving.

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::proximal::{
    l1_norm, l21_norm, l21_shrink, nuclear_norm, shrink_scalar, spectral_norm_sq, svt, Matrix,
};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NnlrsConfig {
    /// Weight of the entrywise ℓ1 term.
    pub beta: f64,
    /// Weight of the column-sparse error term.
    pub lambda: f64,
    pub mu0: f64,
    pub mu_max: f64,
    pub rho0: f64,
    /// Relative feasibility tolerance on `‖X − AZ − E‖_F / ‖X‖_F`.
    pub eps1: f64,
    /// Tolerance on the penalty-scaled change between iterates.
    pub eps2: f64,
    pub max_iter: usize,
    /// Record the objective every iteration (costs one extra SVD per step).
    pub track_objective: bool,
}

impl Default for NnlrsConfig {
    fn default() -> Self {
        Self {
            beta: 0.2,
            lambda: 10.0,
            mu0: 0.1,
            mu_max: 1e10,
            rho0: 1.1,
            eps1: 1e-6,
            eps2: 1e-2,
            max_iter: 1000,
            track_objective: true,
        }
    }
}

impl NnlrsConfig {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            (
                self.beta >= 0.0 && self.beta.is_finite(),
                "beta must be >= 0",
            ),
            (
                self.lambda > 0.0 && self.lambda.is_finite(),
                "lambda must be > 0",
            ),
            (self.mu0 > 0.0, "mu0 must be > 0"),
            (self.mu_max >= self.mu0, "mu_max must be >= mu0"),
            (self.rho0 > 1.0, "rho0 must be > 1"),
            (self.eps1 > 0.0, "eps1 must be > 0"),
            (self.eps2 > 0.0, "eps2 must be > 0"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(Error::Config((*msg).to_string())),
            None => Ok(()),
        }
    }
}

/// Iterate of the splitting scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub z: Matrix,
    pub h: Matrix,
    pub e: Matrix,
    pub y1: Matrix,
    pub y2: Matrix,
    pub mu: f64,
    /// Linearization constant `‖A‖₂² + 1`, fixed for the whole solve. The
    /// `+ 1` covers the `Z = H` coupling, which is also linearized.
    pub eta1: f64,
    pub iteration: usize,
}

impl SolverState {
    /// All-zero start for a `d × n` data matrix and a `d × m` dictionary.
    pub fn zeros(x: &Matrix, a: &Matrix, cfg: &NnlrsConfig) -> Self {
        let (d, n) = x.shape();
        let m = a.ncols();
        let eta1 = spectral_norm_sq(a) + 1.0;
        Self {
            z: Matrix::zeros(m, n),
            h: Matrix::zeros(m, n),
            e: Matrix::zeros(d, n),
            y1: Matrix::zeros(d, n),
            y2: Matrix::zeros(m, n),
            mu: cfg.mu0,
            eta1,
            iteration: 0,
        }
    }

    fn check_shapes(&self, x: &Matrix, a: &Matrix) -> Result<()> {
        let (d, n) = x.shape();
        let m = a.ncols();
        let ok = a.nrows() == d
            && self.z.shape() == (m, n)
            && self.h.shape() == (m, n)
            && self.y2.shape() == (m, n)
            && self.e.shape() == (d, n)
            && self.y1.shape() == (d, n);
        if ok {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "state inconsistent with X {}x{} and A {}x{}",
                d,
                n,
                a.nrows(),
                m
            )))
        }
    }

    fn is_finite(&self) -> bool {
        [&self.z, &self.h, &self.e, &self.y1, &self.y2]
            .iter()
            .all(|m| m.iter().all(|v| v.is_finite()))
            && self.mu.is_finite()
    }
}

/// Residuals measured after a step, both relative to `‖X‖_F`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResiduals {
    /// `‖X − AZ − E‖_F / ‖X‖_F`.
    pub feasibility: f64,
    /// `max(√η₁‖ΔZ‖_F, ‖ΔH‖_F, ‖ΔE‖_F) / ‖X‖_F`, without the penalty factor.
    pub change: f64,
}

#[derive(Debug, Clone)]
pub struct NnlrsSolution {
    pub z_star: Matrix,
    /// Nonnegative partner of `z_star`; this is what graph construction uses.
    pub h_star: Matrix,
    pub e_star: Matrix,
    pub iterations: usize,
    pub converged: bool,
    /// Per iteration: (relative feasibility, penalty-scaled change).
    pub feasibility_history: Vec<(f64, f64)>,
    pub objective_history: Vec<f64>,
    pub final_mu: f64,
}

impl NnlrsSolution {
    pub fn objective(&self, cfg: &NnlrsConfig) -> f64 {
        nnlrs_objective(&self.z_star, &self.e_star, cfg)
    }

    pub fn final_feasibility(&self) -> f64 {
        self.feasibility_history.last().map_or(0.0, |r| r.0)
    }
}

/// `‖Z‖_* + β‖Z‖₁ + λ‖E‖_{2,1}`.
pub fn nnlrs_objective(z: &Matrix, e: &Matrix, cfg: &NnlrsConfig) -> f64 {
    nuclear_norm(z) + cfg.beta * l1_norm(z) + cfg.lambda * l21_norm(e)
}

/// One LADMAP iteration: the `Z`, `H`, `E` block updates, both multiplier
/// updates and the adaptive penalty update.
pub fn ladmap_step(
    x: &Matrix,
    a: &Matrix,
    state: &SolverState,
    cfg: &NnlrsConfig,
) -> Result<(SolverState, StepResiduals)> {
    state.check_shapes(x, a)?;
    let iteration = state.iteration + 1;
    let mu = state.mu;
    let eta1 = state.eta1;
    let x_norm = x.norm();
    let scale = if x_norm > 0.0 { x_norm } else { 1.0 };

    // Linearized Z step around the current iterate.
    let residual = x - a * &state.z - &state.e + &state.y1 / mu;
    let coupling = &state.z - &state.h + &state.y2 / mu;
    let point = &state.z + (a.tr_mul(&residual) - coupling) / eta1;
    let z = svt(&point, 1.0 / (eta1 * mu)).map_err(|_| Error::Svd { iteration })?;

    let shift = &z + &state.y2 / mu;
    let h = shift.map(|v| shrink_scalar(v, cfg.beta / mu).max(0.0));

    let az = a * &z;
    let e = l21_shrink(&(x - &az + &state.y1 / mu), cfg.lambda / mu);

    let primal = x - &az - &e;
    let y1 = &state.y1 + &primal * mu;
    let y2 = &state.y2 + (&z - &h) * mu;

    let change = (eta1.sqrt() * (&z - &state.z).norm())
        .max((&h - &state.h).norm())
        .max((&e - &state.e).norm())
        / scale;
    let rho = if mu * change < cfg.eps2 {
        cfg.rho0
    } else {
        1.0
    };
    let next = SolverState {
        z,
        h,
        e,
        y1,
        y2,
        mu: cfg.mu_max.min(rho * mu),
        eta1,
        iteration,
    };
    if !next.is_finite() {
        return Err(Error::NonFinite {
            iteration,
            context: "LADMAP iterate".into(),
        });
    }
    let residuals = StepResiduals {
        feasibility: primal.norm() / scale,
        change,
    };
    Ok((next, residuals))
}

/// Runs LADMAP from the zero state until both stopping conditions hold or
/// `max_iter` is reached. Non-convergence is reported via the `converged`
/// flag, not as an error.
pub fn solve_nnlrs(x: &Matrix, a: &Matrix, cfg: &NnlrsConfig) -> Result<NnlrsSolution> {
    cfg.validate()?;
    if x.is_empty() || a.is_empty() {
        return Err(Error::Dimension("X and A must be nonempty".into()));
    }
    if a.nrows() != x.nrows() {
        return Err(Error::Dimension(format!(
            "A has {} rows but X has {}",
            a.nrows(),
            x.nrows()
        )));
    }

    let mut state = SolverState::zeros(x, a, cfg);
    if x.norm() == 0.0 {
        return Ok(NnlrsSolution {
            z_star: state.z,
            h_star: state.h,
            e_star: state.e,
            iterations: 0,
            converged: true,
            feasibility_history: Vec::new(),
            objective_history: Vec::new(),
            final_mu: state.mu,
        });
    }

    let mut feasibility_history = Vec::new();
    let mut objective_history = Vec::new();
    let mut converged = false;
    while state.iteration < cfg.max_iter {
        let (next, res) = ladmap_step(x, a, &state, cfg)?;
        state = next;
        let scaled_change = state.mu * res.change;
        feasibility_history.push((res.feasibility, scaled_change));
        if cfg.track_objective {
            objective_history.push(nnlrs_objective(&state.z, &state.e, cfg));
        }
        if res.feasibility < cfg.eps1 && scaled_change < cfg.eps2 {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!(
            "LADMAP stopped at max_iter={} without meeting tolerances",
            cfg.max_iter
        );
    }
    Ok(NnlrsSolution {
        z_star: state.z,
        h_star: state.h,
        e_star: state.e,
        iterations: state.iteration,
        converged,
        feasibility_history,
        objective_history,
        final_mu: state.mu,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn objective_examples() {
        let cfg = NnlrsConfig::default();
        assert_eq!(
            nnlrs_objective(&Matrix::zeros(2, 2), &Matrix::zeros(2, 2), &cfg),
            0.0
        );
        let v = nnlrs_objective(&Matrix::identity(2, 2), &Matrix::zeros(2, 2), &cfg);
        assert_abs_diff_eq!(v, 2.4, epsilon = 1e-12);
        let cfg = NnlrsConfig {
            beta: 1.0,
            lambda: 1.0,
            ..Default::default()
        };
        let z = Matrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 4.0]);
        let e = Matrix::from_column_slice(2, 1, &[0.6, 0.8]);
        assert_abs_diff_eq!(nnlrs_objective(&z, &e, &cfg), 15.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_data_is_a_fixed_point() {
        let x = Matrix::zeros(3, 4);
        let a = Matrix::from_fn(3, 4, |i, j| (i + 2 * j) as f64);
        let cfg = NnlrsConfig::default();
        let mut state = SolverState::zeros(&x, &a, &cfg);
        let mut mu = state.mu;
        for _ in 0..20 {
            let (next, _) = ladmap_step(&x, &a, &state, &cfg).unwrap();
            assert_eq!(next.z, Matrix::zeros(4, 4));
            assert_eq!(next.h, Matrix::zeros(4, 4));
            assert_eq!(next.e, Matrix::zeros(3, 4));
            assert_eq!(next.y1, Matrix::zeros(3, 4));
            assert!(next.mu >= mu);
            mu = next.mu;
            state = next;
        }
        assert!(mu > cfg.mu0);
    }

    #[test]
    fn zero_data_short_circuits() {
        let x = Matrix::zeros(3, 4);
        let sol = solve_nnlrs(&x, &x, &NnlrsConfig::default()).unwrap();
        assert!(sol.converged);
        assert!(sol.iterations <= 1);
        assert_eq!(sol.z_star, Matrix::zeros(4, 4));
        assert_eq!(sol.e_star, Matrix::zeros(3, 4));
    }

    #[test]
    fn scalar_problem_converges_to_unit_coefficient() {
        let x = Matrix::from_element(1, 1, 1.0);
        let cfg = NnlrsConfig {
            beta: 0.0,
            lambda: 100.0,
            max_iter: 10_000,
            ..Default::default()
        };
        let mut state = SolverState::zeros(&x, &x, &cfg);
        for _ in 0..10_000 {
            state = ladmap_step(&x, &x, &state, &cfg).unwrap().0;
            assert!(state.h[(0, 0)] >= 0.0);
        }
        assert!((state.z[(0, 0)] - 1.0).abs() < 1e-4);
        assert!(state.e[(0, 0)].abs() < 1e-4);
    }

    #[test]
    fn rejects_bad_config_and_shapes() {
        let x = Matrix::identity(2, 2);
        let bad = NnlrsConfig {
            rho0: 1.0,
            ..Default::default()
        };
        assert!(matches!(solve_nnlrs(&x, &x, &bad), Err(Error::Config(_))));
        let a = Matrix::identity(3, 3);
        assert!(matches!(
            solve_nnlrs(&x, &a, &NnlrsConfig::default()),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn iterates_are_deterministic_and_nonnegative() {
        let x = Matrix::from_fn(4, 6, |i, j| ((i * 7 + j * 3) % 5) as f64 - 1.5);
        let cfg = NnlrsConfig::default();
        let a = solve_nnlrs(&x, &x, &cfg).unwrap();
        let b = solve_nnlrs(&x, &x, &cfg).unwrap();
        assert_eq!(a.z_star, b.z_star);
        assert_eq!(a.e_star, b.e_star);
        assert!(a.h_star.iter().all(|&v| v >= 0.0));
        if a.converged {
            assert!(a.final_feasibility() < cfg.eps1);
        }
    }
}
