//! Joint learning of a linear projection `P` and NNLRS coefficients
//! (NNLRS-EF), and the PCA pre-embedding baseline.
//!
//! The joint objective is
//!
//! ```text
//! min ‖Z‖_* + β‖Z‖₁ + λ‖E‖_{2,1} + γ‖X − PᵀPX‖_F²   s.t.  PX = PXZ + E,  Z ≥ 0
//! ```
//!
//! and is minimized by alternation: with `P` fixed the `(Z, E)` block is an
//! ordinary NNLRS problem on the projected data; with `Z` fixed the `(E, P)`
//! block is solved by inexact ALM whose `P` step is a smooth problem handed
//! to L-BFGS.

use nalgebra::DVector;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::lbfgs::{self, LbfgsOptions};
use crate::proximal::{l21_shrink, DeterministicSvd, Matrix};
use crate::solver::{nnlrs_objective, solve_nnlrs, NnlrsConfig, NnlrsSolution};

/// Settings of the inexact ALM loop for the `(E, P)` block.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpConfig {
    pub mu0: f64,
    pub mu_max: f64,
    pub rho: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub max_iter: usize,
    pub lbfgs_max_iter: usize,
    pub lbfgs_grad_tol: f64,
}

impl Default for EpConfig {
    fn default() -> Self {
        Self {
            mu0: 0.1,
            mu_max: 1e10,
            rho: 1.1,
            eps1: 1e-6,
            eps2: 1e-3,
            max_iter: 300,
            lbfgs_max_iter: 200,
            lbfgs_grad_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EfConfig {
    /// Not read from configuration files; callers fill it from the shared
    /// solver settings.
    #[serde(skip)]
    pub nnlrs: NnlrsConfig,
    /// Weight of the reconstruction term `‖X − PᵀPX‖_F²`.
    pub gamma: f64,
    /// Number of rows of `P`.
    pub reduced_dim: usize,
    /// Outer tolerance on the largest change of `Z`, `P`, `E`, relative to `‖PX‖_F`.
    pub eps3: f64,
    pub outer_max: usize,
    pub inner: EpConfig,
}

impl Default for EfConfig {
    fn default() -> Self {
        Self {
            nnlrs: NnlrsConfig::default(),
            gamma: 1.0,
            reduced_dim: 100,
            eps3: 1e-4,
            outer_max: 30,
            inner: EpConfig::default(),
        }
    }
}

impl EfConfig {
    pub fn validate(&self, ambient_dim: usize) -> Result<()> {
        self.nnlrs.validate()?;
        if !(self.gamma > 0.0) {
            return Err(Error::Config("gamma must be > 0".into()));
        }
        if self.reduced_dim == 0 || self.reduced_dim > ambient_dim {
            return Err(Error::Config(format!(
                "reduced_dim must lie in 1..={ambient_dim}, got {}",
                self.reduced_dim
            )));
        }
        let i = &self.inner;
        if !(self.eps3 > 0.0 && i.eps1 > 0.0 && i.eps2 > 0.0 && i.mu0 > 0.0 && i.rho > 1.0) {
            return Err(Error::Config(
                "EF tolerances and penalties must be positive, rho > 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct EfSolution {
    /// Nonnegative coefficients from the last `(Z, E)` solve.
    pub z_star: Matrix,
    pub p_star: Matrix,
    pub e_star: Matrix,
    pub outer_iterations: usize,
    pub converged: bool,
    /// Joint objective after each outer iteration.
    pub objective_history: Vec<f64>,
    /// Number of `(Z, E)` solves that hit their iteration cap.
    pub nnlrs_nonconverged: usize,
    /// Number of `P` steps where L-BFGS could not decrease its objective.
    pub p_step_stalls: usize,
    /// Block updates discarded because they would have raised the joint
    /// objective.
    pub rejected_updates: usize,
}

/// Joint objective value and the separately reported constraint residual
/// `‖PX − PXZ − E‖_F`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EfObjective {
    pub value: f64,
    pub residual: f64,
}

pub fn reconstruction_error(x: &Matrix, p: &Matrix) -> f64 {
    let px = p * x;
    (x - p.tr_mul(&px)).norm_squared()
}

pub fn ef_objective(x: &Matrix, z: &Matrix, e: &Matrix, p: &Matrix, cfg: &EfConfig) -> EfObjective {
    let px = p * x;
    let residual = (&px - &px * z - e).norm();
    let value = nnlrs_objective(z, e, &cfg.nnlrs) + cfg.gamma * reconstruction_error(x, p);
    EfObjective { value, residual }
}

/// Top-`k` left singular directions of the uncentered data as the rows of
/// `P`, together with `PX`. When `X` has rank below `k` the remaining rows
/// are completed from the standard basis by Gram–Schmidt.
pub fn pca_embed(x: &Matrix, k: usize) -> Result<(Matrix, Matrix)> {
    let d = x.nrows();
    if k == 0 || k > d {
        return Err(Error::Config(format!(
            "PCA dimension must lie in 1..={d}, got {k}"
        )));
    }
    let svd = DeterministicSvd::new(x).ok_or(Error::Svd { iteration: 0 })?;
    let keep = svd.rank().min(k);
    let mut rows: Vec<DVector<f64>> = (0..keep).map(|i| svd.u.column(i).into_owned()).collect();
    let mut candidate = 0;
    while rows.len() < k && candidate < d {
        let mut v = DVector::zeros(d);
        v[candidate] = 1.0;
        candidate += 1;
        for _ in 0..2 {
            for r in &rows {
                let c = r.dot(&v);
                v.axpy(-c, r, 1.0);
            }
        }
        let norm = v.norm();
        if norm > 1e-8 {
            rows.push(v / norm);
        }
    }
    let p = Matrix::from_fn(k, d, |i, j| rows[i][j]);
    let px = &p * x;
    Ok((p, px))
}

/// Solves the `(Z, E)` block for fixed `P` with the NNLRS solver on `PX`.
pub fn update_ze(x: &Matrix, p: &Matrix, cfg: &EfConfig) -> Result<NnlrsSolution> {
    if p.ncols() != x.nrows() {
        return Err(Error::Dimension(format!(
            "P has {} columns but X has {} rows",
            p.ncols(),
            x.nrows()
        )));
    }
    let px = p * x;
    solve_nnlrs(&px, &px, &cfg.nnlrs)
}

/// Value and gradient of the smooth `P` subproblem
///
/// ```text
/// γ‖X − PᵀPX‖_F² + (μ/2)‖PX(I − Z) − E + Y/μ‖_F²
/// ```
///
/// With `M = X − PᵀPX`, `R = X(I − Z)` and `N = PR − E + Y/μ` the gradient
/// is `−2γ(PXMᵀ + PMXᵀ) + μNRᵀ`.
pub struct PSubproblem<'a> {
    x: &'a Matrix,
    r: Matrix,
    target: Matrix,
    gamma: f64,
    mu: f64,
}

impl<'a> PSubproblem<'a> {
    pub fn new(x: &'a Matrix, z: &Matrix, e: &Matrix, y: &Matrix, gamma: f64, mu: f64) -> Self {
        let r = x - x * z;
        let target = e - y / mu;
        Self {
            x,
            r,
            target,
            gamma,
            mu,
        }
    }

    pub fn value_and_gradient(&self, p: &Matrix) -> (f64, Matrix) {
        let px = p * self.x;
        let m = self.x - p.tr_mul(&px);
        let n = p * &self.r - &self.target;
        let value = self.gamma * m.norm_squared() + 0.5 * self.mu * n.norm_squared();
        let grad = (&px * m.transpose() + p * &m * self.x.transpose()) * (-2.0 * self.gamma)
            + &n * self.r.transpose() * self.mu;
        (value, grad)
    }
}

/// Orthonormal basis (as columns) of the span of the columns of `x` and the
/// rows of `p`.
fn row_span_basis(x: &Matrix, p: &Matrix) -> Matrix {
    let stacked = Matrix::from_fn(x.nrows(), x.ncols() + p.nrows(), |i, j| {
        if j < x.ncols() {
            x[(i, j)]
        } else {
            p[(j - x.ncols(), i)]
        }
    });
    let d = x.nrows();
    match DeterministicSvd::new(&stacked) {
        Some(svd) => {
            let top = svd.singular_values.iter().copied().fold(0.0, f64::max);
            let r = svd
                .singular_values
                .iter()
                .take_while(|&&s| s > top * 1e-12 * d as f64)
                .count();
            if r >= d {
                Matrix::identity(d, d)
            } else {
                svd.u.columns(0, r).into_owned()
            }
        }
        None => Matrix::identity(d, d),
    }
}

/// Result of the `(E, P)` block solve.
#[derive(Debug, Clone)]
pub struct EpSolution {
    pub e: Matrix,
    pub p: Matrix,
    pub iterations: usize,
    pub converged: bool,
    pub stalls: usize,
    /// `γ‖X − PᵀPX‖_F²` after each iteration.
    pub reconstruction_history: Vec<f64>,
}

/// Inexact ALM for the `(E, P)` block with `Z` fixed. `e_init` warm-starts
/// `E`; when `None` it starts at zero.
pub fn update_ep(
    x: &Matrix,
    z: &Matrix,
    p_init: &Matrix,
    e_init: Option<&Matrix>,
    cfg: &EfConfig,
) -> Result<EpSolution> {
    let (d, n) = x.shape();
    let k = p_init.nrows();
    if p_init.ncols() != d || z.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "update_ep: X {d}x{n}, P {}x{}, Z {}x{}",
            k,
            p_init.ncols(),
            z.nrows(),
            z.ncols()
        )));
    }
    let mut e = match e_init {
        Some(e0) if e0.shape() == (k, n) => e0.clone(),
        Some(e0) => {
            return Err(Error::Dimension(format!(
                "E warm start is {}x{}, expected {k}x{n}",
                e0.nrows(),
                e0.ncols()
            )))
        }
        None => Matrix::zeros(k, n),
    };
    let mut p = p_init.clone();
    if x.norm() == 0.0 {
        return Ok(EpSolution {
            e: Matrix::zeros(k, n),
            p,
            iterations: 0,
            converged: true,
            stalls: 0,
            reconstruction_history: Vec::new(),
        });
    }

    // Every gradient row lies in the span of the columns of X and the rows
    // of P, so P never leaves that span. Solving in an orthonormal basis B of
    // it (P = QBᵀ, X̃ = BᵀX) is exact and much cheaper when d is large.
    let basis = row_span_basis(x, &p);
    let xr = basis.tr_mul(x);
    let mut q = &p * &basis;
    let b = basis.ncols();

    let inner = &cfg.inner;
    let opts = LbfgsOptions {
        max_iter: inner.lbfgs_max_iter,
        grad_tol: inner.lbfgs_grad_tol,
        ..Default::default()
    };
    let r = &xr - &xr * z;
    let mut y = Matrix::zeros(k, n);
    let mut mu = inner.mu0;
    let mut stalls = 0;
    let mut converged = false;
    let mut history = Vec::new();
    let mut iterations = 0;
    while iterations < inner.max_iter {
        iterations += 1;
        let e_next = l21_shrink(&(&q * &r + &y / mu), cfg.nnlrs.lambda / mu);

        let sub = PSubproblem::new(&xr, z, &e_next, &y, cfg.gamma, mu);
        let outcome = lbfgs::minimize(
            |flat| {
                let qm = Matrix::from_column_slice(k, b, flat.as_slice());
                let (v, g) = sub.value_and_gradient(&qm);
                (v, DVector::from_column_slice(g.as_slice()))
            },
            DVector::from_column_slice(q.as_slice()),
            &opts,
        );
        log::trace!(
            "P step: {} L-BFGS iterations, converged {}, {:.6e} -> {:.6e}",
            outcome.iterations,
            outcome.converged,
            outcome.initial_value,
            outcome.value
        );
        if outcome.stalled && !outcome.converged {
            stalls += 1;
        }
        let q_next = Matrix::from_column_slice(k, b, outcome.x.as_slice());

        let primal = &q_next * &r - &e_next;
        y += &primal * mu;
        mu = inner.mu_max.min(inner.rho * mu);

        let scale = (&q_next * &xr).norm().max(f64::MIN_POSITIVE);
        let feasibility = primal.norm() / scale;
        let de = (&e_next - &e).norm() / scale;
        let dp = (&q_next - &q).norm() / scale;
        e = e_next;
        q = q_next;
        history.push(cfg.gamma * reconstruction_error(&xr, &q));
        if feasibility < inner.eps1 && de < inner.eps2 && dp < inner.eps2 {
            converged = true;
            break;
        }
    }
    p = q * basis.transpose();
    Ok(EpSolution {
        e,
        p,
        iterations,
        converged,
        stalls,
        reconstruction_history: history,
    })
}

/// Alternates the `(Z, E)` and `(E, P)` solves, starting from the PCA
/// projection, until the largest relative change of `Z`, `P` and `E` drops
/// below `eps3` or `outer_max` is reached.
///
/// A block update is kept only if it does not raise the joint objective, so
/// the recorded history is non-increasing. Once neither block improves, the
/// iterate stops moving and the change test ends the loop.
pub fn solve_ef(x: &Matrix, cfg: &EfConfig) -> Result<EfSolution> {
    let (d, n) = x.shape();
    if n < 2 {
        return Err(Error::Data("NNLRS-EF needs at least two samples".into()));
    }
    cfg.validate(d)?;
    let (mut p, _) = pca_embed(x, cfg.reduced_dim)?;
    let mut z = Matrix::zeros(n, n);
    let mut e = Matrix::zeros(cfg.reduced_dim, n);
    // The starting point violates the constraint, so the first `(Z, E)`
    // solve is always taken.
    let mut current = f64::INFINITY;
    let mut objective_history = Vec::new();
    let mut nnlrs_nonconverged = 0;
    let mut p_step_stalls = 0;
    let mut rejected_updates = 0;
    let mut converged = false;
    let mut outer_iterations = 0;

    while outer_iterations < cfg.outer_max {
        outer_iterations += 1;
        let (z_prev, p_prev, e_prev) = (z.clone(), p.clone(), e.clone());

        let ze = update_ze(x, &p, cfg)?;
        if !ze.converged {
            nnlrs_nonconverged += 1;
        }
        let value = ef_objective(x, &ze.h_star, &ze.e_star, &p, cfg).value;
        if value <= current {
            current = value;
            z = ze.h_star;
            e = ze.e_star;
        } else {
            rejected_updates += 1;
        }

        let ep = update_ep(x, &z, &p, Some(&e), cfg)?;
        p_step_stalls += ep.stalls;
        let value = ef_objective(x, &z, &ep.e, &ep.p, cfg).value;
        if value <= current {
            current = value;
            p = ep.p;
            e = ep.e;
        } else {
            rejected_updates += 1;
        }

        let scale = (&p * x).norm().max(f64::MIN_POSITIVE);
        let change = (&z - &z_prev)
            .norm()
            .max((&p - &p_prev).norm())
            .max((&e - &e_prev).norm())
            / scale;
        objective_history.push(current);
        log::debug!("EF outer {outer_iterations}: objective {current:.6} change {change:.3e}");
        if change < cfg.eps3 {
            converged = true;
            break;
        }
    }
    Ok(EfSolution {
        z_star: z,
        p_star: p,
        e_star: e,
        outer_iterations,
        converged,
        objective_history,
        nnlrs_nonconverged,
        p_step_stalls,
        rejected_updates,
    })
}
