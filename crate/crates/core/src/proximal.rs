//! Closed-form proximal operators and the matrix norms they pair with.
//!
//! All operators are pure functions of their inputs. The SVD used here is
//! sign-normalized so that repeated runs produce bit-identical iterates.

use nalgebra::{DMatrix, DVector, SVD};

use crate::error::{Error, Result};

/// Dense real matrix, column-major. Columns are samples throughout the crate.
pub type Matrix = DMatrix<f64>;

/// Singular values below this are treated as zero when reporting ranks.
pub const RANK_FLOOR: f64 = 1e-12;

const SVD_EPS: f64 = 1e-15;
const SVD_MAX_ITER: usize = 10_000;

/// Thin SVD with singular values sorted in decreasing order and a fixed
/// sign convention: the first non-negligible entry of every left singular
/// vector is nonnegative.
#[derive(Debug, Clone)]
pub struct DeterministicSvd {
    pub u: Matrix,
    pub singular_values: DVector<f64>,
    pub v_t: Matrix,
}

impl DeterministicSvd {
    pub fn new(m: &Matrix) -> Option<Self> {
        let svd = SVD::try_new(m.clone(), true, true, SVD_EPS, SVD_MAX_ITER)?;
        let mut u = svd.u?;
        let mut v_t = svd.v_t?;
        let singular_values = svd.singular_values;
        for i in 0..singular_values.len() {
            let col = u.column(i);
            let scale = col.amax();
            let pivot = col.iter().copied().find(|x| x.abs() > 1e-10 * scale);
            if matches!(pivot, Some(p) if p < 0.0) {
                u.column_mut(i).neg_mut();
                v_t.row_mut(i).neg_mut();
            }
        }
        Some(Self {
            u,
            singular_values,
            v_t,
        })
    }

    pub fn rank(&self) -> usize {
        self.singular_values
            .iter()
            .filter(|&&s| s > RANK_FLOOR)
            .count()
    }

    /// Rebuilds `U diag(f(s)) Vᵀ`.
    pub fn recompose_with(&self, f: impl Fn(f64) -> f64) -> Matrix {
        let mut scaled_u = self.u.clone();
        for (i, &s) in self.singular_values.iter().enumerate() {
            let w = f(s);
            scaled_u.column_mut(i).scale_mut(w);
        }
        scaled_u * &self.v_t
    }
}

/// Entrywise shrinkage `sign(m)·max(|m| − tau, 0)`.
pub fn soft_threshold(m: &Matrix, tau: f64) -> Matrix {
    debug_assert!(tau >= 0.0);
    m.map(|x| shrink_scalar(x, tau))
}

#[inline]
pub(crate) fn shrink_scalar(x: f64, tau: f64) -> f64 {
    if x > tau {
        x - tau
    } else if x < -tau {
        x + tau
    } else {
        0.0
    }
}

/// Singular value thresholding: the proximal operator of `tau·‖·‖_*`.
pub fn svt(m: &Matrix, tau: f64) -> Result<Matrix> {
    debug_assert!(tau >= 0.0);
    if m.is_empty() {
        return Ok(m.clone());
    }
    let svd = DeterministicSvd::new(m).ok_or(Error::Svd { iteration: 0 })?;
    Ok(svd.recompose_with(|s| (s - tau).max(0.0)))
}

/// Column-wise group shrinkage: the proximal operator of `tau·‖·‖_{2,1}`.
/// Columns with norm at most `tau` (including zero columns) become exactly zero.
pub fn l21_shrink(m: &Matrix, tau: f64) -> Matrix {
    debug_assert!(tau >= 0.0);
    let mut out = m.clone();
    for mut col in out.column_iter_mut() {
        let norm = col.norm();
        if norm > tau {
            col.scale_mut((norm - tau) / norm);
        } else {
            col.fill(0.0);
        }
    }
    out
}

/// Squared spectral norm `‖A‖₂²`, estimated by power iteration on `AᵀA`
/// and falling back to a full SVD if the iteration stalls.
pub fn spectral_norm_sq(a: &Matrix) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    power_iteration(a).unwrap_or_else(|| {
        let s = a.singular_values();
        s.max().powi(2)
    })
}

fn power_iteration(a: &Matrix) -> Option<f64> {
    let n = a.ncols();
    // Deterministic, non-symmetric start so it is unlikely to be orthogonal to
    // the leading right singular vector.
    let mut v = DVector::from_fn(n, |i, _| {
        1.0 + ((i as f64 + 1.0) * 0.618_033_988_75).fract()
    });
    v.normalize_mut();
    let mut estimate = 0.0;
    for _ in 0..5_000 {
        let av = a * &v;
        let mut w = a.tr_mul(&av);
        let next = w.norm();
        if next == 0.0 {
            return None;
        }
        w /= next;
        let converged = (next - estimate).abs() <= 1e-13 * next;
        estimate = next;
        v = w;
        if converged {
            // Rayleigh quotient is a tighter estimate than the growth factor.
            let av = a * &v;
            return Some(av.norm_squared());
        }
    }
    None
}

pub fn nuclear_norm(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().sum()
}

pub fn l1_norm(m: &Matrix) -> f64 {
    m.iter().map(|x| x.abs()).sum()
}

pub fn l21_norm(m: &Matrix) -> f64 {
    m.column_iter().map(|c| c.norm()).sum()
}

pub fn rank(m: &Matrix) -> usize {
    if m.is_empty() {
        return 0;
    }
    m.singular_values()
        .iter()
        .filter(|&&s| s > RANK_FLOOR)
        .count()
}
