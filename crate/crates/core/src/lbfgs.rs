//! Limited-memory BFGS with a backtracking Armijo line search.
//!
//! Every accepted step strictly decreases the objective, so the returned
//! point is never worse than the starting point.

use std::collections::VecDeque;

use nalgebra::DVector;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsOptions {
    pub max_iter: usize,
    /// Stop once `‖∇f‖₂ ≤ grad_tol · max(1, |f|)`.
    pub grad_tol: f64,
    pub memory: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            grad_tol: 1e-6,
            memory: 10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LbfgsOutcome {
    pub x: DVector<f64>,
    pub value: f64,
    pub initial_value: f64,
    pub iterations: usize,
    /// Gradient tolerance reached.
    pub converged: bool,
    /// Line search failed before any decrease was made.
    pub stalled: bool,
}

const ARMIJO_C: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

/// Minimizes `f`, which returns the value and gradient at a point.
pub fn minimize<F>(mut f: F, x0: DVector<f64>, opts: &LbfgsOptions) -> LbfgsOutcome
where
    F: FnMut(&DVector<f64>) -> (f64, DVector<f64>),
{
    let mut x = x0;
    let (mut value, mut grad) = f(&x);
    let initial_value = value;
    let mut history: VecDeque<(DVector<f64>, DVector<f64>, f64)> = VecDeque::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut stalled = false;

    while iterations < opts.max_iter {
        if grad.norm() <= opts.grad_tol * value.abs().max(1.0) {
            converged = true;
            break;
        }
        let mut direction = two_loop(&grad, &history);
        let mut slope = grad.dot(&direction);
        if slope >= 0.0 {
            history.clear();
            direction = -&grad;
            slope = -grad.norm_squared();
        }

        let mut step = if history.is_empty() {
            (1.0 / grad.norm()).min(1.0)
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let candidate = &x + &direction * step;
            let (v, g) = f(&candidate);
            if v.is_finite() && v <= value + ARMIJO_C * step * slope && v < value {
                accepted = Some((candidate, v, g));
                break;
            }
            step *= 0.5;
        }
        let Some((next, next_value, next_grad)) = accepted else {
            stalled = iterations == 0;
            break;
        };

        let s = &next - &x;
        let y = &next_grad - &grad;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if history.len() == opts.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        x = next;
        value = next_value;
        grad = next_grad;
        iterations += 1;
    }

    LbfgsOutcome {
        x,
        value,
        initial_value,
        iterations,
        converged,
        stalled,
    }
}

fn two_loop(
    grad: &DVector<f64>,
    history: &VecDeque<(DVector<f64>, DVector<f64>, f64)>,
) -> DVector<f64> {
    let mut q = grad.clone();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let alpha = rho * s.dot(&q);
        q.axpy(-alpha, y, 1.0);
        alphas.push(alpha);
    }
    if let Some((s, y, _)) = history.back() {
        q *= s.dot(y) / y.norm_squared();
    }
    for ((s, y, rho), alpha) in history.iter().zip(alphas.into_iter().rev()) {
        let beta = rho * y.dot(&q);
        q.axpy(alpha - beta, s, 1.0);
    }
    -q
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_rosenbrock() {
        let rosen = |x: &DVector<f64>| {
            let (a, b) = (x[0], x[1]);
            let v = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = DVector::from_vec(vec![
                -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
                200.0 * (b - a * a),
            ]);
            (v, g)
        };
        let opts = LbfgsOptions {
            max_iter: 500,
            grad_tol: 1e-10,
            ..Default::default()
        };
        let out = minimize(rosen, DVector::from_vec(vec![-1.2, 1.0]), &opts);
        assert!(out.converged);
        assert!((out.x[0] - 1.0).abs() < 1e-6);
        assert!((out.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn never_increases_objective() {
        let quad = |x: &DVector<f64>| (x.norm_squared(), x * 2.0);
        let out = minimize(
            quad,
            DVector::from_element(5, 3.0),
            &LbfgsOptions::default(),
        );
        assert!(out.value <= out.initial_value);
        assert!(out.value < 1e-10);
    }

    #[test]
    fn starts_at_optimum() {
        let quad = |x: &DVector<f64>| (x.norm_squared(), x * 2.0);
        let out = minimize(quad, DVector::zeros(3), &LbfgsOptions::default());
        assert!(out.converged);
        assert_eq!(out.iterations, 0);
        assert_eq!(out.x, DVector::zeros(3));
    }
}
