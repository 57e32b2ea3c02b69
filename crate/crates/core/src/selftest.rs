//! Worked examples for the proximal operators, runnable from the CLI.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::proximal::{l21_shrink, soft_threshold, spectral_norm_sq, svt, Matrix};

#[derive(Debug, Clone)]
pub struct ExampleCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, got: &Matrix, want: &Matrix, tol: f64) -> ExampleCheck {
    let err = if got.shape() == want.shape() {
        (got - want).amax()
    } else {
        f64::INFINITY
    };
    ExampleCheck {
        name,
        passed: err <= tol,
        detail: format!("max abs deviation {err:.3e}"),
    }
}

fn check_scalar(name: &'static str, got: f64, want: f64, rel: f64) -> ExampleCheck {
    let err = (got - want).abs() / want.abs().max(f64::MIN_POSITIVE);
    ExampleCheck {
        name,
        passed: err <= rel,
        detail: format!("got {got}, expected {want}"),
    }
}

fn seeded(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// Evaluates the example table; each entry reports pass/fail and detail.
pub fn operator_examples() -> Vec<ExampleCheck> {
    let m = |r: usize, c: usize, v: &[f64]| Matrix::from_row_slice(r, c, v);
    let mut out = vec![
        check(
            "soft_threshold([1.2], 0.5) = [0.7]",
            &soft_threshold(&m(1, 1, &[1.2]), 0.5),
            &m(1, 1, &[0.7]),
            1e-15,
        ),
        check(
            "soft_threshold([-0.3], 0.5) = [0]",
            &soft_threshold(&m(1, 1, &[-0.3]), 0.5),
            &m(1, 1, &[0.0]),
            0.0,
        ),
        check(
            "soft_threshold([-2, 3], 1) = [-1, 2]",
            &soft_threshold(&m(1, 2, &[-2.0, 3.0]), 1.0),
            &m(1, 2, &[-1.0, 2.0]),
            0.0,
        ),
        check(
            "l21_shrink((3,4), 1) = (2.4, 3.2)",
            &l21_shrink(&m(2, 1, &[3.0, 4.0]), 1.0),
            &m(2, 1, &[2.4, 3.2]),
            1e-15,
        ),
        check(
            "l21_shrink((3,4), 5) = 0",
            &l21_shrink(&m(2, 1, &[3.0, 4.0]), 5.0),
            &m(2, 1, &[0.0, 0.0]),
            0.0,
        ),
    ];
    let r = seeded(4, 3, 1);
    out.push(check("l21_shrink(M, 0) = M", &l21_shrink(&r, 0.0), &r, 0.0));

    let diag = |a: f64, b: f64| Matrix::from_diagonal(&nalgebra::DVector::from_vec(vec![a, b]));
    let svt_or_nan = |x: &Matrix, t: f64| {
        svt(x, t).unwrap_or_else(|_| Matrix::from_element(x.nrows(), x.ncols(), f64::NAN))
    };
    out.push(check(
        "svt(diag(3,1), 2) = diag(1,0)",
        &svt_or_nan(&diag(3.0, 1.0), 2.0),
        &diag(1.0, 0.0),
        1e-12,
    ));
    let r = seeded(5, 4, 2);
    out.push(check("svt(M, 0) = M", &svt_or_nan(&r, 0.0), &r, 1e-10));

    let s = r.singular_values();
    let tau = s[1];
    let shrunk = svt_or_nan(&r, tau).singular_values();
    let err = s
        .iter()
        .zip(shrunk.iter())
        .map(|(a, b)| ((a - tau).max(0.0) - b).abs())
        .fold(0.0, f64::max);
    out.push(ExampleCheck {
        name: "svt(M, sigma_2) keeps rank <= 1",
        passed: err < 1e-10,
        detail: format!("max singular value deviation {err:.3e}"),
    });

    out.push(check_scalar(
        "spectral_norm_sq(I3) = 1",
        spectral_norm_sq(&Matrix::identity(3, 3)),
        1.0,
        1e-12,
    ));
    out.push(check_scalar(
        "spectral_norm_sq(diag(2,1)) = 4",
        spectral_norm_sq(&diag(2.0, 1.0)),
        4.0,
        1e-12,
    ));
    let r = seeded(10, 8, 3);
    let want = r.singular_values().max().powi(2);
    out.push(check_scalar(
        "spectral_norm_sq(random 10x8)",
        spectral_norm_sq(&r),
        want,
        1e-6,
    ));
    out
}
