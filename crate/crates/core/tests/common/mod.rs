//! Test-only oracles. Nothing here calls into the solver or the proximal
//! operators of the library, so the checks stay independent of the code
//! paths they verify.
#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Mat = DMatrix<f64>;

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Mat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Mat::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

fn nuclear(m: &Mat) -> f64 {
    m.clone().svd(false, false).singular_values.sum()
}

fn l1(m: &Mat) -> f64 {
    m.iter().map(|v| v.abs()).sum()
}

fn l21(m: &Mat) -> f64 {
    m.column_iter().map(|c| c.norm()).sum()
}

/// `‖Z‖_* + β‖Z‖₁ + λ‖E‖_{2,1}` recomputed from scratch.
pub fn objective(z: &Mat, e: &Mat, beta: f64, lambda: f64) -> f64 {
    nuclear(z) + beta * l1(z) + lambda * l21(e)
}

fn nuclear_prox(m: &Mat, tau: f64) -> Mat {
    let svd = m.clone().svd(true, true);
    let u = svd.u.unwrap();
    let vt = svd.v_t.unwrap();
    let s = svd.singular_values.map(|s| (s - tau).max(0.0));
    u * Mat::from_diagonal(&s) * vt
}

fn column_prox(m: &Mat, tau: f64) -> Mat {
    let mut out = m.clone();
    for mut c in out.column_iter_mut() {
        let n = c.norm();
        let scale = if n > tau { (n - tau) / n } else { 0.0 };
        c *= scale;
    }
    out
}

pub struct OracleSolution {
    pub z: Mat,
    pub e: Mat,
    pub objective: f64,
    pub residual: f64,
    pub iterations: usize,
}

/// Reference solver for `min ‖Z‖_* + β‖Z‖₁ + λ‖E‖_{2,1}` s.t. `X = AZ + E,
/// Z ≥ 0`. Classical ADMM with three copies of `Z` (one per nonsmooth term)
/// and an exact least-squares `Z` update; no linearization, fixed penalty.
/// Runs until all splitting residuals fall below `tol`.
pub fn reference_nnlrs(x: &Mat, a: &Mat, beta: f64, lambda: f64, tol: f64) -> OracleSolution {
    let (d, n) = x.shape();
    let m = a.ncols();
    let mu = 1.0;
    let mut j = Mat::zeros(m, n);
    let mut h = Mat::zeros(m, n);
    let mut e = Mat::zeros(d, n);
    let mut y1 = Mat::zeros(d, n);
    let mut y2 = Mat::zeros(m, n);
    let mut y3 = Mat::zeros(m, n);
    let system = a.transpose() * a + Mat::identity(m, m) * 2.0;
    let chol = system.cholesky().expect("AᵀA + 2I is positive definite");
    let scale = x.norm().max(1.0);
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    for it in 0..400_000 {
        let rhs = a.transpose() * (x - &e + &y1 / mu) + &j - &y2 / mu + &h - &y3 / mu;
        let z = chol.solve(&rhs);
        let j_new = nuclear_prox(&(&z + &y2 / mu), 1.0 / mu);
        let h_new = (&z + &y3 / mu).map(|v| {
            let t = beta / mu;
            let s = if v > t {
                v - t
            } else if v < -t {
                v + t
            } else {
                0.0
            };
            s.max(0.0)
        });
        let e_new = column_prox(&(x - a * &z + &y1 / mu), lambda / mu);
        let r1 = x - a * &z - &e_new;
        let r2 = &z - &j_new;
        let r3 = &z - &h_new;
        let dual = (&j_new - &j).norm() + (&h_new - &h).norm() + (&e_new - &e).norm();
        y1 += &r1 * mu;
        y2 += &r2 * mu;
        y3 += &r3 * mu;
        j = j_new;
        h = h_new;
        e = e_new;
        residual = (r1.norm() + r2.norm() + r3.norm() + dual) / scale;
        iterations = it + 1;
        if residual < tol {
            break;
        }
    }
    // Evaluate at an exactly feasible, exactly nonnegative point.
    let e_feasible = x - a * &h;
    OracleSolution {
        objective: objective(&h, &e_feasible, beta, lambda),
        z: h,
        e: e_feasible,
        residual,
        iterations,
    }
}

/// Fraction of total absolute weight in `w` that lies between samples of the
/// same ground-truth class.
pub fn block_mass(w: &Mat, labels: &[usize]) -> f64 {
    let mut inside = 0.0;
    let mut total = 0.0;
    for j in 0..w.ncols() {
        for i in (0..w.nrows()).filter(|&i| i != j) {
            let v = w[(i, j)].abs();
            total += v;
            if labels[i] == labels[j] {
                inside += v;
            }
        }
    }
    if total == 0.0 {
        0.0
    } else {
        inside / total
    }
}

/// Columns normalized to unit ℓ2 norm, zero columns kept.
pub fn column_normalized(m: &Mat) -> Mat {
    let mut out = m.clone();
    for mut c in out.column_iter_mut() {
        let n = c.norm();
        if n > 0.0 {
            c /= n;
        }
    }
    out
}

#[derive(Debug, Clone, Copy)]
pub enum Prox {
    Soft,
    L21,
    Svt,
}

/// `τ·g(Y) + ½‖Y − M‖_F²` for the regularizer `g` matching `kind`.
pub fn prox_objective(kind: Prox, y: &Mat, m: &Mat, tau: f64) -> f64 {
    let g = match kind {
        Prox::Soft => l1(y),
        Prox::L21 => l21(y),
        Prox::Svt => nuclear(y),
    };
    tau * g + 0.5 * (y - m).norm_squared()
}

/// Smallest value of `f(Y + δ) − f(Y)` over seeded perturbations of several
/// scales, including ones that zero out or revive individual entries. A
/// true minimizer gives a nonnegative result.
pub fn worst_perturbation_gain(kind: Prox, y: &Mat, m: &Mat, tau: f64, seed: u64) -> f64 {
    let base = prox_objective(kind, y, m, tau);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    for scale in [1e-1, 1e-3, 1e-5] {
        for _ in 0..10 {
            let delta = Mat::from_fn(y.nrows(), y.ncols(), |_, _| rng.random_range(-scale..scale));
            worst = worst.min(prox_objective(kind, &(y + delta), m, tau) - base);
        }
    }
    for idx in 0..y.len() {
        let mut moved = y.clone();
        moved[idx] = if y[idx] == 0.0 { 1e-4 } else { 0.0 };
        worst = worst.min(prox_objective(kind, &moved, m, tau) - base);
    }
    worst
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &Mat) -> f64 {
    m.clone().symmetric_eigenvalues().min()
}

/// Random matrix with orthonormal rows.
pub fn orthonormal_rows(rows: usize, cols: usize, seed: u64) -> Mat {
    let q = random_matrix(cols, rows, seed).qr().q();
    q.transpose()
}

/// Central-difference gradient of `f` at `p` with step `h`.
pub fn central_differences(f: impl Fn(&Mat) -> f64, p: &Mat, h: f64) -> Mat {
    let mut g = Mat::zeros(p.nrows(), p.ncols());
    for idx in 0..p.len() {
        let mut plus = p.clone();
        let mut minus = p.clone();
        plus[idx] += h;
        minus[idx] -= h;
        g[idx] = (f(&plus) - f(&minus)) / (2.0 * h);
    }
    g
}

/// Largest entrywise deviation of `analytic` from `numeric`, relative to
/// the entry (or to a thousandth of the largest entry for near-zero ones).
pub fn max_relative_deviation(analytic: &Mat, numeric: &Mat) -> f64 {
    let floor = 1e-3 * numeric.amax().max(1e-12);
    analytic
        .iter()
        .zip(numeric.iter())
        .map(|(a, n)| (a - n).abs() / n.abs().max(floor))
        .fold(0.0, f64::max)
}

/// `‖X − PᵀPX‖_F²` recomputed directly.
pub fn reconstruction(x: &Mat, p: &Mat) -> f64 {
    (x - p.transpose() * (p * x)).norm_squared()
}

/// Indices of the `count` columns of `e` with the largest ℓ2 norms.
pub fn largest_columns(e: &Mat, count: usize) -> Vec<usize> {
    let mut norms: Vec<(f64, usize)> = e.column_iter().map(|c| c.norm()).zip(0..).collect();
    norms.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    norms.into_iter().take(count).map(|(_, j)| j).collect()
}

pub struct CliRun {
    pub code: i32,
    pub stdout: Vec<u8>,
    pub stderr: String,
    /// Every file under the working directory, sorted by path.
    pub files: Vec<(String, Vec<u8>)>,
}

/// Runs the `nnlrs` binary inside `dir` and collects what it wrote.
pub fn run_cli(dir: &std::path::Path, args: &[&str]) -> CliRun {
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_nnlrs"))
        .args(args)
        .current_dir(dir)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs");
    let mut files = Vec::new();
    collect_files(dir, dir, &mut files);
    files.sort();
    CliRun {
        code: out.status.code().unwrap_or(-1),
        stdout: out.stdout,
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
        files,
    }
}

fn collect_files(root: &std::path::Path, dir: &std::path::Path, out: &mut Vec<(String, Vec<u8>)>) {
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            collect_files(root, &path, out);
        } else {
            let name = path.strip_prefix(root).unwrap().display().to_string();
            out.push((name, std::fs::read(&path).unwrap()));
        }
    }
}

/// Small, fast invocations covering every subcommand.
pub const CLI_CASES: &[&[&str]] = &[
    &["selftest", "ops"],
    &[
        "synth",
        "make",
        "--out-dir",
        "synth",
        "--synth.per_class",
        "6",
    ],
    &["graph", "build", "--out", "g.txt", "--synth.per_class", "6"],
    &[
        "graph",
        "build",
        "--out",
        "g.txt",
        "--method",
        "knn",
        "--synth.per_class",
        "6",
    ],
    &[
        "ssl",
        "run",
        "--out-dir",
        "r",
        "--synth.per_class",
        "6",
        "--experiment.trials",
        "2",
        "--experiment.label_fractions",
        "[0.5]",
    ],
    &[
        "ef",
        "run",
        "--out",
        "p.txt",
        "--graph-out",
        "g.txt",
        "--synth.per_class",
        "6",
        "--embedding.reduced_dim",
        "6",
        "--embedding.outer_max",
        "3",
    ],
    &[
        "sweep",
        "beta",
        "--out-dir",
        "s",
        "--betas",
        "0,0.2",
        "--synth.per_class",
        "6",
        "--experiment.trials",
        "1",
        "--experiment.label_fractions",
        "[0.5]",
    ],
];

/// Runs `args` twice in fresh directories; `None` when the runs agree
/// byte for byte, otherwise a description of the first difference.
pub fn cli_difference(args: &[&str]) -> Option<String> {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (ra, rb) = (run_cli(a.path(), args), run_cli(b.path(), args));
    if ra.code != 0 {
        return Some(format!("exit code {}: {}", ra.code, ra.stderr));
    }
    if ra.code != rb.code {
        return Some(format!("exit codes {} and {}", ra.code, rb.code));
    }
    if ra.stdout != rb.stdout {
        return Some("stdout differs".into());
    }
    if ra.files != rb.files {
        return Some("written files differ".into());
    }
    None
}
