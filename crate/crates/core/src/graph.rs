//! Affinity graphs: NNLRS coefficient graphs, the kNN-Gaussian baseline,
//! and their Laplacians.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::proximal::Matrix;
use crate::solver::{solve_nnlrs, NnlrsConfig, NnlrsSolution};

/// Default coefficient threshold; strips only numerical dust.
pub const DEFAULT_THETA: f64 = 1e-4;

const SYMMETRY_TOL: f64 = 1e-12;

/// Symmetric, nonnegative weight matrix over `n` nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityGraph {
    pub w: Matrix,
    /// `false` when the solver that produced the coefficients hit `max_iter`.
    pub converged: bool,
}

impl AffinityGraph {
    pub fn new(w: Matrix) -> Result<Self> {
        if !w.is_square() {
            return Err(Error::Dimension(format!(
                "weight matrix must be square, got {}x{}",
                w.nrows(),
                w.ncols()
            )));
        }
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Data("weights must be finite and nonnegative".into()));
        }
        let n = w.nrows();
        for j in 0..n {
            for i in 0..j {
                if (w[(i, j)] - w[(j, i)]).abs() > SYMMETRY_TOL {
                    return Err(Error::Data(format!("weights not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self { w, converged: true })
    }

    pub fn node_count(&self) -> usize {
        self.w.nrows()
    }

    pub fn degrees(&self) -> Vec<f64> {
        self.w.row_iter().map(|r| r.sum()).collect()
    }

    pub fn edge_count(&self) -> usize {
        let n = self.node_count();
        (0..n)
            .flat_map(|j| (0..j).map(move |i| (i, j)))
            .filter(|&(i, j)| self.w[(i, j)] > 0.0)
            .count()
    }
}

/// Unit-norm columns plus the indices of columns that were zero and were
/// left untouched.
#[derive(Debug, Clone)]
pub struct NormalizedSamples {
    pub x: Matrix,
    pub zero_columns: Vec<usize>,
}

pub fn normalize_samples(x: &Matrix) -> NormalizedSamples {
    let mut out = x.clone();
    let mut zero_columns = Vec::new();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        } else {
            zero_columns.push(j);
        }
    }
    if !zero_columns.is_empty() {
        log::warn!("{} zero sample(s) left unnormalized", zero_columns.len());
    }
    NormalizedSamples {
        x: out,
        zero_columns,
    }
}

/// Normalizes each column to unit ℓ2 norm, then zeroes entries below `theta`.
/// Surviving entries are not renormalized.
pub fn postprocess_coefficients(z: &Matrix, theta: f64) -> Matrix {
    let mut out = z.clone();
    for mut col in out.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
        col.apply(|v| {
            if *v < theta {
                *v = 0.0
            }
        });
    }
    out
}

/// `W = (Ẑ + Ẑᵀ) / 2`.
pub fn symmetrize(zhat: &Matrix) -> Result<AffinityGraph> {
    if !zhat.is_square() {
        return Err(Error::Dimension(format!(
            "coefficient matrix must be square, got {}x{}",
            zhat.nrows(),
            zhat.ncols()
        )));
    }
    let n = zhat.nrows();
    let w = Matrix::from_fn(n, n, |i, j| 0.5 * (zhat[(i, j)] + zhat[(j, i)]));
    AffinityGraph::new(w)
}

/// Graph together with the solve that produced it.
#[derive(Debug, Clone)]
pub struct NnlrsGraph {
    pub graph: AffinityGraph,
    pub solution: NnlrsSolution,
}

/// Normalize samples, solve with the data as its own dictionary, threshold
/// the nonnegative coefficients and symmetrize.
pub fn build_nnlrs_graph(x: &Matrix, cfg: &NnlrsConfig, theta: f64) -> Result<NnlrsGraph> {
    if x.ncols() < 2 {
        return Err(Error::Data(
            "graph construction needs at least two samples".into(),
        ));
    }
    let xn = normalize_samples(x).x;
    let solution = solve_nnlrs(&xn, &xn, cfg)?;
    let graph = graph_from_coefficients(&solution.h_star, theta, solution.converged)?;
    Ok(NnlrsGraph { graph, solution })
}

pub(crate) fn graph_from_coefficients(
    h: &Matrix,
    theta: f64,
    converged: bool,
) -> Result<AffinityGraph> {
    let mut graph = symmetrize(&postprocess_coefficients(h, theta))?;
    graph.converged = converged;
    Ok(graph)
}

fn pairwise_sq_distances(x: &Matrix) -> Matrix {
    let n = x.ncols();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = x.column(i);
            (0..n).map(|j| (xi - x.column(j)).norm_squared()).collect()
        })
        .collect();
    Matrix::from_fn(n, n, |i, j| rows[i][j])
}

/// k-nearest-neighbor graph with Gaussian weights `exp(−‖xᵢ−xⱼ‖²/(2σ²))`.
/// Self is never a neighbor; distance ties go to the lower index. The
/// directed neighbor relation is symmetrized with `max(W, Wᵀ)`.
pub fn knn_gaussian_graph(x: &Matrix, k: usize, sigma: f64) -> Result<AffinityGraph> {
    let n = x.ncols();
    if k == 0 || k >= n {
        return Err(Error::Config(format!(
            "k must satisfy 1 <= k < n (k={k}, n={n})"
        )));
    }
    if sigma <= 0.0 || !sigma.is_finite() {
        return Err(Error::Config("sigma must be positive".into()));
    }
    let dist = pairwise_sq_distances(x);
    let mut w = Matrix::zeros(n, n);
    let two_sigma_sq = 2.0 * sigma * sigma;
    for i in 0..n {
        let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        order.sort_by(|&a, &b| dist[(i, a)].total_cmp(&dist[(i, b)]).then(a.cmp(&b)));
        for &j in order.iter().take(k) {
            let weight = (-dist[(i, j)] / two_sigma_sq).exp();
            w[(i, j)] = w[(i, j)].max(weight);
            w[(j, i)] = w[(j, i)].max(weight);
        }
    }
    AffinityGraph::new(w)
}

/// `L = D − W`.
pub fn laplacian(g: &AffinityGraph) -> Matrix {
    let mut l = -g.w.clone();
    for (i, d) in g.degrees().into_iter().enumerate() {
        l[(i, i)] += d;
    }
    l
}

/// `D^{-1/2} (D − W) D^{-1/2}`; isolated nodes get a zero row and column.
pub fn normalized_laplacian(g: &AffinityGraph) -> Matrix {
    let inv_sqrt: Vec<f64> = g
        .degrees()
        .into_iter()
        .map(|d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    let l = laplacian(g);
    Matrix::from_fn(l.nrows(), l.ncols(), |i, j| {
        inv_sqrt[i] * l[(i, j)] * inv_sqrt[j]
    })
}
