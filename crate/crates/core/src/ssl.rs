//! Graph-based semi-supervised label propagation and error metrics.

use std::collections::VecDeque;

use nalgebra::{Cholesky, Dyn, LU};

use crate::error::{Error, Result};
use crate::graph::{laplacian, normalized_laplacian, AffinityGraph};
use crate::proximal::Matrix;

/// Default LGC fitness weight.
pub const DEFAULT_LGC_MU: f64 = 0.99;

/// Ridge added to the unlabeled block when some unlabeled node cannot reach
/// any labeled node.
pub const GHF_REGULARIZATION: f64 = 1e-10;

const SOLVE_TOL: f64 = 1e-8;

/// One-hot label matrix over all nodes plus the ground truth used for scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelProblem {
    pub y: Matrix,
    /// Sorted, deduplicated indices of labeled nodes.
    pub labeled: Vec<usize>,
    pub classes: usize,
    pub truth: Vec<usize>,
}

impl LabelProblem {
    pub fn new(truth: Vec<usize>, mut labeled: Vec<usize>, classes: usize) -> Result<Self> {
        let n = truth.len();
        if let Some(&bad) = truth.iter().find(|&&t| t >= classes) {
            return Err(Error::Data(format!("label {bad} outside 0..{classes}")));
        }
        labeled.sort_unstable();
        labeled.dedup();
        if let Some(&bad) = labeled.iter().find(|&&i| i >= n) {
            return Err(Error::Data(format!("labeled index {bad} outside 0..{n}")));
        }
        let mut y = Matrix::zeros(n, classes);
        for &i in &labeled {
            y[(i, truth[i])] = 1.0;
        }
        Ok(Self {
            y,
            labeled,
            classes,
            truth,
        })
    }

    pub fn node_count(&self) -> usize {
        self.truth.len()
    }

    pub fn unlabeled(&self) -> Vec<usize> {
        let mut is_labeled = vec![false; self.node_count()];
        for &i in &self.labeled {
            is_labeled[i] = true;
        }
        (0..self.node_count()).filter(|&i| !is_labeled[i]).collect()
    }

    fn check_graph(&self, g: &AffinityGraph) -> Result<()> {
        if g.node_count() != self.node_count() {
            return Err(Error::Dimension(format!(
                "graph has {} nodes, label problem has {}",
                g.node_count(),
                self.node_count()
            )));
        }
        if self.labeled.is_empty() {
            return Err(Error::Data("no labeled nodes".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Propagation {
    /// Real-valued class scores, one row per node.
    pub f: Matrix,
    pub predictions: Vec<usize>,
    /// Nodes with no path to any labeled node (GHF only).
    pub flagged: Vec<usize>,
    /// Relative residual of the linear solve.
    pub residual: f64,
}

impl Propagation {
    fn from_scores(f: Matrix, flagged: Vec<usize>, residual: f64) -> Self {
        let predictions = row_argmax(&f);
        Self {
            f,
            predictions,
            flagged,
            residual,
        }
    }
}

/// Per-row argmax; ties go to the lowest class index.
pub fn row_argmax(f: &Matrix) -> Vec<usize> {
    f.row_iter()
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

fn solve_spd(a: &Matrix, b: &Matrix) -> Result<(Matrix, f64)> {
    let rhs_scale = b.norm().max(1.0);
    let mut x = match Cholesky::new(a.clone()) {
        Some(chol) => chol.solve(b),
        None => LU::<f64, Dyn, Dyn>::new(a.clone())
            .solve(b)
            .ok_or_else(|| Error::LinearSolve("singular system".into()))?,
    };
    let mut residual = (a * &x - b).norm() / rhs_scale;
    if residual > SOLVE_TOL {
        // One step of iterative refinement.
        if let Some(chol) = Cholesky::new(a.clone()) {
            x += chol.solve(&(b - a * &x));
            residual = (a * &x - b).norm() / rhs_scale;
        }
    }
    if !residual.is_finite() || residual > SOLVE_TOL {
        return Err(Error::LinearSolve(format!(
            "residual {residual:.3e} exceeds {SOLVE_TOL:e}"
        )));
    }
    Ok((x, residual))
}

/// Unlabeled nodes that no labeled node reaches through positive edges.
fn unreachable_nodes(g: &AffinityGraph, labeled: &[usize]) -> Vec<usize> {
    let n = g.node_count();
    let mut seen = vec![false; n];
    let mut queue: VecDeque<usize> = labeled.iter().copied().collect();
    for &i in labeled {
        seen[i] = true;
    }
    while let Some(i) = queue.pop_front() {
        for j in 0..n {
            if !seen[j] && g.w[(i, j)] > 0.0 {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    (0..n).filter(|&i| !seen[i]).collect()
}

/// Harmonic-function propagation: labeled rows are clamped to `Y` and the
/// unlabeled rows solve `L_uu F_u = W_ul Y_l`.
pub fn ghf_propagate(g: &AffinityGraph, prob: &LabelProblem) -> Result<Propagation> {
    prob.check_graph(g)?;
    let mut has_label = vec![false; prob.classes];
    for &i in &prob.labeled {
        has_label[prob.truth[i]] = true;
    }
    if let Some(c) = has_label.iter().position(|&h| !h) {
        return Err(Error::Data(format!("class {c} has no labeled sample")));
    }

    let unlabeled = prob.unlabeled();
    let mut f = prob.y.clone();
    if unlabeled.is_empty() {
        return Ok(Propagation::from_scores(f, Vec::new(), 0.0));
    }

    let l = laplacian(g);
    let nu = unlabeled.len();
    let mut l_uu = Matrix::from_fn(nu, nu, |a, b| l[(unlabeled[a], unlabeled[b])]);
    let rhs = Matrix::from_fn(nu, prob.classes, |a, c| {
        prob.labeled
            .iter()
            .map(|&j| g.w[(unlabeled[a], j)] * prob.y[(j, c)])
            .sum()
    });
    let flagged = unreachable_nodes(g, &prob.labeled);
    if !flagged.is_empty() {
        log::warn!(
            "{} unlabeled node(s) disconnected from all labels; regularizing",
            flagged.len()
        );
        for k in 0..nu {
            l_uu[(k, k)] += GHF_REGULARIZATION;
        }
    }
    let (f_u, residual) = solve_spd(&l_uu, &rhs)?;
    for (a, &i) in unlabeled.iter().enumerate() {
        f.set_row(i, &f_u.row(a));
    }
    Ok(Propagation::from_scores(f, flagged, residual))
}

/// Local and global consistency: `F` solves `(L̃ + μI) F = μY` with the
/// normalized Laplacian `L̃`.
pub fn lgc_propagate(g: &AffinityGraph, prob: &LabelProblem, mu: f64) -> Result<Propagation> {
    prob.check_graph(g)?;
    if mu <= 0.0 || !mu.is_finite() {
        return Err(Error::Config("LGC mu must be positive".into()));
    }
    let mut system = normalized_laplacian(g);
    for i in 0..system.nrows() {
        system[(i, i)] += mu;
    }
    let rhs = &prob.y * mu;
    let (f, residual) = solve_spd(&system, &rhs)?;
    Ok(Propagation::from_scores(f, Vec::new(), residual))
}

/// Percentage of nodes in `eval` whose prediction differs from the truth.
pub fn error_rate(p: &Propagation, prob: &LabelProblem, eval: &[usize]) -> Result<f64> {
    if eval.is_empty() {
        return Err(Error::Data("evaluation set is empty".into()));
    }
    let wrong = eval
        .iter()
        .filter(|&&i| p.predictions[i] != prob.truth[i])
        .count();
    Ok(100.0 * wrong as f64 / eval.len() as f64)
}
