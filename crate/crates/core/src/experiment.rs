//! Random-trial experiments: subsample a labeled dataset, build a graph,
//! propagate labels for several label fractions and tabulate error rates.
//!
//! All randomness comes from ChaCha8 generators keyed by the experiment
//! seed, the trial index and (for label splits) the label fraction, so a
//! trial's result does not depend on which worker ran it or in what order.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Deserialize;

use crate::dataset::Dataset;
use crate::embedding::{pca_embed, solve_ef, EfConfig};
use crate::error::{Error, Result};
use crate::graph::{
    build_nnlrs_graph, graph_from_coefficients, knn_gaussian_graph, normalize_samples,
    AffinityGraph, DEFAULT_THETA,
};
use crate::proximal::Matrix;
use crate::solver::NnlrsConfig;
use crate::ssl::{error_rate, ghf_propagate, lgc_propagate, LabelProblem, DEFAULT_LGC_MU};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub enum GraphMethod {
    #[serde(rename = "nnlrs")]
    Nnlrs,
    #[serde(rename = "nnlrs-ef")]
    NnlrsEf,
    #[serde(rename = "pca+nnlrs")]
    PcaNnlrs,
    #[serde(rename = "knn")]
    Knn,
}

impl GraphMethod {
    pub const ALL: [GraphMethod; 4] = [Self::Nnlrs, Self::NnlrsEf, Self::PcaNnlrs, Self::Knn];

    pub fn name(self) -> &'static str {
        match self {
            Self::Nnlrs => "nnlrs",
            Self::NnlrsEf => "nnlrs-ef",
            Self::PcaNnlrs => "pca+nnlrs",
            Self::Knn => "knn",
        }
    }

    fn uses_solver(self) -> bool {
        self != Self::Knn
    }
}

impl fmt::Display for GraphMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GraphMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown graph method {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PropagationMethod {
    Ghf,
    Lgc,
}

impl PropagationMethod {
    pub fn name(self) -> &'static str {
        match self {
            Self::Ghf => "ghf",
            Self::Lgc => "lgc",
        }
    }
}

impl fmt::Display for PropagationMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PropagationMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ghf" => Ok(Self::Ghf),
            "lgc" => Ok(Self::Lgc),
            _ => Err(Error::Config(format!("unknown propagation method {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KnnConfig {
    pub k: usize,
    pub sigma: f64,
}

impl Default for KnnConfig {
    fn default() -> Self {
        Self { k: 5, sigma: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub method: GraphMethod,
    pub propagation: PropagationMethod,
    pub label_fractions: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    /// Classes drawn per trial; `None` keeps every class.
    pub subjects_per_trial: Option<usize>,
    /// Samples drawn per class and trial; `None` keeps every sample.
    pub samples_per_class: Option<usize>,
    pub theta: f64,
    pub lgc_mu: f64,
    pub solver: NnlrsConfig,
    /// Its `nnlrs` field is ignored; `solver` is used instead.
    pub embedding: EfConfig,
    pub knn: KnnConfig,
    /// Worker threads for trials; 0 lets the thread pool decide.
    pub workers: usize,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            method: GraphMethod::Nnlrs,
            propagation: PropagationMethod::Lgc,
            label_fractions: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
            trials: 50,
            seed: 0,
            subjects_per_trial: None,
            samples_per_class: None,
            theta: DEFAULT_THETA,
            lgc_mu: DEFAULT_LGC_MU,
            solver: NnlrsConfig::default(),
            embedding: EfConfig::default(),
            knn: KnnConfig::default(),
            workers: 0,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be >= 1".into()));
        }
        if self.label_fractions.is_empty() {
            return Err(Error::Config(
                "at least one label fraction is required".into(),
            ));
        }
        if let Some(f) = self
            .label_fractions
            .iter()
            .find(|f| !(**f > 0.0 && **f <= 1.0))
        {
            return Err(Error::Config(format!("label fraction {f} outside (0, 1]")));
        }
        if !(self.theta >= 0.0) || !(self.lgc_mu > 0.0) {
            return Err(Error::Config("theta must be >= 0 and lgc_mu > 0".into()));
        }
        if self.subjects_per_trial == Some(0) || self.samples_per_class == Some(0) {
            return Err(Error::Config(
                "per-trial subsample sizes must be positive".into(),
            ));
        }
        self.solver.validate()
    }

    /// Embedding settings combined with the shared solver settings.
    pub fn ef_config(&self) -> EfConfig {
        EfConfig {
            nnlrs: self.solver.clone(),
            ..self.embedding.clone()
        }
    }
}

const SUBSAMPLE_STREAM: u64 = 1;
const LABEL_STREAM: u64 = 2;

fn derived_rng(seed: u64, stream: u64, trial: u64, extra: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    for (chunk, word) in key.chunks_exact_mut(8).zip([seed, stream, trial, extra]) {
        chunk.copy_from_slice(&word.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// The samples of one trial, grouped by class in increasing class order.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialData {
    /// Column indices into the source dataset.
    pub indices: Vec<usize>,
    pub x: Matrix,
    /// Labels renumbered to `0..classes`.
    pub truth: Vec<usize>,
    pub classes: usize,
}

impl TrialData {
    fn class_members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.classes];
        for (i, &c) in self.truth.iter().enumerate() {
            members[c].push(i);
        }
        members
    }
}

/// Draws trial `trial`'s classes and samples.
pub fn sample_trial(ds: &Dataset, spec: &ExperimentSpec, trial: usize) -> Result<TrialData> {
    let mut rng = derived_rng(spec.seed, SUBSAMPLE_STREAM, trial as u64, 0);
    let members: Vec<Vec<usize>> = ds
        .class_members()
        .into_iter()
        .filter(|m| !m.is_empty())
        .collect();
    let mut classes: Vec<usize> = (0..members.len()).collect();
    if let Some(s) = spec.subjects_per_trial {
        if s > members.len() {
            return Err(Error::Data(format!(
                "{s} subjects requested but the dataset has {}",
                members.len()
            )));
        }
        classes = sample(&mut rng, members.len(), s).into_vec();
        classes.sort_unstable();
    }
    let mut indices = Vec::new();
    let mut truth = Vec::new();
    for (new_label, &c) in classes.iter().enumerate() {
        let pool = &members[c];
        let mut chosen = match spec.samples_per_class {
            Some(m) if m > pool.len() => {
                return Err(Error::Data(format!(
                    "class {} has {} samples, {m} requested",
                    ds.labels[pool[0]],
                    pool.len()
                )))
            }
            Some(m) => sample(&mut rng, pool.len(), m)
                .into_iter()
                .map(|i| pool[i])
                .collect(),
            None => pool.clone(),
        };
        chosen.sort_unstable();
        truth.extend(std::iter::repeat_n(new_label, chosen.len()));
        indices.extend(chosen);
    }
    let x = ds.x.select_columns(&indices);
    Ok(TrialData {
        indices,
        x,
        truth,
        classes: classes.len(),
    })
}

/// Number of labeled samples in a class of `count`: `⌈fraction·count⌉`,
/// at least one.
pub fn labeled_count(fraction: f64, count: usize) -> usize {
    // The small offset keeps products like 0.1·50 from rounding up to 6.
    let raw = (fraction * count as f64 - 1e-9).ceil().max(1.0) as usize;
    raw.min(count)
}

/// Labeled node indices (into the trial) for one fraction, chosen per class.
pub fn label_split(data: &TrialData, seed: u64, trial: usize, fraction: f64) -> Vec<usize> {
    let mut rng = derived_rng(seed, LABEL_STREAM, trial as u64, fraction.to_bits());
    let mut labeled = Vec::new();
    for members in data.class_members() {
        let count = labeled_count(fraction, members.len());
        labeled.extend(
            sample(&mut rng, members.len(), count)
                .into_iter()
                .map(|i| members[i]),
        );
    }
    labeled.sort_unstable();
    labeled
}

/// Graph over the trial's samples (normalized to unit columns first). Its
/// `converged` flag is false if any solve behind it hit its iteration cap.
pub fn build_graph(x: &Matrix, spec: &ExperimentSpec) -> Result<AffinityGraph> {
    let xn = normalize_samples(x).x;
    match spec.method {
        GraphMethod::Nnlrs => Ok(build_nnlrs_graph(&xn, &spec.solver, spec.theta)?.graph),
        GraphMethod::PcaNnlrs => {
            let (_, px) = pca_embed(&xn, spec.embedding.reduced_dim)?;
            Ok(build_nnlrs_graph(&px, &spec.solver, spec.theta)?.graph)
        }
        GraphMethod::NnlrsEf => {
            let ef = solve_ef(&xn, &spec.ef_config())?;
            let converged = ef.converged && ef.nnlrs_nonconverged == 0;
            graph_from_coefficients(&ef.z_star, spec.theta, converged)
        }
        GraphMethod::Knn => knn_gaussian_graph(&xn, spec.knn.k, spec.knn.sigma),
    }
}

/// Outcome of one (trial, fraction) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub trial: usize,
    pub fraction: f64,
    /// Error percentage on the unlabeled nodes, or the failure message.
    pub outcome: std::result::Result<f64, String>,
    pub converged: bool,
}

fn run_trial(ds: &Dataset, spec: &ExperimentSpec, trial: usize) -> Vec<TrialResult> {
    let fail = |msg: String| {
        spec.label_fractions
            .iter()
            .map(|&fraction| TrialResult {
                trial,
                fraction,
                outcome: Err(msg.clone()),
                converged: false,
            })
            .collect()
    };
    let data = match sample_trial(ds, spec, trial) {
        Ok(d) => d,
        Err(e) => return fail(e.to_string()),
    };
    let graph = match build_graph(&data.x, spec) {
        Ok(g) => g,
        Err(e) => return fail(e.to_string()),
    };
    spec.label_fractions
        .iter()
        .map(|&fraction| {
            let labeled = label_split(&data, spec.seed, trial, fraction);
            let outcome = propagate_error(&graph, &data, labeled, spec).map_err(|e| e.to_string());
            TrialResult {
                trial,
                fraction,
                outcome,
                converged: graph.converged,
            }
        })
        .collect()
}

fn propagate_error(
    graph: &AffinityGraph,
    data: &TrialData,
    labeled: Vec<usize>,
    spec: &ExperimentSpec,
) -> Result<f64> {
    let prob = LabelProblem::new(data.truth.clone(), labeled, data.classes)?;
    let prop = match spec.propagation {
        PropagationMethod::Ghf => ghf_propagate(graph, &prob)?,
        PropagationMethod::Lgc => lgc_propagate(graph, &prob, spec.lgc_mu)?,
    };
    error_rate(&prop, &prob, &prob.unlabeled())
}

/// Aggregate over the trials of one label fraction. Errors are percentages.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub method: GraphMethod,
    pub propagation: PropagationMethod,
    /// Sparsity weight of the solve, absent for kNN graphs.
    pub beta: Option<f64>,
    pub fraction: f64,
    pub trials: usize,
    pub completed: usize,
    pub mean_error: f64,
    /// Sample standard deviation over completed trials (0 for one trial).
    pub std_error: f64,
    pub nonconverged: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub seed: u64,
    pub dataset: String,
    pub rows: Vec<ResultRow>,
    /// Every (trial, fraction) outcome, sorted by fraction then trial.
    pub trials: Vec<TrialResult>,
}

impl ResultTable {
    pub fn failure_count(&self) -> usize {
        self.rows.iter().map(|r| r.failures).sum()
    }

    pub fn run_count(&self) -> usize {
        self.rows.iter().map(|r| r.trials).sum()
    }

    /// More than 10% of (trial, fraction) runs failed.
    pub fn excessive_failures(&self) -> bool {
        self.failure_count() * 10 > self.run_count()
    }

    fn header(&self) -> String {
        format!(
            "nnlrs results v1 dataset={} seed={} rng=chacha8",
            self.dataset, self.seed
        )
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("# {}\n", self.header());
        out.push_str(
            "method,propagation,beta,fraction,trials,completed,mean_error_pct,std_error_pct,nonconverged,failures\n",
        );
        for r in &self.rows {
            let beta = r.beta.map(|b| b.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.method,
                r.propagation,
                beta,
                r.fraction,
                r.trials,
                r.completed,
                r.mean_error,
                r.std_error,
                r.nonconverged,
                r.failures
            );
        }
        out
    }

    /// Human-readable table with aligned columns.
    pub fn to_text(&self) -> String {
        let head = [
            "method", "prop", "beta", "labels", "trials", "error %", "std", "nonconv", "failed",
        ];
        let mut cells: Vec<Vec<String>> = vec![head.iter().map(|s| s.to_string()).collect()];
        for r in &self.rows {
            cells.push(vec![
                r.method.to_string(),
                r.propagation.to_string(),
                r.beta.map(|b| b.to_string()).unwrap_or_else(|| "-".into()),
                format!("{:.0}%", r.fraction * 100.0),
                r.trials.to_string(),
                format!("{:.2}", r.mean_error),
                format!("{:.2}", r.std_error),
                r.nonconverged.to_string(),
                r.failures.to_string(),
            ]);
        }
        let widths: Vec<usize> = (0..head.len())
            .map(|c| {
                cells
                    .iter()
                    .map(|row| row[c].chars().count())
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = format!("# {}\n", self.header());
        for row in &cells {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(c, (cell, &w))| {
                    if c < 3 {
                        format!("{cell:<w$}")
                    } else {
                        format!("{cell:>w$}")
                    }
                })
                .collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
        }
        out
    }
}

fn aggregate(spec: &ExperimentSpec, trials: &[TrialResult]) -> Vec<ResultRow> {
    spec.label_fractions
        .iter()
        .map(|&fraction| {
            let runs: Vec<&TrialResult> =
                trials.iter().filter(|t| t.fraction == fraction).collect();
            let errors: Vec<f64> = runs
                .iter()
                .filter_map(|t| t.outcome.as_ref().ok().copied())
                .collect();
            let n = errors.len();
            let mean = if n == 0 {
                f64::NAN
            } else {
                errors.iter().sum::<f64>() / n as f64
            };
            let std = if n < 2 {
                0.0
            } else {
                (errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            };
            ResultRow {
                method: spec.method,
                propagation: spec.propagation,
                beta: spec.method.uses_solver().then_some(spec.solver.beta),
                fraction,
                trials: runs.len(),
                completed: n,
                mean_error: mean,
                std_error: std,
                nonconverged: runs
                    .iter()
                    .filter(|t| t.outcome.is_ok() && !t.converged)
                    .count(),
                failures: runs.len() - n,
            }
        })
        .collect()
}

fn in_pool<T: Send>(workers: usize, job: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == 0 {
        return Ok(job());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(job))
}

/// Runs every trial (in parallel) and aggregates per label fraction.
/// Failed trials are recorded, not propagated.
pub fn run_experiment(ds: &Dataset, spec: &ExperimentSpec) -> Result<ResultTable> {
    spec.validate()?;
    let mut trials: Vec<TrialResult> = in_pool(spec.workers, || {
        (0..spec.trials)
            .into_par_iter()
            .flat_map_iter(|t| run_trial(ds, spec, t))
            .collect()
    })?;
    trials.sort_by(|a, b| {
        a.fraction
            .total_cmp(&b.fraction)
            .then(a.trial.cmp(&b.trial))
    });
    for t in &trials {
        if let Err(msg) = &t.outcome {
            log::warn!("trial {} at fraction {} failed: {msg}", t.trial, t.fraction);
        }
    }
    Ok(ResultTable {
        seed: spec.seed,
        dataset: ds.name.clone(),
        rows: aggregate(spec, &trials),
        trials,
    })
}

/// One `run_experiment` per β, rows concatenated in the given order.
pub fn beta_sweep(ds: &Dataset, spec: &ExperimentSpec, betas: &[f64]) -> Result<ResultTable> {
    if betas.is_empty() {
        return Err(Error::Config("beta sweep needs at least one value".into()));
    }
    let mut rows = Vec::new();
    let mut trials = Vec::new();
    for &beta in betas {
        let mut s = spec.clone();
        s.solver.beta = beta;
        let table = run_experiment(ds, &s)?;
        rows.extend(table.rows);
        trials.extend(table.trials);
    }
    Ok(ResultTable {
        seed: spec.seed,
        dataset: ds.name.clone(),
        rows,
        trials,
    })
}
