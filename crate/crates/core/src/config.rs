//! Layered settings: a TOML file, then `--section.key value` overrides.
//!
//! ```toml
//! [experiment]
//! method = "nnlrs"          # nnlrs | nnlrs-ef | pca+nnlrs | knn
//! propagation = "lgc"       # ghf | lgc
//! label_fractions = [0.1, 0.3, 0.5]
//! trials = 50
//! seed = 7
//!
//! [solver]
//! beta = 0.2
//! lambda = 10.0
//!
//! [embedding]
//! reduced_dim = 100
//! inner = { rho = 1.1 }
//!
//! [data]
//! matrix = "faces.csv"
//! labels = "faces_labels.csv"
//! rows_are_samples = true
//! ```
//!
//! Any key can be overridden from the command line, e.g.
//! `--solver.beta 0` or `--embedding.inner.rho=1.2`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::dataset::Dataset;
use crate::embedding::EfConfig;
use crate::error::{Error, Result};
use crate::experiment::{ExperimentSpec, GraphMethod, KnnConfig, PropagationMethod};
use crate::graph::DEFAULT_THETA;
use crate::io::{load_labels, load_matrix, Orientation};
use crate::solver::NnlrsConfig;
use crate::ssl::DEFAULT_LGC_MU;
use crate::synth::{make_subspaces, SubspaceSpec};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSettings {
    pub method: GraphMethod,
    pub propagation: PropagationMethod,
    pub label_fractions: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub subjects_per_trial: Option<usize>,
    pub samples_per_class: Option<usize>,
    pub theta: f64,
    pub lgc_mu: f64,
    pub workers: usize,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        let spec = ExperimentSpec::default();
        Self {
            method: spec.method,
            propagation: spec.propagation,
            label_fractions: spec.label_fractions,
            trials: spec.trials,
            seed: spec.seed,
            subjects_per_trial: None,
            samples_per_class: None,
            theta: DEFAULT_THETA,
            lgc_mu: DEFAULT_LGC_MU,
            workers: 0,
        }
    }
}

/// Where the data comes from. Without `matrix` the synthetic generator
/// described by the `[synth]` section is used.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSettings {
    pub matrix: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub rows_are_samples: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub experiment: ExperimentSettings,
    pub solver: NnlrsConfig,
    pub embedding: EfConfig,
    pub knn: KnnConfig,
    pub synth: SubspaceSpec,
    pub data: DataSettings,
}

impl Settings {
    /// Reads `path` (if any), applies `overrides` in order and validates
    /// key names and value types.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = fs::read_to_string(p)?;
                text.parse::<toml::Table>().map_err(|e| Error::Parse {
                    path: p.to_path_buf(),
                    line: 0,
                    message: e.to_string(),
                })?
            }
            None => toml::Table::new(),
        };
        for (key, raw) in overrides {
            apply_override(&mut table, key, raw)?;
        }
        let mut settings: Settings = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string().trim().to_string()))?;
        settings.embedding.nnlrs = settings.solver.clone();
        Ok(settings)
    }

    pub fn experiment_spec(&self) -> ExperimentSpec {
        let e = &self.experiment;
        ExperimentSpec {
            method: e.method,
            propagation: e.propagation,
            label_fractions: e.label_fractions.clone(),
            trials: e.trials,
            seed: e.seed,
            subjects_per_trial: e.subjects_per_trial,
            samples_per_class: e.samples_per_class,
            theta: e.theta,
            lgc_mu: e.lgc_mu,
            solver: self.solver.clone(),
            embedding: self.embedding.clone(),
            knn: self.knn.clone(),
            workers: e.workers,
        }
    }

    /// The configured data files, or the synthetic set when none is given.
    pub fn dataset(&self) -> Result<Dataset> {
        let Some(matrix) = &self.data.matrix else {
            return Ok(make_subspaces(&self.synth)?.dataset);
        };
        let orientation = if self.data.rows_are_samples {
            Orientation::RowsAreSamples
        } else {
            Orientation::RowsAreFeatures
        };
        let x = load_matrix(matrix, orientation)?;
        let labels = match &self.data.labels {
            Some(p) => load_labels(p)?,
            None => {
                return Err(Error::Config(
                    "data.labels is required with data.matrix".into(),
                ))
            }
        };
        let name = matrix
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "data".into());
        Dataset::new(name, x, labels)
    }
}

/// Sets `a.b.c = raw` in `table`. `raw` is read as a TOML value when it
/// parses as one (number, boolean, array) and as a plain string otherwise.
pub fn apply_override(table: &mut toml::Table, key: &str, raw: &str) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("malformed setting name {key:?}")));
    }
    let value = raw
        .parse::<toml::Value>()
        .unwrap_or_else(|_| toml::Value::String(raw.to_string()));
    let (last, path) = parts.split_last().expect("split yields at least one part");
    let mut current = table;
    for part in path {
        let entry = current
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        current = match entry {
            toml::Value::Table(t) => t,
            _ => return Err(Error::Config(format!("{key:?}: {part:?} is not a section"))),
        };
    }
    current.insert(last.to_string(), value);
    Ok(())
}

/// Pulls `--a.b value` and `--a.b=value` pairs (any flag containing a dot)
/// out of `args`, returning the remaining arguments and the overrides.
pub fn split_overrides(args: Vec<String>) -> Result<(Vec<String>, Vec<(String, String)>)> {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    let mut iter = args.into_iter();
    while let Some(arg) = iter.next() {
        let Some(flag) = arg
            .strip_prefix("--")
            .filter(|f| f.split('=').next().is_some_and(|k| k.contains('.')))
        else {
            rest.push(arg);
            continue;
        };
        match flag.split_once('=') {
            Some((k, v)) => overrides.push((k.to_string(), v.to_string())),
            None => {
                let value = iter
                    .next()
                    .ok_or_else(|| Error::Config(format!("--{flag} needs a value")))?;
                overrides.push((flag.to_string(), value));
            }
        }
    }
    Ok((rest, overrides))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn flags_override_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(
            &path,
            "[solver]\nbeta = 0.5\n[experiment]\nmethod = \"knn\"\n",
        )
        .unwrap();
        let s = Settings::load(Some(&path), &[]).unwrap();
        assert_eq!(s.solver.beta, 0.5);
        assert_eq!(s.experiment.method, GraphMethod::Knn);

        let o = vec![
            ("solver.beta".to_string(), "0".to_string()),
            ("embedding.inner.rho".to_string(), "1.2".to_string()),
            ("experiment.method".to_string(), "pca+nnlrs".to_string()),
        ];
        let s = Settings::load(Some(&path), &o).unwrap();
        assert_eq!(s.solver.beta, 0.0);
        assert_eq!(s.embedding.inner.rho, 1.2);
        assert_eq!(s.embedding.nnlrs, s.solver);
        assert_eq!(s.experiment.method, GraphMethod::PcaNnlrs);
    }

    #[test]
    fn unknown_keys_and_bad_types_are_rejected() {
        let bad =
            |k: &str, v: &str| Settings::load(None, &[(k.to_string(), v.to_string())]).is_err();
        assert!(bad("solver.bta", "1"));
        assert!(bad("solver.beta", "high"));
        assert!(bad("experiment.method", "lrr"));
        assert!(bad("solver.beta.x", "1"));
    }

    #[test]
    fn splitting_arguments() {
        let (rest, o) = split_overrides(args(&[
            "nnlrs",
            "ssl",
            "run",
            "--solver.beta",
            "0.1",
            "--out",
            "d",
            "--knn.k=8",
        ]))
        .unwrap();
        assert_eq!(rest, args(&["nnlrs", "ssl", "run", "--out", "d"]));
        assert_eq!(
            o,
            vec![
                ("solver.beta".into(), "0.1".into()),
                ("knn.k".into(), "8".into())
            ]
        );
        assert!(split_overrides(args(&["--solver.beta"])).is_err());
    }
}
