//! Seeded union-of-subspaces generator used by the tests and `synth make`.

use nalgebra::DVector;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Deserialize;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::proximal::Matrix;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubspaceSpec {
    pub ambient_dim: usize,
    pub subspace_dim: usize,
    pub subspaces: usize,
    pub per_class: usize,
    /// Standard deviation of isotropic Gaussian noise added to every entry.
    pub noise: f64,
    /// Fraction of columns replaced by random vectors of the same norm.
    pub corruption: f64,
    pub seed: u64,
}

impl Default for SubspaceSpec {
    fn default() -> Self {
        Self {
            ambient_dim: 20,
            subspace_dim: 2,
            subspaces: 3,
            per_class: 15,
            noise: 0.0,
            corruption: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticSet {
    pub dataset: Dataset,
    /// Indices of grossly corrupted columns, sorted.
    pub corrupted: Vec<usize>,
}

/// Draws `subspaces` random `subspace_dim`-dimensional subspaces of
/// `ℝ^ambient_dim` and `per_class` Gaussian samples from each. Columns are
/// grouped by class: class `c` occupies `c·per_class .. (c+1)·per_class`.
pub fn make_subspaces(spec: &SubspaceSpec) -> Result<SyntheticSet> {
    if spec.subspace_dim == 0 || spec.subspaces == 0 || spec.per_class == 0 {
        return Err(Error::Config("subspace counts must be positive".into()));
    }
    if spec.subspace_dim > spec.ambient_dim {
        return Err(Error::Config("subspace_dim exceeds ambient_dim".into()));
    }
    if !(0.0..=1.0).contains(&spec.corruption) || spec.noise < 0.0 {
        return Err(Error::Config(
            "corruption must lie in [0,1], noise >= 0".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut gauss = || -> f64 { StandardNormal.sample(&mut rng) };
    let d = spec.ambient_dim;
    let n = spec.subspaces * spec.per_class;
    let mut x = Matrix::zeros(d, n);
    let mut labels = Vec::with_capacity(n);
    for class in 0..spec.subspaces {
        let raw = Matrix::from_fn(d, spec.subspace_dim, |_, _| gauss());
        let basis = raw.qr().q();
        for k in 0..spec.per_class {
            let coeffs = DVector::from_fn(spec.subspace_dim, |_, _| gauss());
            x.set_column(class * spec.per_class + k, &(&basis * coeffs));
            labels.push(class);
        }
    }
    if spec.noise > 0.0 {
        for v in x.iter_mut() {
            *v += spec.noise * gauss();
        }
    }

    let n_corrupt = (spec.corruption * n as f64).round() as usize;
    let mut corrupted = sample(&mut rng, n, n_corrupt).into_vec();
    corrupted.sort_unstable();
    for &j in &corrupted {
        let norm = x.column(j).norm();
        let mut gauss = || -> f64 { StandardNormal.sample(&mut rng) };
        let mut v = DVector::from_fn(d, |_, _| gauss());
        v *= norm / v.norm();
        x.set_column(j, &v);
    }

    let dataset = Dataset::new(format!("subspaces-s{}", spec.seed), x, labels)?;
    Ok(SyntheticSet { dataset, corrupted })
}
