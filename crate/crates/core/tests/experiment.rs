mod common;

use common::largest_columns;
use nnlrs::experiment::{
    beta_sweep, run_experiment, ExperimentSpec, GraphMethod, PropagationMethod,
};
use nnlrs::graph::build_nnlrs_graph;
use nnlrs::solver::NnlrsConfig;
use nnlrs::synth::{make_subspaces, SubspaceSpec};

fn spec(method: GraphMethod, fractions: Vec<f64>, trials: usize) -> ExperimentSpec {
    ExperimentSpec {
        method,
        propagation: PropagationMethod::Lgc,
        label_fractions: fractions,
        trials,
        seed: 11,
        ..Default::default()
    }
}

#[test]
fn knn_lgc_on_separated_subspaces() {
    // Thirty samples per circle keep every sample's nearest neighbors in
    // its own subspace.
    let ds = make_subspaces(&SubspaceSpec {
        per_class: 30,
        ..Default::default()
    })
    .unwrap()
    .dataset;
    let table = run_experiment(&ds, &spec(GraphMethod::Knn, vec![0.5], 10)).unwrap();
    let row = &table.rows[0];
    assert_eq!(row.completed, 10);
    assert!(row.mean_error < 5.0, "mean error {}%", row.mean_error);
}

#[test]
fn single_beta_sweep_equals_plain_run() {
    let ds = make_subspaces(&SubspaceSpec {
        per_class: 8,
        ..Default::default()
    })
    .unwrap()
    .dataset;
    let mut s = spec(GraphMethod::Nnlrs, vec![0.25], 2);
    s.solver.beta = 0.2;
    let plain = run_experiment(&ds, &s).unwrap();
    let swept = beta_sweep(&ds, &s, &[0.2]).unwrap();
    assert_eq!(plain.to_csv(), swept.to_csv());
    assert_eq!(plain.to_text(), swept.to_text());
}

#[test]
fn pure_low_rank_is_admitted() {
    let ds = make_subspaces(&SubspaceSpec {
        per_class: 8,
        ..Default::default()
    })
    .unwrap()
    .dataset;
    let table = beta_sweep(&ds, &spec(GraphMethod::Nnlrs, vec![0.5], 2), &[0.0, 100.0]).unwrap();
    assert_eq!(table.rows.len(), 2);
    assert_eq!(table.rows[0].beta, Some(0.0));
    assert_eq!(table.rows[1].beta, Some(100.0));
    assert_eq!(table.failure_count(), 0);
}

#[test]
fn result_tables_are_reproducible() {
    let ds = make_subspaces(&SubspaceSpec::default()).unwrap().dataset;
    for method in [GraphMethod::Knn, GraphMethod::Nnlrs] {
        let s = spec(method, vec![0.1, 0.3], 1);
        let a = run_experiment(&ds, &s).unwrap();
        let b = run_experiment(&ds, &ExperimentSpec { workers: 1, ..s }).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert!(a.to_csv().contains("mean_error_pct"));
    }
}

#[test]
fn corrupted_columns_stand_out_in_the_error_term() {
    let cfg = NnlrsConfig {
        lambda: 1.0,
        ..Default::default()
    };
    for seed in 0..3 {
        let set = make_subspaces(&SubspaceSpec {
            seed,
            corruption: 0.05,
            ..Default::default()
        })
        .unwrap();
        let n = set.dataset.len();
        let g = build_nnlrs_graph(&set.dataset.x, &cfg, 1e-4).unwrap();
        let top = largest_columns(&g.solution.e_star, (0.05 * n as f64).ceil() as usize);
        let found = set.corrupted.iter().filter(|j| top.contains(j)).count();
        assert!(
            found as f64 >= 0.8 * set.corrupted.len() as f64,
            "seed {seed}: found {found} of {:?} in {top:?}",
            set.corrupted
        );
    }
}
