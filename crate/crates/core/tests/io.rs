mod common;

use common::random_matrix;
use nnlrs::graph::{postprocess_coefficients, symmetrize};
use nnlrs::io::{
    load_graph, load_labels, load_matrix, load_projection, matrix_header, save_graph, save_matrix,
    save_projection, Orientation,
};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn files_round_trip_bit_for_bit(seed in any::<u64>(), rows in 1usize..7, cols in 1usize..7) {
        let dir = tempfile::tempdir().unwrap();
        let m = random_matrix(rows, cols, seed) * 1e3;

        let path = dir.path().join("m.csv");
        save_matrix(&path, &m, &[matrix_header(rows, cols), "note".into()]).unwrap();
        prop_assert_eq!(&load_matrix(&path, Orientation::RowsAreFeatures).unwrap(), &m);
        prop_assert_eq!(load_matrix(&path, Orientation::RowsAreSamples).unwrap(), m.transpose());

        let path = dir.path().join("p.txt");
        save_projection(&path, &m, &["seed=1".into()]).unwrap();
        prop_assert_eq!(&load_projection(&path).unwrap(), &m);

        let h = random_matrix(cols, cols, seed).abs();
        let g = symmetrize(&postprocess_coefficients(&h, 0.1)).unwrap();
        let path = dir.path().join("g.txt");
        save_graph(&path, &g, &["method=test".into()]).unwrap();
        prop_assert_eq!(load_graph(&path).unwrap().w, g.w);
    }
}

#[test]
fn labels_and_headers() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("labels.csv");
    std::fs::write(&path, "# classes\n2\n0\n\n1\n").unwrap();
    assert_eq!(load_labels(&path).unwrap(), vec![2, 0, 1]);

    let bad = dir.path().join("bad.txt");
    std::fs::write(&bad, "# lrs-graph v1 n=3\n0,1\n1,0\n").unwrap();
    assert!(load_graph(&bad).is_err());
}
