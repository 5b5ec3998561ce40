mod common;

use common::*;
use tnid_core::data::Dataset;
use tnid_core::model::{Eval, InitScheme, Pass};
use tnid_core::{analysis, DegreeSet, Execution, ModelKind, TensorNetwork};

#[test]
fn forward_matches_full_weight_oracle() {
    let mut rng = rng(1);
    for kind in [ModelKind::Tr, ModelKind::Ttn] {
        for m in [2, 4, 8] {
            for (r, n) in [(2, 1), (3, 3), (4, 2)] {
                let model = random_model(kind, m, r, n, (m * 10 + r) as u64);
                let w = full_weights(&model);
                for _ in 0..3 {
                    let x = random_input(m, &mut rng);
                    let err = relative_error(&model.forward(&x).unwrap(), &oracle_forward(&w, &x));
                    assert!(err < 1e-10, "{kind} m={m} r={r} n={n}: {err:e}");
                }
            }
        }
    }
}

#[test]
fn degree_rows_match_hamming_weight_oracle() {
    let mut rng = rng(2);
    for kind in [ModelKind::Tr, ModelKind::Ttn] {
        for m in [4, 8] {
            let model = random_model(kind, m, 3, 3, m as u64);
            let w = full_weights(&model);
            for _ in 0..4 {
                let x = random_input(m, &mut rng);
                let rows = model.interaction_decompose(&x, m).unwrap();
                let want = oracle_degrees(&w, &x);
                let scale: Vec<f64> = want.iter().flatten().copied().collect();
                let got: Vec<f64> = rows.data().to_vec();
                assert!(relative_error(&got, &scale) < 1e-10, "{kind} m={m}");
                for (j, row) in want.iter().enumerate() {
                    let g = &got[j * 3..(j + 1) * 3];
                    let tol = 1e-10 * scale.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                    for (a, b) in g.iter().zip(row) {
                        assert!((a - b).abs() <= tol, "{kind} m={m} degree {j}: {a} vs {b}");
                    }
                }
            }
        }
    }
}

#[test]
fn truncated_decomposition_is_a_prefix() {
    let mut rng = rng(3);
    for kind in [ModelKind::Tr, ModelKind::Ttn] {
        let model = random_model(kind, 8, 3, 2, 5);
        let x = random_input(8, &mut rng);
        let full = model.interaction_decompose(&x, 8).unwrap();
        for cap in 0..=8 {
            let t = model.interaction_decompose(&x, cap).unwrap();
            assert_eq!(t.shape(), &[cap + 1, 2]);
            assert_eq!(t.data(), &full.data()[..(cap + 1) * 2], "{kind} cap {cap}");
        }
    }
}

#[test]
fn d_degree_forward_matches_oracle_subsets() {
    let mut rng = rng(4);
    for kind in [ModelKind::Tr, ModelKind::Ttn] {
        let model = random_model(kind, 4, 2, 3, 9);
        let w = full_weights(&model);
        let x = random_input(4, &mut rng);
        let rows = oracle_degrees(&w, &x);
        for spec in ["full", "cum:2", "deg:1", "deg:4", "0,3"] {
            let d = DegreeSet::parse(spec, 4).unwrap();
            let mut want = vec![0.0; 3];
            for &j in d.degrees() {
                for k in 0..3 {
                    want[k] += rows[j][k];
                }
            }
            let got = model.d_degree_forward(&x, &d).unwrap();
            assert!(relative_error(&got, &want) < 1e-10, "{kind} {spec}");
        }
    }
}

#[test]
fn magnitudes_match_oracle_decomposition() {
    let mut rng = rng(5);
    let model = random_model(ModelKind::Tr, 4, 2, 3, 11);
    let w = full_weights(&model);
    let count = 40;
    let mut feats = Vec::new();
    for _ in 0..count {
        feats.extend(random_input(4, &mut rng));
    }
    let labels = (0..count).map(|i| (i % 3) as u8).collect();
    let ds = Dataset::in_memory(feats, labels, 4, 3).unwrap();
    let mags = analysis::degree_magnitudes(&model, &ds, 4, Execution::Parallel).unwrap();
    let mut want = [0.0; 5];
    for i in 0..count {
        for (j, row) in oracle_degrees(&w, ds.sample(i)).iter().enumerate() {
            want[j] += row.iter().map(|v| v.abs()).sum::<f64>() / count as f64;
        }
    }
    assert!(relative_error(&mags, &want) < 1e-10);
}

#[test]
fn degree_zero_row_is_input_independent() {
    let mut rng = rng(6);
    for kind in [ModelKind::Tr, ModelKind::Ttn] {
        let model = random_model(kind, 8, 3, 3, 1);
        let base = model.interaction_decompose(&random_input(8, &mut rng), 0).unwrap();
        for _ in 0..10 {
            let other = model.interaction_decompose(&random_input(8, &mut rng), 0).unwrap();
            assert_eq!(base, other);
        }
    }
}

#[test]
fn default_init_is_stable_at_full_scale() {
    let mut rng = rng(7);
    for kind in [ModelKind::Tr, ModelKind::Ttn] {
        let model = TensorNetwork::init(kind, 64, 20, 10, 0, InitScheme::default()).unwrap();
        for _ in 0..3 {
            let x = random_input(64, &mut rng);
            let f = model.forward(&x).unwrap();
            assert!(f.iter().all(|v| v.is_finite() && v.abs() < 10.0), "{kind}: {f:?}");
        }
    }
}

#[test]
fn tree_intermediates_are_first_order() {
    let model = random_model(ModelKind::Ttn, 16, 3, 4, 0);
    let mut eval = Eval::recording(model.parameters());
    model.schedule(&mut eval, &[0.1; 16], Pass::Standard).unwrap();
    let shapes = eval.observed_shapes();
    assert_eq!(shapes.len(), 8 + 4 + 2 + 1);
    assert!(shapes.iter().all(|s| s.len() == 1));
    assert_eq!(shapes.last().unwrap(), &vec![4]);
}
