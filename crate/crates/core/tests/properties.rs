#![allow(clippy::needless_range_loop)]

mod common;

use common::*;
use proptest::prelude::*;
use tnid_core::degree::{
    degree_contract, degree_product, lift, reset_slice_product_count, slice_product_count,
};
use tnid_core::tensor::{contract, permute_axes, tensor_product};
use tnid_core::{term_count, DegreeTensor, DenseTensor, ModelKind};

fn tensor(shape: Vec<usize>) -> impl Strategy<Value = DenseTensor> {
    let len: usize = shape.iter().product();
    prop::collection::vec(-2.0f64..2.0, len).prop_map(move |d| DenseTensor::from_vec(shape.clone(), d).unwrap())
}

fn close(a: &DenseTensor, b: &DenseTensor, tol: f64) -> bool {
    a.shape() == b.shape() && relative_error(a.data(), b.data()) <= tol
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn contraction_is_associative(
        (a, b, c) in (1usize..5, 1usize..5, 1usize..5, 1usize..5)
            .prop_flat_map(|(p, q, r, s)| (tensor(vec![p, q]), tensor(vec![q, r]), tensor(vec![r, s])))
    ) {
        let left = contract(&contract(&a, &b, &[(1, 0)]).unwrap(), &c, &[(1, 0)]).unwrap();
        let right = contract(&a, &contract(&b, &c, &[(1, 0)]).unwrap(), &[(1, 0)]).unwrap();
        prop_assert!(close(&left, &right, 1e-12));
    }

    #[test]
    fn contraction_is_bilinear(
        (a1, a2, b, alpha) in (1usize..4, 1usize..4, 1usize..4)
            .prop_flat_map(|(p, q, r)| (tensor(vec![p, q, r]), tensor(vec![p, q, r]), tensor(vec![r, q]), -3.0f64..3.0))
    ) {
        let pairs = [(1, 1), (2, 0)];
        let mut combo = a1.clone();
        combo.axpy(alpha, &a2).unwrap();
        let lhs = contract(&combo, &b, &pairs).unwrap();
        let mut rhs = contract(&a1, &b, &pairs).unwrap();
        rhs.axpy(alpha, &contract(&a2, &b, &pairs).unwrap()).unwrap();
        prop_assert!(close(&lhs, &rhs, 1e-12));
    }

    #[test]
    fn product_is_associative(
        (a, b, c) in (1usize..4, 1usize..4, 1usize..4)
            .prop_flat_map(|(p, q, r)| (tensor(vec![p]), tensor(vec![q, 2]), tensor(vec![r])))
    ) {
        let l = tensor_product(&tensor_product(&a, &b).unwrap(), &c).unwrap();
        let r = tensor_product(&a, &tensor_product(&b, &c).unwrap()).unwrap();
        prop_assert!(close(&l, &r, 1e-14));
    }

    #[test]
    fn permutation_round_trips(t in tensor(vec![2, 3, 4]), perm in Just(vec![0usize, 1, 2]).prop_shuffle()) {
        let p = permute_axes(&t, &perm).unwrap();
        let inv = tnid_core::tensor::invert_permutation(&perm);
        prop_assert_eq!(permute_axes(&p, &inv).unwrap(), t);
    }

    #[test]
    fn degree_product_collapses_to_plain_product(
        (a, b) in (1usize..4, 1usize..4, 1usize..3, 1usize..3)
            .prop_flat_map(|(ea, eb, p, q)| (tensor(vec![ea, p, 2]), tensor(vec![eb, q])))
    ) {
        let (da, db) = (DegreeTensor::new(a).unwrap(), DegreeTensor::new(b).unwrap());
        let prod = degree_product(&da, &db, None).unwrap();
        let plain = tensor_product(&da.collapse(), &db.collapse()).unwrap();
        prop_assert!(close(&prod.collapse(), &plain, 1e-12));
    }

    #[test]
    fn degree_product_commutes_up_to_axis_order(
        (a, b) in (1usize..4, 1usize..4, 1usize..4, 1usize..4)
            .prop_flat_map(|(ea, eb, p, q)| (tensor(vec![ea, p]), tensor(vec![eb, q])))
    ) {
        let (da, db) = (DegreeTensor::new(a).unwrap(), DegreeTensor::new(b).unwrap());
        let ab = degree_product(&da, &db, None).unwrap();
        let ba = degree_product(&db, &da, None).unwrap();
        let swapped = permute_axes(ba.inner(), &[0, 2, 1]).unwrap();
        prop_assert!(close(ab.inner(), &swapped, 1e-12));
    }

    #[test]
    fn degree_product_is_associative(
        (a, b, c) in (1usize..4, 1usize..4, 1usize..4)
            .prop_flat_map(|(ea, eb, ec)| (tensor(vec![ea, 2]), tensor(vec![eb, 3]), tensor(vec![ec, 2])))
    ) {
        let (a, b, c) = (DegreeTensor::new(a).unwrap(), DegreeTensor::new(b).unwrap(), DegreeTensor::new(c).unwrap());
        let l = degree_product(&degree_product(&a, &b, None).unwrap(), &c, None).unwrap();
        let r = degree_product(&a, &degree_product(&b, &c, None).unwrap(), None).unwrap();
        prop_assert!(close(l.inner(), r.inner(), 1e-12));
    }

    #[test]
    fn degree_contraction_is_bilinear(
        (a1, a2, b, alpha) in (1usize..4, 1usize..4, 1usize..4)
            .prop_flat_map(|(ea, eb, q)| (tensor(vec![ea, 2, q]), tensor(vec![ea, 2, q]), tensor(vec![eb, q, 3]), -2.0f64..2.0))
    ) {
        let wrap = |t: &DenseTensor| DegreeTensor::new(t.clone()).unwrap();
        let mut combo = a1.clone();
        combo.axpy(alpha, &a2).unwrap();
        let lhs = degree_contract(&wrap(&combo), &wrap(&b), &[(2, 1)], None).unwrap();
        let mut rhs = degree_contract(&wrap(&a1), &wrap(&b), &[(2, 1)], None).unwrap().into_inner();
        rhs.axpy(alpha, degree_contract(&wrap(&a2), &wrap(&b), &[(2, 1)], None).unwrap().inner()).unwrap();
        prop_assert!(close(lhs.inner(), &rhs, 1e-12));
    }

    #[test]
    fn capped_contraction_is_a_prefix(
        (a, b, cap) in (1usize..5, 1usize..5, 1usize..3)
            .prop_flat_map(|(ea, eb, q)| (tensor(vec![ea, q, 2]), tensor(vec![eb, 2, q]), 0usize..8))
    ) {
        let (a, b) = (DegreeTensor::new(a).unwrap(), DegreeTensor::new(b).unwrap());
        let full = degree_contract(&a, &b, &[(1, 2)], None).unwrap();
        let capped = degree_contract(&a, &b, &[(1, 2)], Some(cap)).unwrap();
        prop_assert_eq!(capped, full.truncate(cap));
    }

    #[test]
    fn slice_products_follow_term_count(ea in 1usize..9, eb in 1usize..9) {
        let a = DegreeTensor::new(DenseTensor::zeros(vec![ea, 2]).unwrap()).unwrap();
        let b = DegreeTensor::new(DenseTensor::zeros(vec![eb, 2]).unwrap()).unwrap();
        reset_slice_product_count();
        degree_product(&a, &b, None).unwrap();
        prop_assert_eq!(slice_product_count() as usize, term_count(ea - 1, eb - 1));
    }

    #[test]
    fn lifted_contraction_equals_plain(
        (a, b) in (1usize..4, 1usize..4).prop_flat_map(|(p, q)| (tensor(vec![p, q]), tensor(vec![q, p])))
    ) {
        let d = degree_contract(&lift(&a), &lift(&b), &[(2, 1)], None).unwrap();
        prop_assert_eq!(d.into_inner().into_reshaped(vec![a.shape()[0], b.shape()[1]]).unwrap(), contract(&a, &b, &[(1, 0)]).unwrap());
    }
}

/// Axis layout for a random contraction: free axes of `a`, shared axes,
/// free axes of `b`, each side shuffled independently.
fn contraction_case() -> impl Strategy<Value = (DenseTensor, DenseTensor, Vec<(usize, usize)>)> {
    let dims = || prop::collection::vec(1usize..=3, 0..=2);
    (dims(), prop::collection::vec(1usize..=3, 0..=2), dims())
        .prop_filter("at most six axes", |(fa, c, fb)| fa.len() + 2 * c.len() + fb.len() <= 6)
        .prop_flat_map(|(fa, c, fb)| {
            let na = fa.len() + c.len();
            let nb = c.len() + fb.len();
            let order_a = Just((0..na).collect::<Vec<_>>()).prop_shuffle();
            let order_b = Just((0..nb).collect::<Vec<_>>()).prop_shuffle();
            (Just((fa, c, fb)), order_a, order_b)
        })
        .prop_flat_map(|((fa, c, fb), order_a, order_b)| {
            // Logical axis k of a is fa ++ c; it sits at position pos_a[k].
            let logical_a: Vec<usize> = fa.iter().chain(&c).copied().collect();
            let logical_b: Vec<usize> = c.iter().chain(&fb).copied().collect();
            let shape_a: Vec<usize> = order_a.iter().map(|&k| logical_a[k]).collect();
            let shape_b: Vec<usize> = order_b.iter().map(|&k| logical_b[k]).collect();
            let pos = |order: &[usize], k: usize| order.iter().position(|&o| o == k).unwrap();
            let pairs: Vec<(usize, usize)> =
                (0..c.len()).map(|t| (pos(&order_a, fa.len() + t), pos(&order_b, t))).collect();
            (tensor(shape_a), tensor(shape_b), Just(pairs))
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn contraction_matches_nested_loop_oracle((a, b, pairs) in contraction_case()) {
        let got = contract(&a, &b, &pairs).unwrap();
        let (want, scale) = common::contract_oracle(&a, &b, &pairs);
        prop_assert_eq!(got.len(), want.len());
        for ((g, w), s) in got.data().iter().zip(&want).zip(&scale) {
            prop_assert!((g - w).abs() <= 4.0 * f64::EPSILON * s, "{} vs {}", g, w);
        }
    }

    #[test]
    fn zero_pair_contraction_is_the_product(
        (a, b) in (prop::collection::vec(1usize..4, 0..3), prop::collection::vec(1usize..4, 0..3))
            .prop_flat_map(|(sa, sb)| (tensor(sa), tensor(sb)))
    ) {
        prop_assert_eq!(contract(&a, &b, &[]).unwrap(), tensor_product(&a, &b).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn models_match_oracle_and_decompose_completely(
        tree in any::<bool>(),
        lm in 1u32..4,
        r in 2usize..5,
        n in prop::sample::select(vec![1usize, 3]),
        seed in any::<u64>(),
        x in prop::collection::vec(-0.5f64..0.5, 8),
    ) {
        let m = 1usize << lm;
        let kind = if tree { ModelKind::Ttn } else { ModelKind::Tr };
        let model = random_model(kind, m, r, n, seed);
        let x = &x[..m];
        let f = model.forward(x).unwrap();
        prop_assert!(relative_error(&f, &oracle_forward(&full_weights(&model), x)) < 1e-10);
        let rows = model.interaction_decompose(x, m).unwrap();
        let mut sum = vec![0.0; n];
        for j in 0..=m {
            for k in 0..n {
                sum[k] += rows.data()[j * n + k];
            }
        }
        prop_assert!(relative_error(&sum, &f) < 1e-10);
    }

    #[test]
    fn outputs_are_multilinear_in_each_feature(
        tree in any::<bool>(),
        seed in any::<u64>(),
        x in prop::collection::vec(-0.5f64..0.5, 4),
        i in 0usize..4,
        h in 0.05f64..0.5,
    ) {
        let kind = if tree { ModelKind::Ttn } else { ModelKind::Tr };
        let model = random_model(kind, 4, 3, 2, seed);
        let at = |d: f64| {
            let mut y = x.clone();
            y[i] += d;
            model.forward(&y).unwrap()
        };
        let (p, c, mn) = (at(h), at(0.0), at(-h));
        for k in 0..2 {
            prop_assert!((p[k] - 2.0 * c[k] + mn[k]).abs() < 1e-8);
        }
    }
}
