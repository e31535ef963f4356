use std::path::Path;

use dyncausal::basis::build_knots;
use dyncausal::dag::{break_cycles, Adjacency};
use dyncausal::effect::{dynamic_effect, effect_coefficient, mediated_series};
use dyncausal::io::{panel_to_csv, parse_panel_csv};
use dyncausal::metrics::{confusion, evaluate, shd};
use dyncausal::model::{partition_weights, CoefficientSet, GraphSequence, PanelTensor};
use dyncausal::solver::{enforce_treatment_mask, h2, h2_star, h_value};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn matrix(p: usize, max: f64) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-max..max, p * p).prop_map(move |v| DMatrix::from_row_slice(p, p, &v))
}

/// Weighted DAG with the treatment/outcome structural zeros: edges only go
/// forward in a random order that keeps 0 first and `p - 1` last.
fn structural_dag(p: usize) -> impl Strategy<Value = DMatrix<f64>> {
    (
        matrix(p, 1.5),
        Just((1..p - 1).collect::<Vec<usize>>()).prop_shuffle(),
        prop::collection::vec(any::<bool>(), p * p),
    )
        .prop_map(move |(w, mid, keep)| {
            let mut order = vec![0];
            order.extend(mid);
            order.push(p - 1);
            let mut b = DMatrix::zeros(p, p);
            for i in 0..p {
                for j in i + 1..p {
                    if keep[i * p + j] {
                        b[(order[i], order[j])] = w[(i, j)];
                    }
                }
            }
            b
        })
}

fn adjacency(p: usize) -> impl Strategy<Value = Adjacency> {
    prop::collection::vec(any::<bool>(), p * p).prop_map(move |bits| {
        let edges: Vec<_> = (0..p * p)
            .filter(|&i| bits[i] && i / p != i % p)
            .map(|i| (i / p, i % p))
            .collect();
        Adjacency::from_edges(p, &edges)
    })
}

proptest! {
    #[test]
    fn spline_values_are_local_nonnegative_and_sum_to_one(
        order in 0usize..=3,
        n_int in 0usize..6,
        lo in -5.0f64..5.0,
        width in 0.5f64..30.0,
        u in 0.0f64..=1.0,
    ) {
        let hi = lo + width;
        let basis = build_knots(lo, hi, n_int, order).unwrap();
        let t = lo + u * width;
        let vals = basis.eval(t).unwrap();
        prop_assert_eq!(vals.len(), n_int + order + 1);
        prop_assert!((vals.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        let k = basis.knots();
        for (i, &v) in vals.iter().enumerate() {
            prop_assert!(v >= 0.0);
            if t < k[i] || t > k[i + order + 1] {
                prop_assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn acyclicity_measure_is_nonnegative(b in matrix(4, 2.0), alpha in 0.01f64..1.0) {
        prop_assert!(h_value(&b, alpha) >= -1e-12);
    }

    #[test]
    fn dag_supports_have_zero_measure(b in structural_dag(5)) {
        prop_assert_eq!(h_value(&b, 0.2), 0.0);
    }

    #[test]
    fn mask_is_idempotent_and_clears_h2(g in prop::collection::vec(-1.0f64..1.0, 4 * 3 * 4), t in prop::collection::vec(-1.0f64..1.0, 4 * 3 * 4)) {
        let basis = build_knots(1.0, 10.0, 1, 1).unwrap();
        let coef = CoefficientSet::new(
            DMatrix::from_row_slice(12, 4, &g),
            Some(DMatrix::from_row_slice(12, 4, &t)),
            basis,
            1,
        )
        .unwrap();
        let once = enforce_treatment_mask(&coef);
        prop_assert_eq!(&enforce_treatment_mask(&once), &once);
        prop_assert_eq!(h2(&once), 0.0);
        prop_assert_eq!(h2_star(&once), 0.0);
    }

    #[test]
    fn effect_is_linear_in_treatment(b in structural_dag(5), a in -3.0f64..3.0) {
        let e1 = dynamic_effect(&b, a).unwrap();
        let e2 = dynamic_effect(&b, 2.0 * a).unwrap();
        prop_assert!((e2 - 2.0 * e1).abs() <= 1e-12 * e1.abs().max(1.0));
        prop_assert_eq!(dynamic_effect(&b, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn mediator_series_matches_inverse(b in structural_dag(6)) {
        let pw = partition_weights(&b).unwrap();
        let q = pw.alpha.len();
        let inv = (DMatrix::identity(q, q) - pw.c.transpose()).try_inverse().unwrap();
        let direct = pw.beta.dot(&(inv * &pw.alpha));
        prop_assert!((mediated_series(&pw) - direct).abs() <= 1e-10);
        prop_assert!((effect_coefficient(&pw).unwrap() - pw.gamma - direct).abs() <= 1e-10);
    }

    #[test]
    fn shd_is_symmetric(a in adjacency(5), b in adjacency(5)) {
        prop_assert_eq!(shd(&a, &b), shd(&b, &a));
        prop_assert_eq!(shd(&a, &a), 0);
    }

    #[test]
    fn raising_the_threshold_never_adds_positives(
        est in matrix(4, 1.0),
        truth in structural_dag(4),
        lo in 0.0f64..0.5,
        step in 0.0f64..0.5,
    ) {
        let truth = GraphSequence::new(vec![1.0], vec![truth], None, 0.2).unwrap();
        let at = |thr: f64| {
            let est = GraphSequence::new(vec![1.0], vec![est.clone()], None, thr).unwrap();
            evaluate(&est, &truth).unwrap()
        };
        let (a, b) = (at(lo), at(lo + step));
        prop_assert!(b.counts.fp <= a.counts.fp);
        prop_assert!(b.counts.tp <= a.counts.tp);
    }

    #[test]
    fn rates_agree_with_counts(est in adjacency(5), truth in adjacency(5)) {
        let c = confusion(&est, &truth);
        let fdr = if c.tp + c.fp == 0 { 0.0 } else { c.fp as f64 / (c.tp + c.fp) as f64 };
        let tpr = if c.tp + c.fn_ == 0 { 1.0 } else { c.tp as f64 / (c.tp + c.fn_) as f64 };
        prop_assert_eq!(c.fdr(), fdr);
        prop_assert_eq!(c.tpr(), tpr);
        prop_assert!((0.0..=1.0).contains(&c.fdr()) && (0.0..=1.0).contains(&c.tpr()));
    }

    #[test]
    fn cycle_breaking_leaves_a_dag(w in matrix(5, 1.0), thr in 0.0f64..0.5) {
        let mut w = w;
        break_cycles(&mut w, thr);
        prop_assert!(Adjacency::from_weights(&w, thr).is_acyclic());
    }

    #[test]
    fn panel_csv_round_trips_exactly(
        t_len in 1usize..4,
        m in 1usize..4,
        p in 1usize..4,
        raw in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 27),
    ) {
        let x = PanelTensor::from_fn(t_len, m, p, |t, u, v| raw[((t - 1) * 9 + u * 3 + v) % 27]).unwrap();
        let back = parse_panel_csv(&panel_to_csv(&x), Path::new("mem.csv")).unwrap();
        prop_assert_eq!(back.values().len(), x.values().len());
        for (a, b) in back.values().iter().zip(x.values()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
