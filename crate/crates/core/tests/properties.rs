use icegnn::autodiff::{hardswish, Mode, Tape, Tensor};
use icegnn::data::{extract_thickness, reconstruct_column};
use icegnn::graph::{
    build_raw_adjacency, compute_stats_default, haversine_angle, normalize_adjacency,
    off_diagonal_range, GeoPoint, HaversineMode, DEFAULT_EPSILON_OFFSET,
};
use icegnn::nn::{summarize, Parameter};
use icegnn::training::{adam_step, split_hash, split_indices, train_count, AdamState};
use proptest::prelude::*;

fn point() -> impl Strategy<Value = (f64, f64)> {
    (-80.0f64..80.0, -179.0f64..179.0)
}

fn distinct_points(max: usize) -> impl Strategy<Value = Vec<GeoPoint>> {
    prop::collection::vec(point(), 2..=max).prop_filter_map("duplicate points", |raw| {
        let pts: Vec<GeoPoint> = raw
            .iter()
            .map(|&(a, b)| GeoPoint::new(a, b).unwrap())
            .collect();
        for i in 0..pts.len() {
            for j in 0..i {
                if haversine_angle(pts[i], pts[j], HaversineMode::Standard) < 1e-6 {
                    return None;
                }
            }
        }
        Some(pts)
    })
}

fn mode() -> impl Strategy<Value = HaversineMode> {
    prop_oneof![Just(HaversineMode::Paper), Just(HaversineMode::Standard)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn normalized_adjacency_invariants(pts in distinct_points(9), mode in mode()) {
        let raw = build_raw_adjacency(&pts, mode).unwrap();
        let (lo, hi) = off_diagonal_range(&raw).unwrap();
        let adj = normalize_adjacency(&raw, lo, hi, DEFAULT_EPSILON_OFFSET).unwrap();
        let w = adj.weights();
        let n = pts.len();
        for i in 0..n {
            prop_assert_eq!(w.get(i, i), 2.0);
            for j in 0..n {
                prop_assert_eq!(w.get(i, j), w.get(j, i));
                if i != j {
                    let v = w.get(i, j);
                    prop_assert!((0.01..=0.99).contains(&v), "{}", v);
                }
            }
        }
    }

    #[test]
    fn split_is_disjoint_and_exhaustive(n in 5usize..3000, seed in any::<u64>()) {
        let s = split_indices(n, seed).unwrap();
        prop_assert_eq!(s.train.len(), train_count(n));
        let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        prop_assert!(!s.test.is_empty());
    }

    #[test]
    fn five_trial_splits_differ(n in 6usize..2000, base in any::<u32>()) {
        let ids: Vec<String> = (0..n).map(|i| format!("r{i}")).collect();
        let hashes: Vec<String> = (0..5u64)
            .map(|t| {
                let s = split_indices(n, base as u64 + t).unwrap();
                split_hash(
                    s.train.iter().map(|&i| ids[i].as_str()),
                    s.test.iter().map(|&i| ids[i].as_str()),
                )
            })
            .collect();
        for a in 0..5 {
            for b in 0..a {
                prop_assert_ne!(&hashes[a], &hashes[b]);
            }
        }
    }

    #[test]
    fn extraction_round_trips(
        first in 0usize..40,
        thickness in prop::collection::vec(1usize..30, 1..40),
        pad in 0usize..20,
    ) {
        let height = first + thickness.iter().sum::<usize>() + 1 + pad;
        let col = reconstruct_column(height, first, &thickness).unwrap();
        let layers = extract_thickness(&col).unwrap();
        prop_assert_eq!(layers.tops[0], first);
        prop_assert_eq!(layers.tops.len(), thickness.len() + 1);
        prop_assert_eq!(&layers.thickness, &thickness);
        let again = reconstruct_column(height, layers.tops[0], &layers.thickness).unwrap();
        prop_assert_eq!(again, col);
    }

    #[test]
    fn extraction_of_arbitrary_masks(col in prop::collection::vec(any::<u8>(), 0..200)) {
        let white = col.iter().filter(|&&v| v >= 128).count();
        match extract_thickness(&col) {
            Ok(l) => {
                prop_assert_eq!(l.tops.len(), white);
                prop_assert!(l.thickness.iter().all(|&t| t > 0));
                prop_assert_eq!(l.thickness.len(), white - 1);
            }
            Err(_) => prop_assert!(white < 2),
        }
    }

    #[test]
    fn summarize_ignores_node_order(
        rows in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 3), 4..9),
        q in prop::collection::vec(-2.0f64..2.0, 3),
        seed in any::<u64>(),
    ) {
        prop_assume!(q.iter().map(|v| v * v).sum::<f64>() > 1e-3);
        let x = Tensor::from_rows(&rows).unwrap();
        let qt = Tensor::from_rows(&[q.clone()]).unwrap();
        let scores: Vec<f64> = rows.iter().map(|r| r.iter().zip(&q).map(|(a, b)| a * b).sum()).collect();
        let mut sorted = scores.clone();
        sorted.sort_by(f64::total_cmp);
        prop_assume!(sorted.windows(2).all(|w| w[1] - w[0] > 1e-9));

        let mut perm: Vec<usize> = (0..rows.len()).collect();
        use rand::seq::SliceRandom;
        perm.shuffle(&mut icegnn::rng::seeded(seed));
        let run = |x: Tensor| {
            let mut tape = Tape::new();
            let xv = tape.constant(x);
            let qv = tape.constant(qt.clone());
            let s = summarize(&mut tape, xv, 3, qv).unwrap();
            tape.value(s).clone()
        };
        let a = run(x.clone());
        let b = run(x.permute_rows(&perm));
        prop_assert_eq!(a, b);
    }

    #[test]
    fn first_adam_step_opposes_gradient(
        g in prop::collection::vec(prop_oneof![-1e3f64..-1e-3, 1e-3f64..1e3], 1..12),
        lr in 1e-4f64..1.0,
    ) {
        let w0 = Tensor::from_rows(&[vec![0.5; g.len()]]).unwrap();
        let mut p = Parameter::new("w", w0.clone());
        p.tensor_mut().set_grad(g.clone()).unwrap();
        let mut state = AdamState::new([&p]);
        adam_step(vec![&mut p], &mut state, lr).unwrap();
        prop_assert_eq!(state.step_count(), 1);
        for (i, gi) in g.iter().enumerate() {
            let delta = p.tensor().get(0, i) - w0.get(0, i);
            prop_assert_eq!(delta.signum(), -gi.signum());
            prop_assert!((delta.abs() - lr).abs() < lr * 1e-4);
        }
    }

    #[test]
    fn hardswish_saturates_exactly(x in 3.0f64..1e6) {
        prop_assert_eq!(hardswish(x), x);
        prop_assert_eq!(hardswish(-x), 0.0);
    }

    #[test]
    fn dropout_identities(vals in prop::collection::vec(-5.0f64..5.0, 1..30), seed in any::<u64>()) {
        let x = Tensor::from_rows(&[vals]).unwrap();
        let mut tape = Tape::new();
        let v = tape.constant(x.clone());
        let e = tape.dropout(v, 0.5, Mode::Eval).unwrap();
        prop_assert_eq!(tape.value(e), &x);
        let mut rng = icegnn::rng::seeded(seed);
        let z = tape.dropout(v, 0.0, Mode::Train(&mut rng)).unwrap();
        prop_assert_eq!(tape.value(z), &x);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn normalized_training_features_are_standard(seed in 0u64..1000, count in 2usize..5) {
        let raw = icegnn::fixtures::sequences_from(&icegnn::fixtures::small_synthetic(count, 6, 3, seed)).unwrap();
        let stats = compute_stats_default(&raw).unwrap();
        for c in 0..3 {
            let values: Vec<f64> = raw
                .iter()
                .flat_map(|s| s.graphs.iter())
                .flat_map(|g| {
                    let z = stats.normalize_features(&g.features);
                    (0..z.rows()).map(move |r| z.get(r, c)).collect::<Vec<_>>()
                })
                .collect();
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            prop_assert!(mean.abs() < 1e-6, "column {} mean {}", c, mean);
            prop_assert!((var.sqrt() - 1.0).abs() < 1e-6, "column {} std {}", c, var.sqrt());
        }
        for s in &raw {
            let z = stats.normalize_targets(&s.targets);
            prop_assert!(stats.denormalize_targets(&z).max_abs_diff(&s.targets) < 1e-9);
        }
    }
}

#[test]
fn standard_mode_weight_decreases_with_separation() {
    let origin = GeoPoint::new(10.0, 20.0).unwrap();
    let pts: Vec<GeoPoint> = std::iter::once(origin)
        .chain(
            (1..12).map(|i| GeoPoint::new(10.0 + 0.37 * i as f64, 20.0 + 0.11 * i as f64).unwrap()),
        )
        .collect();
    let raw = build_raw_adjacency(&pts, HaversineMode::Standard).unwrap();
    let (lo, hi) = off_diagonal_range(&raw).unwrap();
    let w = normalize_adjacency(&raw, lo, hi, DEFAULT_EPSILON_OFFSET).unwrap();
    for j in 2..pts.len() {
        assert!(w.weights().get(0, j) < w.weights().get(0, j - 1));
    }
}
