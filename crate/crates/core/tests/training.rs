use icegnn::autodiff::Tensor;
use icegnn::fixtures::{sequences_from, small_synthetic};
use icegnn::models::{ModelConfig, ModelKind};
use icegnn::nn::Parameter;
use icegnn::rng::seeded;
use icegnn::training::{
    adam_step, lr_at_epoch, rmse, run_trials, AdamState, Experiment, LrSchedule, TrainConfig,
    TrialSummary,
};
use rand::Rng;

fn tiny_experiment(kind: ModelKind, epochs: usize) -> Experiment {
    let model = ModelConfig {
        hidden: 6,
        fc1: 5,
        fc2: 4,
        outputs: 3,
        ..ModelConfig::default()
    };
    let train = TrainConfig {
        epochs,
        ..TrainConfig::default()
    };
    Experiment::new(kind, model, train)
}

#[test]
fn lr_plateaus() {
    let s = LrSchedule::default();
    let got: Vec<f64> = [0, 74, 75, 149, 150, 224, 225, 299]
        .iter()
        .map(|&e| lr_at_epoch(e, &s))
        .collect();
    assert_eq!(
        got,
        [0.01, 0.01, 0.005, 0.005, 0.0025, 0.0025, 0.00125, 0.00125]
    );
    let mut distinct: Vec<f64> = (0..300).map(|e| lr_at_epoch(e, &s)).collect();
    distinct.dedup();
    assert_eq!(distinct, [0.01, 0.005, 0.0025, 0.00125]);
}

#[test]
fn adam_matches_scalar_recurrence() {
    let mut p = Parameter::new("w", Tensor::scalar(1.0));
    let mut state = AdamState::new([&p]);
    let (mut m, mut v, mut w) = (0.0f64, 0.0f64, 1.0f64);
    for t in 1..=3 {
        let g = 2.0 * w;
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        let mh = m / (1.0 - 0.9f64.powi(t));
        let vh = v / (1.0 - 0.999f64.powi(t));
        w -= 0.1 * mh / (vh.sqrt() + 1e-8);

        let cur = p.tensor().get(0, 0);
        p.tensor_mut().set_grad(vec![2.0 * cur]).unwrap();
        adam_step(vec![&mut p], &mut state, 0.1).unwrap();
        assert!((p.tensor().get(0, 0) - w).abs() < 1e-12);
        assert_eq!(state.step_count(), t as u64);
    }
}

#[test]
fn non_finite_gradient_leaves_weights_untouched() {
    let mut p = Parameter::new("fc1.W", Tensor::filled(1, 2, 0.3));
    p.tensor_mut().set_grad(vec![1.0, f64::NAN]).unwrap();
    let mut state = AdamState::new([&p]);
    let err = adam_step(vec![&mut p], &mut state, 0.1).unwrap_err();
    assert!(err.to_string().contains("fc1.W"));
    assert_eq!(p.tensor().data(), &[0.3, 0.3]);
    assert_eq!(state.step_count(), 0);
}

#[test]
fn rmse_matches_two_loop_oracle() {
    let mut rng = seeded(9);
    for _ in 0..20 {
        let n_seq = rng.random_range(1..5);
        let cols = rng.random_range(1..6);
        let mut preds = Vec::new();
        let mut truths = Vec::new();
        for _ in 0..n_seq {
            let rows = rng.random_range(1..7);
            preds.push(Tensor::from_fn(rows, cols, |_, _| {
                rng.random_range(-9.0..9.0)
            }));
            truths.push(Tensor::from_fn(rows, cols, |_, _| {
                rng.random_range(-9.0..9.0)
            }));
        }
        let rep = rmse(&preds, &truths).unwrap();
        let mut total = 0.0;
        let mut count = 0usize;
        for k in 0..cols {
            let mut sq = 0.0;
            let mut nk = 0usize;
            for (p, t) in preds.iter().zip(&truths) {
                for r in 0..t.rows() {
                    let d = p.get(r, k) - t.get(r, k);
                    sq += d * d;
                    nk += 1;
                }
            }
            assert!((rep.per_layer[k] - (sq / nk as f64).sqrt()).abs() < 1e-12);
            total += sq;
            count += nk;
        }
        assert!((rep.total - (total / count as f64).sqrt()).abs() < 1e-12);
        assert_eq!(rmse(&truths, &truths).unwrap().total, 0.0);
    }
}

#[test]
fn trials_are_deterministic_and_parallel_agrees() {
    let data = sequences_from(&small_synthetic(6, 5, 3, 4)).unwrap();
    for kind in [ModelKind::AgcnLstm, ModelKind::Gcn] {
        let exp = tiny_experiment(kind, 3);
        let (a, _) = run_trials(&data, &exp, 3, 11, false).unwrap();
        let (b, outs) = run_trials(&data, &exp, 3, 11, true).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(outs.len(), 3);
        let hashes: Vec<&str> = a.trials.iter().map(|t| t.split_hash.as_str()).collect();
        assert!(hashes[0] != hashes[1] && hashes[1] != hashes[2] && hashes[0] != hashes[2]);
        assert_eq!(a.trials[2].seed, 13);
        assert_eq!((a.trials[0].n_train, a.trials[0].n_test), (5, 1));
        assert!(a
            .trials
            .iter()
            .all(|t| t.loss_curve.len() == 3 && t.total_rmse.is_finite()));
    }
}

#[test]
fn too_few_sequences_is_an_error() {
    let data = sequences_from(&small_synthetic(4, 5, 3, 4)).unwrap();
    assert!(run_trials(&data, &tiny_experiment(ModelKind::Lstm, 1), 1, 0, false).is_err());
}

#[test]
fn summary_of_perfect_trials_is_zero() {
    let report = |trial: usize| icegnn::training::TrialReport {
        trial,
        seed: trial as u64,
        model: ModelKind::Gcn,
        n_train: 4,
        n_test: 1,
        split_hash: String::new(),
        per_layer_rmse: vec![0.0; 3],
        total_rmse: 0.0,
        loss_curve: vec![],
    };
    let s = TrialSummary::from_reports(
        ModelKind::Gcn,
        0,
        vec![1, 2, 3],
        (0..5).map(report).collect(),
    )
    .unwrap();
    assert_eq!((s.total_rmse_mean, s.total_rmse_std), (0.0, 0.0));
    assert_eq!(s.per_layer_std, vec![0.0; 3]);
}
