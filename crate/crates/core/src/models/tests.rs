use super::*;
use crate::fixtures::toy_sequences;
use crate::graph::WeightedAdjacency;
use crate::rng::seeded;

fn toy_cfg() -> ModelConfig {
    ModelConfig {
        hidden: 6,
        fc1: 5,
        fc2: 4,
        outputs: 3,
        ..ModelConfig::default()
    }
}

fn eval(model: &Model, seq: &NormalizedSequence) -> Tensor {
    let mut tape = Tape::new();
    let (_, out) = model.forward(&mut tape, seq, Mode::Eval).unwrap();
    tape.value(out).clone()
}

fn head_count(h: usize, f1: usize, f2: usize, o: usize) -> usize {
    h * f1 + f1 + f1 * f2 + f2 + f2 * o + o
}

fn gconv_count(input: usize, h: usize, k: usize) -> usize {
    4 * k * input * h + 4 * k * h * h + 3 * h + 4 * h
}

#[test]
fn parameter_counts_match_closed_form() {
    let cfg = ModelConfig::default();
    let evolve = 9 + 3 * (2 * 9 + 3) + 3;
    let head = head_count(256, 128, 64, 15);
    let expect = [
        (ModelKind::AgcnLstm, evolve + gconv_count(3, 256, 1) + head),
        (ModelKind::GcnLstm, gconv_count(3, 256, 1) + head),
        (ModelKind::Gcn, 7 * 256 + 256 + head),
        (ModelKind::Lstm, gconv_count(3, 256, 1) + head),
    ];
    for (kind, n) in expect {
        let m = Model::new(kind, cfg.clone(), &mut seeded(0)).unwrap();
        assert_eq!(m.parameter_count(), n, "{kind}");
    }
    let k2 = ModelConfig {
        chebyshev_order: 2,
        ..toy_cfg()
    };
    let m = Model::new(ModelKind::GcnLstm, k2, &mut seeded(0)).unwrap();
    assert_eq!(
        m.parameter_count(),
        gconv_count(3, 6, 2) + head_count(6, 5, 4, 3)
    );
}

#[test]
fn registry_is_stable_and_has_single_w0_and_q() {
    let a = Model::new(ModelKind::AgcnLstm, toy_cfg(), &mut seeded(1)).unwrap();
    let b = Model::new(ModelKind::AgcnLstm, toy_cfg(), &mut seeded(2)).unwrap();
    assert_eq!(a.registry(), b.registry());
    let names: Vec<&str> = a.registry().iter().map(|(n, _)| *n).collect();
    assert_eq!(names.iter().filter(|n| n.ends_with(".W0")).count(), 1);
    assert_eq!(names.iter().filter(|n| n.ends_with(".q")).count(), 1);
    assert_eq!(names.first(), Some(&"evolve.W0"));
    assert_eq!(names.last(), Some(&"fc3.b"));
}

#[test]
fn shapes_and_eval_determinism() {
    let (seqs, stats) = toy_sequences(1, 5, 3, 3).unwrap();
    for kind in ModelKind::ALL {
        let m = Model::new(kind, toy_cfg(), &mut seeded(4)).unwrap();
        let a = eval(&m, &seqs[0]);
        assert_eq!(a.shape(), (5, 3));
        assert!(a.all_finite());
        assert_eq!(a, eval(&m, &seqs[0]), "{kind}");
        let out = m.predict(&seqs[0], &stats).unwrap();
        assert!(
            stats
                .normalize_targets(&out.denormalized)
                .max_abs_diff(&out.predictions)
                < 1e-12
        );
    }
}

#[test]
fn train_mode_uses_dropout_but_eval_ignores_rng() {
    let (seqs, _) = toy_sequences(1, 5, 3, 3).unwrap();
    let m = Model::new(ModelKind::GcnLstm, toy_cfg(), &mut seeded(4)).unwrap();
    let run = |seed| {
        let mut tape = Tape::new();
        let mut rng = seeded(seed);
        let (_, out) = m
            .forward(&mut tape, &seqs[0], Mode::Train(&mut rng))
            .unwrap();
        tape.value(out).clone()
    };
    assert_ne!(run(1), run(2));
    assert_eq!(run(1), run(1));
}

#[test]
fn removing_evolve_matches_gcn_lstm() {
    let (seqs, _) = toy_sequences(1, 6, 3, 8).unwrap();
    let agcn = Model::new(ModelKind::AgcnLstm, toy_cfg(), &mut seeded(5)).unwrap();
    let mut plain = Model::new(ModelKind::GcnLstm, toy_cfg(), &mut seeded(6)).unwrap();
    let copied = plain.copy_matching_from(&agcn).unwrap();
    assert_eq!(copied, plain.parameters().len());
    let ablated = agcn.without_evolve().unwrap();
    assert_eq!(eval(&ablated, &seqs[0]), eval(&plain, &seqs[0]));
}

#[test]
fn gcn_on_identity_adjacency_is_per_node_mlp() {
    let (mut seqs, _) = toy_sequences(1, 4, 3, 9).unwrap();
    let seq = &mut seqs[0];
    let mut w = Tensor::filled(4, 4, 0.5);
    for i in 0..4 {
        w.set(i, i, 2.0);
    }
    seq.adjacency = WeightedAdjacency::new(w).unwrap();
    seq.propagation = Tensor::identity(4);
    let m = Model::new(ModelKind::Gcn, toy_cfg(), &mut seeded(3)).unwrap();
    let got = eval(&m, seq);

    let x = seq.collapsed_features();
    let p = m.parameters();
    let dense = |x: &Tensor, w: &Parameter, b: &Parameter| {
        let y = x.matmul(w.tensor()).unwrap();
        Tensor::from_fn(y.rows(), y.cols(), |r, c| {
            y.get(r, c) + b.tensor().get(0, c)
        })
    };
    let hsw = |t: Tensor| t.map(crate::autodiff::hardswish);
    let a = hsw(dense(&x, p[0], p[1]));
    let a = hsw(dense(&a, p[2], p[3]));
    let a = hsw(dense(&a, p[4], p[5]));
    let want = dense(&a, p[6], p[7]);
    assert!(got.max_abs_diff(&want) < 1e-12);
}

#[test]
fn lstm_is_per_node() {
    let (seqs, _) = toy_sequences(1, 5, 3, 10).unwrap();
    let m = Model::new(ModelKind::Lstm, toy_cfg(), &mut seeded(3)).unwrap();
    let full = eval(&m, &seqs[0]);
    let perm = [3, 0, 4, 1, 2];
    let mut s = seqs[0].clone();
    for g in &mut s.graphs {
        g.features = g.features.permute_rows(&perm);
    }
    let out = eval(&m, &s);
    assert!(out.max_abs_diff(&full.permute_rows(&perm)) < 1e-12);
}

#[test]
fn wrong_time_steps_is_contract_error() {
    let (mut seqs, _) = toy_sequences(1, 5, 3, 3).unwrap();
    seqs[0].graphs.pop();
    let m = Model::new(ModelKind::AgcnLstm, toy_cfg(), &mut seeded(4)).unwrap();
    let mut tape = Tape::new();
    assert!(matches!(
        m.forward(&mut tape, &seqs[0], Mode::Eval),
        Err(Error::Contract(_))
    ));
}

#[test]
fn evolve_needs_three_nodes() {
    let (seqs, _) = toy_sequences(1, 2, 3, 3).unwrap();
    let m = Model::new(ModelKind::AgcnLstm, toy_cfg(), &mut seeded(4)).unwrap();
    assert!(m.forward(&mut Tape::new(), &seqs[0], Mode::Eval).is_err());
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let (seqs, stats) = toy_sequences(1, 5, 3, 3).unwrap();
    let model = Model::new(ModelKind::AgcnLstm, toy_cfg(), &mut seeded(11)).unwrap();
    let mut extra = std::collections::BTreeMap::new();
    extra.insert("seed".to_string(), "11".to_string());
    let ck = Checkpoint {
        model,
        stats,
        extra,
    };
    let bytes = encode_checkpoint(&ck).unwrap();
    let back = decode_checkpoint(&bytes).unwrap();
    assert_eq!(back, ck);
    assert_eq!(eval(&back.model, &seqs[0]), eval(&ck.model, &seqs[0]));
    assert!(decode_checkpoint(&bytes[..bytes.len() - 3]).is_err());
    assert!(decode_checkpoint(b"nonsense").is_err());
}

#[test]
fn config_validation() {
    let bad = ModelConfig {
        dropout: 1.0,
        ..ModelConfig::default()
    };
    assert!(Model::new(ModelKind::Gcn, bad, &mut seeded(0)).is_err());
    assert_eq!("gcn_lstm".parse::<ModelKind>().unwrap(), ModelKind::GcnLstm);
    assert!("rnn".parse::<ModelKind>().is_err());
}
