use icegnn::autodiff::{Mode, Tape, Tensor};
use icegnn::fixtures::toy_sequences;
use icegnn::graph::{NormalizedSequence, WeightedAdjacency};
use icegnn::models::{Model, ModelConfig, ModelKind};
use icegnn::nn::{GConvLstmCell, GcnLayer, ParamCursor, Propagation};
use icegnn::rng::seeded;
use rand::Rng;

const PERMS: [[usize; 5]; 4] = [
    [1, 0, 2, 3, 4],
    [4, 3, 2, 1, 0],
    [2, 4, 1, 0, 3],
    [3, 0, 4, 2, 1],
];
const TOL: f64 = 1e-9;

fn random(rows: usize, cols: usize, seed: u64) -> Tensor {
    let mut rng = seeded(seed);
    Tensor::from_fn(rows, cols, |_, _| rng.random_range(-2.0..2.0))
}

fn random_propagation(seed: u64) -> Tensor {
    let mut rng = seeded(seed);
    let mut w = Tensor::filled(5, 5, 2.0);
    for i in 0..5 {
        for j in 0..i {
            let v = rng.random_range(0.01..0.99);
            w.set(i, j, v);
            w.set(j, i, v);
        }
    }
    WeightedAdjacency::new(w).unwrap().propagation().unwrap()
}

fn permute_sequence(seq: &NormalizedSequence, perm: &[usize]) -> NormalizedSequence {
    let mut s = seq.clone();
    for g in &mut s.graphs {
        g.features = g.features.permute_rows(perm);
    }
    s.adjacency = WeightedAdjacency::new(seq.adjacency.weights().permute_symmetric(perm)).unwrap();
    s.propagation = seq.propagation.permute_symmetric(perm);
    s.targets = seq.targets.permute_rows(perm);
    s.raw_targets = seq.raw_targets.permute_rows(perm);
    s
}

#[test]
fn gcn_commutes_with_node_permutation() {
    for seed in 0..5 {
        let layer = GcnLayer::new("gcn", 3, 4, &mut seeded(seed));
        let prop = random_propagation(seed + 100);
        let x = random(5, 3, seed + 200);
        let run = |p: &Tensor, x: &Tensor| {
            let mut tape = Tape::new();
            let w = tape.param(layer.w.tensor());
            let b = tape.param(layer.b.tensor());
            let vars = tape.params().to_vec();
            assert_eq!(vars, vec![w, b]);
            let v = layer.vars(&tape, &mut ParamCursor::new(&vars)).unwrap();
            let pv = tape.constant(p.clone());
            let xv = tape.constant(x.clone());
            let out = GcnLayer::forward(&mut tape, v, pv, xv, true).unwrap();
            tape.value(out).clone()
        };
        let base = run(&prop, &x);
        for perm in PERMS {
            let out = run(&prop.permute_symmetric(&perm), &x.permute_rows(&perm));
            assert!(out.max_abs_diff(&base.permute_rows(&perm)) < TOL);
        }
    }
}

#[test]
fn gconv_lstm_step_commutes_with_node_permutation() {
    for order in [1, 2] {
        let cell = GConvLstmCell::new("cell", 3, 4, order, &mut seeded(order as u64));
        let prop = random_propagation(7);
        let (x, h, c) = (random(5, 3, 1), random(5, 4, 2), random(5, 4, 3));
        let run = |p: &Tensor, x: &Tensor, h: &Tensor, c: &Tensor| {
            let mut tape = Tape::new();
            let vars: Vec<_> = icegnn::nn::Module::parameters(&cell)
                .into_iter()
                .map(|p| tape.param(p.tensor()))
                .collect();
            let v = cell.vars(&tape, &mut ParamCursor::new(&vars)).unwrap();
            let basis = icegnn::graph::chebyshev_basis(p, order).unwrap();
            let pr = Propagation::from_basis(&mut tape, &basis);
            let (xv, hv, cv) = (
                tape.constant(x.clone()),
                tape.constant(h.clone()),
                tape.constant(c.clone()),
            );
            let (h1, c1) = GConvLstmCell::step(&mut tape, &v, &pr, xv, hv, cv).unwrap();
            (tape.value(h1).clone(), tape.value(c1).clone())
        };
        let (h0, c0) = run(&prop, &x, &h, &c);
        for perm in PERMS {
            let (h1, c1) = run(
                &prop.permute_symmetric(&perm),
                &x.permute_rows(&perm),
                &h.permute_rows(&perm),
                &c.permute_rows(&perm),
            );
            assert!(h1.max_abs_diff(&h0.permute_rows(&perm)) < TOL);
            assert!(c1.max_abs_diff(&c0.permute_rows(&perm)) < TOL);
        }
    }
}

#[test]
fn eval_models_commute_with_node_permutation() {
    let cfg = ModelConfig {
        hidden: 8,
        fc1: 6,
        fc2: 5,
        outputs: 4,
        ..ModelConfig::default()
    };
    let (seqs, _) = toy_sequences(3, 5, 4, 21).unwrap();
    for kind in ModelKind::ALL {
        let model = Model::new(kind, cfg.clone(), &mut seeded(3)).unwrap();
        for seq in &seqs {
            let eval = |s: &NormalizedSequence| {
                let mut tape = Tape::new();
                let (_, out) = model.forward(&mut tape, s, Mode::Eval).unwrap();
                tape.value(out).clone()
            };
            let base = eval(seq);
            for perm in PERMS {
                let out = eval(&permute_sequence(seq, &perm));
                let err = out.max_abs_diff(&base.permute_rows(&perm));
                assert!(err < TOL, "{kind}: {err}");
            }
        }
    }
}
