//! Self-check suites: finite-difference gradients, adjacency invariants,
//! closed-form cell behaviour and independent oracles. Each suite reports the
//! largest error it saw against its tolerance.

use rand::Rng as _;
use serde::Serialize;

use crate::autodiff::{gradient_check_with_fault, Fault, Mode, Tape, Tensor, Var, DEFAULT_EPS};
use crate::error::{Error, Result};
use crate::fixtures::toy_sequences;
use crate::graph::{
    build_raw_adjacency, chebyshev_basis, NormalizedSequence, WeightedAdjacency, haversine_angle, normalize_adjacency, off_diagonal_range, GeoPoint,
    HaversineMode, DEFAULT_EPSILON_OFFSET, SELF_LOOP_WEIGHT,
};
use crate::models::{Model, ModelConfig, ModelKind};
use crate::nn::{
    DenseLayer, EvolveGcnhLayer, GConvLstmCell, GcnLayer, GruCell, Module, ParamCursor, Propagation,
};
use crate::rng::{seeded, stream, Rng};
use crate::training::{adam_step, lr_at_epoch, rmse, AdamState, LrSchedule};

pub const PRIMITIVE_TOLERANCE: f64 = 1e-6;
pub const LAYER_TOLERANCE: f64 = 1e-5;
pub const CLOSED_FORM_TOLERANCE: f64 = 1e-12;
pub const ORACLE_TOLERANCE: f64 = 1e-12;
pub const HAVERSINE_TOLERANCE: f64 = 1e-9;
pub const EQUIVARIANCE_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteResult {
    pub suite: String,
    pub passed: bool,
    pub checks: usize,
    pub max_error: f64,
    pub tolerance: f64,
    /// Check that produced `max_error`, or the first failure message.
    pub worst: String,
}

/// Step for composite checks. Their losses sum many products, so a
/// 1e-6 step leaves roundoff near the tolerance on small gradients.
pub const LAYER_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug)]
pub struct VerifyOptions {
    pub seeds: u64,
    pub adjacency_sets: u64,
    /// Central-difference step for primitives.
    pub eps: f64,
    /// Central-difference step for layers and models.
    pub layer_eps: f64,
    pub fault: Option<Fault>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seeds: 10,
            adjacency_sets: 100,
            eps: DEFAULT_EPS,
            layer_eps: LAYER_EPS,
            fault: None,
        }
    }
}

struct Tracker {
    suite: &'static str,
    tolerance: f64,
    checks: usize,
    max_error: f64,
    worst: String,
    failure: Option<String>,
}

impl Tracker {
    fn new(suite: &'static str, tolerance: f64) -> Self {
        Self {
            suite,
            tolerance,
            checks: 0,
            max_error: 0.0,
            worst: String::new(),
            failure: None,
        }
    }

    fn record(&mut self, name: impl Into<String>, err: f64) {
        self.checks += 1;
        let name = name.into();
        if err.is_nan() || err > self.max_error || self.worst.is_empty() {
            self.max_error = if err.is_nan() {
                f64::INFINITY
            } else {
                err.max(self.max_error)
            };
            self.worst = name.clone();
        }
        if !(err <= self.tolerance) && self.failure.is_none() {
            self.failure = Some(format!("{name}: {err:e}"));
        }
    }

    /// A check that must hold exactly; counts as error 0 or infinity.
    fn require(&mut self, name: impl Into<String>, ok: bool) {
        self.record(name, if ok { 0.0 } else { f64::INFINITY });
    }

    fn absorb(&mut self, name: impl Into<String>, r: Result<f64>) {
        let name = name.into();
        match r {
            Ok(e) => self.record(name, e),
            Err(e) => {
                self.record(format!("{name}: {e}"), f64::INFINITY);
            }
        }
    }

    fn finish(self) -> SuiteResult {
        let passed = self.failure.is_none();
        SuiteResult {
            suite: self.suite.to_string(),
            passed,
            checks: self.checks,
            max_error: self.max_error,
            tolerance: self.tolerance,
            worst: self.failure.unwrap_or(self.worst),
        }
    }
}

fn uniform(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut Rng) -> Tensor {
    Tensor::from_fn(rows, cols, |_, _| rng.random_range(lo..hi))
}

/// Values in `[-5, 5]` at least `1e-3` away from the hardswish kinks.
fn spread_off_kinks(rows: usize, cols: usize, rng: &mut Rng) -> Tensor {
    Tensor::from_fn(rows, cols, |_, _| loop {
        let v: f64 = rng.random_range(-5.0..5.0);
        if (v.abs() - 3.0).abs() > 1e-3 {
            break v;
        }
    })
}

/// `Σ out ⊙ R` for a fixed random `R`: a scalar whose gradient reaches every
/// output element with a non-trivial weight.
fn project(t: &mut Tape, out: Var, r: &Tensor) -> Result<Var> {
    let rv = t.constant(r.clone());
    let p = t.mul(out, rv)?;
    Ok(t.sum(p))
}

type Primitive = fn(&mut Tape, &[Var]) -> Result<Var>;

fn primitives(rng: &mut Rng) -> Vec<(&'static str, Primitive, Vec<Tensor>)> {
    let mut u = |r, c| uniform(r, c, -2.0, 2.0, rng);
    let (a34, b45, c34, d34, bias, x12) = (u(3, 4), u(4, 5), u(3, 4), u(3, 4), u(1, 4), u(1, 2));
    let (s31, q14, x43) = (u(3, 1), u(1, 4), u(4, 3));
    let positive = Tensor::from_fn(1, 1, |_, _| 1.5);
    vec![
        (
            "matmul",
            |t, v| t.matmul(v[0], v[1]),
            vec![a34.clone(), b45],
        ),
        (
            "add",
            |t, v| t.add(v[0], v[1]),
            vec![a34.clone(), c34.clone()],
        ),
        (
            "add_broadcast",
            |t, v| t.add(v[0], v[1]),
            vec![a34.clone(), bias.clone()],
        ),
        (
            "sub",
            |t, v| t.sub(v[0], v[1]),
            vec![a34.clone(), d34.clone()],
        ),
        (
            "mul",
            |t, v| t.mul(v[0], v[1]),
            vec![c34.clone(), d34.clone()],
        ),
        (
            "mul_broadcast",
            |t, v| t.mul(v[0], v[1]),
            vec![c34.clone(), bias],
        ),
        ("sigmoid", |t, v| Ok(t.sigmoid(v[0])), vec![a34.clone()]),
        ("tanh", |t, v| Ok(t.tanh(v[0])), vec![a34.clone()]),
        (
            "mse",
            |t, v| t.mse(v[0], v[1]),
            vec![a34.clone(), c34.clone()],
        ),
        ("sum", |t, v| Ok(t.sum(v[0])), vec![a34.clone()]),
        ("mean", |t, v| Ok(t.mean(v[0])), vec![a34.clone()]),
        (
            "hconcat",
            |t, v| t.hconcat(&[v[0], v[1]]),
            vec![a34.clone(), s31.clone()],
        ),
        ("transpose", |t, v| Ok(t.transpose(v[0])), vec![x43]),
        (
            "gather_rows",
            |t, v| t.gather_rows(v[0], &[2, 0, 2]),
            vec![a34.clone()],
        ),
        (
            "scale_rows",
            |t, v| t.scale_rows(v[0], v[1]),
            vec![a34.clone(), s31],
        ),
        (
            "div_scalar",
            |t, v| t.div_scalar(v[0], v[1]),
            vec![a34.clone(), positive],
        ),
        ("norm", |t, v| Ok(t.norm(v[0])), vec![q14]),
        (
            "dropout_train",
            |t, v| t.dropout(v[0], 0.3, Mode::Train(&mut seeded(7))),
            vec![c34],
        ),
        (
            "chain",
            |t, v| {
                let m = t.matmul(v[0], v[1])?;
                let h = t.hardswish(m);
                Ok(t.tanh(h))
            },
            vec![x12, uniform(2, 3, -1.0, 1.0, rng)],
        ),
    ]
}

/// Every primitive op, plus hardswish over all three branches.
pub fn gradient_primitives(opts: &VerifyOptions) -> SuiteResult {
    let mut tr = Tracker::new("gradient-primitives", PRIMITIVE_TOLERANCE);
    for seed in 0..opts.seeds {
        let mut rng = stream(seed, "verify-primitives", 0);
        let mut cases = primitives(&mut rng);
        cases.push((
            "hardswish",
            |t, v| Ok(t.hardswish(v[0])),
            vec![spread_off_kinks(4, 5, &mut rng)],
        ));
        for (name, op, inputs) in cases {
            let r = {
                let mut t = Tape::new();
                let vars: Vec<Var> = inputs.iter().map(|x| t.constant(x.clone())).collect();
                op(&mut t, &vars).map(|o| t.value(o).shape())
            }
            .and_then(|(rows, cols)| {
                let proj = uniform(rows, cols, -1.5, 1.5, &mut rng);
                gradient_check_with_fault(
                    |t, v| {
                        let o = op(t, v)?;
                        project(t, o, &proj)
                    },
                    &inputs,
                    opts.eps,
                    opts.fault,
                )
            });
            tr.absorb(format!("{name} (seed {seed})"), r.map(|g| g.max_rel_error));
        }
    }
    tr.finish()
}

fn check_layer<F>(opts: &VerifyOptions, params: Vec<Tensor>, f: F) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    gradient_check_with_fault(f, &params, opts.layer_eps, opts.fault).map(|g| g.max_rel_error)
}

fn tensors(m: &impl Module) -> Vec<Tensor> {
    m.parameters()
        .iter()
        .map(|p| p.tensor().detached())
        .collect()
}

fn toy_prop(n: usize, rng: &mut Rng) -> Tensor {
    let a = Tensor::from_fn(n, n, |r, c| if r == c { 2.0 } else { 0.0 });
    let mut w = a;
    for r in 0..n {
        for c in r + 1..n {
            let v = rng.random_range(0.05..0.95);
            w.set(r, c, v);
            w.set(c, r, v);
        }
    }
    crate::graph::symmetric_normalize(&w).expect("square")
}

/// Dense, GCN, GRU, graph-conv LSTM (orders 1 and 2) and EvolveGCN-H.
pub fn gradient_layers(opts: &VerifyOptions) -> SuiteResult {
    let mut tr = Tracker::new("gradient-layers", LAYER_TOLERANCE);
    for seed in 0..opts.seeds {
        let mut rng = stream(seed, "verify-layers", 0);
        let n = 6;
        let prop = toy_prop(n, &mut rng);
        let x = uniform(n, 3, -2.0, 2.0, &mut rng);
        let x2 = uniform(n, 3, -2.0, 2.0, &mut rng);

        let dense = DenseLayer::new("d", 3, 4, &mut rng);
        let proj = uniform(n, 4, -1.0, 1.0, &mut rng);
        let r = check_layer(opts, tensors(&dense), |t, v| {
            let vars = dense.vars(t, &mut ParamCursor::new(v))?;
            let xi = t.constant(x.clone());
            let o = DenseLayer::forward(t, vars, xi)?;
            let o = t.hardswish(o);
            project(t, o, &proj)
        });
        tr.absorb(format!("dense (seed {seed})"), r);

        let gcn = GcnLayer::new("g", 3, 4, &mut rng);
        let r = check_layer(opts, tensors(&gcn), |t, v| {
            let vars = gcn.vars(t, &mut ParamCursor::new(v))?;
            let (p, xi) = (t.constant(prop.clone()), t.constant(x.clone()));
            let o = GcnLayer::forward(t, vars, p, xi, true)?;
            project(t, o, &proj)
        });
        tr.absorb(format!("gcn (seed {seed})"), r);

        let gru = GruCell::new("r", 3, &mut rng);
        let h0 = uniform(3, 3, -1.0, 1.0, &mut rng);
        let proj3 = uniform(3, 3, -1.0, 1.0, &mut rng);
        let xin = uniform(3, 3, -2.0, 2.0, &mut rng);
        let r = check_layer(opts, tensors(&gru), |t, v| {
            let vars = gru.vars(t, &mut ParamCursor::new(v))?;
            let (xi, h) = (t.constant(xin.clone()), t.constant(h0.clone()));
            let h1 = GruCell::step(t, &vars, xi, h)?;
            let h2 = GruCell::step(t, &vars, xi, h1)?;
            project(t, h2, &proj3)
        });
        tr.absorb(format!("gru (seed {seed})"), r);

        for order in [1, 2] {
            let cell = GConvLstmCell::new("c", 3, 4, order, &mut rng);
            let basis = crate::graph::chebyshev_basis(&prop, order).expect("valid order");
            let r = check_layer(opts, tensors(&cell), |t, v| {
                let vars = cell.vars(t, &mut ParamCursor::new(v))?;
                let pr = Propagation::from_basis(t, &basis);
                let mut h = t.constant(Tensor::zeros(n, 4));
                let mut c = t.constant(Tensor::zeros(n, 4));
                for xs in [&x, &x2] {
                    let xi = t.constant(xs.clone());
                    (h, c) = GConvLstmCell::step(t, &vars, &pr, xi, h, c)?;
                }
                let hc = t.add(h, c)?;
                project(t, hc, &proj)
            });
            tr.absorb(format!("gconv_lstm order {order} (seed {seed})"), r);
        }

        let ev = EvolveGcnhLayer::new("e", 3, &mut rng);
        let proj_e = uniform(n, 3, -1.0, 1.0, &mut rng);
        let r = check_layer(opts, tensors(&ev), |t, v| {
            let vars = ev.vars(t, &mut ParamCursor::new(v))?;
            let p = t.constant(prop.clone());
            let mut w = vars.w0;
            let mut total = None;
            for xs in [&x, &x2] {
                let xi = t.constant(xs.clone());
                let (o, w_next) = EvolveGcnhLayer::step(t, &vars, p, xi, w)?;
                w = w_next;
                let s = project(t, o, &proj_e)?;
                total = Some(match total {
                    None => s,
                    Some(acc) => t.add(acc, s)?,
                });
            }
            Ok(total.expect("two steps"))
        });
        tr.absorb(format!("evolve_gcnh (seed {seed})"), r);
    }
    tr.finish()
}

/// Narrow widths used by the model gradient checks.
pub fn toy_model_config(outputs: usize) -> ModelConfig {
    ModelConfig {
        hidden: 4,
        fc1: 4,
        fc2: 3,
        outputs,
        ..ModelConfig::default()
    }
}

/// Every model kind, end to end in eval mode on a 6-node toy sequence.
pub fn gradient_models(opts: &VerifyOptions) -> SuiteResult {
    let mut tr = Tracker::new("gradient-models", LAYER_TOLERANCE);
    for seed in 0..opts.seeds {
        let (seqs, _) = match toy_sequences(1, 6, 3, 1000 + seed) {
            Ok(s) => s,
            Err(e) => {
                tr.absorb(format!("fixture (seed {seed})"), Err(e));
                continue;
            }
        };
        let seq = &seqs[0];
        for kind in ModelKind::ALL {
            let mut rng = stream(seed, "verify-models", kind as u64);
            let r = Model::new(kind, toy_model_config(3), &mut rng).and_then(|model| {
                let proj = uniform(6, 3, -1.0, 1.0, &mut rng);
                check_layer(opts, model.parameter_tensors(), |t, v| {
                    let o = model.forward_bound(t, v, seq, Mode::Eval)?;
                    project(t, o, &proj)
                })
            });
            tr.absorb(format!("{kind} (seed {seed})"), r);
        }
    }
    tr.finish()
}

fn random_points(n: usize, rng: &mut Rng) -> Vec<GeoPoint> {
    let lat0: f64 = rng.random_range(-80.0..80.0);
    let lon0: f64 = rng.random_range(-170.0..170.0);
    let span: f64 = [1e-3, 0.1, 5.0][rng.random_range(0..3)];
    (0..n)
        .map(|_| {
            GeoPoint::new(
                lat0 + span * rng.random_range(-1.0..1.0),
                lon0 + span * rng.random_range(-1.0..1.0),
            )
            .expect("in range")
        })
        .collect()
}

/// Symmetry, diagonal, off-diagonal range and monotone decay of normalized
/// adjacency on random point sets, plus haversine spot values.
pub fn adjacency_invariants(opts: &VerifyOptions) -> SuiteResult {
    let mut tr = Tracker::new("adjacency", HAVERSINE_TOLERANCE);
    let eps = DEFAULT_EPSILON_OFFSET;
    for set in 0..opts.adjacency_sets {
        let mut rng = stream(set, "verify-adjacency", 0);
        let n = rng.random_range(3..=12);
        let pts = random_points(n, &mut rng);
        for mode in [HaversineMode::Paper, HaversineMode::Standard] {
            let label = format!("set {set} {mode}");
            let r = (|| -> Result<()> {
                let raw = build_raw_adjacency(&pts, mode)?;
                let (lo, hi) = off_diagonal_range(&raw)
                    .ok_or_else(|| Error::invalid("no off-diagonal entries"))?;
                let adj = normalize_adjacency(&raw, lo, hi, eps)?;
                let w = adj.weights();
                let mut symmetric = true;
                let mut diagonal = true;
                let mut in_range = true;
                for i in 0..n {
                    diagonal &= w.get(i, i) == SELF_LOOP_WEIGHT;
                    for j in 0..n {
                        symmetric &= w.get(i, j) == w.get(j, i);
                        if i != j {
                            in_range &= (eps..=1.0 - eps).contains(&w.get(i, j));
                        }
                    }
                }
                tr.require(format!("{label}: symmetric"), symmetric);
                tr.require(format!("{label}: diagonal"), diagonal);
                tr.require(format!("{label}: off-diagonal range"), in_range);
                if mode == HaversineMode::Standard {
                    let mut monotone = true;
                    for i in 0..n {
                        for j in 0..n {
                            for k in 0..n {
                                if i == j || i == k {
                                    continue;
                                }
                                let dj = haversine_angle(pts[i], pts[j], mode);
                                let dk = haversine_angle(pts[i], pts[k], mode);
                                if dj < dk && w.get(i, j) < w.get(i, k) {
                                    monotone = false;
                                }
                            }
                        }
                    }
                    tr.require(format!("{label}: monotone"), monotone);
                }
                Ok(())
            })();
            if let Err(e) = r {
                tr.absorb(label, Err(e));
            }
        }
    }

    let p = GeoPoint::new(0.0, 0.0).expect("valid");
    let q = GeoPoint::new(0.0, 90.0).expect("valid");
    // hav(Δλ) = sin²(45°) = 1/2 with both cosines 1
    let h = (std::f64::consts::FRAC_PI_4).sin().powi(2);
    let paper_oracle = 2.0 * h.asin();
    let standard_oracle = 2.0 * h.sqrt().asin();
    tr.record(
        "paper-mode (0,0)-(0,90)",
        (haversine_angle(p, q, HaversineMode::Paper) - paper_oracle).abs(),
    );
    tr.record(
        "standard-mode (0,0)-(0,90)",
        (haversine_angle(p, q, HaversineMode::Standard) - standard_oracle).abs(),
    );
    tr.record(
        "paper-mode oracle is pi/3",
        (paper_oracle - std::f64::consts::FRAC_PI_3).abs(),
    );
    tr.record(
        "standard-mode oracle is pi/2",
        (standard_oracle - std::f64::consts::FRAC_PI_2).abs(),
    );
    tr.finish()
}

fn zeroed<M: Module>(mut m: M) -> M {
    for p in m.parameters_mut() {
        let n = p.tensor().len();
        p.assign(&vec![0.0; n]).expect("same length");
    }
    m
}

/// Zero-weight cells: LSTM memory halves, GRU and evolved weights halve.
pub fn closed_form_cells(opts: &VerifyOptions) -> SuiteResult {
    let mut tr = Tracker::new("closed-form", CLOSED_FORM_TOLERANCE);
    for seed in 0..opts.seeds {
        let mut rng = stream(seed, "verify-closed-form", 0);
        let n = 5;
        let prop = toy_prop(n, &mut rng);
        let x = uniform(n, 3, -2.0, 2.0, &mut rng);
        let h_prev = uniform(n, 4, -1.0, 1.0, &mut rng);
        let c_prev = uniform(n, 4, -3.0, 3.0, &mut rng);

        let cell = zeroed(GConvLstmCell::new("c", 3, 4, 1, &mut rng));
        let r = (|| -> Result<f64> {
            let mut t = Tape::new();
            let vars = cell.bind(&mut t);
            let cv = cell.vars(&t, &mut ParamCursor::new(&vars))?;
            let p = Propagation::Graph(vec![t.constant(prop.clone())]);
            let (xi, h, c) = (
                t.constant(x.clone()),
                t.constant(h_prev.clone()),
                t.constant(c_prev.clone()),
            );
            let (h1, c1) = GConvLstmCell::step(&mut t, &cv, &p, xi, h, c)?;
            let c_expect = c_prev.scale(0.5);
            let h_expect = c_prev.map(|v| 0.5 * (0.5 * v).tanh());
            Ok(t.value(c1)
                .max_abs_diff(&c_expect)
                .max(t.value(h1).max_abs_diff(&h_expect)))
        })();
        tr.absorb(format!("gconv_lstm zero weights (seed {seed})"), r);

        let gru = zeroed(GruCell::new("r", 3, &mut rng));
        let w_prev = uniform(3, 3, -2.0, 2.0, &mut rng);
        let r = (|| -> Result<f64> {
            let mut t = Tape::new();
            let vars = gru.bind(&mut t);
            let gv = gru.vars(&t, &mut ParamCursor::new(&vars))?;
            let xi = t.constant(uniform(3, 3, -2.0, 2.0, &mut rng));
            let w = t.constant(w_prev.clone());
            let w1 = GruCell::step(&mut t, &gv, xi, w)?;
            Ok(t.value(w1).max_abs_diff(&w_prev.scale(0.5)))
        })();
        tr.absorb(format!("gru zero weights (seed {seed})"), r);

        let mut ev = EvolveGcnhLayer::new("e", 3, &mut rng);
        ev.gru = zeroed(ev.gru);
        let r = (|| -> Result<f64> {
            let mut t = Tape::new();
            let vars = ev.bind(&mut t);
            let v = ev.vars(&t, &mut ParamCursor::new(&vars))?;
            let p = t.constant(prop.clone());
            let xi = t.constant(x.clone());
            let (_, w1) = EvolveGcnhLayer::step(&mut t, &v, p, xi, v.w0)?;
            Ok(t.value(w1).max_abs_diff(&ev.w0.tensor().scale(0.5)))
        })();
        tr.absorb(format!("evolve zero gru (seed {seed})"), r);
    }
    tr.finish()
}

/// Textbook RMSE with explicit loops over sequences, nodes and layers.
fn naive_rmse(preds: &[Tensor], truths: &[Tensor]) -> (Vec<f64>, f64) {
    let cols = truths[0].cols();
    let mut per = vec![0.0; cols];
    let mut all = 0.0;
    let mut nodes = 0.0;
    for s in 0..preds.len() {
        for r in 0..truths[s].rows() {
            nodes += 1.0;
            for (k, acc) in per.iter_mut().enumerate() {
                let e = preds[s].get(r, k) - truths[s].get(r, k);
                *acc += e * e;
                all += e * e;
            }
        }
    }
    (
        per.iter().map(|v| (v / nodes).sqrt()).collect(),
        (all / (nodes * cols as f64)).sqrt(),
    )
}

/// Scalar Adam on `f(w) = w²`.
fn scalar_adam(w0: f64, lr: f64, steps: usize) -> Vec<f64> {
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
    let (mut w, mut m, mut v) = (w0, 0.0, 0.0);
    let mut out = Vec::new();
    for t in 1..=steps {
        let g = 2.0 * w;
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        let mh = m / (1.0 - b1.powi(t as i32));
        let vh = v / (1.0 - b2.powi(t as i32));
        w -= lr * mh / (vh.sqrt() + eps);
        out.push(w);
    }
    out
}

/// RMSE against a two-loop recomputation, Adam against a scalar
/// implementation, and the learning-rate plateaus.
pub fn oracles(opts: &VerifyOptions) -> SuiteResult {
    let mut tr = Tracker::new("oracles", ORACLE_TOLERANCE);
    for seed in 0..opts.seeds {
        let mut rng = stream(seed, "verify-oracles", 0);
        let count = rng.random_range(1..=4);
        let truths: Vec<Tensor> = (0..count)
            .map(|_| {
                let n = rng.random_range(1..=7);
                uniform(n, 15, 1.0, 30.0, &mut rng)
            })
            .collect();
        let preds: Vec<Tensor> = truths
            .iter()
            .map(|t| {
                let noise = uniform(t.rows(), t.cols(), -3.0, 3.0, &mut rng);
                t.zip_with(&noise, |a, b| a + b).expect("same shape")
            })
            .collect();
        let r = rmse(&preds, &truths).map(|rep| {
            let (per, total) = naive_rmse(&preds, &truths);
            per.iter()
                .zip(&rep.per_layer)
                .map(|(a, b)| (a - b).abs())
                .fold((total - rep.total).abs(), f64::max)
        });
        tr.absorb(format!("rmse two-loop (seed {seed})"), r);
        let exact = rmse(&truths, &truths).map(|rep| {
            if rep.total == 0.0 && rep.per_layer.iter().all(|&v| v == 0.0) {
                0.0
            } else {
                f64::INFINITY
            }
        });
        tr.absorb(format!("rmse perfect predictions (seed {seed})"), exact);
    }

    let r = (|| -> Result<f64> {
        let mut p = crate::nn::Parameter::new("w", Tensor::scalar(1.0));
        let mut st = AdamState::new([&p]);
        let oracle = scalar_adam(1.0, 0.1, 3);
        let mut err: f64 = 0.0;
        for want in oracle {
            let w = p.tensor().data()[0];
            p.tensor_mut().set_grad(vec![2.0 * w])?;
            adam_step(vec![&mut p], &mut st, 0.1)?;
            err = err.max((p.tensor().data()[0] - want).abs());
        }
        Ok(err)
    })();
    tr.absorb("adam scalar trajectory", r);

    let sched = LrSchedule::default();
    for (e, want) in [
        (0, 0.01),
        (74, 0.01),
        (75, 0.005),
        (149, 0.005),
        (150, 0.0025),
        (224, 0.0025),
        (225, 0.00125),
        (299, 0.00125),
    ] {
        tr.require(format!("lr at epoch {e}"), lr_at_epoch(e, &sched) == want);
    }
    tr.finish()
}

fn random_permutation(n: usize, rng: &mut Rng) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut p: Vec<usize> = (0..n).collect();
    while p.iter().enumerate().all(|(i, &v)| i == v) {
        p.shuffle(rng);
    }
    p
}

fn permute_sequence(seq: &NormalizedSequence, perm: &[usize]) -> Result<NormalizedSequence> {
    let mut s = seq.clone();
    for g in &mut s.graphs {
        g.features = g.features.permute_rows(perm);
    }
    s.adjacency = WeightedAdjacency::new(seq.adjacency.weights().permute_symmetric(perm))?;
    s.propagation = seq.propagation.permute_symmetric(perm);
    s.targets = seq.targets.permute_rows(perm);
    s.raw_targets = seq.raw_targets.permute_rows(perm);
    Ok(s)
}

/// Smallest gap between the summarize scores of any input graph.
fn min_score_gap(model: &Model, seq: &NormalizedSequence) -> f64 {
    let Some(q) = model.parameters().into_iter().find(|p| p.name() == "evolve.q") else {
        return f64::INFINITY;
    };
    let q = q.tensor().row(0);
    let mut gap = f64::INFINITY;
    for g in &seq.graphs {
        let mut scores: Vec<f64> = (0..g.features.rows())
            .map(|r| g.features.row(r).iter().zip(q).map(|(a, b)| a * b).sum())
            .collect();
        scores.sort_by(f64::total_cmp);
        gap = scores.windows(2).map(|w| w[1] - w[0]).fold(gap, f64::min);
    }
    gap
}

/// Node relabelling commutes with the GCN layer, one GConvLSTM step and every
/// eval-mode model on 5-node graphs.
pub fn permutation_equivariance(opts: &VerifyOptions) -> SuiteResult {
    let mut tr = Tracker::new("permutation", EQUIVARIANCE_TOLERANCE);
    let n = 5;
    for seed in 0..opts.seeds {
        let mut rng = stream(seed, "verify-permutation", 0);
        let perm = random_permutation(n, &mut rng);
        let (seqs, _) = match toy_sequences(1, n, 4, 500 + seed) {
            Ok(s) => s,
            Err(e) => {
                tr.absorb("fixture", Err(e));
                continue;
            }
        };
        let seq = &seqs[0];
        let prop = seq.propagation.clone();
        let x = uniform(n, 3, -2.0, 2.0, &mut rng);

        let gcn = GcnLayer::new("g", 3, 4, &mut rng);
        let run_gcn = |p: &Tensor, x: &Tensor| -> Result<Tensor> {
            let mut t = Tape::new();
            let vars = gcn.bind(&mut t);
            let v = gcn.vars(&t, &mut ParamCursor::new(&vars))?;
            let (pv, xv) = (t.constant(p.clone()), t.constant(x.clone()));
            let out = GcnLayer::forward(&mut t, v, pv, xv, true)?;
            Ok(t.value(out).clone())
        };
        let r = run_gcn(&prop, &x).and_then(|base| {
            let out = run_gcn(&prop.permute_symmetric(&perm), &x.permute_rows(&perm))?;
            Ok(out.max_abs_diff(&base.permute_rows(&perm)))
        });
        tr.absorb(format!("gcn (seed {seed})"), r);

        let cell = GConvLstmCell::new("c", 3, 4, 1, &mut rng);
        let (h, c) = (uniform(n, 4, -1.0, 1.0, &mut rng), uniform(n, 4, -1.0, 1.0, &mut rng));
        let run_cell = |p: &Tensor, x: &Tensor, h: &Tensor, c: &Tensor| -> Result<(Tensor, Tensor)> {
            let mut t = Tape::new();
            let vars = cell.bind(&mut t);
            let v = cell.vars(&t, &mut ParamCursor::new(&vars))?;
            let pr = Propagation::from_basis(&mut t, &chebyshev_basis(p, 1)?);
            let (xv, hv, cv) = (t.constant(x.clone()), t.constant(h.clone()), t.constant(c.clone()));
            let (h1, c1) = GConvLstmCell::step(&mut t, &v, &pr, xv, hv, cv)?;
            Ok((t.value(h1).clone(), t.value(c1).clone()))
        };
        let r = run_cell(&prop, &x, &h, &c).and_then(|(h0, c0)| {
            let (h1, c1) = run_cell(
                &prop.permute_symmetric(&perm),
                &x.permute_rows(&perm),
                &h.permute_rows(&perm),
                &c.permute_rows(&perm),
            )?;
            Ok(h1
                .max_abs_diff(&h0.permute_rows(&perm))
                .max(c1.max_abs_diff(&c0.permute_rows(&perm))))
        });
        tr.absorb(format!("gconv_lstm step (seed {seed})"), r);

        for kind in ModelKind::ALL {
            let r = (|| -> Result<f64> {
                let model = Model::new(kind, toy_model_config(4), &mut stream(seed, "verify-permutation", 1))?;
                if min_score_gap(&model, seq) < 1e-6 {
                    return Err(Error::invalid("summarize scores too close for a strict ranking"));
                }
                let eval = |s: &NormalizedSequence| -> Result<Tensor> {
                    let mut t = Tape::new();
                    let (_, out) = model.forward(&mut t, s, Mode::Eval)?;
                    Ok(t.value(out).clone())
                };
                let base = eval(seq)?;
                let out = eval(&permute_sequence(seq, &perm)?)?;
                Ok(out.max_abs_diff(&base.permute_rows(&perm)))
            })();
            tr.absorb(format!("{kind} eval (seed {seed})"), r);
        }
    }
    tr.finish()
}

/// Every suite in order.
pub fn run_all(opts: &VerifyOptions) -> Vec<SuiteResult> {
    vec![
        gradient_primitives(opts),
        gradient_layers(opts),
        gradient_models(opts),
        adjacency_invariants(opts),
        closed_form_cells(opts),
        permutation_equivariance(opts),
        oracles(opts),
    ]
}
