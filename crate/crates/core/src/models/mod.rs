//! The adaptive recurrent graph model and its ablations.
//!
//! | kind        | body                                          |
//! |-------------|-----------------------------------------------|
//! | `agcn_lstm` | EvolveGCN-H (3→3) then graph-conv LSTM        |
//! | `gcn_lstm`  | graph-conv LSTM                               |
//! | `gcn`       | one GCN over lat, lon and all thicknesses     |
//! | `lstm`      | per-node LSTM, no adjacency                   |
//!
//! Every body feeds the same head: hardswish, fc1, hardswish, dropout, fc2,
//! hardswish, dropout, fc3.

mod checkpoint;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint,
    CHECKPOINT_VERSION,
};

use serde::{Deserialize, Serialize};

use crate::autodiff::{Mode, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graph::{chebyshev_basis, NormalizationStats, NormalizedSequence, FEATURES};
use crate::nn::{
    check_unique_names, AffineVars, DenseLayer, EvolveGcnhLayer, GConvLstmCell, GcnLayer, Module,
    ParamCursor, Parameter, Propagation,
};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    AgcnLstm,
    GcnLstm,
    Gcn,
    Lstm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::Lstm,
        ModelKind::Gcn,
        ModelKind::GcnLstm,
        ModelKind::AgcnLstm,
    ];

    /// Key used in configs and on the command line.
    pub fn key(self) -> &'static str {
        match self {
            ModelKind::AgcnLstm => "agcn_lstm",
            ModelKind::GcnLstm => "gcn_lstm",
            ModelKind::Gcn => "gcn",
            ModelKind::Lstm => "lstm",
        }
    }

    /// Column title used in result tables.
    pub fn title(self) -> &'static str {
        match self {
            ModelKind::AgcnLstm => "AGCN-LSTM",
            ModelKind::GcnLstm => "GCN-LSTM",
            ModelKind::Gcn => "GCN",
            ModelKind::Lstm => "LSTM",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.key() == s)
            .ok_or_else(|| Error::Config(format!("unknown model kind '{s}'")))
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.key())
    }
}

/// Widths and regularization shared by all model kinds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub hidden: usize,
    pub fc1: usize,
    pub fc2: usize,
    pub outputs: usize,
    pub time_steps: usize,
    pub dropout: f64,
    pub chebyshev_order: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: 256,
            fc1: 128,
            fc2: 64,
            outputs: 15,
            time_steps: 5,
            dropout: 0.2,
            chebyshev_order: 1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if [
            self.hidden,
            self.fc1,
            self.fc2,
            self.outputs,
            self.time_steps,
        ]
        .contains(&0)
        {
            return Err(Error::Config(
                "model widths and time steps must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout {} not in [0, 1)",
                self.dropout
            )));
        }
        if self.chebyshev_order == 0 {
            return Err(Error::Config("chebyshev_order must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Body {
    Adaptive {
        evolve: EvolveGcnhLayer,
        cell: GConvLstmCell,
    },
    Recurrent {
        cell: GConvLstmCell,
    },
    Graph {
        gcn: GcnLayer,
    },
    Sequence {
        cell: GConvLstmCell,
    },
}

#[derive(Clone, Debug, PartialEq)]
struct Head {
    fc1: DenseLayer,
    fc2: DenseLayer,
    fc3: DenseLayer,
}

/// Per-node predictions for one sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelOutput {
    /// In normalized target space.
    pub predictions: Tensor,
    /// In pixels.
    pub denormalized: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    kind: ModelKind,
    config: ModelConfig,
    body: Body,
    head: Head,
}

impl Model {
    pub fn new(kind: ModelKind, config: ModelConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let hidden = config.hidden;
        let order = config.chebyshev_order;
        let body = match kind {
            ModelKind::AgcnLstm => Body::Adaptive {
                evolve: EvolveGcnhLayer::new("evolve", FEATURES, rng),
                cell: GConvLstmCell::new("gconvlstm", FEATURES, hidden, order, rng),
            },
            ModelKind::GcnLstm => Body::Recurrent {
                cell: GConvLstmCell::new("gconvlstm", FEATURES, hidden, order, rng),
            },
            ModelKind::Gcn => Body::Graph {
                gcn: GcnLayer::new("gcn", 2 + config.time_steps, hidden, rng),
            },
            ModelKind::Lstm => Body::Sequence {
                cell: GConvLstmCell::new("lstm", FEATURES, hidden, 1, rng),
            },
        };
        let head = Head {
            fc1: DenseLayer::new("fc1", hidden, config.fc1, rng),
            fc2: DenseLayer::new("fc2", config.fc1, config.fc2, rng),
            fc3: DenseLayer::new("fc3", config.fc2, config.outputs, rng),
        };
        let model = Self {
            kind,
            config,
            body,
            head,
        };
        check_unique_names(model.parameters())?;
        Ok(model)
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// The same model with the adaptive layer dropped; identical to a
    /// `gcn_lstm` model carrying the remaining weights.
    pub fn without_evolve(self) -> Result<Self> {
        match self.body {
            Body::Adaptive { cell, .. } => Ok(Self {
                kind: ModelKind::GcnLstm,
                config: self.config,
                body: Body::Recurrent { cell },
                head: self.head,
            }),
            _ => Err(Error::invalid(format!(
                "{} has no adaptive layer",
                self.kind
            ))),
        }
    }

    /// Copies values from `other` for every parameter whose name exists in
    /// both models. Returns how many were copied.
    pub fn copy_matching_from(&mut self, other: &Model) -> Result<usize> {
        let src: std::collections::HashMap<&str, &Parameter> = other
            .parameters()
            .into_iter()
            .map(|p| (p.name(), p))
            .collect();
        let mut copied = 0;
        for p in self.parameters_mut() {
            if let Some(s) = src.get(p.name()) {
                if s.shape() != p.shape() {
                    return Err(Error::Contract(format!(
                        "{}: shape {:?} vs {:?}",
                        p.name(),
                        p.shape(),
                        s.shape()
                    )));
                }
                p.assign(s.tensor().data())?;
                copied += 1;
            }
        }
        Ok(copied)
    }

    /// Binds parameters to a fresh slice of tape vars and runs the forward pass.
    pub fn forward(
        &self,
        tape: &mut Tape,
        seq: &NormalizedSequence,
        mode: Mode<'_>,
    ) -> Result<(Vec<Var>, Var)> {
        let vars = self.bind(tape);
        let out = self.forward_bound(tape, &vars, seq, mode)?;
        Ok((vars, out))
    }

    /// Forward pass with parameters already on the tape, in registry order.
    pub fn forward_bound(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        seq: &NormalizedSequence,
        mut mode: Mode<'_>,
    ) -> Result<Var> {
        self.check_input(seq)?;
        let n = seq.n_nodes();
        let hidden = self.config.hidden;
        let mut cur = ParamCursor::new(vars);

        let body_out = match &self.body {
            Body::Adaptive { evolve, cell } => {
                let ev = evolve.vars(tape, &mut cur)?;
                let cv = cell.vars(tape, &mut cur)?;
                let prop = tape.constant(seq.propagation.clone());
                let basis = self.basis(tape, seq, prop)?;
                let mut h = tape.constant(Tensor::zeros(n, hidden));
                let mut c = tape.constant(Tensor::zeros(n, hidden));
                let mut w = ev.w0;
                for g in &seq.graphs {
                    let x = tape.constant(g.features.clone());
                    let (xe, w_next) = EvolveGcnhLayer::step(tape, &ev, prop, x, w)?;
                    w = w_next;
                    (h, c) = GConvLstmCell::step(tape, &cv, &basis, xe, h, c)?;
                }
                h
            }
            Body::Recurrent { cell } => {
                let cv = cell.vars(tape, &mut cur)?;
                let prop = tape.constant(seq.propagation.clone());
                let basis = self.basis(tape, seq, prop)?;
                let mut h = tape.constant(Tensor::zeros(n, hidden));
                let mut c = tape.constant(Tensor::zeros(n, hidden));
                for g in &seq.graphs {
                    let x = tape.constant(g.features.clone());
                    (h, c) = GConvLstmCell::step(tape, &cv, &basis, x, h, c)?;
                }
                h
            }
            Body::Sequence { cell } => {
                let cv = cell.vars(tape, &mut cur)?;
                let mut h = tape.constant(Tensor::zeros(n, hidden));
                let mut c = tape.constant(Tensor::zeros(n, hidden));
                for g in &seq.graphs {
                    let x = tape.constant(g.features.clone());
                    (h, c) = GConvLstmCell::step(tape, &cv, &Propagation::Identity, x, h, c)?;
                }
                h
            }
            Body::Graph { gcn } => {
                let gv = gcn.vars(tape, &mut cur)?;
                let prop = tape.constant(seq.propagation.clone());
                let x = tape.constant(seq.collapsed_features());
                // activation is applied at the head input
                GcnLayer::forward(tape, gv, prop, x, false)?
            }
        };

        let f1 = self.head.fc1.vars(tape, &mut cur)?;
        let f2 = self.head.fc2.vars(tape, &mut cur)?;
        let f3 = self.head.fc3.vars(tape, &mut cur)?;
        cur.finish()?;
        self.head_forward(tape, [f1, f2, f3], body_out, &mut mode)
    }

    fn basis(&self, tape: &mut Tape, seq: &NormalizedSequence, prop: Var) -> Result<Propagation> {
        if self.config.chebyshev_order == 1 {
            return Ok(Propagation::Graph(vec![prop]));
        }
        let basis = chebyshev_basis(&seq.propagation, self.config.chebyshev_order)?;
        Ok(Propagation::from_basis(tape, &basis))
    }

    fn head_forward(
        &self,
        tape: &mut Tape,
        fc: [AffineVars; 3],
        x: Var,
        mode: &mut Mode<'_>,
    ) -> Result<Var> {
        let p = self.config.dropout;
        let a = tape.hardswish(x);
        let a = DenseLayer::forward(tape, fc[0], a)?;
        let a = tape.hardswish(a);
        let a = tape.dropout(a, p, mode.reborrow())?;
        let a = DenseLayer::forward(tape, fc[1], a)?;
        let a = tape.hardswish(a);
        let a = tape.dropout(a, p, mode.reborrow())?;
        DenseLayer::forward(tape, fc[2], a)
    }

    fn check_input(&self, seq: &NormalizedSequence) -> Result<()> {
        let n = seq.n_nodes();
        if seq.graphs.len() != self.config.time_steps {
            return Err(Error::Contract(format!(
                "{}: model expects {} time steps, sequence has {}",
                seq.source_id,
                self.config.time_steps,
                seq.graphs.len()
            )));
        }
        for g in &seq.graphs {
            if g.features.shape() != (n, FEATURES) {
                return Err(Error::dim("model input", g.features.shape(), (n, FEATURES)));
            }
        }
        if seq.targets.shape() != (n, self.config.outputs) {
            return Err(Error::dim(
                "model targets",
                seq.targets.shape(),
                (n, self.config.outputs),
            ));
        }
        Ok(())
    }

    /// Eval-mode prediction, also mapped back to pixels.
    pub fn predict(
        &self,
        seq: &NormalizedSequence,
        stats: &NormalizationStats,
    ) -> Result<ModelOutput> {
        let mut tape = Tape::new();
        let (_, out) = self.forward(&mut tape, seq, Mode::Eval)?;
        let predictions = tape.value(out).clone();
        if !predictions.all_finite() {
            return Err(Error::Numeric(format!(
                "non-finite prediction for {}",
                seq.source_id
            )));
        }
        let denormalized = stats.denormalize_targets(&predictions);
        Ok(ModelOutput {
            predictions,
            denormalized,
        })
    }

    /// Parameters with names, in registry order.
    pub fn registry(&self) -> Vec<(&str, (usize, usize))> {
        self.parameters()
            .into_iter()
            .map(|p| (p.name(), p.shape()))
            .collect()
    }

    pub fn parameter_tensors(&self) -> Vec<Tensor> {
        self.parameters()
            .into_iter()
            .map(|p| p.tensor().detached())
            .collect()
    }
}

impl Module for Model {
    fn parameters(&self) -> Vec<&Parameter> {
        let mut p = match &self.body {
            Body::Adaptive { evolve, cell } => {
                let mut v = evolve.parameters();
                v.extend(cell.parameters());
                v
            }
            Body::Recurrent { cell } | Body::Sequence { cell } => cell.parameters(),
            Body::Graph { gcn } => gcn.parameters(),
        };
        p.extend(self.head.fc1.parameters());
        p.extend(self.head.fc2.parameters());
        p.extend(self.head.fc3.parameters());
        p
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut p = match &mut self.body {
            Body::Adaptive { evolve, cell } => {
                let mut v = evolve.parameters_mut();
                v.extend(cell.parameters_mut());
                v
            }
            Body::Recurrent { cell } | Body::Sequence { cell } => cell.parameters_mut(),
            Body::Graph { gcn } => gcn.parameters_mut(),
        };
        p.extend(self.head.fc1.parameters_mut());
        p.extend(self.head.fc2.parameters_mut());
        p.extend(self.head.fc3.parameters_mut());
        p
    }
}

#[cfg(test)]
mod tests;
