use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::optim::{adam_step, lr_at_epoch, AdamState, LrSchedule};
use crate::autodiff::{Fault, Mode, Tape, Tensor};
use crate::error::{Error, Result};
use crate::graph::{NormalizationStats, NormalizedSequence};
use crate::models::Model;
use crate::nn::Module;
use crate::rng::stream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: LrSchedule,
    /// Train on z-scored targets (true) or raw pixels (false).
    pub normalize_targets: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            lr: LrSchedule::default(),
            normalize_targets: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        self.lr.validate()
    }
}

/// Loss and gradients for one sequence, gradients left on the parameters.
/// Returns the MSE.
pub fn loss_and_grads(
    model: &mut Model,
    seq: &NormalizedSequence,
    mode: Mode<'_>,
    fault: Option<Fault>,
) -> Result<f64> {
    let mut tape = Tape::with_fault(fault);
    let vars = model.bind(&mut tape);
    let pred = model.forward_bound(&mut tape, &vars, seq, mode)?;
    let target = tape.constant(seq.targets.clone());
    let loss = tape.mse(pred, target)?;
    let value = tape.value(loss).item()?;
    if !value.is_finite() {
        return Err(Error::Numeric(format!("loss is {value}")));
    }
    tape.backward(loss)?;
    model.collect_grads(&tape, &vars)?;
    Ok(value)
}

/// Trains in place with one Adam step per sequence and returns the mean
/// training loss of every epoch. The final weights are kept.
///
/// Epoch `e` visits sequences in an order drawn from
/// `stream(seed, "shuffle", e)`; dropout masks come from
/// `stream(seed, "dropout", e)`.
pub fn train_model(
    model: &mut Model,
    train: &[NormalizedSequence],
    cfg: &TrainConfig,
    seed: u64,
    fault: Option<Fault>,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::invalid("no training sequences"));
    }
    let mut adam = AdamState::new(model.parameters());
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut stream(seed, "shuffle", epoch as u64));
        let mut drop_rng = stream(seed, "dropout", epoch as u64);
        let lr = lr_at_epoch(epoch, &cfg.lr);
        let mut total = 0.0;
        for &i in &order {
            let seq = &train[i];
            let step = loss_and_grads(model, seq, Mode::Train(&mut drop_rng), fault)
                .and_then(|loss| adam_step(model.parameters_mut(), &mut adam, lr).map(|_| loss));
            total += step.map_err(|e| with_context(e, epoch, &seq.source_id))?;
        }
        let mean = total / train.len() as f64;
        log::debug!("{} epoch {epoch}: mse {mean}", model.kind());
        curve.push(mean);
    }
    model.zero_grads();
    Ok(curve)
}

fn with_context(e: Error, epoch: usize, id: &str) -> Error {
    match e {
        Error::Numeric(m) => Error::Numeric(format!("epoch {epoch}, sequence {id}: {m}")),
        other => other,
    }
}

/// RMSE in pixels, per target column and pooled over all columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RmseReport {
    pub per_layer: Vec<f64>,
    pub total: f64,
}

/// Pools squared residuals over every node of every prediction/truth pair.
pub fn rmse(predictions: &[Tensor], truths: &[Tensor]) -> Result<RmseReport> {
    if predictions.is_empty() {
        return Err(Error::invalid("RMSE over an empty set"));
    }
    if predictions.len() != truths.len() {
        return Err(Error::invalid("prediction and truth counts differ"));
    }
    let cols = truths[0].cols();
    let mut sq = vec![0.0; cols];
    let mut count = 0usize;
    for (p, t) in predictions.iter().zip(truths) {
        if p.shape() != t.shape() || t.cols() != cols {
            return Err(Error::dim("rmse", p.shape(), t.shape()));
        }
        for r in 0..t.rows() {
            for (c, (a, b)) in p.row(r).iter().zip(t.row(r)).enumerate() {
                sq[c] += (a - b) * (a - b);
            }
        }
        count += t.rows();
    }
    let total = (sq.iter().sum::<f64>() / (count * cols) as f64).sqrt();
    let per_layer = sq.iter().map(|s| (s / count as f64).sqrt()).collect();
    Ok(RmseReport { per_layer, total })
}

/// Eval-mode RMSE of `model` on `test`, in pixels.
pub fn evaluate_rmse(
    model: &Model,
    test: &[NormalizedSequence],
    stats: &NormalizationStats,
) -> Result<RmseReport> {
    if test.is_empty() {
        return Err(Error::invalid("empty test set"));
    }
    let mut preds = Vec::with_capacity(test.len());
    let mut truths = Vec::with_capacity(test.len());
    for seq in test {
        preds.push(model.predict(seq, stats)?.denormalized);
        truths.push(seq.raw_targets.clone());
    }
    rmse(&preds, &truths)
}
