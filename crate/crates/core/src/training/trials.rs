use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::train::{evaluate_rmse, train_model, TrainConfig};
use crate::autodiff::Fault;
use crate::error::{Error, Result};
use crate::graph::{
    apply_feature_normalization, compute_stats, NormalizationStats, NormalizedSequence,
    TemporalGraphSequence, DEFAULT_EPSILON_OFFSET,
};
use crate::models::{Model, ModelConfig, ModelKind};
use crate::rng::{seeded, stream};

pub const REPORT_VERSION: u32 = 1;
pub const MIN_SEQUENCES: usize = 5;

/// Indices of one train/test split.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// `round(0.8·n)`, computed exactly.
pub fn train_count(n: usize) -> usize {
    (8 * n + 5) / 10
}

/// Seeded permutation of `0..n`, first `round(0.8·n)` entries for training.
pub fn split_indices(n: usize, seed: u64) -> Result<Split> {
    if n < MIN_SEQUENCES {
        return Err(Error::invalid(format!(
            "{n} sequences, at least {MIN_SEQUENCES} required for a 4:1 split"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut seeded(seed));
    let test = perm.split_off(train_count(n));
    Ok(Split { train: perm, test })
}

/// Hex sha256 of the training ids followed by the test ids.
pub fn split_hash<'a>(
    train: impl IntoIterator<Item = &'a str>,
    test: impl IntoIterator<Item = &'a str>,
) -> String {
    let mut h = Sha256::new();
    h.update(b"train\n");
    for id in train {
        h.update(id.as_bytes());
        h.update(b"\n");
    }
    h.update(b"test\n");
    for id in test {
        h.update(id.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub trial: usize,
    pub seed: u64,
    pub model: ModelKind,
    pub n_train: usize,
    pub n_test: usize,
    pub split_hash: String,
    pub per_layer_rmse: Vec<f64>,
    pub total_rmse: f64,
    pub loss_curve: Vec<f64>,
}

/// A finished trial with the weights and statistics it produced.
#[derive(Clone, Debug)]
pub struct TrialOutcome {
    pub report: TrialReport,
    pub model: Model,
    pub stats: NormalizationStats,
}

/// Mean and sample standard deviation; a single value has deviation 0.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub version: u32,
    pub model: ModelKind,
    pub base_seed: u64,
    pub total_rmse_mean: f64,
    pub total_rmse_std: f64,
    pub per_layer_mean: Vec<f64>,
    pub per_layer_std: Vec<f64>,
    /// Target year of each per-layer column.
    pub target_years: Vec<i32>,
    pub trials: Vec<TrialReport>,
}

impl TrialSummary {
    pub fn from_reports(
        model: ModelKind,
        base_seed: u64,
        target_years: Vec<i32>,
        trials: Vec<TrialReport>,
    ) -> Result<Self> {
        if trials.is_empty() {
            return Err(Error::invalid("summary of zero trials"));
        }
        let totals: Vec<f64> = trials.iter().map(|t| t.total_rmse).collect();
        let (total_rmse_mean, total_rmse_std) = mean_std(&totals);
        let layers = trials[0].per_layer_rmse.len();
        let (per_layer_mean, per_layer_std) = (0..layers)
            .map(|k| {
                let col: Vec<f64> = trials.iter().map(|t| t.per_layer_rmse[k]).collect();
                mean_std(&col)
            })
            .unzip();
        Ok(Self {
            version: REPORT_VERSION,
            model,
            base_seed,
            total_rmse_mean,
            total_rmse_std,
            per_layer_mean,
            per_layer_std,
            target_years,
            trials,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}

/// Two-column CSV of a loss curve.
pub fn loss_curve_csv(curve: &[f64]) -> String {
    let mut out = String::from("epoch,mse\n");
    for (e, v) in curve.iter().enumerate() {
        out.push_str(&format!("{e},{v}\n"));
    }
    out
}

/// Everything that defines a trial apart from its data and seed.
#[derive(Clone, Debug, PartialEq)]
pub struct Experiment {
    pub kind: ModelKind,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub epsilon_offset: f64,
    pub fault: Option<Fault>,
}

impl Experiment {
    pub fn new(kind: ModelKind, model: ModelConfig, train: TrainConfig) -> Self {
        Self {
            kind,
            model,
            train,
            epsilon_offset: DEFAULT_EPSILON_OFFSET,
            fault: None,
        }
    }
}

/// Runs one trial: split with `seed`, fit statistics on the training part,
/// train a fresh model and evaluate on the held-out part.
pub fn run_trial(
    data: &[TemporalGraphSequence],
    exp: &Experiment,
    trial: usize,
    seed: u64,
) -> Result<TrialOutcome> {
    let split = split_indices(data.len(), seed)?;
    let train_raw: Vec<TemporalGraphSequence> =
        split.train.iter().map(|&i| data[i].clone()).collect();
    let mut stats = compute_stats(&train_raw, exp.epsilon_offset)?;
    if !exp.train.normalize_targets {
        stats = stats.with_identity_targets();
    }
    let normalize = |idx: &[usize]| -> Result<Vec<NormalizedSequence>> {
        idx.iter()
            .map(|&i| apply_feature_normalization(&data[i], &stats))
            .collect()
    };
    let train = normalize(&split.train)?;
    let test = normalize(&split.test)?;

    let mut model = Model::new(exp.kind, exp.model.clone(), &mut stream(seed, "init", 0))?;
    let context = |e: Error| match e {
        Error::Numeric(m) => Error::Numeric(format!("trial {trial} (seed {seed}): {m}")),
        other => other,
    };
    let loss_curve =
        train_model(&mut model, &train, &exp.train, seed, exp.fault).map_err(context)?;
    let rmse = evaluate_rmse(&model, &test, &stats).map_err(context)?;

    let report = TrialReport {
        trial,
        seed,
        model: exp.kind,
        n_train: train.len(),
        n_test: test.len(),
        split_hash: split_hash(
            split.train.iter().map(|&i| data[i].source_id.as_str()),
            split.test.iter().map(|&i| data[i].source_id.as_str()),
        ),
        per_layer_rmse: rmse.per_layer,
        total_rmse: rmse.total,
        loss_curve,
    };
    Ok(TrialOutcome {
        report,
        model,
        stats,
    })
}

/// Trial `i` uses seed `base_seed + i`. With `parallel`, trials run on scoped
/// threads; results are identical either way.
pub fn run_trials(
    data: &[TemporalGraphSequence],
    exp: &Experiment,
    n_trials: usize,
    base_seed: u64,
    parallel: bool,
) -> Result<(TrialSummary, Vec<TrialOutcome>)> {
    if n_trials == 0 {
        return Err(Error::Config("n_trials must be positive".into()));
    }
    if data.len() < MIN_SEQUENCES {
        return Err(Error::invalid(format!(
            "{} sequences, at least {MIN_SEQUENCES} required",
            data.len()
        )));
    }
    let one = |i: usize| run_trial(data, exp, i, base_seed.wrapping_add(i as u64));
    let outcomes: Vec<TrialOutcome> = if parallel {
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..n_trials).map(|i| s.spawn(move || one(i))).collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("trial thread panicked"))
                .collect::<Result<_>>()
        })?
    } else {
        (0..n_trials).map(one).collect::<Result<_>>()?
    };
    let summary = TrialSummary::from_reports(
        exp.kind,
        base_seed,
        data[0].target_years.clone(),
        outcomes.iter().map(|o| o.report.clone()).collect(),
    )?;
    Ok((summary, outcomes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_sizes_for_703_records() {
        let s = split_indices(703, 1).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (562, 141));
        let s = split_indices(5, 1).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (4, 1));
        assert!(split_indices(4, 1).is_err());
    }

    #[test]
    fn two_point_statistics() {
        let (m, s) = mean_std(&[2.0, 4.0]);
        assert_eq!(m, 3.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn hash_depends_on_side() {
        assert_ne!(split_hash(["a"], ["b"]), split_hash(["b"], ["a"]));
        assert_ne!(split_hash(["a", "b"], []), split_hash(["a"], ["b"]));
    }

    #[test]
    fn csv_layout() {
        assert_eq!(loss_curve_csv(&[0.5, 0.25]), "epoch,mse\n0,0.5\n1,0.25\n");
    }
}
