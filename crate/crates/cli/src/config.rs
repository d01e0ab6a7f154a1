use std::path::{Path, PathBuf};

use icegnn::data::SyntheticConfig;
use icegnn::graph::{HaversineMode, SequenceConfig, DEFAULT_EPSILON_OFFSET};
use icegnn::models::{ModelConfig, ModelKind};
use icegnn::training::{Experiment, LrSchedule, TrainConfig};
use icegnn::{Error, Result};
use serde::{Deserialize, Serialize};

/// Everything a run needs, read from TOML. Unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelKind,
    pub haversine_mode: HaversineMode,
    pub epsilon_offset: f64,
    pub epochs: usize,
    pub lr: f64,
    pub lr_half_life: usize,
    pub dropout: f64,
    pub trials: usize,
    pub seed: u64,
    pub chebyshev_order: usize,
    pub hidden: usize,
    pub fc1: usize,
    pub fc2: usize,
    pub normalize_targets: bool,
    pub parallel: bool,
    pub min_layers: usize,
    pub paths: Paths,
    pub synthetic: SyntheticConfig,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub dataset: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let m = ModelConfig::default();
        let t = TrainConfig::default();
        Self {
            model: ModelKind::AgcnLstm,
            haversine_mode: HaversineMode::Paper,
            epsilon_offset: DEFAULT_EPSILON_OFFSET,
            epochs: t.epochs,
            lr: t.lr.initial,
            lr_half_life: t.lr.half_life_epochs,
            dropout: m.dropout,
            trials: 5,
            seed: 0,
            chebyshev_order: m.chebyshev_order,
            hidden: m.hidden,
            fc1: m.fc1,
            fc2: m.fc2,
            normalize_targets: t.normalize_targets,
            parallel: false,
            min_layers: icegnn::data::DEFAULT_MIN_LAYERS,
            paths: Paths::default(),
            synthetic: SyntheticConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// The configuration with run-location fields cleared, for echoing into
    /// artifacts that must not depend on where they were written.
    pub fn echo(&self) -> Self {
        Self {
            paths: Paths::default(),
            ..self.clone()
        }
    }

    pub fn sequence_config(&self) -> SequenceConfig {
        SequenceConfig {
            n_shallow: self.synthetic.n_shallow,
            n_deep: self.synthetic.n_deep,
            haversine_mode: self.haversine_mode,
            ..SequenceConfig::default()
        }
    }

    pub fn experiment(&self) -> Result<Experiment> {
        let model = ModelConfig {
            hidden: self.hidden,
            fc1: self.fc1,
            fc2: self.fc2,
            outputs: self.synthetic.n_deep,
            time_steps: self.synthetic.n_shallow,
            dropout: self.dropout,
            chebyshev_order: self.chebyshev_order,
        };
        model.validate()?;
        let train = TrainConfig {
            epochs: self.epochs,
            lr: LrSchedule {
                initial: self.lr,
                half_life_epochs: self.lr_half_life,
            },
            normalize_targets: self.normalize_targets,
        };
        train.validate()?;
        if self.trials == 0 {
            return Err(Error::Config("trials must be positive".into()));
        }
        if !(self.epsilon_offset > 0.0 && self.epsilon_offset < 0.5) {
            return Err(Error::Config(format!(
                "epsilon_offset {} outside (0, 0.5)",
                self.epsilon_offset
            )));
        }
        let mut exp = Experiment::new(self.model, model, train);
        exp.epsilon_offset = self.epsilon_offset;
        Ok(exp)
    }
}
