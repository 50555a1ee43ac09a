use std::path::{Path, PathBuf};

use lsenet::data::SynthConfig;
use lsenet::encodings::LocationMode;
use lsenet::model::{ModelConfig, SeasonalSetting};
use lsenet::train::TrainConfig;
use lsenet::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub synth: SynthConfig,
    /// Repetitions per month for the train and validation splits.
    pub train_per_month: usize,
    pub test_per_month: usize,
    /// Dataset directory used by `train` when `--data` is not given.
    #[serde(default)]
    pub dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

/// Command-line overrides applied on top of a config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub no_csu: bool,
    pub seasonal: Option<SeasonalSetting>,
    pub location: Option<LocationMode>,
    pub no_augment: bool,
    pub no_attention: bool,
}

impl RunConfig {
    pub fn desk() -> Self {
        let model = ModelConfig::desk();
        Self {
            data: DataConfig {
                synth: SynthConfig::benchmark(model.input_h, model.input_w, 0),
                train_per_month: 20,
                test_per_month: 5,
                dir: None,
            },
            model,
            train: TrainConfig { epochs: 25, ..TrainConfig::default() },
            output_dir: None,
        }
    }

    /// Parses a config file; JSON errors carry the line and column.
    pub fn load(path: &Path) -> Result<Self> {
        lsenet::io::read_json(path)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.train.seed = s;
            self.data.synth.seed = s;
        }
        if let Some(e) = o.epochs {
            self.train.epochs = e;
        }
        if o.no_csu {
            self.model.csu_enabled = false;
        }
        if let Some(s) = o.seasonal {
            self.model.seasonal_mode = s;
        }
        if let Some(l) = o.location {
            self.model.location_mode = l;
        }
        if o.no_augment {
            self.train.augment = lsenet::data::AugmentPolicy::NONE;
        }
        if o.no_attention {
            self.model.attention_enabled = false;
        }
    }

    /// Checks every section and the constraints between them.
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.data.synth.validate()?;
        let fail = |m: String| Err(Error::Validation(m));
        let s = &self.data.synth;
        if (s.grid_h, s.grid_w) != (self.model.input_h, self.model.input_w) {
            return fail(format!(
                "data grid {}×{} differs from the model input {}×{}",
                s.grid_h, s.grid_w, self.model.input_h, self.model.input_w
            ));
        }
        if s.num_classes() > self.model.num_classes {
            return fail(format!(
                "data has {} classes but the model only {}",
                s.num_classes(),
                self.model.num_classes
            ));
        }
        if self.data.train_per_month == 0 || self.data.test_per_month == 0 {
            return fail("data.train_per_month and data.test_per_month must be positive".into());
        }
        if 12 * self.data.train_per_month < 2 {
            return fail("too few training samples for a validation split".into());
        }
        Ok(())
    }
}
