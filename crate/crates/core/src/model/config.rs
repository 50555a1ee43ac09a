use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::encodings::{LocationMode, SeasonalMode};
use crate::error::{Error, Result};

/// Seasonal input of the channel supervision units.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeasonalSetting {
    Month,
    Season,
    Off,
}

impl SeasonalSetting {
    pub fn mode(self) -> Option<SeasonalMode> {
        match self {
            SeasonalSetting::Month => Some(SeasonalMode::Month),
            SeasonalSetting::Season => Some(SeasonalMode::Season),
            SeasonalSetting::Off => None,
        }
    }

    /// Length of the one-hot vector appended inside each CSU.
    pub fn code_len(self) -> usize {
        self.mode().map_or(0, SeasonalMode::len)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub input_h: usize,
    pub input_w: usize,
    #[serde(default = "default_in_channels")]
    pub in_channels: usize,
    /// Encoder widths; the last stage is the unpooled bottleneck.
    pub widths: Vec<usize>,
    pub num_classes: usize,
    /// Downsampling factor of the location-attention grid.
    pub attention_r: usize,
    pub seasonal_mode: SeasonalSetting,
    pub location_mode: LocationMode,
    #[serde(default = "default_attention_blocks")]
    pub attention_blocks: usize,
    pub csu_enabled: bool,
    pub attention_enabled: bool,
}

fn default_in_channels() -> usize {
    3
}

fn default_attention_blocks() -> usize {
    2
}

impl ModelConfig {
    /// Full-size network: 352×352 input, widths 64…1024, 12 classes, r = 11.
    pub fn paper() -> Self {
        Self {
            input_h: 352,
            input_w: 352,
            in_channels: 3,
            widths: vec![64, 128, 256, 512, 1024],
            num_classes: 12,
            attention_r: 11,
            seasonal_mode: SeasonalSetting::Month,
            location_mode: LocationMode::Pe2d,
            attention_blocks: 2,
            csu_enabled: true,
            attention_enabled: true,
        }
    }

    /// Default experiment size on an 88×88 grid.
    pub fn desk() -> Self {
        Self { input_h: 88, input_w: 88, widths: vec![16, 32, 64, 128], ..Self::paper() }
    }

    /// Smallest configuration with all five stages, used for gradient checks.
    pub fn toy() -> Self {
        Self { input_h: 16, input_w: 16, widths: vec![4, 8, 8, 8, 8], attention_r: 4, ..Self::paper() }
    }

    /// The same network with the channel supervision units and location attention removed.
    pub fn basenet(&self) -> Self {
        Self { csu_enabled: false, attention_enabled: false, ..self.clone() }
    }

    pub fn stages(&self) -> usize {
        self.widths.len()
    }

    pub fn attention_grid(&self) -> (usize, usize) {
        (self.input_h / self.attention_r, self.input_w / self.attention_r)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Validation(msg));
        if self.in_channels == 0 {
            return fail("model.in_channels must be positive".into());
        }
        if self.widths.is_empty() {
            return fail("model.widths must list at least one stage".into());
        }
        if let Some(w) = self.widths.iter().find(|&&w| w < 2 || w % 2 != 0) {
            return fail(format!("model.widths entries must be even and ≥ 2, got {w}"));
        }
        if !(2..=256).contains(&self.num_classes) {
            return fail(format!("model.num_classes must be in 2..=256, got {}", self.num_classes));
        }
        let down = 1usize << (self.stages() - 1);
        for (name, v) in [("input_h", self.input_h), ("input_w", self.input_w)] {
            if v == 0 || v % down != 0 {
                return fail(format!(
                    "model.{name} = {v} must be a positive multiple of 2^(stages-1) = {down}"
                ));
            }
            if self.attention_enabled && (self.attention_r == 0 || v % self.attention_r != 0) {
                return fail(format!(
                    "model.{name} = {v} must be divisible by attention_r = {}",
                    self.attention_r
                ));
            }
        }
        if self.attention_enabled
            && self.location_mode == LocationMode::Pe2d
            && self.widths[0] % 4 != 0
        {
            return fail(format!(
                "pe2d location encoding needs widths[0] divisible by 4, got {}",
                self.widths[0]
            ));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form; checkpoints record it to refuse
    /// loading into a different architecture.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}
