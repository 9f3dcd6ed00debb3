use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape hyperparameters of the expansion network.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Raw feature channels `d` (power excluded).
    pub input_dim: usize,
    pub lookback: usize,
    pub horizon: usize,
    /// Hidden channel width `d_v`; also the time-expansion layer size.
    pub hidden: usize,
    pub stacks: usize,
    pub conv_channels: usize,
    pub kernel_size: usize,
    pub heads: usize,
    pub embed_month: usize,
    pub embed_weekday: usize,
    pub embed_hour: usize,
}

impl ModelConfig {
    /// Full-size defaults: 5 stacks, 128 conv channels, width 512, 8 heads.
    pub fn new(input_dim: usize, lookback: usize, horizon: usize) -> Self {
        ModelConfig {
            input_dim,
            lookback,
            horizon,
            hidden: 512,
            stacks: 5,
            conv_channels: 128,
            kernel_size: 3,
            heads: 8,
            embed_month: 4,
            embed_weekday: 4,
            embed_hour: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("input_dim", self.input_dim),
            ("lookback", self.lookback),
            ("horizon", self.horizon),
            ("hidden", self.hidden),
            ("stacks", self.stacks),
            ("conv_channels", self.conv_channels),
            ("kernel_size", self.kernel_size),
            ("heads", self.heads),
            ("embed_month", self.embed_month),
            ("embed_weekday", self.embed_weekday),
            ("embed_hour", self.embed_hour),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("model.{name} must be at least 1")));
            }
        }
        if self.kernel_size % 2 == 0 {
            return Err(Error::Config(format!(
                "model.kernel_size must be odd, got {}",
                self.kernel_size
            )));
        }
        if self.hidden % self.heads != 0 {
            return Err(Error::Config(format!(
                "model.hidden ({}) must be divisible by model.heads ({})",
                self.hidden, self.heads
            )));
        }
        Ok(())
    }

    /// Width of the concatenated per-step input before the final projection.
    pub(crate) fn embed_input_width(&self) -> usize {
        self.conv_channels + self.embed_month + self.embed_weekday + self.embed_hour
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = ModelConfig::new(5, 24, 24);
        assert_eq!((c.stacks, c.conv_channels, c.hidden, c.heads), (5, 128, 512, 8));
        c.validate().unwrap();
    }

    #[test]
    fn rejects_bad_shapes() {
        let mut c = ModelConfig::new(3, 8, 4);
        c.hidden = 10;
        c.heads = 4;
        assert!(matches!(c.validate(), Err(Error::Config(m)) if m.contains("divisible")));
        let mut c = ModelConfig::new(3, 8, 4);
        c.kernel_size = 4;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::new(3, 8, 4);
        c.stacks = 0;
        assert!(c.validate().is_err());
    }
}
