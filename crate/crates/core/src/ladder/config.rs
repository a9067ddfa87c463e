use crate::error::{Error, Result};
use crate::tensor::ops::BatchNormOptions;

#[derive(Clone, Debug, PartialEq)]
pub struct LadderConfig {
    /// Spatial levels, named A, B, C, ... from full resolution down.
    pub levels: usize,
    /// Encoder-decoder (U-Net) pairs chained side by side.
    pub pairs: usize,
    pub base_channels: usize,
    pub dropout_rate: f64,
    pub in_channels: usize,
    pub num_classes: usize,
    pub batch_norm: BatchNormOptions,
}

impl Default for LadderConfig {
    /// Five levels, two pairs, ten base channels, dropout 0.25, grayscale in, two classes out.
    fn default() -> Self {
        Self {
            levels: 5,
            pairs: 2,
            base_channels: 10,
            dropout_rate: 0.25,
            in_channels: 1,
            num_classes: 2,
            batch_norm: BatchNormOptions::default(),
        }
    }
}

impl LadderConfig {
    pub fn small(levels: usize, pairs: usize, base_channels: usize) -> Self {
        Self { levels, pairs, base_channels, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |detail: String| Err(Error::invalid("ladder_config", detail));
        if self.levels < 2 || self.levels > 26 {
            return bad(format!("levels {} outside 2..=26", self.levels));
        }
        if self.pairs < 1 {
            return bad("pairs must be at least 1".into());
        }
        if self.base_channels < 1 || self.in_channels < 1 || self.num_classes < 2 {
            return bad(format!(
                "base_channels {}, in_channels {}, num_classes {}",
                self.base_channels, self.in_channels, self.num_classes
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout_rate));
        }
        Ok(())
    }

    /// Channels at `level`: doubled from one level to the next.
    pub fn channels(&self, level: usize) -> usize {
        self.base_channels << level
    }

    pub fn columns(&self) -> usize {
        2 * self.pairs
    }

    /// Input height and width must be multiples of this.
    pub fn size_multiple(&self) -> usize {
        1 << (self.levels - 1)
    }
}

pub fn level_letter(level: usize) -> char {
    (b'A' + level as u8) as char
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_channels_double_per_level() {
        let c = LadderConfig::default();
        let ch: Vec<usize> = (0..c.levels).map(|l| c.channels(l)).collect();
        assert_eq!(ch, vec![10, 20, 40, 80, 160]);
        assert_eq!(c.columns(), 4);
        assert_eq!(c.size_multiple(), 16);
    }

    #[test]
    fn validation() {
        assert!(LadderConfig::default().validate().is_ok());
        assert!(LadderConfig::small(1, 1, 4).validate().is_err());
        assert!(LadderConfig::small(3, 0, 4).validate().is_err());
        assert!(LadderConfig { dropout_rate: 1.0, ..Default::default() }.validate().is_err());
    }
}
