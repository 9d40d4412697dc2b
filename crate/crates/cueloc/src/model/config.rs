use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One stage of the shared convolutional tower.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TowerLayer {
    /// Valid (unpadded) square convolution, optionally followed by ReLU.
    Conv { kernel: usize, out_channels: usize, relu: bool },
    /// Channel-stacking of each 3x3 neighborhood (C -> 9C, spatial -2).
    Stack3x3,
}

/// Static description of the localizer network.
///
/// Every convolution is valid and stride 1, which is what makes the tower an
/// exact sliding-window machine: the feature vector at pixel (i, j) equals
/// the tower applied to the receptive-field-sized crop at (i, j).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureConfig {
    /// Side length of the square training canvas.
    pub input_size: usize,
    /// Image channels (3 for RGB scenes).
    pub input_channels: usize,
    pub tower: Vec<TowerLayer>,
    /// Hidden widths of the attention head; a final 1-channel layer is
    /// implied.
    pub attention_hidden: Vec<usize>,
    /// Hidden widths of the bottleneck scorer; a final `num_maps` layer is
    /// implied.
    pub scorer_hidden: Vec<usize>,
    /// Number of similarity score maps (k).
    pub num_maps: usize,
}

impl ArchitectureConfig {
    /// Reference network for the 150x150 canvas protocols.
    pub fn full() -> Self {
        ArchitectureConfig {
            input_size: 150,
            input_channels: 3,
            tower: vec![
                TowerLayer::Conv { kernel: 5, out_channels: 16, relu: true },
                TowerLayer::Conv { kernel: 3, out_channels: 32, relu: true },
                TowerLayer::Stack3x3,
                TowerLayer::Conv { kernel: 1, out_channels: 64, relu: true },
                TowerLayer::Conv { kernel: 1, out_channels: 64, relu: false },
            ],
            attention_hidden: vec![32],
            scorer_hidden: vec![32],
            num_maps: 16,
        }
    }

    /// Half-width network for the 64x64 desk-scale protocols.
    pub fn desk() -> Self {
        ArchitectureConfig {
            input_size: 64,
            input_channels: 3,
            tower: vec![
                TowerLayer::Conv { kernel: 5, out_channels: 8, relu: true },
                TowerLayer::Conv { kernel: 3, out_channels: 16, relu: true },
                TowerLayer::Stack3x3,
                TowerLayer::Conv { kernel: 1, out_channels: 32, relu: true },
                TowerLayer::Conv { kernel: 1, out_channels: 32, relu: false },
            ],
            attention_hidden: vec![16],
            scorer_hidden: vec![16],
            num_maps: 8,
        }
    }

    /// Small network for gradient checking and fast tests.
    pub fn tiny() -> Self {
        ArchitectureConfig {
            input_size: 24,
            input_channels: 3,
            tower: vec![
                TowerLayer::Conv { kernel: 5, out_channels: 4, relu: true },
                TowerLayer::Conv { kernel: 3, out_channels: 8, relu: true },
                TowerLayer::Stack3x3,
                TowerLayer::Conv { kernel: 1, out_channels: 8, relu: true },
                TowerLayer::Conv { kernel: 1, out_channels: 8, relu: false },
            ],
            attention_hidden: vec![4],
            scorer_hidden: vec![4],
            num_maps: 4,
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "full" => Ok(Self::full()),
            "desk" => Ok(Self::desk()),
            "tiny" => Ok(Self::tiny()),
            other => Err(Error::Config(format!(
                "unknown architecture preset '{other}' (expected full, desk, or tiny)"
            ))),
        }
    }

    /// Channel count entering each tower stage, plus the final count.
    fn channel_chain(&self) -> Vec<usize> {
        let mut chain = vec![self.input_channels];
        for layer in &self.tower {
            let c = *chain.last().expect("non-empty");
            chain.push(match layer {
                TowerLayer::Conv { out_channels, .. } => *out_channels,
                TowerLayer::Stack3x3 => 9 * c,
            });
        }
        chain
    }

    /// Output channels of the tower (C_f).
    pub fn feature_channels(&self) -> usize {
        *self.channel_chain().last().expect("non-empty")
    }

    /// Side length of the square receptive field of one feature pixel.
    pub fn receptive_field(&self) -> usize {
        1 + self
            .tower
            .iter()
            .map(|l| match l {
                TowerLayer::Conv { kernel, .. } => kernel - 1,
                TowerLayer::Stack3x3 => 2,
            })
            .sum::<usize>()
    }

    /// Feature-map side length for a given input side length.
    pub fn feature_size(&self, input: usize) -> Result<usize> {
        let rf = self.receptive_field();
        if input < rf {
            return Err(Error::shape(
                "feature_size",
                format!("input side {input} smaller than receptive field {rf}"),
            ));
        }
        Ok(input - rf + 1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |detail: String| Err(Error::Config(detail));
        if self.input_channels == 0 || self.input_size == 0 {
            return bad(format!(
                "input {}x{} with {} channels",
                self.input_size, self.input_size, self.input_channels
            ));
        }
        if self.tower.is_empty() {
            return bad("tower has no layers".into());
        }
        for layer in &self.tower {
            if let TowerLayer::Conv { kernel, out_channels, .. } = layer {
                if *kernel == 0 || *out_channels == 0 {
                    return bad(format!("conv layer with kernel {kernel}, {out_channels} channels"));
                }
            }
        }
        if self.num_maps == 0 {
            return bad("num_maps must be positive".into());
        }
        if self.attention_hidden.iter().chain(&self.scorer_hidden).any(|&w| w == 0) {
            return bad("zero-width head layer".into());
        }
        if self.feature_size(self.input_size).is_err() {
            return bad(format!(
                "input size {} smaller than receptive field {}",
                self.input_size,
                self.receptive_field()
            ));
        }
        Ok(())
    }
}
