//! Model geometry configuration.

use crate::error::{ModelError, Result};

/// Geometry of a stack of convolution blocks. Each block is a 3x3-style
/// convolution (odd kernel, stride 1, same padding) with bias, batch norm,
/// ReLU and a ceil-mode 2x2 max pool, in an order chosen by
/// `bn_before_relu`. All blocks use `channels` filters except the last,
/// which uses `out_channels` so encoders can widen into their embedding
/// dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvStackConfig {
    /// Input image extents (height, width, channels).
    pub input: (usize, usize, usize),
    pub blocks: usize,
    pub channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub bn_before_relu: bool,
    pub bn_epsilon: f64,
}

impl ConvStackConfig {
    /// The classic few-shot backbone: four blocks of 64 filters.
    pub fn backbone(input: (usize, usize, usize)) -> Self {
        ConvStackConfig {
            input,
            blocks: 4,
            channels: 64,
            out_channels: 64,
            kernel: 3,
            bn_before_relu: true,
            bn_epsilon: 1e-5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (h, w, c) = self.input;
        if h == 0 || w == 0 || c == 0 {
            return Err(ModelError::Config(format!(
                "input extents must be positive, got {:?}",
                self.input
            )));
        }
        if self.blocks == 0 {
            return Err(ModelError::Config("conv stack needs at least one block".into()));
        }
        if self.channels == 0 || self.out_channels == 0 {
            return Err(ModelError::Config("channel counts must be positive".into()));
        }
        if self.kernel % 2 == 0 || self.kernel == 0 {
            return Err(ModelError::Config(format!(
                "kernel extent must be odd, got {}",
                self.kernel
            )));
        }
        if !(self.bn_epsilon > 0.0) {
            return Err(ModelError::Config(format!(
                "batch-norm epsilon must be positive, got {}",
                self.bn_epsilon
            )));
        }
        Ok(())
    }

    /// Filter count of block `i`.
    pub fn block_channels(&self, i: usize) -> usize {
        if i + 1 == self.blocks {
            self.out_channels
        } else {
            self.channels
        }
    }

    /// Input channel count of block `i`.
    pub fn block_inputs(&self, i: usize) -> usize {
        if i == 0 {
            self.input.2
        } else {
            self.block_channels(i - 1)
        }
    }

    /// Shape of the output feature map (h, w, c) after all blocks; each
    /// pool ceil-halves the spatial extents.
    pub fn feature_shape(&self) -> (usize, usize, usize) {
        let (mut h, mut w, _) = self.input;
        for _ in 0..self.blocks {
            h = h.div_ceil(2);
            w = w.div_ceil(2);
        }
        (h, w, self.out_channels)
    }
}

/// Classifier head: one plain linear layer, or two linear layers with a
/// ReLU between (hidden width equal to the input width).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadConfig {
    pub layers: usize,
    pub ways: usize,
}

impl HeadConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.layers == 1 || self.layers == 2) {
            return Err(ModelError::Config(format!(
                "classifier head supports 1 or 2 layers, got {}",
                self.layers
            )));
        }
        if self.ways < 2 {
            return Err(ModelError::Config(format!(
                "classifier needs at least 2 ways, got {}",
                self.ways
            )));
        }
        Ok(())
    }
}

/// How the channel-gating stage of the task network is realized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateVariant {
    /// Pooled features -> 1x1 convolution -> sigmoid -> per-channel mask
    /// multiplied back onto the feature map.
    Attention,
    /// Ablation: the same 1x1 convolution applied across the full feature
    /// map as an ordinary layer, with no sigmoid mask. Parameter shapes and
    /// counts are identical to `Attention`.
    PlainConv,
}

/// Full task-network configuration: backbone, gate, classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskNetConfig {
    pub stack: ConvStackConfig,
    pub attention_bias: bool,
    pub head: HeadConfig,
    pub variant: GateVariant,
}

impl TaskNetConfig {
    pub fn validate(&self) -> Result<()> {
        self.stack.validate()?;
        self.head.validate()
    }
}

/// Configuration for the prediction module that runs on frozen embedding
/// vectors instead of raw images: attention gate plus a two-layer head.
#[derive(Debug, Clone, PartialEq)]
pub struct AbpConfig {
    pub feature_dim: usize,
    pub attention_bias: bool,
    pub head: HeadConfig,
}

impl AbpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.feature_dim == 0 {
            return Err(ModelError::Config("feature dimension must be positive".into()));
        }
        self.head.validate()
    }
}

/// Split-channel self-supervised pretraining geometry. Two half-width
/// encoders (one over the lightness plane, one over the color planes), each
/// paired with a decoder that reconstructs the other's planes at a small
/// target resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitBrainConfig {
    /// Full-width encoder template; each branch runs at half `channels` and
    /// half `out_channels`, and the branch input channels are 1 (lightness)
    /// and 2 (color).
    pub stack: ConvStackConfig,
    /// Decoder widths for its three convolution stages.
    pub decoder_channels: (usize, usize, usize),
    /// Edge length of the square reconstruction target.
    pub recon_size: usize,
}

impl SplitBrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.stack.validate()?;
        if self.stack.input.2 != 3 {
            return Err(ModelError::Config(format!(
                "split-channel pretraining needs 3-channel input images, got {}",
                self.stack.input.2
            )));
        }
        if self.stack.channels % 2 != 0 || self.stack.out_channels % 2 != 0 {
            return Err(ModelError::Config(format!(
                "split-channel branches halve the widths; channels {} and out_channels {} must be even",
                self.stack.channels, self.stack.out_channels
            )));
        }
        let (d1, d2, d3) = self.decoder_channels;
        if d1 == 0 || d2 == 0 || d3 == 0 {
            return Err(ModelError::Config("decoder channels must be positive".into()));
        }
        if self.recon_size == 0 {
            return Err(ModelError::Config("reconstruction size must be positive".into()));
        }
        Ok(())
    }

    /// Embedding width after concatenating both branch feature maps.
    pub fn feature_dim(&self) -> usize {
        self.stack.out_channels
    }

    /// Encoder geometry of one branch.
    pub fn branch_stack(&self, input_channels: usize) -> ConvStackConfig {
        let mut s = self.stack.clone();
        s.input.2 = input_channels;
        s.channels /= 2;
        s.out_channels /= 2;
        s
    }
}

/// Single-encoder representation pretraining (supervised classification or
/// plain autoencoding).
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    pub stack: ConvStackConfig,
    /// Decoder geometry, used only by the autoencoder objective.
    pub decoder_channels: (usize, usize, usize),
    pub recon_size: usize,
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        self.stack.validate()?;
        let (d1, d2, d3) = self.decoder_channels;
        if d1 == 0 || d2 == 0 || d3 == 0 {
            return Err(ModelError::Config("decoder channels must be positive".into()));
        }
        if self.recon_size == 0 {
            return Err(ModelError::Config("reconstruction size must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backbone_defaults_match_the_classic_few_shot_setup() {
        let cfg = ConvStackConfig::backbone((28, 28, 1));
        assert_eq!(cfg.blocks, 4);
        assert_eq!(cfg.channels, 64);
        assert_eq!(cfg.feature_shape(), (2, 2, 64));
    }

    #[test]
    fn feature_shape_ceil_halves_odd_extents() {
        let mut cfg = ConvStackConfig::backbone((28, 28, 1));
        cfg.blocks = 2;
        assert_eq!(cfg.feature_shape(), (7, 7, 64));
        cfg.input = (7, 9, 1);
        assert_eq!(cfg.feature_shape(), (2, 3, 64));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = ConvStackConfig::backbone((28, 28, 1));
        cfg.kernel = 4;
        assert!(cfg.validate().is_err());
        let mut cfg = ConvStackConfig::backbone((28, 28, 1));
        cfg.blocks = 0;
        assert!(cfg.validate().is_err());
        assert!(HeadConfig { layers: 3, ways: 5 }.validate().is_err());
        assert!(HeadConfig { layers: 1, ways: 1 }.validate().is_err());
    }

    #[test]
    fn split_brain_branches_halve_widths() {
        let cfg = SplitBrainConfig {
            stack: ConvStackConfig {
                input: (28, 28, 3),
                blocks: 3,
                channels: 32,
                out_channels: 64,
                kernel: 3,
                bn_before_relu: true,
                bn_epsilon: 1e-5,
            },
            decoder_channels: (64, 32, 16),
            recon_size: 11,
        };
        cfg.validate().unwrap();
        let l = cfg.branch_stack(1);
        assert_eq!(l.input, (28, 28, 1));
        assert_eq!(l.channels, 16);
        assert_eq!(l.out_channels, 32);
        assert_eq!(cfg.feature_dim(), 64);
    }
}
