//! Frozen representation encoders.
//!
//! After pretraining, the encoder weights are sealed inside a
//! [`RepresentationHandle`]. Downstream training only ever sees the handle's
//! [`features`](RepresentationHandle::features) output; the weights enter
//! every graph as constants, so no gradient can reach them and the stored
//! tensors stay bit-identical for the life of the handle.

use diffcore::{Graph, ParamSet, Tensor};

use crate::color::split_lab_planes;
use crate::config::{ConvStackConfig, SplitBrainConfig};
use crate::error::{ModelError, Result};
use crate::forward::{conv_stack, NodeMap};

/// Which pretraining objective produced the encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReprMode {
    /// Plain supervised classification on the training classes.
    Supervised,
    /// Cross-channel prediction with split L / ab encoders.
    SplitBrain,
    /// Image reconstruction through a decoder.
    Autoencoder,
}

impl ReprMode {
    pub fn name(self) -> &'static str {
        match self {
            ReprMode::Supervised => "supervised",
            ReprMode::SplitBrain => "splitbrain",
            ReprMode::Autoencoder => "autoencoder",
        }
    }
}

#[derive(Debug, Clone)]
enum Encoder {
    /// Single stack under the `r` prefix.
    Single(ConvStackConfig),
    /// Paired half-width stacks under `l` / `ab`, fed Lab planes.
    Split(SplitBrainConfig),
}

/// A pretrained encoder with immutable weights.
#[derive(Debug, Clone)]
pub struct RepresentationHandle {
    mode: ReprMode,
    encoder: Encoder,
    weights: ParamSet,
}

impl RepresentationHandle {
    /// Wraps a supervised-pretrained stack (weights under `r.*`).
    pub fn supervised(stack: ConvStackConfig, weights: ParamSet) -> Result<Self> {
        stack.validate()?;
        Ok(RepresentationHandle { mode: ReprMode::Supervised, encoder: Encoder::Single(stack), weights })
    }

    /// Wraps an autoencoder-pretrained stack (weights under `r.*`; any
    /// decoder weights in `weights` are simply never used).
    pub fn autoencoder(stack: ConvStackConfig, weights: ParamSet) -> Result<Self> {
        stack.validate()?;
        Ok(RepresentationHandle { mode: ReprMode::Autoencoder, encoder: Encoder::Single(stack), weights })
    }

    /// Wraps split-channel encoders (weights under `l.*` and `ab.*`).
    pub fn split_brain(cfg: SplitBrainConfig, weights: ParamSet) -> Result<Self> {
        cfg.validate()?;
        Ok(RepresentationHandle { mode: ReprMode::SplitBrain, encoder: Encoder::Split(cfg), weights })
    }

    pub fn mode(&self) -> ReprMode {
        self.mode
    }

    /// Length of the pooled feature vector this handle produces.
    pub fn feature_dim(&self) -> usize {
        match &self.encoder {
            Encoder::Single(stack) => stack.out_channels,
            Encoder::Split(cfg) => cfg.feature_dim(),
        }
    }

    /// Read-only view of the frozen weights (for checkpointing).
    pub fn weights(&self) -> &ParamSet {
        &self.weights
    }

    /// Embeds an image batch into pooled feature vectors (b,1,1,dim).
    ///
    /// For split-channel encoders the batch must be (b,h,w,3) sRGB in unit
    /// range; it is converted to Lab planes internally. Single encoders
    /// take whatever channel count their stack was configured with.
    pub fn features(&self, images: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let weights = NodeMap::constants(&mut g, &self.weights)?;
        let pooled = match &self.encoder {
            Encoder::Single(stack) => {
                let s = images.shape();
                if s.len() != 4 || s[3] != stack.input.2 {
                    return Err(ModelError::Config(format!(
                        "encoder expects {} input channels, got shape {:?}",
                        stack.input.2, s
                    )));
                }
                let x = g.constant(images.clone());
                let map = conv_stack(&mut g, x, &weights, "r", stack)?;
                g.global_avg_pool(map)?
            }
            Encoder::Split(cfg) => {
                let (l, ab) = split_lab_planes(images)?;
                let l_in = g.constant(l);
                let ab_in = g.constant(ab);
                let l_map = conv_stack(&mut g, l_in, &weights, "l", &cfg.branch_stack(1))?;
                let ab_map = conv_stack(&mut g, ab_in, &weights, "ab", &cfg.branch_stack(2))?;
                let joined = g.concat(&[l_map, ab_map], 3)?;
                g.global_avg_pool(joined)?
            }
        };
        Ok(g.eval(pooled, &ParamSet::new())?)
    }
}
