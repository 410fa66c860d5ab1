//! Network definitions for the few-shot learning stack.
//!
//! Four families of machinery live here:
//!
//! * **Configs** describing convolutional backbones, channel-attention
//!   gates, classifier heads and split-channel encoder/decoder pairs, with
//!   shape arithmetic (`feature_shape`) done once and validated up front.
//! * **Initializers** that lay out every weight tensor under a stable
//!   dotted naming scheme (`f.b0.conv.w`, `a.conv.w`, `c.fc0.b`, ...),
//!   fan-in-scaled and deterministic in the seed.
//! * **Forward builders** that extend a [`diffcore::Graph`] with the
//!   corresponding computations. Builders are agnostic about whether the
//!   weights were declared as trainable parameters or baked-in constants,
//!   which is how frozen-encoder training reuses the same code.
//! * **Color support** (sRGB to Lab) and the [`RepresentationHandle`]
//!   wrapper that seals pretrained encoder weights behind a
//!   features-only interface.

mod color;
mod config;
mod error;
mod forward;
mod init;
mod repr;

pub use color::{normalize_lab, rgb8_to_lab, split_lab_planes, srgb_to_lab};
pub use config::{
    AbpConfig, ConvStackConfig, EncoderConfig, GateVariant, HeadConfig, SplitBrainConfig,
    TaskNetConfig,
};
pub use error::{ModelError, Result};
pub use forward::{
    abp_forward, attention_forward, attention_gate, conv_stack, decoder_forward, fc_head,
    split_brain_forward, task_net_forward, AbpNodes, MaskSource, NodeMap, SplitBrainNodes,
    TaskNetNodes,
};
pub use init::{
    init_abp, init_alpha, init_aux_head, init_encoder, init_split_brain, init_task_net,
};
pub use repr::{ReprMode, RepresentationHandle};
