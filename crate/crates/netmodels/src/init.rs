//! Parameter initialization.
//!
//! Weight tensors use He-normal draws, N(0, sqrt(2 / fan_in)), from a
//! counter-free ChaCha stream so a given seed always yields the same
//! parameters. Biases start at zero; batch-norm scales at one, shifts at
//! zero. Entry names encode the module: `f` backbone, `a` attention gate,
//! `c` classifier, `r` single representation encoder, `l`/`ab` the split
//! encoders, `au` auxiliary heads and decoders.

use diffcore::{ParamSet, Tensor};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::{AbpConfig, ConvStackConfig, EncoderConfig, HeadConfig, SplitBrainConfig, TaskNetConfig};
use crate::error::Result;

/// Draws a He-normal tensor with the given fan-in.
fn he_normal(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> Tensor {
    let std = (2.0 / fan_in as f64).sqrt();
    let dist = Normal::new(0.0, std).expect("positive std");
    Tensor::from_fn(shape, |_| dist.sample(rng))
        .expect("normal draws are finite")
        .with_requires_grad(true)
}

fn zeros(shape: &[usize]) -> Tensor {
    Tensor::zeros(shape).with_requires_grad(true)
}

fn ones(shape: &[usize]) -> Tensor {
    Tensor::ones(shape).with_requires_grad(true)
}

/// Convolution stack parameters under `{prefix}.b{i}.*`.
pub fn init_conv_stack(
    params: &mut ParamSet,
    prefix: &str,
    cfg: &ConvStackConfig,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    cfg.validate()?;
    let k = cfg.kernel;
    for i in 0..cfg.blocks {
        let cin = cfg.block_inputs(i);
        let cout = cfg.block_channels(i);
        let fan_in = k * k * cin;
        params.insert(
            format!("{prefix}.b{i}.conv.w"),
            he_normal(rng, &[k, k, cin, cout], fan_in),
        )?;
        params.insert(format!("{prefix}.b{i}.conv.b"), zeros(&[cout]))?;
        params.insert(format!("{prefix}.b{i}.bn.scale"), ones(&[1, 1, 1, cout]))?;
        params.insert(format!("{prefix}.b{i}.bn.shift"), zeros(&[1, 1, 1, cout]))?;
    }
    Ok(())
}

/// Channel-gate parameters under `{prefix}.conv.*`: a 1x1 convolution from
/// `channels` to `channels`, with optional bias.
pub fn init_attention(
    params: &mut ParamSet,
    prefix: &str,
    channels: usize,
    bias: bool,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    params.insert(
        format!("{prefix}.conv.w"),
        he_normal(rng, &[1, 1, channels, channels], channels),
    )?;
    if bias {
        params.insert(format!("{prefix}.conv.b"), zeros(&[channels]))?;
    }
    Ok(())
}

/// Classifier head parameters under `{prefix}.fc{i}.*`. Two-layer heads use
/// a hidden width equal to the input width.
pub fn init_fc_head(
    params: &mut ParamSet,
    prefix: &str,
    in_dim: usize,
    head: &HeadConfig,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    head.validate()?;
    let dims: Vec<(usize, usize)> = if head.layers == 1 {
        vec![(in_dim, head.ways)]
    } else {
        vec![(in_dim, in_dim), (in_dim, head.ways)]
    };
    for (i, (din, dout)) in dims.into_iter().enumerate() {
        params.insert(format!("{prefix}.fc{i}.w"), he_normal(rng, &[din, dout], din))?;
        params.insert(format!("{prefix}.fc{i}.b"), zeros(&[dout]))?;
    }
    Ok(())
}

/// Reconstruction decoder parameters under `{prefix}.d{1..4}.*`: conv k5,
/// two upsample+conv k3 stages, and a 1x1 projection to `out_channels`.
pub fn init_decoder(
    params: &mut ParamSet,
    prefix: &str,
    in_channels: usize,
    decoder_channels: (usize, usize, usize),
    out_channels: usize,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let (d1, d2, d3) = decoder_channels;
    let stages = [(5usize, in_channels, d1), (3, d1, d2), (3, d2, d3), (1, d3, out_channels)];
    for (i, (k, cin, cout)) in stages.into_iter().enumerate() {
        let fan_in = k * k * cin;
        params.insert(
            format!("{prefix}.d{}.w", i + 1),
            he_normal(rng, &[k, k, cin, cout], fan_in),
        )?;
        params.insert(format!("{prefix}.d{}.b", i + 1), zeros(&[cout]))?;
    }
    Ok(())
}

/// Full task network: backbone `f`, gate `a`, classifier `c`. Both gate
/// variants produce identical parameter names and shapes.
pub fn init_task_net(cfg: &TaskNetConfig, seed: u64) -> Result<ParamSet> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamSet::new();
    init_conv_stack(&mut params, "f", &cfg.stack, &mut rng)?;
    let (fh, fw, fc) = cfg.stack.feature_shape();
    init_attention(&mut params, "a", fc, cfg.attention_bias, &mut rng)?;
    init_fc_head(&mut params, "c", fh * fw * fc, &cfg.head, &mut rng)?;
    Ok(params)
}

/// Prediction module over frozen embeddings: gate `a` plus classifier `c`.
pub fn init_abp(cfg: &AbpConfig, seed: u64) -> Result<ParamSet> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamSet::new();
    init_attention(&mut params, "a", cfg.feature_dim, cfg.attention_bias, &mut rng)?;
    init_fc_head(&mut params, "c", cfg.feature_dim, &cfg.head, &mut rng)?;
    Ok(params)
}

/// Split-channel pretraining network: encoders `l` and `ab`, decoders
/// `au.l` (predicts the 2 color planes from lightness features) and
/// `au.ab` (predicts the lightness plane from color features).
pub fn init_split_brain(cfg: &SplitBrainConfig, seed: u64) -> Result<ParamSet> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamSet::new();
    let l_stack = cfg.branch_stack(1);
    let ab_stack = cfg.branch_stack(2);
    init_conv_stack(&mut params, "l", &l_stack, &mut rng)?;
    init_conv_stack(&mut params, "ab", &ab_stack, &mut rng)?;
    init_decoder(&mut params, "au.l", l_stack.out_channels, cfg.decoder_channels, 2, &mut rng)?;
    init_decoder(&mut params, "au.ab", ab_stack.out_channels, cfg.decoder_channels, 1, &mut rng)?;
    Ok(params)
}

/// Single representation encoder `r`, optionally with an autoencoding
/// decoder `au.d` back to the input channel count.
pub fn init_encoder(cfg: &EncoderConfig, with_decoder: bool, seed: u64) -> Result<ParamSet> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamSet::new();
    init_conv_stack(&mut params, "r", &cfg.stack, &mut rng)?;
    if with_decoder {
        init_decoder(
            &mut params,
            "au.d",
            cfg.stack.out_channels,
            cfg.decoder_channels,
            cfg.stack.input.2,
            &mut rng,
        )?;
    }
    Ok(params)
}

/// Supervised auxiliary classifier `au.fc` over pooled embeddings.
pub fn init_aux_head(feature_dim: usize, classes: usize, seed: u64) -> Result<ParamSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamSet::new();
    init_fc_head(
        &mut params,
        "au",
        feature_dim,
        &HeadConfig { layers: 1, ways: classes },
        &mut rng,
    )?;
    Ok(params)
}

/// A parameter-shaped set of inner-loop step sizes, every entry filled with
/// `alpha_init` and named `alpha/{weight name}`.
pub fn init_alpha(weights: &ParamSet, alpha_init: f64) -> ParamSet {
    let mut alpha = ParamSet::new();
    for (name, t) in weights.iter() {
        alpha
            .insert(
                format!("alpha/{name}"),
                Tensor::full(t.shape(), alpha_init).with_requires_grad(true),
            )
            .expect("weight names are unique");
    }
    alpha
}
