//! Representation pretraining: ordinary minibatch gradient descent on one
//! of three self-contained objectives, producing a frozen
//! [`RepresentationHandle`] for downstream adaptation over embeddings.

use diffcore::{Graph, NodeId, ParamSet, Tensor};
use episodes::{
    derive_rng, derive_seed, one_hot, stack_images, DatasetHandle, STREAM_INIT, STREAM_PRETRAIN,
};
use netmodels::{
    conv_stack, decoder_forward, fc_head, init_aux_head, init_encoder, init_split_brain,
    split_brain_forward, split_lab_planes, EncoderConfig, HeadConfig, MaskSource, NodeMap,
    RepresentationHandle, SplitBrainConfig,
};
use rand::Rng;

use crate::config::{PretrainConfig, PretrainObjective};
use crate::error::{MetaError, Result};
use crate::meta::apply_regularization;
use crate::task::accuracy;

/// Network layout for pretraining: one shared encoder, or the two-branch
/// cross-channel pair.
#[derive(Debug, Clone)]
pub enum PretrainNetwork {
    /// Single encoder `r.*` (classification and autoencoding objectives).
    Single(EncoderConfig),
    /// Lightness/color branch pair with cross decoders.
    Split(SplitBrainConfig),
}

/// What a pretraining run produced.
#[derive(Debug)]
pub struct PretrainOutcome {
    /// Frozen encoder ready to embed images.
    pub handle: RepresentationHandle,
    /// Every trained weight, including heads and decoders the handle
    /// does not carry (kept for checkpointing).
    pub params: ParamSet,
    /// Raw objective value per iteration, measured before the update.
    pub losses: Vec<f64>,
    /// Training-batch accuracy per iteration (classification objective
    /// only; empty otherwise).
    pub accuracies: Vec<f64>,
}

fn draw_batch(
    dataset: &DatasetHandle,
    rng: &mut rand_chacha::ChaCha8Rng,
    batch_size: usize,
) -> Result<(Tensor, Vec<usize>)> {
    let mut images = Vec::with_capacity(batch_size);
    let mut labels = Vec::with_capacity(batch_size);
    for _ in 0..batch_size {
        let class = rng.random_range(0..dataset.class_count());
        let index = rng.random_range(0..dataset.class_len(class));
        images.push(dataset.image(class, index)?);
        labels.push(class);
    }
    Ok((stack_images(&images)?, labels))
}

/// Trains the representation from scratch on the dataset. Initialization
/// and batch order derive from `seed`; a zero-iteration run returns the
/// untouched initialization, which is how random-encoder baselines are
/// produced.
pub fn pretrain(
    dataset: &DatasetHandle,
    network: &PretrainNetwork,
    cfg: &PretrainConfig,
    seed: u64,
) -> Result<PretrainOutcome> {
    cfg.validate()?;
    let (h, w, c) = dataset.image_shape();
    let mut params = match (cfg.objective, network) {
        (PretrainObjective::Supervised, PretrainNetwork::Single(enc)) => {
            if dataset.class_count() < 2 {
                return Err(MetaError::Config(
                    "classification pretraining needs at least two classes".into(),
                ));
            }
            let mut p = init_encoder(enc, false, derive_seed(seed, STREAM_INIT, 0))?;
            let head =
                init_aux_head(enc.stack.out_channels, dataset.class_count(), derive_seed(seed, STREAM_INIT, 1))?;
            for (name, t) in head.iter() {
                p.insert(name, t.clone())?;
            }
            p
        }
        (PretrainObjective::Autoencoder, PretrainNetwork::Single(enc)) => {
            init_encoder(enc, true, derive_seed(seed, STREAM_INIT, 0))?
        }
        (PretrainObjective::SplitBrain, PretrainNetwork::Split(split)) => {
            if c != 3 {
                return Err(MetaError::Config(format!(
                    "cross-channel pretraining needs 3-channel images, dataset has {c}"
                )));
            }
            init_split_brain(split, derive_seed(seed, STREAM_INIT, 0))?
        }
        (objective, _) => {
            return Err(MetaError::Config(format!(
                "objective `{}` does not match the provided network layout",
                objective.name()
            )));
        }
    };
    let expected_input = match network {
        PretrainNetwork::Single(enc) => enc.stack.input,
        PretrainNetwork::Split(split) => split.stack.input,
    };
    if (h, w, c) != expected_input {
        return Err(MetaError::Config(format!(
            "dataset images are {:?} but the encoder expects {:?}",
            (h, w, c),
            expected_input
        )));
    }

    let names: Vec<String> = params.names().map(str::to_string).collect();
    let mut losses = Vec::with_capacity(cfg.iterations as usize);
    let mut accuracies = Vec::new();

    for it in 0..cfg.iterations {
        let mut rng = derive_rng(seed, STREAM_PRETRAIN, it);
        let (batch, labels) = draw_batch(dataset, &mut rng, cfg.batch_size)?;

        let mut g = Graph::new();
        let weights = NodeMap::params(&mut g, &params)?;

        // (raw objective, optional evaluation-mode logits for accuracy)
        let (raw, eval_logits): (NodeId, Option<NodeId>) = match (cfg.objective, network) {
            (PretrainObjective::Supervised, PretrainNetwork::Single(enc)) => {
                let x = g.constant(batch);
                let fmap = conv_stack(&mut g, x, &weights, "r", &enc.stack)?;
                let pooled = g.global_avg_pool(fmap)?;
                let flat = g.flatten(pooled)?;
                let head = HeadConfig { layers: 1, ways: dataset.class_count() };
                let keep = 1.0 / (1.0 - cfg.dropout);
                let mut factory = |shape: &[usize]| {
                    Tensor::from_fn(shape, |_| {
                        if rng.random::<f64>() < cfg.dropout { 0.0 } else { keep }
                    })
                    .expect("mask shapes come from graph nodes")
                };
                let masks: MaskSource<'_> =
                    if cfg.dropout > 0.0 { Some(&mut factory) } else { None };
                let logits = fc_head(&mut g, flat, &weights, "au", &head, masks)?;
                let targets = g.constant(one_hot(&labels, dataset.class_count())?);
                let per_row = g.softmax_cross_entropy(logits, targets)?;
                let loss = g.reduce_mean(per_row)?;
                let clean = fc_head(&mut g, flat, &weights, "au", &head, None)?;
                (loss, Some(clean))
            }
            (PretrainObjective::Autoencoder, PretrainNetwork::Single(enc)) => {
                let x = g.constant(batch);
                let fmap = conv_stack(&mut g, x, &weights, "r", &enc.stack)?;
                let recon = decoder_forward(&mut g, fmap, &weights, "au.d", enc.recon_size)?;
                let target = g.resize_area(x, enc.recon_size, enc.recon_size)?;
                (g.mse(recon, target)?, None)
            }
            (PretrainObjective::SplitBrain, PretrainNetwork::Split(split)) => {
                let (l_plane, ab_plane) = split_lab_planes(&batch)?;
                let l = g.constant(l_plane);
                let ab = g.constant(ab_plane);
                let nodes = split_brain_forward(&mut g, l, ab, &weights, split)?;
                let t_l = g.resize_area(l, split.recon_size, split.recon_size)?;
                let t_ab = g.resize_area(ab, split.recon_size, split.recon_size)?;
                let loss_l = g.mse(nodes.recon_l, t_l)?;
                let loss_ab = g.mse(nodes.recon_ab, t_ab)?;
                (g.add(loss_l, loss_ab)?, None)
            }
            _ => unreachable!("pairing validated above"),
        };

        let objective = apply_regularization(&mut g, raw, &weights, 0.0, cfg.l2)?;
        let wrt: Vec<_> = names
            .iter()
            .map(|n| weights.get(n))
            .collect::<std::result::Result<_, _>>()?;
        let grad_nodes = g.grad(objective, &wrt)?;

        let mut roots = vec![raw];
        if let Some(l) = eval_logits {
            roots.push(l);
        }
        roots.extend_from_slice(&grad_nodes);
        let values = g.eval_many(&roots, &params).map_err(|e| MetaError::from(e).at(it))?;

        losses.push(values[0].item());
        let grad_offset = if eval_logits.is_some() {
            accuracies.push(accuracy(&values[1], &labels));
            2
        } else {
            1
        };
        let mut grads = ParamSet::new();
        for (name, value) in names.iter().zip(&values[grad_offset..]) {
            grads.insert(name.clone(), value.clone())?;
        }
        params.descend(&grads, cfg.lr_at(it)).map_err(|e| MetaError::from(e).at(it))?;
    }

    let handle = match (cfg.objective, network) {
        (PretrainObjective::Supervised, PretrainNetwork::Single(enc)) => {
            RepresentationHandle::supervised(
                enc.stack.clone(),
                params.filtered(|n| n.starts_with("r.")),
            )?
        }
        (PretrainObjective::Autoencoder, PretrainNetwork::Single(enc)) => {
            RepresentationHandle::autoencoder(
                enc.stack.clone(),
                params.filtered(|n| n.starts_with("r.")),
            )?
        }
        (PretrainObjective::SplitBrain, PretrainNetwork::Split(split)) => {
            RepresentationHandle::split_brain(
                split.clone(),
                params.filtered(|n| n.starts_with("l.") || n.starts_with("ab.")),
            )?
        }
        _ => unreachable!("pairing validated above"),
    };
    Ok(PretrainOutcome { handle, params, losses, accuracies })
}
