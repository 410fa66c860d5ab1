//! Graph construction for the model forward passes.
//!
//! Every builder takes a [`Graph`], a [`NodeMap`] resolving weight names to
//! leaf nodes, and returns the ids of the interesting intermediate nodes.
//! Callers decide whether weights enter the graph as trainable `param`
//! leaves or as baked-in constants (frozen modules), which is what lets the
//! same forward code serve meta-training, frozen-representation training
//! and pure evaluation.

use std::collections::BTreeMap;

use diffcore::{Graph, NodeId, ParamSet, Tensor};

use crate::config::{AbpConfig, ConvStackConfig, GateVariant, HeadConfig, SplitBrainConfig, TaskNetConfig};
use crate::error::{ModelError, Result};

/// Weight-name to node resolution for one graph.
#[derive(Debug, Default, Clone)]
pub struct NodeMap {
    nodes: BTreeMap<String, NodeId>,
}

impl NodeMap {
    pub fn new() -> Self {
        NodeMap::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, id: NodeId) {
        self.nodes.insert(name.into(), id);
    }

    pub fn get(&self, name: &str) -> Result<NodeId> {
        self.nodes
            .get(name)
            .copied()
            .ok_or_else(|| ModelError::MissingWeight(name.to_string()))
    }

    pub fn try_get(&self, name: &str) -> Option<NodeId> {
        self.nodes.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, NodeId)> {
        self.nodes.iter().map(|(n, &id)| (n.as_str(), id))
    }

    /// Declares every entry of `params` as a trainable `param` leaf.
    pub fn params(g: &mut Graph, params: &ParamSet) -> Result<Self> {
        let mut map = NodeMap::new();
        for (name, t) in params.iter() {
            map.insert(name, g.param(name, t.shape())?);
        }
        Ok(map)
    }

    /// Embeds every entry of `params` as a frozen constant.
    pub fn constants(g: &mut Graph, params: &ParamSet) -> Result<Self> {
        let mut map = NodeMap::new();
        for (name, t) in params.iter() {
            map.insert(name, g.constant(t.clone()));
        }
        Ok(map)
    }

    /// Merges another map; later entries win on name collisions.
    pub fn extend(&mut self, other: NodeMap) {
        self.nodes.extend(other.nodes);
    }
}

/// Supplier of dropout masks. `None` means evaluation mode (no dropout).
pub type MaskSource<'a> = Option<&'a mut dyn FnMut(&[usize]) -> Tensor>;

/// Adds a rank-1 bias (c,) onto an NHWC map or a (b,d) matrix.
fn add_bias(g: &mut Graph, x: NodeId, bias: NodeId) -> Result<NodeId> {
    let rank = g.shape(x).len();
    let c = g.shape(bias)[0];
    let target: Vec<usize> = match rank {
        4 => vec![1, 1, 1, c],
        2 => vec![1, c],
        r => {
            return Err(ModelError::Config(format!(
                "bias addition expects rank 2 or 4 activations, got rank {r}"
            )))
        }
    };
    let reshaped = g.reshape(bias, &target)?;
    Ok(g.add(x, reshaped)?)
}

fn conv_bias(g: &mut Graph, x: NodeId, weights: &NodeMap, stem: &str) -> Result<NodeId> {
    let w = weights.get(&format!("{stem}.w"))?;
    let y = g.conv2d(x, w)?;
    match weights.try_get(&format!("{stem}.b")) {
        Some(b) => add_bias(g, y, b),
        None => Ok(y),
    }
}

/// One backbone block: conv+bias, then batch norm and ReLU in the
/// configured order, then ceil-mode 2x2 max pooling.
fn conv_block(
    g: &mut Graph,
    x: NodeId,
    weights: &NodeMap,
    prefix: &str,
    i: usize,
    cfg: &ConvStackConfig,
) -> Result<NodeId> {
    let y = conv_bias(g, x, weights, &format!("{prefix}.b{i}.conv"))?;
    let scale = weights.get(&format!("{prefix}.b{i}.bn.scale"))?;
    let shift = weights.get(&format!("{prefix}.b{i}.bn.shift"))?;
    let activated = if cfg.bn_before_relu {
        let n = g.batch_norm(y, scale, shift, cfg.bn_epsilon)?;
        g.relu(n)?
    } else {
        let r = g.relu(y)?;
        g.batch_norm(r, scale, shift, cfg.bn_epsilon)?
    };
    Ok(g.max_pool2(activated)?)
}

/// Full convolution stack: returns the final feature map (b,h',w',c).
pub fn conv_stack(
    g: &mut Graph,
    x: NodeId,
    weights: &NodeMap,
    prefix: &str,
    cfg: &ConvStackConfig,
) -> Result<NodeId> {
    let mut h = x;
    for i in 0..cfg.blocks {
        h = conv_block(g, h, weights, prefix, i, cfg)?;
    }
    Ok(h)
}

/// Channel gate: pooled features -> 1x1 conv (+bias) -> sigmoid. Input may
/// be a full map (pooled internally) or an already-pooled (b,1,1,c) tensor.
/// Returns (mask, gated map).
pub fn attention_gate(
    g: &mut Graph,
    feature_map: NodeId,
    weights: &NodeMap,
    prefix: &str,
) -> Result<(NodeId, NodeId)> {
    let pooled = g.global_avg_pool(feature_map)?;
    let pre = conv_bias(g, pooled, weights, &format!("{prefix}.conv"))?;
    let mask = g.sigmoid(pre)?;
    let gated = g.channel_mul(feature_map, mask)?;
    Ok((mask, gated))
}

/// Classifier head over (b,d) activations: `layers` linear stages with a
/// ReLU between two-layer heads; dropout (when supplied) ahead of every
/// linear stage.
pub fn fc_head(
    g: &mut Graph,
    x: NodeId,
    weights: &NodeMap,
    prefix: &str,
    head: &HeadConfig,
    mut dropout: MaskSource<'_>,
) -> Result<NodeId> {
    let mut h = x;
    for i in 0..head.layers {
        if let Some(masks) = dropout.as_mut() {
            let mask = masks(g.shape(h));
            h = g.dropout(h, mask)?;
        }
        let w = weights.get(&format!("{prefix}.fc{i}.w"))?;
        let b = weights.get(&format!("{prefix}.fc{i}.b"))?;
        let prod = g.matmul(h, w)?;
        h = add_bias(g, prod, b)?;
        if i + 1 < head.layers {
            h = g.relu(h)?;
        }
    }
    Ok(h)
}

/// Interesting nodes of a task-network forward pass.
#[derive(Debug, Clone, Copy)]
pub struct TaskNetNodes {
    /// Backbone feature map (b,h',w',c).
    pub feature_map: NodeId,
    /// Channel mask (b,1,1,c); present only for the attention variant.
    pub mask: Option<NodeId>,
    /// Gated (or plainly convolved) feature map fed to the classifier.
    pub gated_map: NodeId,
    /// Classifier output (b, ways).
    pub logits: NodeId,
}

/// Image-to-logits forward pass of the full task network.
pub fn task_net_forward(
    g: &mut Graph,
    images: NodeId,
    weights: &NodeMap,
    cfg: &TaskNetConfig,
    dropout: MaskSource<'_>,
) -> Result<TaskNetNodes> {
    let feature_map = conv_stack(g, images, weights, "f", &cfg.stack)?;
    let (mask, gated_map) = match cfg.variant {
        GateVariant::Attention => {
            let (m, gated) = attention_gate(g, feature_map, weights, "a")?;
            (Some(m), gated)
        }
        GateVariant::PlainConv => {
            // Same 1x1 kernel applied as an ordinary convolution over the
            // whole map; no sigmoid, no mask multiply.
            let y = conv_bias(g, feature_map, weights, "a.conv")?;
            (None, y)
        }
    };
    let flat = g.flatten(gated_map)?;
    let logits = fc_head(g, flat, weights, "c", &cfg.head, dropout)?;
    Ok(TaskNetNodes { feature_map, mask, gated_map, logits })
}

/// Nodes of a prediction-module pass over frozen embeddings.
#[derive(Debug, Clone, Copy)]
pub struct AbpNodes {
    pub mask: NodeId,
    pub gated: NodeId,
    pub logits: NodeId,
}

/// Embeddings (b,1,1,d) through gate and two-layer classifier.
pub fn abp_forward(
    g: &mut Graph,
    embeddings: NodeId,
    weights: &NodeMap,
    cfg: &AbpConfig,
    dropout: MaskSource<'_>,
) -> Result<AbpNodes> {
    let s = g.shape(embeddings).to_vec();
    if s.len() != 4 || s[1] != 1 || s[2] != 1 || s[3] != cfg.feature_dim {
        return Err(ModelError::Config(format!(
            "expected embeddings shaped (b,1,1,{}), got {:?}",
            cfg.feature_dim, s
        )));
    }
    let (mask, gated) = attention_gate(g, embeddings, weights, "a")?;
    let flat = g.flatten(gated)?;
    let logits = fc_head(g, flat, weights, "c", &cfg.head, dropout)?;
    Ok(AbpNodes { mask, gated, logits })
}

/// Reconstruction decoder: conv k5, two (upsample, conv k3) stages, a 1x1
/// projection, then area resampling onto the square target size. ReLU
/// between stages, linear output.
pub fn decoder_forward(
    g: &mut Graph,
    feature_map: NodeId,
    weights: &NodeMap,
    prefix: &str,
    recon_size: usize,
) -> Result<NodeId> {
    let c1 = conv_bias(g, feature_map, weights, &format!("{prefix}.d1"))?;
    let mut h = g.relu(c1)?;
    for stage in [2usize, 3] {
        let up = g.upsample2(h)?;
        let c = conv_bias(g, up, weights, &format!("{prefix}.d{stage}"))?;
        h = g.relu(c)?;
    }
    let out = conv_bias(g, h, weights, &format!("{prefix}.d4"))?;
    Ok(g.resize_area(out, recon_size, recon_size)?)
}

/// Nodes of the split-channel pretraining pass.
#[derive(Debug, Clone, Copy)]
pub struct SplitBrainNodes {
    /// Prediction of the color planes from lightness features,
    /// (b,recon,recon,2).
    pub recon_ab: NodeId,
    /// Prediction of the lightness plane from color features,
    /// (b,recon,recon,1).
    pub recon_l: NodeId,
    /// Lightness-branch encoder feature map.
    pub l_map: NodeId,
    /// Color-branch encoder feature map.
    pub ab_map: NodeId,
    /// Concatenated pooled embedding (b,1,1,feature_dim).
    pub embedding: NodeId,
}

/// Both encoder branches plus their cross-channel decoders. `lightness` is
/// (b,h,w,1), `color` is (b,h,w,2); both already normalized to unit range.
pub fn split_brain_forward(
    g: &mut Graph,
    lightness: NodeId,
    color: NodeId,
    weights: &NodeMap,
    cfg: &SplitBrainConfig,
) -> Result<SplitBrainNodes> {
    let l_stack = cfg.branch_stack(1);
    let ab_stack = cfg.branch_stack(2);
    let l_map = conv_stack(g, lightness, weights, "l", &l_stack)?;
    let ab_map = conv_stack(g, color, weights, "ab", &ab_stack)?;
    let recon_ab = decoder_forward(g, l_map, weights, "au.l", cfg.recon_size)?;
    let recon_l = decoder_forward(g, ab_map, weights, "au.ab", cfg.recon_size)?;
    let joined = g.concat(&[l_map, ab_map], 3)?;
    let embedding = g.global_avg_pool(joined)?;
    Ok(SplitBrainNodes { recon_ab, recon_l, l_map, ab_map, embedding })
}

/// Numeric convenience: runs the channel gate outside any training graph.
/// `theta_a` must hold `a.conv.w` (1,1,c,c) and optionally `a.conv.b` (c,).
/// Returns the mask (b,1,1,c) and the gated features.
pub fn attention_forward(features: &Tensor, theta_a: &ParamSet) -> Result<(Tensor, Tensor)> {
    let mut g = Graph::new();
    let x = g.constant(features.clone());
    let weights = NodeMap::constants(&mut g, theta_a)?;
    let (mask, gated) = attention_gate(&mut g, x, &weights, "a")?;
    let mut out = g.eval_many(&[mask, gated], &ParamSet::new())?;
    let gated_t = out.pop().expect("two roots");
    let mask_t = out.pop().expect("two roots");
    Ok((mask_t, gated_t))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gate_weights_give_half_masks() {
        // Zero conv weights and bias put the sigmoid at exactly 1/2, so the
        // gated features are the input halved.
        let mut theta = ParamSet::new();
        theta.insert("a.conv.w", Tensor::zeros(&[1, 1, 3, 3])).unwrap();
        theta.insert("a.conv.b", Tensor::zeros(&[3])).unwrap();
        let feats = Tensor::from_fn(&[2, 2, 2, 3], |i| i as f64 * 0.1).unwrap();
        let (mask, gated) = attention_forward(&feats, &theta).unwrap();
        assert_eq!(mask.shape(), &[2, 1, 1, 3]);
        assert!(mask.data().iter().all(|&v| v == 0.5));
        for (got, want) in gated.data().iter().zip(feats.data()) {
            assert!((got - want * 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn gate_works_on_already_pooled_embeddings() {
        let mut theta = ParamSet::new();
        theta.insert("a.conv.w", Tensor::zeros(&[1, 1, 4, 4])).unwrap();
        let feats = Tensor::from_fn(&[3, 1, 1, 4], |i| (i % 7) as f64).unwrap();
        let (mask, gated) = attention_forward(&feats, &theta).unwrap();
        assert_eq!(mask.shape(), &[3, 1, 1, 4]);
        assert_eq!(gated.shape(), &[3, 1, 1, 4]);
        for (got, want) in gated.data().iter().zip(feats.data()) {
            assert!((got - want * 0.5).abs() < 1e-15);
        }
    }
}
