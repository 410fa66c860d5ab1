//! The task-model abstraction the meta-optimizer drives.
//!
//! A [`TaskModel`] knows how to extend a graph with a scalar task loss (and
//! optionally logits) given weight nodes and a batch of inputs. The
//! meta-step machinery never looks inside: it only wires support and query
//! batches through the model, which is what lets a one-parameter toy model
//! and the full convolutional network exercise the identical engine.

use diffcore::{Graph, NodeId, ParamSet, Tensor};
use episodes::{
    derive_rng, one_hot, sample_episode, DatasetHandle, Episode, EpisodeSpec, STREAM_EPISODES,
};
use netmodels::{
    abp_forward, task_net_forward, AbpConfig, MaskSource, NodeMap, RepresentationHandle,
    TaskNetConfig,
};

use crate::config::InnerScope;
use crate::error::{MetaError, Result};

/// One labeled batch: inputs plus cross-entropy targets. `labels` carries
/// the argmax class per row for accuracy accounting; models that have no
/// notion of accuracy leave it empty.
#[derive(Debug, Clone)]
pub struct TaskBatch {
    pub inputs: Tensor,
    pub targets: Tensor,
    pub labels: Vec<usize>,
}

/// A support/query pair — one few-shot task as the optimizer sees it.
#[derive(Debug, Clone)]
pub struct TaskPair {
    pub support: TaskBatch,
    pub query: TaskBatch,
}

/// Graph-building interface between models and the meta-optimizer.
pub trait TaskModel {
    /// Scalar mean loss over one batch.
    fn loss(
        &self,
        g: &mut Graph,
        weights: &NodeMap,
        batch: &TaskBatch,
        dropout: MaskSource<'_>,
    ) -> Result<NodeId>;

    /// Logits (rows, ways) for accuracy accounting; `None` when the model
    /// has no classification readout.
    fn logits(
        &self,
        g: &mut Graph,
        weights: &NodeMap,
        batch: &TaskBatch,
    ) -> Result<Option<NodeId>> {
        let _ = (g, weights, batch);
        Ok(None)
    }

    /// The inner-loop scope this model is compatible with.
    fn scope(&self) -> InnerScope;

    /// Ensures a configured scope matches the model's structure.
    fn check_scope(&self, scope: InnerScope) -> Result<()> {
        if scope == self.scope() {
            Ok(())
        } else {
            Err(MetaError::Scope(format!(
                "model expects {:?} inner scope, config says {:?}",
                self.scope(),
                scope
            )))
        }
    }
}

/// Mean cross-entropy of logits against one-hot target rows.
fn mean_cross_entropy(g: &mut Graph, logits: NodeId, targets: &Tensor) -> Result<NodeId> {
    let t = g.constant(targets.clone());
    let per_row = g.softmax_cross_entropy(logits, t)?;
    Ok(g.reduce_mean(per_row)?)
}

/// The full image-to-logits network: every weight is inner-adapted.
#[derive(Debug, Clone)]
pub struct AmlModel {
    pub cfg: TaskNetConfig,
}

impl TaskModel for AmlModel {
    fn loss(
        &self,
        g: &mut Graph,
        weights: &NodeMap,
        batch: &TaskBatch,
        dropout: MaskSource<'_>,
    ) -> Result<NodeId> {
        let x = g.constant(batch.inputs.clone());
        let nodes = task_net_forward(g, x, weights, &self.cfg, dropout)?;
        mean_cross_entropy(g, nodes.logits, &batch.targets)
    }

    fn logits(
        &self,
        g: &mut Graph,
        weights: &NodeMap,
        batch: &TaskBatch,
    ) -> Result<Option<NodeId>> {
        let x = g.constant(batch.inputs.clone());
        let nodes = task_net_forward(g, x, weights, &self.cfg, None)?;
        Ok(Some(nodes.logits))
    }

    fn scope(&self) -> InnerScope {
        InnerScope::All
    }
}

/// The prediction module over frozen embeddings. Batches must already
/// contain embedded inputs (b,1,1,feature_dim); the frozen encoder lives
/// outside the trainable set entirely.
#[derive(Debug, Clone)]
pub struct AbpModel {
    pub cfg: AbpConfig,
}

impl TaskModel for AbpModel {
    fn loss(
        &self,
        g: &mut Graph,
        weights: &NodeMap,
        batch: &TaskBatch,
        dropout: MaskSource<'_>,
    ) -> Result<NodeId> {
        let x = g.constant(batch.inputs.clone());
        let nodes = abp_forward(g, x, weights, &self.cfg, dropout)?;
        mean_cross_entropy(g, nodes.logits, &batch.targets)
    }

    fn logits(
        &self,
        g: &mut Graph,
        weights: &NodeMap,
        batch: &TaskBatch,
    ) -> Result<Option<NodeId>> {
        let x = g.constant(batch.inputs.clone());
        let nodes = abp_forward(g, x, weights, &self.cfg, None)?;
        Ok(Some(nodes.logits))
    }

    fn scope(&self) -> InnerScope {
        InnerScope::AbpOnly
    }
}

/// One-parameter quadratic chain for closed-form verification: the loss on
/// a batch is sum((theta - target)^2). With support target s and query
/// target q this reproduces the textbook two-level objective whose
/// meta-gradients are known exactly.
#[derive(Debug, Clone)]
pub struct QuadraticToy;

impl QuadraticToy {
    /// The single weight, named `theta`, shaped as a scalar.
    pub fn params(theta: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.insert("theta", Tensor::scalar(theta).with_requires_grad(true)).expect("fresh set");
        p
    }

    /// A batch whose only content is the quadratic's target value.
    pub fn batch(target: f64) -> TaskBatch {
        TaskBatch {
            inputs: Tensor::scalar(0.0),
            targets: Tensor::scalar(target),
            labels: Vec::new(),
        }
    }
}

impl TaskModel for QuadraticToy {
    fn loss(
        &self,
        g: &mut Graph,
        weights: &NodeMap,
        batch: &TaskBatch,
        _dropout: MaskSource<'_>,
    ) -> Result<NodeId> {
        let theta = weights.get("theta")?;
        let target = g.constant(batch.targets.clone());
        let diff = g.sub(theta, target)?;
        let sq = g.mul(diff, diff)?;
        Ok(g.reduce_sum(sq)?)
    }

    fn scope(&self) -> InnerScope {
        InnerScope::All
    }
}

/// Converts a sampled episode into cross-entropy task batches.
pub fn episode_to_pair(episode: &Episode, ways: usize) -> Result<TaskPair> {
    Ok(TaskPair {
        support: TaskBatch {
            inputs: episode.support_images.clone(),
            targets: one_hot(&episode.support_labels, ways)?,
            labels: episode.support_labels.clone(),
        },
        query: TaskBatch {
            inputs: episode.query_images.clone(),
            targets: one_hot(&episode.query_labels, ways)?,
            labels: episode.query_labels.clone(),
        },
    })
}

/// Converts an episode into embedded task batches: images run through the
/// frozen representation once, numerically, so the training graph only
/// ever sees (b,1,1,feature_dim) constants.
pub fn episode_to_embedded_pair(
    episode: &Episode,
    ways: usize,
    repr: &RepresentationHandle,
) -> Result<TaskPair> {
    Ok(TaskPair {
        support: TaskBatch {
            inputs: repr.features(&episode.support_images)?,
            targets: one_hot(&episode.support_labels, ways)?,
            labels: episode.support_labels.clone(),
        },
        query: TaskBatch {
            inputs: repr.features(&episode.query_images)?,
            targets: one_hot(&episode.query_labels, ways)?,
            labels: episode.query_labels.clone(),
        },
    })
}

/// A task stream over a dataset: episode `index` is sampled with its own
/// derived generator, so the stream is a pure function of `(seed, index)`
/// and any suffix of it can be replayed after a restart.
pub fn image_task_source<'a>(
    dataset: &'a DatasetHandle,
    spec: EpisodeSpec,
    seed: u64,
) -> impl Fn(u64) -> Result<TaskPair> + Sync + 'a {
    move |index| {
        let mut rng = derive_rng(seed, STREAM_EPISODES, index);
        let episode = sample_episode(dataset, &spec, &mut rng)?;
        episode_to_pair(&episode, spec.ways)
    }
}

/// Like [`image_task_source`], but every batch is embedded through the
/// frozen representation before the optimizer sees it.
pub fn embedded_task_source<'a>(
    dataset: &'a DatasetHandle,
    spec: EpisodeSpec,
    seed: u64,
    repr: &'a RepresentationHandle,
) -> impl Fn(u64) -> Result<TaskPair> + Sync + 'a {
    move |index| {
        let mut rng = derive_rng(seed, STREAM_EPISODES, index);
        let episode = sample_episode(dataset, &spec, &mut rng)?;
        episode_to_embedded_pair(&episode, spec.ways, repr)
    }
}

/// Fraction of rows whose argmax logit hits the label.
pub fn accuracy(logits: &Tensor, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let ways = logits.shape()[1];
    let mut correct = 0usize;
    for (row, &label) in labels.iter().enumerate() {
        let row_data = &logits.data()[row * ways..(row + 1) * ways];
        let mut best = 0usize;
        for (j, &v) in row_data.iter().enumerate() {
            if v > row_data[best] {
                best = j;
            }
        }
        correct += usize::from(best == label);
    }
    correct as f64 / labels.len() as f64
}
