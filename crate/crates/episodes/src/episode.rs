//! N-way K-shot episode construction.

use diffcore::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::DatasetHandle;
use crate::error::{EpisodeError, Result};

/// Shape of one few-shot task: `ways` classes, `shots` support images and
/// `queries` query images per class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpisodeSpec {
    pub ways: usize,
    pub shots: usize,
    pub queries: usize,
}

impl Default for EpisodeSpec {
    fn default() -> Self {
        EpisodeSpec { ways: 5, shots: 1, queries: 15 }
    }
}

impl EpisodeSpec {
    pub fn validate(&self) -> Result<()> {
        if self.ways < 2 {
            return Err(EpisodeError::BadSpec(format!("need at least 2 ways, got {}", self.ways)));
        }
        if self.shots == 0 {
            return Err(EpisodeError::BadSpec("need at least 1 shot".into()));
        }
        if self.queries == 0 {
            return Err(EpisodeError::BadSpec("need at least 1 query per class".into()));
        }
        Ok(())
    }

    pub fn support_size(&self) -> usize {
        self.ways * self.shots
    }

    pub fn query_size(&self) -> usize {
        self.ways * self.queries
    }
}

/// One sampled task. Support rows are ordered by (episode label, shot);
/// query rows by (episode label, query index). The `*_refs` fields record
/// every image's (dataset class, image index) identity so set-level
/// properties can be checked without comparing pixels.
#[derive(Debug, Clone)]
pub struct Episode {
    pub task_id: u64,
    /// Episode label -> dataset class index.
    pub class_map: Vec<usize>,
    pub support_images: Tensor,
    pub support_labels: Vec<usize>,
    pub support_refs: Vec<(usize, usize)>,
    pub query_images: Tensor,
    pub query_labels: Vec<usize>,
    pub query_refs: Vec<(usize, usize)>,
}

/// Stacks equal-shaped (h,w,c) images into one (n,h,w,c) batch.
pub fn stack_images(images: &[Tensor]) -> Result<Tensor> {
    let first = images
        .first()
        .ok_or_else(|| EpisodeError::BadSpec("cannot stack an empty image list".into()))?;
    let shape = first.shape().to_vec();
    let mut data = Vec::with_capacity(images.len() * first.len());
    for img in images {
        if img.shape() != shape {
            return Err(EpisodeError::BadSpec(format!(
                "cannot stack images of shapes {:?} and {:?}",
                shape,
                img.shape()
            )));
        }
        data.extend_from_slice(img.data());
    }
    let mut batched = vec![images.len()];
    batched.extend_from_slice(&shape);
    Ok(Tensor::new(&batched, data)?)
}

/// One-hot target rows (n, ways) for a label list.
pub fn one_hot(labels: &[usize], ways: usize) -> Result<Tensor> {
    for &l in labels {
        if l >= ways {
            return Err(EpisodeError::BadSpec(format!("label {l} out of range for {ways} ways")));
        }
    }
    Ok(Tensor::from_fn(&[labels.len(), ways], |i| {
        if i % ways == labels[i / ways] {
            1.0
        } else {
            0.0
        }
    })?)
}

/// Draws `n` distinct values from 0..len by partial Fisher-Yates.
fn sample_without_replacement(rng: &mut ChaCha8Rng, len: usize, n: usize) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..len).collect();
    for i in 0..n {
        let j = rng.random_range(i..len);
        pool.swap(i, j);
    }
    pool.truncate(n);
    pool
}

/// Samples one episode: `ways` classes uniformly without replacement,
/// `shots + queries` images per class without replacement, and a uniformly
/// random episode-label permutation. The result is a pure function of the
/// handle contents and the generator state.
pub fn sample_episode(
    handle: &DatasetHandle,
    spec: &EpisodeSpec,
    rng: &mut ChaCha8Rng,
) -> Result<Episode> {
    spec.validate()?;
    if handle.class_count() < spec.ways {
        return Err(EpisodeError::InsufficientClasses {
            required: spec.ways,
            available: handle.class_count(),
        });
    }

    let task_id: u64 = rng.random();
    let chosen = sample_without_replacement(rng, handle.class_count(), spec.ways);
    let labels = sample_without_replacement(rng, spec.ways, spec.ways);

    let need = spec.shots + spec.queries;
    let mut class_map = vec![0usize; spec.ways];
    let mut support_refs = vec![(0usize, 0usize); spec.support_size()];
    let mut query_refs = vec![(0usize, 0usize); spec.query_size()];
    for (&class, &label) in chosen.iter().zip(&labels) {
        let available = handle.class_len(class);
        if available < need {
            return Err(EpisodeError::InsufficientImages {
                class: handle.class_name(class).to_string(),
                required: need,
                available,
            });
        }
        class_map[label] = class;
        let picks = sample_without_replacement(rng, available, need);
        for (k, &img) in picks[..spec.shots].iter().enumerate() {
            support_refs[label * spec.shots + k] = (class, img);
        }
        for (q, &img) in picks[spec.shots..].iter().enumerate() {
            query_refs[label * spec.queries + q] = (class, img);
        }
    }

    let fetch = |refs: &[(usize, usize)]| -> Result<Tensor> {
        let images: Result<Vec<Tensor>> =
            refs.iter().map(|&(c, i)| handle.image(c, i)).collect();
        stack_images(&images?)
    };
    let support_images = fetch(&support_refs)?;
    let query_images = fetch(&query_refs)?;
    let support_labels: Vec<usize> =
        (0..spec.support_size()).map(|r| r / spec.shots).collect();
    let query_labels: Vec<usize> = (0..spec.query_size()).map(|r| r / spec.queries).collect();

    Ok(Episode {
        task_id,
        class_map,
        support_images,
        support_labels,
        support_refs,
        query_images,
        query_labels,
        query_refs,
    })
}
