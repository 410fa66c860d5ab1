//! Within-class dispersion and between-class separation of embedded
//! features, both centroid-based: dispersion averages each member's
//! distance to its class centroid, separation averages the pairwise
//! distances between centroids.

use std::collections::BTreeMap;

use diffcore::Tensor;

use crate::error::{EvalError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureStats {
    /// Mean over classes of the mean member-to-centroid distance.
    pub d1: f64,
    /// Mean pairwise distance between class centroids.
    pub d2: f64,
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `features` is (n, …) with one feature vector per leading-axis row
/// (trailing axes are flattened); `labels[i]` is row `i`'s class.
pub fn feature_distances(features: &Tensor, labels: &[usize]) -> Result<FeatureStats> {
    let shape = features.shape();
    if shape.is_empty() || shape[0] == 0 {
        return Err(EvalError::Config("need at least one feature vector".into()));
    }
    let rows = shape[0];
    if labels.len() != rows {
        return Err(EvalError::Config(format!(
            "{} labels for {} feature rows",
            labels.len(),
            rows
        )));
    }
    let dim = features.len() / rows;
    let row = |i: usize| &features.data()[i * dim..(i + 1) * dim];

    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &label) in labels.iter().enumerate() {
        by_class.entry(label).or_default().push(i);
    }
    if by_class.len() < 2 {
        return Err(EvalError::Config(
            "between-class separation needs at least two classes".into(),
        ));
    }

    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(by_class.len());
    let mut dispersion_sum = 0.0;
    for members in by_class.values() {
        let mut centroid = vec![0.0f64; dim];
        for &i in members {
            for (c, v) in centroid.iter_mut().zip(row(i)) {
                *c += v;
            }
        }
        for c in &mut centroid {
            *c /= members.len() as f64;
        }
        let mean_dist =
            members.iter().map(|&i| euclidean(row(i), &centroid)).sum::<f64>() / members.len() as f64;
        dispersion_sum += mean_dist;
        centroids.push(centroid);
    }
    let d1 = dispersion_sum / by_class.len() as f64;

    let mut sep_sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..centroids.len() {
        for j in i + 1..centroids.len() {
            sep_sum += euclidean(&centroids[i], &centroids[j]);
            pairs += 1;
        }
    }
    let d2 = sep_sum / pairs as f64;
    Ok(FeatureStats { d1, d2 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_classes_three_apart() {
        let features = Tensor::new(
            &[4, 2],
            vec![0.0, 0.0, 0.0, 0.0, 3.0, 0.0, 3.0, 0.0],
        )
        .unwrap();
        let stats = feature_distances(&features, &[0, 0, 1, 1]).unwrap();
        assert_eq!(stats.d1, 0.0);
        assert_eq!(stats.d2, 3.0);
    }

    #[test]
    fn identical_features_are_fully_degenerate() {
        let features = Tensor::new(&[4, 3], vec![1.0; 12]).unwrap();
        let stats = feature_distances(&features, &[0, 1, 0, 1]).unwrap();
        assert_eq!(stats.d1, 0.0);
        assert_eq!(stats.d2, 0.0);
    }

    #[test]
    fn single_class_is_rejected() {
        let features = Tensor::new(&[2, 2], vec![0.0; 4]).unwrap();
        assert!(feature_distances(&features, &[3, 3]).is_err());
    }

    #[test]
    fn pooled_feature_shapes_flatten() {
        // (n,1,1,dim) pooled embeddings work without reshaping.
        let features = Tensor::new(&[2, 1, 1, 2], vec![0.0, 0.0, 4.0, 3.0]).unwrap();
        let stats = feature_distances(&features, &[0, 1]).unwrap();
        assert_eq!(stats.d2, 5.0);
    }
}
