//! Brute-force oracles for the feature statistics and heat-map math, plus
//! the 16-bit PNG round trip.

use diffcore::Tensor;
use evaluation::{feature_distances, heatmap, heatmap_filename, write_heatmap_png};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::tempdir;

#[test]
fn distances_match_a_double_loop_recomputation() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let n = 30usize;
    let dim = 7usize;
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
    let data: Vec<f64> = (0..n * dim).map(|_| rng.random_range(-2.0..2.0)).collect();
    let features = Tensor::new(&[n, dim], data.clone()).unwrap();

    let stats = feature_distances(&features, &labels).unwrap();

    // Independent recomputation, scalar loops only.
    let classes: Vec<usize> = {
        let mut c: Vec<usize> = labels.clone();
        c.sort_unstable();
        c.dedup();
        c
    };
    let mut centroids = Vec::new();
    let mut d1_sum = 0.0;
    for &class in &classes {
        let members: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
        let mut centroid = vec![0.0; dim];
        for &i in &members {
            for k in 0..dim {
                centroid[k] += data[i * dim + k];
            }
        }
        for c in centroid.iter_mut() {
            *c /= members.len() as f64;
        }
        let mut mean_dist = 0.0;
        for &i in &members {
            let mut sq = 0.0;
            for k in 0..dim {
                sq += (data[i * dim + k] - centroid[k]).powi(2);
            }
            mean_dist += sq.sqrt();
        }
        d1_sum += mean_dist / members.len() as f64;
        centroids.push(centroid);
    }
    let d1 = d1_sum / classes.len() as f64;
    let mut d2_sum = 0.0;
    let mut pairs = 0;
    for i in 0..centroids.len() {
        for j in i + 1..centroids.len() {
            let mut sq = 0.0;
            for k in 0..dim {
                sq += (centroids[i][k] - centroids[j][k]).powi(2);
            }
            d2_sum += sq.sqrt();
            pairs += 1;
        }
    }
    let d2 = d2_sum / pairs as f64;

    assert!((stats.d1 - d1).abs() < 1e-12);
    assert!((stats.d2 - d2).abs() < 1e-12);
}

#[test]
fn channel_mean_matches_a_per_pixel_average() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (b, h, w, c) = (3usize, 4usize, 5usize, 6usize);
    let data: Vec<f64> = (0..b * h * w * c).map(|_| rng.random_range(-1.0..1.0)).collect();
    let gamma = Tensor::new(&[b, h, w, c], data.clone()).unwrap();
    let maps = heatmap(&gamma).unwrap();
    assert_eq!(maps.len(), b);

    for i in 0..b {
        // Recompute the unnormalized mean and its extrema by scalar loops.
        let mut mean = vec![0.0; h * w];
        for p in 0..h * w {
            for k in 0..c {
                mean[p] += data[(i * h * w + p) * c + k];
            }
            mean[p] /= c as f64;
        }
        let lo = mean.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = mean.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for (p, &got) in maps[i].data().iter().enumerate() {
            let want = (mean[p] - lo) / (hi - lo);
            assert!((got - want).abs() < 1e-12);
        }
        let max = maps[i].data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = maps[i].data().iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(min, 0.0);
        assert_eq!(max, 1.0);
    }
}

#[test]
fn sixteen_bit_png_round_trips_to_the_quantization_step() {
    let dir = tempdir().unwrap();
    let map = Tensor::new(&[2, 3], vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0]).unwrap();
    let path = dir.path().join(heatmap_filename("t", 0, false));
    write_heatmap_png(&map, &path).unwrap();

    let img = image::open(&path).unwrap().into_luma16();
    assert_eq!(img.dimensions(), (3, 2));
    for (p, &v) in map.data().iter().enumerate() {
        let expected = (v * 65535.0).round() as u16;
        let got = img.get_pixel((p % 3) as u32, (p / 3) as u32).0[0];
        assert_eq!(got, expected, "pixel {p}");
    }
}

#[test]
fn gated_and_plain_maps_get_distinct_names() {
    let dir = tempdir().unwrap();
    let gamma = Tensor::full(&[1, 2, 2, 3], 0.5);
    let maps = heatmap(&gamma).unwrap();
    let plain = dir.path().join(heatmap_filename("task4", 0, false));
    let gated = dir.path().join(heatmap_filename("task4", 0, true));
    write_heatmap_png(&maps[0], &plain).unwrap();
    write_heatmap_png(&maps[0], &gated).unwrap();
    assert!(plain.exists() && gated.exists());
    assert_ne!(plain, gated);
}
