//! Filesystem loading: directory layouts, manifests, header validation,
//! resizing, and the nearest-centroid sanity oracle for synthetic data.

use std::fs;
use std::path::Path;

use episodes::{
    derive_rng, generate_synthetic, load_dataset, sample_episode, EpisodeError, EpisodeSpec,
    LoadOptions, SyntheticSpec, STREAM_EVAL,
};

/// Writes a small grayscale PNG whose pixel values derive from `tone`.
fn write_gray_png(path: &Path, w: u32, h: u32, tone: u8) {
    let img = image::GrayImage::from_fn(w, h, |x, y| {
        image::Luma([tone.wrapping_add((x * 7 + y * 13) as u8)])
    });
    img.save(path).unwrap();
}

fn write_rgb_png(path: &Path, w: u32, h: u32, tone: u8) {
    let img = image::RgbImage::from_fn(w, h, |x, y| {
        image::Rgb([tone, (x * 9) as u8, (y * 5) as u8])
    });
    img.save(path).unwrap();
}

#[test]
fn class_per_directory_layout_loads_with_stable_order() {
    let dir = tempfile::tempdir().unwrap();
    // Deliberately create classes in non-lexicographic order.
    for class in ["wrens", "egrets", "murres"] {
        let class_dir = dir.path().join(class);
        fs::create_dir(&class_dir).unwrap();
        for i in 0..25 {
            write_gray_png(&class_dir.join(format!("img_{i:02}.png")), 9, 9, i as u8 * 10);
        }
    }
    let ds = load_dataset(dir.path(), &LoadOptions::default()).unwrap();
    assert_eq!(ds.class_count(), 3);
    assert_eq!(ds.class_name(0), "egrets");
    assert_eq!(ds.class_name(1), "murres");
    assert_eq!(ds.class_name(2), "wrens");
    for c in 0..3 {
        assert_eq!(ds.class_len(c), 25);
    }
    // All-grayscale inputs are tagged single-channel.
    assert_eq!(ds.image_shape(), (9, 9, 1));
    let img = ds.image(0, 0).unwrap();
    assert_eq!(img.shape(), &[9, 9, 1]);
    assert!(img.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
}

#[test]
fn mixed_color_images_are_tagged_three_channel() {
    let dir = tempfile::tempdir().unwrap();
    for (class, color) in [("a", false), ("b", true)] {
        let class_dir = dir.path().join(class);
        fs::create_dir(&class_dir).unwrap();
        for i in 0..3 {
            let path = class_dir.join(format!("{i}.png"));
            if color {
                write_rgb_png(&path, 6, 6, 100);
            } else {
                write_gray_png(&path, 6, 6, 50);
            }
        }
    }
    let ds = load_dataset(dir.path(), &LoadOptions::default()).unwrap();
    assert_eq!(ds.image_shape(), (6, 6, 3));
    // Grayscale files decode into replicated RGB channels.
    let img = ds.image(0, 0).unwrap();
    assert_eq!(img.shape(), &[6, 6, 3]);
    assert_eq!(img.data()[0], img.data()[1]);
}

#[test]
fn undecodable_file_errors_name_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let class_dir = dir.path().join("only");
    fs::create_dir(&class_dir).unwrap();
    write_gray_png(&class_dir.join("fine.png"), 5, 5, 1);
    fs::write(class_dir.join("junk.png"), b"this is not a png at all").unwrap();

    match load_dataset(dir.path(), &LoadOptions::default()) {
        Err(EpisodeError::Decode { path, .. }) => {
            assert!(path.ends_with("only/junk.png"), "unexpected path {path:?}");
        }
        other => panic!("expected a decode error, got {other:?}"),
    }
}

#[test]
fn empty_class_directories_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("full");
    fs::create_dir(&good).unwrap();
    write_gray_png(&good.join("a.png"), 4, 4, 9);
    fs::create_dir(dir.path().join("empty")).unwrap();

    match load_dataset(dir.path(), &LoadOptions::default()) {
        Err(EpisodeError::EmptyClass(name)) => assert_eq!(name, "empty"),
        other => panic!("expected an empty-class error, got {other:?}"),
    }
}

#[test]
fn mismatched_sizes_need_a_resize_target() {
    let dir = tempfile::tempdir().unwrap();
    let class_dir = dir.path().join("mixed");
    fs::create_dir(&class_dir).unwrap();
    write_gray_png(&class_dir.join("small.png"), 6, 6, 10);
    write_gray_png(&class_dir.join("large.png"), 8, 8, 10);

    assert!(matches!(
        load_dataset(dir.path(), &LoadOptions::default()),
        Err(EpisodeError::Layout(_))
    ));

    let ds = load_dataset(
        dir.path(),
        &LoadOptions { resize: Some((28, 28)), ..LoadOptions::default() },
    )
    .unwrap();
    assert_eq!(ds.image_shape(), (28, 28, 1));
    assert_eq!(ds.image(0, 0).unwrap().shape(), &[28, 28, 1]);
    assert_eq!(ds.image(0, 1).unwrap().shape(), &[28, 28, 1]);
}

#[test]
fn alphabet_character_trees_flatten_to_character_classes() {
    let dir = tempfile::tempdir().unwrap();
    for alphabet in ["futhark", "glagolitic"] {
        for character in ["char_a", "char_b", "char_c"] {
            let leaf = dir.path().join(alphabet).join(character);
            fs::create_dir_all(&leaf).unwrap();
            for i in 0..4 {
                write_gray_png(&leaf.join(format!("{i}.png")), 7, 7, i as u8 * 30);
            }
        }
    }
    let ds = load_dataset(
        dir.path(),
        &LoadOptions { flatten_characters: true, ..LoadOptions::default() },
    )
    .unwrap();
    assert_eq!(ds.class_count(), 6);
    assert_eq!(ds.class_name(0), "futhark/char_a");
    assert_eq!(ds.class_name(5), "glagolitic/char_c");
    assert_eq!(ds.class_len(3), 4);
}

#[test]
fn manifest_defines_classes_and_missing_files_fail() {
    let dir = tempfile::tempdir().unwrap();
    fs::create_dir(dir.path().join("pool")).unwrap();
    for i in 0..6 {
        write_gray_png(&dir.path().join("pool").join(format!("{i}.png")), 5, 5, i as u8);
    }
    let manifest = dir.path().join("index.csv");
    fs::write(
        &manifest,
        "relative_path,class_name\n\
         pool/0.png,zebra\n\
         pool/1.png,zebra\n\
         pool/2.png,auk\n\
         pool/3.png,auk\n\
         pool/4.png,auk\n\
         pool/5.png,zebra\n",
    )
    .unwrap();

    let ds = load_dataset(
        dir.path(),
        &LoadOptions { manifest: Some(manifest.clone()), ..LoadOptions::default() },
    )
    .unwrap();
    assert_eq!(ds.class_count(), 2);
    assert_eq!(ds.class_name(0), "auk");
    assert_eq!(ds.class_len(0), 3);
    assert_eq!(ds.class_name(1), "zebra");
    assert_eq!(ds.class_len(1), 3);

    // A manifest row pointing at a file that is not on disk is an error.
    fs::write(
        &manifest,
        "relative_path,class_name\npool/0.png,zebra\npool/99.png,zebra\n",
    )
    .unwrap();
    match load_dataset(
        dir.path(),
        &LoadOptions { manifest: Some(manifest), ..LoadOptions::default() },
    ) {
        Err(EpisodeError::Manifest(msg)) => assert!(msg.contains("99.png"), "{msg}"),
        other => panic!("expected a manifest error, got {other:?}"),
    }
}

#[test]
fn separated_synthetic_classes_are_centroid_classifiable() {
    // With sigma = 0.1 noise on well-separated prototypes, classifying each
    // image by its nearest class centroid (centroids from held-out halves)
    // should be nearly perfect; this pins "well-separated" quantitatively.
    let spec = SyntheticSpec { noise: 0.1, ..SyntheticSpec::default() };
    let ds = generate_synthetic(&spec, 5, 40, 31).unwrap();

    let dim = 28 * 28;
    let mut centroids = vec![vec![0.0f64; dim]; 5];
    for class in 0..5 {
        for i in 0..20 {
            let img = ds.image(class, i).unwrap();
            for (acc, &v) in centroids[class].iter_mut().zip(img.data()) {
                *acc += v / 20.0;
            }
        }
    }

    let mut correct = 0;
    let mut total = 0;
    for class in 0..5 {
        for i in 20..40 {
            let img = ds.image(class, i).unwrap();
            let best = (0..5)
                .min_by(|&a, &b| {
                    let da: f64 =
                        centroids[a].iter().zip(img.data()).map(|(c, v)| (c - v).powi(2)).sum();
                    let db: f64 =
                        centroids[b].iter().zip(img.data()).map(|(c, v)| (c - v).powi(2)).sum();
                    da.partial_cmp(&db).unwrap()
                })
                .unwrap();
            correct += usize::from(best == class);
            total += 1;
        }
    }
    let accuracy = correct as f64 / total as f64;
    assert!(accuracy >= 0.99, "nearest-centroid accuracy {accuracy}");
}

#[test]
fn episodes_sample_from_disk_backed_datasets_too() {
    let dir = tempfile::tempdir().unwrap();
    for class in 0..4 {
        let class_dir = dir.path().join(format!("c{class}"));
        fs::create_dir(&class_dir).unwrap();
        for i in 0..6 {
            write_gray_png(&class_dir.join(format!("{i}.png")), 8, 8, (class * 40 + i * 5) as u8);
        }
    }
    let ds = load_dataset(dir.path(), &LoadOptions::default()).unwrap();
    let spec = EpisodeSpec { ways: 3, shots: 2, queries: 2 };
    let mut rng = derive_rng(5, STREAM_EVAL, 0);
    let ep = sample_episode(&ds, &spec, &mut rng).unwrap();
    assert_eq!(ep.support_images.shape(), &[6, 8, 8, 1]);
    assert_eq!(ep.query_images.shape(), &[6, 8, 8, 1]);
}
