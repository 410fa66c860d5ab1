//! Set-level guarantees of the episode sampler, checked exhaustively over
//! ten thousand sampled episodes: support/query disjointness, exact
//! per-label balance, label-permutation structure and stream determinism.

use std::collections::HashSet;

use episodes::{
    derive_rng, generate_synthetic, sample_episode, DatasetHandle, EpisodeSpec, SyntheticSpec,
    STREAM_EPISODES,
};

fn handle() -> DatasetHandle {
    let spec = SyntheticSpec {
        height: 5,
        width: 5,
        channels: 1,
        noise: 0.05,
        prototype_cells: 3,
    };
    generate_synthetic(&spec, 12, 16, 2024).unwrap()
}

/// Checks every sampler invariant on one episode, panicking with context on
/// the first violation.
fn check_episode(ep: &episodes::Episode, spec: &EpisodeSpec, handle: &DatasetHandle, tag: u64) {
    // Disjointness by image identity.
    let support: HashSet<(usize, usize)> = ep.support_refs.iter().copied().collect();
    let query: HashSet<(usize, usize)> = ep.query_refs.iter().copied().collect();
    assert_eq!(support.len(), spec.support_size(), "episode {tag}: duplicate support image");
    assert_eq!(query.len(), spec.query_size(), "episode {tag}: duplicate query image");
    assert!(support.is_disjoint(&query), "episode {tag}: support/query overlap");

    // Exact balance: every episode label owns K support and Q query rows,
    // and all of them come from the class the label maps to.
    for label in 0..spec.ways {
        let class = ep.class_map[label];
        let s_count = ep
            .support_refs
            .iter()
            .zip(&ep.support_labels)
            .filter(|((c, _), &l)| l == label && *c == class)
            .count();
        let q_count = ep
            .query_refs
            .iter()
            .zip(&ep.query_labels)
            .filter(|((c, _), &l)| l == label && *c == class)
            .count();
        assert_eq!(s_count, spec.shots, "episode {tag}: label {label} support imbalance");
        assert_eq!(q_count, spec.queries, "episode {tag}: label {label} query imbalance");
    }

    // The label permutation is a bijection onto distinct dataset classes,
    // so the multiset of class usage is label-assignment independent:
    // every chosen class appears exactly shots+queries times.
    let distinct: HashSet<usize> = ep.class_map.iter().copied().collect();
    assert_eq!(distinct.len(), spec.ways, "episode {tag}: repeated class");
    for &class in &distinct {
        assert!(class < handle.class_count(), "episode {tag}: class out of range");
        let uses = ep
            .support_refs
            .iter()
            .chain(&ep.query_refs)
            .filter(|(c, _)| *c == class)
            .count();
        assert_eq!(uses, spec.shots + spec.queries, "episode {tag}: class usage skew");
    }

    // Image indices stay within their class.
    for &(c, i) in ep.support_refs.iter().chain(&ep.query_refs) {
        assert!(i < handle.class_len(c), "episode {tag}: image index out of range");
    }
}

#[test]
fn ten_thousand_episodes_violate_nothing() {
    let ds = handle();
    let one_shot = EpisodeSpec { ways: 5, shots: 1, queries: 5 };
    let multi_shot = EpisodeSpec { ways: 4, shots: 3, queries: 2 };

    for index in 0..5000u64 {
        let mut rng = derive_rng(11, STREAM_EPISODES, index);
        let ep = sample_episode(&ds, &one_shot, &mut rng).unwrap();
        check_episode(&ep, &one_shot, &ds, index);
    }
    for index in 0..5000u64 {
        let mut rng = derive_rng(13, STREAM_EPISODES, index);
        let ep = sample_episode(&ds, &multi_shot, &mut rng).unwrap();
        check_episode(&ep, &multi_shot, &ds, index);
    }
}

#[test]
fn episode_streams_are_pure_functions_of_their_coordinates() {
    let ds = handle();
    let spec = EpisodeSpec { ways: 5, shots: 2, queries: 3 };

    // Same coordinates -> identical episodes, including pixels.
    for index in [0u64, 17, 4999] {
        let a = sample_episode(&ds, &spec, &mut derive_rng(3, STREAM_EPISODES, index)).unwrap();
        let b = sample_episode(&ds, &spec, &mut derive_rng(3, STREAM_EPISODES, index)).unwrap();
        assert_eq!(a.task_id, b.task_id);
        assert_eq!(a.support_refs, b.support_refs);
        assert_eq!(a.query_refs, b.query_refs);
        assert_eq!(a.support_images.data(), b.support_images.data());
        assert_eq!(a.query_images.data(), b.query_images.data());
    }

    // Adjacent indices give different tasks (streams do not repeat).
    let a = sample_episode(&ds, &spec, &mut derive_rng(3, STREAM_EPISODES, 0)).unwrap();
    let b = sample_episode(&ds, &spec, &mut derive_rng(3, STREAM_EPISODES, 1)).unwrap();
    assert_ne!(
        (a.task_id, a.support_refs.clone()),
        (b.task_id, b.support_refs.clone())
    );
}

#[test]
fn class_sampling_is_roughly_uniform() {
    // Over many episodes every class should be chosen a similar number of
    // times; a 12-class pool sampled 5-at-a-time 2000 times gives each
    // class an expectation of 833 appearances.
    let ds = handle();
    let spec = EpisodeSpec { ways: 5, shots: 1, queries: 1 };
    let mut counts = vec![0usize; ds.class_count()];
    for index in 0..2000u64 {
        let mut rng = derive_rng(21, STREAM_EPISODES, index);
        let ep = sample_episode(&ds, &spec, &mut rng).unwrap();
        for &c in &ep.class_map {
            counts[c] += 1;
        }
    }
    let expected = 2000.0 * 5.0 / 12.0;
    for (class, &count) in counts.iter().enumerate() {
        let dev = (count as f64 - expected).abs() / expected;
        assert!(dev < 0.2, "class {class} chosen {count} times, expected ~{expected:.0}");
    }
}
