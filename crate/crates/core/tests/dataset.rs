use proptest::prelude::*;
use vadlab::data::cifar::{encode_cifar10, encode_cifar100, CIFAR100_RECORD, CIFAR10_RECORD};
use vadlab::data::{
    base_augment, batch_indices, crop_padded, generate_synthetic, hflip, make_batches,
    parse_cifar10, parse_cifar100, CifarKind, Dataset, Sample, SyntheticSpec, AUGMENT_PAD,
};
use vadlab::views::Image;
use vadlab::Error;

fn synthetic32(seed: u64, n: usize, classes: usize) -> Dataset {
    generate_synthetic(seed, n, classes, 32, 32, 0.7)
}

fn nearest_template(img: &Image, templates: &[Image]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (k, t) in templates.iter().enumerate() {
        let d: f64 = img
            .pixels()
            .iter()
            .zip(t.pixels())
            .map(|(&a, &b)| ((a - b) as f64).powi(2))
            .sum();
        if d < best.0 {
            best = (d, k);
        }
    }
    best.1
}

#[test]
fn cifar10_round_trip_is_byte_exact() {
    let d = synthetic32(4, 25, 10);
    let bytes = encode_cifar10(&d.samples).unwrap();
    assert_eq!(bytes.len(), 25 * CIFAR10_RECORD);
    let parsed = parse_cifar10(&bytes).unwrap();
    assert_eq!(encode_cifar10(&parsed).unwrap(), bytes);
    for (a, b) in parsed.iter().zip(&d.samples) {
        assert_eq!(a.label, b.label);
        assert_eq!(a.image.to_bytes(), b.image.to_bytes());
        assert!(a.image.pixels().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn cifar100_round_trip_is_byte_exact() {
    let d = synthetic32(5, 30, 100);
    let bytes = encode_cifar100(&d.samples, |fine| (fine / 5) as u8).unwrap();
    assert_eq!(bytes.len(), 30 * CIFAR100_RECORD);
    let parsed = parse_cifar100(&bytes).unwrap();
    assert_eq!(
        encode_cifar100(&parsed, |fine| (fine / 5) as u8).unwrap(),
        bytes
    );
    assert_eq!(
        parsed.iter().map(|s| s.label).collect::<Vec<_>>(),
        d.samples.iter().map(|s| s.label).collect::<Vec<_>>()
    );
}

#[test]
fn rejected_fixtures_map_to_data_exit_code() {
    let err = parse_cifar10(&vec![0u8; CIFAR10_RECORD - 1]).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    let mut bad = vec![0u8; CIFAR100_RECORD];
    bad[1] = 100;
    let err = parse_cifar100(&bad).unwrap_err();
    assert!(matches!(err, Error::Parse { offset: 1, .. }));
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn load_from_directory_layout() {
    let dir = tempfile::tempdir().unwrap();
    let sub = dir.path().join("cifar-10-batches-bin");
    std::fs::create_dir(&sub).unwrap();
    let d = synthetic32(6, 12, 10);
    let bytes = encode_cifar10(&d.samples).unwrap();
    for f in vadlab::data::cifar::CIFAR10_TRAIN_FILES {
        std::fs::write(sub.join(f), &bytes).unwrap();
    }
    std::fs::write(
        sub.join(vadlab::data::cifar::CIFAR10_TEST_FILE),
        &bytes[..2 * CIFAR10_RECORD],
    )
    .unwrap();
    let (train, test) = CifarKind::Cifar10.load(dir.path()).unwrap();
    assert_eq!((train.len(), test.len()), (60, 2));
    assert_eq!(train.num_classes, 10);
    let missing = CifarKind::Cifar100.load(dir.path()).unwrap_err();
    assert_eq!(missing.exit_code(), 2);
}

#[test]
fn separable_synthetic_set_fits_template_oracle() {
    let spec = SyntheticSpec {
        seed: 11,
        classes: 2,
        height: 32,
        width: 32,
        separability: 1.0,
    };
    let d = spec.generate(64, 0);
    assert_eq!(d, generate_synthetic(11, 64, 2, 32, 32, 1.0));
    let templates = spec.templates();
    let correct = d
        .samples
        .iter()
        .filter(|s| nearest_template(&s.image, &templates) == s.label)
        .count();
    assert_eq!(correct, 64);
    assert_eq!(d.class_counts(), vec![32, 32]);
}

#[test]
fn synthetic_is_deterministic_and_total() {
    assert_eq!(synthetic32(3, 16, 4), synthetic32(3, 16, 4));
    assert_ne!(synthetic32(3, 16, 4), synthetic32(4, 16, 4));
    assert!(synthetic32(3, 0, 4).is_empty());
    synthetic32(3, 40, 4).validate().unwrap();
}

#[test]
fn subset_edges() {
    let d = synthetic32(1, 40, 4);
    assert!(d.subset(0, 9).is_empty());
    assert_eq!(d.subset(100, 9), d);
    let s = d.subset(3, 9);
    assert_eq!(s.class_counts(), vec![3; 4]);
    assert_eq!(s, d.subset(3, 9));
}

#[test]
fn batching_shapes_and_order() {
    let d = generate_synthetic(2, 10, 2, 8, 8, 1.0);
    let batches: Vec<_> = make_batches(&d, 4, 0, 0, false, false).collect();
    assert_eq!(
        batches.iter().map(|b| b.len()).collect::<Vec<_>>(),
        vec![4, 4, 2]
    );
    assert_eq!(batches[0].images.shape(), &[4, 3, 8, 8]);
    let order: Vec<usize> = batches.iter().flat_map(|b| b.indices.clone()).collect();
    assert_eq!(order, (0..10).collect::<Vec<_>>());
    for b in &batches {
        assert!(b.view_labels.is_none());
        for (i, &idx) in b.indices.iter().enumerate() {
            assert_eq!(b.labels[i], d.samples[idx].label);
            assert_eq!(b.image(i), d.samples[idx].image);
        }
    }
}

#[test]
fn augmentation_disabled_is_identity() {
    let d = synthetic32(8, 3, 3);
    let mut rng = rand::rng();
    for s in &d.samples {
        assert_eq!(base_augment(&s.image, &mut rng, false), s.image);
        let c = crop_padded(&s.image, AUGMENT_PAD, 2, 7);
        assert_eq!(hflip(&hflip(&c)), c);
        assert_eq!(
            crop_padded(&s.image, AUGMENT_PAD, AUGMENT_PAD, AUGMENT_PAD),
            s.image
        );
    }
}

fn sample_of(label: usize) -> Sample {
    Sample {
        label,
        image: Image::new(3, 1, 1, vec![0.0; 3]).unwrap(),
    }
}

proptest! {
    #[test]
    fn each_sample_once_per_epoch(n in 0usize..200, bs in 1usize..40, seed: u64, epoch in 0usize..50) {
        let batches = batch_indices(n, bs, seed, epoch, true);
        prop_assert!(batches.iter().all(|b| !b.is_empty() && b.len() <= bs));
        let mut all: Vec<usize> = batches.concat();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        prop_assert_eq!(batches, batch_indices(n, bs, seed, epoch, true));
    }

    #[test]
    fn subset_is_balanced(counts in proptest::collection::vec(0usize..12, 1..6), per in 0usize..10, seed: u64) {
        let samples: Vec<Sample> = counts.iter().enumerate().flat_map(|(k, &c)| (0..c).map(move |_| sample_of(k))).collect();
        let d = Dataset::new("p", counts.len(), samples);
        let s = d.subset(per, seed);
        let expect: Vec<usize> = counts.iter().map(|&c| c.min(per)).collect();
        prop_assert_eq!(s.class_counts(), expect);
    }
}
