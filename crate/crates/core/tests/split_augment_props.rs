use std::collections::BTreeSet;

use layergauge_core::dataset::{self, AugmentConfig, DatasetManifest, LabeledImage, ManifestEntry};
use layergauge_core::{seed, Tensor};
use proptest::prelude::*;

fn manifest(counts: &[usize]) -> DatasetManifest {
    let entries = counts
        .iter()
        .enumerate()
        .flat_map(|(c, &n)| {
            (0..n).map(move |i| ManifestEntry {
                relative_path: format!("c{c}/{i}.png"),
                class_name: format!("class{c}"),
            })
        })
        .collect();
    DatasetManifest::new("root", entries).unwrap()
}

proptest! {
    #[test]
    fn split_is_a_stratified_partition(
        counts in prop::collection::vec(2usize..60, 2..5),
        seed in any::<u64>(),
    ) {
        let m = manifest(&counts);
        let plan = dataset::stratified_split(&m, 0.7, seed).unwrap();
        let train: BTreeSet<_> = plan.train_ids.iter().collect();
        let test: BTreeSet<_> = plan.test_ids.iter().collect();
        prop_assert_eq!(train.len(), plan.train_ids.len());
        prop_assert!(train.is_disjoint(&test));
        prop_assert_eq!(train.len() + test.len(), m.entries().len());
        for (c, &n) in counts.iter().enumerate() {
            let prefix = format!("c{c}/");
            let k = plan.train_ids.iter().filter(|id| id.starts_with(&prefix)).count();
            prop_assert_eq!(k, (0.7 * n as f64).floor() as usize);
            prop_assert!((k as f64 - 0.7 * n as f64).abs() <= 1.0);
        }
        prop_assert_eq!(plan, dataset::stratified_split(&m, 0.7, seed).unwrap());
    }

    #[test]
    fn augmentation_keeps_label_and_raster(
        h in 2usize..12, w in 2usize..12, label in 0usize..4, seed_value in any::<u64>(), copies in 0usize..4,
    ) {
        let data = (0..h * w * 3).map(|i| ((i * 7919) % 97) as f32 / 96.0).collect();
        let img = LabeledImage::new("img", Tensor::new(vec![h, w, 3], data).unwrap(), label, "x").unwrap();
        let mut rng = seed::rng(seed_value);
        let out = dataset::augment(&img, &AugmentConfig { copies_per_image: copies }, &mut rng);
        prop_assert_eq!(out.len(), copies);
        for a in out {
            prop_assert_eq!(a.label, label);
            prop_assert_eq!(a.pixels.shape(), img.pixels.shape());
        }
    }

    #[test]
    fn flips_are_involutions(h in 1usize..10, w in 1usize..10) {
        let data = (0..h * w * 3).map(|i| i as f32).collect();
        let t = Tensor::new(vec![h, w, 3], data).unwrap();
        prop_assert_eq!(dataset::flip_horizontal(&dataset::flip_horizontal(&t)), t.clone());
        prop_assert_eq!(dataset::flip_vertical(&dataset::flip_vertical(&t)), t);
    }

    #[test]
    fn square_quarter_turns_permute_pixels(n in 1usize..9, turns in 0usize..4) {
        let data: Vec<f32> = (0..n * n * 3).map(|i| i as f32).collect();
        let t = Tensor::new(vec![n, n, 3], data).unwrap();
        let r = dataset::rotate(&t, 90.0 * turns as f64);
        let mut a: Vec<u32> = t.data().iter().map(|v| v.to_bits()).collect();
        let mut b: Vec<u32> = r.data().iter().map(|v| v.to_bits()).collect();
        a.sort_unstable();
        b.sort_unstable();
        prop_assert_eq!(a, b);
    }
}
