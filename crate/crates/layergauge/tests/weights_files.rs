//! Weight, feature and model files on disk.

use std::collections::BTreeMap;

use layergauge::container::{self, Container};
use layergauge::core::arch::{build_alexnet, build_two_block};
use layergauge::core::svm::{self, FeatureMatrix, SvmConfig};
use layergauge::core::weights::random_bundle;
use layergauge::core::{LayerWeights, Provenance, Tensor, WeightBundle};
use layergauge::{svm_io, weights_io, Error};

#[test]
fn random_bundle_round_trips_with_provenance() {
    let arch = build_two_block();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.otsw");
    let bundle = random_bundle(&arch, 42);
    weights_io::save_weights(&bundle, &path).unwrap();
    let back = weights_io::load_weights(&path, &arch).unwrap();
    assert_eq!(back, bundle);
    assert_eq!(back.provenance(), &Provenance::Random { seed: 42 });
}

#[test]
fn pretrained_provenance_survives() {
    let arch = build_two_block();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("edges.otsw");
    let bundle = layergauge::synthetic::oriented_edge_bundle(&arch, 5.0, 1).unwrap();
    weights_io::save_weights(&bundle, &path).unwrap();
    let back = weights_io::load_weights(&path, &arch).unwrap();
    assert_eq!(
        back.provenance(),
        &Provenance::Pretrained {
            source_task: "oriented-edges".into()
        }
    );
    assert_eq!(weights_io::bundle_digest(&back), weights_io::bundle_digest(&bundle));
}

#[test]
fn four_channel_conv1_names_expected_channels() {
    let arch = build_alexnet();
    let mut layers = BTreeMap::new();
    layers.insert(
        1,
        LayerWeights {
            weights: Tensor::zeros(&[96, 11, 11, 4]).unwrap(),
            bias: Tensor::zeros(&[96]).unwrap(),
        },
    );
    let bad = WeightBundle::new(
        Provenance::Pretrained {
            source_task: "imagenet".into(),
        },
        layers,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.otsw");
    weights_io::save_weights(&bad, &path).unwrap();
    let msg = weights_io::load_weights(&path, &arch).unwrap_err().to_string();
    assert!(msg.contains("conv1.weight") && msg.contains("inChannels 3"), "{msg}");
}

#[test]
fn empty_file_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.otsw");
    std::fs::write(&path, b"").unwrap();
    let err = weights_io::load_weights(&path, &build_two_block()).unwrap_err();
    assert!(matches!(err, Error::Format { .. }), "{err:?}");
}

#[test]
fn truncated_file_is_an_io_error() {
    let arch = build_two_block();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.otsw");
    weights_io::save_weights(&random_bundle(&arch, 1), &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
    let err = weights_io::load_weights(&path, &arch).unwrap_err();
    assert!(err.is_io(), "{err:?}");
}

#[test]
fn unwritable_destination_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("missing").join("deeper").join("w.otsw");
    let err = weights_io::save_weights(&random_bundle(&build_two_block(), 1), &path).unwrap_err();
    assert!(err.is_io(), "{err:?}");
    assert!(!path.exists());
}

#[test]
fn unknown_tensor_name_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("odd.otsw");
    let mut c = Container::new(1, 0, "");
    c.push("conv9.weight", Tensor::zeros(&[1, 1, 1, 1]).unwrap());
    container::save(&path, &c).unwrap();
    assert!(weights_io::load_weights(&path, &build_two_block()).is_err());
}

#[test]
fn svm_model_round_trips_exactly() {
    let rows: Vec<Vec<f32>> = (0..30).map(|i| vec![(i % 3) as f32 + 0.1 * i as f32, (i % 3) as f32 * 2.0 - 0.05 * i as f32]).collect();
    let labels: Vec<usize> = (0..30).map(|i| i % 3).collect();
    let m = FeatureMatrix::from_rows(&rows, labels, (0..30).collect()).unwrap();
    let model = svm::train(&m, &SvmConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("svm.otsw");
    svm_io::save_svm_model(&model, &path).unwrap();
    let back = svm_io::load_svm_model(&path).unwrap();
    assert_eq!(back.c, model.c);
    assert_eq!(back.cv_scores, model.cv_scores);
    assert_eq!(back.standardizer, model.standardizer);
    for (a, b) in back.classes.iter().zip(&model.classes) {
        assert_eq!((&a.weights, a.bias), (&b.weights, b.bias));
    }
    for r in &rows {
        assert_eq!(svm::predict(&back, r).unwrap(), svm::predict(&model, r).unwrap());
    }
}

#[test]
fn feature_matrix_round_trips_exactly() {
    let m = FeatureMatrix::new(3, (0..12).map(|v| v as f32 * 0.37).collect(), vec![0, 1, 1, 0], vec![0, 0, 1, 2]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.otsw");
    svm_io::save_features(&m, "toy", &path).unwrap();
    assert_eq!(svm_io::load_features(&path).unwrap(), m);
}
