//! SVM models and feature matrices in the tensor container.
//!
//! A model holds `svm.classK.weight`, `svm.classK.bias` (K counts from 0 in
//! label order), `svm.standardize.mean` and `svm.standardize.scale`. The
//! chosen C and the grid scores ride in the label as `c=..;cv=C:acc,...`.
//!
//! A feature matrix holds `features` (rows x cols), `labels` and `groups`.

use std::path::Path;

use layergauge_core::svm::{BinarySvm, FeatureMatrix, LinearSvmModel, Standardizer};
use layergauge_core::Tensor;

use crate::container::{self, Container, TAG_PRETRAINED};
use crate::error::{Error, Result};

fn model_label(m: &LinearSvmModel) -> String {
    let cv: Vec<String> = m.cv_scores.iter().map(|(c, a)| format!("{c}:{a}")).collect();
    format!("c={};cv={}", m.c, cv.join(","))
}

fn parse_label(path: &Path, label: &str) -> Result<(f64, Vec<(f64, f64)>)> {
    let bad = || Error::format(path, format!("malformed model label '{label}'"));
    let (c, cv) = label.split_once(';').ok_or_else(bad)?;
    let c: f64 = c.strip_prefix("c=").and_then(|v| v.parse().ok()).ok_or_else(bad)?;
    let cv = cv.strip_prefix("cv=").ok_or_else(bad)?;
    let mut scores = Vec::new();
    for item in cv.split(',').filter(|s| !s.is_empty()) {
        let (a, b) = item.split_once(':').ok_or_else(bad)?;
        scores.push((a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?));
    }
    Ok((c, scores))
}

pub fn save_svm_model(model: &LinearSvmModel, path: &Path) -> Result<()> {
    let mut c = Container::new(TAG_PRETRAINED, 0, model_label(model));
    for (k, m) in model.classes.iter().enumerate() {
        c.push(format!("svm.class{k}.weight"), Tensor::vector(m.weights.clone()));
        c.push(format!("svm.class{k}.bias"), Tensor::vector(vec![m.bias]));
    }
    c.push("svm.standardize.mean", Tensor::vector(model.standardizer.mean.clone()));
    c.push("svm.standardize.scale", Tensor::vector(model.standardizer.scale.clone()));
    container::save(path, &c)
}

/// Loads a model; per-sweep dual histories are not stored and come back empty.
pub fn load_svm_model(path: &Path) -> Result<LinearSvmModel> {
    let c = container::load(path)?;
    let take = |name: &str| {
        c.get(name)
            .map(|t| t.data().to_vec())
            .ok_or_else(|| Error::format(path, format!("missing tensor {name}")))
    };
    let mean = take("svm.standardize.mean")?;
    let scale = take("svm.standardize.scale")?;
    let mut classes = Vec::new();
    while c.get(&format!("svm.class{}.weight", classes.len())).is_some() {
        let k = classes.len();
        let weights = take(&format!("svm.class{k}.weight"))?;
        let bias = take(&format!("svm.class{k}.bias"))?;
        if weights.len() != mean.len() || bias.len() != 1 {
            return Err(Error::format(path, format!("class {k} has inconsistent shapes")));
        }
        classes.push(BinarySvm {
            weights,
            bias: bias[0],
            dual_history: Vec::new(),
        });
    }
    if classes.len() < 2 || scale.len() != mean.len() {
        return Err(Error::format(path, "incomplete model"));
    }
    let (cval, cv_scores) = parse_label(path, &c.label)?;
    Ok(LinearSvmModel {
        classes,
        standardizer: Standardizer { mean, scale },
        c: cval,
        cv_scores,
    })
}

fn index_tensor(values: &[usize]) -> Tensor {
    Tensor::vector(values.iter().map(|&v| v as f32).collect())
}

pub fn save_features(m: &FeatureMatrix, label: &str, path: &Path) -> Result<()> {
    let mut c = Container::new(TAG_PRETRAINED, 0, label);
    c.push("features", Tensor::new(vec![m.rows(), m.cols()], m.values().to_vec())?);
    c.push("labels", index_tensor(m.labels()));
    c.push("groups", index_tensor(m.groups()));
    container::save(path, &c)
}

pub fn load_features(path: &Path) -> Result<FeatureMatrix> {
    let c = container::load(path)?;
    let get = |name: &str| c.get(name).ok_or_else(|| Error::format(path, format!("missing tensor {name}")));
    let features = get("features")?;
    if features.rank() != 2 {
        return Err(Error::format(path, "features must be rank 2"));
    }
    let index = |t: &Tensor| -> Result<Vec<usize>> {
        t.data()
            .iter()
            .map(|&v| {
                if v >= 0.0 && v.fract() == 0.0 && v < 16_777_216.0 {
                    Ok(v as usize)
                } else {
                    Err(Error::format(path, format!("index value {v} is not a small integer")))
                }
            })
            .collect()
    };
    let labels = index(get("labels")?)?;
    let groups = index(get("groups")?)?;
    Ok(FeatureMatrix::new(features.shape()[1], features.data().to_vec(), labels, groups)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use layergauge_core::svm::{train, SvmConfig};

    #[test]
    fn model_and_features_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let values: Vec<f32> = (0..40).map(|i| ((i * 7919) % 23) as f32 / 7.0 + (i / 10) as f32 * 3.0).collect();
        let labels = (0..20).map(|i| i / 10).collect();
        let m = FeatureMatrix::ungrouped(2, values, labels).unwrap();
        let cfg = SvmConfig {
            c_grid: vec![0.1, 1.0],
            folds: 2,
            ..SvmConfig::default()
        };
        let model = train(&m, &cfg).unwrap();
        let p = dir.path().join("m.otsw");
        save_svm_model(&model, &p).unwrap();
        let back = load_svm_model(&p).unwrap();
        assert_eq!(back.c, model.c);
        assert_eq!(back.cv_scores, model.cv_scores);
        assert_eq!(back.standardizer, model.standardizer);
        for (a, b) in back.classes.iter().zip(&model.classes) {
            assert_eq!((&a.weights, a.bias), (&b.weights, b.bias));
        }

        let f = dir.path().join("f.otsw");
        save_features(&m, "test", &f).unwrap();
        assert_eq!(load_features(&f).unwrap(), m);
    }
}
