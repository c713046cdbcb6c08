//! Weight bundles for the pretrained model `A` and the random model `R`, and
//! the splice that combines them into one evaluation model.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand_distr::{Distribution, Normal};

use crate::arch::{ArchitectureSpec, ModelVariant, VariantTag};
use crate::error::{Error, Result};
use crate::seed;
use crate::tensor::Tensor;

/// Standard deviation of the random model's filter weights.
pub const RANDOM_WEIGHT_STD: f32 = 0.01;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Provenance {
    /// Trained on a source task, e.g. `"imagenet"`.
    Pretrained { source_task: String },
    Random { seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub weights: Tensor,
    pub bias: Tensor,
}

/// Weights and biases for learned layers `1..=k` of one network.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightBundle {
    provenance: Provenance,
    layers: BTreeMap<usize, LayerWeights>,
}

impl WeightBundle {
    pub fn new(provenance: Provenance, layers: BTreeMap<usize, LayerWeights>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::weight("(none)", "bundle holds no layers"));
        }
        for (expected, &ordinal) in (1..).zip(layers.keys()) {
            if ordinal != expected {
                return Err(Error::weight(
                    format!("#{expected}"),
                    "learned layers must cover a contiguous range starting at 1",
                ));
            }
        }
        Ok(WeightBundle { provenance, layers })
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn layer(&self, ordinal: usize) -> Option<&LayerWeights> {
        self.layers.get(&ordinal)
    }

    pub fn layers(&self) -> impl Iterator<Item = (usize, &LayerWeights)> {
        self.layers.iter().map(|(&k, v)| (k, v))
    }

    /// Highest learned-layer ordinal present.
    pub fn coverage(&self) -> usize {
        self.layers.len()
    }

    /// Checks every held layer against `arch`.
    pub fn validate(&self, arch: &ArchitectureSpec) -> Result<()> {
        if self.coverage() > arch.depth() {
            return Err(Error::weight(
                format!("#{}", self.coverage()),
                format!("{} has only {} learned layers", arch.name(), arch.depth()),
            ));
        }
        for (&ordinal, layer) in &self.layers {
            check_layer(arch, ordinal, layer)?;
        }
        Ok(())
    }
}

fn check_layer(arch: &ArchitectureSpec, ordinal: usize, layer: &LayerWeights) -> Result<()> {
    let name = arch.layer_name(ordinal)?;
    let (wshape, bshape) = arch.weight_shapes(ordinal)?;
    if layer.weights.shape() != wshape.as_slice() {
        let detail = if wshape.len() == 4 && layer.weights.rank() == 4 {
            format!(" (expected inChannels {})", wshape[3])
        } else {
            String::new()
        };
        return Err(Error::weight(
            format!("{name}.weight"),
            format!(
                "expected shape {:?}, found {:?}{detail}",
                wshape,
                layer.weights.shape()
            ),
        ));
    }
    if layer.bias.shape() != bshape.as_slice() {
        return Err(Error::weight(
            format!("{name}.bias"),
            format!("expected shape {:?}, found {:?}", bshape, layer.bias.shape()),
        ));
    }
    Ok(())
}

/// Random bundle covering every learned layer of `arch`.
pub fn random_bundle(arch: &ArchitectureSpec, seed: u64) -> WeightBundle {
    random_bundle_upto(arch, seed, arch.depth())
}

/// Random bundle covering learned layers `1..=upto`.
///
/// Each layer draws from its own ChaCha stream, so layer `k` is identical
/// whatever `upto` is. Weights are N(0, 0.01²); biases are zero.
pub fn random_bundle_upto(arch: &ArchitectureSpec, seed: u64, upto: usize) -> WeightBundle {
    let upto = upto.clamp(1, arch.depth());
    let normal = Normal::new(0.0f32, RANDOM_WEIGHT_STD).expect("positive std");
    let layers = (1..=upto)
        .map(|ordinal| {
            let (wshape, bshape) = arch.weight_shapes(ordinal).expect("ordinal within arch");
            let mut rng = seed::rng(seed);
            rng.set_stream(ordinal as u64);
            let n: usize = wshape.iter().product();
            let data: Vec<f32> = (0..n).map(|_| normal.sample(&mut rng)).collect();
            let layer = LayerWeights {
                weights: Tensor::new(wshape, data).expect("shape from arch"),
                bias: Tensor::zeros(&bshape).expect("shape from arch"),
            };
            (ordinal, layer)
        })
        .collect();
    WeightBundle {
        provenance: Provenance::Random { seed },
        layers,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightSource {
    Pretrained,
    Random,
}

/// Borrowed per-layer weights of one evaluation model, ordinals `1..=n`.
#[derive(Debug, Clone)]
pub struct ModelWeights<'a> {
    variant: ModelVariant,
    layers: Vec<(WeightSource, &'a LayerWeights)>,
}

impl<'a> ModelWeights<'a> {
    pub fn variant(&self) -> ModelVariant {
        self.variant
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn layer(&self, ordinal: usize) -> Option<&'a LayerWeights> {
        self.layers.get(ordinal.checked_sub(1)?).map(|&(_, l)| l)
    }

    pub fn source(&self, ordinal: usize) -> Option<WeightSource> {
        self.layers.get(ordinal.checked_sub(1)?).map(|&(s, _)| s)
    }
}

/// Splices the pretrained and random bundles into the variant's weights.
///
/// `PretrainedPrefix` takes layers `1..=n` from `pretrained`,
/// `RandomBaseline` takes them from `random`, and `Hybrid` takes `1..n` from
/// `pretrained` and layer `n` from `random`. A bundle the variant does not
/// draw from may be `None`.
pub fn assemble_variant<'a>(
    arch: &ArchitectureSpec,
    pretrained: Option<&'a WeightBundle>,
    random: Option<&'a WeightBundle>,
    variant: ModelVariant,
) -> Result<ModelWeights<'a>> {
    arch.check_n(variant.n)?;
    let n = variant.n;
    let mut layers = Vec::with_capacity(n);
    for ordinal in 1..=n {
        let source = match variant.tag {
            VariantTag::PretrainedPrefix => WeightSource::Pretrained,
            VariantTag::RandomBaseline => WeightSource::Random,
            VariantTag::Hybrid if ordinal == n => WeightSource::Random,
            VariantTag::Hybrid => WeightSource::Pretrained,
        };
        let bundle = match source {
            WeightSource::Pretrained => pretrained,
            WeightSource::Random => random,
        };
        let name = arch.layer_name(ordinal)?;
        let layer = bundle
            .ok_or_else(|| {
                Error::weight(
                    name.clone(),
                    format!("{} needs a {source:?} bundle", variant.label()),
                )
            })?
            .layer(ordinal)
            .ok_or_else(|| {
                let (w, _) = arch.weight_shapes(ordinal).expect("ordinal in range");
                Error::weight(
                    format!("{name}.weight"),
                    format!("missing from {source:?} bundle; expected shape {w:?}"),
                )
            })?;
        check_layer(arch, ordinal, layer)?;
        layers.push((source, layer));
    }
    Ok(ModelWeights { variant, layers })
}

/// Constant-valued bundle, handy for tests and smoke runs.
pub fn constant_bundle(arch: &ArchitectureSpec, weight: f32, bias: f32, source_task: &str) -> WeightBundle {
    let layers = (1..=arch.depth())
        .map(|ordinal| {
            let (w, b) = arch.weight_shapes(ordinal).expect("ordinal in range");
            (
                ordinal,
                LayerWeights {
                    weights: Tensor::filled(&w, weight).expect("valid shape"),
                    bias: Tensor::filled(&b, bias).expect("valid shape"),
                },
            )
        })
        .collect();
    WeightBundle {
        provenance: Provenance::Pretrained {
            source_task: source_task.into(),
        },
        layers,
    }
}

/// Replaces one layer, keeping coverage contiguous.
pub fn with_layer(mut bundle: WeightBundle, ordinal: usize, layer: LayerWeights) -> Result<WeightBundle> {
    if ordinal == 0 || ordinal > bundle.coverage() + 1 {
        return Err(Error::weight(format!("#{ordinal}"), "would leave a gap in coverage"));
    }
    bundle.layers.insert(ordinal, layer);
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{build_alexnet, build_alexnet_mini};

    fn mean_std(v: &[f32]) -> (f64, f64) {
        let n = v.len() as f64;
        let mean = v.iter().map(|&x| x as f64).sum::<f64>() / n;
        let var = v.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, libm::sqrt(var))
    }

    #[test]
    fn random_conv1_statistics() {
        let arch = build_alexnet();
        let b = random_bundle_upto(&arch, 2019, 1);
        let w = b.layer(1).unwrap().weights.data();
        assert_eq!(w.len(), 34_848);
        let (mean, std) = mean_std(w);
        assert!(mean.abs() < 5e-4, "mean {mean}");
        assert!((std - 0.01).abs() < 0.001, "std {std}");
        assert!(b.layer(1).unwrap().bias.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn random_is_deterministic_and_prefix_stable() {
        let arch = build_alexnet_mini();
        let a = random_bundle(&arch, 7);
        assert_eq!(a, random_bundle(&arch, 7));
        assert_ne!(a, random_bundle(&arch, 8));
        let short = random_bundle_upto(&arch, 7, 3);
        assert_eq!(short.coverage(), 3);
        for k in 1..=3 {
            assert_eq!(short.layer(k), a.layer(k));
        }
        a.validate(&arch).unwrap();
    }

    #[test]
    fn hybrid_splice_sources() {
        let arch = build_alexnet_mini();
        let pre = constant_bundle(&arch, 0.5, 0.0, "test");
        let rnd = random_bundle(&arch, 1);
        let v = ModelVariant::new(VariantTag::Hybrid, 8, &arch).unwrap();
        let m = assemble_variant(&arch, Some(&pre), Some(&rnd), v).unwrap();
        for k in 1..=7 {
            assert_eq!(m.source(k), Some(WeightSource::Pretrained));
            assert!(core::ptr::eq(m.layer(k).unwrap(), pre.layer(k).unwrap()));
        }
        assert_eq!(m.source(8), Some(WeightSource::Random));
        assert!(core::ptr::eq(m.layer(8).unwrap(), rnd.layer(8).unwrap()));
    }

    #[test]
    fn hybrid_one_equals_random_one() {
        let arch = build_alexnet_mini();
        let pre = constant_bundle(&arch, 0.5, 0.0, "test");
        let rnd = random_bundle(&arch, 1);
        let h = assemble_variant(&arch, Some(&pre), Some(&rnd), ModelVariant { tag: VariantTag::Hybrid, n: 1 }).unwrap();
        let r = assemble_variant(&arch, Some(&pre), Some(&rnd), ModelVariant { tag: VariantTag::RandomBaseline, n: 1 }).unwrap();
        assert_eq!(h.layer(1), r.layer(1));
        assert_eq!(h.source(1), Some(WeightSource::Random));
    }

    #[test]
    fn assemble_errors() {
        let arch = build_alexnet();
        let rnd = random_bundle_upto(&arch, 1, 2);
        let v9 = ModelVariant { tag: VariantTag::RandomBaseline, n: 9 };
        assert!(matches!(assemble_variant(&arch, None, Some(&rnd), v9), Err(Error::Config(_))));
        let v3 = ModelVariant { tag: VariantTag::RandomBaseline, n: 3 };
        match assemble_variant(&arch, None, Some(&rnd), v3) {
            Err(Error::Weight { layer, message }) => {
                assert_eq!(layer, "conv3.weight");
                assert!(message.contains("[384, 3, 3, 256]"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
        let v1 = ModelVariant { tag: VariantTag::PretrainedPrefix, n: 1 };
        assert!(matches!(assemble_variant(&arch, None, Some(&rnd), v1), Err(Error::Weight { .. })));
    }

    #[test]
    fn validation_names_in_channels() {
        let arch = build_alexnet();
        let mut layers = BTreeMap::new();
        layers.insert(
            1,
            LayerWeights {
                weights: Tensor::zeros(&[96, 11, 11, 4]).unwrap(),
                bias: Tensor::zeros(&[96]).unwrap(),
            },
        );
        let b = WeightBundle::new(Provenance::Pretrained { source_task: "x".into() }, layers).unwrap();
        let err = b.validate(&arch).unwrap_err();
        let msg = alloc::string::ToString::to_string(&err);
        assert!(msg.contains("conv1.weight") && msg.contains("inChannels 3"), "{msg}");
    }

    #[test]
    fn bundles_must_start_at_one() {
        let mut layers = BTreeMap::new();
        layers.insert(
            2,
            LayerWeights {
                weights: Tensor::zeros(&[1, 1]).unwrap(),
                bias: Tensor::zeros(&[1]).unwrap(),
            },
        );
        assert!(WeightBundle::new(Provenance::Random { seed: 0 }, layers).is_err());
    }
}
