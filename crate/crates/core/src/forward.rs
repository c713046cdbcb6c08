//! Forward passes from the input image to a representation cut.

use alloc::format;
use alloc::vec::Vec;

use crate::arch::{ArchitectureSpec, LayerKind, LayerSpec};
use crate::error::{Error, Result};
use crate::nn;
use crate::tensor::Tensor;
use crate::weights::{LayerWeights, ModelWeights};

fn apply_layer(layer: &LayerSpec, weights: Option<&LayerWeights>, input: Tensor) -> Result<Tensor> {
    let learned = || {
        weights.ok_or_else(|| {
            Error::weight(
                format!("#{}", layer.learned_ordinal.unwrap_or(0)),
                "no weights supplied for learned layer",
            )
        })
    };
    Ok(match &layer.kind {
        LayerKind::Input => input,
        LayerKind::Convolution { params, .. } => {
            let w = learned()?;
            nn::conv2d(&input, &w.weights, &w.bias, *params)?
        }
        LayerKind::Relu => {
            let mut t = input;
            t.data_mut().iter_mut().for_each(|v| {
                if !(*v > 0.0) {
                    *v = 0.0
                }
            });
            t
        }
        LayerKind::Normalization(p) => nn::lrn(&input, *p)?,
        LayerKind::MaxPooling { window, stride } => nn::maxpool(&input, *window, *stride)?,
        LayerKind::FullyConnected { .. } => {
            let w = learned()?;
            nn::fully_connected(&input, &w.weights, &w.bias)?
        }
        LayerKind::Dropout => input,
        LayerKind::Softmax | LayerKind::Output => {
            return Err(Error::config(format!(
                "layer {} ({}) lies past every representation cut",
                layer.index,
                layer.kind.name()
            )))
        }
    })
}

fn check_input(arch: &ArchitectureSpec, image: &Tensor) -> Result<()> {
    let [h, w, c] = arch.input_shape();
    if image.shape() != [h, w, c] {
        let found = image.shape();
        let (axis, expected, got) = if found.len() != 3 {
            ("rank", 3, found.len())
        } else if found[0] != h {
            ("height", h, found[0])
        } else if found[1] != w {
            ("width", w, found[1])
        } else {
            ("channels", c, found[2])
        };
        return Err(Error::Dimension {
            op: "forward",
            axis,
            expected,
            found: got,
        });
    }
    Ok(())
}

/// Runs representation block `n` on the activation at cut `n - 1` (the
/// image itself for `n = 1`), using `weights` for block `n`'s learned layer.
/// Returns the activation at cut `n`, unflattened.
pub fn forward_block(arch: &ArchitectureSpec, n: usize, weights: &LayerWeights, activation: Tensor) -> Result<Tensor> {
    let (start, end) = arch.block_range(n)?;
    if n == 1 {
        check_input(arch, &activation)?;
    } else if activation.shape() != arch.activation_shape(start) {
        return Err(Error::Shape {
            shape: activation.shape().to_vec(),
            reason: "activation does not match the previous cut's shape",
        });
    }
    let mut x = activation;
    for layer in &arch.layers()[start + 1..=end] {
        let w = layer.learned_ordinal.map(|_| weights);
        x = apply_layer(layer, w, x)?;
    }
    Ok(x)
}

/// Unflattened activations at cuts `1..=n`.
pub fn forward_cuts(arch: &ArchitectureSpec, weights: &ModelWeights<'_>, image: &Tensor, n: usize) -> Result<Vec<Tensor>> {
    arch.check_n(n)?;
    check_input(arch, image)?;
    let mut out: Vec<Tensor> = Vec::with_capacity(n);
    for k in 1..=n {
        let layer = weights.layer(k).ok_or_else(|| {
            Error::weight(
                arch.layer_name(k).unwrap_or_default(),
                "model weights do not reach this layer",
            )
        })?;
        let prev = match out.last() {
            Some(t) => t.clone(),
            None => image.clone(),
        };
        out.push(forward_block(arch, k, layer, prev)?);
    }
    Ok(out)
}

/// Flattened features read out after representation layer `n`.
pub fn forward_to_representation(
    arch: &ArchitectureSpec,
    weights: &ModelWeights<'_>,
    image: &Tensor,
    n: usize,
) -> Result<Tensor> {
    arch.check_n(n)?;
    check_input(arch, image)?;
    let mut x = image.clone();
    for k in 1..=n {
        let layer = weights.layer(k).ok_or_else(|| {
            Error::weight(
                arch.layer_name(k).unwrap_or_default(),
                "model weights do not reach this layer",
            )
        })?;
        x = forward_block(arch, k, layer, x)?;
    }
    Ok(x.flatten())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{build_alexnet, build_alexnet_mini, ModelVariant, VariantTag};
    use crate::weights::{assemble_variant, constant_bundle, random_bundle, random_bundle_upto};
    use alloc::vec;

    #[test]
    fn alexnet_first_representation_shape_and_zero_propagation() {
        let arch = build_alexnet();
        let zero = constant_bundle(&arch, 0.0, 0.0, "zero");
        let zero1 = random_bundle_upto(&arch, 3, 1);
        let v = ModelVariant::new(VariantTag::PretrainedPrefix, 1, &arch).unwrap();
        let m = assemble_variant(&arch, Some(&zero), None, v).unwrap();
        let img = Tensor::zeros(&[227, 227, 3]).unwrap();
        let f = forward_to_representation(&arch, &m, &img, 1).unwrap();
        assert_eq!(f.shape(), &[69984]);
        assert!(f.data().iter().all(|&v| v == 0.0));

        let r = assemble_variant(&arch, None, Some(&zero1), ModelVariant { tag: VariantTag::RandomBaseline, n: 1 }).unwrap();
        let f = forward_to_representation(&arch, &r, &img, 1).unwrap();
        assert!(f.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mini_dims_and_purity() {
        let arch = build_alexnet_mini();
        let rnd = random_bundle(&arch, 5);
        let img = Tensor::new(vec![32, 32, 3], (0..32 * 32 * 3).map(|i| ((i * 37) % 101) as f32 / 101.0).collect()).unwrap();
        for n in 1..=8 {
            let v = ModelVariant { tag: VariantTag::RandomBaseline, n };
            let m = assemble_variant(&arch, None, Some(&rnd), v).unwrap();
            let a = forward_to_representation(&arch, &m, &img, n).unwrap();
            let b = forward_to_representation(&arch, &m, &img, n).unwrap();
            assert_eq!(a.len(), arch.feature_dim(n).unwrap());
            assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
            let cuts = forward_cuts(&arch, &m, &img, n).unwrap();
            assert_eq!(cuts.last().unwrap().clone().flatten(), a);
        }
    }

    #[test]
    fn hybrid_prefix_matches_pretrained_prefix() {
        let arch = build_alexnet_mini();
        let pre = random_bundle(&arch, 100);
        let rnd = random_bundle(&arch, 200);
        let img = Tensor::filled(&[32, 32, 3], 0.25).unwrap();
        let a = assemble_variant(&arch, Some(&pre), Some(&rnd), ModelVariant { tag: VariantTag::PretrainedPrefix, n: 4 }).unwrap();
        let h = assemble_variant(&arch, Some(&pre), Some(&rnd), ModelVariant { tag: VariantTag::Hybrid, n: 5 }).unwrap();
        let a_cuts = forward_cuts(&arch, &a, &img, 4).unwrap();
        let h_cuts = forward_cuts(&arch, &h, &img, 5).unwrap();
        assert_eq!(a_cuts[..], h_cuts[..4]);
    }

    #[test]
    fn rejects_wrong_input() {
        let arch = build_alexnet_mini();
        let rnd = random_bundle(&arch, 5);
        let m = assemble_variant(&arch, None, Some(&rnd), ModelVariant { tag: VariantTag::RandomBaseline, n: 1 }).unwrap();
        let img = Tensor::zeros(&[31, 32, 3]).unwrap();
        assert!(matches!(
            forward_to_representation(&arch, &m, &img, 1),
            Err(Error::Dimension { axis: "height", .. })
        ));
        let img = Tensor::zeros(&[32, 32, 3]).unwrap();
        assert!(forward_to_representation(&arch, &m, &img, 2).is_err());
    }
}
