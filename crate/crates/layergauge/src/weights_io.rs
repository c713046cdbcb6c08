//! Weight bundles on disk.
//!
//! Tensors are named `convK.weight`, `convK.bias`, `fcK.weight` and
//! `fcK.bias`, where `K` is the learned-layer ordinal (`conv1` .. `conv5`,
//! `fc6` .. `fc8` for AlexNet).

use std::collections::BTreeMap;
use std::io::{self, Write};
use std::path::Path;

use layergauge_core::{ArchitectureSpec, Error as CoreError, LayerWeights, Provenance, Tensor, WeightBundle};
use sha2::{Digest, Sha256};

use crate::container::{self, Container, TAG_PRETRAINED, TAG_RANDOM};
use crate::error::{Error, Result};

fn weight_error(layer: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Core(CoreError::Weight {
        layer: layer.into(),
        message: message.into(),
    })
}

pub fn to_container(bundle: &WeightBundle) -> Container {
    let mut c = match bundle.provenance() {
        Provenance::Pretrained { source_task } => Container::new(TAG_PRETRAINED, 0, source_task.clone()),
        Provenance::Random { seed } => Container::new(TAG_RANDOM, *seed, "random"),
    };
    for (k, layer) in bundle.layers() {
        let prefix = if layer.weights.rank() == 4 { "conv" } else { "fc" };
        c.push(format!("{prefix}{k}.weight"), layer.weights.clone());
        c.push(format!("{prefix}{k}.bias"), layer.bias.clone());
    }
    c
}

/// Splits `conv3.weight` into `("conv", 3, "weight")`.
fn parse_name(name: &str) -> Option<(&str, usize, &str)> {
    let (layer, part) = name.split_once('.')?;
    let digits = layer.find(|c: char| c.is_ascii_digit())?;
    let (prefix, ordinal) = layer.split_at(digits);
    Some((prefix, ordinal.parse().ok()?, part))
}

/// Rebuilds a bundle from a container and checks it against `arch`.
pub fn from_container(c: Container, arch: &ArchitectureSpec) -> Result<WeightBundle> {
    let mut parts: BTreeMap<usize, (Option<Tensor>, Option<Tensor>)> = BTreeMap::new();
    for (name, tensor) in c.tensors {
        let (prefix, ordinal, part) = parse_name(&name)
            .filter(|(p, _, part)| (*p == "conv" || *p == "fc") && (*part == "weight" || *part == "bias"))
            .ok_or_else(|| weight_error(name.clone(), "unrecognised tensor name"))?;
        let expected = arch
            .layer_name(ordinal)
            .map_err(|_| weight_error(name.clone(), format!("{} has no learned layer {ordinal}", arch.name())))?;
        if expected != format!("{prefix}{ordinal}") {
            return Err(weight_error(name.clone(), format!("layer {ordinal} of {} is {expected}", arch.name())));
        }
        let slot = parts.entry(ordinal).or_default();
        let target = if part == "weight" { &mut slot.0 } else { &mut slot.1 };
        if target.replace(tensor).is_some() {
            return Err(weight_error(name, "tensor appears twice"));
        }
    }
    let mut layers = BTreeMap::new();
    for (ordinal, (w, b)) in parts {
        let name = arch.layer_name(ordinal)?;
        let weights = w.ok_or_else(|| weight_error(format!("{name}.weight"), "missing"))?;
        let bias = b.ok_or_else(|| weight_error(format!("{name}.bias"), "missing"))?;
        layers.insert(ordinal, LayerWeights { weights, bias });
    }
    let provenance = if c.tag == TAG_RANDOM {
        Provenance::Random { seed: c.seed }
    } else {
        Provenance::Pretrained { source_task: c.label }
    };
    let bundle = WeightBundle::new(provenance, layers)?;
    bundle.validate(arch)?;
    Ok(bundle)
}

pub fn load_weights(path: &Path, arch: &ArchitectureSpec) -> Result<WeightBundle> {
    from_container(container::load(path)?, arch)
}

pub fn save_weights(bundle: &WeightBundle, path: &Path) -> Result<()> {
    container::save(path, &to_container(bundle))
}

struct HashWriter(Sha256);

impl Write for HashWriter {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.0.update(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

/// SHA-256 of the bundle's serialized container.
pub fn bundle_digest(bundle: &WeightBundle) -> [u8; 32] {
    let mut h = HashWriter(Sha256::new());
    container::write_to(&mut h, &to_container(bundle)).expect("hashing cannot fail");
    h.0.finalize().into()
}
