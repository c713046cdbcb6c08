//! Pure numeric core for measuring how much a pretrained CNN's layers help a
//! new image-classification task.
//!
//! Everything here is `no_std` + `alloc`: forward-only layer kernels, the
//! layer-sequence description with its representation cut points, weight
//! bundles (pretrained and seeded-random), dataset splitting and
//! augmentation, a dual coordinate descent linear SVM and the gain
//! arithmetic. File formats, image decoding and orchestration live in the
//! `layergauge` crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod arch;
pub mod dataset;
mod error;
pub mod forward;
pub mod gain;
pub mod nn;
pub mod seed;
pub mod svm;
mod tensor;
pub mod weights;

pub use crate::arch::{ArchitectureSpec, LayerKind, LayerSpec, ModelVariant, VariantTag};
pub use crate::error::{Error, Result};
pub use crate::tensor::Tensor;
pub use crate::weights::{LayerWeights, ModelWeights, Provenance, WeightBundle, WeightSource};
