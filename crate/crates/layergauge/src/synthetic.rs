//! Synthetic datasets and hand-built weights for smoke tests and demos.
//!
//! * [`textures`]: four texture classes (speckle, blobs, rings, checks);
//! * [`gratings`]: noisy sinusoidal gratings whose class is the orientation;
//! * [`oriented_edge_bundle`]: a "pretrained" bundle whose first conv layer
//!   holds analytic Gabor edge detectors and whose other layers are random.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use layergauge_core::dataset::LabeledImage;
use layergauge_core::seed;
use layergauge_core::weights::{random_bundle, with_layer, RANDOM_WEIGHT_STD};
use layergauge_core::{ArchitectureSpec, Error as CoreError, LayerKind, LayerWeights, Tensor, WeightBundle};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::atomic::{create_dir_all, write_bytes_atomic};
use crate::error::{Error, Result};

pub const TEXTURE_CLASSES: [&str; 4] = ["speckle", "blobs", "rings", "checks"];

fn image(id: String, size: usize, label: usize, class: &str, f: impl Fn(usize, usize, usize) -> f64) -> LabeledImage {
    let mut data = Vec::with_capacity(size * size * 3);
    for y in 0..size {
        for x in 0..size {
            for c in 0..3 {
                data.push(f(y, x, c).clamp(0.0, 1.0) as f32);
            }
        }
    }
    let pixels = Tensor::new(vec![size, size, 3], data).expect("non-empty image");
    LabeledImage::new(id, pixels, label, class).expect("values clamped to [0, 1]")
}

/// `per_class` images of each texture class, `size` x `size`, classes in
/// [`TEXTURE_CLASSES`] order.
pub fn textures(per_class: usize, size: usize, seed: u64) -> Vec<LabeledImage> {
    let mut out = Vec::new();
    for (label, class) in TEXTURE_CLASSES.iter().enumerate() {
        for i in 0..per_class {
            let mut rng = seed::rng(seed::derive(&[seed, label as u64, i as u64]));
            let tint: [f64; 3] = [rng.random_range(0.6..1.0), rng.random_range(0.6..1.0), rng.random_range(0.6..1.0)];
            let s = size as f64;
            let noise: Vec<f64> = (0..size * size).map(|_| rng.random_range(0.0..1.0)).collect();
            let pattern: Vec<f64> = match label {
                0 => noise.clone(),
                1 => {
                    let bumps: Vec<(f64, f64, f64)> = (0..6)
                        .map(|_| (rng.random_range(0.0..s), rng.random_range(0.0..s), rng.random_range(s / 10.0..s / 5.0)))
                        .collect();
                    (0..size * size)
                        .map(|p| {
                            let (y, x) = ((p / size) as f64, (p % size) as f64);
                            let v: f64 = bumps
                                .iter()
                                .map(|&(by, bx, r)| (-((y - by).powi(2) + (x - bx).powi(2)) / (2.0 * r * r)).exp())
                                .sum();
                            v.min(1.0) * 0.85 + noise[p] * 0.15
                        })
                        .collect()
                }
                2 => {
                    let (cy, cx) = (rng.random_range(0.3 * s..0.7 * s), rng.random_range(0.3 * s..0.7 * s));
                    let period = rng.random_range(3.0..6.0);
                    (0..size * size)
                        .map(|p| {
                            let (y, x) = ((p / size) as f64, (p % size) as f64);
                            let r = ((y - cy).powi(2) + (x - cx).powi(2)).sqrt();
                            0.5 + 0.35 * (2.0 * PI * r / period).cos() + 0.15 * (noise[p] - 0.5)
                        })
                        .collect()
                }
                _ => {
                    let period = rng.random_range(4.0..8.0);
                    let a = rng.random_range(0.0..PI);
                    (0..size * size)
                        .map(|p| {
                            let (y, x) = ((p / size) as f64, (p % size) as f64);
                            let u = (x * a.cos() + y * a.sin()) / period;
                            let v = (-x * a.sin() + y * a.cos()) / period;
                            let on = (u.floor() as i64 + v.floor() as i64).rem_euclid(2) == 0;
                            (if on { 0.8 } else { 0.2 }) + 0.15 * (noise[p] - 0.5)
                        })
                        .collect()
                }
            };
            out.push(image(format!("{class}/{i:03}.png"), size, label, class, |y, x, c| {
                pattern[y * size + x] * tint[c]
            }));
        }
    }
    out
}

/// Grating orientations (degrees) and their class names.
pub const GRATING_CLASSES: [(f64, &str); 4] = [(0.0, "deg0"), (45.0, "deg45"), (90.0, "deg90"), (135.0, "deg135")];

/// Noisy gratings: class `k` is a sinusoid oriented at
/// `GRATING_CLASSES[k].0` degrees (plus up to `jitter_deg` either way) with
/// random phase and a period between 4 and 7 pixels, at `contrast` amplitude
/// over Gaussian pixel noise of standard deviation `noise`.
pub fn gratings(per_class: usize, size: usize, contrast: f64, noise: f64, jitter_deg: f64, seed: u64) -> Vec<LabeledImage> {
    let mut out = Vec::new();
    let gauss = Normal::new(0.0, noise.max(0.0)).expect("finite noise");
    for (label, &(deg, class)) in GRATING_CLASSES.iter().enumerate() {
        for i in 0..per_class {
            let mut rng = seed::rng(seed::derive(&[seed, 0x6772, label as u64, i as u64]));
            let theta = (deg + rng.random_range(-jitter_deg..=jitter_deg)).to_radians();
            let period = rng.random_range(4.0..7.0);
            let phase = rng.random_range(0.0..2.0 * PI);
            let base = rng.random_range(0.4..0.6);
            let eps: Vec<f64> = (0..size * size).map(|_| gauss.sample(&mut rng)).collect();
            out.push(image(format!("{class}/{i:03}.png"), size, label, class, |y, x, _| {
                let u = x as f64 * theta.cos() + y as f64 * theta.sin();
                base + contrast * (2.0 * PI * u / period + phase).cos() + eps[y * size + x]
            }));
        }
    }
    out
}

/// Gabor filters for the first conv layer: filter `f` has orientation
/// `180 * (f / 2) / (F / 2)` degrees and even (`f` even) or odd phase, is
/// identical across input channels, has zero mean and the expected L2 norm
/// of a random filter.
pub fn gabor_filters(filters: usize, kernel: usize, channels: usize, wavelength: f64) -> Tensor {
    let orientations = filters.div_ceil(2).max(1);
    let sigma = kernel as f64 / 3.0;
    let target_norm = RANDOM_WEIGHT_STD as f64 * ((kernel * kernel * channels) as f64).sqrt();
    let centre = (kernel as f64 - 1.0) / 2.0;
    let mut data = Vec::with_capacity(filters * kernel * kernel * channels);
    for f in 0..filters {
        let theta = PI * (f / 2) as f64 / orientations as f64;
        let odd = f % 2 == 1;
        let mut k = vec![0.0f64; kernel * kernel];
        for ky in 0..kernel {
            for kx in 0..kernel {
                let (y, x) = (ky as f64 - centre, kx as f64 - centre);
                let u = x * theta.cos() + y * theta.sin();
                let env = (-(x * x + y * y) / (2.0 * sigma * sigma)).exp();
                let carrier = 2.0 * PI * u / wavelength;
                k[ky * kernel + kx] = env * if odd { carrier.sin() } else { carrier.cos() };
            }
        }
        let mean = k.iter().sum::<f64>() / k.len() as f64;
        k.iter_mut().for_each(|v| *v -= mean);
        let norm = (k.iter().map(|v| v * v).sum::<f64>() * channels as f64).sqrt();
        let scale = if norm > 0.0 { target_norm / norm } else { 0.0 };
        for v in &k {
            for _ in 0..channels {
                data.push((v * scale) as f32);
            }
        }
    }
    Tensor::new(vec![filters, kernel, kernel, channels], data).expect("non-empty filter bank")
}

/// A bundle labelled pretrained (`source_task = "oriented-edges"`) whose
/// first conv layer is [`gabor_filters`] with zero bias; the remaining
/// layers are drawn as random weights from `seed`.
pub fn oriented_edge_bundle(arch: &ArchitectureSpec, wavelength: f64, seed: u64) -> Result<WeightBundle> {
    let layer = arch.learned_layer(1)?;
    let LayerKind::Convolution { filters, kernel, params } = layer.kind else {
        return Err(CoreError::Config(format!("{} does not start with a convolution", arch.name())).into());
    };
    let channels = arch.input_shape()[2] / params.groups;
    let conv1 = LayerWeights {
        weights: gabor_filters(filters, kernel, channels, wavelength),
        bias: Tensor::zeros(&[filters])?,
    };
    let rest = random_bundle(arch, seed);
    let layers = rest.layers().map(|(k, l)| (k, l.clone())).collect();
    let relabelled = WeightBundle::new(
        layergauge_core::Provenance::Pretrained {
            source_task: "oriented-edges".into(),
        },
        layers,
    )?;
    Ok(with_layer(relabelled, 1, conv1)?)
}

/// Writes each image as PNG under `dir` (at its id, which is a relative
/// path) plus `manifest.csv`, and returns the manifest path.
pub fn write_dataset(dir: &Path, images: &[LabeledImage]) -> Result<PathBuf> {
    create_dir_all(dir)?;
    let mut manifest = String::from("relativePath,className\n");
    for im in images {
        let path = dir.join(&im.id);
        if let Some(parent) = path.parent() {
            create_dir_all(parent)?;
        }
        let s = im.pixels.shape();
        let raw: Vec<u8> = im.pixels.data().iter().map(|v| (v * 255.0).round() as u8).collect();
        let buf = image::RgbImage::from_raw(s[1] as u32, s[0] as u32, raw).expect("buffer matches shape");
        let mut png = Vec::new();
        buf.write_to(&mut std::io::Cursor::new(&mut png), image::ImageFormat::Png)
            .map_err(|e| Error::Image {
                path: path.clone(),
                message: e.to_string(),
            })?;
        write_bytes_atomic(&path, &png)?;
        manifest.push_str(&format!("{},{}\n", im.id, im.class_name));
    }
    let path = dir.join("manifest.csv");
    write_bytes_atomic(&path, manifest.as_bytes())?;
    Ok(path)
}
