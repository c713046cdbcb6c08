//! Labeled images, the stratified train/test split and training-set
//! augmentation.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore};

use crate::arch::ArchitectureSpec;
use crate::error::{Error, Result};
use crate::seed;
use crate::tensor::Tensor;

/// Fraction of each class assigned to training.
pub const DEFAULT_TRAIN_RATIO: f64 = 0.7;
pub const DEFAULT_COPIES_PER_IMAGE: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    pub id: String,
    /// `height × width × 3`, values in `[0, 1]`.
    pub pixels: Tensor,
    pub label: usize,
    pub class_name: String,
}

impl LabeledImage {
    pub fn new(id: impl Into<String>, pixels: Tensor, label: usize, class_name: impl Into<String>) -> Result<Self> {
        let id = id.into();
        let (_, _, c) = pixels.hwc("LabeledImage")?;
        if c != 3 {
            return Err(Error::Dimension {
                op: "LabeledImage",
                axis: "channels",
                expected: 3,
                found: c,
            });
        }
        if let Some(v) = pixels.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::validation(format!("image {id}: pixel value {v} outside [0, 1]")));
        }
        Ok(LabeledImage {
            id,
            pixels,
            label,
            class_name: class_name.into(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub relative_path: String,
    pub class_name: String,
}

/// The list of images making up a dataset, with class names in
/// first-appearance order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub root_dir: String,
    entries: Vec<ManifestEntry>,
    class_names: Vec<String>,
}

impl DatasetManifest {
    pub fn new(root_dir: impl Into<String>, entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        let mut class_names: Vec<String> = Vec::new();
        for e in &entries {
            if !seen.insert(e.relative_path.as_str()) {
                return Err(Error::validation(format!("duplicate manifest path '{}'", e.relative_path)));
            }
            if e.class_name.is_empty() {
                return Err(Error::validation(format!("empty class name for '{}'", e.relative_path)));
            }
            if !class_names.iter().any(|c| *c == e.class_name) {
                class_names.push(e.class_name.clone());
            }
        }
        if class_names.len() < 2 {
            return Err(Error::validation(format!(
                "manifest needs at least 2 classes, found {}",
                class_names.len()
            )));
        }
        Ok(DatasetManifest {
            root_dir: root_dir.into(),
            entries,
            class_names,
        })
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn label_of(&self, class_name: &str) -> Option<usize> {
        self.class_names.iter().position(|c| c == class_name)
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_names.len()];
        for e in &self.entries {
            counts[self.label_of(&e.class_name).expect("class registered")] += 1;
        }
        counts
    }
}

/// Train/test partition of image ids.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitPlan {
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub ratio: f64,
    pub seed: u64,
}

/// Shuffles each class with its own seeded stream and sends the first
/// `floor(ratio · count)` images to training, the rest to test.
pub fn stratified_split(manifest: &DatasetManifest, ratio: f64, seed: u64) -> Result<SplitPlan> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::validation(format!("split ratio {ratio} must lie strictly between 0 and 1")));
    }
    let mut train_ids = Vec::new();
    let mut test_ids = Vec::new();
    for (label, class) in manifest.class_names().iter().enumerate() {
        let mut ids: Vec<&str> = manifest
            .entries()
            .iter()
            .filter(|e| e.class_name == *class)
            .map(|e| e.relative_path.as_str())
            .collect();
        if ids.len() < 2 {
            return Err(Error::validation(format!(
                "class '{class}' has {} image(s); at least 2 are needed to split",
                ids.len()
            )));
        }
        let mut rng = seed::rng(seed::derive(&[seed, seed::domain::SPLIT, label as u64]));
        ids.shuffle(&mut rng);
        let n_train = libm::floor(ratio * ids.len() as f64) as usize;
        train_ids.extend(ids[..n_train].iter().map(|s| String::from(*s)));
        test_ids.extend(ids[n_train..].iter().map(|s| String::from(*s)));
    }
    if train_ids.is_empty() || test_ids.is_empty() {
        return Err(Error::validation("split leaves the train or test partition empty"));
    }
    Ok(SplitPlan {
        train_ids,
        test_ids,
        ratio,
        seed,
    })
}

/// One draw of the augmentation transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentTransform {
    /// Counter-clockwise rotation in degrees, in `[0, 360)`.
    pub angle_deg: f64,
    /// Top-bottom reflection.
    pub vertical_reflection: bool,
    /// Left-right flip.
    pub horizontal_flip: bool,
}

impl AugmentTransform {
    pub const IDENTITY: AugmentTransform = AugmentTransform {
        angle_deg: 0.0,
        vertical_reflection: false,
        horizontal_flip: false,
    };

    pub fn sample<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        AugmentTransform {
            angle_deg: rng.random_range(0.0..360.0),
            vertical_reflection: rng.random_bool(0.5),
            horizontal_flip: rng.random_bool(0.5),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AugmentConfig {
    pub copies_per_image: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            copies_per_image: DEFAULT_COPIES_PER_IMAGE,
        }
    }
}

/// Draws `copies_per_image` transforms and applies them to `image`.
/// Copy `k` gets the id `"{id}#aug{k}"`.
pub fn augment<R: RngCore + ?Sized>(image: &LabeledImage, config: &AugmentConfig, rng: &mut R) -> Vec<LabeledImage> {
    (0..config.copies_per_image)
        .map(|k| {
            let t = AugmentTransform::sample(rng);
            LabeledImage {
                id: format!("{}#aug{k}", image.id),
                pixels: apply_transform(&image.pixels, t),
                label: image.label,
                class_name: image.class_name.clone(),
            }
        })
        .collect()
}

/// Rotation about the image center (bilinear, reflect padding, same raster
/// size), then the optional reflection and flip.
pub fn apply_transform(pixels: &Tensor, t: AugmentTransform) -> Tensor {
    let mut out = rotate(pixels, t.angle_deg);
    if t.vertical_reflection {
        out = flip_vertical(&out);
    }
    if t.horizontal_flip {
        out = flip_horizontal(&out);
    }
    out
}

/// `(cos, sin)` with exact values at multiples of 90°.
fn cos_sin_deg(angle: f64) -> (f64, f64) {
    let a = rem_euclid(angle, 360.0);
    if a == 0.0 {
        (1.0, 0.0)
    } else if a == 90.0 {
        (0.0, 1.0)
    } else if a == 180.0 {
        (-1.0, 0.0)
    } else if a == 270.0 {
        (0.0, -1.0)
    } else {
        let r = a * (core::f64::consts::PI / 180.0);
        (libm::cos(r), libm::sin(r))
    }
}

fn rem_euclid(v: f64, m: f64) -> f64 {
    let r = libm::fmod(v, m);
    if r < 0.0 {
        r + m
    } else {
        r
    }
}

/// Mirrors a continuous coordinate into `[0, max]`.
fn reflect(v: f64, max: f64) -> f64 {
    if max <= 0.0 {
        return 0.0;
    }
    let period = 2.0 * max;
    let m = rem_euclid(v, period);
    if m > max {
        period - m
    } else {
        m
    }
}

/// Bilinear sample at in-bounds coordinates.
fn sample_bilinear(src: &[f32], w: usize, h: usize, c: usize, x: f64, y: f64, out: &mut [f32]) {
    let x0 = libm::floor(x) as usize;
    let y0 = libm::floor(y) as usize;
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let p = |yy: usize, xx: usize| &src[(yy * w + xx) * c..][..c];
    if fx == 0.0 && fy == 0.0 {
        out.copy_from_slice(p(y0, x0));
        return;
    }
    let (p00, p01, p10, p11) = (p(y0, x0), p(y0, x1), p(y1, x0), p(y1, x1));
    for ch in 0..c {
        let top = p00[ch] as f64 * (1.0 - fx) + p01[ch] as f64 * fx;
        let bottom = p10[ch] as f64 * (1.0 - fx) + p11[ch] as f64 * fx;
        out[ch] = (top * (1.0 - fy) + bottom * fy) as f32;
    }
}

/// Counter-clockwise rotation (as displayed, rows growing downward).
pub fn rotate(pixels: &Tensor, angle_deg: f64) -> Tensor {
    let (h, w, c) = pixels.hwc("rotate").expect("rank-3 image");
    let (cos, sin) = cos_sin_deg(angle_deg);
    if cos == 1.0 {
        return pixels.clone();
    }
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let (maxx, maxy) = (w as f64 - 1.0, h as f64 - 1.0);
    let src = pixels.data();
    let mut out = vec![0.0f32; src.len()];
    for y in 0..h {
        for x in 0..w {
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            let sx = reflect(cx + cos * dx - sin * dy, maxx);
            let sy = reflect(cy + sin * dx + cos * dy, maxy);
            sample_bilinear(src, w, h, c, sx, sy, &mut out[(y * w + x) * c..][..c]);
        }
    }
    Tensor::new(pixels.shape().to_vec(), out).expect("same shape")
}

/// Reverses row order.
pub fn flip_vertical(pixels: &Tensor) -> Tensor {
    let (h, w, c) = pixels.hwc("flip").expect("rank-3 image");
    let row = w * c;
    let mut out = Vec::with_capacity(pixels.len());
    for y in (0..h).rev() {
        out.extend_from_slice(&pixels.data()[y * row..][..row]);
    }
    Tensor::new(pixels.shape().to_vec(), out).expect("same shape")
}

/// Reverses column order.
pub fn flip_horizontal(pixels: &Tensor) -> Tensor {
    let (h, w, c) = pixels.hwc("flip").expect("rank-3 image");
    let mut out = Vec::with_capacity(pixels.len());
    for y in 0..h {
        for x in (0..w).rev() {
            out.extend_from_slice(&pixels.data()[(y * w + x) * c..][..c]);
        }
    }
    Tensor::new(pixels.shape().to_vec(), out).expect("same shape")
}

/// Bilinear resize with half-pixel centers and edge clamping.
pub fn resize_bilinear(pixels: &Tensor, out_h: usize, out_w: usize) -> Tensor {
    let (h, w, c) = pixels.hwc("resize").expect("rank-3 image");
    if (h, w) == (out_h, out_w) {
        return pixels.clone();
    }
    let sy = h as f64 / out_h as f64;
    let sx = w as f64 / out_w as f64;
    let src = pixels.data();
    let mut out = vec![0.0f32; out_h * out_w * c];
    for y in 0..out_h {
        let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, h as f64 - 1.0);
        for x in 0..out_w {
            let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, w as f64 - 1.0);
            sample_bilinear(src, w, h, c, fx, fy, &mut out[(y * out_w + x) * c..][..c]);
        }
    }
    Tensor::new(vec![out_h, out_w, c], out).expect("positive dims")
}

/// Per-channel mean over a set of rank-3 tensors.
pub fn channel_mean<'a>(images: impl IntoIterator<Item = &'a Tensor>) -> [f32; 3] {
    let mut sum = [0.0f64; 3];
    let mut count = 0usize;
    for t in images {
        for px in t.data().chunks_exact(3) {
            for (s, &v) in sum.iter_mut().zip(px) {
                *s += v as f64;
            }
        }
        count += t.len() / 3;
    }
    if count == 0 {
        return [0.0; 3];
    }
    sum.map(|s| (s / count as f64) as f32)
}

/// Resizes to the architecture's input and subtracts `mean` per channel.
pub fn preprocess(pixels: &Tensor, arch: &ArchitectureSpec, mean: [f32; 3]) -> Tensor {
    let [h, w, _] = arch.input_shape();
    let mut t = resize_bilinear(pixels, h, w);
    if mean != [0.0; 3] {
        for px in t.data_mut().chunks_exact_mut(3) {
            for (v, m) in px.iter_mut().zip(mean) {
                *v -= m;
            }
        }
    }
    t
}
