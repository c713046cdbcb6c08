//! Manifest CSV parsing and image decoding.
//!
//! A manifest is a UTF-8 file with one `relativePath,className` per line and
//! an optional header row. Paths are relative to the manifest's directory.

use std::fs;
use std::path::{Path, PathBuf};

use image::imageops::FilterType;
use layergauge_core::dataset::{DatasetManifest, LabeledImage, ManifestEntry};
use layergauge_core::{Error as CoreError, Tensor};

use crate::error::{Error, Result};

fn is_header(path: &str, class: &str) -> bool {
    let path = path.to_ascii_lowercase().replace(['_', ' '], "");
    let class = class.to_ascii_lowercase().replace(['_', ' '], "");
    matches!(path.as_str(), "relativepath" | "path" | "file" | "filename")
        && matches!(class.as_str(), "classname" | "class" | "label")
}

/// Parses manifest text; `root_dir` is recorded as-is.
pub fn parse_manifest(text: &str, root_dir: &str) -> Result<DatasetManifest> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut entries = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CoreError::Validation(format!("manifest line {}: {e}", i + 1)))?;
        if record.len() != 2 {
            return Err(CoreError::Validation(format!(
                "manifest line {}: expected 'relativePath,className', found {} fields",
                i + 1,
                record.len()
            ))
            .into());
        }
        if i == 0 && is_header(&record[0], &record[1]) {
            continue;
        }
        entries.push(ManifestEntry {
            relative_path: record[0].to_string(),
            class_name: record[1].to_string(),
        });
    }
    Ok(DatasetManifest::new(root_dir, entries)?)
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_manifest(&text, &root.to_string_lossy())
}

/// Decodes an 8-bit RGB image into `[0, 1]` values. When `max_side` is set,
/// larger images are first shrunk (triangle filter) so the longer side fits.
pub fn load_image(path: &Path, max_side: Option<usize>) -> Result<Tensor> {
    let img = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Image {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    })?;
    let mut rgb = img.to_rgb8();
    if let Some(limit) = max_side.filter(|&m| m > 0) {
        let (w, h) = rgb.dimensions();
        let longest = w.max(h) as usize;
        if longest > limit {
            let scale = limit as f64 / longest as f64;
            let nw = ((w as f64 * scale).round() as u32).max(1);
            let nh = ((h as f64 * scale).round() as u32).max(1);
            rgb = image::imageops::resize(&rgb, nw, nh, FilterType::Triangle);
        }
    }
    let (w, h) = rgb.dimensions();
    let data = rgb.into_raw().into_iter().map(|v| v as f32 / 255.0).collect();
    Ok(Tensor::new(vec![h as usize, w as usize, 3], data)?)
}

/// A manifest with every image decoded, in manifest order. Image ids are the
/// manifest's relative paths.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub images: Vec<LabeledImage>,
}

impl Dataset {
    pub fn load(manifest: DatasetManifest, max_side: Option<usize>) -> Result<Self> {
        let root = PathBuf::from(&manifest.root_dir);
        let images = manifest
            .entries()
            .iter()
            .map(|e| {
                let pixels = load_image(&root.join(&e.relative_path), max_side)?;
                let label = manifest.label_of(&e.class_name).expect("manifest class");
                Ok(LabeledImage::new(e.relative_path.clone(), pixels, label, e.class_name.clone())?)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset { manifest, images })
    }

    /// Wraps in-memory images. Labels must follow first-appearance order of
    /// the class names, as a manifest would assign them.
    pub fn from_images(images: Vec<LabeledImage>) -> Result<Self> {
        let entries = images
            .iter()
            .map(|im| ManifestEntry {
                relative_path: im.id.clone(),
                class_name: im.class_name.clone(),
            })
            .collect();
        let manifest = DatasetManifest::new("", entries)?;
        if let Some(im) = images.iter().find(|im| manifest.label_of(&im.class_name) != Some(im.label)) {
            return Err(CoreError::Validation(format!(
                "image {} has label {} but class '{}' maps to {:?}",
                im.id,
                im.label,
                im.class_name,
                manifest.label_of(&im.class_name)
            ))
            .into());
        }
        Ok(Dataset { manifest, images })
    }

    pub fn image(&self, id: &str) -> Option<&LabeledImage> {
        self.images.iter().find(|im| im.id == id)
    }
}
