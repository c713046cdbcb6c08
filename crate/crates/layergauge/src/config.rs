//! TOML run files.
//!
//! ```toml
//! arch = "alexnet"
//! weights = "weights/alexnet.otsw"
//! manifest = "data/iit/manifest.csv"
//! repeats = 50
//! base_seed = 0
//! out = "results"
//!
//! [split]
//! ratio = 0.7
//!
//! [augment]
//! copies_per_image = 8
//!
//! [svm]
//! c_grid = [0.01, 0.1, 1.0, 10.0, 100.0]
//! ```
//!
//! Relative paths are resolved against the directory holding the file.

use std::path::{Path, PathBuf};

use layergauge_core::dataset::{AugmentConfig, DEFAULT_COPIES_PER_IMAGE, DEFAULT_TRAIN_RATIO};
use layergauge_core::svm::{SvmConfig, DEFAULT_C_GRID};
use layergauge_core::{ArchitectureSpec, VariantTag};
use serde::{Deserialize, Serialize};

use crate::cache::CacheMode;
use crate::error::{Error, Result};
use crate::experiment::{ExperimentConfig, INTERPOLATION, PADDING};

/// Overrides the configured cache directory.
pub const CACHE_DIR_ENV: &str = "LAYERGAUGE_CACHE_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_arch")]
    pub arch: String,
    #[serde(default)]
    pub weights: Option<PathBuf>,
    pub manifest: PathBuf,
    /// Representation layers to evaluate; all of them when absent.
    #[serde(default)]
    pub layers: Option<Vec<usize>>,
    #[serde(default = "default_variants")]
    pub variants: Vec<String>,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub base_seed: u64,
    /// Worker threads; 0 uses every available core.
    #[serde(default)]
    pub jobs: usize,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Images whose longer side exceeds this are shrunk on load; 0 disables.
    #[serde(default = "default_max_side")]
    pub max_image_side: usize,
    #[serde(default)]
    pub keep_going: bool,
    #[serde(default)]
    pub cache: CacheSection,
    #[serde(default)]
    pub split: SplitSection,
    #[serde(default)]
    pub augment: AugmentSection,
    #[serde(default)]
    pub svm: SvmSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CacheSection {
    /// `disk`, `memory` or `off`.
    pub mode: String,
    /// Defaults to `<out>/cache`.
    pub dir: Option<PathBuf>,
    /// Keep disk entries after each trial.
    pub retain: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSection {
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentSection {
    pub copies_per_image: usize,
    pub interpolation: String,
    pub padding: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvmSection {
    pub c_grid: Vec<f64>,
    pub folds: usize,
    pub epochs: usize,
    pub tolerance: f64,
}

fn default_arch() -> String {
    "alexnet".into()
}

fn default_variants() -> Vec<String> {
    VariantTag::ALL.iter().map(|v| v.as_str().to_string()).collect()
}

fn default_repeats() -> usize {
    50
}

fn default_out() -> PathBuf {
    PathBuf::from("results")
}

fn default_max_side() -> usize {
    512
}

impl Default for CacheSection {
    fn default() -> Self {
        CacheSection {
            mode: "disk".into(),
            dir: None,
            retain: false,
        }
    }
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection {
            ratio: DEFAULT_TRAIN_RATIO,
        }
    }
}

impl Default for AugmentSection {
    fn default() -> Self {
        AugmentSection {
            copies_per_image: DEFAULT_COPIES_PER_IMAGE,
            interpolation: INTERPOLATION.into(),
            padding: PADDING.into(),
        }
    }
}

impl Default for SvmSection {
    fn default() -> Self {
        let d = SvmConfig::default();
        SvmSection {
            c_grid: DEFAULT_C_GRID.to_vec(),
            folds: d.folds,
            epochs: d.epochs,
            tolerance: d.tolerance,
        }
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a run file and resolves its relative paths.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::format(path, m),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        self.manifest = resolve(base, &self.manifest);
        self.out = resolve(base, &self.out);
        if let Some(w) = &self.weights {
            self.weights = Some(resolve(base, w));
        }
        if let Some(d) = &self.cache.dir {
            self.cache.dir = Some(resolve(base, d));
        }
    }

    pub fn max_image_side(&self) -> Option<usize> {
        (self.max_image_side > 0).then_some(self.max_image_side)
    }

    /// Cache location: the environment override, then the configured
    /// directory, then `<out>/cache`.
    pub fn cache_mode(&self) -> Result<CacheMode> {
        match self.cache.mode.as_str() {
            "off" => Ok(CacheMode::Off),
            "memory" => Ok(CacheMode::Memory),
            "disk" => {
                let dir = std::env::var_os(CACHE_DIR_ENV)
                    .map(PathBuf::from)
                    .or_else(|| self.cache.dir.clone())
                    .unwrap_or_else(|| self.out.join("cache"));
                Ok(CacheMode::Disk {
                    dir,
                    retain: self.cache.retain,
                })
            }
            other => Err(Error::Config(format!("unknown cache mode '{other}' (disk, memory, off)"))),
        }
    }

    pub fn to_experiment(&self) -> Result<ExperimentConfig> {
        if self.augment.interpolation != INTERPOLATION || self.augment.padding != PADDING {
            return Err(Error::Config(format!(
                "only {INTERPOLATION} interpolation with {PADDING} padding is implemented"
            )));
        }
        let arch = ArchitectureSpec::preset(&self.arch)?;
        let variants = self
            .variants
            .iter()
            .map(|v| VariantTag::parse(v))
            .collect::<Result<Vec<_>, _>>()?;
        let mut cfg = ExperimentConfig::new(arch);
        if let Some(layers) = &self.layers {
            cfg.layers = layers.clone();
        }
        cfg.variants = variants;
        cfg.repeats = self.repeats;
        cfg.base_seed = self.base_seed;
        cfg.split_ratio = self.split.ratio;
        cfg.augment = AugmentConfig {
            copies_per_image: self.augment.copies_per_image,
        };
        cfg.svm = SvmConfig {
            c_grid: self.svm.c_grid.clone(),
            folds: self.svm.folds,
            epochs: self.svm.epochs,
            tolerance: self.svm.tolerance,
            seed: 0,
        };
        cfg.keep_going = self.keep_going;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("run config serializes")
    }
}
