//! Trial orchestration: split, augment, extract, train, score.
//!
//! Every trial index `t` gets three seeds that do not depend on the variant:
//! one for the data path (split and augmentation), one for the random
//! weights and one for the SVM. Variants evaluated at the same `t` therefore
//! see identical images and identical random layers, and differ only in
//! where their weights come from. The recorded per-trial seed folds in the
//! variant and `n` as well, so no two trials share one.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Instant;

use layergauge_core::dataset::{
    apply_transform, channel_mean, preprocess, resize_bilinear, stratified_split, AugmentConfig, AugmentTransform,
    LabeledImage, DEFAULT_TRAIN_RATIO,
};
use layergauge_core::forward::{forward_block, forward_cuts, forward_to_representation};
use layergauge_core::seed::{self, domain};
use layergauge_core::svm::{self, FeatureMatrix, LinearSvmModel, SvmConfig};
use layergauge_core::weights::{assemble_variant, random_bundle_upto};
use layergauge_core::{ArchitectureSpec, Error as CoreError, ModelVariant, ModelWeights, Tensor, VariantTag, WeightBundle};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::cache::{self, ActivationCache, CacheMode, Key};
use crate::error::{Error, Result};
use crate::manifest::Dataset;
use crate::report::{KnowledgeGainReport, TrialFailure, TrialResult};
use crate::weights_io::bundle_digest;

pub const PROTOCOL_VERSION: &str = "layergauge-protocol/1 (each repeat redraws the split, the augmentation \
     and the random weights; data, weight and SVM seeds exclude the variant; SVM trained on augmented \
     features; accuracy measured on the held-out test partition)";

pub const INTERPOLATION: &str = "bilinear";
pub const PADDING: &str = "reflect";

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub arch: ArchitectureSpec,
    /// Representation layers to evaluate.
    pub layers: Vec<usize>,
    pub variants: Vec<VariantTag>,
    pub repeats: usize,
    pub base_seed: u64,
    pub split_ratio: f64,
    pub augment: AugmentConfig,
    /// `seed` is replaced per trial.
    pub svm: SvmConfig,
    /// Record failed trials instead of aborting.
    pub keep_going: bool,
}

impl ExperimentConfig {
    /// Every layer and variant, 50 repeats, default split, augmentation and
    /// SVM settings.
    pub fn new(arch: ArchitectureSpec) -> Self {
        ExperimentConfig {
            layers: (1..=arch.depth()).collect(),
            arch,
            variants: VariantTag::ALL.to_vec(),
            repeats: 50,
            base_seed: 0,
            split_ratio: DEFAULT_TRAIN_RATIO,
            augment: AugmentConfig::default(),
            svm: SvmConfig::default(),
            keep_going: false,
        }
    }

    pub fn max_layer(&self) -> usize {
        self.layers.iter().copied().max().unwrap_or(0)
    }

    /// How many pretrained layers the requested variants read.
    pub fn pretrained_layers_needed(&self) -> usize {
        let mut need = 0;
        for &tag in &self.variants {
            for &n in &self.layers {
                need = need.max(match tag {
                    VariantTag::PretrainedPrefix => n,
                    VariantTag::Hybrid => n - 1,
                    VariantTag::RandomBaseline => 0,
                });
            }
        }
        need
    }

    pub fn needs_random(&self) -> bool {
        self.variants.iter().any(|t| t.needs_random())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.repeats == 0 {
            return bad("repeats must be at least 1".into());
        }
        if self.layers.is_empty() || self.variants.is_empty() {
            return bad("at least one layer and one variant are required".into());
        }
        for &n in &self.layers {
            self.arch.check_n(n)?;
        }
        let mut seen = self.layers.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.layers.len() {
            return bad("layers contain duplicates".into());
        }
        let mut tags = self.variants.clone();
        tags.sort_unstable();
        tags.dedup();
        if tags.len() != self.variants.len() {
            return bad("variants contain duplicates".into());
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return bad(format!("split ratio {} must lie strictly between 0 and 1", self.split_ratio));
        }
        self.svm.validate()?;
        Ok(())
    }

    /// Every effective setting, for the report.
    pub fn echo(&self) -> serde_json::Value {
        serde_json::json!({
            "arch": {
                "name": self.arch.name(),
                "input_shape": self.arch.input_shape(),
                "layer_count": self.arch.layers().len(),
                "representation_cuts": self.arch.representation_cuts(),
                "feature_dims": self.arch.feature_dims(),
            },
            "layers": self.layers,
            "variants": self.variants.iter().map(|v| v.as_str()).collect::<Vec<_>>(),
            "repeats": self.repeats,
            "base_seed": self.base_seed,
            "split": { "ratio": self.split_ratio, "stratified": true, "evaluated_partition": "test" },
            "augment": {
                "copies_per_image": self.augment.copies_per_image,
                "rotation": "uniform [0, 360) degrees about the center",
                "reflections": "vertical and horizontal, each with probability 1/2",
                "interpolation": INTERPOLATION,
                "padding": PADDING,
            },
            "preprocess": "bilinear resize to the input shape, minus the per-channel mean of the trial's resized training originals",
            "svm": {
                "c_grid": self.svm.c_grid,
                "folds": self.svm.folds,
                "epochs": self.svm.epochs,
                "tolerance": self.svm.tolerance,
                "multiclass": "one-vs-rest",
                "trained_on": "original and augmented training images",
            },
            "keep_going": self.keep_going,
        })
    }
}

/// Seeds shared by every variant at one trial index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialSeeds {
    pub data: u64,
    pub weights: u64,
    pub svm: u64,
}

impl TrialSeeds {
    pub fn new(base: u64, trial: usize) -> Self {
        let t = trial as u64;
        TrialSeeds {
            data: seed::derive(&[base, domain::DATA, t]),
            weights: seed::derive(&[base, domain::WEIGHTS, t]),
            svm: seed::derive(&[base, domain::SVM, t]),
        }
    }
}

/// The seed recorded for trial `(tag, n, trial)`.
pub fn trial_seed(base: u64, tag: VariantTag, n: usize, trial: usize) -> u64 {
    seed::derive(&[base, domain::TRIAL, tag.code(), n as u64, trial as u64])
}

/// Seed of augmentation copy `copy` of image `id`.
pub fn augment_seed(data_seed: u64, id: &str, copy: usize) -> u64 {
    seed::derive(&[data_seed, domain::AUGMENT, seed::hash_str(id), copy as u64])
}

/// Grid search with the (C, fold) evaluations spread over the thread pool.
/// Produces the same model as the sequential `svm::train`.
pub fn train_svm(features: &FeatureMatrix, config: &SvmConfig) -> Result<LinearSvmModel> {
    let prepared = svm::prepare(features, config)?;
    if config.c_grid.len() == 1 {
        let c = config.c_grid[0];
        return Ok(prepared.fit(c, vec![(c, f64::NAN)], config));
    }
    let k = prepared.fold_count();
    let jobs: Vec<(usize, usize)> = (0..config.c_grid.len()).flat_map(|ci| (0..k).map(move |f| (ci, f))).collect();
    let results: Vec<(usize, usize)> = jobs
        .par_iter()
        .map(|&(ci, fold)| prepared.fold_result(config.c_grid[ci], fold, config))
        .collect();
    let scores: Vec<(f64, f64)> = config
        .c_grid
        .iter()
        .enumerate()
        .map(|(ci, &c)| {
            let mut total = 0.0;
            for &(correct, n) in &results[ci * k..(ci + 1) * k] {
                total += correct as f64 / n as f64;
            }
            (c, total / k as f64)
        })
        .collect();
    let c = svm::choose_c(&scores);
    Ok(prepared.fit(c, scores, config))
}

/// Features at cut `n` for each image, with no augmentation. Rows follow
/// `images`; each row is its own group.
pub fn extract_features(
    arch: &ArchitectureSpec,
    weights: &ModelWeights<'_>,
    images: &[&LabeledImage],
    n: usize,
    mean: [f32; 3],
) -> Result<FeatureMatrix> {
    let rows = images
        .par_iter()
        .map(|im| Ok(forward_to_representation(arch, weights, &preprocess(&im.pixels, arch, mean), n)?.into_data()))
        .collect::<Result<Vec<Vec<f32>>>>()?;
    let labels = images.iter().map(|im| im.label).collect();
    Ok(FeatureMatrix::from_rows(&rows, labels, (0..images.len()).collect())?)
}

#[derive(Debug, Clone, Copy)]
struct Sample {
    image: usize,
    transform: Option<AugmentTransform>,
}

struct Trial {
    index: usize,
    seeds: TrialSeeds,
    train: Vec<Sample>,
    test: Vec<Sample>,
    mean: [f32; 3],
    random: Option<(WeightBundle, Key)>,
}

#[derive(Clone, Copy)]
enum Source {
    Pretrained,
    Random,
}

/// Train and test features for one `(variant, n, trial)`.
pub struct TrialFeatures {
    pub train: FeatureMatrix,
    pub test: FeatureMatrix,
}

pub struct Experiment<'a> {
    config: ExperimentConfig,
    dataset: &'a Dataset,
    pretrained: Option<(&'a WeightBundle, Key)>,
    image_digests: Vec<Key>,
    index: HashMap<&'a str, usize>,
    cache: ActivationCache,
}

impl<'a> Experiment<'a> {
    pub fn new(
        config: ExperimentConfig,
        dataset: &'a Dataset,
        pretrained: Option<&'a WeightBundle>,
        cache: CacheMode,
    ) -> Result<Self> {
        config.validate()?;
        let need = config.pretrained_layers_needed();
        let pretrained = match (need, pretrained) {
            (0, _) => None,
            (_, None) => {
                return Err(Error::Config(format!(
                    "the requested variants read {need} pretrained layer(s) but no pretrained weights were given"
                )))
            }
            (_, Some(b)) => {
                b.validate(&config.arch)?;
                if b.coverage() < need {
                    return Err(CoreError::Weight {
                        layer: config.arch.layer_name(b.coverage() + 1)?,
                        message: format!("pretrained weights cover {} layers, {need} needed", b.coverage()),
                    }
                    .into());
                }
                Some((b, bundle_digest(b)))
            }
        };
        let image_digests = dataset.images.par_iter().map(|im| cache::tensor_digest(&im.pixels)).collect();
        let index = dataset.images.iter().enumerate().map(|(i, im)| (im.id.as_str(), i)).collect();
        Ok(Experiment {
            config,
            dataset,
            pretrained,
            image_digests,
            index,
            cache: ActivationCache::new(cache)?,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    /// `(hits, misses)` of the activation cache.
    pub fn cache_stats(&self) -> (usize, usize) {
        self.cache.stats()
    }

    fn image_index(&self, id: &str) -> Result<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| CoreError::Validation(format!("manifest entry {id} has no decoded image")).into())
    }

    fn prepare_trial(&self, index: usize) -> Result<Trial> {
        let seeds = TrialSeeds::new(self.config.base_seed, index);
        let plan = stratified_split(&self.dataset.manifest, self.config.split_ratio, seeds.data)?;
        let copies = self.config.augment.copies_per_image;
        let mut train = Vec::with_capacity(plan.train_ids.len() * (copies + 1));
        for id in &plan.train_ids {
            let image = self.image_index(id)?;
            train.push(Sample { image, transform: None });
            for k in 0..copies {
                let mut rng = seed::rng(augment_seed(seeds.data, id, k));
                train.push(Sample {
                    image,
                    transform: Some(AugmentTransform::sample(&mut rng)),
                });
            }
        }
        let test = plan
            .test_ids
            .iter()
            .map(|id| Ok(Sample { image: self.image_index(id)?, transform: None }))
            .collect::<Result<Vec<_>>>()?;
        let [h, w, _] = self.config.arch.input_shape();
        let resized: Vec<Tensor> = train
            .par_iter()
            .filter(|s| s.transform.is_none())
            .map(|s| resize_bilinear(&self.dataset.images[s.image].pixels, h, w))
            .collect();
        let mean = channel_mean(resized.iter());
        let random = self.config.needs_random().then(|| {
            let b = random_bundle_upto(&self.config.arch, seeds.weights, self.config.max_layer());
            let d = bundle_digest(&b);
            (b, d)
        });
        Ok(Trial {
            index,
            seeds,
            train,
            test,
            mean,
            random,
        })
    }

    fn input(&self, trial: &Trial, s: &Sample) -> Tensor {
        let pixels = &self.dataset.images[s.image].pixels;
        match s.transform {
            Some(t) => preprocess(&apply_transform(pixels, t), &self.config.arch, trial.mean),
            None => preprocess(pixels, &self.config.arch, trial.mean),
        }
    }

    fn input_key(&self, trial: &Trial, s: &Sample) -> Key {
        let mut h = Sha256::new();
        h.update(self.image_digests[s.image]);
        match s.transform {
            None => h.update([0u8]),
            Some(t) => {
                h.update([1u8, t.vertical_reflection as u8, t.horizontal_flip as u8]);
                h.update(t.angle_deg.to_bits().to_le_bytes());
            }
        }
        for m in trial.mean {
            h.update(m.to_bits().to_le_bytes());
        }
        h.finalize().into()
    }

    fn model<'t>(&'t self, trial: &'t Trial, source: Source) -> Result<(&'t WeightBundle, &'t Key, VariantTag)> {
        match source {
            Source::Pretrained => {
                let (b, d) = self.pretrained.as_ref().ok_or_else(|| Error::Config("no pretrained weights".into()))?;
                Ok((*b, d, VariantTag::PretrainedPrefix))
            }
            Source::Random => {
                let (b, d) = trial.random.as_ref().expect("random weights drawn when needed");
                Ok((b, d, VariantTag::RandomBaseline))
            }
        }
    }

    /// Unflattened activation of `source` at cut `n`.
    fn activation(&self, trial: &Trial, source: Source, n: usize, s: &Sample) -> Result<Arc<Tensor>> {
        let arch = &self.config.arch;
        let (bundle, digest, tag) = self.model(trial, source)?;
        if !self.cache.enabled() {
            let weights = assemble_variant(arch, Some(bundle), Some(bundle), ModelVariant { tag, n })?;
            let mut cuts = forward_cuts(arch, &weights, &self.input(trial, s), n)?;
            return Ok(Arc::new(cuts.pop().expect("n >= 1")));
        }
        let input_key = self.input_key(trial, s);
        if let Some(hit) = self.cache.get(&cache::cut_key(digest, arch.name(), n, &input_key)) {
            return Ok(hit);
        }
        // Fill every cut this model will be asked for in one pass.
        let upto = bundle.coverage().min(self.config.max_layer()).max(n);
        let weights = assemble_variant(arch, Some(bundle), Some(bundle), ModelVariant { tag, n: upto })?;
        let cuts = forward_cuts(arch, &weights, &self.input(trial, s), upto)?;
        let mut wanted = None;
        for (k, cut) in (1..).zip(cuts) {
            let cut = Arc::new(cut);
            self.cache.put(&cache::cut_key(digest, arch.name(), k, &input_key), cut.clone())?;
            if k == n {
                wanted = Some(cut);
            }
        }
        Ok(wanted.expect("n <= upto"))
    }

    fn feature(&self, trial: &Trial, tag: VariantTag, n: usize, s: &Sample) -> Result<Vec<f32>> {
        let out = match tag {
            VariantTag::PretrainedPrefix => return Ok(self.activation(trial, Source::Pretrained, n, s)?.data().to_vec()),
            VariantTag::RandomBaseline => return Ok(self.activation(trial, Source::Random, n, s)?.data().to_vec()),
            VariantTag::Hybrid => {
                let (random, _, _) = self.model(trial, Source::Random)?;
                let layer = random.layer(n).expect("random weights cover every requested layer");
                let prev = if n == 1 {
                    self.input(trial, s)
                } else {
                    Tensor::clone(&*self.activation(trial, Source::Pretrained, n - 1, s)?)
                };
                forward_block(&self.config.arch, n, layer, prev)?
            }
        };
        Ok(out.into_data())
    }

    fn matrix(&self, trial: &Trial, tag: VariantTag, n: usize, samples: &[Sample]) -> Result<FeatureMatrix> {
        let rows = samples
            .par_iter()
            .map(|s| self.feature(trial, tag, n, s))
            .collect::<Result<Vec<_>>>()?;
        let labels = samples.iter().map(|s| self.dataset.images[s.image].label).collect();
        let groups = samples.iter().map(|s| s.image).collect();
        Ok(FeatureMatrix::from_rows(&rows, labels, groups)?)
    }

    fn evaluate(&self, trial: &Trial, tag: VariantTag, n: usize) -> Result<TrialResult> {
        let start = Instant::now();
        let train = self.matrix(trial, tag, n, &trial.train)?;
        let test = self.matrix(trial, tag, n, &trial.test)?;
        let config = SvmConfig {
            seed: trial.seeds.svm,
            ..self.config.svm.clone()
        };
        let model = train_svm(&train, &config)?;
        let predictions = (0..test.rows())
            .into_par_iter()
            .map(|i| svm::predict(&model, test.row(i)))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let acc = svm::accuracy(&predictions, test.labels())?;
        Ok(TrialResult {
            variant: tag,
            n,
            trial_index: trial.index,
            seed: trial_seed(self.config.base_seed, tag, n, trial.index),
            acc,
            chosen_c: model.c,
            timing_secs: start.elapsed().as_secs_f64(),
            train_rows: train.rows(),
            test_rows: test.rows(),
        })
    }

    fn with_context(&self, tag: VariantTag, n: usize, trial: usize, e: Error) -> Error {
        Error::Trial {
            variant: tag.to_string(),
            n,
            trial,
            source: Box::new(e),
        }
    }

    fn check_variant(&self, variant: ModelVariant) -> Result<()> {
        self.config.arch.check_n(variant.n)?;
        let in_range = |x: usize| x <= self.config.max_layer();
        let ok = match variant.tag {
            VariantTag::PretrainedPrefix => in_range(variant.n) && self.pretrained.is_some(),
            VariantTag::Hybrid => in_range(variant.n) && (variant.n == 1 || self.pretrained.is_some()),
            VariantTag::RandomBaseline => in_range(variant.n),
        };
        let random_ready = !variant.tag.needs_random() || self.config.needs_random();
        if ok && random_ready {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "{} n={} lies outside the configured variants and layers",
                variant.tag, variant.n
            )))
        }
    }

    /// Train and test features exactly as `run_trial` would compute them.
    pub fn trial_features(&self, variant: ModelVariant, trial: usize) -> Result<TrialFeatures> {
        self.check_variant(variant)?;
        let t = self.prepare_trial(trial)?;
        let out = (|| {
            Ok(TrialFeatures {
                train: self.matrix(&t, variant.tag, variant.n, &t.train)?,
                test: self.matrix(&t, variant.tag, variant.n, &t.test)?,
            })
        })();
        self.cache.end_trial()?;
        out.map_err(|e| self.with_context(variant.tag, variant.n, trial, e))
    }

    pub fn run_trial(&self, variant: ModelVariant, trial: usize) -> Result<TrialResult> {
        self.check_variant(variant)?;
        let out = self
            .prepare_trial(trial)
            .and_then(|t| self.evaluate(&t, variant.tag, variant.n));
        self.cache.end_trial()?;
        out.map_err(|e| self.with_context(variant.tag, variant.n, trial, e))
    }

    pub fn run(&self) -> Result<KnowledgeGainReport> {
        self.run_with(&|_| {})
    }

    /// Runs every `(variant, n, trial)`, calling `progress` after each one.
    /// Trials sharing an index share their split, augmentation, random
    /// weights and cached activations.
    pub fn run_with(&self, progress: &(dyn Fn(&TrialResult) + Sync)) -> Result<KnowledgeGainReport> {
        let pairs: Vec<(VariantTag, usize)> = self
            .config
            .layers
            .iter()
            .flat_map(|&n| self.config.variants.iter().map(move |&tag| (tag, n)))
            .collect();
        let mut trials = Vec::new();
        let mut failures = Vec::new();
        for t in 0..self.config.repeats {
            let prepared = self.prepare_trial(t);
            for &(tag, n) in &pairs {
                let outcome = match &prepared {
                    Ok(trial) => self.evaluate(trial, tag, n),
                    Err(e) => Err(Error::Config(format!("trial setup failed: {e}"))),
                };
                match outcome {
                    Ok(r) => {
                        progress(&r);
                        trials.push(r);
                    }
                    Err(e) if self.config.keep_going => failures.push(TrialFailure {
                        variant: tag,
                        n,
                        trial_index: t,
                        seed: trial_seed(self.config.base_seed, tag, n, t),
                        error: e.to_string(),
                    }),
                    Err(e) => {
                        self.cache.end_trial()?;
                        let e = match prepared {
                            Err(setup) => setup,
                            Ok(_) => e,
                        };
                        return Err(self.with_context(tag, n, t, e));
                    }
                }
            }
            self.cache.end_trial()?;
        }
        let mut notes = vec![format!("activation cache: {}", self.cache.mode().describe())];
        if !failures.is_empty() {
            notes.push(format!("{} trial(s) failed and were recorded instead of aborting", failures.len()));
        }
        Ok(KnowledgeGainReport::build(
            PROTOCOL_VERSION,
            self.config.echo(),
            notes,
            trials,
            failures,
        ))
    }
}
