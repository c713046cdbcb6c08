//! Multi-class linear SVM.
//!
//! One-vs-rest L2-regularized L1-hinge classifiers trained by dual
//! coordinate descent. The bias is folded in as a constant feature of 1, so
//! it is regularized along with the weights. Features are standardized
//! per dimension on the training matrix before anything else happens.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::seed;

pub const DEFAULT_C_GRID: [f64; 5] = [0.01, 0.1, 1.0, 10.0, 100.0];

/// Row-major sample matrix with labels and group ids.
///
/// Rows sharing a group id (augmented copies of one source image) always land
/// in the same cross-validation fold.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f32>,
    labels: Vec<usize>,
    groups: Vec<usize>,
}

impl FeatureMatrix {
    pub fn new(cols: usize, values: Vec<f32>, labels: Vec<usize>, groups: Vec<usize>) -> Result<Self> {
        if cols == 0 {
            return Err(Error::validation("feature matrix needs at least one column"));
        }
        if values.len() != labels.len() * cols {
            return Err(Error::Dimension {
                op: "FeatureMatrix",
                axis: "values",
                expected: labels.len() * cols,
                found: values.len(),
            });
        }
        if groups.len() != labels.len() {
            return Err(Error::Dimension {
                op: "FeatureMatrix",
                axis: "groups",
                expected: labels.len(),
                found: groups.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::validation(format!(
                "non-finite feature at row {} column {}",
                i / cols,
                i % cols
            )));
        }
        Ok(FeatureMatrix {
            rows: labels.len(),
            cols,
            values,
            labels,
            groups,
        })
    }

    /// Each row is its own group.
    pub fn ungrouped(cols: usize, values: Vec<f32>, labels: Vec<usize>) -> Result<Self> {
        let groups = (0..labels.len()).collect();
        Self::new(cols, values, labels, groups)
    }

    pub fn from_rows(rows: &[Vec<f32>], labels: Vec<usize>, groups: Vec<usize>) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if let Some(bad) = rows.iter().position(|r| r.len() != cols) {
            return Err(Error::Dimension {
                op: "FeatureMatrix",
                axis: "row length",
                expected: cols,
                found: rows[bad].len(),
            });
        }
        Self::new(cols, rows.concat(), labels, groups)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.cols..][..self.cols]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn groups(&self) -> &[usize] {
        &self.groups
    }

    pub fn class_count(&self) -> usize {
        self.labels.iter().max().map_or(0, |&m| m + 1)
    }

    fn distinct_labels(&self) -> usize {
        let mut seen = vec![false; self.class_count()];
        self.labels.iter().for_each(|&l| seen[l] = true);
        seen.iter().filter(|&&s| s).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmConfig {
    pub c_grid: Vec<f64>,
    pub folds: usize,
    pub epochs: usize,
    /// Training stops once a sweep raises the dual objective by less than this.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            c_grid: DEFAULT_C_GRID.to_vec(),
            folds: 5,
            epochs: 200,
            tolerance: 1e-5,
            seed: 0,
        }
    }
}

impl SvmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.c_grid.is_empty() || self.c_grid.iter().any(|&c| !(c > 0.0) || !c.is_finite()) {
            return Err(Error::config("C grid must be non-empty with positive finite values"));
        }
        if self.c_grid.len() > 1 && self.folds < 2 {
            return Err(Error::config("cross-validation needs at least 2 folds"));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs must be positive"));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::config("tolerance must be non-negative"));
        }
        Ok(())
    }
}

/// Per-dimension `(x - mean) / scale` fitted on training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f32>,
    /// Dimensions without variance get scale 1.
    pub scale: Vec<f32>,
}

impl Standardizer {
    pub fn fit(m: &FeatureMatrix) -> Self {
        let cols = m.cols();
        let n = m.rows() as f64;
        let mut sum = vec![0.0f64; cols];
        for i in 0..m.rows() {
            for (s, &v) in sum.iter_mut().zip(m.row(i)) {
                *s += v as f64;
            }
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let mut var = vec![0.0f64; cols];
        for i in 0..m.rows() {
            for ((acc, &v), mu) in var.iter_mut().zip(m.row(i)).zip(&mean) {
                let d = v as f64 - mu;
                *acc += d * d;
            }
        }
        let scale = var
            .iter()
            .map(|v| {
                let s = libm::sqrt(v / n) as f32;
                if s > 0.0 && s.is_finite() {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer {
            mean: mean.iter().map(|&m| m as f32).collect(),
            scale,
        }
    }

    pub fn apply_into(&self, x: &[f32], out: &mut [f32]) {
        for (((o, &v), m), s) in out.iter_mut().zip(x).zip(&self.mean).zip(&self.scale) {
            *o = (v - m) / s;
        }
    }

    pub fn apply(&self, x: &[f32]) -> Vec<f32> {
        let mut out = vec![0.0; x.len()];
        self.apply_into(x, &mut out);
        out
    }
}

/// A binary linear classifier: positive when `w·x + b >= 0`.
///
/// Training accumulates in `f64`; the stored weights are rounded to `f32`
/// so a model survives the tensor container unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct BinarySvm {
    pub weights: Vec<f32>,
    pub bias: f32,
    /// Dual objective after each sweep.
    pub dual_history: Vec<f64>,
}

impl BinarySvm {
    pub fn score(&self, x: &[f32]) -> f64 {
        self.weights.iter().zip(x).map(|(&a, &b)| a as f64 * b as f64).sum::<f64>() + self.bias as f64
    }
}

#[inline]
fn dot(w: &[f64], x: &[f32]) -> f64 {
    w.iter().zip(x).map(|(a, &b)| a * b as f64).sum()
}

/// Dual coordinate descent on rows `idx` of the (already standardized)
/// matrix. `positive[i]` marks rows with target `+1`.
///
/// Maximizes `sum(alpha) - |w|^2 / 2` over `0 <= alpha_i <= c` with
/// `w = sum(alpha_i y_i x_i)` (the bias rides along as `x_0 = 1`).
pub fn train_binary_rows(
    values: &[f32],
    cols: usize,
    idx: &[usize],
    positive: &dyn Fn(usize) -> bool,
    c: f64,
    epochs: usize,
    tolerance: f64,
    seed: u64,
) -> BinarySvm {
    let mut w = vec![0.0f64; cols];
    let mut b = 0.0f64;
    let mut alpha = vec![0.0f64; idx.len()];
    let y: Vec<f64> = idx.iter().map(|&i| if positive(i) { 1.0 } else { -1.0 }).collect();
    let qii: Vec<f64> = idx
        .iter()
        .map(|&i| values[i * cols..][..cols].iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>() + 1.0)
        .collect();
    let mut order: Vec<usize> = (0..idx.len()).collect();
    let mut rng = seed::rng(seed);
    let mut history = Vec::new();
    let mut alpha_sum = 0.0f64;
    let mut prev = 0.0f64;
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for &k in &order {
            let x = &values[idx[k] * cols..][..cols];
            let g = y[k] * (dot(&w, x) + b) - 1.0;
            let a = alpha[k];
            let pg = if a <= 0.0 {
                g.min(0.0)
            } else if a >= c {
                g.max(0.0)
            } else {
                g
            };
            if pg == 0.0 {
                continue;
            }
            let new_a = (a - g / qii[k]).clamp(0.0, c);
            let d = (new_a - a) * y[k];
            if d == 0.0 {
                continue;
            }
            alpha[k] = new_a;
            alpha_sum += new_a - a;
            for (wj, &xj) in w.iter_mut().zip(x) {
                *wj += d * xj as f64;
            }
            b += d;
        }
        let norm2 = w.iter().map(|v| v * v).sum::<f64>() + b * b;
        let dual = alpha_sum - 0.5 * norm2;
        history.push(dual);
        let gain = dual - prev;
        prev = dual;
        if gain < tolerance {
            break;
        }
    }
    BinarySvm {
        weights: w.iter().map(|&v| v as f32).collect(),
        bias: b as f32,
        dual_history: history,
    }
}

/// Binary SVM on a whole matrix: label 0 is the positive class.
pub fn train_binary(m: &FeatureMatrix, c: f64, config: &SvmConfig) -> Result<(Standardizer, BinarySvm)> {
    if m.distinct_labels() != 2 || m.class_count() != 2 {
        return Err(Error::validation("binary training needs labels 0 and 1"));
    }
    let st = Standardizer::fit(m);
    let values = standardized(m, &st);
    let idx: Vec<usize> = (0..m.rows()).collect();
    let labels = m.labels();
    let svm = train_binary_rows(
        &values,
        m.cols(),
        &idx,
        &|i| labels[i] == 0,
        c,
        config.epochs,
        config.tolerance,
        config.seed,
    );
    Ok((st, svm))
}

fn standardized(m: &FeatureMatrix, st: &Standardizer) -> Vec<f32> {
    let mut values = vec![0.0f32; m.values().len()];
    for (src, dst) in m.values().chunks_exact(m.cols()).zip(values.chunks_exact_mut(m.cols())) {
        st.apply_into(src, dst);
    }
    values
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSvmModel {
    pub classes: Vec<BinarySvm>,
    pub standardizer: Standardizer,
    pub c: f64,
    /// Mean validation accuracy for each grid value, in grid order.
    pub cv_scores: Vec<(f64, f64)>,
}

impl LinearSvmModel {
    pub fn cols(&self) -> usize {
        self.standardizer.mean.len()
    }

    pub fn scores(&self, feature: &[f32]) -> Result<Vec<f64>> {
        if feature.len() != self.cols() {
            return Err(Error::Dimension {
                op: "predict",
                axis: "feature length",
                expected: self.cols(),
                found: feature.len(),
            });
        }
        let x = self.standardizer.apply(feature);
        Ok(self.classes.iter().map(|m| m.score(&x)).collect())
    }
}

/// Standardized copy of the training matrix plus everything the grid
/// search and final fit share.
pub struct PreparedTraining {
    pub standardizer: Standardizer,
    values: Vec<f32>,
    cols: usize,
    labels: Vec<usize>,
    classes: usize,
    /// Fold index of every row.
    pub folds: Vec<usize>,
}

/// Standardizes and assigns grouped folds: distinct group ids are shuffled
/// with the config seed and dealt round-robin.
pub fn prepare(m: &FeatureMatrix, config: &SvmConfig) -> Result<PreparedTraining> {
    config.validate()?;
    if m.distinct_labels() < 2 {
        return Err(Error::validation("training data contains a single class"));
    }
    let mut groups: Vec<usize> = m.groups().to_vec();
    groups.sort_unstable();
    groups.dedup();
    let folds_needed = if config.c_grid.len() > 1 { config.folds } else { 1 };
    if groups.len() < folds_needed {
        return Err(Error::validation(format!(
            "{} source groups cannot fill {} folds",
            groups.len(),
            folds_needed
        )));
    }
    let mut rng = seed::rng(seed::derive(&[config.seed, 0xf01d]));
    groups.shuffle(&mut rng);
    let fold_of_group = |g: usize| groups.iter().position(|&x| x == g).expect("known group") % folds_needed;
    let mut cache: alloc::collections::BTreeMap<usize, usize> = alloc::collections::BTreeMap::new();
    let folds = m
        .groups()
        .iter()
        .map(|&g| *cache.entry(g).or_insert_with(|| fold_of_group(g)))
        .collect();
    let standardizer = Standardizer::fit(m);
    Ok(PreparedTraining {
        values: standardized(m, &standardizer),
        standardizer,
        cols: m.cols(),
        labels: m.labels().to_vec(),
        classes: m.class_count(),
        folds,
    })
}

impl PreparedTraining {
    pub fn fold_count(&self) -> usize {
        self.folds.iter().max().map_or(0, |&f| f + 1)
    }

    fn fit_rows(&self, idx: &[usize], c: f64, config: &SvmConfig) -> Vec<BinarySvm> {
        (0..self.classes)
            .map(|class| {
                train_binary_rows(
                    &self.values,
                    self.cols,
                    idx,
                    &|i| self.labels[i] == class,
                    c,
                    config.epochs,
                    config.tolerance,
                    config.seed,
                )
            })
            .collect()
    }

    /// `(correct, total)` on fold `fold` after training on the others.
    pub fn fold_result(&self, c: f64, fold: usize, config: &SvmConfig) -> (usize, usize) {
        let (train, held): (Vec<usize>, Vec<usize>) = (0..self.labels.len()).partition(|&i| self.folds[i] != fold);
        let classes = self.fit_rows(&train, c, config);
        let correct = held
            .iter()
            .filter(|&&i| {
                let x = &self.values[i * self.cols..][..self.cols];
                argmax(classes.iter().map(|m| m.score(x))) == self.labels[i]
            })
            .count();
        (correct, held.len())
    }

    /// Mean of per-fold validation accuracies.
    pub fn cv_accuracy(&self, c: f64, config: &SvmConfig) -> f64 {
        let k = self.fold_count();
        let mut total = 0.0;
        for fold in 0..k {
            let (correct, n) = self.fold_result(c, fold, config);
            total += correct as f64 / n as f64;
        }
        total / k as f64
    }

    pub fn fit(self, c: f64, cv_scores: Vec<(f64, f64)>, config: &SvmConfig) -> LinearSvmModel {
        let idx: Vec<usize> = (0..self.labels.len()).collect();
        let classes = self.fit_rows(&idx, c, config);
        LinearSvmModel {
            classes,
            standardizer: self.standardizer,
            c,
            cv_scores,
        }
    }
}

/// Highest validation accuracy wins; ties go to the smaller C.
pub fn choose_c(scores: &[(f64, f64)]) -> f64 {
    let mut best: Option<(f64, f64)> = None;
    for &(c, acc) in scores {
        best = match best {
            None => Some((c, acc)),
            Some((bc, bacc)) if acc > bacc || (acc == bacc && c < bc) => Some((c, acc)),
            keep => keep,
        };
    }
    best.expect("non-empty grid").0
}

/// Grid search by grouped k-fold cross-validation, then a final fit on
/// every training row.
pub fn train(features: &FeatureMatrix, config: &SvmConfig) -> Result<LinearSvmModel> {
    let prepared = prepare(features, config)?;
    let scores: Vec<(f64, f64)> = if config.c_grid.len() == 1 {
        vec![(config.c_grid[0], f64::NAN)]
    } else {
        config
            .c_grid
            .iter()
            .map(|&c| (c, prepared.cv_accuracy(c, config)))
            .collect()
    };
    let c = if config.c_grid.len() == 1 {
        config.c_grid[0]
    } else {
        choose_c(&scores)
    };
    Ok(prepared.fit(c, scores, config))
}

/// Index of the largest value; ties go to the smaller index.
pub fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        if v > best_v || (i == 0 && v.is_nan()) {
            best = i;
            best_v = v;
        }
    }
    best
}

pub fn predict(model: &LinearSvmModel, feature: &[f32]) -> Result<usize> {
    Ok(argmax(model.scores(feature)?))
}

/// Fraction of exact matches.
pub fn accuracy(predictions: &[usize], truth: &[usize]) -> Result<f64> {
    if predictions.len() != truth.len() {
        return Err(Error::validation(format!(
            "{} predictions for {} labels",
            predictions.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::validation("accuracy of an empty set"));
    }
    let hits = predictions.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// `matrix[truth][predicted]` counts.
pub fn confusion(predictions: &[usize], truth: &[usize], classes: usize) -> Vec<Vec<usize>> {
    let mut m = vec![vec![0; classes]; classes];
    for (&p, &t) in predictions.iter().zip(truth) {
        if p < classes && t < classes {
            m[t][p] += 1;
        }
    }
    m
}
