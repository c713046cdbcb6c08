//! Experiment reports and plot data.
//!
//! The report is pretty-printed JSON. Plot data is two CSV files:
//! `plot_accuracy.csv` with `series,n,mean_acc,std_acc` (one series per
//! variant) and `plot_gains.csv` with `gain_type,n,value`. Floats are written
//! in shortest round-trip form, so parsing them back gives the report's
//! numbers exactly.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use layergauge_core::gain;
use layergauge_core::{Error as CoreError, VariantTag};
use serde::{Deserialize, Serialize};

use crate::atomic::write_atomic;
use crate::error::{Error, Result};

pub const ACCURACY_FILE: &str = "plot_accuracy.csv";
pub const GAINS_FILE: &str = "plot_gains.csv";

pub(crate) mod tag_serde {
    use layergauge_core::VariantTag;
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &VariantTag, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(t.as_str())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<VariantTag, D::Error> {
        let s = String::deserialize(d)?;
        VariantTag::parse(&s).map_err(D::Error::custom)
    }
}

/// One `(variant, n, trial)` evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    #[serde(with = "tag_serde")]
    pub variant: VariantTag,
    pub n: usize,
    pub trial_index: usize,
    pub seed: u64,
    /// Accuracy on the held-out test partition.
    pub acc: f64,
    pub chosen_c: f64,
    pub timing_secs: f64,
    pub train_rows: usize,
    pub test_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    #[serde(with = "tag_serde")]
    pub variant: VariantTag,
    pub n: usize,
    pub trial_index: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    #[serde(with = "tag_serde")]
    pub variant: VariantTag,
    pub n: usize,
    pub mean_acc: f64,
    pub std_acc: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gains {
    pub n: usize,
    pub layer_gain: Option<f64>,
    pub total_gain: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeGainReport {
    pub protocol_version: String,
    pub rng_identity: String,
    pub config: serde_json::Value,
    pub notes: Vec<String>,
    pub trials: Vec<TrialResult>,
    pub failures: Vec<TrialFailure>,
    pub aggregates: Vec<Aggregate>,
    pub gains: Vec<Gains>,
}

impl KnowledgeGainReport {
    /// Orders trials by `(variant, n, trial)` and derives aggregates and
    /// gains from them.
    pub fn build(
        protocol_version: &str,
        config: serde_json::Value,
        notes: Vec<String>,
        mut trials: Vec<TrialResult>,
        mut failures: Vec<TrialFailure>,
    ) -> Self {
        trials.sort_by_key(|t| (t.variant, t.n, t.trial_index));
        failures.sort_by_key(|f| (f.variant, f.n, f.trial_index));
        let summaries = gain::summarize(trials.iter().map(|t| (t.variant, t.n, t.acc)));
        let aggregates = summaries
            .iter()
            .map(|(&(variant, n), s)| Aggregate {
                variant,
                n,
                mean_acc: s.mean,
                std_acc: s.std,
                count: s.count,
            })
            .collect();
        let gains = gain::gains(&summaries)
            .into_iter()
            .map(|g| Gains {
                n: g.n,
                layer_gain: g.layer_gain,
                total_gain: g.total_gain,
            })
            .collect();
        KnowledgeGainReport {
            protocol_version: protocol_version.to_string(),
            rng_identity: layergauge_core::seed::RNG_IDENTITY.to_string(),
            config,
            notes,
            trials,
            failures,
            aggregates,
            gains,
        }
    }

    pub fn aggregate(&self, variant: VariantTag, n: usize) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.variant == variant && a.n == n)
    }

    pub fn gains_at(&self, n: usize) -> Option<&Gains> {
        self.gains.iter().find(|g| g.n == n)
    }
}

pub fn write_report(report: &KnowledgeGainReport, path: &Path) -> Result<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, report)?;
        w.write_all(b"\n")
    })
}

pub fn read_report(path: &Path) -> Result<KnowledgeGainReport> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::format(path, e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub series: String,
    pub n: usize,
    pub mean_acc: f64,
    pub std_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainRow {
    pub gain_type: String,
    pub n: usize,
    pub value: f64,
}

/// Rows for both plot files. Every variant present must have a series
/// point at every `n` present.
pub fn plot_rows(report: &KnowledgeGainReport) -> Result<(Vec<AccuracyRow>, Vec<GainRow>)> {
    let variants: BTreeSet<VariantTag> = report
        .aggregates
        .iter()
        .map(|a| a.variant)
        .chain(report.failures.iter().map(|f| f.variant))
        .collect();
    let ns: BTreeSet<usize> = report
        .aggregates
        .iter()
        .map(|a| a.n)
        .chain(report.failures.iter().map(|f| f.n))
        .collect();
    if variants.is_empty() {
        return Err(CoreError::Validation("report holds no series".into()).into());
    }
    let mut accuracy = Vec::new();
    for &v in &variants {
        for &n in &ns {
            let a = report
                .aggregate(v, n)
                .ok_or_else(|| CoreError::Validation(format!("missing series point {v} n={n}")))?;
            accuracy.push(AccuracyRow {
                series: v.as_str().to_string(),
                n,
                mean_acc: a.mean_acc,
                std_acc: a.std_acc,
            });
        }
    }
    let mut gains = Vec::new();
    for g in &report.gains {
        if let Some(value) = g.layer_gain {
            gains.push(GainRow {
                gain_type: "layer_gain".into(),
                n: g.n,
                value,
            });
        }
    }
    for g in &report.gains {
        if let Some(value) = g.total_gain {
            gains.push(GainRow {
                gain_type: "total_gain".into(),
                n: g.n,
                value,
            });
        }
    }
    Ok((accuracy, gains))
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    write_atomic(path, |w| {
        let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        out.write_record(header)?;
        for row in rows {
            out.serialize(row)?;
        }
        out.flush()
    })
}

/// Writes `plot_accuracy.csv` and `plot_gains.csv` into `dir`.
pub fn emit_plot_data(report: &KnowledgeGainReport, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    let (accuracy, gains) = plot_rows(report)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let acc_path = dir.join(ACCURACY_FILE);
    let gain_path = dir.join(GAINS_FILE);
    write_csv(&acc_path, &accuracy, &["series", "n", "mean_acc", "std_acc"])?;
    write_csv(&gain_path, &gains, &["gain_type", "n", "value"])?;
    Ok((acc_path, gain_path))
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    csv::Reader::from_reader(BufReader::new(file))
        .deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| Error::format(path, e.to_string()))
}

pub fn read_plot_data(dir: &Path) -> Result<(Vec<AccuracyRow>, Vec<GainRow>)> {
    Ok((read_csv(&dir.join(ACCURACY_FILE))?, read_csv(&dir.join(GAINS_FILE))?))
}
