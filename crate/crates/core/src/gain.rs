//! Aggregation of trial accuracies into the two knowledge-gain measures.
//!
//! * layer gain `n`: `mean ACC(A_{1,n}) - mean ACC(A_{1,n-1} R_n)`, the
//!   contribution of pretrained layer `n` alone;
//! * total gain `n`: `mean ACC(A_{1,n}) - mean ACC(R_{1,n})`, everything the
//!   first `n` pretrained layers bring over random weights.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::arch::VariantTag;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
    pub count: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Summary> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
            libm::sqrt(ss / (n - 1.0))
        } else {
            0.0
        };
        Some(Summary {
            mean,
            std,
            count: values.len(),
        })
    }

    pub fn standard_error(&self) -> f64 {
        if self.count == 0 {
            return 0.0;
        }
        self.std / libm::sqrt(self.count as f64)
    }
}

pub fn layer_gain(pretrained_prefix: f64, hybrid: f64) -> f64 {
    pretrained_prefix - hybrid
}

pub fn total_gain(pretrained_prefix: f64, random_baseline: f64) -> f64 {
    pretrained_prefix - random_baseline
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerGains {
    pub n: usize,
    pub layer_gain: Option<f64>,
    pub total_gain: Option<f64>,
}

/// Per-(variant, n) summaries of raw `(variant, n, acc)` records.
pub fn summarize(records: impl IntoIterator<Item = (VariantTag, usize, f64)>) -> BTreeMap<(VariantTag, usize), Summary> {
    let mut grouped: BTreeMap<(VariantTag, usize), Vec<f64>> = BTreeMap::new();
    for (tag, n, acc) in records {
        grouped.entry((tag, n)).or_default().push(acc);
    }
    grouped
        .into_iter()
        .filter_map(|(k, v)| Summary::of(&v).map(|s| (k, s)))
        .collect()
}

/// Gains for every `n` that has a pretrained-prefix summary.
pub fn gains(summaries: &BTreeMap<(VariantTag, usize), Summary>) -> Vec<LayerGains> {
    let mut ns: Vec<usize> = summaries.keys().map(|&(_, n)| n).collect();
    ns.sort_unstable();
    ns.dedup();
    ns.into_iter()
        .filter_map(|n| {
            let a = summaries.get(&(VariantTag::PretrainedPrefix, n))?.mean;
            let h = summaries.get(&(VariantTag::Hybrid, n)).map(|s| layer_gain(a, s.mean));
            let r = summaries.get(&(VariantTag::RandomBaseline, n)).map(|s| total_gain(a, s.mean));
            Some(LayerGains {
                n,
                layer_gain: h,
                total_gain: r,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn gains_from_means() {
        let recs = vec![
            (VariantTag::PretrainedPrefix, 3, 0.80),
            (VariantTag::Hybrid, 3, 0.75),
            (VariantTag::RandomBaseline, 3, 0.60),
        ];
        let g = gains(&summarize(recs));
        assert_eq!(g.len(), 1);
        assert!((g[0].layer_gain.unwrap() - 0.05).abs() < 1e-12);
        assert!((g[0].total_gain.unwrap() - 0.20).abs() < 1e-12);
    }

    #[test]
    fn identical_accuracies_give_zero_gain() {
        let recs = VariantTag::ALL.iter().flat_map(|&t| [(t, 2, 0.5), (t, 2, 0.7)]);
        let g = gains(&summarize(recs));
        assert_eq!(g[0].layer_gain, Some(0.0));
        assert_eq!(g[0].total_gain, Some(0.0));
    }

    #[test]
    fn summary_stats() {
        let s = Summary::of(&[0.5]).unwrap();
        assert_eq!((s.mean, s.std), (0.5, 0.0));
        let s = Summary::of(&[1.0, 3.0]).unwrap();
        assert_eq!(s.mean, 2.0);
        assert!((s.std - libm::sqrt(2.0)).abs() < 1e-12);
        assert!(Summary::of(&[]).is_none());
    }
}
