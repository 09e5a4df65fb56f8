//! Evaluation metrics and the grouped error distribution.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objectives::recovery_label;

/// Default boundary between the low and high postoperative VA groups.
pub const HIGH_VA_SPLIT: f64 = 0.7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub mae: f64,
    pub rmse: f64,
    pub acc: f64,
    pub f1: f64,
    /// `true − pred` per sample, in input order.
    pub gaps: Vec<f64>,
    pub distribution: GapDistribution,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub count: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Gap statistics for samples with true VA above (`high`) and at or below
/// (`low`) the split. An empty group is left out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapDistribution {
    pub split: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub high: Option<BoxStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub low: Option<BoxStats>,
}

/// Quantile of already sorted data by linear interpolation between order
/// statistics at position `q·(n−1)`.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

pub fn box_stats(values: &[f64]) -> Option<BoxStats> {
    if values.is_empty() {
        return None;
    }
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    Some(BoxStats {
        count: s.len(),
        min: s[0],
        q1: quantile(&s, 0.25),
        median: quantile(&s, 0.5),
        q3: quantile(&s, 0.75),
        max: s[s.len() - 1],
    })
}

fn check(preds: &[f64], trues: &[f64], extra: Option<usize>) -> Result<()> {
    if preds.is_empty() {
        return Err(Error::Input("metrics need at least one sample".into()));
    }
    if preds.len() != trues.len() || extra.is_some_and(|n| n != preds.len()) {
        return Err(Error::Input("metric inputs have different lengths".into()));
    }
    Ok(())
}

pub fn gap_distribution(preds: &[f64], trues: &[f64], split: f64) -> Result<GapDistribution> {
    check(preds, trues, None)?;
    let (mut high, mut low) = (Vec::new(), Vec::new());
    for (p, t) in preds.iter().zip(trues) {
        if *t > split { high.push(t - p) } else { low.push(t - p) }
    }
    Ok(GapDistribution { split, high: box_stats(&high), low: box_stats(&low) })
}

pub fn compute_metrics(preds: &[f64], trues: &[f64], pre_vas: &[f64], threshold: f64) -> Result<MetricsReport> {
    check(preds, trues, Some(pre_vas.len()))?;
    let n = preds.len() as f64;
    let gaps: Vec<f64> = preds.iter().zip(trues).map(|(p, t)| t - p).collect();
    let mae = gaps.iter().map(|g| g.abs()).sum::<f64>() / n;
    let rmse = (gaps.iter().map(|g| g * g).sum::<f64>() / n).sqrt();

    let (mut tp, mut fp, mut fn_, mut correct) = (0usize, 0usize, 0usize, 0usize);
    for ((p, t), x) in preds.iter().zip(trues).zip(pre_vas) {
        let predicted = recovery_label(*p, *x, threshold);
        let actual = recovery_label(*t, *x, threshold);
        correct += usize::from(predicted == actual);
        match (predicted, actual) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let f1 = if tp == 0 { 0.0 } else { 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64 };

    Ok(MetricsReport {
        n: preds.len(),
        mae,
        rmse,
        acc: correct as f64 / n,
        f1,
        distribution: gap_distribution(preds, trues, HIGH_VA_SPLIT)?,
        gaps,
    })
}

impl GapDistribution {
    /// Whitespace-aligned table, one row per group; absent groups are listed
    /// as `absent`.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{:<6} {:>5} {:>10} {:>10} {:>10} {:>10} {:>10}\n",
            "group", "n", "min", "q1", "median", "q3", "max"
        );
        let low_name = format!("<={}", self.split);
        let high_name = format!(">{}", self.split);
        for (name, stats) in [(high_name, self.high), (low_name, self.low)] {
            match stats {
                Some(s) => writeln!(
                    out,
                    "{name:<6} {:>5} {:>10.6} {:>10.6} {:>10.6} {:>10.6} {:>10.6}",
                    s.count, s.min, s.q1, s.median, s.q3, s.max
                ),
                None => writeln!(out, "{name:<6} absent"),
            }
            .expect("writing to a String");
        }
        out
    }
}
