//! Per-class average precision over ranked proposal scores, aggregated into
//! instance-count bins and image-count sets.
//!
//! Without boxes there is no IoU matching at evaluation time: a proposal is
//! a true positive for class `c` exactly when its assigned label is `c`, so
//! AP is a pure ranking metric per class.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synth::SynthDataset;
use crate::types::{assign_bin, BinScheme, ClassStats, PredictionVector};

/// Scores of one proposal; the interchange format for predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredProposal {
    pub proposal_id: usize,
    pub scores: PredictionVector,
}

/// Attaches proposal ids `0..n` to predictions given in proposal order.
pub fn with_ids(predictions: Vec<PredictionVector>) -> Vec<ScoredProposal> {
    predictions
        .into_iter()
        .enumerate()
        .map(|(proposal_id, scores)| ScoredProposal {
            proposal_id,
            scores,
        })
        .collect()
}

/// All-point interpolated AP of one ranking. `None` when there is no
/// positive. Ties in score are broken by ascending id.
pub fn average_precision(scores: &[f64], positive: &[bool], ids: &[usize]) -> Option<f64> {
    let total_pos = positive.iter().filter(|&&p| p).count();
    if total_pos == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(ids[a].cmp(&ids[b])));

    let mut precisions = Vec::with_capacity(total_pos);
    let mut hits = 0usize;
    for (rank, &i) in order.iter().enumerate() {
        if positive[i] {
            hits += 1;
            precisions.push(hits as f64 / (rank + 1) as f64);
        }
    }
    // Precision envelope: best precision at this recall or beyond.
    let mut best = 0.0f64;
    for p in precisions.iter_mut().rev() {
        best = best.max(*p);
        *p = best;
    }
    Some(precisions.iter().sum::<f64>() / total_pos as f64)
}

/// AP of class `class` given aligned predictions and labels.
pub fn per_class_ap(
    predictions: &[PredictionVector],
    labels: &[usize],
    class: usize,
) -> Option<f64> {
    let scores: Vec<f64> = predictions.iter().map(|p| p.0[class]).collect();
    let positive: Vec<bool> = labels.iter().map(|&l| l == class).collect();
    let ids: Vec<usize> = (0..labels.len()).collect();
    average_precision(&scores, &positive, &ids)
}

/// Instance bins and image sets a report is aggregated over.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalBins {
    pub instances: BinScheme,
    pub images: BinScheme,
}

impl Default for EvalBins {
    fn default() -> Self {
        Self {
            instances: BinScheme::lvis_instances(),
            images: BinScheme::lvis_images(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// AP per foreground class; `None` when not evaluable.
    pub per_class_ap: Vec<Option<f64>>,
    /// AP_1 .. AP_k over instance bins.
    pub ap_bins: Vec<Option<f64>>,
    /// AP_r, AP_c, AP_f over image sets.
    pub ap_sets: Vec<Option<f64>>,
    pub overall_ap: f64,
    /// Evaluable classes per instance bin.
    pub bin_counts: Vec<usize>,
    pub set_counts: Vec<usize>,
    /// Classes with no training instance, excluded from every average.
    pub unseen: usize,
    pub bins: EvalBins,
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Evaluates predictions on `dataset`, binning classes by `train_stats`.
pub fn evaluate(
    predictions: &[ScoredProposal],
    dataset: &SynthDataset,
    train_stats: &ClassStats,
    bins: &EvalBins,
) -> Result<EvalReport> {
    let num_classes = dataset.num_classes();
    if train_stats.num_classes() != num_classes {
        return Err(Error::DimensionMismatch {
            expected: num_classes,
            actual: train_stats.num_classes(),
        });
    }
    let by_id: BTreeMap<usize, &PredictionVector> = predictions
        .iter()
        .map(|p| (p.proposal_id, &p.scores))
        .collect();
    let missing: Vec<usize> = dataset
        .proposals
        .iter()
        .map(|p| p.id)
        .filter(|id| !by_id.contains_key(id))
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingPredictions(missing));
    }
    let ordered: Vec<&PredictionVector> = dataset.proposals.iter().map(|p| by_id[&p.id]).collect();
    if let Some(bad) = ordered.iter().find(|p| p.len() != num_classes + 1) {
        return Err(Error::DimensionMismatch {
            expected: num_classes + 1,
            actual: bad.len(),
        });
    }
    let ids: Vec<usize> = dataset.proposals.iter().map(|p| p.id).collect();

    let per_class_ap: Vec<Option<f64>> = (1..=num_classes)
        .map(|class| {
            if train_stats.instance_counts()[class - 1] == 0 {
                return None;
            }
            let scores: Vec<f64> = ordered.iter().map(|p| p.0[class]).collect();
            let positive: Vec<bool> = dataset
                .proposals
                .iter()
                .map(|p| p.assigned_label == class)
                .collect();
            average_precision(&scores, &positive, &ids)
        })
        .collect();

    let unseen = train_stats
        .instance_counts()
        .iter()
        .filter(|&&n| n == 0)
        .count();
    let mut bin_members = vec![Vec::new(); bins.instances.num_bins()];
    let mut set_members = vec![Vec::new(); bins.images.num_bins()];
    let mut all = Vec::new();
    for (j, ap) in per_class_ap.iter().enumerate() {
        let Some(ap) = *ap else { continue };
        let class = j + 1;
        bin_members[assign_bin(class, train_stats, &bins.instances)?].push(ap);
        set_members[assign_bin(class, train_stats, &bins.images)?].push(ap);
        all.push(ap);
    }
    Ok(EvalReport {
        per_class_ap,
        ap_bins: bin_members.iter().map(|m| mean(m)).collect(),
        ap_sets: set_members.iter().map(|m| mean(m)).collect(),
        overall_ap: mean(&all).unwrap_or(0.0),
        bin_counts: bin_members.iter().map(Vec::len).collect(),
        set_counts: set_members.iter().map(Vec::len).collect(),
        unseen,
        bins: bins.clone(),
    })
}

fn fmt_ap(value: Option<f64>) -> String {
    value.map(|v| format!("{v:.6}")).unwrap_or_default()
}

const SET_NAMES: [&str; 3] = ["ap_r", "ap_c", "ap_f"];

impl EvalReport {
    /// Convenience accessor: AP of instance bin `b` (0-based), NaN if empty.
    pub fn bin(&self, b: usize) -> f64 {
        self.ap_bins.get(b).copied().flatten().unwrap_or(f64::NAN)
    }

    pub fn metric_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (1..=self.ap_bins.len()).map(|b| format!("ap{b}")).collect();
        names.extend((0..self.ap_sets.len()).map(|s| {
            SET_NAMES
                .get(s)
                .map(|n| n.to_string())
                .unwrap_or_else(|| format!("ap_set{}", s + 1))
        }));
        names.push("ap".into());
        names
    }

    pub fn metric_values(&self) -> Vec<Option<f64>> {
        let mut values = self.ap_bins.clone();
        values.extend(&self.ap_sets);
        values.push(Some(self.overall_ap));
        values
    }

    pub fn csv_header(&self) -> String {
        self.metric_names().join(",")
    }

    /// Fixed-column CSV fields, six decimals, empty for empty bins.
    pub fn csv_fields(&self) -> String {
        self.metric_values()
            .into_iter()
            .map(fmt_ap)
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// Renders labeled reports as a CSV table with a `label` column.
pub fn reports_csv(rows: &[(String, &EvalReport)]) -> String {
    let mut out = String::new();
    if let Some((_, first)) = rows.first() {
        let _ = writeln!(out, "label,{}", first.csv_header());
    }
    for (label, report) in rows {
        let _ = writeln!(out, "{label},{}", report.csv_fields());
    }
    out
}

/// Renders reports as an aligned text table on the 0-100 scale.
pub fn reports_table(rows: &[(String, &EvalReport)]) -> String {
    let mut out = String::new();
    let Some((_, first)) = rows.first() else {
        return out;
    };
    let width = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(5).max(5);
    let _ = write!(out, "{:width$}", "");
    for name in first.metric_names() {
        let _ = write!(out, " {name:>6}");
    }
    out.push('\n');
    for (label, report) in rows {
        let _ = write!(out, "{label:width$}");
        for value in report.metric_values() {
            match value {
                Some(v) => {
                    let _ = write!(out, " {:>6.1}", 100.0 * v);
                }
                None => {
                    let _ = write!(out, " {:>6}", "-");
                }
            }
        }
        out.push('\n');
    }
    out
}

/// Signed differences `b - a` with ordering verdicts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub names: Vec<String>,
    pub deltas: Vec<Option<f64>>,
    /// Lowest instance bin improved.
    pub tail_improved: bool,
    /// Highest instance bin within `head_tolerance` of the baseline or better.
    pub head_preserved: bool,
    pub head_tolerance: f64,
    pub overall_improved: bool,
}

pub fn compare(a: &EvalReport, b: &EvalReport, head_tolerance: f64) -> Result<Comparison> {
    if a.bins != b.bins {
        return Err(Error::MismatchedSchemes);
    }
    let deltas: Vec<Option<f64>> = a
        .metric_values()
        .into_iter()
        .zip(b.metric_values())
        .map(|(x, y)| Some(y? - x?))
        .collect();
    let tail = deltas.first().copied().flatten();
    let head = deltas
        .get(a.ap_bins.len().saturating_sub(1))
        .copied()
        .flatten();
    Ok(Comparison {
        names: a.metric_names(),
        tail_improved: tail.is_some_and(|d| d > 0.0),
        head_preserved: head.is_some_and(|d| d >= -head_tolerance),
        head_tolerance,
        overall_improved: b.overall_ap > a.overall_ap,
        deltas,
    })
}
