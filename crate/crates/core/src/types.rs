//! Domain types shared by every stage: class statistics, bin schemes,
//! prediction vectors and proposal records.
//!
//! Class ids follow one convention everywhere: `0` is background and
//! foreground classes are `1..=C`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-class training statistics.
///
/// `instance_counts[j - 1]` is the number of training instances of class `j`
/// and `image_counts[j - 1]` the number of training images containing it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawClassStats", into = "RawClassStats")]
pub struct ClassStats {
    instance_counts: Vec<u64>,
    image_counts: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
struct RawClassStats {
    instance_counts: Vec<u64>,
    image_counts: Vec<u64>,
}

impl TryFrom<RawClassStats> for ClassStats {
    type Error = Error;

    fn try_from(raw: RawClassStats) -> Result<Self> {
        ClassStats::new(raw.instance_counts, raw.image_counts)
    }
}

impl From<ClassStats> for RawClassStats {
    fn from(stats: ClassStats) -> Self {
        RawClassStats {
            instance_counts: stats.instance_counts,
            image_counts: stats.image_counts,
        }
    }
}

impl ClassStats {
    pub fn new(instance_counts: Vec<u64>, image_counts: Vec<u64>) -> Result<Self> {
        if instance_counts.is_empty() {
            return Err(Error::InvalidConfig(
                "class stats need at least one class".into(),
            ));
        }
        if instance_counts.len() != image_counts.len() {
            return Err(Error::InvalidConfig(format!(
                "instance_counts has {} classes but image_counts has {}",
                instance_counts.len(),
                image_counts.len()
            )));
        }
        for (j, (&n, &m)) in instance_counts.iter().zip(&image_counts).enumerate() {
            if n >= 1 && m == 0 {
                return Err(Error::InvalidConfig(format!(
                    "class {} has {n} instances but no images",
                    j + 1
                )));
            }
        }
        Ok(Self {
            instance_counts,
            image_counts,
        })
    }

    /// Number of foreground classes `C`.
    pub fn num_classes(&self) -> usize {
        self.instance_counts.len()
    }

    pub fn instance_counts(&self) -> &[u64] {
        &self.instance_counts
    }

    pub fn image_counts(&self) -> &[u64] {
        &self.image_counts
    }

    /// Training instances of foreground class `class_id` (1-based).
    pub fn instances(&self, class_id: usize) -> Result<u64> {
        self.check(class_id)?;
        Ok(self.instance_counts[class_id - 1])
    }

    pub fn images(&self, class_id: usize) -> Result<u64> {
        self.check(class_id)?;
        Ok(self.image_counts[class_id - 1])
    }

    pub fn count(&self, class_id: usize, basis: BinBasis) -> Result<u64> {
        match basis {
            BinBasis::Instances => self.instances(class_id),
            BinBasis::Images => self.images(class_id),
        }
    }

    fn check(&self, class_id: usize) -> Result<()> {
        if class_id == 0 || class_id > self.num_classes() {
            Err(Error::UnknownClass(class_id))
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinBasis {
    Instances,
    Images,
}

/// Partition of classes by a training count. Bin `b` covers
/// `[edges[b - 1], edges[b])`; bin 0 starts at zero and the last bin is
/// unbounded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinScheme {
    edges: Vec<u64>,
    basis: BinBasis,
}

impl BinScheme {
    pub fn new(edges: Vec<u64>, basis: BinBasis) -> Result<Self> {
        if edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig(format!(
                "bin edges must be strictly increasing: {edges:?}"
            )));
        }
        Ok(Self { edges, basis })
    }

    /// Instance bins `<10, 10-100, 100-1000, >=1000`.
    pub fn lvis_instances() -> Self {
        Self {
            edges: vec![10, 100, 1000],
            basis: BinBasis::Instances,
        }
    }

    /// Image sets rare / common / frequent: `<10, 10-100, >=100`.
    pub fn lvis_images() -> Self {
        Self {
            edges: vec![10, 100],
            basis: BinBasis::Images,
        }
    }

    /// Instance bins used for the COCO-LT variant: `<20, 20-400, 400-8000, >=8000`.
    pub fn coco_lt_instances() -> Self {
        Self {
            edges: vec![20, 400, 8000],
            basis: BinBasis::Instances,
        }
    }

    pub fn edges(&self) -> &[u64] {
        &self.edges
    }

    pub fn basis(&self) -> BinBasis {
        self.basis
    }

    pub fn num_bins(&self) -> usize {
        self.edges.len() + 1
    }

    /// Bin of a raw count.
    pub fn bin_of_count(&self, count: u64) -> usize {
        self.edges.partition_point(|&edge| edge <= count)
    }
}

/// Bin index (0-based) of `class_id` under `scheme`.
pub fn assign_bin(class_id: usize, stats: &ClassStats, scheme: &BinScheme) -> Result<usize> {
    Ok(scheme.bin_of_count(stats.count(class_id, scheme.basis())?))
}

/// Score vector over `C + 1` classes, background at index 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PredictionVector(pub Vec<f64>);

impl PredictionVector {
    pub fn scores(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// One-hot vector of length `len` on `label`.
    pub fn one_hot(len: usize, label: usize) -> Self {
        let mut scores = vec![0.0; len];
        scores[label] = 1.0;
        Self(scores)
    }
}

impl From<Vec<f64>> for PredictionVector {
    fn from(scores: Vec<f64>) -> Self {
        Self(scores)
    }
}

/// A candidate region: a frozen feature vector, its overlap with the
/// best-matching ground-truth instance, and the label assigned by matching.
#[derive(Debug, Clone, PartialEq)]
pub struct ProposalRecord {
    pub id: usize,
    pub image_id: usize,
    pub features: Vec<f64>,
    pub iou_with_gt: f64,
    pub gt_class: Option<usize>,
    pub assigned_label: usize,
}

/// Labels a proposal: its ground-truth class when the overlap reaches
/// `iou_threshold` (inclusive), background otherwise.
pub fn match_proposal(mut proposal: ProposalRecord, iou_threshold: f64) -> ProposalRecord {
    proposal.assigned_label = match proposal.gt_class {
        Some(class) if proposal.iou_with_gt >= iou_threshold => class,
        None if proposal.iou_with_gt >= iou_threshold => {
            log::warn!(
                "proposal {} has iou {} but no ground-truth class; labeling background",
                proposal.id,
                proposal.iou_with_gt
            );
            0
        }
        _ => 0,
    };
    proposal
}
