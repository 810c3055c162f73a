//! Synthetic long-tail datasets standing in for a frozen detector backbone.
//!
//! Each class owns a prototype vector. An instance spawns one or more
//! proposals whose features are the prototype scaled by the proposal's IoU
//! plus isotropic Gaussian noise; background proposals are drawn around the
//! origin. Class frequencies follow a configurable long-tail law.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::{Beta, Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::{self, substream};
use crate::types::{assign_bin, match_proposal, BinScheme, ClassStats, ProposalRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FrequencyLaw {
    /// `n_j = floor(max * j^-alpha)`.
    PowerLaw {
        alpha: f64,
    },
    /// `n_j = floor(max * exp(-beta * (j - 1)))`.
    Exponential {
        beta: f64,
    },
    Explicit {
        counts: Vec<u64>,
    },
}

impl FrequencyLaw {
    /// Power law whose head-to-tail count ratio is `ratio` over `num_classes`.
    pub fn power_law_for_ratio(ratio: f64, num_classes: usize) -> Self {
        FrequencyLaw::PowerLaw {
            alpha: ratio.ln() / (num_classes as f64).ln(),
        }
    }

    pub fn counts(&self, num_classes: usize, max_count: u64) -> Result<Vec<u64>> {
        let max = max_count as f64;
        // The nudge keeps values like 2000 * 60^-log60(1000) = 2 - 1ulp at 2.
        let floor = |v: f64| (v + 1e-9).floor() as u64;
        match self {
            FrequencyLaw::PowerLaw { alpha } => Ok((1..=num_classes)
                .map(|j| floor(max * (j as f64).powf(-alpha)))
                .collect()),
            FrequencyLaw::Exponential { beta } => Ok((1..=num_classes)
                .map(|j| floor(max * (-beta * (j as f64 - 1.0)).exp()))
                .collect()),
            FrequencyLaw::Explicit { counts } => {
                if counts.len() != num_classes {
                    return Err(Error::InvalidConfig(format!(
                        "explicit law has {} counts for {num_classes} classes",
                        counts.len()
                    )));
                }
                Ok(counts.clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub num_classes: usize,
    pub feature_dim: usize,
    pub frequency_law: FrequencyLaw,
    pub max_instances_per_head_class: u64,
    /// Inclusive range.
    pub instances_per_image: [usize; 2],
    /// Inclusive range.
    pub proposals_per_instance: [usize; 2],
    pub prototype_spread: f64,
    pub within_class_noise: f64,
    /// Beta(a, b) shape of instance-proposal IoUs.
    pub iou_beta: [f64; 2],
    /// Inclusive range.
    pub background_proposals_per_image: [usize; 2],
    /// Per-dimension standard deviation of background features.
    pub background_spread: f64,
    pub iou_threshold: f64,
    /// Class frequencies of the held-out evaluation split.
    pub eval_frequency_law: FrequencyLaw,
    pub eval_max_instances_per_class: u64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_classes: 60,
            feature_dim: 32,
            frequency_law: FrequencyLaw::power_law_for_ratio(1000.0, 60),
            max_instances_per_head_class: 4000,
            instances_per_image: [1, 4],
            proposals_per_instance: [1, 3],
            prototype_spread: 4.0,
            within_class_noise: 0.7,
            iou_beta: [5.0, 2.0],
            background_proposals_per_image: [2, 6],
            background_spread: 1.0,
            iou_threshold: 0.5,
            eval_frequency_law: FrequencyLaw::PowerLaw { alpha: 0.0 },
            eval_max_instances_per_class: 40,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.num_classes < 2 {
            return bad("num_classes must be at least 2");
        }
        if self.feature_dim < 2 {
            return bad("feature_dim must be at least 2");
        }
        if !(self.within_class_noise > 0.0) {
            return bad("within_class_noise must be positive");
        }
        if !(self.prototype_spread >= 0.0) || !(self.background_spread >= 0.0) {
            return bad("spreads must be non-negative");
        }
        for (name, [lo, hi]) in [
            ("instances_per_image", self.instances_per_image),
            ("proposals_per_instance", self.proposals_per_instance),
            (
                "background_proposals_per_image",
                self.background_proposals_per_image,
            ),
        ] {
            if lo > hi {
                return Err(Error::InvalidConfig(format!("{name} range is empty")));
            }
        }
        if self.instances_per_image[0] == 0 {
            return bad("instances_per_image must start at 1");
        }
        if self.proposals_per_instance[0] == 0 {
            return bad("every instance needs at least one proposal");
        }
        if !(self.iou_beta[0] > 0.0 && self.iou_beta[1] > 0.0) {
            return bad("iou_beta parameters must be positive");
        }
        if !(self.iou_threshold > 0.0 && self.iou_threshold < 1.0) {
            return bad("iou_threshold must lie in (0, 1)");
        }
        self.frequency_law
            .counts(self.num_classes, self.max_instances_per_head_class)?;
        self.eval_frequency_law
            .counts(self.num_classes, self.eval_max_instances_per_class)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: usize,
    /// Class of each instance in the image.
    pub instances: Vec<usize>,
}

/// Images, proposals and prototypes of one split.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub config: SynthConfig,
    pub stats: ClassStats,
    pub images: Vec<ImageRecord>,
    pub proposals: Vec<ProposalRecord>,
    /// Index into the owning image's `instances`, `None` for background draws.
    pub proposal_instances: Vec<Option<usize>>,
    pub prototypes: Vec<Vec<f64>>,
}

/// Class statistics recomputed from image annotations.
pub fn stats_from_images(num_classes: usize, images: &[ImageRecord]) -> Result<ClassStats> {
    let mut instances = vec![0u64; num_classes];
    let mut image_counts = vec![0u64; num_classes];
    for image in images {
        let mut seen = BTreeSet::new();
        for &class in &image.instances {
            if class == 0 || class > num_classes {
                return Err(Error::UnknownClass(class));
            }
            instances[class - 1] += 1;
            if seen.insert(class) {
                image_counts[class - 1] += 1;
            }
        }
    }
    ClassStats::new(instances, image_counts)
}

fn draw_prototypes(config: &SynthConfig) -> Vec<Vec<f64>> {
    let mut rng = substream(config.seed, "prototypes");
    // Norm ~ spread / sqrt(2), so pairwise distances concentrate near `spread`.
    let scale = config.prototype_spread / (2.0 * config.feature_dim as f64).sqrt();
    let normal = Normal::new(0.0, scale).expect("finite scale");
    (0..config.num_classes)
        .map(|_| {
            (0..config.feature_dim)
                .map(|_| normal.sample(&mut rng))
                .collect()
        })
        .collect()
}

fn uniform_in(rng: &mut rng::Rng, [lo, hi]: [usize; 2]) -> usize {
    rng.random_range(lo..=hi)
}

fn generate_split(config: &SynthConfig, counts: &[u64], stream: &str) -> Result<SynthDataset> {
    config.validate()?;
    let prototypes = draw_prototypes(config);
    let mut rng = substream(config.seed, stream);

    let mut pool: Vec<usize> = counts
        .iter()
        .enumerate()
        .flat_map(|(j, &n)| std::iter::repeat_n(j + 1, n as usize))
        .collect();
    pool.shuffle(&mut rng);

    let mut images = Vec::new();
    let mut rest = pool.as_slice();
    while !rest.is_empty() {
        let take = uniform_in(&mut rng, config.instances_per_image).min(rest.len());
        let (head, tail) = rest.split_at(take);
        images.push(ImageRecord {
            id: images.len(),
            instances: head.to_vec(),
        });
        rest = tail;
    }

    let noise = Normal::new(0.0, config.within_class_noise)
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let background = Normal::new(0.0, config.background_spread)
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let iou_dist = Beta::new(config.iou_beta[0], config.iou_beta[1])
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;

    let mut proposals = Vec::new();
    let mut proposal_instances = Vec::new();
    for image in &images {
        for (k, &class) in image.instances.iter().enumerate() {
            let proto = &prototypes[class - 1];
            for _ in 0..uniform_in(&mut rng, config.proposals_per_instance) {
                let iou: f64 = iou_dist.sample(&mut rng);
                let features = proto
                    .iter()
                    .map(|&p| iou * p + noise.sample(&mut rng))
                    .collect();
                let record = ProposalRecord {
                    id: proposals.len(),
                    image_id: image.id,
                    features,
                    iou_with_gt: iou,
                    gt_class: Some(class),
                    assigned_label: 0,
                };
                proposals.push(match_proposal(record, config.iou_threshold));
                proposal_instances.push(Some(k));
            }
        }
        for _ in 0..uniform_in(&mut rng, config.background_proposals_per_image) {
            let iou = rng.random_range(0.0..0.3);
            let features = (0..config.feature_dim)
                .map(|_| background.sample(&mut rng))
                .collect();
            proposals.push(ProposalRecord {
                id: proposals.len(),
                image_id: image.id,
                features,
                iou_with_gt: iou,
                gt_class: None,
                assigned_label: 0,
            });
            proposal_instances.push(None);
        }
    }

    let stats = stats_from_images(config.num_classes, &images)?;
    let dataset = SynthDataset {
        config: config.clone(),
        stats,
        images,
        proposals,
        proposal_instances,
        prototypes,
    };
    let unseen = dataset.unseen_classes();
    if !unseen.is_empty() {
        log::info!("{stream} split has classes without instances: {unseen:?}");
    }
    Ok(dataset)
}

/// Training split.
pub fn generate(config: &SynthConfig) -> Result<SynthDataset> {
    let counts = config
        .frequency_law
        .counts(config.num_classes, config.max_instances_per_head_class)?;
    generate_split(config, &counts, "train")
}

/// Held-out split sharing the training prototypes.
pub fn generate_eval(config: &SynthConfig) -> Result<SynthDataset> {
    let counts = config
        .eval_frequency_law
        .counts(config.num_classes, config.eval_max_instances_per_class)?;
    generate_split(config, &counts, "eval")
}

impl SynthDataset {
    pub fn num_classes(&self) -> usize {
        self.stats.num_classes()
    }

    pub fn feature_dim(&self) -> usize {
        self.config.feature_dim
    }

    pub fn unseen_classes(&self) -> Vec<usize> {
        (1..=self.num_classes())
            .filter(|&c| self.stats.instance_counts()[c - 1] == 0)
            .collect()
    }

    pub fn image_index(&self, image_id: usize) -> Option<usize> {
        self.images.binary_search_by_key(&image_id, |im| im.id).ok()
    }

    /// Proposal indices grouped by image position.
    pub fn proposals_by_image(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.images.len()];
        for (i, p) in self.proposals.iter().enumerate() {
            if let Some(idx) = self.image_index(p.image_id) {
                groups[idx].push(i);
            }
        }
        groups
    }

    /// Checks the internal consistency invariants.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.images.windows(2).any(|w| w[0].id >= w[1].id) {
            return fail("image ids must be strictly increasing".into());
        }
        if stats_from_images(self.num_classes(), &self.images)? != self.stats {
            return fail("stored stats differ from image annotations".into());
        }
        if self.proposal_instances.len() != self.proposals.len() {
            return fail("proposal instance table length mismatch".into());
        }
        for (i, (p, inst)) in self
            .proposals
            .iter()
            .zip(&self.proposal_instances)
            .enumerate()
        {
            if p.id != i {
                return fail(format!("proposal at position {i} has id {}", p.id));
            }
            let Some(idx) = self.image_index(p.image_id) else {
                return fail(format!(
                    "proposal {i} references missing image {}",
                    p.image_id
                ));
            };
            let image = &self.images[idx];
            if let Some(class) = p.gt_class {
                match inst {
                    Some(k) if image.instances.get(*k) == Some(&class) => {}
                    _ => return fail(format!("proposal {i} gt class {class} not in its image")),
                }
            }
            if p.assigned_label > 0 && p.gt_class != Some(p.assigned_label) {
                return fail(format!("proposal {i} label disagrees with gt class"));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&DatasetFile::from(self))?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let file: DatasetFile = serde_json::from_str(json)?;
        file.try_into()
    }

    /// SHA-256 of the serialized dataset.
    pub fn content_hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_json()?.as_bytes())))
    }
}

#[derive(Serialize, Deserialize)]
struct ProposalFileRecord {
    image_id: usize,
    features: Vec<f64>,
    iou: f64,
    gt_class: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    instance: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct DatasetFile {
    config: SynthConfig,
    stats: ClassStats,
    prototypes: Vec<Vec<f64>>,
    images: Vec<ImageRecord>,
    proposals: Vec<ProposalFileRecord>,
}

impl From<&SynthDataset> for DatasetFile {
    fn from(ds: &SynthDataset) -> Self {
        DatasetFile {
            config: ds.config.clone(),
            stats: ds.stats.clone(),
            prototypes: ds.prototypes.clone(),
            images: ds.images.clone(),
            proposals: ds
                .proposals
                .iter()
                .zip(&ds.proposal_instances)
                .map(|(p, &instance)| ProposalFileRecord {
                    image_id: p.image_id,
                    features: p.features.clone(),
                    iou: p.iou_with_gt,
                    gt_class: p.gt_class,
                    instance,
                })
                .collect(),
        }
    }
}

impl TryFrom<DatasetFile> for SynthDataset {
    type Error = Error;

    fn try_from(file: DatasetFile) -> Result<Self> {
        let threshold = file.config.iou_threshold;
        let mut proposals = Vec::with_capacity(file.proposals.len());
        let mut proposal_instances = Vec::with_capacity(file.proposals.len());
        for (id, p) in file.proposals.into_iter().enumerate() {
            if p.features.len() != file.config.feature_dim {
                return Err(Error::DimensionMismatch {
                    expected: file.config.feature_dim,
                    actual: p.features.len(),
                });
            }
            if !(0.0..=1.0).contains(&p.iou) {
                return Err(Error::InvalidConfig(format!(
                    "proposal {id} iou {} outside [0, 1]",
                    p.iou
                )));
            }
            let record = ProposalRecord {
                id,
                image_id: p.image_id,
                features: p.features,
                iou_with_gt: p.iou,
                gt_class: p.gt_class,
                assigned_label: 0,
            };
            proposals.push(match_proposal(record, threshold));
            proposal_instances.push(p.instance);
        }
        let dataset = SynthDataset {
            config: file.config,
            stats: file.stats,
            images: file.images,
            proposals,
            proposal_instances,
            prototypes: file.prototypes,
        };
        dataset.validate()?;
        Ok(dataset)
    }
}

/// Splits `num_classes` index-contiguous classes into `num_subsets` groups.
/// When the division is uneven the leading groups take one extra class.
pub fn class_subsets(
    num_classes: usize,
    num_subsets: usize,
) -> Vec<std::ops::RangeInclusive<usize>> {
    let base = num_classes / num_subsets;
    let extra = num_classes % num_subsets;
    let mut start = 1;
    (0..num_subsets)
        .map(|i| {
            let len = base + usize::from(i < extra);
            let range = start..=start + len - 1;
            start += len;
            range
        })
        .collect()
}

/// Open interval of kept instances for subset `i` (1-based, `i >= 2`),
/// `(8 * 10^(4-i), 8 * 10^(5-i))` multiplied by `scale`.
pub fn coco_lt_interval(subset: usize, scale: f64) -> (f64, f64) {
    let lo = 8.0 * 10f64.powi(4 - subset as i32);
    let hi = 8.0 * 10f64.powi(5 - subset as i32);
    (lo * scale, hi * scale)
}

/// Scale that maps the COCO magnitude (~8e4 instances for the largest class)
/// onto this dataset.
pub fn coco_lt_scale(stats: &ClassStats) -> f64 {
    stats.instance_counts().iter().copied().max().unwrap_or(0) as f64 / 8.0e4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetDraw {
    pub subset: usize,
    pub classes: (usize, usize),
    pub interval: Option<(f64, f64)>,
    pub target: Option<u64>,
    pub available: u64,
    pub kept: u64,
}

/// COCO-LT style exponential subsampling: subset 1 is left intact; every
/// later subset keeps `min(n_i, available)` of its instances, chosen
/// uniformly without replacement, with `n_i` drawn uniformly from the
/// integers strictly inside the scaled interval.
pub fn subsample_coco_lt(
    dataset: &SynthDataset,
    num_subsets: usize,
    seed: u64,
) -> Result<(SynthDataset, Vec<SubsetDraw>)> {
    if num_subsets == 0 || num_subsets > dataset.num_classes() {
        return Err(Error::InvalidConfig(format!(
            "cannot split {} classes into {num_subsets} subsets",
            dataset.num_classes()
        )));
    }
    let mut rng = substream(seed, "coco_lt");
    let scale = coco_lt_scale(&dataset.stats);

    // Every instance as (image position, index in image).
    let mut by_class: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
    for (pos, image) in dataset.images.iter().enumerate() {
        for (k, &class) in image.instances.iter().enumerate() {
            by_class.entry(class).or_default().push((pos, k));
        }
    }

    let mut keep: Vec<Vec<bool>> = dataset
        .images
        .iter()
        .map(|im| vec![true; im.instances.len()])
        .collect();
    let mut draws = Vec::new();
    for (i, range) in class_subsets(dataset.num_classes(), num_subsets)
        .into_iter()
        .enumerate()
    {
        let subset = i + 1;
        let pool: Vec<(usize, usize)> = range
            .clone()
            .flat_map(|c| by_class.get(&c).cloned().unwrap_or_default())
            .collect();
        let available = pool.len() as u64;
        let classes = (*range.start(), *range.end());
        if subset == 1 {
            draws.push(SubsetDraw {
                subset,
                classes,
                interval: None,
                target: None,
                available,
                kept: available,
            });
            continue;
        }
        let (lo, hi) = coco_lt_interval(subset, scale);
        let first = lo.floor() as u64 + 1;
        let last = (hi.ceil() as u64).saturating_sub(1);
        let target = if first <= last {
            rng.random_range(first..=last)
        } else {
            log::warn!("subset {subset}: no integer inside ({lo}, {hi}); keeping {first}");
            first
        };
        let kept = target.min(available);
        let chosen: BTreeSet<usize> = index::sample(&mut rng, pool.len(), kept as usize)
            .into_iter()
            .collect();
        for (n, &(pos, k)) in pool.iter().enumerate() {
            if !chosen.contains(&n) {
                keep[pos][k] = false;
            }
        }
        draws.push(SubsetDraw {
            subset,
            classes,
            interval: Some((lo, hi)),
            target: Some(target),
            available,
            kept,
        });
    }

    // Rebuild images, remapping instance indices, then proposals.
    let mut images = Vec::new();
    let mut remap: Vec<Vec<Option<usize>>> = Vec::with_capacity(dataset.images.len());
    for (image, mask) in dataset.images.iter().zip(&keep) {
        let mut next = 0;
        let mut map = Vec::with_capacity(mask.len());
        let mut instances = Vec::new();
        for (&class, &kept) in image.instances.iter().zip(mask) {
            if kept {
                map.push(Some(next));
                instances.push(class);
                next += 1;
            } else {
                map.push(None);
            }
        }
        remap.push(map);
        if !instances.is_empty() {
            images.push(ImageRecord {
                id: image.id,
                instances,
            });
        }
    }
    let mut proposals = Vec::new();
    let mut proposal_instances = Vec::new();
    for (p, inst) in dataset.proposals.iter().zip(&dataset.proposal_instances) {
        let Some(pos) = dataset.image_index(p.image_id) else {
            continue;
        };
        if images
            .binary_search_by_key(&p.image_id, |im| im.id)
            .is_err()
        {
            continue;
        }
        let new_inst = match inst {
            Some(k) => match remap[pos][*k] {
                Some(nk) => Some(nk),
                None => continue,
            },
            None => None,
        };
        let mut record = p.clone();
        record.id = proposals.len();
        proposals.push(record);
        proposal_instances.push(new_inst);
    }
    let stats = stats_from_images(dataset.num_classes(), &images)?;
    let out = SynthDataset {
        config: dataset.config.clone(),
        stats,
        images,
        proposals,
        proposal_instances,
        prototypes: dataset.prototypes.clone(),
    };
    Ok((out, draws))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinPopulations {
    pub instances: Vec<usize>,
    pub images: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub num_classes: usize,
    pub num_images: usize,
    pub num_proposals: usize,
    pub num_foreground_proposals: usize,
    pub instance_counts: Vec<u64>,
    pub image_counts: Vec<u64>,
    /// Non-zero instance counts in non-increasing order.
    pub sorted_counts: Vec<u64>,
    pub unseen_classes: Vec<usize>,
    pub bin_populations: BinPopulations,
}

pub fn summarize(dataset: &SynthDataset) -> Result<DatasetSummary> {
    summarize_with(
        dataset,
        &BinScheme::lvis_instances(),
        &BinScheme::lvis_images(),
    )
}

pub fn summarize_with(
    dataset: &SynthDataset,
    instance_bins: &BinScheme,
    image_sets: &BinScheme,
) -> Result<DatasetSummary> {
    let stats = &dataset.stats;
    let mut sorted_counts: Vec<u64> = stats
        .instance_counts()
        .iter()
        .copied()
        .filter(|&n| n > 0)
        .collect();
    sorted_counts.sort_unstable_by(|a, b| b.cmp(a));
    let mut populations = BinPopulations {
        instances: vec![0; instance_bins.num_bins()],
        images: vec![0; image_sets.num_bins()],
    };
    if !dataset.images.is_empty() {
        for class in 1..=stats.num_classes() {
            populations.instances[assign_bin(class, stats, instance_bins)?] += 1;
            populations.images[assign_bin(class, stats, image_sets)?] += 1;
        }
    }
    Ok(DatasetSummary {
        num_classes: stats.num_classes(),
        num_images: dataset.images.len(),
        num_proposals: dataset.proposals.len(),
        num_foreground_proposals: dataset
            .proposals
            .iter()
            .filter(|p| p.assigned_label > 0)
            .count(),
        instance_counts: stats.instance_counts().to_vec(),
        image_counts: stats.image_counts().to_vec(),
        sorted_counts,
        unseen_classes: dataset.unseen_classes(),
        bin_populations: populations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(counts: Vec<u64>) -> SynthConfig {
        SynthConfig {
            num_classes: counts.len(),
            feature_dim: 4,
            frequency_law: FrequencyLaw::Explicit { counts },
            seed: 11,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn explicit_law_is_identity() {
        let ds = generate(&small(vec![1000, 100, 10, 1])).unwrap();
        assert_eq!(ds.stats.instance_counts(), &[1000, 100, 10, 1]);
        ds.validate().unwrap();
    }

    #[test]
    fn same_seed_same_bytes() {
        let cfg = small(vec![50, 20, 5]);
        let a = generate(&cfg).unwrap().to_json().unwrap();
        let b = generate(&cfg).unwrap().to_json().unwrap();
        assert_eq!(a, b);
        let other = SynthConfig { seed: 12, ..cfg };
        assert_ne!(a, generate(&other).unwrap().to_json().unwrap());
    }

    #[test]
    fn power_law_counts_follow_closed_form() {
        let cfg = SynthConfig {
            frequency_law: FrequencyLaw::power_law_for_ratio(1000.0, 60),
            max_instances_per_head_class: 2000,
            feature_dim: 2,
            ..SynthConfig::default()
        };
        let ds = generate(&cfg).unwrap();
        let alpha = 1000f64.ln() / 60f64.ln();
        for j in 1..=60usize {
            let law = (2000.0 * (j as f64).powf(-alpha)).floor();
            let got = ds.stats.instance_counts()[j - 1] as f64;
            assert!((got - law).abs() <= 1.0, "class {j}: {got} vs {law}");
        }
        let counts = ds.stats.instance_counts();
        assert_eq!((counts[0], counts[59]), (2000, 2));
    }

    #[test]
    fn zero_instance_classes_are_flagged() {
        let ds = generate(&small(vec![30, 0, 4])).unwrap();
        assert_eq!(ds.unseen_classes(), vec![2]);
        assert_eq!(summarize(&ds).unwrap().unseen_classes, vec![2]);
    }

    #[test]
    fn json_roundtrip_is_exact() {
        let ds = generate(&small(vec![20, 7, 3])).unwrap();
        let json = ds.to_json().unwrap();
        let back = SynthDataset::from_json(&json).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.to_json().unwrap(), json);
    }

    #[test]
    fn summary_sorts_counts() {
        let ds = generate(&small(vec![1, 1000, 10, 100])).unwrap();
        let summary = summarize(&ds).unwrap();
        assert_eq!(summary.sorted_counts, vec![1000, 100, 10, 1]);
        assert_eq!(summary.bin_populations.instances, vec![1, 1, 1, 1]);
    }

    #[test]
    fn summary_of_empty_dataset() {
        let ds = generate(&small(vec![0, 0])).unwrap();
        let summary = summarize(&ds).unwrap();
        assert!(summary.sorted_counts.is_empty());
        assert_eq!(summary.num_images, 0);
        assert_eq!(summary.bin_populations.instances.iter().sum::<usize>(), 0);
    }

    #[test]
    fn subsets_split_contiguously() {
        let subsets = class_subsets(80, 4);
        assert_eq!(subsets, vec![1..=20, 21..=40, 41..=60, 61..=80]);
        let uneven = class_subsets(10, 4);
        assert_eq!(uneven, vec![1..=3, 4..=6, 7..=8, 9..=10]);
    }

    #[test]
    fn coco_lt_interval_at_unit_scale() {
        assert_eq!(coco_lt_interval(2, 1.0), (800.0, 8000.0));
        assert_eq!(coco_lt_interval(3, 1.0), (80.0, 800.0));
        assert_eq!(coco_lt_interval(4, 1.0), (8.0, 80.0));
    }

    #[test]
    fn scarce_subset_keeps_everything_available() {
        // Subset 2 wants (800, 8000) * 1000 / 8e4 = (10, 100) but only 6 exist.
        let mut counts = vec![1000u64, 0, 0, 0, 0, 0, 0, 0];
        counts[2] = 3;
        counts[3] = 3;
        counts[4] = 200;
        let cfg = SynthConfig {
            instances_per_image: [1, 1],
            ..small(counts)
        };
        let ds = generate(&cfg).unwrap();
        let (out, draws) = subsample_coco_lt(&ds, 4, 5).unwrap();
        assert_eq!(draws[1].available, 6);
        assert_eq!(draws[1].kept, 6);
        assert_eq!(
            out.stats.instance_counts()[..4],
            ds.stats.instance_counts()[..4]
        );
        out.validate().unwrap();
    }
}
