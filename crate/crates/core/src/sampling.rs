//! Batch construction: plain image-centric epochs, image-level repeat-factor
//! oversampling, and bi-level class-balanced sampling for calibration.

use std::collections::BTreeSet;

use rand::seq::{index, IndexedRandom, SliceRandom};
use rand::Rng as _;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::synth::SynthDataset;
use crate::types::ClassStats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    /// Classes drawn per calibration batch.
    pub classes_per_batch: usize,
    pub images_per_class: usize,
    /// `[foreground parts, background parts]`.
    pub fg_bg_ratio: [u32; 2],
    pub repeat_threshold: f64,
    /// Exponent of `t / f(c)` in the category repeat factor.
    pub repeat_exponent: f64,
    pub random_batch_images: usize,
    /// Draw a batch's classes with replacement.
    pub with_replacement: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            classes_per_batch: 16,
            images_per_class: 1,
            fg_bg_ratio: [1, 1],
            repeat_threshold: 0.001,
            repeat_exponent: 0.5,
            random_batch_images: 8,
            with_replacement: false,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes_per_batch == 0
            || self.images_per_class == 0
            || self.random_batch_images == 0
            || self.fg_bg_ratio.contains(&0)
        {
            return Err(Error::InvalidConfig(
                "sampler sizes and ratio parts must be positive".into(),
            ));
        }
        if !(self.repeat_threshold > 0.0 && self.repeat_threshold < 1.0) {
            return Err(Error::InvalidConfig(
                "repeat_threshold must lie in (0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// Serializable position of a ChaCha stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> Rng {
        let mut rng = Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

/// Shuffled epochs over all images, cut into fixed-size batches.
#[derive(Debug, Clone)]
pub struct RandomImageBatches {
    num_images: usize,
    batch_images: usize,
    rng: Rng,
    epoch_start: RngState,
    pending: Vec<Vec<usize>>,
    consumed: usize,
    epoch: usize,
}

/// Resumable position of a [`RandomImageBatches`] stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochSamplerState {
    pub num_images: usize,
    pub batch_images: usize,
    pub epoch: usize,
    pub epoch_start: RngState,
    pub consumed: usize,
}

impl RandomImageBatches {
    pub fn new(num_images: usize, batch_images: usize, rng: Rng) -> Result<Self> {
        if num_images == 0 {
            return Err(Error::EmptyDataset);
        }
        if batch_images == 0 {
            return Err(Error::InvalidConfig("batch size must be positive".into()));
        }
        let epoch_start = RngState::capture(&rng);
        Ok(Self {
            num_images,
            batch_images,
            rng,
            epoch_start,
            pending: Vec::new(),
            consumed: 0,
            epoch: 0,
        })
    }

    fn shuffle_epoch(&mut self) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..self.num_images).collect();
        order.shuffle(&mut self.rng);
        order
            .chunks(self.batch_images)
            .map(<[usize]>::to_vec)
            .collect()
    }

    /// Batches of the next full epoch.
    pub fn next_epoch(&mut self) -> Vec<Vec<usize>> {
        self.epoch_start = RngState::capture(&self.rng);
        self.pending.clear();
        self.consumed = 0;
        self.epoch += 1;
        self.shuffle_epoch()
    }

    pub fn state(&self) -> EpochSamplerState {
        EpochSamplerState {
            num_images: self.num_images,
            batch_images: self.batch_images,
            epoch: self.epoch,
            epoch_start: self.epoch_start,
            consumed: self.consumed,
        }
    }

    pub fn from_state(state: &EpochSamplerState) -> Result<Self> {
        let mut sampler = Self::new(
            state.num_images,
            state.batch_images,
            state.epoch_start.restore(),
        )?;
        sampler.epoch = state.epoch;
        if state.consumed > 0 {
            let mut batches = sampler.shuffle_epoch();
            batches.reverse();
            batches.truncate(batches.len().saturating_sub(state.consumed));
            sampler.pending = batches;
            sampler.consumed = state.consumed;
        }
        Ok(sampler)
    }
}

impl Iterator for RandomImageBatches {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.pending.is_empty() {
            let mut batches = self.next_epoch();
            batches.reverse();
            self.pending = batches;
        }
        self.consumed += 1;
        self.pending.pop()
    }
}

/// Category repeat factor `max(1, (t / f)^exponent)`.
pub fn repeat_factor(image_frequency: f64, threshold: f64, exponent: f64) -> f64 {
    (threshold / image_frequency).powf(exponent).max(1.0)
}

/// Per-class repeat factors from image frequencies `f(c) = images(c) / M`.
/// Classes present in no image get `None`.
pub fn category_repeat_factors(
    stats: &ClassStats,
    num_images: usize,
    threshold: f64,
    exponent: f64,
) -> Vec<Option<f64>> {
    stats
        .image_counts()
        .iter()
        .map(|&m| {
            (m > 0 && num_images > 0)
                .then(|| repeat_factor(m as f64 / num_images as f64, threshold, exponent))
        })
        .collect()
}

/// `r(I) = max_{c in I} r(c)`, 1 for an image with no known class.
pub fn image_repeat_factor(instances: &[usize], factors: &[Option<f64>]) -> f64 {
    instances
        .iter()
        .filter_map(|&c| factors.get(c.wrapping_sub(1)).copied().flatten())
        .fold(1.0, f64::max)
}

/// Image-level repeat-factor sampling. Each epoch holds `floor(r(I))` copies
/// of image `I` plus one more with probability `frac(r(I))`.
#[derive(Debug, Clone)]
pub struct RepeatFactorSampler {
    factors: Vec<f64>,
    batch_images: usize,
    rng: Rng,
    pending: Vec<Vec<usize>>,
}

impl RepeatFactorSampler {
    pub fn new(dataset: &SynthDataset, config: &SamplerConfig, rng: Rng) -> Result<Self> {
        if dataset.images.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let categories = category_repeat_factors(
            &dataset.stats,
            dataset.images.len(),
            config.repeat_threshold,
            config.repeat_exponent,
        );
        let factors = dataset
            .images
            .iter()
            .map(|im| image_repeat_factor(&im.instances, &categories))
            .collect();
        Ok(Self {
            factors,
            batch_images: config.random_batch_images,
            rng,
            pending: Vec::new(),
        })
    }

    pub fn image_factors(&self) -> &[f64] {
        &self.factors
    }

    /// Expected number of extra image draws per epoch.
    pub fn expected_inflation(&self) -> f64 {
        self.factors.iter().map(|r| r - 1.0).sum()
    }

    /// One epoch of image positions, shuffled.
    pub fn epoch(&mut self) -> Vec<usize> {
        let mut order = Vec::new();
        for (i, &r) in self.factors.iter().enumerate() {
            let whole = r.floor();
            let mut copies = whole as usize;
            if self.rng.random::<f64>() < r - whole {
                copies += 1;
            }
            order.extend(std::iter::repeat_n(i, copies));
        }
        order.shuffle(&mut self.rng);
        order
    }
}

impl Iterator for RepeatFactorSampler {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        while self.pending.is_empty() {
            let mut batches: Vec<Vec<usize>> = self
                .epoch()
                .chunks(self.batch_images)
                .map(<[usize]>::to_vec)
                .collect();
            batches.reverse();
            self.pending = batches;
        }
        self.pending.pop()
    }
}

/// One calibration batch: proposals of the sampled classes grouped by class,
/// plus balanced background.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalBatch {
    pub sampled_classes: Vec<usize>,
    /// `(class, proposal indices)` for every sampled class with proposals.
    pub groups: Vec<(usize, Vec<usize>)>,
    pub background: Vec<usize>,
    /// Image positions the batch was drawn from.
    pub images: Vec<usize>,
}

impl CalBatch {
    pub fn foreground_count(&self) -> usize {
        self.groups.iter().map(|(_, g)| g.len()).sum()
    }

    pub fn len(&self) -> usize {
        self.foreground_count() + self.background.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Proposal indices, foreground groups first, then background.
    pub fn proposal_indices(&self) -> Vec<usize> {
        self.groups
            .iter()
            .flat_map(|(_, g)| g.iter().copied())
            .chain(self.background.iter().copied())
            .collect()
    }
}

/// Background count matching `fg` foreground proposals under `[fg, bg]` parts,
/// rounded half up.
pub fn background_target(fg: usize, ratio: [u32; 2]) -> usize {
    let (f, b) = (ratio[0] as usize, ratio[1] as usize);
    (2 * fg * b + f) / (2 * f)
}

/// Bi-level class-balanced sampler: classes uniformly, then images holding
/// each class, then only proposals of the sampled classes and background.
#[derive(Debug, Clone)]
pub struct BilevelSampler<'a> {
    dataset: &'a SynthDataset,
    config: SamplerConfig,
    rng: Rng,
    class_images: Vec<Vec<usize>>,
    sampleable: Vec<usize>,
    image_proposals: Vec<Vec<usize>>,
    background_pool: Vec<usize>,
}

const MAX_IMAGE_RETRIES: usize = 10;

impl<'a> BilevelSampler<'a> {
    pub fn new(dataset: &'a SynthDataset, config: &SamplerConfig, rng: Rng) -> Result<Self> {
        config.validate()?;
        if dataset.images.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let image_proposals = dataset.proposals_by_image();
        let mut class_images = vec![Vec::new(); dataset.num_classes() + 1];
        for (pos, image) in dataset.images.iter().enumerate() {
            let classes: BTreeSet<usize> = image.instances.iter().copied().collect();
            for class in classes {
                class_images[class].push(pos);
            }
        }
        let mut has_foreground = vec![false; dataset.num_classes() + 1];
        for p in &dataset.proposals {
            has_foreground[p.assigned_label] = true;
        }
        let mut sampleable = Vec::new();
        let mut excluded = Vec::new();
        for class in 1..=dataset.num_classes() {
            if !class_images[class].is_empty() && has_foreground[class] {
                sampleable.push(class);
            } else {
                excluded.push(class);
            }
        }
        if !excluded.is_empty() {
            log::warn!("classes without foreground proposals are never sampled: {excluded:?}");
        }
        if sampleable.is_empty() {
            return Err(Error::InvalidConfig("no sampleable classes".into()));
        }
        let background_pool = dataset
            .proposals
            .iter()
            .filter(|p| p.assigned_label == 0)
            .map(|p| p.id)
            .collect();
        Ok(Self {
            dataset,
            config: config.clone(),
            rng,
            class_images,
            sampleable,
            image_proposals,
            background_pool,
        })
    }

    pub fn sampleable_classes(&self) -> &[usize] {
        &self.sampleable
    }

    pub fn rng_state(&self) -> RngState {
        RngState::capture(&self.rng)
    }

    fn draw_classes(&mut self) -> Vec<usize> {
        let n = self.config.classes_per_batch;
        if self.config.with_replacement {
            (0..n)
                .map(|_| *self.sampleable.choose(&mut self.rng).expect("non-empty"))
                .collect()
        } else {
            let n = n.min(self.sampleable.len());
            index::sample(&mut self.rng, self.sampleable.len(), n)
                .into_iter()
                .map(|i| self.sampleable[i])
                .collect()
        }
    }

    fn draw_images(&mut self, class: usize) -> Option<Vec<usize>> {
        let candidates = &self.class_images[class];
        let take = self.config.images_per_class.min(candidates.len());
        for _ in 0..=MAX_IMAGE_RETRIES {
            let chosen: Vec<usize> = index::sample(&mut self.rng, candidates.len(), take)
                .into_iter()
                .map(|i| candidates[i])
                .collect();
            let hit = chosen.iter().any(|&pos| {
                self.image_proposals[pos]
                    .iter()
                    .any(|&p| self.dataset.proposals[p].assigned_label == class)
            });
            if hit {
                return Some(chosen);
            }
        }
        None
    }

    pub fn sample_batch(&mut self) -> CalBatch {
        let drawn = self.draw_classes();
        let mut sampled_classes = Vec::with_capacity(drawn.len());
        let mut images: Vec<usize> = Vec::new();
        for class in drawn {
            match self.draw_images(class) {
                Some(chosen) => {
                    sampled_classes.push(class);
                    for pos in chosen {
                        if !images.contains(&pos) {
                            images.push(pos);
                        }
                    }
                }
                None => log::warn!("class {class}: no foreground proposal after retries, skipped"),
            }
        }

        let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
        let wanted: BTreeSet<usize> = sampled_classes.iter().copied().collect();
        let mut local_background = Vec::new();
        for &pos in &images {
            for &p in &self.image_proposals[pos] {
                let label = self.dataset.proposals[p].assigned_label;
                if label == 0 {
                    local_background.push(p);
                } else if wanted.contains(&label) {
                    match groups.iter_mut().find(|(c, _)| *c == label) {
                        Some((_, g)) => g.push(p),
                        None => groups.push((label, vec![p])),
                    }
                }
            }
        }
        groups.sort_by_key(|(c, _)| *c);

        let fg = groups.iter().map(|(_, g)| g.len()).sum();
        let target = background_target(fg, self.config.fg_bg_ratio);
        let mut background: Vec<usize> = if local_background.len() >= target {
            index::sample(&mut self.rng, local_background.len(), target)
                .into_iter()
                .map(|i| local_background[i])
                .collect()
        } else {
            local_background
        };
        if background.len() < target {
            // Not enough background in the sampled images: top up from the
            // rest of the dataset.
            let mut taken: BTreeSet<usize> = background.iter().copied().collect();
            let budget = self.background_pool.len();
            while background.len() < target && taken.len() < budget {
                let p = *self
                    .background_pool
                    .choose(&mut self.rng)
                    .expect("non-empty pool");
                if taken.insert(p) {
                    background.push(p);
                }
            }
        }
        CalBatch {
            sampled_classes,
            groups,
            background,
            images,
        }
    }
}
