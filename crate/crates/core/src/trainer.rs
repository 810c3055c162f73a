//! Head training: standard image-centric training, calibration of a trained
//! head under bi-level sampling, and the ground-truth-label oracle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{with_ids, ScoredProposal};
use crate::head::{sgd_step, Batch, HeadParams, HeadSpec, Loss, LossConfig, LossKind, OptState};
use crate::rng::substream;
use crate::sampling::{
    BilevelSampler, CalBatch, RandomImageBatches, RepeatFactorSampler, SamplerConfig,
};
use crate::synth::SynthDataset;
use crate::types::PredictionVector;

/// Step-decayed learning rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub total_steps: usize,
    pub lr_init: f64,
    pub decay_steps: Vec<usize>,
    pub decay_factor: f64,
}

impl Schedule {
    /// 4000 steps at 0.01, decayed by 10x at 2/3 and 11/12 of training.
    pub fn standard() -> Self {
        Self::scaled_standard(4000)
    }

    pub fn scaled_standard(total_steps: usize) -> Self {
        Self {
            total_steps,
            lr_init: 0.01,
            decay_steps: collapse_decays(
                vec![total_steps * 2 / 3, total_steps * 11 / 12],
                total_steps,
            ),
            decay_factor: 0.1,
        }
    }

    /// 12000 steps at 0.01, decayed by 10x at steps 8000 and 11000.
    pub fn calibration() -> Self {
        Self {
            total_steps: 12000,
            lr_init: 0.01,
            decay_steps: vec![8000, 11000],
            decay_factor: 0.1,
        }
    }

    /// Same shape with every step count multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let scale = |s: usize| ((s as f64) * factor).round() as usize;
        Self {
            total_steps: scale(self.total_steps),
            lr_init: self.lr_init,
            decay_steps: collapse_decays(
                self.decay_steps.iter().map(|&s| scale(s)).collect(),
                scale(self.total_steps),
            ),
            decay_factor: self.decay_factor,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.decay_steps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig(
                "decay steps must be strictly increasing".into(),
            ));
        }
        if self
            .decay_steps
            .last()
            .is_some_and(|&s| s >= self.total_steps)
        {
            return Err(Error::InvalidConfig(
                "decay steps must precede total_steps".into(),
            ));
        }
        if !(self.lr_init >= 0.0) {
            return Err(Error::InvalidConfig("lr_init must be non-negative".into()));
        }
        Ok(())
    }

    pub fn lr_at(&self, step: usize) -> f64 {
        let decays = self.decay_steps.iter().filter(|&&s| s <= step).count();
        self.lr_init * self.decay_factor.powi(decays as i32)
    }
}

/// Drops decay points that coincide or fall outside `(0, total)`, which short
/// scaled schedules produce.
fn collapse_decays(mut steps: Vec<usize>, total: usize) -> Vec<usize> {
    steps.retain(|&s| s > 0 && s < total);
    steps.dedup();
    steps
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub entries: Vec<LogEntry>,
}

impl TrainLog {
    /// One JSON object per line.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for entry in &self.entries {
            out.push_str(&serde_json::to_string(entry)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let entries = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<std::result::Result<_, _>>()?;
        Ok(Self { entries })
    }

    /// Mean loss over the last `n` entries.
    pub fn tail_mean(&self, n: usize) -> f64 {
        let tail = &self.entries[self.entries.len().saturating_sub(n)..];
        tail.iter().map(|e| e.loss).sum::<f64>() / tail.len().max(1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StandardSampling {
    Random,
    /// Image-level repeat-factor oversampling.
    RepeatFactor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub schedule: Schedule,
    pub loss: LossConfig,
    pub sampling: StandardSampling,
    pub sampler: SamplerConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            schedule: Schedule::standard(),
            loss: LossConfig::default(),
            sampling: StandardSampling::Random,
            sampler: SamplerConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HeadInit {
    /// Two fresh layers.
    #[serde(rename = "2fc_rand")]
    TwoFcRand,
    /// Three fresh layers.
    #[serde(rename = "3fc_rand")]
    ThreeFcRand,
    /// Copy of a three-layer original head.
    #[serde(rename = "3fc_ft")]
    ThreeFcFt,
}

impl HeadInit {
    pub const ALL: [HeadInit; 3] = [
        HeadInit::TwoFcRand,
        HeadInit::ThreeFcRand,
        HeadInit::ThreeFcFt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            HeadInit::TwoFcRand => "2fc_rand",
            HeadInit::ThreeFcRand => "3fc_rand",
            HeadInit::ThreeFcFt => "3fc_ft",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibLayers {
    Last,
    Last2,
    All,
}

impl CalibLayers {
    pub const ALL: [CalibLayers; 3] = [CalibLayers::Last, CalibLayers::Last2, CalibLayers::All];

    pub fn name(self) -> &'static str {
        match self {
            CalibLayers::Last => "last",
            CalibLayers::Last2 => "last2",
            CalibLayers::All => "all",
        }
    }

    /// Trainable flag per layer of an `n`-layer head.
    pub fn mask(self, n: usize) -> Vec<bool> {
        let trainable = match self {
            CalibLayers::Last => 1,
            CalibLayers::Last2 => 2,
            CalibLayers::All => n,
        };
        (0..n).map(|i| i + trainable >= n).collect()
    }
}

/// Batches used while calibrating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalSampling {
    Bilevel,
    /// Image-centric random batches, as in standard training.
    RandomImages,
    /// Image-centric batches under repeat-factor oversampling.
    RepeatFactor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibConfig {
    pub head_init: HeadInit,
    pub layers: CalibLayers,
    pub loss: LossConfig,
    pub schedule: Schedule,
    pub sampler: SamplerConfig,
    pub sampling: CalSampling,
}

impl Default for CalibConfig {
    fn default() -> Self {
        Self {
            head_init: HeadInit::ThreeFcFt,
            layers: CalibLayers::All,
            loss: LossConfig::default(),
            schedule: Schedule::calibration(),
            sampler: SamplerConfig::default(),
            sampling: CalSampling::Bilevel,
        }
    }
}

fn proposals_of_images(groups: &[Vec<usize>], images: &[usize]) -> Vec<usize> {
    images
        .iter()
        .flat_map(|&pos| groups[pos].iter().copied())
        .collect()
}

fn step_once(
    params: &mut HeadParams,
    state: &mut OptState,
    batch: &Batch,
    loss: &Loss,
    trainable: &[bool],
    step: usize,
) -> Result<Vec<f64>> {
    let (per_sample, grads) = params.backward_per_sample(batch, loss)?;
    let mean = per_sample.iter().sum::<f64>() / per_sample.len() as f64;
    if !mean.is_finite() {
        return Err(Error::Diverged { step, loss: mean });
    }
    sgd_step(params, &grads, state, trainable)?;
    Ok(per_sample)
}

/// Trains every layer of a fresh head on all proposals of random image
/// batches. Deterministic in `seed`.
pub fn train_standard(
    dataset: &SynthDataset,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(HeadParams, TrainLog)> {
    cfg.schedule.validate()?;
    let spec = HeadSpec::new(
        dataset.feature_dim(),
        cfg.hidden.clone(),
        dataset.num_classes() + 1,
    );
    let mut params = HeadParams::init(&spec, &mut substream(seed, "init"));
    let mut log = TrainLog::default();
    if cfg.schedule.total_steps == 0 {
        return Ok((params, log));
    }
    let has_fg = dataset.proposals.iter().any(|p| p.assigned_label > 0);
    let has_bg = dataset.proposals.iter().any(|p| p.assigned_label == 0);
    if !has_fg || !has_bg {
        return Err(Error::InvalidConfig(
            "training needs foreground and background proposals".into(),
        ));
    }
    let loss = Loss::new(&cfg.loss, &dataset.stats)?;
    let groups = dataset.proposals_by_image();
    let mut batches: Box<dyn Iterator<Item = Vec<usize>>> = match cfg.sampling {
        StandardSampling::Random => Box::new(RandomImageBatches::new(
            dataset.images.len(),
            cfg.sampler.random_batch_images,
            substream(seed, "batches"),
        )?),
        StandardSampling::RepeatFactor => Box::new(RepeatFactorSampler::new(
            dataset,
            &cfg.sampler,
            substream(seed, "batches"),
        )?),
    };
    let trainable = vec![true; params.num_layers()];
    let mut state = OptState::new(&params, cfg.schedule.lr_init);
    for step in 0..cfg.schedule.total_steps {
        let images = batches.next().ok_or(Error::EmptyDataset)?;
        let indices = proposals_of_images(&groups, &images);
        if indices.is_empty() {
            continue;
        }
        state.lr = cfg.schedule.lr_at(step);
        let batch = Batch::from_proposals(dataset, &indices);
        let per_sample = step_once(&mut params, &mut state, &batch, &loss, &trainable, step)?;
        log.entries.push(LogEntry {
            step,
            lr: state.lr,
            loss: per_sample.iter().sum::<f64>() / per_sample.len() as f64,
        });
    }
    Ok((params, log))
}

/// Calibration batch loss: per-proposal losses summed over every class group
/// (background included) and divided by the total proposal count.
///
/// `losses` is aligned with [`CalBatch::proposal_indices`].
pub fn calibration_loss(batch: &CalBatch, losses: &[f64]) -> f64 {
    let mut offset = 0;
    let mut total = 0.0;
    let mut count = 0;
    let sizes = batch
        .groups
        .iter()
        .map(|(_, g)| g.len())
        .chain(std::iter::once(batch.background.len()));
    for n in sizes {
        total += losses[offset..offset + n].iter().sum::<f64>();
        count += n;
        offset += n;
    }
    total / count as f64
}

/// Initial head for calibration.
pub fn init_calibration_head(
    original: &HeadParams,
    init: HeadInit,
    seed: u64,
) -> Result<HeadParams> {
    let width = original.layers[0].weight.nrows();
    let mut rng = substream(seed, "calib_init");
    match init {
        HeadInit::ThreeFcFt => {
            if original.num_layers() != 3 {
                return Err(Error::InvalidConfig(format!(
                    "3fc_ft needs a three-layer original head, got {} layers",
                    original.num_layers()
                )));
            }
            Ok(original.clone())
        }
        HeadInit::TwoFcRand => Ok(HeadParams::init(
            &HeadSpec::new(original.input_dim(), vec![width], original.num_outputs()),
            &mut rng,
        )),
        HeadInit::ThreeFcRand => Ok(HeadParams::init(
            &HeadSpec::new(
                original.input_dim(),
                vec![width, width],
                original.num_outputs(),
            ),
            &mut rng,
        )),
    }
}

/// Output of [`calibrate_with_snapshots`].
#[derive(Debug, Clone)]
pub struct CalibrationRun {
    pub head: HeadParams,
    pub log: TrainLog,
    /// Heads captured after the requested step counts.
    pub snapshots: Vec<(usize, HeadParams)>,
}

/// Retrains the selected layers of a head initialized per `cfg.head_init`.
pub fn calibrate(
    dataset: &SynthDataset,
    original: &HeadParams,
    cfg: &CalibConfig,
    seed: u64,
) -> Result<(HeadParams, TrainLog)> {
    let run = calibrate_with_snapshots(dataset, original, cfg, seed, &[])?;
    Ok((run.head, run.log))
}

pub fn calibrate_with_snapshots(
    dataset: &SynthDataset,
    original: &HeadParams,
    cfg: &CalibConfig,
    seed: u64,
    snapshot_steps: &[usize],
) -> Result<CalibrationRun> {
    cfg.schedule.validate()?;
    cfg.sampler.validate()?;
    let mut params = init_calibration_head(original, cfg.head_init, seed)?;
    let trainable = cfg.layers.mask(params.num_layers());
    let loss = Loss::new(&cfg.loss, &dataset.stats)?;
    let mut state = OptState::new(&params, cfg.schedule.lr_init);
    let mut log = TrainLog::default();
    let mut snapshots = Vec::new();
    let take_snapshot =
        |step: usize, params: &HeadParams, snapshots: &mut Vec<(usize, HeadParams)>| {
            if snapshot_steps.contains(&step) {
                snapshots.push((step, params.clone()));
            }
        };
    take_snapshot(0, &params, &mut snapshots);

    enum Source<'a> {
        Bilevel(Box<BilevelSampler<'a>>),
        Images(Box<dyn Iterator<Item = Vec<usize>> + 'a>, Vec<Vec<usize>>),
    }
    let mut source = match cfg.sampling {
        CalSampling::Bilevel => Source::Bilevel(Box::new(BilevelSampler::new(
            dataset,
            &cfg.sampler,
            substream(seed, "calib_batches"),
        )?)),
        CalSampling::RandomImages => Source::Images(
            Box::new(RandomImageBatches::new(
                dataset.images.len(),
                cfg.sampler.random_batch_images,
                substream(seed, "calib_batches"),
            )?),
            dataset.proposals_by_image(),
        ),
        CalSampling::RepeatFactor => Source::Images(
            Box::new(RepeatFactorSampler::new(
                dataset,
                &cfg.sampler,
                substream(seed, "calib_batches"),
            )?),
            dataset.proposals_by_image(),
        ),
    };

    for step in 0..cfg.schedule.total_steps {
        state.lr = cfg.schedule.lr_at(step);
        let value = match &mut source {
            Source::Bilevel(sampler) => {
                let cal_batch = sampler.sample_batch();
                if cal_batch.is_empty() {
                    continue;
                }
                let batch = Batch::from_proposals(dataset, &cal_batch.proposal_indices());
                let per_sample =
                    step_once(&mut params, &mut state, &batch, &loss, &trainable, step)?;
                calibration_loss(&cal_batch, &per_sample)
            }
            Source::Images(batches, groups) => {
                let images = batches.next().ok_or(Error::EmptyDataset)?;
                let indices = proposals_of_images(groups, &images);
                if indices.is_empty() {
                    continue;
                }
                let batch = Batch::from_proposals(dataset, &indices);
                let per_sample =
                    step_once(&mut params, &mut state, &batch, &loss, &trainable, step)?;
                per_sample.iter().sum::<f64>() / per_sample.len() as f64
            }
        };
        log.entries.push(LogEntry {
            step,
            lr: state.lr,
            loss: value,
        });
        take_snapshot(step + 1, &params, &mut snapshots);
    }
    Ok(CalibrationRun {
        head: params,
        log,
        snapshots,
    })
}

/// Calibration with one of the adapted long-tail losses. With `bilevel`
/// false the batches are image-centric, isolating the loss from the sampler.
pub fn calibrate_with_alternative(
    dataset: &SynthDataset,
    original: &HeadParams,
    alt_loss: LossKind,
    base: &CalibConfig,
    bilevel: bool,
    seed: u64,
) -> Result<(HeadParams, TrainLog)> {
    let cfg = CalibConfig {
        loss: LossConfig {
            kind: alt_loss,
            ..base.loss.clone()
        },
        sampling: if bilevel {
            CalSampling::Bilevel
        } else {
            CalSampling::RandomImages
        },
        ..base.clone()
    };
    calibrate(dataset, original, &cfg, seed)
}

/// Predictions replaced by one-hot ground-truth labels.
pub fn props_gt_oracle(dataset: &SynthDataset) -> Vec<ScoredProposal> {
    let width = dataset.num_classes() + 1;
    with_ids(
        dataset
            .proposals
            .iter()
            .map(|p| PredictionVector::one_hot(width, p.assigned_label))
            .collect(),
    )
}

/// Head predictions for every proposal of `dataset`, tagged with ids.
pub fn predict(head: &HeadParams, dataset: &SynthDataset) -> Result<Vec<ScoredProposal>> {
    Ok(with_ids(head.predict_dataset(dataset)?))
}
