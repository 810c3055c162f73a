//! Dual-head inference: merging calibrated and original head predictions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::ScoredProposal;
use crate::types::{ClassStats, PredictionVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    OrigOnly,
    CalOnly,
    /// Elementwise mean.
    Avg,
    /// Union of per-class top-k lists of both heads, duplicates merged by
    /// max score. Without boxes this stands in for separate detection plus NMS.
    Det,
    /// Route class `z` to the calibrated head when `N_z <= T`.
    Sel,
    /// Zero calibrated scores below `thr`, then `Sel`.
    SelThr,
    /// Rescale calibrated scores by the ratio of mean background scores
    /// (original / calibrated) over the evaluation set, then `Sel`.
    SelScale,
    /// `Sel`, then divide by the summed score.
    SelNorm,
}

impl Scheme {
    pub const ALL: [Scheme; 8] = [
        Scheme::OrigOnly,
        Scheme::CalOnly,
        Scheme::Avg,
        Scheme::Det,
        Scheme::Sel,
        Scheme::SelThr,
        Scheme::SelScale,
        Scheme::SelNorm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::OrigOnly => "orig",
            Scheme::CalOnly => "cal-only",
            Scheme::Avg => "avg",
            Scheme::Det => "det",
            Scheme::Sel => "sel",
            Scheme::SelThr => "sel-thr",
            Scheme::SelScale => "sel-scale",
            Scheme::SelNorm => "sel-norm",
        }
    }
}

/// Which head supplies the background entry under the `sel` family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackgroundSource {
    Orig,
    Cal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CombineConfig {
    pub scheme: Scheme,
    /// Head/tail boundary on training instance counts.
    #[serde(rename = "T", alias = "t")]
    pub t: u64,
    pub thr: f64,
    pub sel_bg: BackgroundSource,
    /// Per-class list length kept from each head under `Det`; 0 keeps all.
    pub det_top_k: usize,
}

impl Default for CombineConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::Sel,
            t: 300,
            thr: 0.05,
            sel_bg: BackgroundSource::Orig,
            det_top_k: 300,
        }
    }
}

impl CombineConfig {
    pub fn with_scheme(scheme: Scheme) -> Self {
        Self {
            scheme,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.thr) {
            return Err(Error::InvalidConfig("thr must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// `true` when class `z` is served by the calibrated head.
pub fn routes_to_calibrated(z: usize, stats: &ClassStats, cfg: &CombineConfig) -> bool {
    if z == 0 {
        cfg.sel_bg == BackgroundSource::Cal
    } else {
        stats.instance_counts()[z - 1] <= cfg.t
    }
}

fn select(cal: &[f64], orig: &[f64], stats: &ClassStats, cfg: &CombineConfig) -> Vec<f64> {
    (0..cal.len())
        .map(|z| {
            if routes_to_calibrated(z, stats, cfg) {
                cal[z]
            } else {
                orig[z]
            }
        })
        .collect()
}

fn check_lengths(
    p_cal: &PredictionVector,
    p_orig: &PredictionVector,
    stats: &ClassStats,
) -> Result<()> {
    let expected = stats.num_classes() + 1;
    for p in [p_cal, p_orig] {
        if p.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: p.len(),
            });
        }
    }
    Ok(())
}

fn combine_scaled(
    p_cal: &PredictionVector,
    p_orig: &PredictionVector,
    stats: &ClassStats,
    cfg: &CombineConfig,
    cal_scale: f64,
) -> Result<PredictionVector> {
    check_lengths(p_cal, p_orig, stats)?;
    let (cal, orig) = (p_cal.scores(), p_orig.scores());
    let scores = match cfg.scheme {
        Scheme::OrigOnly => orig.to_vec(),
        Scheme::CalOnly => cal.to_vec(),
        Scheme::Avg => cal.iter().zip(orig).map(|(a, b)| 0.5 * (a + b)).collect(),
        Scheme::Det => cal.iter().zip(orig).map(|(a, b)| a.max(*b)).collect(),
        Scheme::Sel => select(cal, orig, stats, cfg),
        Scheme::SelThr => {
            let filtered: Vec<f64> = cal
                .iter()
                .map(|&v| if v < cfg.thr { 0.0 } else { v })
                .collect();
            select(&filtered, orig, stats, cfg)
        }
        Scheme::SelScale => {
            let scaled: Vec<f64> = cal.iter().map(|&v| v * cal_scale).collect();
            select(&scaled, orig, stats, cfg)
        }
        Scheme::SelNorm => {
            let mut out = select(cal, orig, stats, cfg);
            let sum: f64 = out.iter().sum();
            if !(sum > 0.0) {
                return Err(Error::DegeneratePrediction);
            }
            out.iter_mut().for_each(|v| *v /= sum);
            out
        }
    };
    Ok(PredictionVector(scores))
}

fn background_ratio<'a>(
    pairs: impl Iterator<Item = (&'a PredictionVector, &'a PredictionVector)>,
) -> Result<f64> {
    let (mut cal, mut orig, mut n) = (0.0, 0.0, 0usize);
    for (c, o) in pairs {
        cal += c.0[0];
        orig += o.0[0];
        n += 1;
    }
    if n == 0 {
        return Ok(1.0);
    }
    if !(cal > 0.0) {
        return Err(Error::DegeneratePrediction);
    }
    Ok((orig / n as f64) / (cal / n as f64))
}

/// Combines one prediction pair. `SelScale` treats the pair as a
/// one-element evaluation set.
pub fn combine(
    p_cal: &PredictionVector,
    p_orig: &PredictionVector,
    stats: &ClassStats,
    cfg: &CombineConfig,
) -> Result<PredictionVector> {
    let scale = if cfg.scheme == Scheme::SelScale {
        background_ratio(std::iter::once((p_cal, p_orig)))?
    } else {
        1.0
    };
    combine_scaled(p_cal, p_orig, stats, cfg, scale)
}

/// Zeroes every entry of class `z` outside the head's top `k` proposals.
fn keep_top_k(preds: &[ScoredProposal], k: usize) -> Vec<PredictionVector> {
    let mut out: Vec<PredictionVector> = preds.iter().map(|p| p.scores.clone()).collect();
    if k == 0 || preds.len() <= k {
        return out;
    }
    let width = preds[0].scores.len();
    let mut order: Vec<usize> = (0..preds.len()).collect();
    for z in 1..width {
        order.sort_by(|&a, &b| {
            preds[b].scores.0[z]
                .total_cmp(&preds[a].scores.0[z])
                .then(preds[a].proposal_id.cmp(&preds[b].proposal_id))
        });
        for &i in &order[k..] {
            out[i].0[z] = 0.0;
        }
    }
    out
}

/// Combines two aligned prediction sets. `SelScale` computes its background
/// ratio once over the whole set; `Det` applies its per-class top-k here.
pub fn batch_combine(
    cal: &[ScoredProposal],
    orig: &[ScoredProposal],
    stats: &ClassStats,
    cfg: &CombineConfig,
) -> Result<Vec<ScoredProposal>> {
    cfg.validate()?;
    if cal.len() != orig.len() {
        return Err(Error::Misaligned(format!(
            "{} vs {} predictions",
            cal.len(),
            orig.len()
        )));
    }
    if let Some((a, b)) = cal
        .iter()
        .zip(orig)
        .find(|(a, b)| a.proposal_id != b.proposal_id)
    {
        return Err(Error::Misaligned(format!(
            "proposal {} paired with {}",
            a.proposal_id, b.proposal_id
        )));
    }
    if cfg.scheme == Scheme::Det {
        let (top_cal, top_orig) = (
            keep_top_k(cal, cfg.det_top_k),
            keep_top_k(orig, cfg.det_top_k),
        );
        return cal
            .iter()
            .zip(top_cal.iter().zip(&top_orig))
            .map(|(p, (c, o))| {
                Ok(ScoredProposal {
                    proposal_id: p.proposal_id,
                    scores: combine_scaled(c, o, stats, cfg, 1.0)?,
                })
            })
            .collect();
    }
    let scale = if cfg.scheme == Scheme::SelScale {
        background_ratio(
            cal.iter()
                .map(|p| &p.scores)
                .zip(orig.iter().map(|p| &p.scores)),
        )?
    } else {
        1.0
    };
    cal.iter()
        .zip(orig)
        .map(|(c, o)| {
            Ok(ScoredProposal {
                proposal_id: c.proposal_id,
                scores: combine_scaled(&c.scores, &o.scores, stats, cfg, scale)?,
            })
        })
        .collect()
}
