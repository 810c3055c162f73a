//! Per-sample classification losses over `C + 1` logits.
//!
//! Every loss is a function of one target probability `p_t` of a (possibly
//! margin-shifted) softmax, so they share one gradient path:
//! `dL/dy_k = w * phi'(p_t) * p_t * (delta_tk - p_k)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::ClassStats;

/// Floor applied to probabilities inside `ln`.
pub const LOG_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Ce,
    Reweight,
    Focal,
    Margin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub kind: LossKind,
    /// Numerator `N` of the inverse-frequency weight `N / N_j`.
    pub reweight_numerator: f64,
    pub weight_clamp: [f64; 2],
    pub background_weight: f64,
    pub gamma: f64,
    /// Scalar on foreground focal terms; 1 leaves the loss unweighted.
    pub focal_alpha: f64,
    pub margin_c: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            kind: LossKind::Ce,
            reweight_numerator: 100.0,
            weight_clamp: [0.1, 10.0],
            background_weight: 1.0,
            gamma: 3.0,
            focal_alpha: 1.0,
            margin_c: 6.0,
        }
    }
}

impl LossConfig {
    pub fn of_kind(kind: LossKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.weight_clamp[0] < self.weight_clamp[1]) {
            return Err(Error::InvalidConfig(
                "weight_clamp low must be below high".into(),
            ));
        }
        if !(self.gamma >= 0.0) || !(self.margin_c >= 0.0) {
            return Err(Error::InvalidConfig(
                "gamma and margin_c must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

fn safe_ln(p: f64) -> f64 {
    p.max(LOG_EPS).ln()
}

fn d_safe_ln(p: f64) -> f64 {
    if p > LOG_EPS {
        1.0 / p
    } else {
        0.0
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&y| (y - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Inverse-frequency weight of `label`; background uses its own weight.
pub fn reweight_weight(label: usize, stats: &ClassStats, cfg: &LossConfig) -> f64 {
    if label == 0 {
        return cfg.background_weight;
    }
    let n = stats.instance_counts()[label - 1] as f64;
    let [lo, hi] = cfg.weight_clamp;
    (cfg.reweight_numerator / n).clamp(lo, hi)
}

/// Class-aware margin `C / N_z^{1/4}`; zero for background and `C` for
/// classes never seen in training.
pub fn class_margin(label: usize, stats: &ClassStats, c_margin: f64) -> f64 {
    if label == 0 {
        return 0.0;
    }
    let n = stats.instance_counts()[label - 1];
    if n == 0 {
        c_margin
    } else {
        (c_margin / (n as f64).powf(0.25)).min(c_margin)
    }
}

pub fn loss_ce(p: &[f64], label: usize) -> f64 {
    -safe_ln(p[label])
}

pub fn loss_reweight(p: &[f64], label: usize, stats: &ClassStats, cfg: &LossConfig) -> f64 {
    reweight_weight(label, stats, cfg) * loss_ce(p, label)
}

pub fn loss_focal(p: &[f64], label: usize, gamma: f64) -> f64 {
    let pt = p[label];
    -(1.0 - pt).powf(gamma) * safe_ln(pt)
}

pub fn loss_margin(logits: &[f64], label: usize, stats: &ClassStats, c_margin: f64) -> f64 {
    let mut shifted = logits.to_vec();
    shifted[label] -= class_margin(label, stats, c_margin);
    loss_ce(&softmax(&shifted), label)
}

/// A loss bound to the class statistics it needs.
#[derive(Debug, Clone)]
pub struct Loss {
    cfg: LossConfig,
    weights: Vec<f64>,
    margins: Vec<f64>,
}

impl Loss {
    pub fn new(cfg: &LossConfig, stats: &ClassStats) -> Result<Self> {
        cfg.validate()?;
        let labels = 0..=stats.num_classes();
        let weights = match cfg.kind {
            LossKind::Reweight => labels
                .clone()
                .map(|z| reweight_weight(z, stats, cfg))
                .collect(),
            LossKind::Focal => labels
                .clone()
                .map(|z| if z == 0 { 1.0 } else { cfg.focal_alpha })
                .collect(),
            _ => vec![1.0; stats.num_classes() + 1],
        };
        let margins = match cfg.kind {
            LossKind::Margin => labels
                .map(|z| class_margin(z, stats, cfg.margin_c))
                .collect(),
            _ => vec![0.0; stats.num_classes() + 1],
        };
        Ok(Self {
            cfg: cfg.clone(),
            weights,
            margins,
        })
    }

    pub fn config(&self) -> &LossConfig {
        &self.cfg
    }

    /// Loss of one sample and its gradient with respect to the logits,
    /// written into `grad`.
    pub fn sample(&self, logits: &[f64], label: usize, grad: &mut [f64]) -> f64 {
        let margin = self.margins[label];
        let p = if margin != 0.0 {
            let mut shifted = logits.to_vec();
            shifted[label] -= margin;
            softmax(&shifted)
        } else {
            softmax(logits)
        };
        let pt = p[label];
        let w = self.weights[label];
        let (value, dvalue_dpt) = match self.cfg.kind {
            LossKind::Focal => {
                let gamma = self.cfg.gamma;
                let q = 1.0 - pt;
                let modulator = q.powf(gamma);
                let d_modulator = if gamma == 0.0 || q == 0.0 {
                    0.0
                } else {
                    -gamma * q.powf(gamma - 1.0)
                };
                (
                    -modulator * safe_ln(pt),
                    -(d_modulator * safe_ln(pt) + modulator * d_safe_ln(pt)),
                )
            }
            _ => (-safe_ln(pt), -d_safe_ln(pt)),
        };
        let scale = w * dvalue_dpt * pt;
        for (k, (g, &pk)) in grad.iter_mut().zip(&p).enumerate() {
            let delta = if k == label { 1.0 } else { 0.0 };
            *g = scale * (delta - pk);
        }
        w * value
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    macro_rules! assert_close {
        ($a:expr, $b:expr, $tol:expr) => {
            assert_abs_diff_eq!($a, $b, epsilon = $tol)
        };
    }

    fn stats(counts: Vec<u64>) -> ClassStats {
        let images = counts.iter().map(|&n| n.min(1)).collect();
        ClassStats::new(counts, images).unwrap()
    }

    #[test]
    fn reweight_values() {
        let cfg = LossConfig::default();
        let s = stats(vec![1000, 5, 100]);
        assert_close!(reweight_weight(1, &s, &cfg), 0.1, 1e-15);
        assert_eq!(reweight_weight(2, &s, &cfg), 10.0);
        assert_eq!(reweight_weight(3, &s, &cfg), 1.0);
        assert_eq!(reweight_weight(0, &s, &cfg), 1.0);
        let p = [0.2, 0.3, 0.5, 0.0];
        assert_close!(loss_reweight(&p, 2, &s, &cfg), -10.0 * 0.5f64.ln(), 1e-15);
    }

    #[test]
    fn focal_values() {
        assert_eq!(loss_focal(&[0.0, 1.0], 1, 3.0), 0.0);
        assert_close!(loss_focal(&[0.5, 0.5], 1, 3.0), 0.125 * 2f64.ln(), 1e-15);
        assert_close!(0.125 * 2f64.ln(), 0.086643, 1e-6);
        let p = [0.1, 0.7, 0.2];
        assert_eq!(loss_focal(&p, 2, 0.0), loss_ce(&p, 2));
    }

    #[test]
    fn margin_values() {
        let s = stats(vec![16, 3]);
        assert_close!(class_margin(1, &s, 6.0), 3.0, 1e-15);
        assert_eq!(class_margin(0, &s, 6.0), 0.0);
        assert_eq!(class_margin(1, &stats(vec![0, 1]), 6.0), 6.0);
        // y = [0, 0] over {bg, class 1} with margin 1 on class 1: log(1 + e).
        let one = stats(vec![1]);
        assert_close!(
            loss_margin(&[0.0, 0.0], 1, &one, 1.0),
            (1.0 + 1f64.exp()).ln(),
            1e-15
        );
        assert_close!((1.0 + 1f64.exp()).ln(), 1.313262, 1e-6);
        let y = [0.3, -1.2, 2.0];
        assert_eq!(loss_margin(&y, 1, &s, 0.0), loss_ce(&softmax(&y), 1));
    }

    #[test]
    fn zero_probability_is_guarded() {
        let l = loss_ce(&[1.0, 0.0], 1);
        assert!(l.is_finite());
        assert_close!(l, -LOG_EPS.ln(), 1e-12);
    }

    #[test]
    fn softmax_is_shift_invariant() {
        let y = [0.5, -2.0, 3.0, 1.0];
        let shifted: Vec<f64> = y.iter().map(|v| v + 123.0).collect();
        let (a, b) = (softmax(&y), softmax(&shifted));
        for (x, z) in a.iter().zip(&b) {
            assert_close!(*x, *z, 1e-12);
        }
        assert_close!(a.iter().sum::<f64>(), 1.0, 1e-12);
    }

    #[test]
    fn sample_matches_free_functions() {
        let s = stats(vec![400, 20, 2]);
        let y = [0.2, 1.5, -0.3, 0.8];
        let p = softmax(&y);
        let mut g = vec![0.0; 4];
        for (kind, expected) in [
            (LossKind::Ce, loss_ce(&p, 2)),
            (
                LossKind::Reweight,
                loss_reweight(&p, 2, &s, &LossConfig::default()),
            ),
            (LossKind::Focal, loss_focal(&p, 2, 3.0)),
            (LossKind::Margin, loss_margin(&y, 2, &s, 6.0)),
        ] {
            let loss = Loss::new(&LossConfig::of_kind(kind), &s).unwrap();
            assert_eq!(loss.sample(&y, 2, &mut g), expected, "{kind:?}");
        }
    }
}
