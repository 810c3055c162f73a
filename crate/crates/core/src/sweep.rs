//! One-knob ablation sweeps over calibration settings.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::combine::{batch_combine, CombineConfig};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalBins, EvalReport, ScoredProposal};
use crate::head::HeadParams;
use crate::synth::SynthDataset;
use crate::trainer::{
    calibrate, calibrate_with_snapshots, predict, CalibConfig, CalibLayers, HeadInit,
};

/// Knob being varied, with its grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "grid", rename_all = "snake_case")]
pub enum SweepGrid {
    CalSteps(Vec<usize>),
    Lr(Vec<f64>),
    T(Vec<u64>),
    Layers(Vec<CalibLayers>),
    HeadInit(Vec<HeadInit>),
}

impl SweepGrid {
    pub fn kind(&self) -> &'static str {
        match self {
            SweepGrid::CalSteps(_) => "cal_steps",
            SweepGrid::Lr(_) => "lr",
            SweepGrid::T(_) => "T",
            SweepGrid::Layers(_) => "layers",
            SweepGrid::HeadInit(_) => "head_init",
        }
    }

    pub fn len(&self) -> usize {
        self.values().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Grid values rendered for the CSV `value` column.
    pub fn values(&self) -> Vec<String> {
        match self {
            SweepGrid::CalSteps(g) => g.iter().map(|v| v.to_string()).collect(),
            SweepGrid::Lr(g) => g.iter().map(|v| v.to_string()).collect(),
            SweepGrid::T(g) => g.iter().map(|v| v.to_string()).collect(),
            SweepGrid::Layers(g) => g.iter().map(|v| v.name().to_string()).collect(),
            SweepGrid::HeadInit(g) => g.iter().map(|v| v.name().to_string()).collect(),
        }
    }

    pub fn default_lr() -> Self {
        SweepGrid::Lr(vec![0.001, 0.002, 0.004, 0.008, 0.01, 0.02, 0.04, 0.08])
    }

    /// Log-spaced over [10, 1000].
    pub fn default_t() -> Self {
        SweepGrid::T(vec![10, 20, 50, 90, 150, 300, 500, 1000])
    }

    pub fn default_layers() -> Self {
        SweepGrid::Layers(CalibLayers::ALL.to_vec())
    }

    pub fn default_head_init() -> Self {
        SweepGrid::HeadInit(HeadInit::ALL.to_vec())
    }

    /// Step 0, then geometric up to `total / 2`, then `3 total / 4` and `total`.
    pub fn default_cal_steps(total: usize) -> Self {
        let mut steps: Vec<usize> = vec![0];
        steps.extend((1..=6).rev().map(|k| total >> k));
        steps.extend([total * 3 / 4, total]);
        steps.dedup();
        SweepGrid::CalSteps(steps)
    }

    /// Parses a kind name and a comma-separated grid. An empty grid string
    /// selects the default grid for the kind.
    pub fn parse(kind: &str, grid: &str, default_cal_total: usize) -> Result<Self> {
        fn list<T: std::str::FromStr>(grid: &str) -> Result<Vec<T>> {
            grid.split(',')
                .map(|v| {
                    v.trim()
                        .parse()
                        .map_err(|_| Error::InvalidConfig(format!("bad grid value {v:?}")))
                })
                .collect()
        }
        fn named<T: Copy>(grid: &str, all: &[T], name: fn(T) -> &'static str) -> Result<Vec<T>> {
            grid.split(',')
                .map(|v| {
                    all.iter()
                        .copied()
                        .find(|&x| name(x) == v.trim())
                        .ok_or_else(|| Error::InvalidConfig(format!("bad grid value {v:?}")))
                })
                .collect()
        }
        let grid = grid.trim();
        Ok(match (kind, grid.is_empty()) {
            ("cal_steps", true) => Self::default_cal_steps(default_cal_total),
            ("cal_steps", false) => SweepGrid::CalSteps(list(grid)?),
            ("lr", true) => Self::default_lr(),
            ("lr", false) => SweepGrid::Lr(list(grid)?),
            ("T" | "t", true) => Self::default_t(),
            ("T" | "t", false) => SweepGrid::T(list(grid)?),
            ("layers", true) => Self::default_layers(),
            ("layers", false) => {
                SweepGrid::Layers(named(grid, &CalibLayers::ALL, CalibLayers::name)?)
            }
            ("head_init", true) => Self::default_head_init(),
            ("head_init", false) => {
                SweepGrid::HeadInit(named(grid, &HeadInit::ALL, HeadInit::name)?)
            }
            _ => return Err(Error::InvalidConfig(format!("unknown sweep kind {kind:?}"))),
        })
    }
}

/// Shared, read-only inputs of a sweep.
#[derive(Debug, Clone, Copy)]
pub struct SweepContext<'a> {
    pub train: &'a SynthDataset,
    pub eval: &'a SynthDataset,
    pub original: &'a HeadParams,
    pub calib: &'a CalibConfig,
    pub combine: &'a CombineConfig,
    pub bins: &'a EvalBins,
    pub seed: u64,
}

/// One grid point: the calibrated head alone and the dual-head combination.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: String,
    pub outcome: std::result::Result<(EvalReport, EvalReport), String>,
}

impl SweepRow {
    pub fn calibrated(&self) -> Option<&EvalReport> {
        self.outcome.as_ref().ok().map(|(c, _)| c)
    }

    pub fn dual(&self) -> Option<&EvalReport> {
        self.outcome.as_ref().ok().map(|(_, d)| d)
    }
}

fn score(
    ctx: &SweepContext<'_>,
    cal: &[ScoredProposal],
    orig: &[ScoredProposal],
    combine: &CombineConfig,
) -> Result<(EvalReport, EvalReport)> {
    let cal_report = evaluate(cal, ctx.eval, &ctx.train.stats, ctx.bins)?;
    let dual = batch_combine(cal, orig, &ctx.train.stats, combine)?;
    let dual_report = evaluate(&dual, ctx.eval, &ctx.train.stats, ctx.bins)?;
    Ok((cal_report, dual_report))
}

fn score_head(
    ctx: &SweepContext<'_>,
    head: &HeadParams,
    orig: &[ScoredProposal],
) -> Result<(EvalReport, EvalReport)> {
    score(ctx, &predict(head, ctx.eval)?, orig, ctx.combine)
}

/// Runs every grid point. A failing point yields a row carrying its error
/// while the remaining points still run.
pub fn sweep(grid: &SweepGrid, ctx: &SweepContext<'_>) -> Result<Vec<SweepRow>> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("sweep grid is empty".into()));
    }
    let orig = predict(ctx.original, ctx.eval)?;
    let values = grid.values();
    let outcomes: Vec<Result<(EvalReport, EvalReport)>> = match grid {
        SweepGrid::CalSteps(steps) => cal_steps(ctx, steps, &orig),
        SweepGrid::T(ts) => match calibrate(ctx.train, ctx.original, ctx.calib, ctx.seed)
            .and_then(|(head, _)| predict(&head, ctx.eval))
        {
            Ok(cal) => ts
                .par_iter()
                .map(|&t| {
                    let combine = CombineConfig {
                        t,
                        ..ctx.combine.clone()
                    };
                    score(ctx, &cal, &orig, &combine)
                })
                .collect(),
            Err(e) => ts
                .iter()
                .map(|_| Err(Error::InvalidConfig(e.to_string())))
                .collect(),
        },
        SweepGrid::Lr(lrs) => run_each(ctx, &orig, lrs, |cfg, &lr| cfg.schedule.lr_init = lr),
        SweepGrid::Layers(layers) => run_each(ctx, &orig, layers, |cfg, &l| cfg.layers = l),
        SweepGrid::HeadInit(inits) => run_each(ctx, &orig, inits, |cfg, &h| cfg.head_init = h),
    };
    Ok(values
        .into_iter()
        .zip(outcomes)
        .map(|(value, outcome)| {
            if let Err(e) = &outcome {
                log::warn!("sweep point {}={value} failed: {e}", grid.kind());
            }
            SweepRow {
                value,
                outcome: outcome.map_err(|e| e.to_string()),
            }
        })
        .collect())
}

fn run_each<T: Sync>(
    ctx: &SweepContext<'_>,
    orig: &[ScoredProposal],
    grid: &[T],
    apply: impl Fn(&mut CalibConfig, &T) + Sync,
) -> Vec<Result<(EvalReport, EvalReport)>> {
    grid.par_iter()
        .map(|v| {
            let mut cfg = ctx.calib.clone();
            apply(&mut cfg, v);
            let (head, _) = calibrate(ctx.train, ctx.original, &cfg, ctx.seed)?;
            score_head(ctx, &head, orig)
        })
        .collect()
}

/// One calibration run stretched to the largest grid point, evaluated at
/// snapshots taken at every grid point.
fn cal_steps(
    ctx: &SweepContext<'_>,
    steps: &[usize],
    orig: &[ScoredProposal],
) -> Vec<Result<(EvalReport, EvalReport)>> {
    let max = steps.iter().copied().max().unwrap_or(0);
    let base = ctx.calib.schedule.total_steps.max(1);
    let cfg = CalibConfig {
        schedule: ctx.calib.schedule.scaled(max as f64 / base as f64),
        ..ctx.calib.clone()
    };
    match calibrate_with_snapshots(ctx.train, ctx.original, &cfg, ctx.seed, steps) {
        Ok(run) => steps
            .par_iter()
            .map(|s| {
                let head = run
                    .snapshots
                    .iter()
                    .find(|(step, _)| step == s)
                    .map(|(_, h)| h)
                    .ok_or_else(|| Error::InvalidConfig(format!("no snapshot at step {s}")))?;
                score_head(ctx, head, orig)
            })
            .collect(),
        Err(e) => steps
            .iter()
            .map(|_| Err(Error::InvalidConfig(e.to_string())))
            .collect(),
    }
}

/// CSV with a header row: knob, value, status, then every metric of the
/// calibrated head (`cal_` prefix) and of the dual head (`dual_` prefix).
pub fn sweep_csv(kind: &str, rows: &[SweepRow]) -> String {
    let names = rows
        .iter()
        .find_map(|r| r.calibrated())
        .map(|r| r.metric_names())
        .unwrap_or_else(|| {
            ["ap1", "ap2", "ap3", "ap4", "ap_r", "ap_c", "ap_f", "ap"]
                .map(String::from)
                .to_vec()
        });
    let mut header = vec!["knob".to_string(), "value".into(), "status".into()];
    header.extend(names.iter().map(|n| format!("cal_{n}")));
    header.extend(names.iter().map(|n| format!("dual_{n}")));
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let mut fields = vec![kind.to_string(), row.value.clone()];
        match &row.outcome {
            Ok((cal, dual)) => {
                fields.push("ok".into());
                fields.push(cal.csv_fields());
                fields.push(dual.csv_fields());
            }
            Err(_) => {
                fields.push("failed".into());
                fields.extend(std::iter::repeat_n(String::new(), 2 * names.len()));
            }
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// `true` when the series moves by less than `tol` across its last quarter.
pub fn has_plateau(series: &[f64], tol: f64) -> bool {
    if series.len() < 2 {
        return false;
    }
    let start = series.len() - series.len().div_ceil(4) - 1;
    let tail = &series[start..];
    let lo = tail.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    hi - lo < tol
}
