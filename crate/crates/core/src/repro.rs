//! Named end-to-end experiments. Each writes a self-describing directory:
//! resolved config, heads, logs, reports, CSVs, a verdict file listing which
//! expected orderings held, and a manifest of content hashes.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::combine::{batch_combine, CombineConfig, Scheme};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::eval::{evaluate, reports_csv, reports_table, EvalBins, EvalReport, ScoredProposal};
use crate::head::{HeadParams, LossKind};
use crate::sweep::{has_plateau, sweep, sweep_csv, SweepContext, SweepGrid, SweepRow};
use crate::synth::{generate, generate_eval, summarize, SynthDataset};
use crate::trainer::{
    calibrate, calibrate_with_alternative, predict, props_gt_oracle, train_standard, CalSampling,
    CalibConfig, CalibLayers, HeadInit, TrainLog,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Table3,
    Table4,
    Table7,
    Fig4a,
    Fig4b,
    Fig4c,
    Table8,
    Table9,
    Fig1c,
}

impl Experiment {
    pub const ALL: [Experiment; 9] = [
        Experiment::Fig1c,
        Experiment::Table3,
        Experiment::Table4,
        Experiment::Table7,
        Experiment::Fig4a,
        Experiment::Fig4b,
        Experiment::Fig4c,
        Experiment::Table8,
        Experiment::Table9,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Table3 => "table3",
            Experiment::Table4 => "table4",
            Experiment::Table7 => "table7",
            Experiment::Fig4a => "fig4a",
            Experiment::Fig4b => "fig4b",
            Experiment::Fig4c => "fig4c",
            Experiment::Table8 => "table8",
            Experiment::Table9 => "table9",
            Experiment::Fig1c => "fig1c",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown experiment {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub held: bool,
    pub detail: String,
}

impl Verdict {
    fn new(name: &str, held: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            held,
            detail,
        }
    }

    /// `a >= b`, both on the 0..1 scale, reported on the 0..100 scale.
    fn at_least(name: &str, a_name: &str, a: f64, b_name: &str, b: f64) -> Self {
        Self::new(
            name,
            a >= b,
            format!("{a_name} {:.2} vs {b_name} {:.2}", 100.0 * a, 100.0 * b),
        )
    }

    fn below(name: &str, a_name: &str, a: f64, b_name: &str, b: f64) -> Self {
        Self::new(
            name,
            a < b,
            format!("{a_name} {:.2} vs {b_name} {:.2}", 100.0 * a, 100.0 * b),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictFile {
    pub experiment: Experiment,
    pub seed: u64,
    pub all_held: bool,
    pub verdicts: Vec<Verdict>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReproOutcome {
    pub experiment: Experiment,
    pub dir: PathBuf,
    pub verdicts: Vec<Verdict>,
}

impl ReproOutcome {
    pub fn all_held(&self) -> bool {
        self.verdicts.iter().all(|v| v.held)
    }

    pub fn verdict(&self, name: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.name == name)
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    experiment: Experiment,
    seed: u64,
    train_dataset_sha256: &'a str,
    eval_dataset_sha256: &'a str,
    files: &'a BTreeMap<String, String>,
}

/// Output directory that records the hash of every file written into it.
pub struct ArtifactDir {
    root: PathBuf,
    files: BTreeMap<String, String>,
}

impl ArtifactDir {
    pub fn create(root: PathBuf) -> Result<Self> {
        std::fs::create_dir_all(&root)?;
        Ok(Self {
            root,
            files: BTreeMap::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, rel: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, contents.as_ref())?;
        self.files.insert(
            rel.to_string(),
            hex::encode(Sha256::digest(contents.as_ref())),
        );
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(rel, text)
    }

    pub fn files(&self) -> &BTreeMap<String, String> {
        &self.files
    }
}

/// Shared artifacts of every experiment: datasets, the original head and
/// its evaluation-set predictions.
struct Pipeline {
    cfg: RunConfig,
    bins: EvalBins,
    train: SynthDataset,
    eval: SynthDataset,
    original: HeadParams,
    orig_preds: Vec<ScoredProposal>,
    train_hash: String,
    eval_hash: String,
}

impl Pipeline {
    fn prepare(cfg: &RunConfig, out: &mut ArtifactDir) -> Result<Self> {
        let cfg = cfg.resolved();
        cfg.validate().map_err(Error::in_stage("config"))?;
        out.write("config.toml", cfg.to_toml()?)?;
        let bins = cfg.bins.to_eval_bins().map_err(Error::in_stage("config"))?;
        let train = generate(&cfg.synth).map_err(Error::in_stage("synth"))?;
        let eval = generate_eval(&cfg.synth).map_err(Error::in_stage("synth"))?;
        out.write_json("dataset_summary.json", &summarize(&train)?)?;
        let train_hash = train.content_hash()?;
        let eval_hash = eval.content_hash()?;
        let (original, log) = train_standard(&train, &cfg.train, cfg.stage_seed("train"))
            .map_err(Error::in_stage("train"))?;
        out.write("heads/original.json", original.to_json()?)?;
        out.write("logs/original.jsonl", log.to_jsonl()?)?;
        let orig_preds = predict(&original, &eval).map_err(Error::in_stage("eval"))?;
        Ok(Self {
            cfg,
            bins,
            train,
            eval,
            original,
            orig_preds,
            train_hash,
            eval_hash,
        })
    }

    fn evaluate(&self, preds: &[ScoredProposal]) -> Result<EvalReport> {
        evaluate(preds, &self.eval, &self.train.stats, &self.bins).map_err(Error::in_stage("eval"))
    }

    fn calibrate(
        &self,
        cfg: &CalibConfig,
        name: &str,
        out: &mut ArtifactDir,
    ) -> Result<Vec<ScoredProposal>> {
        let (head, log) = calibrate(
            &self.train,
            &self.original,
            cfg,
            self.cfg.stage_seed("calibrate"),
        )
        .map_err(Error::in_stage("calibrate"))?;
        self.save_head(&head, &log, name, out)?;
        predict(&head, &self.eval).map_err(Error::in_stage("eval"))
    }

    fn save_head(
        &self,
        head: &HeadParams,
        log: &TrainLog,
        name: &str,
        out: &mut ArtifactDir,
    ) -> Result<()> {
        out.write(&format!("heads/{name}.json"), head.to_json()?)?;
        out.write(&format!("logs/{name}.jsonl"), log.to_jsonl()?)
    }

    fn combine(&self, cal: &[ScoredProposal], cfg: &CombineConfig) -> Result<Vec<ScoredProposal>> {
        batch_combine(cal, &self.orig_preds, &self.train.stats, cfg)
            .map_err(Error::in_stage("combine"))
    }

    fn sweep(&self, grid: &SweepGrid) -> Result<Vec<SweepRow>> {
        let ctx = SweepContext {
            train: &self.train,
            eval: &self.eval,
            original: &self.original,
            calib: &self.cfg.calibrate,
            combine: &self.cfg.combine,
            bins: &self.bins,
            seed: self.cfg.stage_seed("calibrate"),
        };
        sweep(grid, &ctx).map_err(Error::in_stage("sweep"))
    }
}

/// Named reports rendered to `results.csv`, `table.txt` and `reports/`.
fn write_reports(out: &mut ArtifactDir, rows: &[(String, EvalReport)]) -> Result<()> {
    for (name, report) in rows {
        out.write_json(&format!("reports/{name}.json"), report)?;
    }
    let refs: Vec<(String, &EvalReport)> = rows.iter().map(|(n, r)| (n.clone(), r)).collect();
    out.write("results.csv", reports_csv(&refs))?;
    out.write("table.txt", reports_table(&refs))
}

fn write_sweep(out: &mut ArtifactDir, kind: &str, rows: &[SweepRow]) -> Result<()> {
    out.write("results.csv", sweep_csv(kind, rows))
}

fn ok_rows(rows: &[SweepRow]) -> Result<Vec<(&str, &EvalReport, &EvalReport)>> {
    rows.iter()
        .map(|r| match &r.outcome {
            Ok((cal, dual)) => Ok((r.value.as_str(), cal, dual)),
            Err(e) => Err(Error::in_stage("sweep")(Error::InvalidConfig(format!(
                "grid point {} failed: {e}",
                r.value
            )))),
        })
        .collect()
}

/// Runs one experiment into `out_root/<name>`.
pub fn run_experiment(
    experiment: Experiment,
    cfg: &RunConfig,
    out_root: &Path,
) -> Result<ReproOutcome> {
    let mut out = ArtifactDir::create(out_root.join(experiment.name()))?;
    let pipeline = Pipeline::prepare(cfg, &mut out)?;
    let verdicts = match experiment {
        Experiment::Fig1c => fig1c(&pipeline, &mut out)?,
        Experiment::Table3 => table3(&pipeline, &mut out)?,
        Experiment::Table4 => table4(&pipeline, &mut out)?,
        Experiment::Table7 => table7(&pipeline, &mut out)?,
        Experiment::Fig4a => fig4a(&pipeline, &mut out)?,
        Experiment::Fig4b => fig4b(&pipeline, &mut out)?,
        Experiment::Fig4c => fig4c(&pipeline, &mut out)?,
        Experiment::Table8 => table8(&pipeline, &mut out)?,
        Experiment::Table9 => table9(&pipeline, &mut out)?,
    };
    let file = VerdictFile {
        experiment,
        seed: pipeline.cfg.seed,
        all_held: verdicts.iter().all(|v| v.held),
        verdicts: verdicts.clone(),
    };
    out.write_json("verdict.json", &file)?;
    let files = out.files().clone();
    let manifest = Manifest {
        experiment,
        seed: pipeline.cfg.seed,
        train_dataset_sha256: &pipeline.train_hash,
        eval_dataset_sha256: &pipeline.eval_hash,
        files: &files,
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    std::fs::write(out.root().join("manifest.json"), text)?;
    Ok(ReproOutcome {
        experiment,
        dir: out.root().to_path_buf(),
        verdicts,
    })
}

fn metric_pairs(a: &EvalReport, b: &EvalReport) -> Vec<(String, f64, f64)> {
    a.metric_names()
        .into_iter()
        .zip(a.metric_values().into_iter().zip(b.metric_values()))
        .filter_map(|(n, (x, y))| Some((n, x?, y?)))
        .collect()
}

fn fig1c(p: &Pipeline, out: &mut ArtifactDir) -> Result<Vec<Verdict>> {
    let oracle = p.evaluate(&props_gt_oracle(&p.eval))?;
    let orig = p.evaluate(&p.orig_preds)?;
    let pairs = metric_pairs(&oracle, &orig);
    let failing: Vec<&str> = pairs
        .iter()
        .filter(|(_, o, t)| o < t)
        .map(|(n, _, _)| n.as_str())
        .collect();
    let verdicts = vec![
        Verdict::new(
            "oracle_dominates_original",
            failing.is_empty(),
            if failing.is_empty() {
                format!("oracle >= original on all {} metrics", pairs.len())
            } else {
                format!("oracle below original on {}", failing.join(", "))
            },
        ),
        Verdict::below(
            "original_ap1_below_ap4",
            "ap1",
            orig.bin(0),
            "ap4",
            orig.bin(3),
        ),
    ];
    write_reports(out, &[("oracle".into(), oracle), ("original".into(), orig)])?;
    Ok(verdicts)
}

/// Dual-head reports over a T grid, returning the grid index with the best
/// overall AP (first on ties).
fn t_grid(p: &Pipeline, cal: &[ScoredProposal], grid: &[u64]) -> Result<(Vec<EvalReport>, usize)> {
    let reports = grid
        .iter()
        .map(|&t| {
            let cfg = CombineConfig {
                scheme: Scheme::Sel,
                t,
                ..p.cfg.combine.clone()
            };
            p.evaluate(&p.combine(cal, &cfg)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let best = (0..reports.len()).fold(0, |best, i| {
        if reports[i].overall_ap > reports[best].overall_ap {
            i
        } else {
            best
        }
    });
    Ok((reports, best))
}

fn default_t_grid() -> Vec<u64> {
    match SweepGrid::default_t() {
        SweepGrid::T(ts) => ts,
        _ => unreachable!("default T grid"),
    }
}

fn table3(p: &Pipeline, out: &mut ArtifactDir) -> Result<Vec<Verdict>> {
    let cal_preds = p.calibrate(&p.cfg.calibrate, "calibrated", out)?;
    let orig = p.evaluate(&p.orig_preds)?;
    let cal = p.evaluate(&cal_preds)?;
    let grid = default_t_grid();
    let (reports, best) = t_grid(p, &cal_preds, &grid)?;
    let dual = reports[best].clone();
    let gain = cal.bin(0) - orig.bin(0);
    let verdicts = vec![
        Verdict::new(
            "calibrated_ap1_gain_at_least_5",
            gain >= 0.05,
            format!(
                "ap1 {:.2} -> {:.2} ({:+.2})",
                100.0 * orig.bin(0),
                100.0 * cal.bin(0),
                100.0 * gain
            ),
        ),
        Verdict::below(
            "calibrated_ap4_below_original",
            "calibrated",
            cal.bin(3),
            "original",
            orig.bin(3),
        ),
        Verdict::at_least(
            "dual_ap4_at_least_calibrated",
            "dual",
            dual.bin(3),
            "calibrated",
            cal.bin(3),
        ),
        Verdict::at_least(
            "dual_ap_at_least_original",
            "dual",
            dual.overall_ap,
            "original",
            orig.overall_ap,
        ),
    ];
    write_reports(
        out,
        &[
            ("original".into(), orig),
            ("calibrated".into(), cal),
            (format!("dual_t{}", grid[best]), dual),
        ],
    )?;
    Ok(verdicts)
}

fn table4(p: &Pipeline, out: &mut ArtifactDir) -> Result<Vec<Verdict>> {
    let seed = p.cfg.stage_seed("calibrate");
    let base = &p.cfg.calibrate;
    let dual_cfg = CombineConfig {
        scheme: Scheme::Sel,
        ..p.cfg.combine.clone()
    };
    let mut rows = vec![("original".to_string(), p.evaluate(&p.orig_preds)?)];
    for (name, kind) in [
        ("cm", LossKind::Margin),
        ("lr", LossKind::Reweight),
        ("fl", LossKind::Focal),
    ] {
        let (head, log) =
            calibrate_with_alternative(&p.train, &p.original, kind, base, false, seed)
                .map_err(Error::in_stage("calibrate"))?;
        p.save_head(&head, &log, name, out)?;
        let preds = predict(&head, &p.eval)?;
        rows.push((
            name.to_string(),
            p.evaluate(&p.combine(&preds, &dual_cfg)?)?,
        ));
    }
    let is_cfg = CalibConfig {
        sampling: CalSampling::RepeatFactor,
        ..base.clone()
    };
    let is_preds = p.calibrate(&is_cfg, "is", out)?;
    rows.push(("is".into(), p.evaluate(&p.combine(&is_preds, &dual_cfg)?)?));
    let ours = p.calibrate(base, "bilevel", out)?;
    rows.push(("bilevel".into(), p.evaluate(&p.combine(&ours, &dual_cfg)?)?));

    let ap1 = |name: &str| {
        rows.iter()
            .find(|(n, _)| n == name)
            .map_or(f64::NAN, |(_, r)| r.bin(0))
    };
    let best_other = ["cm", "lr", "fl", "is"]
        .into_iter()
        .map(|n| (n, ap1(n)))
        .fold(
            ("", f64::NEG_INFINITY),
            |a, b| if b.1 > a.1 { b } else { a },
        );
    let verdicts = vec![
        Verdict::new(
            "margin_improves_ap1",
            ap1("cm") > ap1("original"),
            format!(
                "cm {:.2} vs original {:.2}",
                100.0 * ap1("cm"),
                100.0 * ap1("original")
            ),
        ),
        Verdict::at_least(
            "bilevel_calibration_best_ap1",
            "bilevel",
            ap1("bilevel"),
            best_other.0,
            best_other.1,
        ),
    ];
    write_reports(out, &rows)?;
    Ok(verdicts)
}

fn table7(p: &Pipeline, out: &mut ArtifactDir) -> Result<Vec<Verdict>> {
    let cal = p.calibrate(&p.cfg.calibrate, "calibrated", out)?;
    let mut rows = Vec::new();
    for scheme in Scheme::ALL {
        let cfg = CombineConfig {
            scheme,
            ..p.cfg.combine.clone()
        };
        rows.push((
            scheme.name().to_string(),
            p.evaluate(&p.combine(&cal, &cfg)?)?,
        ));
    }
    let ap = |name: &str| {
        rows.iter()
            .find(|(n, _)| n == name)
            .map_or(f64::NAN, |(_, r)| r.overall_ap)
    };
    let verdicts = vec![
        Verdict::at_least("sel_at_least_avg", "sel", ap("sel"), "avg", ap("avg")),
        Verdict::at_least("avg_at_least_orig", "avg", ap("avg"), "orig", ap("orig")),
        Verdict::at_least(
            "sel_at_least_cal_only",
            "sel",
            ap("sel"),
            "cal-only",
            ap("cal-only"),
        ),
    ];
    write_reports(out, &rows)?;
    Ok(verdicts)
}

fn fig4a(p: &Pipeline, out: &mut ArtifactDir) -> Result<Vec<Verdict>> {
    let grid = SweepGrid::default_cal_steps(p.cfg.calibrate.schedule.total_steps);
    let rows = p.sweep(&grid)?;
    write_sweep(out, grid.kind(), &rows)?;
    let ok = ok_rows(&rows)?;
    let tail: Vec<f64> = ok.iter().map(|(_, cal, _)| cal.bin(0)).collect();
    let (first, last) = (ok[0].1, ok[ok.len() - 1].1);
    Ok(vec![
        Verdict::new(
            "tail_ap_rises",
            last.bin(0) > first.bin(0),
            format!(
                "ap1 {:.2} at step {} -> {:.2}",
                100.0 * first.bin(0),
                ok[0].0,
                100.0 * last.bin(0)
            ),
        ),
        Verdict::new(
            "head_ap_falls",
            last.bin(3) < first.bin(3),
            format!(
                "ap4 {:.2} at step {} -> {:.2}",
                100.0 * first.bin(3),
                ok[0].0,
                100.0 * last.bin(3)
            ),
        ),
        Verdict::new(
            "tail_ap_plateaus",
            has_plateau(&tail, 0.01),
            format!(
                "ap1 series {}",
                tail.iter()
                    .map(|v| format!("{:.2}", 100.0 * v))
                    .collect::<Vec<_>>()
                    .join(" ")
            ),
        ),
    ])
}

fn fig4b(p: &Pipeline, out: &mut ArtifactDir) -> Result<Vec<Verdict>> {
    let grid = SweepGrid::default_head_init();
    let rows = p.sweep(&grid)?;
    write_sweep(out, grid.kind(), &rows)?;
    let ok = ok_rows(&rows)?;
    let tail = |name: &str| {
        ok.iter()
            .find(|(v, _, _)| *v == name)
            .map_or(f64::NAN, |(_, _, dual)| dual.bin(0) + dual.bin(1))
    };
    Ok(vec![Verdict::at_least(
        "3fc_ft_beats_3fc_rand_on_tail",
        "3fc_ft ap1+ap2",
        tail(HeadInit::ThreeFcFt.name()),
        "3fc_rand ap1+ap2",
        tail(HeadInit::ThreeFcRand.name()),
    )])
}

fn fig4c(p: &Pipeline, out: &mut ArtifactDir) -> Result<Vec<Verdict>> {
    let grid = SweepGrid::default_t();
    let rows = p.sweep(&grid)?;
    write_sweep(out, grid.kind(), &rows)?;
    let ok = ok_rows(&rows)?;
    let ts = default_t_grid();
    let dual: Vec<f64> = ok.iter().map(|(_, _, d)| d.overall_ap).collect();
    let cal_ap = ok[0].1.overall_ap;
    let orig_ap = p.evaluate(&p.orig_preds)?.overall_ap;
    let n = dual.len();
    let middle = &dual[n / 4..n - n / 4];
    let spread = middle.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - middle.iter().copied().fold(f64::INFINITY, f64::min);
    let best = dual.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mid_range: Vec<f64> = ts
        .iter()
        .zip(&dual)
        .filter(|(t, _)| (90..=500).contains(*t))
        .map(|(_, &ap)| ap)
        .collect();
    let worst_mid = mid_range.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(vec![
        Verdict::new(
            "plateau_over_middle_half",
            spread < 0.02,
            format!(
                "dual ap spread {:.2} over T in [{}, {}]",
                100.0 * spread,
                ts[n / 4],
                ts[n - n / 4 - 1]
            ),
        ),
        Verdict::new(
            "best_t_beats_single_heads",
            best > cal_ap && best > orig_ap,
            format!(
                "best dual {:.2}, calibrated {:.2}, original {:.2}",
                100.0 * best,
                100.0 * cal_ap,
                100.0 * orig_ap
            ),
        ),
        Verdict::new(
            "mid_range_t_near_optimal",
            best - worst_mid <= 0.005,
            format!(
                "worst dual ap for T in [90, 500] is {:.2} below the best",
                100.0 * (best - worst_mid)
            ),
        ),
    ])
}

fn table8(p: &Pipeline, out: &mut ArtifactDir) -> Result<Vec<Verdict>> {
    let grid = SweepGrid::default_lr();
    let rows = p.sweep(&grid)?;
    write_sweep(out, grid.kind(), &rows)?;
    let orig = p.evaluate(&p.orig_preds)?.overall_ap;
    let failed = rows.iter().filter(|r| r.outcome.is_err()).count();
    let worst = ok_rows(&rows)?
        .iter()
        .map(|(v, _, d)| (*v, d.overall_ap))
        .fold(("", f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
    Ok(vec![
        Verdict::new(
            "all_rates_completed",
            failed == 0 && rows.len() == grid.len(),
            format!("{} rows, {failed} failed", rows.len()),
        ),
        Verdict::at_least(
            "every_rate_beats_original",
            &format!("worst dual (lr {})", worst.0),
            worst.1,
            "original",
            orig,
        ),
    ])
}

fn table9(p: &Pipeline, out: &mut ArtifactDir) -> Result<Vec<Verdict>> {
    let grid = SweepGrid::default_layers();
    let rows = p.sweep(&grid)?;
    write_sweep(out, grid.kind(), &rows)?;
    let orig = p.evaluate(&p.orig_preds)?.overall_ap;
    let ok = ok_rows(&rows)?;
    let ap = |name: &str| {
        ok.iter()
            .find(|(v, _, _)| *v == name)
            .map_or(f64::NAN, |(_, _, d)| d.overall_ap)
    };
    let worst = CalibLayers::ALL
        .iter()
        .map(|l| (l.name(), ap(l.name())))
        .fold(("", f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
    Ok(vec![Verdict::at_least(
        "every_layer_choice_beats_original",
        &format!("worst dual ({})", worst.0),
        worst.1,
        "original",
        orig,
    )])
}
