use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

use ltcal_core::combine::{batch_combine, CombineConfig, Scheme};
use ltcal_core::config::RunConfig;
use ltcal_core::eval::{compare, evaluate, reports_csv, reports_table, EvalReport, ScoredProposal};
use ltcal_core::head::HeadParams;
use ltcal_core::repro::{run_experiment, Experiment};
use ltcal_core::sweep::{sweep, sweep_csv, SweepContext, SweepGrid};
use ltcal_core::synth::{generate, generate_eval, summarize, SynthDataset};
use ltcal_core::trainer::{calibrate, predict, train_standard};

/// Long-tail classifier calibration experiments on synthetic frozen features.
#[derive(Debug, Parser)]
#[command(name = "ltcal", version, about)]
struct Cli {
    /// TOML run configuration; defaults apply to every missing key.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory [default: `out_dir` from the configuration, else `runs`].
    #[arg(long, global = true, env = "LTCAL_OUT")]
    out: Option<PathBuf>,

    /// Root seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Only print errors.
    #[arg(long, short, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the training and evaluation datasets.
    Synth,
    /// Train the original head on a dataset.
    Train {
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Calibrate a trained head with bi-level sampling.
    Calibrate {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        head: PathBuf,
    },
    /// Evaluate one head, or combine two heads and evaluate the result.
    Eval {
        /// Training dataset; its class counts define the bins.
        #[arg(long)]
        train_dataset: PathBuf,
        #[arg(long)]
        eval_dataset: PathBuf,
        /// Single head to evaluate.
        #[arg(long, conflicts_with_all = ["cal", "orig"])]
        head: Option<PathBuf>,
        /// Calibrated head of a dual-head combination.
        #[arg(long, requires = "orig")]
        cal: Option<PathBuf>,
        /// Original head of a dual-head combination.
        #[arg(long, requires = "cal")]
        orig: Option<PathBuf>,
        /// Combination scheme, overriding the configuration.
        #[arg(long, value_parser = parse_scheme)]
        scheme: Option<Scheme>,
    },
    /// Compare reports against the first one.
    Compare {
        #[arg(required = true, num_args = 2..)]
        reports: Vec<PathBuf>,
        /// Allowed drop of the highest bin, on the 0..1 scale.
        #[arg(long, default_value_t = 0.0)]
        head_tolerance: f64,
    },
    /// Sweep one calibration knob.
    Ablate {
        /// One of cal_steps, lr, T, layers, head_init.
        kind: String,
        /// Comma-separated grid; the kind's default grid when omitted.
        #[arg(long, default_value = "")]
        grid: String,
    },
    /// Run named experiments end to end.
    Repro {
        /// Experiment names, or `all`.
        #[arg(required = true)]
        experiments: Vec<String>,
    },
}

fn parse_scheme(s: &str) -> Result<Scheme, String> {
    Scheme::ALL
        .into_iter()
        .find(|scheme| scheme.name() == s)
        .ok_or_else(|| {
            let names: Vec<&str> = Scheme::ALL.iter().map(|s| s.name()).collect();
            format!("expected one of {}", names.join(", "))
        })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text)
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn load_dataset(path: &Path) -> Result<SynthDataset> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    SynthDataset::from_json(&text).with_context(|| format!("parsing dataset {}", path.display()))
}

fn load_head(path: &Path) -> Result<HeadParams> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    HeadParams::from_json(&text).with_context(|| format!("parsing head {}", path.display()))
}

struct App {
    cfg: RunConfig,
    out: PathBuf,
    quiet: bool,
}

impl App {
    fn say(&self, text: impl AsRef<str>) {
        if !self.quiet {
            let _ = writeln!(std::io::stdout(), "{}", text.as_ref());
        }
    }

    /// Writes the resolved configuration next to a command's outputs.
    fn emit_config(&self) -> Result<()> {
        write_file(&self.out.join("config.toml"), self.cfg.to_toml()?)
    }

    fn synth(&self) -> Result<()> {
        self.emit_config()?;
        let train = generate(&self.cfg.synth).context("synth stage")?;
        let eval = generate_eval(&self.cfg.synth).context("synth stage")?;
        write_file(&self.out.join("train_dataset.json"), train.to_json()?)?;
        write_file(&self.out.join("eval_dataset.json"), eval.to_json()?)?;
        let summary = summarize(&train)?;
        write_json(&self.out.join("summary.json"), &summary)?;
        self.say(format!(
            "train: {} images, {} proposals, sha256 {}",
            train.images.len(),
            train.proposals.len(),
            train.content_hash()?
        ));
        self.say(format!(
            "eval:  {} images, {} proposals, sha256 {}",
            eval.images.len(),
            eval.proposals.len(),
            eval.content_hash()?
        ));
        self.say(format!(
            "classes per instance bin: {:?}; unseen: {:?}",
            summary.bin_populations.instances, summary.unseen_classes
        ));
        Ok(())
    }

    fn train(&self, dataset: &Path) -> Result<()> {
        self.emit_config()?;
        let ds = load_dataset(dataset)?;
        let (head, log) = train_standard(&ds, &self.cfg.train, self.cfg.stage_seed("train"))
            .context("train stage")?;
        write_file(&self.out.join("original.json"), head.to_json()?)?;
        write_file(&self.out.join("original.jsonl"), log.to_jsonl()?)?;
        self.say(format!(
            "final loss (mean of last 100 steps): {:.4}",
            log.tail_mean(100)
        ));
        Ok(())
    }

    fn calibrate(&self, dataset: &Path, head: &Path) -> Result<()> {
        self.emit_config()?;
        let ds = load_dataset(dataset)?;
        let original = load_head(head)?;
        let (cal, log) = calibrate(
            &ds,
            &original,
            &self.cfg.calibrate,
            self.cfg.stage_seed("calibrate"),
        )
        .context("calibrate stage")?;
        write_file(&self.out.join("calibrated.json"), cal.to_json()?)?;
        write_file(&self.out.join("calibrated.jsonl"), log.to_jsonl()?)?;
        self.say(format!(
            "final loss (mean of last 100 steps): {:.4}",
            log.tail_mean(100)
        ));
        Ok(())
    }

    fn eval(
        &self,
        train_dataset: &Path,
        eval_dataset: &Path,
        head: Option<&Path>,
        pair: Option<(&Path, &Path)>,
        scheme: Option<Scheme>,
    ) -> Result<()> {
        self.emit_config()?;
        let train = load_dataset(train_dataset)?;
        let eval = load_dataset(eval_dataset)?;
        let bins = self.cfg.bins.to_eval_bins()?;
        let (label, preds): (String, Vec<ScoredProposal>) = match (head, pair) {
            (Some(head), _) => ("head".into(), predict(&load_head(head)?, &eval)?),
            (None, Some((cal, orig))) => {
                let cfg = CombineConfig {
                    scheme: scheme.unwrap_or(self.cfg.combine.scheme),
                    ..self.cfg.combine.clone()
                };
                let cal = predict(&load_head(cal)?, &eval)?;
                let orig = predict(&load_head(orig)?, &eval)?;
                let combined =
                    batch_combine(&cal, &orig, &train.stats, &cfg).context("combine stage")?;
                (cfg.scheme.name().to_string(), combined)
            }
            (None, None) => bail!("pass --head, or --cal together with --orig"),
        };
        let report = evaluate(&preds, &eval, &train.stats, &bins).context("eval stage")?;
        write_json(&self.out.join("predictions.json"), &preds)?;
        write_json(&self.out.join("report.json"), &report)?;
        write_file(
            &self.out.join("report.csv"),
            reports_csv(&[(label.clone(), &report)]),
        )?;
        self.say(reports_table(&[(label, &report)]));
        Ok(())
    }

    fn compare(&self, paths: &[PathBuf], head_tolerance: f64) -> Result<()> {
        let reports: Vec<EvalReport> = paths.iter().map(|p| read_json(p)).collect::<Result<_>>()?;
        let labels: Vec<String> = paths
            .iter()
            .map(|p| p.with_extension("").display().to_string())
            .collect();
        let base = &reports[0];
        let mut csv = String::new();
        let mut text = String::new();
        for (label, report) in labels.iter().zip(&reports).skip(1) {
            let cmp = compare(base, report, head_tolerance)
                .with_context(|| format!("comparing {label}"))?;
            if csv.is_empty() {
                let delta_names: Vec<String> =
                    cmp.names.iter().map(|n| format!("delta_{n}")).collect();
                let _ = writeln!(
                    csv,
                    "baseline,label,{},tail_improved,head_preserved,overall_improved",
                    delta_names.join(",")
                );
            }
            let deltas: Vec<String> = cmp
                .deltas
                .iter()
                .map(|d| d.map(|d| format!("{d:.6}")).unwrap_or_default())
                .collect();
            let _ = writeln!(
                csv,
                "{},{label},{},{},{},{}",
                labels[0],
                deltas.join(","),
                cmp.tail_improved,
                cmp.head_preserved,
                cmp.overall_improved
            );
            let _ = writeln!(
                text,
                "{label} vs {}: tail improved {}, head preserved {}, overall improved {}",
                labels[0], cmp.tail_improved, cmp.head_preserved, cmp.overall_improved
            );
        }
        write_file(&self.out.join("comparison.csv"), &csv)?;
        let rows: Vec<(String, &EvalReport)> = labels.iter().cloned().zip(&reports).collect();
        self.say(reports_table(&rows));
        self.say(text.trim_end());
        Ok(())
    }

    fn ablate(&self, kind: &str, grid: &str) -> Result<()> {
        let grid = SweepGrid::parse(kind, grid, self.cfg.calibrate.schedule.total_steps)?;
        self.emit_config()?;
        let train = generate(&self.cfg.synth).context("synth stage")?;
        let eval = generate_eval(&self.cfg.synth).context("synth stage")?;
        let (original, _) = train_standard(&train, &self.cfg.train, self.cfg.stage_seed("train"))
            .context("train stage")?;
        let bins = self.cfg.bins.to_eval_bins()?;
        let ctx = SweepContext {
            train: &train,
            eval: &eval,
            original: &original,
            calib: &self.cfg.calibrate,
            combine: &self.cfg.combine,
            bins: &bins,
            seed: self.cfg.stage_seed("calibrate"),
        };
        let rows = sweep(&grid, &ctx).context("sweep stage")?;
        let csv = sweep_csv(grid.kind(), &rows);
        write_file(&self.out.join(format!("ablate_{}.csv", grid.kind())), &csv)?;
        self.say(csv.trim_end());
        let failed = rows.iter().filter(|r| r.outcome.is_err()).count();
        if failed > 0 {
            bail!("{failed} of {} grid points failed", rows.len());
        }
        Ok(())
    }

    /// Returns whether every verdict of every experiment held.
    fn repro(&self, names: &[String]) -> Result<bool> {
        let experiments: Vec<Experiment> = if names.iter().any(|n| n == "all") {
            Experiment::ALL.to_vec()
        } else {
            names.iter().map(|n| n.parse()).collect::<Result<_, _>>()?
        };
        let mut all_held = true;
        for experiment in experiments {
            let outcome = run_experiment(experiment, &self.cfg, &self.out)
                .with_context(|| format!("experiment {experiment} (partial outputs kept)"))?;
            self.say(format!("{experiment}: {}", outcome.dir.display()));
            for v in &outcome.verdicts {
                self.say(format!(
                    "  [{}] {}: {}",
                    if v.held { "held" } else { "FAILED" },
                    v.name,
                    v.detail
                ));
            }
            all_held &= outcome.all_held();
        }
        Ok(all_held)
    }
}

fn run(cli: Cli) -> Result<bool> {
    let mut cfg = match &cli.config {
        Some(path) => {
            RunConfig::load(path).with_context(|| format!("loading {}", path.display()))?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("runs"));
    let app = App {
        cfg: cfg.resolved(),
        out,
        quiet: cli.quiet,
    };
    match &cli.command {
        Command::Synth => app.synth()?,
        Command::Train { dataset } => app.train(dataset)?,
        Command::Calibrate { dataset, head } => app.calibrate(dataset, head)?,
        Command::Eval {
            train_dataset,
            eval_dataset,
            head,
            cal,
            orig,
            scheme,
        } => app.eval(
            train_dataset,
            eval_dataset,
            head.as_deref(),
            cal.as_deref().zip(orig.as_deref()),
            *scheme,
        )?,
        Command::Compare {
            reports,
            head_tolerance,
        } => app.compare(reports, *head_tolerance)?,
        Command::Ablate { kind, grid } => app.ablate(kind, grid)?,
        Command::Repro { experiments } => return app.repro(experiments),
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(if cli.quiet {
        "error"
    } else {
        "warn"
    }))
    .init();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
