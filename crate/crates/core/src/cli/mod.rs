//! Command-line driver: verification suites, the ablation protocol, single
//! training runs, evaluation and scene dumps.
//!
//! Every command is a pure function of its arguments and config file, so
//! rerunning it rewrites byte-identical files.

pub mod config;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::evalmetrics::{compute_metrics, MetricReport};
use crate::identify::{differential_map, identify, RegConfig};
use crate::regloss::{reg_loss, si_loss};
use crate::tensorgrid::{io, shift2d_g1, SeedRng};
use crate::toybench::train::{batch_loss, eval_scenes, evaluate, train_run, TrainRecord};
use crate::toybench::{gen_scene, ToyModel};
use crate::verify::gradcheck::{check_model, check_reg_loss, check_si_loss, BatchLossFn, SiLossFn};
use crate::verify::oracle::{check_metrics_oracle, check_reg_oracle, MetricsFn, RegLossFn};
use crate::verify::GradReport;

pub use config::{ExperimentConfig, NamedStrategy, Sweep};

/// Relative tolerance of the oracle comparisons.
pub const ORACLE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Parser)]
#[command(
    name = "metricdepth",
    version,
    about = "Depth-differential feature regularization experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Finite-difference check of the loss and model gradients.
    Gradcheck {
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 1e-5)]
        tolerance: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Compare the loss and metrics against brute-force references.
    Oracle {
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Train every configured strategy on every seed and summarize.
    Ablate(RunArgs),
    /// Train one strategy.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Strategy name from the config; defaults to the last one listed.
        #[arg(long)]
        strategy: Option<String>,
    },
    /// Metrics of a saved model on the held-out scenes, or of a predicted
    /// depth map against ground truth.
    Eval(EvalArgs),
    /// Write synthetic scenes and their label maps for inspection.
    GenScenes {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        count: usize,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run only this seed instead of the configured list.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Model JSON written by `train` or `ablate`.
    #[arg(long, conflicts_with_all = ["pred", "gt"], required_unless_present = "pred")]
    pub model: Option<PathBuf>,
    /// Predicted depth (PFM).
    #[arg(long, requires = "gt")]
    pub pred: Option<PathBuf>,
    /// Ground-truth depth (PFM).
    #[arg(long, requires = "pred")]
    pub gt: Option<PathBuf>,
    /// Validity mask of the ground truth ('0'/'1' bytes).
    #[arg(long, requires = "gt")]
    pub gt_mask: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// The functions the verification commands exercise.
#[derive(Clone, Copy)]
pub struct Suites<'a> {
    pub reg_loss: RegLossFn<'a>,
    pub si_loss: SiLossFn<'a>,
    pub batch_loss: BatchLossFn<'a>,
    pub metrics: MetricsFn<'a>,
}

impl Suites<'static> {
    pub fn library() -> Self {
        Self {
            reg_loss: &reg_loss,
            si_loss: &si_loss,
            batch_loss: &batch_loss,
            metrics: &compute_metrics,
        }
    }
}

/// Runs `cli`, writing the human-readable report to `out`. `Ok(false)` means
/// the command ran but a check failed.
pub fn run(cli: &Cli, suites: &Suites, out: &mut dyn Write) -> Result<bool> {
    match &cli.command {
        Command::Gradcheck {
            trials,
            tolerance,
            seed,
        } => cmd_gradcheck(*trials, *tolerance, *seed, suites, out),
        Command::Oracle { trials, seed } => cmd_oracle(*trials, *seed, suites, out),
        Command::Ablate(args) => cmd_ablate(args, out),
        Command::Train { run, strategy } => cmd_train(run, strategy.as_deref(), out),
        Command::Eval(args) => cmd_eval(args, out),
        Command::GenScenes {
            config,
            out: dir,
            seed,
            count,
        } => cmd_gen_scenes(config.as_deref(), dir, *seed, *count, out),
    }
}

fn say(out: &mut dyn Write, line: String) -> Result<()> {
    writeln!(out, "{line}").map_err(|e| Error::io("<stdout>", e))
}

fn grad_line(name: &str, r: &GradReport, tolerance: f64) -> String {
    format!(
        "{name:<10} checked {:>6} skipped {:>4} max_rel_err {:.3e} {}",
        r.checked,
        r.skipped,
        r.max_rel_err,
        if r.passed(tolerance) { "ok" } else { "FAIL" }
    )
}

pub fn cmd_gradcheck(
    trials: usize,
    tolerance: f64,
    seed: u64,
    suites: &Suites,
    out: &mut dyn Write,
) -> Result<bool> {
    let reg = check_reg_loss(trials, seed, suites.reg_loss)?;
    let si = check_si_loss(trials, seed.wrapping_add(1), suites.si_loss)?;
    let model = check_model(seed, &RegConfig::uniform(0.1, 0.5, 4.0), suites.batch_loss)?
        .merge(check_model(seed, &RegConfig::default(), suites.batch_loss)?);
    say(out, grad_line("reg_loss", &reg, tolerance))?;
    say(out, grad_line("si_loss", &si, tolerance))?;
    say(out, grad_line("model", &model, tolerance))?;
    let worst = reg.merge(si).merge(model);
    say(
        out,
        format!(
            "max relative error {:.3e} (tolerance {tolerance:e})",
            worst.max_rel_err
        ),
    )?;
    Ok([reg, si, model].iter().all(|r| r.passed(tolerance)))
}

pub fn cmd_oracle(trials: usize, seed: u64, suites: &Suites, out: &mut dyn Write) -> Result<bool> {
    if trials == 0 {
        eprintln!("warning: --trials 0 compares nothing");
    }
    let reg = check_reg_oracle(trials, seed, ORACLE_TOLERANCE, suites.reg_loss)?;
    let metrics = check_metrics_oracle(
        trials,
        seed.wrapping_add(1),
        ORACLE_TOLERANCE,
        suites.metrics,
    )?;
    for (name, r) in [("reg_loss", &reg), ("metrics", &metrics)] {
        say(
            out,
            format!(
                "{name:<10} compared {:>6} mismatches {:>4} max_rel_err {:.3e} {}",
                r.compared,
                r.mismatches,
                r.max_rel_err,
                if r.passed() { "ok" } else { "FAIL" }
            ),
        )?;
    }
    Ok(reg.passed() && metrics.passed())
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

fn load_run_config(args: &RunArgs) -> Result<(ExperimentConfig, PathBuf)> {
    let mut config = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.schedule.seeds = vec![seed];
    }
    let dir = args
        .out
        .clone()
        .unwrap_or_else(|| config.output_dir.clone());
    Ok((config, dir))
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub strategy: String,
    pub seed: u64,
    pub abs_rel: f64,
    pub separation: f64,
    pub initial_abs_rel: f64,
    pub initial_separation: f64,
    pub final_metrics: MetricReport,
    pub mean_ignored_fraction: f64,
    pub diverged_at: Option<usize>,
}

fn summarize(strategy: &str, record: &TrainRecord) -> RunSummary {
    let first = record.initial_eval().expect("runs evaluate at step 0");
    let last = record.final_eval().expect("runs evaluate at step 0");
    let n = record.steps.len().max(1) as f64;
    RunSummary {
        strategy: strategy.to_string(),
        seed: record.seed,
        abs_rel: last.metrics.abs_rel,
        separation: last.separation,
        initial_abs_rel: first.metrics.abs_rel,
        initial_separation: first.separation,
        final_metrics: last.metrics,
        mean_ignored_fraction: record.steps.iter().map(|s| s.ignored_fraction).sum::<f64>() / n,
        diverged_at: record.divergence.map(|d| d.step),
    }
}

/// Trains `reg` on one seed and writes the run directory.
fn run_one(
    config: &ExperimentConfig,
    name: &str,
    reg: &RegConfig,
    seed: u64,
    dir: &Path,
) -> Result<RunSummary> {
    let record = train_run(&config.setup(reg), seed)?;
    let summary = summarize(name, &record);
    write_file(&dir.join("steps.csv"), &record.steps_csv())?;
    write_file(&dir.join("evals.csv"), &record.evals_csv())?;
    write_file(&dir.join("model.json"), &to_json(&record.model))?;
    write_file(&dir.join("run.json"), &to_json(&summary))?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct StrategySummary {
    pub name: String,
    pub mean_abs_rel: f64,
    pub mean_separation: f64,
    /// Seeds on which this strategy's final AbsRel is below the first
    /// strategy's.
    pub abs_rel_wins_vs_first: usize,
    /// Seeds on which this strategy's separation exceeds the first
    /// strategy's.
    pub separation_wins_vs_first: usize,
    pub runs: Vec<RunSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub n_within: usize,
    pub n_across: usize,
    pub mean_abs_rel: f64,
    pub mean_separation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationSummary {
    pub seeds: Vec<u64>,
    pub strategies: Vec<StrategySummary>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub sweep_n_within: Vec<SweepPoint>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub sweep_n_across: Vec<SweepPoint>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

fn plot_data(label: &str, points: &[SweepPoint], x: fn(&SweepPoint) -> usize) -> String {
    let mut s = format!("# {label} mean_abs_rel\n");
    for p in points {
        s.push_str(&format!("{} {}\n", x(p), p.mean_abs_rel));
    }
    s
}

/// Runs the ablation protocol and returns its summary.
pub fn ablate(config: &ExperimentConfig, dir: &Path) -> Result<AblationSummary> {
    write_file(&dir.join("config.json"), &config.to_json())?;
    let seeds = config.schedule.seeds.clone();
    let mut strategies: Vec<StrategySummary> = Vec::new();
    let mut csv = format!(
        "strategy,seed,{},separation,diverged_at\n",
        MetricReport::CSV_HEADER
    );
    for s in &config.strategies {
        let mut runs = Vec::new();
        for &seed in &seeds {
            eprintln!("ablate: {} seed {seed}", s.name);
            let run_dir = dir.join("runs").join(&s.name).join(format!("seed_{seed}"));
            let r = run_one(config, &s.name, &s.reg, seed, &run_dir)?;
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                s.name,
                seed,
                r.final_metrics.csv_row(),
                r.separation,
                r.diverged_at.map(|v| v.to_string()).unwrap_or_default()
            ));
            runs.push(r);
        }
        let (abs_wins, sep_wins) = match strategies.first() {
            Some(first) => (
                runs.iter()
                    .zip(&first.runs)
                    .filter(|(a, b)| a.abs_rel < b.abs_rel)
                    .count(),
                runs.iter()
                    .zip(&first.runs)
                    .filter(|(a, b)| a.separation > b.separation)
                    .count(),
            ),
            None => (0, 0),
        };
        strategies.push(StrategySummary {
            name: s.name.clone(),
            mean_abs_rel: mean(runs.iter().map(|r| r.abs_rel)),
            mean_separation: mean(runs.iter().map(|r| r.separation)),
            abs_rel_wins_vs_first: abs_wins,
            separation_wins_vs_first: sep_wins,
            runs,
        });
    }
    write_file(&dir.join("summary.csv"), &csv)?;

    let mut summary = AblationSummary {
        seeds: seeds.clone(),
        strategies,
        sweep_n_within: Vec::new(),
        sweep_n_across: Vec::new(),
    };
    if let Some(sweep) = &config.sweep {
        let base = config.strategy(&sweep.strategy)?;
        let grids = [
            ("n_within", &sweep.n_within, true),
            ("n_across", &sweep.n_across, false),
        ];
        for (label, values, within) in grids {
            let mut points = Vec::new();
            for &n in values {
                let reg = if within {
                    base.reg.clone().with_counts(n, base.reg.n_across)
                } else {
                    base.reg.clone().with_counts(base.reg.n_within, n)
                };
                let mut runs = Vec::new();
                for &seed in &seeds {
                    eprintln!("ablate: sweep {label}={n} seed {seed}");
                    let run_dir = dir
                        .join("sweep")
                        .join(format!("{label}_{n}"))
                        .join(format!("seed_{seed}"));
                    runs.push(run_one(config, &base.name, &reg, seed, &run_dir)?);
                }
                points.push(SweepPoint {
                    n_within: reg.n_within,
                    n_across: reg.n_across,
                    mean_abs_rel: mean(runs.iter().map(|r| r.abs_rel)),
                    mean_separation: mean(runs.iter().map(|r| r.separation)),
                });
            }
            if within {
                write_file(
                    &dir.join("plot_abs_rel_vs_n_within.dat"),
                    &plot_data(label, &points, |p| p.n_within),
                )?;
                summary.sweep_n_within = points;
            } else {
                write_file(
                    &dir.join("plot_abs_rel_vs_n_across.dat"),
                    &plot_data(label, &points, |p| p.n_across),
                )?;
                summary.sweep_n_across = points;
            }
        }
    }
    write_file(&dir.join("summary.json"), &to_json(&summary))?;
    Ok(summary)
}

pub fn cmd_ablate(args: &RunArgs, out: &mut dyn Write) -> Result<bool> {
    let (config, dir) = load_run_config(args)?;
    let summary = ablate(&config, &dir)?;
    say(
        out,
        format!(
            "{:<16} {:>12} {:>12} {:>6}",
            "strategy", "abs_rel", "separation", "wins"
        ),
    )?;
    for s in &summary.strategies {
        say(
            out,
            format!(
                "{:<16} {:>12.6} {:>12.4} {:>6}",
                s.name, s.mean_abs_rel, s.mean_separation, s.abs_rel_wins_vs_first
            ),
        )?;
    }
    say(out, format!("wrote {}", dir.display()))?;
    let diverged = summary
        .strategies
        .iter()
        .flat_map(|s| &s.runs)
        .any(|r| r.diverged_at.is_some());
    Ok(!diverged)
}

pub fn cmd_train(args: &RunArgs, strategy: Option<&str>, out: &mut dyn Write) -> Result<bool> {
    let (config, dir) = load_run_config(args)?;
    let chosen = match strategy {
        Some(name) => config.strategy(name)?,
        None => config
            .strategies
            .last()
            .expect("validated config has strategies"),
    };
    let mut ok = true;
    for &seed in &config.schedule.seeds {
        let r = run_one(
            &config,
            &chosen.name,
            &chosen.reg,
            seed,
            &dir.join(format!("seed_{seed}")),
        )?;
        say(
            out,
            format!(
                "{} seed {seed}: abs_rel {:.6} -> {:.6}, separation {:.4} -> {:.4}",
                chosen.name, r.initial_abs_rel, r.abs_rel, r.initial_separation, r.separation
            ),
        )?;
        if let Some(step) = r.diverged_at {
            say(out, format!("diverged at step {step}"))?;
            ok = false;
        }
    }
    Ok(ok)
}

pub fn cmd_eval(args: &EvalArgs, out: &mut dyn Write) -> Result<bool> {
    let mut csv = format!("scene,{}\n", MetricReport::CSV_HEADER);
    if let (Some(pred), Some(gt)) = (&args.pred, &args.gt) {
        let pred = io::read_depth(pred, None)?;
        let gt = io::read_depth(gt, args.gt_mask.as_deref())?;
        let r = compute_metrics(&pred, &gt)?;
        csv.push_str(&format!("0,{}\n", r.csv_row()));
    } else {
        let path = args
            .model
            .as_ref()
            .expect("clap requires --model without --pred");
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: ToyModel = serde_json::from_str(&text).map_err(|e| Error::ConfigParse {
            path: path.clone(),
            line: e.line(),
            column: e.column(),
            msg: e.to_string(),
        })?;
        let model = ToyModel::from_params(model.config, model.params)?;
        let config = match &args.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        let setup = config.setup(&RegConfig::disabled());
        let scenes = eval_scenes(&setup)?;
        for (k, s) in scenes.iter().enumerate() {
            let (_, pred, _) = model.forward(&s.image)?;
            csv.push_str(&format!(
                "{k},{}\n",
                compute_metrics(&pred, &s.depth)?.csv_row()
            ));
        }
        let (mean, separation) = evaluate(&model, &scenes, &config.separation)?;
        csv.push_str(&format!("mean,{}\n", mean.csv_row()));
        say(out, format!("separation {separation}"))?;
    }
    if let Some(dir) = &args.out {
        write_file(&dir.join("metrics.csv"), &csv)?;
    }
    write!(out, "{csv}").map_err(|e| Error::io("<stdout>", e))?;
    Ok(true)
}

pub fn cmd_gen_scenes(
    config: Option<&Path>,
    dir: &Path,
    seed: u64,
    count: usize,
    out: &mut dyn Write,
) -> Result<bool> {
    let config = match config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let mut rng = SeedRng::new(seed);
    let mut listing = String::from("scene,seed,depth_min,depth_max\n");
    for k in 0..count {
        let scene = gen_scene(rng.next_u64(), &config.scene)?;
        let stem = format!("scene_{k:03}");
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        io::write_pfm_g3(&dir.join(format!("{stem}_image.pfm")), &scene.image)?;
        io::write_depth(
            &dir.join(format!("{stem}_depth.pfm")),
            &dir.join(format!("{stem}_depth.mask")),
            &scene.depth,
        )?;
        // one within-map sample per scene, labelled under each strategy
        let (h, w) = scene.depth.shape();
        let s_h = crate::tensorgrid::gen_shift_seed(&mut rng, h)?;
        let s_w = crate::tensorgrid::gen_shift_seed(&mut rng, w)?;
        let d_r = differential_map(&scene.depth, &shift2d_g1(&scene.depth, s_h, s_w)?)?;
        for s in config.strategies.iter().filter(|s| s.reg.is_enabled()) {
            identify(&d_r, &s.reg)?
                .write_pgm(&dir.join(format!("{stem}_{}_labels.pgm", s.name)))?;
        }
        let (lo, hi) = scene
            .depth
            .values()
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        listing.push_str(&format!("{k},{},{lo},{hi}\n", scene.seed));
    }
    write_file(&dir.join("scenes.csv"), &listing)?;
    say(out, format!("wrote {count} scenes to {}", dir.display()))?;
    Ok(true)
}
