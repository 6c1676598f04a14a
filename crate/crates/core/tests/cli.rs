use std::path::Path;
use std::process::Command;

use metricdepth::cli::{run, Cli, ExperimentConfig, Suites, Sweep};
use metricdepth::identify::{differential_map, identify, Label, RegConfig};
use metricdepth::regloss::reg_loss;
use metricdepth::sampling::SampleSet;
use metricdepth::tensorgrid::{io, Grid1, Grid3, SeedRng};
use metricdepth::toybench::gen_scene;
use metricdepth::Result;

use clap::Parser;

fn exe() -> Command {
    Command::new(env!("CARGO_BIN_EXE_metricdepth"))
}

fn run_with(args: &[&str], suites: &Suites) -> Result<bool> {
    let cli =
        Cli::try_parse_from(std::iter::once("metricdepth").chain(args.iter().copied())).unwrap();
    run(&cli, suites, &mut Vec::new())
}

fn tiny_config(dir: &Path) -> std::path::PathBuf {
    let mut c = ExperimentConfig::default();
    c.scene.height = 12;
    c.scene.width = 12;
    c.schedule.steps = 4;
    c.schedule.eval_every = 0;
    c.schedule.train_scenes = 6;
    c.schedule.eval_scenes = 2;
    c.separation.pairs = 128;
    let path = dir.join("tiny.json");
    std::fs::write(&path, c.to_json()).unwrap();
    path
}

/// The reg loss with the hinge gradient pushing the wrong way.
fn flipped_hinge(
    f: &Grid3,
    d: &Grid1,
    s: &SampleSet,
    c: &RegConfig,
) -> Result<metricdepth::regloss::LossResult> {
    let mut r = reg_loss(f, d, s, c)?;
    let norm = r.contributing_count.max(1) as f64;
    let scale = match c.loss_reduction {
        metricdepth::identify::LossReduction::Sum => 1.0,
        metricdepth::identify::LossReduction::MeanOverContributing => 1.0 / norm,
    };
    let ch = f.channels();
    let mut ga = r.grad_anchor.data().to_vec();
    for (n, pair) in s.iter().enumerate() {
        let labels = identify(&differential_map(d, &pair.depth)?, c)?;
        let mut gs = r.grad_samples[n].data().to_vec();
        for (p, label) in labels.labels().iter().enumerate() {
            let Label::Negative(j) = *label else { continue };
            let (fa, fs) = (f.pixel(p), pair.feature.pixel(p));
            let dist = fa
                .iter()
                .zip(fs)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if dist == 0.0 || dist >= c.margin(j).unwrap() {
                continue;
            }
            for k in 0..ch {
                let g = 2.0 * scale * (fa[k] - fs[k]) / dist;
                ga[p * ch + k] += g;
                gs[p * ch + k] -= g;
            }
        }
        r.grad_samples[n] = Grid3::new(f.height(), f.width(), ch, gs)?;
    }
    r.grad_anchor = Grid3::new(f.height(), f.width(), ch, ga)?;
    Ok(r)
}

#[test]
fn gradcheck_passes_and_catches_a_flipped_hinge() {
    assert!(run_with(&["gradcheck", "--trials", "20"], &Suites::library()).unwrap());
    let mutated = Suites {
        reg_loss: &flipped_hinge,
        ..Suites::library()
    };
    assert!(!run_with(&["gradcheck", "--trials", "20"], &mutated).unwrap());
    assert!(!run_with(
        &["gradcheck", "--trials", "3", "--tolerance", "0"],
        &Suites::library()
    )
    .unwrap());
}

#[test]
fn gradcheck_binary_exit_codes() {
    assert!(exe().args(["gradcheck"]).output().unwrap().status.success());
    let out = exe()
        .args(["gradcheck", "--trials", "2", "--tolerance", "0"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("max relative error"));
}

#[test]
fn oracle_passes_catches_a_shifted_threshold_and_accepts_zero_trials() {
    assert!(run_with(&["oracle"], &Suites::library()).unwrap());
    let shifted = |f: &Grid3, d: &Grid1, s: &SampleSet, c: &RegConfig| {
        let mut c = c.clone();
        c.r_p *= 2.0;
        reg_loss(f, d, s, &c)
    };
    let mutated = Suites {
        reg_loss: &shifted,
        ..Suites::library()
    };
    assert!(!run_with(&["oracle"], &mutated).unwrap());
    let out = exe().args(["oracle", "--trials", "0"]).output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
}

#[test]
fn missing_config_fails_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    for cmd in ["ablate", "train"] {
        let out = exe()
            .args([
                cmd,
                "--config",
                "does/not/exist.json",
                "--out",
                out_dir.to_str().unwrap(),
            ])
            .output()
            .unwrap();
        assert!(!out.status.success());
        assert!(String::from_utf8_lossy(&out.stderr).contains("exist.json"));
        assert!(!out_dir.exists());
    }
}

#[test]
fn bad_config_reports_line_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{\n  \"schedule\": {\n    \"steps\": -3\n  }\n}\n").unwrap();
    let out = exe()
        .args(["ablate", "--config", path.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.json:3:"), "{err}");
}

#[test]
fn ablate_writes_one_directory_per_run_and_sweep_plots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let mut c = ExperimentConfig::load(&cfg).unwrap();
    c.sweep = Some(Sweep {
        strategy: "multi_range".into(),
        n_within: vec![5, 10, 15, 20, 25],
        n_across: vec![],
    });
    c.schedule.steps = 1;
    std::fs::write(&cfg, c.to_json()).unwrap();
    let out = dir.path().join("ablation");
    assert!(run_with(
        &[
            "ablate",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap()
        ],
        &Suites::library()
    )
    .unwrap());

    let runs: Vec<_> = ["baseline", "uniform", "multi_range"]
        .iter()
        .flat_map(|s| (1..=5).map(move |k| format!("runs/{s}/seed_{k}")))
        .collect();
    assert_eq!(runs.len(), 15);
    for r in &runs {
        for f in ["steps.csv", "evals.csv", "model.json", "run.json"] {
            assert!(out.join(r).join(f).is_file(), "{r}/{f}");
        }
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let names: Vec<&str> = summary["strategies"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["name"].as_str().unwrap())
        .collect();
    assert_eq!(names, ["baseline", "uniform", "multi_range"]);
    assert!(summary["strategies"][2]["mean_abs_rel"].as_f64().unwrap() > 0.0);
    let plot = std::fs::read_to_string(out.join("plot_abs_rel_vs_n_within.dat")).unwrap();
    let xs: Vec<&str> = plot
        .lines()
        .skip(1)
        .map(|l| l.split(' ').next().unwrap())
        .collect();
    assert_eq!(xs, ["5", "10", "15", "20", "25"]);
    assert_eq!(
        std::fs::read_to_string(out.join("summary.csv"))
            .unwrap()
            .lines()
            .count(),
        16
    );
    let back = ExperimentConfig::load(&out.join("config.json")).unwrap();
    assert_eq!(back, c);
}

#[test]
fn train_then_eval_the_saved_model() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = dir.path().join("train");
    let status = exe()
        .args([
            "train",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--seed",
            "9",
        ])
        .args(["--strategy", "uniform"])
        .output()
        .unwrap()
        .status;
    assert!(status.success());
    let model = out.join("seed_9/model.json");
    let eval_out = dir.path().join("eval");
    let res = exe()
        .args([
            "eval",
            "--config",
            cfg.to_str().unwrap(),
            "--model",
            model.to_str().unwrap(),
        ])
        .args(["--out", eval_out.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(res.status.success());
    let csv = std::fs::read_to_string(eval_out.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.lines().last().unwrap().starts_with("mean,"));

    // the run summary and a fresh evaluation agree on the final metrics
    let run: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("seed_9/run.json")).unwrap())
            .unwrap();
    let mean_abs_rel: f64 = csv
        .lines()
        .last()
        .unwrap()
        .split(',')
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(mean_abs_rel, run["abs_rel"].as_f64().unwrap());
}

#[test]
fn unknown_strategy_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = exe()
        .args([
            "train",
            "--config",
            cfg.to_str().unwrap(),
            "--strategy",
            "nope",
        ])
        .args(["--out", dir.path().join("o").to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope"));
}

#[test]
fn gen_scenes_round_trip_through_pfm() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("scenes");
    let status = exe()
        .args([
            "gen-scenes",
            "--out",
            out.to_str().unwrap(),
            "--seed",
            "5",
            "--count",
            "2",
        ])
        .output()
        .unwrap()
        .status;
    assert!(status.success());
    let mut rng = SeedRng::new(5);
    let first = gen_scene(rng.next_u64(), &Default::default()).unwrap();
    let depth = io::read_depth(
        &out.join("scene_000_depth.pfm"),
        Some(&out.join("scene_000_depth.mask")),
    )
    .unwrap();
    assert_eq!(depth.shape(), first.depth.shape());
    for (a, b) in depth.values().iter().zip(first.depth.values()) {
        assert_eq!(*a, *b as f32 as f64);
    }
    let image = io::read_pfm_g3(&out.join("scene_000_image.pfm")).unwrap();
    assert_eq!(image.shape(), (64, 64, 3));
    for name in ["uniform", "multi_range"] {
        let pgm = std::fs::read(out.join(format!("scene_001_{name}_labels.pgm"))).unwrap();
        assert!(pgm.starts_with(b"P5\n64 64\n255\n"));
        assert_eq!(pgm.len(), 13 + 64 * 64);
    }
    assert!(!out.join("scene_000_baseline_labels.pgm").exists());
}

#[test]
fn eval_of_depth_maps() {
    let dir = tempfile::tempdir().unwrap();
    let gt = Grid1::dense(2, 2, vec![1.0, 2.0, 4.0, 8.0]).unwrap();
    let pred = Grid1::dense(2, 2, vec![2.0, 4.0, 8.0, 16.0]).unwrap();
    let (gp, gm, pp, pm) = (
        dir.path().join("gt.pfm"),
        dir.path().join("gt.mask"),
        dir.path().join("pred.pfm"),
        dir.path().join("pred.mask"),
    );
    io::write_depth(&gp, &gm, &gt).unwrap();
    io::write_depth(&pp, &pm, &pred).unwrap();
    let out = exe()
        .args([
            "eval",
            "--pred",
            pp.to_str().unwrap(),
            "--gt",
            gp.to_str().unwrap(),
        ])
        .args(["--gt-mask", gm.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    let row = stdout.lines().nth(1).unwrap();
    assert!(row.starts_with("0,1,"), "{row}");
    assert!(row.ends_with(",0,0,0,4"), "{row}");
}

#[test]
fn shipped_configs_load_and_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let full = ExperimentConfig::load(&dir.join("ablation.json")).unwrap();
    full.validate().unwrap();
    let defaults = ExperimentConfig::default();
    assert_eq!(full.schedule, defaults.schedule);
    assert_eq!(full.strategies, defaults.strategies);
    assert_eq!(full.sweep.unwrap().n_across, [2, 4, 6, 8, 10]);
    ExperimentConfig::load(&dir.join("smoke.json")).unwrap().validate().unwrap();
}
