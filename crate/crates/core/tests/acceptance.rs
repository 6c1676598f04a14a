//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Criteria 6 and 7 train the full benchmark (fifteen
//! 2000-step runs) and take several minutes on one core.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use metricdepth::cli::{ablate, AblationSummary, ExperimentConfig};
use metricdepth::evalmetrics::compute_metrics;
use metricdepth::identify::{identify_multirange, identify_uniform, RegConfig, Strategy};
use metricdepth::regloss::{reg_loss, si_loss};
use metricdepth::tensorgrid::Grid1;
use metricdepth::toybench::batch_loss;
use metricdepth::verify::{
    check_metrics_oracle, check_model, check_partition, check_reg_loss, check_reg_oracle,
    check_si_loss, check_subsumption,
};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

fn gradient_suite() -> Outcome {
    let t = Instant::now();
    let reg = check_reg_loss(100, 1, &reg_loss).unwrap();
    let si = check_si_loss(100, 2, &si_loss).unwrap();
    let model = check_model(1, &RegConfig::uniform(0.1, 0.5, 4.0), &batch_loss)
        .unwrap()
        .merge(check_model(1, &RegConfig::default(), &batch_loss).unwrap());
    let elapsed = t.elapsed();
    outcome(
        reg.passed(1e-5) && si.passed(1e-5) && model.passed(1e-4) && elapsed < Duration::from_secs(60),
        format!(
            "reg_loss max rel err {:.2e} over {} coords ({} kink-adjacent skipped), si_loss {:.2e}, model {:.2e}, {}",
            reg.max_rel_err,
            reg.checked,
            reg.skipped,
            si.max_rel_err,
            model.max_rel_err,
            secs(elapsed)
        ),
    )
}

fn oracle_suite() -> Outcome {
    let t = Instant::now();
    let reg = check_reg_oracle(100, 1, 1e-12, &reg_loss).unwrap();
    let metrics = check_metrics_oracle(100, 2, 1e-12, &compute_metrics).unwrap();
    let elapsed = t.elapsed();
    outcome(
        reg.passed() && metrics.passed() && elapsed < Duration::from_secs(30),
        format!(
            "reg_loss max rel err {:.2e}, metrics max rel err {:.2e}, {}",
            reg.max_rel_err,
            metrics.max_rel_err,
            secs(elapsed)
        ),
    )
}

fn subsumption() -> Outcome {
    let r = check_subsumption(50, 3, 1e-12, &reg_loss).unwrap();
    outcome(
        r.passed(),
        format!(
            "{} values compared, max rel err {:.2e}",
            r.compared, r.max_rel_err
        ),
    )
}

fn partition() -> Outcome {
    let dispatch = |d_r: &Grid1, c: &RegConfig| match &c.strategy {
        Strategy::Uniform { r_n, .. } => identify_uniform(d_r, c.r_p, *r_n),
        _ => identify_multirange(d_r, c),
    };
    let r = check_partition(1000, 4, &dispatch).unwrap();
    outcome(
        r.passed(),
        format!(
            "{} pixels over {} maps, {} mismatches",
            r.compared, r.trials, r.mismatches
        ),
    )
}

fn metric_units() -> Outcome {
    let one = |v: f64| Grid1::dense(1, 1, vec![v]).unwrap();
    let r = compute_metrics(&one(2.0), &one(1.0)).unwrap();
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
    let single = close(r.abs_rel, 1.0)
        && close(r.rmse, 1.0)
        && close(r.sq_rel, 1.0)
        && close(r.rmse_log, 2f64.ln())
        && close(r.log10, 2f64.log10())
        && r.delta1 == 0.0
        && r.delta2 == 0.0
        && r.delta3 == 0.0;
    let gt = Grid1::dense(2, 2, vec![0.7, 1.3, 4.0, 9.5]).unwrap();
    let same = compute_metrics(&gt, &gt).unwrap();
    let identity = [
        same.abs_rel,
        same.sq_rel,
        same.rmse,
        same.rmse_log,
        same.log10,
    ] == [0.0; 5]
        && [same.delta1, same.delta2, same.delta3] == [1.0; 3];
    outcome(
        single && identity,
        format!(
            "pred=2,gt=1 -> abs_rel {} rmse {} sq_rel {} rmse_log {} log10 {} deltas {}/{}/{}; pred=gt exact: {identity}",
            r.abs_rel, r.rmse, r.sq_rel, r.rmse_log, r.log10, r.delta1, r.delta2, r.delta3
        ),
    )
}

fn find<'a>(summary: &'a AblationSummary, name: &str) -> &'a metricdepth::cli::StrategySummary {
    summary
        .strategies
        .iter()
        .find(|s| s.name == name)
        .expect("strategy present")
}

fn ablation() -> (Outcome, Outcome) {
    let config = ExperimentConfig::default();
    assert_eq!(
        (
            config.scene.height,
            config.scene.width,
            config.schedule.steps,
            config.schedule.batch_size,
            config.schedule.seeds.len()
        ),
        (64, 64, 2000, 4, 5)
    );
    let dir = tempfile::tempdir().unwrap();
    let t = Instant::now();
    let summary = ablate(&config, dir.path()).unwrap();
    let elapsed = t.elapsed();
    let (base, uni, multi) = (
        find(&summary, "baseline"),
        find(&summary, "uniform"),
        find(&summary, "multi_range"),
    );
    for s in [base, uni, multi] {
        let per_seed: Vec<String> = s
            .runs
            .iter()
            .map(|r| format!("{:.4}/{:.2}", r.abs_rel, r.separation))
            .collect();
        println!(
            "    {:<12} mean abs_rel {:.5} mean separation {:.3}  per seed abs_rel/separation: {}",
            s.name,
            s.mean_abs_rel,
            s.mean_separation,
            per_seed.join(" ")
        );
    }
    let diverged = summary
        .strategies
        .iter()
        .flat_map(|s| &s.runs)
        .any(|r| r.diverged_at.is_some());
    let wins = multi.abs_rel_wins_vs_first;
    let ordered = multi.mean_abs_rel <= uni.mean_abs_rel && uni.mean_abs_rel <= base.mean_abs_rel;
    let c6 = outcome(
        wins >= 4 && ordered && !diverged && elapsed < Duration::from_secs(30 * 60),
        format!(
            "multi-range beats baseline on {wins}/5 seeds; means baseline {:.5} uniform {:.5} multi-range {:.5} (ordered: {ordered}); {}",
            base.mean_abs_rel,
            uni.mean_abs_rel,
            multi.mean_abs_rel,
            secs(elapsed)
        ),
    );
    let sep_wins = multi.separation_wins_vs_first;
    let c7 = outcome(
        sep_wins >= 4,
        format!(
            "multi-range separation above baseline on {sep_wins}/5 seeds (means {:.3} vs {:.3})",
            multi.mean_separation, base.mean_separation
        ),
    );
    (c6, c7)
}

type Files = BTreeMap<PathBuf, Vec<u8>>;

fn files_under(root: &Path) -> Files {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(
                    path.strip_prefix(root).unwrap().to_path_buf(),
                    std::fs::read(&path).unwrap(),
                );
            }
        }
    }
    out
}

fn determinism() -> Outcome {
    let exe = env!("CARGO_BIN_EXE_metricdepth");
    let work = tempfile::tempdir().unwrap();
    let config_path = work.path().join("small.json");
    let mut config = ExperimentConfig::default();
    config.scene.height = 16;
    config.scene.width = 16;
    config.schedule.steps = 30;
    config.schedule.eval_every = 10;
    config.schedule.seeds = vec![1, 2];
    config.schedule.train_scenes = 8;
    config.schedule.eval_scenes = 2;
    config.sweep = Some(metricdepth::cli::Sweep {
        strategy: "multi_range".into(),
        n_within: vec![2, 4],
        n_across: vec![1],
    });
    std::fs::write(&config_path, config.to_json()).unwrap();
    let cfg = config_path.to_str().unwrap();

    let mut differing = Vec::new();
    let mut compared = 0;
    let run = |args: &[&str]| {
        let out = Command::new(exe).args(args).output().unwrap();
        assert!(
            out.status.success(),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        out.stdout
    };
    let rounds: Vec<(Files, Vec<Vec<u8>>)> = (0..2)
        .map(|k| {
            let dir = work.path().join(format!("round{k}"));
            let d = |sub: &str| dir.join(sub).to_str().unwrap().to_string();
            let stdouts = vec![
                run(&["gradcheck", "--trials", "10"]),
                run(&["oracle", "--trials", "10"]),
            ];
            run(&["ablate", "--config", cfg, "--out", &d("ablate")]);
            run(&[
                "train",
                "--config",
                cfg,
                "--out",
                &d("train"),
                "--seed",
                "3",
            ]);
            run(&[
                "gen-scenes",
                "--config",
                cfg,
                "--out",
                &d("scenes"),
                "--count",
                "2",
            ]);
            let model = dir.join("train/seed_3/model.json");
            run(&[
                "eval",
                "--config",
                cfg,
                "--model",
                model.to_str().unwrap(),
                "--out",
                &d("eval_model"),
            ]);
            run(&[
                "eval",
                "--pred",
                &d("scenes/scene_000_depth.pfm"),
                "--gt",
                &d("scenes/scene_001_depth.pfm"),
                "--out",
                &d("eval_maps"),
            ]);
            (files_under(&dir), stdouts)
        })
        .collect();
    let (a, b) = (&rounds[0], &rounds[1]);
    if a.0.keys().ne(b.0.keys()) {
        differing.push("file sets".to_string());
    }
    for (path, bytes) in &a.0 {
        compared += 1;
        if b.0.get(path) != Some(bytes) {
            differing.push(path.display().to_string());
        }
    }
    if a.1 != b.1 {
        differing.push("stdout".into());
    }
    outcome(
        differing.is_empty() && compared > 20,
        format!("{compared} output files compared across two runs of every command; differing: {differing:?}"),
    )
}

fn main() {
    let mut results: Vec<(usize, &str, Outcome)> = vec![
        (1, "gradient suite", gradient_suite()),
        (2, "oracle suite", oracle_suite()),
        (3, "strategy subsumption", subsumption()),
        (4, "identification partition", partition()),
        (5, "metric unit values", metric_units()),
    ];
    let (c6, c7) = ablation();
    results.push((6, "directional ablation", c6));
    results.push((7, "feature separation", c7));
    results.push((8, "determinism", determinism()));
    results.sort_by_key(|r| r.0);

    let mut failed = 0;
    for (n, name, o) in &results {
        println!(
            "criterion {n} {:<26} {}  {}",
            name,
            if o.passed { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += usize::from(!o.passed);
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        results.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
