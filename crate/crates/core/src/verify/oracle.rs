//! Brute-force reference implementations and the checks that compare the
//! library against them.

use crate::error::{Error, Result};
use crate::evalmetrics::MetricReport;
use crate::identify::{IdentMap, Label, LossReduction, RegConfig, Strategy};
use crate::regloss::LossResult;
use crate::sampling::SampleSet;
use crate::tensorgrid::{Grid1, Grid3, SeedRng};

use super::instances::{random_reg_instance, StrategyKind};

/// Largest relative disagreement seen by a check, and how many values were
/// compared.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OracleReport {
    pub trials: usize,
    pub compared: usize,
    pub max_rel_err: f64,
    pub mismatches: usize,
}

impl OracleReport {
    fn record(&mut self, got: f64, want: f64, tol: f64) {
        let err = rel_err(got, want);
        self.compared += 1;
        if err.is_nan() || err > tol {
            self.mismatches += 1;
        }
        if err > self.max_rel_err || err.is_nan() {
            self.max_rel_err = err;
        }
    }

    pub fn passed(&self) -> bool {
        self.mismatches == 0
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    (a - b).abs() / a.abs().max(b.abs())
}

/// Label from the raw thresholds, written out case by case.
fn oracle_label(v: f64, valid: bool, config: &RegConfig) -> Option<usize> {
    // None = ignored, Some(0) = positive, Some(j) = negative subgroup j
    if !valid {
        return None;
    }
    if v < config.r_p {
        return Some(0);
    }
    match &config.strategy {
        Strategy::Disabled => None,
        Strategy::Uniform { r_n, .. } => (v > *r_n).then_some(1),
        Strategy::MultiRange { ranges } => {
            let mut hit = None;
            for (j, r) in ranges.iter().enumerate() {
                if r.low < v && v < r.high {
                    hit = Some(j + 1);
                }
            }
            hit
        }
    }
}

fn oracle_margin(config: &RegConfig, j: usize) -> f64 {
    match &config.strategy {
        Strategy::Uniform { margin, .. } => *margin,
        Strategy::MultiRange { ranges } => ranges[j - 1].margin,
        Strategy::Disabled => 0.0,
    }
}

/// Triple loop over samples, pixels and channels. Returns the summed loss
/// and the number of contributing pairs.
pub fn oracle_reg_loss(
    f_a: &Grid3,
    d_a: &Grid1,
    samples: &SampleSet,
    config: &RegConfig,
) -> (f64, usize) {
    let (h, w, c) = f_a.shape();
    let mut total = 0.0;
    let mut count = 0;
    for s in samples.iter() {
        for i in 0..h {
            for j in 0..w {
                let valid = d_a.is_valid(i, j) && s.depth.is_valid(i, j);
                let v = (d_a.get(i, j) - s.depth.get(i, j)).abs();
                let Some(label) = oracle_label(v, valid, config) else {
                    continue;
                };
                let mut sq = 0.0;
                for k in 0..c {
                    let d = f_a.at(i, j, k) - s.feature.at(i, j, k);
                    sq += d * d;
                }
                let dist = sq.sqrt();
                count += 1;
                total += if label == 0 {
                    dist
                } else {
                    let m = oracle_margin(config, label);
                    if dist < m {
                        m - dist
                    } else {
                        0.0
                    }
                };
            }
        }
    }
    (total, count)
}

/// Metrics with one scalar loop per quantity. Order matches
/// [`MetricReport::CSV_HEADER`]; the last entry is the pixel count.
pub fn oracle_metrics(pred: &Grid1, gt: &Grid1) -> Option<[f64; 9]> {
    let (h, w) = gt.shape();
    let used = |i: usize, j: usize| {
        gt.is_valid(i, j) && pred.is_valid(i, j) && gt.get(i, j) > 0.0 && pred.get(i, j) > 0.0
    };
    let mut n = 0.0;
    for i in 0..h {
        for j in 0..w {
            if used(i, j) {
                n += 1.0;
            }
        }
    }
    if n == 0.0 {
        return None;
    }
    let sum = |f: &dyn Fn(f64, f64) -> f64| {
        let mut acc = 0.0;
        for i in 0..h {
            for j in 0..w {
                if used(i, j) {
                    acc += f(pred.get(i, j), gt.get(i, j));
                }
            }
        }
        acc
    };
    let delta = |power: i32| {
        let thr = 1.25f64.powi(power);
        sum(&|p, g| if (p / g).max(g / p) < thr { 1.0 } else { 0.0 }) / n
    };
    Some([
        sum(&|p, g| (p - g).abs() / g) / n,
        sum(&|p, g| (p - g) * (p - g) / g) / n,
        (sum(&|p, g| (p - g) * (p - g)) / n).sqrt(),
        (sum(&|p, g| (p.ln() - g.ln()).powi(2)) / n).sqrt(),
        sum(&|p, g| (p.log10() - g.log10()).abs()) / n,
        delta(1),
        delta(2),
        delta(3),
        n,
    ])
}

pub type RegLossFn<'a> = &'a dyn Fn(&Grid3, &Grid1, &SampleSet, &RegConfig) -> Result<LossResult>;
pub type MetricsFn<'a> = &'a dyn Fn(&Grid1, &Grid1) -> Result<MetricReport>;
pub type IdentifyFn<'a> = &'a dyn Fn(&Grid1, &RegConfig) -> Result<IdentMap>;

/// `loss` under Sum reduction against [`oracle_reg_loss`] on `trials`
/// random instances, alternating strategies.
pub fn check_reg_oracle(
    trials: usize,
    seed: u64,
    tol: f64,
    loss: RegLossFn,
) -> Result<OracleReport> {
    let mut rng = SeedRng::new(seed);
    let mut report = OracleReport {
        trials,
        ..Default::default()
    };
    for t in 0..trials {
        let kind = if t % 2 == 0 {
            StrategyKind::Uniform
        } else {
            StrategyKind::MultiRange
        };
        let inst = random_reg_instance(&mut rng, kind, LossReduction::Sum)?;
        let res = loss(&inst.f_a, &inst.d_a, &inst.samples, &inst.config)?;
        let (want, count) = oracle_reg_loss(&inst.f_a, &inst.d_a, &inst.samples, &inst.config);
        report.record(res.total, want, tol);
        report.record(res.contributing_count as f64, count as f64, 0.0);
    }
    Ok(report)
}

/// `metrics` against [`oracle_metrics`] on random maps up to 16x16 with
/// invalid and non-positive pixels mixed in.
pub fn check_metrics_oracle(
    trials: usize,
    seed: u64,
    tol: f64,
    metrics: MetricsFn,
) -> Result<OracleReport> {
    let mut rng = SeedRng::new(seed);
    let mut report = OracleReport {
        trials,
        ..Default::default()
    };
    for _ in 0..trials {
        let h = 1 + rng.below(16) as usize;
        let w = 1 + rng.below(16) as usize;
        let n = h * w;
        let gt_v: Vec<f64> = (0..n)
            .map(|_| {
                if rng.below(10) == 0 {
                    0.0
                } else {
                    rng.uniform(0.5, 10.0)
                }
            })
            .collect();
        let gt_m: Vec<bool> = (0..n).map(|_| rng.below(8) != 0).collect();
        let pred_v: Vec<f64> = gt_v
            .iter()
            .map(|g| {
                if rng.below(20) == 0 {
                    0.0
                } else {
                    (g.max(0.5) * (0.4 * rng.normal()).exp()).max(1e-3)
                }
            })
            .collect();
        let gt = Grid1::new(h, w, gt_v, gt_m)?;
        let pred = Grid1::dense(h, w, pred_v)?;
        match (metrics(&pred, &gt), oracle_metrics(&pred, &gt)) {
            (Ok(r), Some(want)) => {
                let got = [
                    r.abs_rel,
                    r.sq_rel,
                    r.rmse,
                    r.rmse_log,
                    r.log10,
                    r.delta1,
                    r.delta2,
                    r.delta3,
                    r.pixel_count as f64,
                ];
                for (g, o) in got.iter().zip(want) {
                    report.record(*g, o, tol);
                }
            }
            (Err(Error::EmptyEvaluation), None) => report.compared += 1,
            (Err(e), _) => return Err(e),
            (Ok(_), None) => {
                report.compared += 1;
                report.mismatches += 1;
            }
        }
    }
    Ok(report)
}

/// Uniform `(r_p, r_n, m)` against multi-range with the single range
/// `(r_n, B, m)`, `B` above every differential: loss and every gradient
/// entry.
pub fn check_subsumption(
    trials: usize,
    seed: u64,
    tol: f64,
    loss: RegLossFn,
) -> Result<OracleReport> {
    let mut rng = SeedRng::new(seed);
    let mut report = OracleReport {
        trials,
        ..Default::default()
    };
    for t in 0..trials {
        let reduction = if t % 2 == 0 {
            LossReduction::Sum
        } else {
            LossReduction::MeanOverContributing
        };
        let inst = random_reg_instance(&mut rng, StrategyKind::Uniform, reduction)?;
        let Strategy::Uniform { r_n, margin } = inst.config.strategy else {
            unreachable!("uniform instance");
        };
        let top = inst
            .samples
            .iter()
            .flat_map(|s| {
                s.depth
                    .values()
                    .iter()
                    .zip(inst.d_a.values())
                    .map(|(a, b)| (a - b).abs())
            })
            .fold(r_n, f64::max);
        let multi = RegConfig::multi_range(inst.config.r_p, &[(r_n, top + 1.0, margin)])
            .with_reduction(reduction)
            .with_counts(inst.config.n_within, inst.config.n_across);
        let u = loss(&inst.f_a, &inst.d_a, &inst.samples, &inst.config)?;
        let m = loss(&inst.f_a, &inst.d_a, &inst.samples, &multi)?;
        report.record(m.total, u.total, tol);
        let grads_u = std::iter::once(&u.grad_anchor).chain(&u.grad_samples);
        let grads_m = std::iter::once(&m.grad_anchor).chain(&m.grad_samples);
        for (gu, gm) in grads_u.zip(grads_m) {
            for (a, b) in gm.data().iter().zip(gu.data()) {
                report.record(*a, *b, tol);
            }
        }
    }
    Ok(report)
}

/// Random valid configuration: either uniform or two to four ranges, some
/// of them touching.
fn random_config(rng: &mut SeedRng) -> RegConfig {
    let r_p = rng.uniform(0.05, 0.3);
    if rng.below(2) == 0 {
        return RegConfig::uniform(r_p, r_p + rng.uniform(0.0, 1.0), 4.0);
    }
    let mut lo = r_p + rng.uniform(0.0, 0.4);
    let mut ranges = Vec::new();
    for _ in 0..2 + rng.below(3) {
        let hi = lo + rng.uniform(0.1, 0.8);
        ranges.push((lo, hi, 1.0 + ranges.len() as f64));
        lo = if rng.below(2) == 0 {
            hi
        } else {
            hi + rng.uniform(0.0, 0.5)
        };
    }
    RegConfig::multi_range(r_p, &ranges)
}

fn thresholds(config: &RegConfig) -> Vec<f64> {
    let mut t = vec![config.r_p];
    match &config.strategy {
        Strategy::Uniform { r_n, .. } => t.push(*r_n),
        Strategy::MultiRange { ranges } => ranges.iter().for_each(|r| t.extend([r.low, r.high])),
        Strategy::Disabled => {}
    }
    t
}

/// Brute-force reclassification of random 8x8 differential maps. About a
/// fifth of the pixels sit exactly on a threshold; those must come back
/// ignored. Counts every pixel whose label disagrees.
pub fn check_partition(trials: usize, seed: u64, identify: IdentifyFn) -> Result<OracleReport> {
    let mut rng = SeedRng::new(seed);
    let mut report = OracleReport {
        trials,
        ..Default::default()
    };
    for _ in 0..trials {
        let config = random_config(&mut rng);
        let bounds = thresholds(&config);
        let top = bounds.iter().cloned().fold(0.0, f64::max) + 0.5;
        let values: Vec<f64> = (0..64)
            .map(|_| {
                if rng.below(5) == 0 {
                    bounds[rng.below(bounds.len() as u64) as usize]
                } else {
                    rng.uniform(0.0, top)
                }
            })
            .collect();
        let valid: Vec<bool> = (0..64).map(|_| rng.below(10) != 0).collect();
        let d_r = Grid1::new(8, 8, values, valid)?;
        let map = identify(&d_r, &config)?;
        for p in 0..64 {
            let (v, ok) = (d_r.values()[p], d_r.valid()[p]);
            let mut fired = Vec::new();
            if ok && v < config.r_p {
                fired.push(Label::Positive);
            }
            match &config.strategy {
                Strategy::Uniform { r_n, .. } => {
                    if ok && v > *r_n {
                        fired.push(Label::Negative(1));
                    }
                }
                Strategy::MultiRange { ranges } => {
                    for (j, r) in ranges.iter().enumerate() {
                        if ok && v > r.low && v < r.high {
                            fired.push(Label::Negative(j + 1));
                        }
                    }
                }
                Strategy::Disabled => {}
            }
            let want = match fired.as_slice() {
                [] => Label::Ignored,
                [one] => *one,
                _ => {
                    return Err(Error::ContractViolation(format!(
                        "overlapping labels {fired:?} for {v}"
                    )))
                }
            };
            let on_bound = bounds.contains(&v);
            report.compared += 1;
            if map.labels()[p] != want || (on_bound && map.labels()[p] != Label::Ignored) {
                report.mismatches += 1;
            }
        }
    }
    report.max_rel_err = if report.mismatches == 0 { 0.0 } else { 1.0 };
    Ok(report)
}
