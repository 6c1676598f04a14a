//! Central finite-difference checks of the analytic gradients.

use crate::error::Result;
use crate::identify::{differential_map, identify, Label, LossReduction, RegConfig};
use crate::regloss::{DepthLossParams, LossResult};
use crate::sampling::SampleSet;
use crate::tensorgrid::{Grid1, Grid3, SeedRng};
use crate::toybench::model::{ModelConfig, ToyModel};
use crate::toybench::scene::{gen_scene, SceneParams};
use crate::toybench::train::BatchLoss;

use super::instances::{random_reg_instance, StrategyKind};
use super::oracle::RegLossFn;

pub const STEP: f64 = 1e-5;
/// Coordinates whose pair distance is this close to zero or to its margin
/// are skipped.
pub const KINK_GAP: f64 = 1e-4;
/// Gradients smaller than this are compared absolutely.
pub const REL_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GradReport {
    pub checked: usize,
    pub skipped: usize,
    pub max_rel_err: f64,
}

impl GradReport {
    fn record(&mut self, analytic: f64, numeric: f64) {
        let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR);
        self.checked += 1;
        if err > self.max_rel_err || err.is_nan() {
            self.max_rel_err = err;
        }
    }

    pub fn merge(self, other: GradReport) -> GradReport {
        GradReport {
            checked: self.checked + other.checked,
            skipped: self.skipped + other.skipped,
            max_rel_err: if other.max_rel_err > self.max_rel_err || other.max_rel_err.is_nan() {
                other.max_rel_err
            } else {
                self.max_rel_err
            },
        }
    }

    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_rel_err < tolerance
    }
}

fn central<F: FnMut(f64) -> Result<f64>>(x: f64, mut f: F) -> Result<f64> {
    Ok((f(x + STEP)? - f(x - STEP)?) / (2.0 * STEP))
}

/// Per (sample, pixel): true when that pair sits near a kink.
fn kink_mask(
    f_a: &Grid3,
    d_a: &Grid1,
    samples: &SampleSet,
    config: &RegConfig,
) -> Result<Vec<Vec<bool>>> {
    let mut out = Vec::with_capacity(samples.len());
    for s in samples.iter() {
        let labels = identify(&differential_map(d_a, &s.depth)?, config)?;
        let mask = labels
            .labels()
            .iter()
            .enumerate()
            .map(|(p, &label)| {
                let dist =
                    crate::regloss::feat_distance(f_a.pixel(p), s.feature.pixel(p)).unwrap_or(0.0);
                match label {
                    Label::Ignored => false,
                    Label::Positive => dist < KINK_GAP,
                    Label::Negative(j) => {
                        dist < KINK_GAP || (dist - config.margin(j).unwrap_or(0.0)).abs() < KINK_GAP
                    }
                }
            })
            .collect();
        out.push(mask);
    }
    Ok(out)
}

fn with_entry(g: &Grid3, idx: usize, v: f64) -> Result<Grid3> {
    let mut data = g.data().to_vec();
    data[idx] = v;
    Grid3::new(g.height(), g.width(), g.channels(), data)
}

/// Every anchor and sample feature coordinate of `trials` random instances,
/// strategies and reductions alternating.
pub fn check_reg_loss(trials: usize, seed: u64, loss: RegLossFn) -> Result<GradReport> {
    let mut rng = SeedRng::new(seed);
    let mut report = GradReport::default();
    for t in 0..trials {
        let kind = if t % 2 == 0 {
            StrategyKind::Uniform
        } else {
            StrategyKind::MultiRange
        };
        let reduction = if t % 4 < 2 {
            LossReduction::Sum
        } else {
            LossReduction::MeanOverContributing
        };
        let inst = random_reg_instance(&mut rng, kind, reduction)?;
        let res: LossResult = loss(&inst.f_a, &inst.d_a, &inst.samples, &inst.config)?;
        let kinks = kink_mask(&inst.f_a, &inst.d_a, &inst.samples, &inst.config)?;
        let c = inst.f_a.channels();

        for idx in 0..inst.f_a.data().len() {
            let p = idx / c;
            if kinks.iter().any(|m| m[p]) {
                report.skipped += 1;
                continue;
            }
            let numeric = central(inst.f_a.data()[idx], |v| {
                Ok(loss(
                    &with_entry(&inst.f_a, idx, v)?,
                    &inst.d_a,
                    &inst.samples,
                    &inst.config,
                )?
                .total)
            })?;
            report.record(res.grad_anchor.data()[idx], numeric);
        }
        for (n, pair) in inst.samples.pairs.iter().enumerate() {
            for idx in 0..pair.feature.data().len() {
                if kinks[n][idx / c] {
                    report.skipped += 1;
                    continue;
                }
                let numeric = central(pair.feature.data()[idx], |v| {
                    let mut samples = inst.samples.clone();
                    samples.pairs[n].feature = with_entry(&pair.feature, idx, v)?;
                    Ok(loss(&inst.f_a, &inst.d_a, &samples, &inst.config)?.total)
                })?;
                report.record(res.grad_samples[n].data()[idx], numeric);
            }
        }
    }
    Ok(report)
}

pub type SiLossFn<'a> = &'a dyn Fn(&Grid1, &Grid1, &DepthLossParams) -> Result<(f64, Grid3)>;

/// Gradient of the depth loss with respect to every valid prediction.
pub fn check_si_loss(trials: usize, seed: u64, loss: SiLossFn) -> Result<GradReport> {
    let mut rng = SeedRng::new(seed);
    let mut report = GradReport::default();
    for _ in 0..trials {
        let h = 1 + rng.below(4) as usize;
        let w = 1 + rng.below(4) as usize;
        let n = h * w;
        let gt_v: Vec<f64> = (0..n).map(|_| rng.uniform(0.5, 10.0)).collect();
        let gt_m: Vec<bool> = (0..n).map(|_| rng.below(6) != 0).collect();
        let pred_v: Vec<f64> = gt_v
            .iter()
            .map(|g| g * (0.5 * rng.normal()).exp())
            .collect();
        let params = DepthLossParams {
            variance_focus: rng.uniform(0.0, 0.95),
            output_scale: rng.uniform(1.0, 10.0),
        };
        let gt = Grid1::new(h, w, gt_v, gt_m)?;
        let pred = Grid1::dense(h, w, pred_v)?;
        let (_, grad) = loss(&pred, &gt, &params)?;
        for p in 0..n {
            let numeric = central(pred.values()[p], |v| {
                let mut values = pred.values().to_vec();
                values[p] = v;
                Ok(loss(&Grid1::dense(h, w, values)?, &gt, &params)?.0)
            })?;
            report.record(grad.data()[p], numeric);
        }
    }
    Ok(report)
}

pub type BatchLossFn<'a> = &'a dyn Fn(
    &ToyModel,
    &[(&Grid3, &Grid1)],
    &RegConfig,
    &DepthLossParams,
    &mut SeedRng,
) -> Result<(BatchLoss, Vec<f64>)>;

/// Parameter gradient of the full training loss (depth loss plus
/// regularization through the model) on a batch of two 8x8 scenes. The
/// sample draws are replayed from a cloned generator for every evaluation.
pub fn check_model(seed: u64, config: &RegConfig, loss: BatchLossFn) -> Result<GradReport> {
    let scene = SceneParams {
        height: 8,
        width: 8,
        ..SceneParams::default()
    };
    let mut rng = SeedRng::new(seed);
    let scenes = [
        gen_scene(rng.next_u64(), &scene)?,
        gen_scene(rng.next_u64(), &scene)?,
    ];
    let items: Vec<(&Grid3, &Grid1)> = scenes.iter().map(|s| (&s.image, &s.depth)).collect();
    let model = ToyModel::init(ModelConfig::default(), &mut rng)?;
    let params = DepthLossParams::default();
    let draws = rng.split();

    let (_, grads) = loss(&model, &items, config, &params, &mut draws.clone())?;
    let mut report = GradReport::default();
    for (k, &analytic) in grads.iter().enumerate() {
        let numeric = central(model.params[k], |v| {
            let mut m = model.clone();
            m.params[k] = v;
            Ok(loss(&m, &items, config, &params, &mut draws.clone())?
                .0
                .l_final)
        })?;
        report.record(analytic, numeric);
    }
    Ok(report)
}
