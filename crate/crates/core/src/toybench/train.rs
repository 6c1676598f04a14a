//! Plain gradient-descent training of the toy model on synthetic scenes with
//! the combined depth and regularization loss.

use serde::{Deserialize, Serialize};

use super::model::{ModelConfig, ToyModel};
use super::scene::{gen_scene, SceneParams, SyntheticScene};
use super::separation::{SeparationParams, SeparationStats};
use crate::error::{Error, Result};
use crate::evalmetrics::{compute_metrics, MetricReport};
use crate::identify::RegConfig;
use crate::regloss::{reg_loss, si_loss, DepthLossParams};
use crate::sampling::{build_sample_set, Batch, Provenance};
use crate::tensorgrid::{inverse_shift, Grid1, Grid3, SeedRng};

// Stream ids under a run seed.
const STREAM_INIT: u64 = 1;
const STREAM_POOL: u64 = 2;
const STREAM_EVAL: u64 = 3;
const STREAM_STEPS: u64 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Schedule {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lr_decay: LrDecay,
    pub seeds: Vec<u64>,
    /// Held-out evaluation every this many steps; 0 evaluates only at the
    /// start and the end.
    pub eval_every: usize,
    /// Size of the fixed training pool batches are drawn from.
    pub train_scenes: usize,
    pub eval_scenes: usize,
    pub eval_seed: u64,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            steps: 2000,
            batch_size: 4,
            learning_rate: 0.05,
            lr_decay: LrDecay::Cosine,
            seeds: vec![1, 2, 3, 4, 5],
            eval_every: 500,
            train_scenes: 64,
            eval_scenes: 8,
            eval_seed: 1_000_003,
        }
    }
}

/// Step-size schedule of the gradient descent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrDecay {
    Constant,
    /// Half-cosine from `learning_rate` at step 0 down to zero at the end.
    #[default]
    Cosine,
}

impl Schedule {
    pub fn step_size(&self, step: usize) -> f64 {
        match self.lr_decay {
            LrDecay::Constant => self.learning_rate,
            LrDecay::Cosine => {
                let t = step as f64 / self.steps.max(1) as f64;
                0.5 * self.learning_rate * (1.0 + (std::f64::consts::PI * t).cos())
            }
        }
    }
}

/// Everything one training run depends on besides its seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSetup {
    pub scene: SceneParams,
    pub model: ModelConfig,
    pub reg: RegConfig,
    pub depth_loss: DepthLossParams,
    pub schedule: Schedule,
    pub separation: SeparationParams,
}

impl TrainSetup {
    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        self.model.validate()?;
        self.reg.validate()?;
        self.depth_loss.validate()?;
        let s = &self.schedule;
        if s.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if self.reg.is_enabled() && self.reg.n_across > 0 && s.batch_size < 2 {
            return Err(Error::InsufficientBatch {
                batch: s.batch_size,
            });
        }
        if s.train_scenes < s.batch_size {
            return Err(Error::InvalidConfig(format!(
                "train_scenes ({}) must be at least batch_size ({})",
                s.train_scenes, s.batch_size
            )));
        }
        if s.eval_scenes == 0 {
            return Err(Error::InvalidConfig("eval_scenes must be >= 1".into()));
        }
        if !(s.learning_rate.is_finite() && s.learning_rate >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be >= 0, got {}",
                s.learning_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub l_re: f64,
    pub l_depth: f64,
    pub l_final: f64,
    pub contributing_count: usize,
    pub ignored_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    /// Number of completed optimization steps.
    pub step: usize,
    pub metrics: MetricReport,
    pub separation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Divergence {
    pub step: usize,
    pub what: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainRecord {
    pub seed: u64,
    pub steps: Vec<StepRecord>,
    pub evals: Vec<EvalRecord>,
    pub divergence: Option<Divergence>,
    pub model: ToyModel,
}

impl TrainRecord {
    pub const CSV_HEADER: &'static str = "step,l_re,l_depth,l_final,contributing,ignored_fraction";

    pub fn steps_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for s in &self.steps {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                s.step, s.l_re, s.l_depth, s.l_final, s.contributing_count, s.ignored_fraction
            ));
        }
        out
    }

    pub fn evals_csv(&self) -> String {
        let mut out = format!("step,{},separation\n", MetricReport::CSV_HEADER);
        for e in &self.evals {
            out.push_str(&format!(
                "{},{},{}\n",
                e.step,
                e.metrics.csv_row(),
                e.separation
            ));
        }
        out
    }

    pub fn initial_eval(&self) -> Option<&EvalRecord> {
        self.evals.first()
    }

    pub fn final_eval(&self) -> Option<&EvalRecord> {
        self.evals.last()
    }

    pub fn ensure_converged(&self) -> Result<()> {
        match self.divergence {
            Some(Divergence { step, what }) => Err(Error::Diverged { step, what }),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BatchLoss {
    pub l_re: f64,
    pub l_depth: f64,
    pub l_final: f64,
    pub contributing_count: usize,
    pub ignored_fraction: f64,
}

/// Combined loss of one batch, averaged over its items, and the gradient
/// with respect to the model parameters.
///
/// Every item serves as an anchor in turn. Within-map sample gradients are
/// rolled back onto the anchor's own feature map and across-batch sample
/// gradients land on the feature map of the item they came from.
pub fn batch_loss(
    model: &ToyModel,
    items: &[(&Grid3, &Grid1)],
    reg: &RegConfig,
    depth_params: &DepthLossParams,
    rng: &mut SeedRng,
) -> Result<(BatchLoss, Vec<f64>)> {
    let k = items.len();
    if k == 0 {
        return Err(Error::InvalidDimension("empty batch".into()));
    }
    let kf = k as f64;
    let w = reg.depth_loss_weight;
    let mut out = BatchLoss::default();

    let mut feats = Vec::with_capacity(k);
    let mut preds = Vec::with_capacity(k);
    let mut caches = Vec::with_capacity(k);
    for (image, _) in items {
        let (f, p, c) = model.forward(image)?;
        feats.push(f);
        preds.push(p);
        caches.push(c);
    }

    let mut grad_preds = Vec::with_capacity(k);
    for (pred, (_, gt)) in preds.iter().zip(items) {
        let (l, g) = si_loss(pred, gt, depth_params)?;
        out.l_depth += l / kf;
        let (h, wd, _) = g.shape();
        grad_preds.push(Grid3::new(
            h,
            wd,
            1,
            g.data().iter().map(|v| v * w / kf).collect(),
        )?);
    }

    let (h, wd, c) = feats[0].shape();
    let mut grad_feats = vec![Grid3::zeros(h, wd, c)?; k];
    if reg.is_enabled() && reg.n_within + reg.n_across > 0 {
        let batch = Batch::new(
            feats
                .iter()
                .zip(items)
                .map(|(f, (_, d))| (f.clone(), (*d).clone()))
                .collect(),
        )?;
        let (mut contributing, mut ignored) = (0usize, 0usize);
        for a in 0..k {
            let (f_a, d_a) = batch.get(a);
            let set = build_sample_set(f_a, d_a, &batch, a, reg.n_within, reg.n_across, rng)?;
            let res = reg_loss(f_a, d_a, &set, reg)?;
            out.l_re += res.total / kf;
            contributing += res.contributing_count;
            ignored += res.breakdown.ignored_pairs;
            add_scaled(&mut grad_feats[a], &res.grad_anchor, 1.0 / kf);
            for (pair, g) in set.pairs.iter().zip(&res.grad_samples) {
                match pair.provenance {
                    Provenance::Within { s_h, s_w } => {
                        let (ih, iw) = inverse_shift(h, wd, s_h, s_w);
                        add_scaled(&mut grad_feats[a], &g.shift2d(ih, iw)?, 1.0 / kf);
                    }
                    Provenance::Across { index, .. } => {
                        add_scaled(&mut grad_feats[index], g, 1.0 / kf)
                    }
                }
            }
        }
        out.contributing_count = contributing;
        out.ignored_fraction = if contributing + ignored == 0 {
            0.0
        } else {
            ignored as f64 / (contributing + ignored) as f64
        };
    } else {
        out.ignored_fraction = 1.0;
    }
    out.l_final = out.l_re + w * out.l_depth;

    let mut grads = vec![0.0; model.params.len()];
    for i in 0..k {
        model.backward(
            items[i].0,
            &caches[i],
            &preds[i],
            &grad_feats[i],
            &grad_preds[i],
            &mut grads,
        )?;
    }
    Ok((out, grads))
}

fn add_scaled(dst: &mut Grid3, src: &Grid3, scale: f64) {
    for (d, s) in dst.data_mut().iter_mut().zip(src.data()) {
        *d += scale * s;
    }
}

/// Scenes generated from consecutive draws of a seeded stream.
pub fn scene_set(
    seed: u64,
    stream: u64,
    count: usize,
    params: &SceneParams,
) -> Result<Vec<SyntheticScene>> {
    let mut rng = SeedRng::stream(seed, stream);
    (0..count)
        .map(|_| gen_scene(rng.next_u64(), params))
        .collect()
}

/// The shared held-out scenes of a setup.
pub fn eval_scenes(setup: &TrainSetup) -> Result<Vec<SyntheticScene>> {
    scene_set(
        setup.schedule.eval_seed,
        STREAM_EVAL,
        setup.schedule.eval_scenes,
        &setup.scene,
    )
}

/// Mean per-scene metrics and pooled feature separation on `scenes`.
pub fn evaluate(
    model: &ToyModel,
    scenes: &[SyntheticScene],
    sep: &SeparationParams,
) -> Result<(MetricReport, f64)> {
    let mut reports = Vec::with_capacity(scenes.len());
    let mut stats = SeparationStats::default();
    let mut rng = SeedRng::new(sep.seed);
    for s in scenes {
        let (f, pred, _) = model.forward(&s.image)?;
        reports.push(compute_metrics(&pred, &s.depth)?);
        stats.accumulate(&f, &s.depth, sep, &mut rng);
    }
    let mean = MetricReport::mean(&reports).ok_or(Error::EmptyEvaluation)?;
    Ok((mean, stats.ratio()))
}

/// One seeded training run. A non-finite loss or gradient stops training
/// and is reported in [`TrainRecord::divergence`].
pub fn train_run(setup: &TrainSetup, seed: u64) -> Result<TrainRecord> {
    setup.validate()?;
    let sched = &setup.schedule;
    let mut model = ToyModel::init(setup.model, &mut SeedRng::stream(seed, STREAM_INIT))?;
    let pool = scene_set(seed, STREAM_POOL, sched.train_scenes, &setup.scene)?;
    let held_out = eval_scenes(setup)?;
    let mut rng = SeedRng::stream(seed, STREAM_STEPS);

    let mut record = TrainRecord {
        seed,
        steps: Vec::with_capacity(sched.steps),
        evals: Vec::new(),
        divergence: None,
        model: model.clone(),
    };
    let push_eval = |record: &mut TrainRecord, model: &ToyModel, step: usize| -> Result<()> {
        let (metrics, separation) = evaluate(model, &held_out, &setup.separation)?;
        record.evals.push(EvalRecord {
            step,
            metrics,
            separation,
        });
        Ok(())
    };
    push_eval(&mut record, &model, 0)?;

    let mut order: Vec<usize> = (0..pool.len()).collect();
    for step in 0..sched.steps {
        // partial Fisher-Yates: K distinct scenes
        for i in 0..sched.batch_size {
            let j = i + rng.below((order.len() - i) as u64) as usize;
            order.swap(i, j);
        }
        let items: Vec<(&Grid3, &Grid1)> = order[..sched.batch_size]
            .iter()
            .map(|&i| (&pool[i].image, &pool[i].depth))
            .collect();
        let (loss, grads) =
            match batch_loss(&model, &items, &setup.reg, &setup.depth_loss, &mut rng) {
                Ok(v) => v,
                Err(Error::Domain(_)) => {
                    record.divergence = Some(Divergence {
                        step,
                        what: "prediction",
                    });
                    break;
                }
                Err(e) => return Err(e),
            };
        if !loss.l_final.is_finite() {
            record.divergence = Some(Divergence { step, what: "loss" });
            break;
        }
        if grads.iter().any(|g| !g.is_finite()) {
            record.divergence = Some(Divergence {
                step,
                what: "gradient",
            });
            break;
        }
        record.steps.push(StepRecord {
            step,
            l_re: loss.l_re,
            l_depth: loss.l_depth,
            l_final: loss.l_final,
            contributing_count: loss.contributing_count,
            ignored_fraction: loss.ignored_fraction,
        });
        let lr = sched.step_size(step);
        for (p, g) in model.params.iter_mut().zip(&grads) {
            *p -= lr * g;
        }
        let done = step + 1;
        if sched.eval_every > 0 && done % sched.eval_every == 0 && done != sched.steps {
            push_eval(&mut record, &model, done)?;
        }
    }
    if record.divergence.is_none() && sched.steps > 0 {
        let done = record.steps.len();
        push_eval(&mut record, &model, done)?;
    }
    record.model = model;
    Ok(record)
}
