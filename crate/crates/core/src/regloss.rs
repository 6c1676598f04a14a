//! Regularization loss, scale-invariant depth loss and their gradients.
//!
//! For every sample map and every pixel the anchor feature and the sample
//! feature at that pixel form a pair, labelled by [`crate::identify`].
//! Positive pairs cost their Euclidean feature distance; negative pairs of
//! subgroup `j` cost `max(0, m_j - dist)`. Ignored pairs cost nothing.
//!
//! Gradients are exact except at the two non-differentiable points, where
//! the zero subgradient is used: a hinge exactly at its margin and a pair at
//! distance zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::identify::{differential_map, identify, Label, LossReduction, RegConfig};
use crate::sampling::SampleSet;
use crate::tensorgrid::{Grid1, Grid3};

/// Per-label contributions to the reduced total.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LossBreakdown {
    pub positive: f64,
    /// Entry `j - 1` holds negative subgroup `j`.
    pub negative: Vec<f64>,
    pub positive_pairs: usize,
    pub negative_pairs: Vec<usize>,
    pub ignored_pairs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossResult {
    pub total: f64,
    pub breakdown: LossBreakdown,
    /// Number of non-ignored (sample, pixel) pairs.
    pub contributing_count: usize,
    pub grad_anchor: Grid3,
    pub grad_samples: Vec<Grid3>,
}

impl LossResult {
    /// Share of (sample, pixel) pairs that were ignored; 0 for an empty set.
    pub fn ignored_fraction(&self) -> f64 {
        let all = self.contributing_count + self.breakdown.ignored_pairs;
        if all == 0 {
            0.0
        } else {
            self.breakdown.ignored_pairs as f64 / all as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DepthLossParams {
    /// Weight of the squared-mean term, in `[0, 1]`.
    pub variance_focus: f64,
    pub output_scale: f64,
}

impl Default for DepthLossParams {
    fn default() -> Self {
        Self {
            variance_focus: 0.85,
            output_scale: 10.0,
        }
    }
}

impl DepthLossParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.variance_focus) {
            return Err(Error::InvalidConfig(format!(
                "variance_focus must lie in [0, 1], got {}",
                self.variance_focus
            )));
        }
        if !(self.output_scale.is_finite() && self.output_scale > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "output_scale must be > 0, got {}",
                self.output_scale
            )));
        }
        Ok(())
    }
}

/// Euclidean distance between two feature vectors.
pub fn feat_distance(f1: &[f64], f2: &[f64]) -> Result<f64> {
    if f1.len() != f2.len() {
        return Err(Error::Shape(format!(
            "feature lengths {} and {} differ",
            f1.len(),
            f2.len()
        )));
    }
    Ok(f1
        .iter()
        .zip(f2)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

/// Loss of one labelled pair at feature distance `dist`.
pub fn pair_loss(dist: f64, label: Label, config: &RegConfig) -> Result<f64> {
    match label {
        Label::Positive => Ok(dist),
        Label::Negative(j) => {
            let m = config.margin(j).ok_or_else(|| {
                Error::ContractViolation(format!("config defines no negative subgroup {j}"))
            })?;
            Ok((m - dist).max(0.0))
        }
        Label::Ignored => Err(Error::ContractViolation(
            "ignored pairs carry no loss".into(),
        )),
    }
}

/// Regularization loss of `f_a` against every map in `samples`.
///
/// `d_a` is the anchor's ground-truth depth; each sample carries its own
/// (shifted) depth. Gradients are returned for the anchor and for every
/// sample map, each treated as an independent input.
pub fn reg_loss(
    f_a: &Grid3,
    d_a: &Grid1,
    samples: &SampleSet,
    config: &RegConfig,
) -> Result<LossResult> {
    config.validate()?;
    let (h, w, c) = f_a.shape();
    if d_a.shape() != (h, w) {
        return Err(Error::Shape(format!(
            "anchor feature {:?} and depth {:?} disagree",
            f_a.shape(),
            d_a.shape()
        )));
    }
    let groups = match &config.strategy {
        crate::identify::Strategy::Disabled => 0,
        crate::identify::Strategy::Uniform { .. } => 1,
        crate::identify::Strategy::MultiRange { ranges } => ranges.len(),
    };
    let margins: Vec<f64> = (1..=groups)
        .map(|j| config.margin(j).unwrap_or(0.0))
        .collect();

    let mut breakdown = LossBreakdown {
        negative: vec![0.0; groups],
        negative_pairs: vec![0; groups],
        ..Default::default()
    };
    let mut grad_anchor = Grid3::zeros(h, w, c)?;
    let mut grad_samples = Vec::with_capacity(samples.len());
    let mut diff = vec![0.0; c];

    for (n, pair) in samples.iter().enumerate() {
        if pair.feature.shape() != f_a.shape() || pair.depth.shape() != (h, w) {
            return Err(Error::Shape(format!(
                "sample {n} has feature {:?} / depth {:?}, anchor is {:?}",
                pair.feature.shape(),
                pair.depth.shape(),
                f_a.shape()
            )));
        }
        let labels = identify(&differential_map(d_a, &pair.depth)?, config)?;
        let mut grad_s = Grid3::zeros(h, w, c)?;
        for (p, &label) in labels.labels().iter().enumerate() {
            // +1 pulls together, -1 pushes apart, 0 contributes no gradient
            let sign = match label {
                Label::Ignored => {
                    breakdown.ignored_pairs += 1;
                    continue;
                }
                Label::Positive => {
                    breakdown.positive_pairs += 1;
                    1.0
                }
                Label::Negative(j) => {
                    breakdown.negative_pairs[j - 1] += 1;
                    -1.0
                }
            };
            let fa = f_a.pixel(p);
            let fs = pair.feature.pixel(p);
            let mut sq = 0.0;
            for k in 0..c {
                diff[k] = fa[k] - fs[k];
                sq += diff[k] * diff[k];
            }
            let dist = sq.sqrt();
            let active = match label {
                Label::Positive => {
                    breakdown.positive += dist;
                    dist > 0.0
                }
                Label::Negative(j) => {
                    let term = margins[j - 1] - dist;
                    if term > 0.0 {
                        breakdown.negative[j - 1] += term;
                    }
                    term > 0.0 && dist > 0.0
                }
                Label::Ignored => unreachable!(),
            };
            if active {
                let scale = sign / dist;
                let ga = grad_anchor.pixel_mut(p);
                for k in 0..c {
                    ga[k] += scale * diff[k];
                }
                let gs = grad_s.pixel_mut(p);
                for k in 0..c {
                    gs[k] -= scale * diff[k];
                }
            }
        }
        grad_samples.push(grad_s);
    }

    let contributing_count =
        breakdown.positive_pairs + breakdown.negative_pairs.iter().sum::<usize>();
    let norm = match config.loss_reduction {
        LossReduction::Sum => 1.0,
        LossReduction::MeanOverContributing if contributing_count > 0 => {
            1.0 / contributing_count as f64
        }
        LossReduction::MeanOverContributing => 0.0,
    };
    if norm != 1.0 {
        breakdown.positive *= norm;
        breakdown.negative.iter_mut().for_each(|v| *v *= norm);
        for g in std::iter::once(&mut grad_anchor).chain(grad_samples.iter_mut()) {
            g.data_mut().iter_mut().for_each(|v| *v *= norm);
        }
    }
    // fixed summation order: positives, then subgroups ascending
    let total = breakdown
        .negative
        .iter()
        .fold(breakdown.positive, |acc, v| acc + v);

    Ok(LossResult {
        total,
        breakdown,
        contributing_count,
        grad_anchor,
        grad_samples,
    })
}

/// Scale-invariant log-depth loss and its gradient with respect to `pred`
/// (a single-channel grid, since gradients may be negative).
///
/// Pixels count when `gt` is valid and positive and `pred` is valid. With
/// `g = ln pred - ln gt` over those `T` pixels the loss is
/// `alpha * sqrt(mean(g^2) - lambda * mean(g)^2)`.
pub fn si_loss(pred: &Grid1, gt: &Grid1, params: &DepthLossParams) -> Result<(f64, Grid3)> {
    params.validate()?;
    if pred.shape() != gt.shape() {
        return Err(Error::Shape(format!(
            "prediction {:?} and ground truth {:?} differ",
            pred.shape(),
            gt.shape()
        )));
    }
    let (h, w) = pred.shape();
    let mut logs = Vec::with_capacity(pred.len());
    for p in 0..pred.len() {
        if !(gt.valid()[p] && gt.values()[p] > 0.0 && pred.valid()[p]) {
            continue;
        }
        let pv = pred.values()[p];
        if pv <= 0.0 {
            return Err(Error::Domain(format!(
                "prediction {pv} at pixel {p} is not positive"
            )));
        }
        logs.push((p, pv.ln() - gt.values()[p].ln()));
    }
    let mut grad = vec![0.0; pred.len()];
    if logs.is_empty() {
        return Ok((0.0, Grid3::new(h, w, 1, grad)?));
    }
    let t = logs.len() as f64;
    let mean_sq = logs.iter().map(|(_, g)| g * g).sum::<f64>() / t;
    let mean = logs.iter().map(|(_, g)| g).sum::<f64>() / t;
    let lambda = params.variance_focus;
    let inner = (mean_sq - lambda * mean * mean).max(0.0);
    let root = inner.sqrt();
    let loss = params.output_scale * root;
    if root > 0.0 {
        let coef = params.output_scale / (2.0 * root);
        for &(p, g) in &logs {
            let d_inner = 2.0 * g / t - 2.0 * lambda * mean / t;
            grad[p] = coef * d_inner / pred.values()[p];
        }
    }
    Ok((loss, Grid3::new(h, w, 1, grad)?))
}

/// `reg.total + w * depth`.
pub fn final_loss(reg: &LossResult, depth: f64, w: f64) -> f64 {
    reg.total + w * depth
}
