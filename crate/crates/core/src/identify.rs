//! Depth-differential sample identification.
//!
//! Every sample pixel is labelled relative to the anchor pixel at the same
//! position by the absolute difference of their ground-truth depths: below
//! `r_p` it is a positive, inside a negative range it is a negative of that
//! range's subgroup, anywhere else it is ignored. Boundaries are strict, so a
//! differential exactly equal to a threshold is ignored, as are pixels whose
//! depth is invalid in either map.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensorgrid::{io, Grid1};

/// One negative subgroup: differentials in the open interval `(low, high)`
/// are pushed at least `margin` apart in feature space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NegativeRange {
    pub low: f64,
    pub high: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Strategy {
    /// No regularization; every pixel is ignored.
    Disabled,
    /// Single negative group above `r_n` with one margin.
    Uniform { r_n: f64, margin: f64 },
    /// Negative subgroups by differential range, each with its own margin.
    MultiRange { ranges: Vec<NegativeRange> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossReduction {
    /// Plain double sum over samples and pixels.
    Sum,
    /// Sum divided by the number of non-ignored (sample, pixel) pairs.
    #[default]
    MeanOverContributing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegConfig {
    pub r_p: f64,
    pub strategy: Strategy,
    #[serde(default = "default_n_within")]
    pub n_within: usize,
    #[serde(default = "default_n_across")]
    pub n_across: usize,
    #[serde(default)]
    pub loss_reduction: LossReduction,
    #[serde(default = "default_depth_weight")]
    pub depth_loss_weight: f64,
}

fn default_n_within() -> usize {
    10
}

fn default_n_across() -> usize {
    4
}

fn default_depth_weight() -> f64 {
    1.0
}

impl Default for RegConfig {
    /// Multi-range `0.5-1, 1-1.5, 1.5-2` with margins `3, 6, 8`.
    fn default() -> Self {
        Self::multi_range(0.1, &[(0.5, 1.0, 3.0), (1.0, 1.5, 6.0), (1.5, 2.0, 8.0)])
    }
}

impl RegConfig {
    pub fn uniform(r_p: f64, r_n: f64, margin: f64) -> Self {
        Self {
            r_p,
            strategy: Strategy::Uniform { r_n, margin },
            n_within: default_n_within(),
            n_across: default_n_across(),
            loss_reduction: LossReduction::default(),
            depth_loss_weight: default_depth_weight(),
        }
    }

    pub fn multi_range(r_p: f64, ranges: &[(f64, f64, f64)]) -> Self {
        Self {
            strategy: Strategy::MultiRange {
                ranges: ranges
                    .iter()
                    .map(|&(low, high, margin)| NegativeRange { low, high, margin })
                    .collect(),
            },
            ..Self::uniform(r_p, r_p, 1.0)
        }
    }

    pub fn disabled() -> Self {
        Self {
            strategy: Strategy::Disabled,
            ..Self::default()
        }
    }

    pub fn with_reduction(mut self, reduction: LossReduction) -> Self {
        self.loss_reduction = reduction;
        self
    }

    pub fn with_counts(mut self, n_within: usize, n_across: usize) -> Self {
        self.n_within = n_within;
        self.n_across = n_across;
        self
    }

    pub fn is_enabled(&self) -> bool {
        !matches!(self.strategy, Strategy::Disabled)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.r_p.is_finite() && self.r_p > 0.0) {
            return bad(format!("r_p must be > 0, got {}", self.r_p));
        }
        if !(self.depth_loss_weight.is_finite() && self.depth_loss_weight >= 0.0) {
            return bad(format!(
                "depth_loss_weight must be >= 0, got {}",
                self.depth_loss_weight
            ));
        }
        match &self.strategy {
            Strategy::Disabled => {}
            Strategy::Uniform { r_n, margin } => {
                if !(r_n.is_finite() && *r_n >= self.r_p) {
                    return bad(format!("r_n ({r_n}) must be >= r_p ({})", self.r_p));
                }
                if !(margin.is_finite() && *margin > 0.0) {
                    return bad(format!("uniform margin must be > 0, got {margin}"));
                }
            }
            Strategy::MultiRange { ranges } => {
                if ranges.is_empty() {
                    return bad("multi-range strategy needs at least one range".into());
                }
                if ranges[0].low < self.r_p {
                    return bad(format!(
                        "first range starts at {} below r_p ({})",
                        ranges[0].low, self.r_p
                    ));
                }
                for (j, r) in ranges.iter().enumerate() {
                    if !(r.low.is_finite() && r.low < r.high) {
                        return bad(format!(
                            "range {} has low {} >= high {}",
                            j + 1,
                            r.low,
                            r.high
                        ));
                    }
                    if !(r.margin.is_finite() && r.margin > 0.0) {
                        return bad(format!(
                            "range {} margin must be > 0, got {}",
                            j + 1,
                            r.margin
                        ));
                    }
                    if j > 0 && ranges[j - 1].high > r.low {
                        return bad(format!(
                            "ranges {} and {} overlap or are unsorted",
                            j,
                            j + 1
                        ));
                    }
                }
                if ranges.len() > 254 {
                    return bad("at most 254 negative ranges are supported".into());
                }
            }
        }
        Ok(())
    }

    /// Margin of negative subgroup `j` (1-based).
    pub fn margin(&self, j: usize) -> Option<f64> {
        match &self.strategy {
            Strategy::Disabled => None,
            Strategy::Uniform { margin, .. } => (j == 1).then_some(*margin),
            Strategy::MultiRange { ranges } => j
                .checked_sub(1)
                .and_then(|k| ranges.get(k))
                .map(|r| r.margin),
        }
    }

    /// Lower differential bound of the first negative group.
    pub fn first_negative_bound(&self) -> Option<f64> {
        match &self.strategy {
            Strategy::Disabled => None,
            Strategy::Uniform { r_n, .. } => Some(*r_n),
            Strategy::MultiRange { ranges } => ranges.first().map(|r| r.low),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Positive,
    /// 1-based negative subgroup index.
    Negative(usize),
    Ignored,
}

impl Label {
    /// PGM encoding: positive 0, negative j as j, ignored 255.
    pub fn to_byte(self) -> u8 {
        match self {
            Label::Positive => 0,
            Label::Negative(j) => j.min(254) as u8,
            Label::Ignored => 255,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdentMap {
    height: usize,
    width: usize,
    labels: Vec<Label>,
}

impl IdentMap {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn get(&self, i: usize, j: usize) -> Label {
        self.labels[i * self.width + j]
    }

    pub fn ignored_count(&self) -> usize {
        self.labels.iter().filter(|l| **l == Label::Ignored).count()
    }

    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        let bytes: Vec<u8> = self.labels.iter().map(|l| l.to_byte()).collect();
        io::write_pgm(path, self.height, self.width, &bytes)
    }
}

/// `|d_a - d_s|`, valid only where both inputs are valid.
pub fn differential_map(d_a: &Grid1, d_s: &Grid1) -> Result<Grid1> {
    if d_a.shape() != d_s.shape() {
        return Err(Error::Shape(format!(
            "depth maps {:?} and {:?} differ",
            d_a.shape(),
            d_s.shape()
        )));
    }
    let valid: Vec<bool> = d_a
        .valid()
        .iter()
        .zip(d_s.valid())
        .map(|(a, b)| *a && *b)
        .collect();
    let values = d_a
        .values()
        .iter()
        .zip(d_s.values())
        .zip(&valid)
        .map(|((a, b), ok)| if *ok { (a - b).abs() } else { 0.0 })
        .collect();
    Grid1::new(d_a.height(), d_a.width(), values, valid)
}

fn label_map(d_r: &Grid1, classify: impl Fn(f64) -> Label) -> IdentMap {
    let labels = d_r
        .values()
        .iter()
        .zip(d_r.valid())
        .map(|(&v, &ok)| if ok { classify(v) } else { Label::Ignored })
        .collect();
    IdentMap {
        height: d_r.height(),
        width: d_r.width(),
        labels,
    }
}

pub(crate) fn classify_uniform(v: f64, r_p: f64, r_n: f64) -> Label {
    if v < r_p {
        Label::Positive
    } else if v > r_n {
        Label::Negative(1)
    } else {
        Label::Ignored
    }
}

pub(crate) fn classify_ranges(v: f64, r_p: f64, ranges: &[NegativeRange]) -> Label {
    if v < r_p {
        return Label::Positive;
    }
    // ranges are sorted; first with high > v is the only candidate
    let k = ranges.partition_point(|r| r.high <= v);
    match ranges.get(k) {
        Some(r) if r.low < v => Label::Negative(k + 1),
        _ => Label::Ignored,
    }
}

pub fn identify_uniform(d_r: &Grid1, r_p: f64, r_n: f64) -> Result<IdentMap> {
    if !matches!(
        r_p.partial_cmp(&r_n),
        Some(std::cmp::Ordering::Less | std::cmp::Ordering::Equal)
    ) {
        return Err(Error::InvalidConfig(format!(
            "r_p ({r_p}) exceeds r_n ({r_n})"
        )));
    }
    Ok(label_map(d_r, |v| classify_uniform(v, r_p, r_n)))
}

pub fn identify_multirange(d_r: &Grid1, config: &RegConfig) -> Result<IdentMap> {
    config.validate()?;
    let Strategy::MultiRange { ranges } = &config.strategy else {
        return Err(Error::InvalidConfig(
            "expected a multi-range strategy".into(),
        ));
    };
    Ok(label_map(d_r, |v| classify_ranges(v, config.r_p, ranges)))
}

/// Labels under whichever strategy `config` selects.
pub fn identify(d_r: &Grid1, config: &RegConfig) -> Result<IdentMap> {
    match &config.strategy {
        Strategy::Disabled => Ok(label_map(d_r, |_| Label::Ignored)),
        Strategy::Uniform { r_n, .. } => {
            config.validate()?;
            identify_uniform(d_r, config.r_p, *r_n)
        }
        Strategy::MultiRange { .. } => identify_multirange(d_r, config),
    }
}
