//! Sample-set construction for an anchor feature map.
//!
//! Two collectors feed the set. Within-map samples are circular shifts of the
//! anchor's own feature and depth maps (same seeds for both, so every sample
//! pixel stays paired with its own depth). Across-batch samples are other
//! items of the training batch, chosen by a random offset from the anchor so
//! the anchor never pairs with itself.

use crate::error::{Error, Result};
use crate::tensorgrid::{gen_shift_seed, Grid1, Grid3, SeedRng};

/// Where a sample map came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    /// Anchor maps rolled by `(s_h, s_w)`.
    Within { s_h: usize, s_w: usize },
    /// Batch item at `(anchor + offset) mod K`.
    Across { offset: usize, index: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplePair {
    pub feature: Grid3,
    pub depth: Grid1,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampleSet {
    pub pairs: Vec<SamplePair>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &SamplePair> {
        self.pairs.iter()
    }
}

/// K feature/depth pairs sharing one shape.
#[derive(Debug, Clone)]
pub struct Batch {
    items: Vec<(Grid3, Grid1)>,
}

impl Batch {
    pub fn new(items: Vec<(Grid3, Grid1)>) -> Result<Self> {
        let Some((f0, _)) = items.first() else {
            return Err(Error::InvalidDimension(
                "batch must hold at least one item".into(),
            ));
        };
        let shape = f0.shape();
        for (k, (f, d)) in items.iter().enumerate() {
            if f.shape() != shape || d.shape() != (shape.0, shape.1) {
                return Err(Error::Shape(format!(
                    "batch item {k} has feature {:?} / depth {:?}, expected {:?}",
                    f.shape(),
                    d.shape(),
                    shape
                )));
            }
        }
        Ok(Self { items })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, k: usize) -> &(Grid3, Grid1) {
        &self.items[k]
    }

    pub fn items(&self) -> &[(Grid3, Grid1)] {
        &self.items
    }
}

fn check_pair(f: &Grid3, d: &Grid1) -> Result<()> {
    if d.shape() != (f.height(), f.width()) {
        return Err(Error::Shape(format!(
            "feature {:?} and depth {:?} disagree",
            f.shape(),
            d.shape()
        )));
    }
    Ok(())
}

pub fn collect_within(
    f_a: &Grid3,
    d_a: &Grid1,
    n_within: usize,
    rng: &mut SeedRng,
) -> Result<SampleSet> {
    check_pair(f_a, d_a)?;
    if f_a.height() < 2 || f_a.width() < 2 {
        return Err(Error::InvalidDimension(format!(
            "within-map shifting needs H, W >= 2, got {}x{}",
            f_a.height(),
            f_a.width()
        )));
    }
    let mut pairs = Vec::with_capacity(n_within);
    for _ in 0..n_within {
        let s_h = gen_shift_seed(rng, f_a.height())?;
        let s_w = gen_shift_seed(rng, f_a.width())?;
        pairs.push(SamplePair {
            feature: f_a.shift2d(s_h, s_w)?,
            depth: d_a.shift2d(s_h, s_w)?,
            provenance: Provenance::Within { s_h, s_w },
        });
    }
    Ok(SampleSet { pairs })
}

pub fn collect_across(
    batch: &Batch,
    anchor_index: usize,
    n_across: usize,
    rng: &mut SeedRng,
) -> Result<SampleSet> {
    let k = batch.len();
    if anchor_index >= k {
        return Err(Error::InvalidDimension(format!(
            "anchor index {anchor_index} outside batch of {k}"
        )));
    }
    if n_across == 0 {
        return Ok(SampleSet::default());
    }
    if k < 2 {
        return Err(Error::InsufficientBatch { batch: k });
    }
    let mut pairs = Vec::with_capacity(n_across);
    for _ in 0..n_across {
        let offset = gen_shift_seed(rng, k)?;
        let index = (anchor_index + offset) % k;
        let (f, d) = batch.get(index);
        pairs.push(SamplePair {
            feature: f.clone(),
            depth: d.clone(),
            provenance: Provenance::Across { offset, index },
        });
    }
    Ok(SampleSet { pairs })
}

/// Within-map samples first, then across-batch samples.
pub fn build_sample_set(
    f_a: &Grid3,
    d_a: &Grid1,
    batch: &Batch,
    anchor_index: usize,
    n_within: usize,
    n_across: usize,
    rng: &mut SeedRng,
) -> Result<SampleSet> {
    if f_a.shape() != batch.get(0).0.shape() && n_across > 0 {
        return Err(Error::Shape(format!(
            "anchor {:?} does not match batch items {:?}",
            f_a.shape(),
            batch.get(0).0.shape()
        )));
    }
    let mut set = collect_within(f_a, d_a, n_within, rng)?;
    set.pairs
        .extend(collect_across(batch, anchor_index, n_across, rng)?.pairs);
    Ok(set)
}
