//! Seeded random problem instances for the checks.

use crate::error::Result;
use crate::identify::{LossReduction, RegConfig};
use crate::sampling::{Provenance, SamplePair, SampleSet};
use crate::tensorgrid::{Grid1, Grid3, SeedRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrategyKind {
    Uniform,
    MultiRange,
}

#[derive(Debug, Clone)]
pub struct RegInstance {
    pub f_a: Grid3,
    pub d_a: Grid1,
    pub samples: SampleSet,
    pub config: RegConfig,
}

/// Reference configurations: uniform `(0.1, 0.5, 4)` and multi-range
/// `0.5-1, 1-1.5, 1.5-2` with margins `3, 6, 8`.
pub fn reference_config(kind: StrategyKind) -> RegConfig {
    match kind {
        StrategyKind::Uniform => RegConfig::uniform(0.1, 0.5, 4.0),
        StrategyKind::MultiRange => RegConfig::default(),
    }
}

/// Depth value mixing exact quarter-metre steps (so differentials land on
/// range bounds exactly), the pair 0 / 0.1 and continuous values.
fn depth_value(rng: &mut SeedRng) -> f64 {
    match rng.below(8) {
        0..=2 => 0.5 + 0.25 * rng.below(14) as f64,
        3 => 0.1 * rng.below(2) as f64,
        _ => rng.uniform(0.0, 4.0),
    }
}

pub fn random_depth(rng: &mut SeedRng, h: usize, w: usize, invalid_rate: f64) -> Result<Grid1> {
    let n = h * w;
    let values: Vec<f64> = (0..n).map(|_| depth_value(rng)).collect();
    let valid: Vec<bool> = (0..n).map(|_| rng.next_f64() >= invalid_rate).collect();
    Grid1::new(h, w, values, valid)
}

pub fn random_features(
    rng: &mut SeedRng,
    h: usize,
    w: usize,
    c: usize,
    scale: f64,
) -> Result<Grid3> {
    Grid3::from_fn(h, w, c, |_, _, _| scale * rng.normal())
}

/// Instance with `H, W <= 4`, `C <= 5` and one to three sample maps.
pub fn random_reg_instance(
    rng: &mut SeedRng,
    kind: StrategyKind,
    reduction: LossReduction,
) -> Result<RegInstance> {
    let h = 1 + rng.below(4) as usize;
    let w = 1 + rng.below(4) as usize;
    let c = 1 + rng.below(5) as usize;
    let n = 1 + rng.below(3) as usize;
    let f_a = random_features(rng, h, w, c, 2.0)?;
    let d_a = random_depth(rng, h, w, 0.1)?;
    let mut pairs = Vec::with_capacity(n);
    for k in 0..n {
        pairs.push(SamplePair {
            feature: random_features(rng, h, w, c, 2.0)?,
            depth: random_depth(rng, h, w, 0.1)?,
            provenance: Provenance::Across {
                offset: k + 1,
                index: k + 1,
            },
        });
    }
    Ok(RegInstance {
        f_a,
        d_a,
        samples: SampleSet { pairs },
        config: reference_config(kind).with_reduction(reduction),
    })
}
