//! Procedural depth scenes: a tilted background ramp with a few flat
//! rectangles and disks in front of it, rendered into a small multi-channel
//! image whose pixels encode depth under per-surface shading and noise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensorgrid::{Grid1, Grid3, SeedRng};

/// Bumped whenever the generator's output for a given seed changes.
pub const GENERATOR_VERSION: u32 = 1;

pub const IMAGE_CHANNELS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneParams {
    pub height: usize,
    pub width: usize,
    pub d_min: f64,
    pub d_max: f64,
    /// Standard deviation of the additive pixel noise.
    #[serde(default = "default_noise")]
    pub noise: f64,
}

fn default_noise() -> f64 {
    0.02
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            height: 64,
            width: 64,
            d_min: 0.5,
            d_max: 10.0,
            noise: default_noise(),
        }
    }
}

impl SceneParams {
    pub fn validate(&self) -> Result<()> {
        if self.height < 8 || self.width < 8 {
            return Err(Error::InvalidConfig(format!(
                "scenes must be at least 8x8, got {}x{}",
                self.height, self.width
            )));
        }
        if !(self.d_min.is_finite()
            && self.d_max.is_finite()
            && 0.0 < self.d_min
            && self.d_min < self.d_max)
        {
            return Err(Error::InvalidConfig(format!(
                "need 0 < d_min < d_max, got [{}, {}]",
                self.d_min, self.d_max
            )));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "noise must be >= 0, got {}",
                self.noise
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub image: Grid3,
    pub depth: Grid1,
    pub seed: u64,
}

enum Shape {
    Rect {
        top: f64,
        left: f64,
        bottom: f64,
        right: f64,
    },
    Disk {
        ci: f64,
        cj: f64,
        radius: f64,
    },
}

impl Shape {
    fn contains(&self, i: f64, j: f64) -> bool {
        match *self {
            Shape::Rect {
                top,
                left,
                bottom,
                right,
            } => top <= i && i < bottom && left <= j && j < right,
            Shape::Disk { ci, cj, radius } => (i - ci).powi(2) + (j - cj).powi(2) < radius * radius,
        }
    }
}

/// Generates the scene for `seed`. Identical arguments give bit-identical
/// scenes.
pub fn gen_scene(seed: u64, params: &SceneParams) -> Result<SyntheticScene> {
    params.validate()?;
    let SceneParams {
        height: h,
        width: w,
        d_min,
        d_max,
        noise,
    } = *params;
    let span = d_max - d_min;
    let mut rng = SeedRng::stream(seed, GENERATOR_VERSION as u64);

    // Background: far at the top, nearer towards the bottom, with a lateral tilt.
    let far = d_min + span * rng.uniform(0.55, 1.0);
    let near = d_min + span * rng.uniform(0.0, 0.45);
    let tilt = span * rng.uniform(-0.15, 0.15);
    let bg_shade = rng.uniform(0.5, 1.0);

    let n_objects = 2 + rng.below(5) as usize;
    let mut objects = Vec::with_capacity(n_objects);
    for _ in 0..n_objects {
        let shape = if rng.below(2) == 0 {
            let (rh, rw) = (
                rng.uniform(0.1, 0.45) * h as f64,
                rng.uniform(0.1, 0.45) * w as f64,
            );
            let top = rng.uniform(0.0, h as f64 - rh);
            let left = rng.uniform(0.0, w as f64 - rw);
            Shape::Rect {
                top,
                left,
                bottom: top + rh,
                right: left + rw,
            }
        } else {
            Shape::Disk {
                ci: rng.uniform(0.0, h as f64),
                cj: rng.uniform(0.0, w as f64),
                radius: rng.uniform(0.06, 0.25) * h.min(w) as f64,
            }
        };
        let depth = d_min + span * rng.next_f64();
        let shade = rng.uniform(0.5, 1.0);
        objects.push((shape, depth, shade));
    }
    // painter's order: far objects first so nearer ones occlude them
    objects.sort_by(|a, b| b.1.total_cmp(&a.1));

    let mut depth = Vec::with_capacity(h * w);
    let mut shade = Vec::with_capacity(h * w);
    for i in 0..h {
        let v = i as f64 / (h - 1) as f64;
        for j in 0..w {
            let u = j as f64 / (w - 1) as f64 - 0.5;
            let mut d = far + (near - far) * v + tilt * u;
            let mut s = bg_shade;
            for (shape, od, os) in &objects {
                if shape.contains(i as f64 + 0.5, j as f64 + 0.5) {
                    d = *od;
                    s = *os;
                }
            }
            depth.push(d.clamp(d_min, d_max));
            shade.push(s);
        }
    }

    let (ln_min, ln_span) = (d_min.ln(), d_max.ln() - d_min.ln());
    let mut image = Vec::with_capacity(h * w * IMAGE_CHANNELS);
    for (&d, &s) in depth.iter().zip(&shade) {
        let t = (d.ln() - ln_min) / ln_span;
        let channels = [s * (1.0 - t), s, s * t * t];
        for c in channels {
            image.push((c + noise * rng.normal()).clamp(0.0, 1.0));
        }
    }

    Ok(SyntheticScene {
        image: Grid3::new(h, w, IMAGE_CHANNELS, image)?,
        depth: Grid1::dense(h, w, depth)?,
        seed,
    })
}
