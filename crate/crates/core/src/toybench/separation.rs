//! Feature separation: how much farther apart features of depth-distant
//! pixels are than features of depth-close pixels.

use serde::{Deserialize, Serialize};

use crate::identify::RegConfig;
use crate::tensorgrid::{Grid1, Grid3, SeedRng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeparationParams {
    /// Pairs closer in depth than this count as "near".
    pub r_near: f64,
    /// Pairs farther apart in depth than this count as "far".
    pub r_far: f64,
    /// Random pixel pairs drawn per map.
    pub pairs: usize,
    pub seed: u64,
}

impl Default for SeparationParams {
    fn default() -> Self {
        Self {
            r_near: 0.1,
            r_far: 0.5,
            pairs: 4096,
            seed: 0x5EED,
        }
    }
}

impl SeparationParams {
    /// Thresholds taken from `config`: `r_p` and the first negative bound.
    pub fn from_config(config: &RegConfig) -> Self {
        let d = Self::default();
        Self {
            r_near: config.r_p,
            r_far: config.first_negative_bound().unwrap_or(d.r_far),
            ..d
        }
    }
}

/// Running sums behind the separation ratio; merge several maps into one.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SeparationStats {
    pub far_sum: f64,
    pub far_pairs: usize,
    pub near_sum: f64,
    pub near_pairs: usize,
}

impl SeparationStats {
    pub fn accumulate(
        &mut self,
        features: &Grid3,
        depth: &Grid1,
        params: &SeparationParams,
        rng: &mut SeedRng,
    ) {
        let n = features.pixel_count();
        if n < 2 || depth.shape() != (features.height(), features.width()) {
            return;
        }
        for _ in 0..params.pairs {
            let p = rng.below(n as u64) as usize;
            let q = (p + 1 + rng.below(n as u64 - 1) as usize) % n;
            if !(depth.valid()[p] && depth.valid()[q]) {
                continue;
            }
            let diff = (depth.values()[p] - depth.values()[q]).abs();
            let near = diff < params.r_near;
            let far = diff > params.r_far;
            if !(near || far) {
                continue;
            }
            let dist = features
                .pixel(p)
                .iter()
                .zip(features.pixel(q))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if near {
                self.near_sum += dist;
                self.near_pairs += 1;
            } else {
                self.far_sum += dist;
                self.far_pairs += 1;
            }
        }
    }

    /// Mean far distance over mean near distance. Infinite when no near
    /// pairs were seen or near pairs coincide while far pairs do not; 1 when
    /// both means are zero.
    pub fn ratio(&self) -> f64 {
        if self.near_pairs == 0 {
            return f64::INFINITY;
        }
        let near = self.near_sum / self.near_pairs as f64;
        let far = if self.far_pairs == 0 {
            0.0
        } else {
            self.far_sum / self.far_pairs as f64
        };
        match (near == 0.0, far == 0.0) {
            (true, true) => 1.0,
            (true, false) => f64::INFINITY,
            _ => far / near,
        }
    }
}

pub fn feature_separation(features: &Grid3, depth: &Grid1, params: &SeparationParams) -> f64 {
    let mut stats = SeparationStats::default();
    stats.accumulate(features, depth, params, &mut SeedRng::new(params.seed));
    stats.ratio()
}

/// Pooled statistic over several maps, pairs drawn from one seeded stream.
pub fn feature_separation_set<'a>(
    maps: impl IntoIterator<Item = (&'a Grid3, &'a Grid1)>,
    params: &SeparationParams,
) -> f64 {
    let mut stats = SeparationStats::default();
    let mut rng = SeedRng::new(params.seed);
    for (f, d) in maps {
        stats.accumulate(f, d, params, &mut rng);
    }
    stats.ratio()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn depth(seed: u64) -> Grid1 {
        let mut rng = SeedRng::new(seed);
        // piecewise-flat so near pairs exist
        Grid1::dense(8, 8, (0..64).map(|_| 0.5 + rng.below(6) as f64).collect()).unwrap()
    }

    #[test]
    fn constant_features_give_one() {
        let f = Grid3::from_fn(8, 8, 4, |_, _, _| 0.7).unwrap();
        assert_eq!(
            feature_separation(&f, &depth(1), &SeparationParams::default()),
            1.0
        );
    }

    #[test]
    fn depth_features_separate() {
        let d = depth(2);
        let f = Grid3::from_fn(8, 8, 3, |i, j, _| d.get(i, j)).unwrap();
        let r = feature_separation(&f, &d, &SeparationParams::default());
        assert!(r > 1.0);
        assert!(
            r.is_infinite(),
            "near pairs have identical features, got {r}"
        );
        let mut rng = SeedRng::new(3);
        let noisy = Grid3::from_fn(8, 8, 3, |i, j, _| d.get(i, j) + 0.01 * rng.normal()).unwrap();
        let r = feature_separation(&noisy, &d, &SeparationParams::default());
        assert!(r.is_finite() && r > 10.0, "{r}");
    }

    #[test]
    fn no_near_pairs_is_infinite() {
        let d = Grid1::dense(1, 2, vec![1.0, 5.0]).unwrap();
        let f = Grid3::new(1, 2, 1, vec![0.0, 1.0]).unwrap();
        assert!(feature_separation(&f, &d, &SeparationParams::default()).is_infinite());
    }

    #[test]
    fn params_follow_config() {
        let p = SeparationParams::from_config(&RegConfig::uniform(0.2, 1.0, 4.0));
        assert_eq!((p.r_near, p.r_far), (0.2, 1.0));
        let p = SeparationParams::from_config(&RegConfig::disabled());
        assert_eq!((p.r_near, p.r_far), (0.1, 0.5));
    }
}
