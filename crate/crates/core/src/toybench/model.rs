//! Per-pixel depth model with hand-written backpropagation.
//!
//! ```text
//! x (C_in) -> tanh(W1 x + b1) (hidden) -> leaky(W2 h + b2) (C) = features
//! features -> exp(w . f + b) = predicted depth
//! ```
//!
//! The feature map is the one handed to the regularizer. All parameters live
//! in one flat vector so the optimizer and finite-difference checks can treat
//! them uniformly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensorgrid::{Grid1, Grid3, SeedRng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub input_channels: usize,
    pub hidden: usize,
    pub features: usize,
    pub leaky_slope: f64,
    /// Initial head bias; `exp` of it is the starting depth guess.
    pub head_bias: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_channels: super::scene::IMAGE_CHANNELS,
            hidden: 16,
            features: 8,
            leaky_slope: 0.1,
            head_bias: 0.0,
        }
    }
}

impl ModelConfig {
    pub fn param_count(&self) -> usize {
        let (i, h, f) = (self.input_channels, self.hidden, self.features);
        h * i + h + f * h + f + f + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_channels == 0 || self.hidden == 0 || self.features == 0 {
            return Err(Error::InvalidConfig("model widths must be positive".into()));
        }
        if self.param_count() >= 10_000 {
            return Err(Error::InvalidConfig(format!(
                "model has {} parameters, limit is 9999",
                self.param_count()
            )));
        }
        if !(0.0..1.0).contains(&self.leaky_slope) {
            return Err(Error::InvalidConfig(format!(
                "leaky_slope must lie in [0, 1), got {}",
                self.leaky_slope
            )));
        }
        Ok(())
    }

    fn offsets(&self) -> Offsets {
        let (i, h, f) = (self.input_channels, self.hidden, self.features);
        let w1 = 0;
        let b1 = w1 + h * i;
        let w2 = b1 + h;
        let b2 = w2 + f * h;
        let head_w = b2 + f;
        let head_b = head_w + f;
        Offsets {
            w1,
            b1,
            w2,
            b2,
            head_w,
            head_b,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Offsets {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    head_w: usize,
    head_b: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyModel {
    pub config: ModelConfig,
    pub params: Vec<f64>,
}

/// Intermediates of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    hidden: Vec<f64>,
    pre_features: Vec<f64>,
}

impl ToyModel {
    /// Scaled-normal initialization of both stages; the head starts with
    /// small weights and the configured bias.
    pub fn init(config: ModelConfig, rng: &mut SeedRng) -> Result<Self> {
        config.validate()?;
        let mut params = vec![0.0; config.param_count()];
        let o = config.offsets();
        let (i, h, f) = (config.input_channels, config.hidden, config.features);
        let s1 = 2.0 / (i as f64).sqrt();
        for p in &mut params[o.w1..o.b1] {
            *p = s1 * rng.normal();
        }
        for p in &mut params[o.b1..o.w2] {
            *p = 0.5 * rng.normal();
        }
        let s2 = 1.0 / (h as f64).sqrt();
        for p in &mut params[o.w2..o.b2] {
            *p = s2 * rng.normal();
        }
        let s3 = 0.1 / (f as f64).sqrt();
        for p in &mut params[o.head_w..o.head_b] {
            *p = s3 * rng.normal();
        }
        params[o.head_b] = config.head_bias;
        Ok(Self { config, params })
    }

    pub fn from_params(config: ModelConfig, params: Vec<f64>) -> Result<Self> {
        config.validate()?;
        if params.len() != config.param_count() {
            return Err(Error::Shape(format!(
                "model needs {} parameters, got {}",
                config.param_count(),
                params.len()
            )));
        }
        Ok(Self { config, params })
    }

    /// Sets the prediction head (weights and bias) to zero.
    pub fn zero_head(&mut self) {
        let o = self.config.offsets();
        self.params[o.head_w..].iter_mut().for_each(|p| *p = 0.0);
    }

    pub fn forward(&self, image: &Grid3) -> Result<(Grid3, Grid1, ForwardCache)> {
        let cfg = &self.config;
        if image.channels() != cfg.input_channels {
            return Err(Error::Shape(format!(
                "model expects {} input channels, image has {}",
                cfg.input_channels,
                image.channels()
            )));
        }
        let o = cfg.offsets();
        let (hd, fd) = (cfg.hidden, cfg.features);
        let p = &self.params;
        let n = image.pixel_count();
        let mut hidden = vec![0.0; n * hd];
        let mut pre = vec![0.0; n * fd];
        let mut feats = vec![0.0; n * fd];
        let mut pred = vec![0.0; n];
        for px in 0..n {
            let x = image.pixel(px);
            let hrow = &mut hidden[px * hd..(px + 1) * hd];
            for (u, hv) in hrow.iter_mut().enumerate() {
                let wrow = &p[o.w1 + u * cfg.input_channels..o.w1 + (u + 1) * cfg.input_channels];
                let z = p[o.b1 + u] + wrow.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
                *hv = z.tanh();
            }
            let mut logit = p[o.head_b];
            for k in 0..fd {
                let wrow = &p[o.w2 + k * hd..o.w2 + (k + 1) * hd];
                let z = p[o.b2 + k]
                    + wrow
                        .iter()
                        .zip(hrow.iter())
                        .map(|(a, b)| a * b)
                        .sum::<f64>();
                pre[px * fd + k] = z;
                let f = if z > 0.0 { z } else { cfg.leaky_slope * z };
                feats[px * fd + k] = f;
                logit += p[o.head_w + k] * f;
            }
            pred[px] = logit.exp();
        }
        if let Some(bad) = pred.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::Domain(format!(
                "prediction {bad} is not a positive finite depth"
            )));
        }
        let features = Grid3::new(image.height(), image.width(), fd, feats)?;
        let pred = Grid1::dense(image.height(), image.width(), pred)?;
        Ok((
            features,
            pred,
            ForwardCache {
                hidden,
                pre_features: pre,
            },
        ))
    }

    /// Accumulates into `grads` the parameter gradient of a loss whose
    /// gradients with respect to the features and predictions of this
    /// forward pass are `grad_features` and `grad_pred`.
    pub fn backward(
        &self,
        image: &Grid3,
        cache: &ForwardCache,
        pred: &Grid1,
        grad_features: &Grid3,
        grad_pred: &Grid3,
        grads: &mut [f64],
    ) -> Result<()> {
        let cfg = &self.config;
        let (ci, hd, fd) = (cfg.input_channels, cfg.hidden, cfg.features);
        let n = image.pixel_count();
        if grads.len() != self.params.len()
            || grad_features.shape() != (image.height(), image.width(), fd)
            || grad_pred.shape() != (image.height(), image.width(), 1)
            || cache.hidden.len() != n * hd
        {
            return Err(Error::Shape(
                "backward inputs do not match the forward pass".into(),
            ));
        }
        let o = cfg.offsets();
        let p = &self.params;
        let mut d_pre = vec![0.0; fd];
        let mut d_hidden = vec![0.0; hd];
        for px in 0..n {
            let h = &cache.hidden[px * hd..(px + 1) * hd];
            let pre = &cache.pre_features[px * fd..(px + 1) * fd];
            let d_logit = grad_pred.data()[px] * pred.values()[px];
            grads[o.head_b] += d_logit;
            let gf = grad_features.pixel(px);
            for k in 0..fd {
                let z = pre[k];
                let (f, slope) = if z > 0.0 {
                    (z, 1.0)
                } else {
                    (cfg.leaky_slope * z, cfg.leaky_slope)
                };
                grads[o.head_w + k] += d_logit * f;
                d_pre[k] = (gf[k] + d_logit * p[o.head_w + k]) * slope;
            }
            d_hidden.iter_mut().for_each(|v| *v = 0.0);
            for k in 0..fd {
                let dz = d_pre[k];
                if dz == 0.0 {
                    continue;
                }
                grads[o.b2 + k] += dz;
                let row = o.w2 + k * hd;
                for u in 0..hd {
                    grads[row + u] += dz * h[u];
                    d_hidden[u] += dz * p[row + u];
                }
            }
            let x = image.pixel(px);
            for u in 0..hd {
                let dz = d_hidden[u] * (1.0 - h[u] * h[u]);
                grads[o.b1 + u] += dz;
                let row = o.w1 + u * ci;
                for c in 0..ci {
                    grads[row + c] += dz * x[c];
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toybench::scene::{gen_scene, SceneParams};

    fn scene() -> crate::toybench::scene::SyntheticScene {
        let p = SceneParams {
            height: 8,
            width: 8,
            ..SceneParams::default()
        };
        gen_scene(3, &p).unwrap()
    }

    #[test]
    fn zero_head_predicts_one() {
        let mut m = ToyModel::init(ModelConfig::default(), &mut SeedRng::new(1)).unwrap();
        m.zero_head();
        let (_, pred, _) = m.forward(&scene().image).unwrap();
        assert!(pred.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn forward_is_deterministic() {
        let m = ToyModel::init(ModelConfig::default(), &mut SeedRng::new(2)).unwrap();
        let s = scene();
        let (f1, p1, _) = m.forward(&s.image).unwrap();
        let (f2, p2, _) = m.forward(&s.image).unwrap();
        assert_eq!(f1, f2);
        assert_eq!(p1, p2);
        assert_eq!(f1.channels(), 8);
    }

    #[test]
    fn parameter_budget_and_shapes() {
        let cfg = ModelConfig::default();
        assert!(cfg.param_count() < 10_000);
        assert_eq!(
            ToyModel::init(cfg, &mut SeedRng::new(0))
                .unwrap()
                .params
                .len(),
            cfg.param_count()
        );
        let huge = ModelConfig {
            hidden: 1000,
            features: 64,
            ..cfg
        };
        assert!(huge.validate().is_err());
        let m = ToyModel::init(cfg, &mut SeedRng::new(0)).unwrap();
        let wrong = Grid3::zeros(8, 8, 4).unwrap();
        assert!(matches!(m.forward(&wrong), Err(Error::Shape(_))));
        assert!(ToyModel::from_params(cfg, vec![0.0; 3]).is_err());
    }

    #[test]
    fn backward_matches_finite_differences_on_linear_readout() {
        // loss = sum(a . features) + sum(b * pred)
        let m = ToyModel::init(ModelConfig::default(), &mut SeedRng::new(4)).unwrap();
        let s = scene();
        let mut rng = SeedRng::new(8);
        let a = Grid3::from_fn(8, 8, 8, |_, _, _| rng.normal()).unwrap();
        let b = Grid3::new(8, 8, 1, (0..64).map(|_| rng.normal()).collect()).unwrap();
        let loss = |model: &ToyModel| {
            let (f, p, _) = model.forward(&s.image).unwrap();
            f.data()
                .iter()
                .zip(a.data())
                .map(|(x, y)| x * y)
                .sum::<f64>()
                + p.values()
                    .iter()
                    .zip(b.data())
                    .map(|(x, y)| x * y)
                    .sum::<f64>()
        };
        let (_, pred, cache) = m.forward(&s.image).unwrap();
        let mut g = vec![0.0; m.params.len()];
        m.backward(&s.image, &cache, &pred, &a, &b, &mut g).unwrap();
        let eps = 1e-6;
        for (k, &gk) in g.iter().enumerate() {
            let mut up = m.clone();
            up.params[k] += eps;
            let mut dn = m.clone();
            dn.params[k] -= eps;
            let fd = (loss(&up) - loss(&dn)) / (2.0 * eps);
            let err = (fd - gk).abs() / fd.abs().max(gk.abs()).max(1e-3);
            assert!(err < 1e-5, "param {k}: analytic {gk} vs numeric {fd}");
        }
    }
}
