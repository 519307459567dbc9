//! Stochastic gradient descent with momentum, L2 weight decay, and a
//! per-epoch exponential learning-rate schedule, operating on the
//! backbone's flat parameter vector.

use serde::{Deserialize, Serialize};

use crate::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Learning-rate multiplier applied after every epoch.
    pub lr_decay: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            momentum: 0.9,
            weight_decay: 1e-6,
            lr_decay: 0.98,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(CoreError::InvalidArgument(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(CoreError::InvalidArgument(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.weight_decay < 0.0 {
            return Err(CoreError::InvalidArgument(format!(
                "weight decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(CoreError::InvalidArgument(format!(
                "lr decay must be in (0, 1], got {}",
                self.lr_decay
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Sgd {
    cfg: SgdConfig,
    lr: f64,
    velocity: Vec<f64>,
}

impl Sgd {
    pub fn new(cfg: SgdConfig, n_params: usize) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            lr: cfg.learning_rate,
            velocity: vec![0.0; n_params],
        })
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr
    }

    /// v = momentum * v - lr * (g + wd * p); p += v.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.velocity.len() || grads.len() != self.velocity.len() {
            return Err(CoreError::Shape(format!(
                "optimizer sized for {} parameters, got {} params and {} grads",
                self.velocity.len(),
                params.len(),
                grads.len()
            )));
        }
        for ((p, &g), v) in params.iter_mut().zip(grads).zip(&mut self.velocity) {
            *v = self.cfg.momentum * *v - self.lr * (g + self.cfg.weight_decay * *p);
            *p += *v;
        }
        Ok(())
    }

    pub fn end_epoch(&mut self) {
        self.lr *= self.cfg.lr_decay;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn descends_a_quadratic() {
        let cfg = SgdConfig {
            learning_rate: 0.1,
            momentum: 0.0,
            weight_decay: 0.0,
            lr_decay: 1.0,
        };
        let mut opt = Sgd::new(cfg, 1).unwrap();
        let mut p = vec![4.0];
        for _ in 0..50 {
            let g = vec![2.0 * p[0]];
            opt.step(&mut p, &g).unwrap();
        }
        assert!(p[0].abs() < 1e-4);
    }

    #[test]
    fn momentum_accumulates_velocity() {
        let cfg = SgdConfig {
            learning_rate: 1.0,
            momentum: 0.5,
            weight_decay: 0.0,
            lr_decay: 1.0,
        };
        let mut opt = Sgd::new(cfg, 1).unwrap();
        let mut p = vec![0.0];
        opt.step(&mut p, &[1.0]).unwrap();
        assert_eq!(p[0], -1.0);
        opt.step(&mut p, &[1.0]).unwrap();
        // v = 0.5 * (-1) - 1 = -1.5, p = -1 - 1.5.
        assert_eq!(p[0], -2.5);
    }

    #[test]
    fn weight_decay_pulls_parameters_toward_zero() {
        let cfg = SgdConfig {
            learning_rate: 0.1,
            momentum: 0.0,
            weight_decay: 0.5,
            lr_decay: 1.0,
        };
        let mut opt = Sgd::new(cfg, 1).unwrap();
        let mut p = vec![2.0];
        opt.step(&mut p, &[0.0]).unwrap();
        assert!((p[0] - (2.0 - 0.1 * 0.5 * 2.0)).abs() < 1e-15);
    }

    #[test]
    fn schedule_decays_exponentially() {
        let cfg = SgdConfig {
            learning_rate: 1.0,
            momentum: 0.0,
            weight_decay: 0.0,
            lr_decay: 0.5,
        };
        let mut opt = Sgd::new(cfg, 0).unwrap();
        opt.end_epoch();
        opt.end_epoch();
        assert_eq!(opt.learning_rate(), 0.25);
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = SgdConfig::default();
        cfg.learning_rate = 0.0;
        assert!(Sgd::new(cfg, 1).is_err());
        let mut cfg = SgdConfig::default();
        cfg.momentum = 1.0;
        assert!(Sgd::new(cfg, 1).is_err());
        let mut cfg = SgdConfig::default();
        cfg.lr_decay = 0.0;
        assert!(Sgd::new(cfg, 1).is_err());
        let mut opt = Sgd::new(SgdConfig::default(), 2).unwrap();
        assert!(opt.step(&mut [0.0], &[0.0]).is_err());
    }
}
