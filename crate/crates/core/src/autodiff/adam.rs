use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimError {
    #[error("parameter {index}: shape {param:?} does not match gradient {grad:?}")]
    ShapeMismatch {
        index: usize,
        param: Vec<usize>,
        grad: Vec<usize>,
    },
    #[error("expected {expected} gradients, got {got}")]
    CountMismatch { expected: usize, got: usize },
    #[error("non-finite gradient in parameter {index} at optimizer step {step}")]
    Divergence { step: u64, index: usize },
    #[error("invalid Adam hyperparameters: {0}")]
    InvalidConfig(&'static str),
}

/// Adam with bias-corrected moment estimates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub config: AdamConfig,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    step: u64,
}

impl Adam {
    /// Zero-initialized state for parameters with the given shapes.
    pub fn new(config: AdamConfig, params: &[&Tensor]) -> Result<Self, OptimError> {
        if !(config.eps > 0.0) {
            return Err(OptimError::InvalidConfig("eps must be positive"));
        }
        if !(config.lr > 0.0) {
            return Err(OptimError::InvalidConfig("lr must be positive"));
        }
        if !(0.0..1.0).contains(&config.beta1) || !(0.0..1.0).contains(&config.beta2) {
            return Err(OptimError::InvalidConfig("betas must lie in [0, 1)"));
        }
        let zeros: Vec<Tensor> = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        Ok(Self {
            config,
            first: zeros.clone(),
            second: zeros,
            step: 0,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update in place. Nothing is modified when an error is
    /// returned.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<(), OptimError> {
        if params.len() != grads.len() || params.len() != self.first.len() {
            return Err(OptimError::CountMismatch {
                expected: self.first.len(),
                got: grads.len().min(params.len()),
            });
        }
        for (index, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() || self.first[index].shape() != g.shape() {
                return Err(OptimError::ShapeMismatch {
                    index,
                    param: p.shape().to_vec(),
                    grad: g.shape().to_vec(),
                });
            }
            if !g.is_finite() {
                return Err(OptimError::Divergence {
                    step: self.step + 1,
                    index,
                });
            }
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first.iter_mut().zip(self.second.iter_mut()))
        {
            for (((pv, &gv), mv), vv) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mv = beta1 * *mv + (1.0 - beta1) * gv;
                *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
                let m_hat = *mv / bc1;
                let v_hat = *vv / bc2;
                *pv -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn adam(lr: f64, params: &[&Tensor]) -> Adam {
        Adam::new(
            AdamConfig {
                lr,
                ..AdamConfig::default()
            },
            params,
        )
        .unwrap()
    }

    #[test]
    fn first_step_closed_form() {
        let mut p = Tensor::scalar(0.0);
        let mut opt = adam(1e-3, &[&p]);
        opt.step(&mut [&mut p], &[Tensor::scalar(1.0)]).unwrap();
        let expected = -1e-3 * 1.0 / (1.0 + 1e-8);
        assert!((p.item().unwrap() - expected).abs() < 1e-18);
        assert_eq!(opt.step_count(), 1);
    }

    #[test]
    fn zero_gradient_leaves_params_but_counts_step() {
        let mut p = Tensor::vector(&[0.3, -1.2]);
        let before = p.clone();
        let mut opt = adam(1e-3, &[&p]);
        opt.step(&mut [&mut p], &[Tensor::zeros(&[2])]).unwrap();
        assert_eq!(p, before);
        assert_eq!(opt.step_count(), 1);
    }

    #[test]
    fn non_finite_gradient_is_flagged_with_step() {
        let mut p = Tensor::vector(&[0.0, 0.0]);
        let mut opt = adam(1e-3, &[&p]);
        opt.step(&mut [&mut p], &[Tensor::vector(&[1.0, 1.0])]).unwrap();
        let err = opt
            .step(&mut [&mut p], &[Tensor::vector(&[1.0, f64::NAN])])
            .unwrap_err();
        assert_eq!(err, OptimError::Divergence { step: 2, index: 0 });
        assert_eq!(opt.step_count(), 1);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut p = Tensor::vector(&[0.0, 0.0]);
        let mut opt = adam(1e-3, &[&p]);
        assert!(matches!(
            opt.step(&mut [&mut p], &[Tensor::vector(&[1.0])]),
            Err(OptimError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn replay_is_bitwise_deterministic() {
        let run = || {
            let mut p = Tensor::from_fn(&[4, 3], |i| (i as f64 * 0.7).sin());
            let mut opt = adam(2e-3, &[&p]);
            for step in 0..100 {
                let g = Tensor::from_fn(&[4, 3], |i| ((i + step) as f64 * 1.3).cos() + p.data()[i]);
                opt.step(&mut [&mut p], &[g]).unwrap();
            }
            p
        };
        let a = run();
        let b = run();
        assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}
