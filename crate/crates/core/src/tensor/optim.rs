use serde::{Deserialize, Serialize};

use super::{ParamSet, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            momentum: 0.9,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::OutOfRange {
                name: "learning_rate",
                value: self.learning_rate,
                range: "(0, inf)",
            });
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::OutOfRange {
                name: "momentum",
                value: self.momentum,
                range: "[0, 1)",
            });
        }
        Ok(())
    }
}

/// Stochastic gradient descent with classical (heavy-ball) momentum:
/// `v ← μ·v + g`, `θ ← θ − lr·v`.
#[derive(Debug, Clone)]
pub struct Sgd<T> {
    config: SgdConfig,
    velocity: Vec<Tensor<T>>,
}

impl<T: Scalar> Sgd<T> {
    pub fn new(config: SgdConfig, params: &ParamSet<T>) -> Result<Self> {
        config.validate()?;
        let velocity = params
            .ids()
            .map(|id| Tensor::zeros(params.value(id).shape().to_vec()))
            .collect();
        Ok(Self { config, velocity })
    }

    pub fn config(&self) -> &SgdConfig {
        &self.config
    }

    pub fn step(&mut self, params: &mut ParamSet<T>) {
        let lr = T::lit(self.config.learning_rate);
        let mu = T::lit(self.config.momentum);
        for ((value, grad), vel) in params.values_and_grads_mut().zip(&mut self.velocity) {
            for ((p, &g), v) in value
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(vel.data_mut())
            {
                *v = mu * *v + g;
                *p = *p - lr * *v;
            }
        }
    }
}
