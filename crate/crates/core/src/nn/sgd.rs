use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::scalar::Scalar;

/// SGD with momentum, L2 weight decay and a step learning-rate schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// `(iteration, learning_rate)` pairs; the rate of the last step whose
    /// iteration is `<=` the current one applies. Must be strictly increasing.
    pub schedule: Vec<(u64, f64)>,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            learning_rate: 0.001,
            momentum: 0.9,
            weight_decay: 0.0005,
            schedule: vec![(0, 0.001), (30_000, 0.0001)],
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config("weight decay must be non-negative".into()));
        }
        if self.schedule.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::Config("learning-rate schedule iterations must increase strictly".into()));
        }
        if self.schedule.iter().any(|&(_, lr)| !(lr > 0.0)) {
            return Err(Error::Config("scheduled learning rates must be positive".into()));
        }
        Ok(())
    }

    pub fn lr_at(&self, iteration: u64) -> f64 {
        self.schedule
            .iter()
            .take_while(|(step, _)| *step <= iteration)
            .last()
            .map_or(self.learning_rate, |&(_, lr)| lr)
    }
}

/// Optimizer state: one velocity buffer per named parameter.
#[derive(Debug, Clone)]
pub struct Sgd<T> {
    config: SgdConfig,
    velocity: HashMap<String, Vec<T>>,
}

impl<T: Scalar> Sgd<T> {
    pub fn new(config: SgdConfig) -> Result<Self> {
        config.validate()?;
        Ok(Sgd {
            config,
            velocity: HashMap::new(),
        })
    }

    pub fn config(&self) -> &SgdConfig {
        &self.config
    }

    /// Applies `v <- m v - lr (g + wd p); p <- p + v` to every parameter and
    /// clears its gradient. Every parameter passed in must carry a gradient.
    pub fn step<'a, I>(&mut self, params: I, iteration: u64) -> Result<f64>
    where
        I: IntoIterator<Item = (&'a str, &'a mut Tensor<T>)>,
    {
        let lr = self.config.lr_at(iteration);
        let params: Vec<_> = params.into_iter().collect();
        if let Some((name, _)) = params.iter().find(|(_, p)| p.grad().is_none()) {
            return Err(Error::Internal(format!("parameter {name} has no gradient")));
        }
        let (lr_t, m, wd) = (
            T::from_f64_lossy(lr),
            T::from_f64_lossy(self.config.momentum),
            T::from_f64_lossy(self.config.weight_decay),
        );
        for (name, param) in params {
            let grad = param.take_grad().expect("checked above");
            let v = self
                .velocity
                .entry(name.to_string())
                .or_insert_with(|| vec![T::zero(); grad.len()]);
            for ((p, v), g) in param.data_mut().iter_mut().zip(v.iter_mut()).zip(grad) {
                *v = m * *v - lr_t * (g + wd * *p);
                *p += *v;
            }
        }
        Ok(lr)
    }
}
