use super::{GradBuffer, ParameterSet};
use crate::{Error, Result};

/// RMSProp: `v <- decay*v + (1-decay)*g^2`, `p <- p - lr*g/sqrt(v + eps)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RmsProp {
    pub learning_rate: f64,
    pub decay: f64,
    pub epsilon: f64,
    second_moments: ParameterSet,
}

impl RmsProp {
    pub const DEFAULT_LR: f64 = 5e-4;
    pub const DEFAULT_DECAY: f64 = 0.99;
    pub const DEFAULT_EPSILON: f64 = 1e-5;

    pub fn new(params: &ParameterSet, learning_rate: f64, decay: f64, epsilon: f64) -> Result<Self> {
        if !(learning_rate > 0.0) || !(0.0..1.0).contains(&decay) || !(epsilon > 0.0) {
            return Err(Error::Config(format!(
                "rmsprop needs lr > 0, decay in [0,1), eps > 0; got {learning_rate}, {decay}, {epsilon}"
            )));
        }
        Ok(Self {
            learning_rate,
            decay,
            epsilon,
            second_moments: params.zeros_like(),
        })
    }

    pub fn second_moments(&self) -> &ParameterSet {
        &self.second_moments
    }

    pub fn step(&mut self, params: &mut ParameterSet, grads: &GradBuffer) -> Result<()> {
        grads.check_finite()?;
        params.check_layout(grads)?;
        let (lr, decay, eps) = (self.learning_rate, self.decay, self.epsilon);
        let moments = self.second_moments.iter_mut();
        for (((_, p), (_, g)), (_, v)) in params.iter_mut().zip(grads.iter()).zip(moments) {
            for ((pi, &gi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
                *vi = decay * *vi + (1.0 - decay) * gi * gi;
                *pi -= lr * gi / (*vi + eps).sqrt();
            }
        }
        Ok(())
    }
}
