use crate::envs::one_hot;
use crate::neural::{GradBuffer, Mlp, MlpCache, ParameterSet, Tensor};
use crate::{Error, Result, Rng};

/// Unrestricted joint-action value `Q̂*(s, u)`: an MLP over the global state
/// concatenated with one-hot actions of every agent.
#[derive(Debug, Clone, PartialEq)]
pub struct CentralCritic {
    n_agents: usize,
    n_actions: usize,
    state_dim: usize,
    net: Mlp,
}

impl CentralCritic {
    pub fn new(name: &str, n_agents: usize, n_actions: usize, state_dim: usize, hidden: usize) -> Self {
        let input = state_dim + n_agents * n_actions;
        Self {
            n_agents,
            n_actions,
            state_dim,
            net: Mlp::new(name, &[input, hidden, hidden, 1]),
        }
    }

    pub fn init(&self, params: &mut ParameterSet, rng: &mut Rng) -> Result<()> {
        self.net.init(params, rng)
    }

    /// Builds the `N × (F + n·|U|)` input block.
    pub fn inputs(&self, states: &[&[f64]], actions: &[&[usize]]) -> Result<Tensor> {
        if states.len() != actions.len() {
            return Err(Error::Shape("one joint action per state required".into()));
        }
        let width = self.net.input_dim();
        let mut data = Vec::with_capacity(states.len() * width);
        for (s, u) in states.iter().zip(actions) {
            if s.len() != self.state_dim || u.len() != self.n_agents {
                return Err(Error::Shape(format!("critic row has state {} and {} actions", s.len(), u.len())));
            }
            data.extend_from_slice(s);
            for &a in u.iter() {
                if a >= self.n_actions {
                    return Err(Error::InvalidAction { agent: 0, action: a, n_actions: self.n_actions });
                }
                data.extend(one_hot(self.n_actions, a));
            }
        }
        Tensor::from_vec(&[states.len(), width], data)
    }

    pub fn forward(&self, params: &ParameterSet, inputs: &Tensor) -> Result<(Vec<f64>, MlpCache)> {
        let (out, cache) = self.net.forward(params, inputs)?;
        Ok((out.into_data(), cache))
    }

    pub fn evaluate(&self, params: &ParameterSet, states: &[&[f64]], actions: &[&[usize]]) -> Result<Vec<f64>> {
        let x = self.inputs(states, actions)?;
        Ok(self.forward(params, &x)?.0)
    }

    pub fn backward(&self, params: &ParameterSet, cache: &MlpCache, d_out: &[f64], grads: &mut GradBuffer) -> Result<()> {
        let dy = Tensor::from_vec(&[d_out.len(), 1], d_out.to_vec())?;
        self.net.backward(params, cache, &dy, grads).map(|_| ())
    }
}
