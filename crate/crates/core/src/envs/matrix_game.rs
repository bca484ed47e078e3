use super::{
    check_actions, encode_joint, solve, EnvSpec, Environment, Observation, OracleResult,
    StepResult, TabularModel,
};
use crate::{Error, Result};

/// One-shot cooperative game over an n-dimensional payoff tensor.
/// State and observations are the constant `[1.0]`.
#[derive(Debug, Clone)]
pub struct MatrixGame {
    spec: EnvSpec,
    payoff: Vec<f64>,
    best: f64,
    done: bool,
}

impl MatrixGame {
    pub fn new(n_agents: usize, n_actions: usize, payoff: Vec<f64>) -> Result<Self> {
        if n_agents == 0 || n_actions == 0 {
            return Err(Error::Config("matrix game needs agents and actions".into()));
        }
        let expected = n_actions.pow(n_agents as u32);
        if payoff.len() != expected {
            return Err(Error::Config(format!(
                "payoff tensor has {} entries, expected {n_actions}^{n_agents} = {expected}",
                payoff.len()
            )));
        }
        if payoff.iter().any(|p| !p.is_finite()) {
            return Err(Error::Config("payoff tensor must be finite".into()));
        }
        let best = payoff.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self {
            spec: EnvSpec {
                n_agents,
                n_actions,
                obs_dim: 1,
                state_dim: 1,
                episode_limit: 1,
                gamma_hint: 0.99,
            },
            payoff,
            best,
            done: false,
        })
    }

    pub fn payoff(&self, joint_action: &[usize]) -> f64 {
        self.payoff[encode_joint(joint_action, self.spec.n_actions)]
    }
}

impl Environment for MatrixGame {
    fn id(&self) -> &str {
        "matrix_game"
    }

    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, _seed: u64) -> Observation {
        self.done = false;
        Observation {
            state: self.global_state(),
            observations: self.observe_all(),
        }
    }

    fn step(&mut self, joint_action: &[usize]) -> Result<StepResult> {
        if self.done {
            return Err(Error::EpisodeOver);
        }
        check_actions(joint_action, &self.spec)?;
        self.done = true;
        let reward = self.payoff(joint_action);
        Ok(StepResult {
            reward,
            state: self.global_state(),
            observations: self.observe_all(),
            terminated: true,
            truncated: false,
            success: reward >= self.best,
        })
    }

    fn global_state(&self) -> Vec<f64> {
        vec![1.0]
    }

    fn observe(&self, _agent: usize) -> Vec<f64> {
        vec![1.0]
    }

    fn oracle(&self) -> Result<OracleResult> {
        solve(self)
    }
}

impl TabularModel for MatrixGame {
    fn n_states(&self) -> usize {
        1
    }
    fn n_agents(&self) -> usize {
        self.spec.n_agents
    }
    fn n_actions(&self) -> usize {
        self.spec.n_actions
    }
    fn horizon(&self) -> usize {
        1
    }
    fn gamma(&self) -> f64 {
        self.spec.gamma_hint
    }
    fn initial_distribution(&self) -> Vec<(usize, f64)> {
        vec![(0, 1.0)]
    }
    fn outcomes(&self, _state: usize, joint_action: &[usize], visit: &mut dyn FnMut(f64, usize, f64, bool)) {
        visit(1.0, 0, self.payoff(joint_action), true);
    }
}
