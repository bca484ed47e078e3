//! Toy cooperative Dec-POMDPs with exhaustive centralised oracles.

mod lever;
mod matrix_game;
mod oracle;
mod predator_prey;

pub use lever::{LeverConfig, LeverCoordination};
pub use matrix_game::MatrixGame;
pub use oracle::{solve, OracleResult, TabularModel, ORACLE_PAIR_CAP};
pub use predator_prey::{PredatorPrey, PredatorPreyConfig};

use crate::{Error, Result};

/// Static shape of an environment.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub n_agents: usize,
    pub n_actions: usize,
    pub obs_dim: usize,
    pub state_dim: usize,
    pub episode_limit: usize,
    pub gamma_hint: f64,
}

/// What the learner sees after `reset`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub state: Vec<f64>,
    pub observations: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    /// Shared by every agent.
    pub reward: f64,
    pub state: Vec<f64>,
    pub observations: Vec<Vec<f64>>,
    /// Episode finished, either at a goal or at the step limit.
    pub terminated: bool,
    /// Finished only because the step limit was hit.
    pub truncated: bool,
    /// The environment's success event (capture, correct pull, optimal payoff).
    pub success: bool,
}

pub trait Environment {
    fn id(&self) -> &str;
    fn spec(&self) -> &EnvSpec;
    fn reset(&mut self, seed: u64) -> Observation;
    fn step(&mut self, joint_action: &[usize]) -> Result<StepResult>;
    fn global_state(&self) -> Vec<f64>;
    fn observe(&self, agent: usize) -> Vec<f64>;
    fn oracle(&self) -> Result<OracleResult>;

    fn observe_all(&self) -> Vec<Vec<f64>> {
        (0..self.spec().n_agents).map(|a| self.observe(a)).collect()
    }
}

/// Declarative environment choice, as read from an experiment config.
#[derive(Debug, Clone, PartialEq)]
pub enum EnvConfig {
    MatrixGame {
        n_agents: usize,
        n_actions: usize,
        payoff: Vec<f64>,
    },
    Lever(LeverConfig),
    PredatorPrey(PredatorPreyConfig),
}

impl EnvConfig {
    /// The classic 3-action climbing game.
    pub fn climbing_game() -> Self {
        EnvConfig::MatrixGame {
            n_agents: 2,
            n_actions: 3,
            payoff: vec![11.0, -30.0, 0.0, -30.0, 7.0, 6.0, 0.0, 0.0, 5.0],
        }
    }

    pub fn build(&self) -> Result<Box<dyn Environment + Send>> {
        Ok(match self {
            EnvConfig::MatrixGame {
                n_agents,
                n_actions,
                payoff,
            } => Box::new(MatrixGame::new(*n_agents, *n_actions, payoff.clone())?),
            EnvConfig::Lever(c) => Box::new(LeverCoordination::new(c.clone())?),
            EnvConfig::PredatorPrey(c) => Box::new(PredatorPrey::new(c.clone())?),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            EnvConfig::MatrixGame { .. } => "matrix_game",
            EnvConfig::Lever(_) => "lever_coordination",
            EnvConfig::PredatorPrey(_) => "predator_prey",
        }
    }
}

pub(crate) fn check_actions(joint_action: &[usize], spec: &EnvSpec) -> Result<()> {
    if joint_action.len() != spec.n_agents {
        return Err(Error::Shape(format!(
            "joint action has {} entries for {} agents",
            joint_action.len(),
            spec.n_agents
        )));
    }
    for (agent, &action) in joint_action.iter().enumerate() {
        if action >= spec.n_actions {
            return Err(Error::InvalidAction {
                agent,
                action,
                n_actions: spec.n_actions,
            });
        }
    }
    Ok(())
}

/// Decode a flat joint-action index (agent 0 most significant).
pub fn decode_joint(mut index: usize, n_agents: usize, n_actions: usize) -> Vec<usize> {
    let mut out = vec![0; n_agents];
    for slot in out.iter_mut().rev() {
        *slot = index % n_actions;
        index /= n_actions;
    }
    out
}

pub fn encode_joint(joint_action: &[usize], n_actions: usize) -> usize {
    joint_action.iter().fold(0, |acc, &u| acc * n_actions + u)
}

pub(crate) fn one_hot(len: usize, hot: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    v[hot] = 1.0;
    v
}
