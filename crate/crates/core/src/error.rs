use thiserror::Error;

/// Errors produced anywhere in the learner stack.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("episode has no transitions")]
    EmptyEpisode,
    #[error("replay buffer holds {have} episodes, {need} required")]
    NotReady { have: usize, need: usize },
    #[error("action {action} of agent {agent} is outside [0, {n_actions})")]
    InvalidAction {
        agent: usize,
        action: usize,
        n_actions: usize,
    },
    #[error("step called on a finished episode")]
    EpisodeOver,
    #[error("oracle infeasible: {pairs} (state, joint action) pairs exceed cap {cap}")]
    OracleInfeasible { pairs: u128, cap: u128 },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("stale or mismatched cache: {0}")]
    Cache(String),
    #[error("non-finite value in {0}")]
    Numerics(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
