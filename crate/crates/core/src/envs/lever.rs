use rand::Rng as _;

use super::{
    check_actions, one_hot, solve, EnvSpec, Environment, Observation, OracleResult, StepResult,
    TabularModel,
};
use crate::{stream_rng, Error, Result, Rng};

#[derive(Debug, Clone, PartialEq)]
pub struct LeverConfig {
    pub n_agents: usize,
    pub n_levers: usize,
    pub episode_limit: usize,
    /// Probability that the public cue names the correct lever.
    pub cue_accuracy: f64,
}

impl Default for LeverConfig {
    fn default() -> Self {
        Self {
            n_agents: 2,
            n_levers: 3,
            episode_limit: 5,
            cue_accuracy: 0.7,
        }
    }
}

/// Repeated coordination: a hidden correct lever is drawn per episode and the
/// team is rewarded 1 (and stops) when every agent pulls it on the same step.
/// Each agent sees its own identity and a noisy cue shared by all agents.
#[derive(Debug, Clone)]
pub struct LeverCoordination {
    cfg: LeverConfig,
    spec: EnvSpec,
    rng: Rng,
    lever: usize,
    cue: usize,
    t: usize,
    done: bool,
}

impl LeverCoordination {
    pub fn new(cfg: LeverConfig) -> Result<Self> {
        if cfg.n_agents == 0 || cfg.n_levers == 0 || cfg.episode_limit == 0 {
            return Err(Error::Config("lever game sizes must be positive".into()));
        }
        if !(0.0..=1.0).contains(&cfg.cue_accuracy) {
            return Err(Error::Config("cue_accuracy must lie in [0, 1]".into()));
        }
        let spec = EnvSpec {
            n_agents: cfg.n_agents,
            n_actions: cfg.n_levers,
            obs_dim: cfg.n_agents + cfg.n_levers,
            state_dim: cfg.n_levers + cfg.episode_limit + 1,
            episode_limit: cfg.episode_limit,
            gamma_hint: 0.99,
        };
        Ok(Self {
            cfg,
            spec,
            rng: stream_rng(0, 0),
            lever: 0,
            cue: 0,
            t: 0,
            done: false,
        })
    }

    fn draw_cue(&mut self) {
        self.cue = if self.rng.random::<f64>() < self.cfg.cue_accuracy {
            self.lever
        } else {
            self.rng.random_range(0..self.cfg.n_levers)
        };
    }
}

impl Environment for LeverCoordination {
    fn id(&self) -> &str {
        "lever_coordination"
    }

    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Observation {
        self.rng = stream_rng(seed, 0);
        self.lever = self.rng.random_range(0..self.cfg.n_levers);
        self.t = 0;
        self.done = false;
        self.draw_cue();
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
        let success = joint_action.iter().all(|&u| u == self.lever);
        self.t += 1;
        let truncated = !success && self.t >= self.cfg.episode_limit;
        self.done = success || truncated;
        if !self.done {
            self.draw_cue();
        }
        Ok(StepResult {
            reward: if success { 1.0 } else { 0.0 },
            state: self.global_state(),
            observations: self.observe_all(),
            terminated: self.done,
            truncated,
            success,
        })
    }

    fn global_state(&self) -> Vec<f64> {
        let mut s = one_hot(self.cfg.n_levers, self.lever);
        s.extend(one_hot(self.cfg.episode_limit + 1, self.t));
        s
    }

    fn observe(&self, agent: usize) -> Vec<f64> {
        let mut o = one_hot(self.cfg.n_agents, agent);
        o.extend(one_hot(self.cfg.n_levers, self.cue));
        o
    }

    fn oracle(&self) -> Result<OracleResult> {
        solve(self)
    }
}

/// States are `(lever, t)` flattened as `lever * limit + t`.
impl TabularModel for LeverCoordination {
    fn n_states(&self) -> usize {
        self.cfg.n_levers * self.cfg.episode_limit
    }
    fn n_agents(&self) -> usize {
        self.cfg.n_agents
    }
    fn n_actions(&self) -> usize {
        self.cfg.n_levers
    }
    fn horizon(&self) -> usize {
        self.cfg.episode_limit
    }
    fn gamma(&self) -> f64 {
        self.spec.gamma_hint
    }
    fn initial_distribution(&self) -> Vec<(usize, f64)> {
        let p = 1.0 / self.cfg.n_levers as f64;
        (0..self.cfg.n_levers)
            .map(|l| (l * self.cfg.episode_limit, p))
            .collect()
    }
    fn outcomes(&self, state: usize, joint_action: &[usize], visit: &mut dyn FnMut(f64, usize, f64, bool)) {
        let limit = self.cfg.episode_limit;
        let (lever, t) = (state / limit, state % limit);
        if joint_action.iter().all(|&u| u == lever) {
            visit(1.0, state, 1.0, true);
        } else if t + 1 >= limit {
            visit(1.0, state, 0.0, true);
        } else {
            visit(1.0, state + 1, 0.0, false);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coordinated_pull_succeeds() {
        let mut env = LeverCoordination::new(LeverConfig::default()).unwrap();
        env.reset(5);
        let lever = env.lever;
        let wrong = (lever + 1) % 3;
        let s = env.step(&[wrong, lever]).unwrap();
        assert_eq!(s.reward, 0.0);
        assert!(!s.terminated);
        let s = env.step(&[lever, lever]).unwrap();
        assert_eq!(s.reward, 1.0);
        assert!(s.terminated && s.success && !s.truncated);
        assert_eq!(env.step(&[0, 0]), Err(Error::EpisodeOver));
    }

    #[test]
    fn truncates_at_limit() {
        let mut env = LeverCoordination::new(LeverConfig::default()).unwrap();
        env.reset(9);
        let wrong = (env.lever + 1) % 3;
        let mut steps = 0;
        loop {
            let s = env.step(&[wrong, wrong]).unwrap();
            steps += 1;
            if s.terminated {
                assert!(s.truncated);
                break;
            }
        }
        assert_eq!(steps, 5);
    }

    #[test]
    fn observations_hold_identity_and_public_cue() {
        let mut env = LeverCoordination::new(LeverConfig::default()).unwrap();
        let obs = env.reset(1);
        assert_eq!(&obs.observations[0][..2], &[1.0, 0.0]);
        assert_eq!(&obs.observations[1][..2], &[0.0, 1.0]);
        assert_eq!(obs.observations[0][2..], obs.observations[1][2..]);
    }

    #[test]
    fn oracle_is_one() {
        let env = LeverCoordination::new(LeverConfig::default()).unwrap();
        let o = env.oracle().unwrap();
        assert_eq!(o.optimal_discounted_return, 1.0);
        assert_eq!(o.expected_optimal_return, 1.0);
        for (state, ja) in o.optimal_joint_policy.unwrap() {
            let lever = state / 5;
            assert_eq!(ja, vec![lever, lever]);
        }
    }
}
