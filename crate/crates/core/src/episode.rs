//! Transitions, episodes and Monte-Carlo returns.

use crate::{Error, JointAction, Result};

/// One environment step as seen by the centralised learner.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub observations: Vec<Vec<f64>>,
    pub joint_action: JointAction,
    pub global_state: Vec<f64>,
    pub reward: f64,
    /// True only when the environment reached a real terminal state.
    /// Time-limit truncation leaves this false so the target bootstraps.
    pub terminal: bool,
}

/// A complete rollout plus the observation/state reached after the last step,
/// which bootstraps the final target when the episode was truncated.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub transitions: Vec<Transition>,
    pub final_observations: Vec<Vec<f64>>,
    pub final_state: Vec<f64>,
    pub seed: u64,
    pub env_id: String,
}

impl Episode {
    pub fn new(
        transitions: Vec<Transition>,
        final_observations: Vec<Vec<f64>>,
        final_state: Vec<f64>,
        seed: u64,
        env_id: impl Into<String>,
    ) -> Result<Self> {
        let first = transitions.first().ok_or(Error::EmptyEpisode)?;
        let n = first.joint_action.len();
        let f = first.global_state.len();
        let last = transitions.len() - 1;
        for (t, tr) in transitions.iter().enumerate() {
            if tr.observations.len() != n || tr.joint_action.len() != n {
                return Err(Error::Shape(format!(
                    "step {t}: {} observations for {} actions, expected {n}",
                    tr.observations.len(),
                    tr.joint_action.len()
                )));
            }
            if tr.global_state.len() != f {
                return Err(Error::Shape(format!(
                    "step {t}: state dimension {} != {f}",
                    tr.global_state.len()
                )));
            }
            if !tr.reward.is_finite() {
                return Err(Error::Numerics(format!("reward at step {t}")));
            }
            if tr.terminal && t != last {
                return Err(Error::Shape(format!(
                    "terminal flag at step {t} but episode continues to {last}"
                )));
            }
        }
        if final_observations.len() != n || final_state.len() != f {
            return Err(Error::Shape("final observation/state shape".into()));
        }
        Ok(Self {
            transitions,
            final_observations,
            final_state,
            seed,
            env_id: env_id.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn n_agents(&self) -> usize {
        self.transitions[0].joint_action.len()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.transitions.iter().map(|t| t.reward).collect()
    }

    /// Global state at step `t`, where `t == len()` is the state reached
    /// after the final step.
    pub fn state_at(&self, t: usize) -> &[f64] {
        if t < self.transitions.len() {
            &self.transitions[t].global_state
        } else {
            &self.final_state
        }
    }

    pub fn observations_at(&self, t: usize) -> &[Vec<f64>] {
        if t < self.transitions.len() {
            &self.transitions[t].observations
        } else {
            &self.final_observations
        }
    }

    pub fn total_discounted_return(&self, gamma: f64) -> f64 {
        discounted_returns(&self.rewards(), gamma).map_or(0.0, |r| r[0])
    }
}

/// Backward recursion `R_t = r_t + gamma * R_{t+1}` with `R_{T+1} = 0`.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Result<Vec<f64>> {
    if rewards.is_empty() {
        return Err(Error::EmptyEpisode);
    }
    if let Some(t) = rewards.iter().position(|r| !r.is_finite()) {
        return Err(Error::Numerics(format!("reward at step {t}")));
    }
    let mut out = vec![0.0; rewards.len()];
    let mut next = 0.0;
    for (slot, &r) in out.iter_mut().zip(rewards).rev() {
        next = r + gamma * next;
        *slot = next;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn approx(a: &[f64], b: &[f64]) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-12, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn returns_examples() {
        approx(&discounted_returns(&[1.0, 2.0, 3.0], 0.5).unwrap(), &[2.75, 3.5, 3.0]);
        approx(&discounted_returns(&[5.0], 0.99).unwrap(), &[5.0]);
        approx(&discounted_returns(&[1.0, 1.0, 1.0], 0.9).unwrap(), &[2.71, 1.9, 1.0]);
    }

    #[test]
    fn empty_rewards_rejected() {
        assert_eq!(discounted_returns(&[], 0.9), Err(Error::EmptyEpisode));
    }

    #[test]
    fn terminal_only_on_last_step() {
        let tr = |terminal| Transition {
            observations: vec![vec![0.0]],
            joint_action: vec![0],
            global_state: vec![0.0],
            reward: 0.0,
            terminal,
        };
        let bad = Episode::new(vec![tr(true), tr(false)], vec![vec![0.0]], vec![0.0], 0, "x");
        assert!(matches!(bad, Err(Error::Shape(_))));
        assert!(Episode::new(vec![tr(false), tr(true)], vec![vec![0.0]], vec![0.0], 0, "x").is_ok());
        assert_eq!(
            Episode::new(vec![], vec![], vec![], 0, "x"),
            Err(Error::EmptyEpisode)
        );
    }

    proptest! {
        #[test]
        fn recursion_holds_exactly(
            rewards in proptest::collection::vec(-100.0f64..100.0, 1..60),
            gi in 0usize..3,
        ) {
            let gamma = [0.0, 0.5, 0.99][gi];
            let r = discounted_returns(&rewards, gamma).unwrap();
            prop_assert_eq!(r.len(), rewards.len());
            let last = rewards.len() - 1;
            prop_assert_eq!(r[last], rewards[last]);
            for t in 0..last {
                let residual = r[t] - rewards[t] - gamma * r[t + 1];
                // one unit in the last place of the magnitudes involved
                let ulp = f64::EPSILON * r[t].abs().max(rewards[t].abs()).max(1e-300);
                prop_assert!(residual.abs() <= 2.0 * ulp, "t={} residual={}", t, residual);
                prop_assert_eq!(r[t], rewards[t] + gamma * r[t + 1]);
            }
        }
    }
}
