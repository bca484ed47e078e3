use super::decode_joint;
use crate::{Error, Result};

/// Largest (state, joint action) product the exhaustive solver accepts.
pub const ORACLE_PAIR_CAP: u128 = 1_000_000;

/// Ground truth from centralised exhaustive search.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    /// Largest discounted return any centralised policy can realise from any
    /// state over any remaining horizon, with the environment's own
    /// randomness also resolved in the team's favour. Every realised return
    /// of an episode or episode suffix is bounded by it.
    pub optimal_discounted_return: f64,
    /// Expected optimal discounted return under the start distribution
    /// (the value an optimal centralised policy attains on average).
    pub expected_optimal_return: f64,
    /// First-step optimal joint action per start state, for tiny instances.
    pub optimal_joint_policy: Option<Vec<(usize, Vec<usize>)>>,
}

/// Finite enumeration of an environment's centralised dynamics.
pub trait TabularModel {
    fn n_states(&self) -> usize;
    fn n_agents(&self) -> usize;
    fn n_actions(&self) -> usize;
    fn horizon(&self) -> usize;
    fn gamma(&self) -> f64;
    fn initial_distribution(&self) -> Vec<(usize, f64)>;
    /// Calls `visit(probability, next_state, reward, terminal)` for every
    /// outcome of taking `joint_action` in `state`.
    fn outcomes(&self, state: usize, joint_action: &[usize], visit: &mut dyn FnMut(f64, usize, f64, bool));
}

/// Finite-horizon backward induction over the model, run for both the
/// expectation and the best-case (max over outcomes) Bellman operators.
pub fn solve(model: &dyn TabularModel) -> Result<OracleResult> {
    let n_states = model.n_states();
    let n_joint = model.n_actions().pow(model.n_agents() as u32);
    let pairs = n_states as u128 * n_joint as u128;
    if pairs > ORACLE_PAIR_CAP {
        return Err(Error::OracleInfeasible {
            pairs,
            cap: ORACLE_PAIR_CAP,
        });
    }
    let joints: Vec<Vec<usize>> = (0..n_joint)
        .map(|j| decode_joint(j, model.n_agents(), model.n_actions()))
        .collect();
    let gamma = model.gamma();
    let mut expected = vec![0.0; n_states];
    let mut best = vec![0.0; n_states];
    let mut first_action = vec![0usize; n_states];
    let mut bound = f64::NEG_INFINITY;
    for _ in 0..model.horizon() {
        let mut next_expected = vec![f64::NEG_INFINITY; n_states];
        let mut next_best = vec![f64::NEG_INFINITY; n_states];
        for s in 0..n_states {
            for (j, ja) in joints.iter().enumerate() {
                let mut q_exp = 0.0;
                let mut q_best = f64::NEG_INFINITY;
                model.outcomes(s, ja, &mut |p, s2, r, terminal| {
                    let cont = if terminal { 0.0 } else { 1.0 };
                    q_exp += p * (r + gamma * cont * expected[s2]);
                    if p > 0.0 {
                        q_best = q_best.max(r + gamma * cont * best[s2]);
                    }
                });
                if q_exp > next_expected[s] {
                    next_expected[s] = q_exp;
                    first_action[s] = j;
                }
                next_best[s] = next_best[s].max(q_best);
            }
        }
        bound = next_best.iter().copied().fold(bound, f64::max);
        expected = next_expected;
        best = next_best;
    }
    let init = model.initial_distribution();
    let expected_optimal_return = init.iter().map(|&(s, p)| p * expected[s]).sum();
    let optimal_discounted_return = bound;
    let optimal_joint_policy = (init.len() <= 64).then(|| {
        init.iter()
            .map(|&(s, _)| (s, joints[first_action[s]].clone()))
            .collect()
    });
    Ok(OracleResult {
        optimal_discounted_return,
        expected_optimal_return,
        optimal_joint_policy,
    })
}
