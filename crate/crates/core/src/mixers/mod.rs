//! Value-decomposition heads: additive (VDN), state-conditioned monotonic
//! (QMIX), and the central critic plus weighting used by weighted QMIX.

mod critic;
mod qmix;
mod weighting;

pub use critic::CentralCritic;
pub use qmix::{QmixCache, QmixMixer};
pub use weighting::{wqmix_em_weight, wqmix_weight, DEFAULT_ALPHA};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MixerKind {
    Vdn,
    Qmix,
    Wqmix,
}

impl MixerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MixerKind::Vdn => "vdn",
            MixerKind::Qmix => "qmix",
            MixerKind::Wqmix => "wqmix",
        }
    }

    /// The restricted mixer is QMIX for both QMIX and weighted QMIX.
    pub fn uses_hypernetwork(&self) -> bool {
        !matches!(self, MixerKind::Vdn)
    }
}

impl std::str::FromStr for MixerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vdn" => Ok(MixerKind::Vdn),
            "qmix" => Ok(MixerKind::Qmix),
            "wqmix" => Ok(MixerKind::Wqmix),
            other => Err(Error::Config(format!("unknown mixer {other:?} (vdn, qmix, wqmix)"))),
        }
    }
}

/// Per-agent utilities for one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentUtilities {
    pub chosen_q: Vec<f64>,
    pub all_q: Vec<Vec<f64>>,
}

impl AgentUtilities {
    pub fn new(all_q: Vec<Vec<f64>>, joint_action: &[usize]) -> Result<Self> {
        if all_q.len() != joint_action.len() {
            return Err(Error::Shape("one action per agent required".into()));
        }
        let chosen_q = all_q
            .iter()
            .zip(joint_action)
            .map(|(row, &u)| {
                row.get(u)
                    .copied()
                    .ok_or_else(|| Error::Shape(format!("action {u} outside utility row")))
            })
            .collect::<Result<_>>()?;
        Ok(Self { chosen_q, all_q })
    }
}

pub fn vdn_mix(chosen_q: &[f64]) -> f64 {
    chosen_q.iter().sum()
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Per-agent greedy joint action. For additive and monotonic mixers this
/// maximises `Q_tot` over all joint actions.
pub fn joint_argmax(all_q: &[Vec<f64>]) -> Vec<usize> {
    all_q.iter().map(|row| argmax(row)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn vdn_examples() {
        assert_eq!(vdn_mix(&[1.5, -0.5]), 1.0);
        assert_eq!(vdn_mix(&[0.0, 0.0, 0.0]), 0.0);
    }

    #[test]
    fn vdn_many_agents_matches_resummation() {
        let q: Vec<f64> = (0..27).map(|i| ((i * 31 % 17) as f64 - 8.0) * 0.37).collect();
        let mut oracle = 0.0;
        for i in 0..q.len() {
            oracle += q[i];
        }
        assert!((vdn_mix(&q) - oracle).abs() < 1e-12);
    }

    #[test]
    fn greedy_examples() {
        assert_eq!(joint_argmax(&[vec![1.0, 3.0], vec![2.0, 0.0]]), vec![1, 0]);
        assert_eq!(argmax(&[5.0, 5.0]), 0);
    }

    #[test]
    fn utilities_invariant() {
        let u = AgentUtilities::new(vec![vec![1.0, 2.0], vec![3.0, 4.0]], &[1, 0]).unwrap();
        assert_eq!(u.chosen_q, vec![2.0, 3.0]);
        assert!(AgentUtilities::new(vec![vec![1.0]], &[2]).is_err());
    }

    proptest! {
        #[test]
        fn vdn_is_linear(
            q in proptest::collection::vec(-10.0f64..10.0, 1..8),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
            shift in -5.0f64..5.0,
        ) {
            let q2: Vec<f64> = q.iter().map(|v| v * 0.5 + shift).collect();
            let combo: Vec<f64> = q.iter().zip(&q2).map(|(x, y)| a * x + b * y).collect();
            let lhs = vdn_mix(&combo);
            let rhs = a * vdn_mix(&q) + b * vdn_mix(&q2);
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
        }
    }
}
