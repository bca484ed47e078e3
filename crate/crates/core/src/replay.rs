//! Episode replay buffer and padded batching.

use std::collections::VecDeque;

use crate::{Episode, Error, Result, Rng};

/// FIFO ring of whole episodes.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<T = Episode> {
    capacity: usize,
    items: VecDeque<T>,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be positive".into()));
        }
        Ok(Self {
            capacity,
            items: VecDeque::with_capacity(capacity.min(4096)),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn store(&mut self, item: T) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(item);
    }

    /// Indices of `batch` distinct episodes drawn uniformly.
    pub fn sample_indices(&self, batch: usize, rng: &mut Rng) -> Result<Vec<usize>> {
        if batch == 0 || self.items.len() < batch {
            return Err(Error::NotReady {
                have: self.items.len(),
                need: batch.max(1),
            });
        }
        Ok(rand::seq::index::sample(rng, self.items.len(), batch).into_vec())
    }

    pub fn sample(&self, batch: usize, rng: &mut Rng) -> Result<Vec<&T>> {
        Ok(self
            .sample_indices(batch, rng)?
            .into_iter()
            .map(|i| &self.items[i])
            .collect())
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items.iter()
    }
}

/// Episodes padded to a common length. Step-indexed arrays have `t_max`
/// slots per episode; observation and state arrays carry one extra slot
/// holding what was observed after the last step.
#[derive(Debug, Clone, PartialEq)]
pub struct PaddedBatch {
    pub batch: usize,
    pub t_max: usize,
    pub n_agents: usize,
    pub obs_dim: usize,
    pub state_dim: usize,
    pub lengths: Vec<usize>,
    /// `[batch][t_max + 1][n_agents][obs_dim]`
    pub obs: Vec<f64>,
    /// `[batch][t_max + 1][state_dim]`
    pub states: Vec<f64>,
    /// `[batch][t_max][n_agents]`
    pub actions: Vec<usize>,
    /// `[batch][t_max]`
    pub rewards: Vec<f64>,
    pub terminal: Vec<bool>,
    pub mask: Vec<f64>,
}

impl PaddedBatch {
    pub fn obs(&self, b: usize, t: usize, a: usize) -> &[f64] {
        let i = ((b * (self.t_max + 1) + t) * self.n_agents + a) * self.obs_dim;
        &self.obs[i..i + self.obs_dim]
    }

    pub fn state(&self, b: usize, t: usize) -> &[f64] {
        let i = (b * (self.t_max + 1) + t) * self.state_dim;
        &self.states[i..i + self.state_dim]
    }

    pub fn actions(&self, b: usize, t: usize) -> &[usize] {
        let i = (b * self.t_max + t) * self.n_agents;
        &self.actions[i..i + self.n_agents]
    }

    pub fn step(&self, b: usize, t: usize) -> usize {
        b * self.t_max + t
    }
}

pub fn pad_batch(episodes: &[&Episode]) -> Result<PaddedBatch> {
    let t_max = episodes.iter().map(|e| e.len()).max().unwrap_or(0);
    pad_batch_to(episodes, t_max)
}

/// Pads to an explicit length, which must cover the longest episode.
pub fn pad_batch_to(episodes: &[&Episode], t_max: usize) -> Result<PaddedBatch> {
    let first = episodes
        .first()
        .ok_or_else(|| Error::Shape("cannot pad an empty batch".into()))?;
    let n = first.n_agents();
    let obs_dim = first.transitions[0].observations[0].len();
    let state_dim = first.transitions[0].global_state.len();
    if episodes.iter().any(|e| e.len() > t_max) {
        return Err(Error::Shape(format!("padding length {t_max} shorter than an episode")));
    }
    let bsz = episodes.len();
    let mut out = PaddedBatch {
        batch: bsz,
        t_max,
        n_agents: n,
        obs_dim,
        state_dim,
        lengths: episodes.iter().map(|e| e.len()).collect(),
        obs: vec![0.0; bsz * (t_max + 1) * n * obs_dim],
        states: vec![0.0; bsz * (t_max + 1) * state_dim],
        actions: vec![0; bsz * t_max * n],
        rewards: vec![0.0; bsz * t_max],
        terminal: vec![false; bsz * t_max],
        mask: vec![0.0; bsz * t_max],
    };
    for (b, ep) in episodes.iter().enumerate() {
        if ep.n_agents() != n || ep.transitions[0].global_state.len() != state_dim {
            return Err(Error::Shape("episodes in a batch disagree on shape".into()));
        }
        for t in 0..=ep.len() {
            let s0 = (b * (t_max + 1) + t) * state_dim;
            out.states[s0..s0 + state_dim].copy_from_slice(ep.state_at(t));
            for (a, o) in ep.observations_at(t).iter().enumerate() {
                if o.len() != obs_dim {
                    return Err(Error::Shape("observation width differs within batch".into()));
                }
                let o0 = ((b * (t_max + 1) + t) * n + a) * obs_dim;
                out.obs[o0..o0 + obs_dim].copy_from_slice(o);
            }
        }
        for (t, tr) in ep.transitions.iter().enumerate() {
            let i = b * t_max + t;
            out.actions[i * n..(i + 1) * n].copy_from_slice(&tr.joint_action);
            out.rewards[i] = tr.reward;
            out.terminal[i] = tr.terminal;
            out.mask[i] = 1.0;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{stream_rng, Transition};
    use proptest::prelude::*;

    pub(crate) fn dummy_episode(len: usize, tag: f64) -> Episode {
        let transitions = (0..len)
            .map(|t| Transition {
                observations: vec![vec![tag, t as f64], vec![-tag, t as f64]],
                joint_action: vec![t % 2, 1],
                global_state: vec![tag, t as f64, 1.0],
                reward: tag + t as f64,
                terminal: t + 1 == len,
            })
            .collect();
        Episode::new(
            transitions,
            vec![vec![tag, len as f64], vec![-tag, len as f64]],
            vec![tag, len as f64, 1.0],
            0,
            "dummy",
        )
        .unwrap()
    }

    #[test]
    fn fifo_eviction() {
        let mut buf = ReplayBuffer::new(2).unwrap();
        assert!(buf.is_empty());
        buf.store(1);
        assert_eq!(buf.len(), 1);
        buf.store(2);
        buf.store(3);
        assert_eq!(buf.iter().copied().collect::<Vec<_>>(), vec![2, 3]);
    }

    #[test]
    fn sample_not_ready_and_deterministic() {
        let mut buf = ReplayBuffer::new(5000).unwrap();
        buf.store(0);
        buf.store(1);
        let mut rng = stream_rng(7, 0);
        assert_eq!(
            buf.sample(32, &mut rng).unwrap_err(),
            Error::NotReady { have: 2, need: 32 }
        );
        for i in 2..100 {
            buf.store(i);
        }
        let a = buf.sample_indices(32, &mut stream_rng(3, 1)).unwrap();
        let b = buf.sample_indices(32, &mut stream_rng(3, 1)).unwrap();
        assert_eq!(a, b);
        let mut sorted = a.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 32, "draws are without replacement");
    }

    #[test]
    fn sampling_is_uniform() {
        // 10^4 single draws over 10 episodes: each count within 3 sigma of 10^3,
        // and the chi-square statistic below the 99.9% quantile for 9 dof.
        let mut buf = ReplayBuffer::new(10).unwrap();
        for i in 0..10usize {
            buf.store(i);
        }
        let mut rng = stream_rng(11, 2);
        let mut counts = [0f64; 10];
        for _ in 0..10_000 {
            counts[*buf.sample(1, &mut rng).unwrap()[0]] += 1.0;
        }
        let sigma = (10_000.0f64 * 0.1 * 0.9).sqrt();
        let chi2: f64 = counts.iter().map(|c| (c - 1000.0).powi(2) / 1000.0).sum();
        for c in counts {
            assert!((c - 1000.0).abs() <= 3.0 * sigma, "{counts:?}");
        }
        assert!(chi2 < 27.88, "chi2 = {chi2}");
    }

    #[test]
    fn padding_masks() {
        let a = dummy_episode(3, 1.0);
        let b = dummy_episode(5, 2.0);
        let batch = pad_batch(&[&a, &b]).unwrap();
        assert_eq!(batch.t_max, 5);
        assert_eq!(&batch.mask[..5], &[1.0, 1.0, 1.0, 0.0, 0.0]);
        assert_eq!(&batch.mask[5..], &[1.0; 5]);
        assert_eq!(batch.state(0, 3), a.final_state.as_slice());
        assert_eq!(batch.state(0, 4), &[0.0; 3]);
        let single = pad_batch(&[&a]).unwrap();
        assert!(single.mask.iter().all(|&m| m == 1.0));
        assert!(pad_batch(&[]).is_err());
    }

    proptest! {
        #[test]
        fn mask_sum_matches_lengths(lengths in proptest::collection::vec(1usize..12, 1..8)) {
            let eps: Vec<_> = lengths.iter().enumerate().map(|(i, &l)| dummy_episode(l, i as f64)).collect();
            let refs: Vec<_> = eps.iter().collect();
            let batch = pad_batch(&refs).unwrap();
            let total: usize = lengths.iter().sum();
            prop_assert_eq!(batch.mask.iter().sum::<f64>() as usize, total);
        }

        #[test]
        fn buffer_keeps_last_items(cap in 1usize..20, k in 0usize..60) {
            let mut buf = ReplayBuffer::new(cap).unwrap();
            for i in 0..k { buf.store(i); }
            let expect: Vec<usize> = (k.saturating_sub(cap)..k).collect();
            prop_assert_eq!(buf.iter().copied().collect::<Vec<_>>(), expect);
            prop_assert!(buf.len() <= cap);
        }
    }
}
