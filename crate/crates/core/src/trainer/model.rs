use super::network::{AgentCache, AgentNetwork, Segment};
use crate::envs::{one_hot, EnvSpec};
use crate::memory::{saem_target, sem_target, EpisodicMemory, MemoryKey};
use crate::mixers::{joint_argmax, vdn_mix, wqmix_em_weight, wqmix_weight, CentralCritic, MixerKind, QmixCache, QmixMixer};
use crate::neural::{GradBuffer, ParameterSet, Tensor};
use crate::{Error, JointAction, PaddedBatch, Result, Rng};

/// Network sizes that are not dictated by the environment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkSizes {
    pub agent_hidden: usize,
    pub recurrent: bool,
    pub mixing_embed: usize,
    pub critic_hidden: usize,
}

/// One valid (unpadded) transition of a training batch.
#[derive(Debug, Clone, PartialEq)]
pub struct StepData {
    pub episode: usize,
    pub t: usize,
    /// Row of agent 0 at time `t` in [`TrainBatch::inputs`].
    pub row: usize,
    pub next_row: usize,
    pub joint_action: JointAction,
    pub reward: f64,
    pub terminal: bool,
    pub key: Option<MemoryKey>,
    pub next_key: Option<MemoryKey>,
}

/// Batch laid out for the learner: agent inputs for every real time step
/// (including the state reached after the last action), and one
/// [`StepData`] per unmasked transition.
#[derive(Debug, Clone)]
pub struct TrainBatch {
    pub inputs: Tensor,
    pub segments: Vec<Segment>,
    pub steps: Vec<StepData>,
    pub states: Tensor,
    pub next_states: Tensor,
}

impl TrainBatch {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Per-transition regression targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Targets {
    pub y: Vec<f64>,
    /// `max_u Q_tot(s', u; θ⁻)` under the restricted mixer (0 on terminal steps).
    pub fallback: Vec<f64>,
    pub e_s: Vec<f64>,
    pub e_s_hit: Vec<bool>,
    pub e_su: Option<Vec<f64>>,
}

/// Centrally-weighted loss coefficients, fixed before differentiation.
#[derive(Debug, Clone, PartialEq)]
pub struct WqmixWeights {
    pub w: Vec<f64>,
    pub w_e: Vec<f64>,
}

/// What the loss regresses onto.
#[derive(Debug, Clone, PartialEq)]
pub struct LossTargets {
    pub y: Vec<f64>,
    pub e: Vec<f64>,
    pub lambda: f64,
    /// Present for weighted QMIX; all-ones reproduces the unweighted form.
    pub weights: Option<WqmixWeights>,
}

enum MixCache {
    Vdn,
    Qmix(QmixCache),
}

/// Forward quantities the loss needs.
pub struct Evaluated {
    pub q_tot: Vec<f64>,
    pub critic: Option<Vec<f64>>,
    agent_cache: AgentCache,
    mix_cache: MixCache,
    critic_cache: Option<crate::neural::MlpCache>,
}

/// Agent network, mixer and (for weighted QMIX) the central critic.
#[derive(Debug, Clone)]
pub struct Learner {
    n_agents: usize,
    n_actions: usize,
    obs_dim: usize,
    state_dim: usize,
    kind: MixerKind,
    agent: AgentNetwork,
    qmix: Option<QmixMixer>,
    critic: Option<CentralCritic>,
}

impl Learner {
    pub fn new(spec: &EnvSpec, kind: MixerKind, sizes: NetworkSizes) -> Self {
        let input = spec.obs_dim + spec.n_agents;
        Self {
            n_agents: spec.n_agents,
            n_actions: spec.n_actions,
            obs_dim: spec.obs_dim,
            state_dim: spec.state_dim,
            kind,
            agent: AgentNetwork::new(input, sizes.agent_hidden, spec.n_actions, spec.n_agents, sizes.recurrent),
            qmix: kind
                .uses_hypernetwork()
                .then(|| QmixMixer::new("mixer", spec.n_agents, spec.state_dim, sizes.mixing_embed)),
            critic: (kind == MixerKind::Wqmix)
                .then(|| CentralCritic::new("critic", spec.n_agents, spec.n_actions, spec.state_dim, sizes.critic_hidden)),
        }
    }

    pub fn kind(&self) -> MixerKind {
        self.kind
    }

    pub fn agent(&self) -> &AgentNetwork {
        &self.agent
    }

    pub fn init_params(&self, rng: &mut Rng) -> Result<ParameterSet> {
        let mut p = ParameterSet::new();
        self.agent.init(&mut p, rng)?;
        if let Some(m) = &self.qmix {
            m.init(&mut p, rng)?;
        }
        if let Some(c) = &self.critic {
            c.init(&mut p, rng)?;
        }
        Ok(p)
    }

    /// Agent inputs for one time step: `obs ‖ one_hot(agent)` per row.
    pub fn step_inputs(&self, observations: &[Vec<f64>]) -> Result<Tensor> {
        let mut data = Vec::with_capacity(self.n_agents * (self.obs_dim + self.n_agents));
        for (a, o) in observations.iter().enumerate() {
            if o.len() != self.obs_dim {
                return Err(Error::Shape(format!("observation width {} != {}", o.len(), self.obs_dim)));
            }
            data.extend_from_slice(o);
            data.extend(one_hot(self.n_agents, a));
        }
        Tensor::from_vec(&[observations.len(), self.obs_dim + self.n_agents], data)
    }

    /// `keys[b]` holds one key per state of episode `b` (length + 1 entries).
    pub fn batch(&self, padded: &PaddedBatch, keys: Option<&[&[MemoryKey]]>) -> Result<TrainBatch> {
        let n = self.n_agents;
        let width = self.obs_dim + n;
        if padded.n_agents != n || padded.obs_dim != self.obs_dim || padded.state_dim != self.state_dim {
            return Err(Error::Shape("batch shape does not match the learner".into()));
        }
        let mut inputs = Vec::new();
        let mut segments = Vec::with_capacity(padded.batch);
        let mut steps = Vec::new();
        let mut states = Vec::new();
        let mut next_states = Vec::new();
        let mut row = 0;
        for b in 0..padded.batch {
            let len = padded.lengths[b];
            segments.push(Segment { start: row, steps: len + 1 });
            for t in 0..=len {
                for a in 0..n {
                    inputs.extend_from_slice(padded.obs(b, t, a));
                    inputs.extend(one_hot(n, a));
                }
            }
            let ep_keys = keys.map(|k| k[b]);
            if ep_keys.is_some_and(|k| k.len() != len + 1) {
                return Err(Error::Shape(format!("episode {b} has {len} steps but a different key count")));
            }
            for t in 0..padded.t_max {
                let i = padded.step(b, t);
                if padded.mask[i] == 0.0 {
                    continue;
                }
                states.extend_from_slice(padded.state(b, t));
                next_states.extend_from_slice(padded.state(b, t + 1));
                steps.push(StepData {
                    episode: b,
                    t,
                    row: row + t * n,
                    next_row: row + (t + 1) * n,
                    joint_action: padded.actions(b, t).to_vec(),
                    reward: padded.rewards[i],
                    terminal: padded.terminal[i],
                    key: ep_keys.map(|k| k[t].clone()),
                    next_key: ep_keys.map(|k| k[t + 1].clone()),
                });
            }
            row += (len + 1) * n;
        }
        let s = steps.len();
        Ok(TrainBatch {
            inputs: Tensor::from_vec(&[row, width], inputs)?,
            segments,
            steps,
            states: Tensor::from_vec(&[s, self.state_dim], states)?,
            next_states: Tensor::from_vec(&[s, self.state_dim], next_states)?,
        })
    }

    fn gather(&self, q: &Tensor, row: usize, actions: &[usize]) -> Vec<f64> {
        (0..self.n_agents).map(|a| q.row(row + a)[actions[a]]).collect()
    }

    fn rows(&self, q: &Tensor, row: usize) -> Vec<Vec<f64>> {
        (0..self.n_agents).map(|a| q.row(row + a).to_vec()).collect()
    }

    fn mix(&self, params: &ParameterSet, chosen: &Tensor, states: &Tensor) -> Result<(Vec<f64>, MixCache)> {
        match &self.qmix {
            None => Ok(((0..chosen.rows()).map(|r| vdn_mix(chosen.row(r))).collect(), MixCache::Vdn)),
            Some(m) => {
                let (out, cache) = m.forward(params, chosen, states)?;
                Ok((out, MixCache::Qmix(cache)))
            }
        }
    }

    /// Value of the supplied joint actions under the mixer, one per row.
    pub fn q_tot(&self, params: &ParameterSet, agent_q: &[Vec<Vec<f64>>], actions: &[JointAction], states: &Tensor) -> Result<Vec<f64>> {
        let chosen: Vec<f64> = agent_q
            .iter()
            .zip(actions)
            .flat_map(|(rows, u)| rows.iter().zip(u).map(|(r, &a)| r[a]).collect::<Vec<_>>())
            .collect();
        let chosen = Tensor::from_vec(&[actions.len(), self.n_agents], chosen)?;
        Ok(self.mix(params, &chosen, states)?.0)
    }

    pub fn critic_values(&self, params: &ParameterSet, states: &Tensor, actions: &[JointAction]) -> Result<Vec<f64>> {
        let critic = self.critic.as_ref().ok_or_else(|| Error::Config("no central critic".into()))?;
        let s: Vec<&[f64]> = (0..states.rows()).map(|r| states.row(r)).collect();
        let u: Vec<&[usize]> = actions.iter().map(|u| u.as_slice()).collect();
        critic.evaluate(params, &s, &u)
    }

    /// Bootstrapped TD target and episodic-memory targets. Table reads count
    /// as accesses.
    pub fn compute_targets(
        &self,
        target: &ParameterSet,
        batch: &TrainBatch,
        gamma: f64,
        mut memory: Option<&mut EpisodicMemory>,
    ) -> Result<Targets> {
        let (q, _) = self.agent.forward(target, &batch.inputs, &batch.segments)?;
        let greedy: Vec<JointAction> = batch.steps.iter().map(|s| joint_argmax(&self.rows(&q, s.next_row))).collect();
        let chosen: Vec<f64> = batch
            .steps
            .iter()
            .zip(&greedy)
            .flat_map(|(s, u)| self.gather(&q, s.next_row, u))
            .collect();
        let chosen = Tensor::from_vec(&[batch.len(), self.n_agents], chosen)?;
        let (next_tot, _) = self.mix(target, &chosen, &batch.next_states)?;
        let boot = match self.kind {
            MixerKind::Wqmix => self.critic_values(target, &batch.next_states, &greedy)?,
            _ => next_tot.clone(),
        };
        let with_saem = memory.as_ref().is_some_and(|m| m.saem().is_some());
        let mut out = Targets {
            y: Vec::with_capacity(batch.len()),
            fallback: Vec::with_capacity(batch.len()),
            e_s: Vec::with_capacity(batch.len()),
            e_s_hit: Vec::with_capacity(batch.len()),
            e_su: with_saem.then(Vec::new),
        };
        for (i, s) in batch.steps.iter().enumerate() {
            let fallback = if s.terminal { 0.0 } else { next_tot[i] };
            let y = if s.terminal { s.reward } else { s.reward + gamma * boot[i] };
            let stored = match (&mut memory, &s.next_key) {
                (Some(m), Some(k)) if !s.terminal => m.sem_mut().lookup(k),
                _ => None,
            };
            out.e_s.push(sem_target(s.reward, stored, gamma, s.terminal, fallback));
            out.e_s_hit.push(stored.is_some());
            if let (Some(e_su), Some(m), Some(k)) = (out.e_su.as_mut(), memory.as_mut(), &s.key) {
                let stored = m.saem_mut().expect("checked above").lookup(k, &s.joint_action);
                e_su.push(saem_target(stored, y));
            }
            out.y.push(y);
            out.fallback.push(fallback);
        }
        Ok(out)
    }

    /// Coefficients `w` and `w_e` from the current critic and the current
    /// agents' greedy joint action. `force_one` sets every weight to 1.
    pub fn wqmix_weights(
        &self,
        params: &ParameterSet,
        batch: &TrainBatch,
        y: &[f64],
        e: &[f64],
        alpha: f64,
        force_one: bool,
    ) -> Result<WqmixWeights> {
        if force_one {
            return Ok(WqmixWeights {
                w: vec![1.0; batch.len()],
                w_e: vec![1.0; batch.len()],
            });
        }
        let (q, _) = self.agent.forward(params, &batch.inputs, &batch.segments)?;
        let greedy: Vec<JointAction> = batch.steps.iter().map(|s| joint_argmax(&self.rows(&q, s.row))).collect();
        let qhat = self.critic_values(params, &batch.states, &greedy)?;
        let mut w = Vec::with_capacity(batch.len());
        let mut w_e = Vec::with_capacity(batch.len());
        for (i, s) in batch.steps.iter().enumerate() {
            w.push(wqmix_weight(y[i], qhat[i], &s.joint_action, &greedy[i], alpha));
            w_e.push(wqmix_em_weight(e[i], qhat[i], &s.joint_action, &greedy[i], alpha));
        }
        Ok(WqmixWeights { w, w_e })
    }

    /// `Q_tot(s_t, u_t)` and, when present, `Q̂*(s_t, u_t)` for every step.
    pub fn evaluate(&self, params: &ParameterSet, batch: &TrainBatch) -> Result<Evaluated> {
        let (q, agent_cache) = self.agent.forward(params, &batch.inputs, &batch.segments)?;
        let chosen: Vec<f64> = batch.steps.iter().flat_map(|s| self.gather(&q, s.row, &s.joint_action)).collect();
        let chosen = Tensor::from_vec(&[batch.len(), self.n_agents], chosen)?;
        let (q_tot, mix_cache) = self.mix(params, &chosen, &batch.states)?;
        let (critic, critic_cache) = match &self.critic {
            Some(c) => {
                let s: Vec<&[f64]> = (0..batch.len()).map(|r| batch.states.row(r)).collect();
                let u: Vec<&[usize]> = batch.steps.iter().map(|s| s.joint_action.as_slice()).collect();
                let (v, cache) = c.forward(params, &c.inputs(&s, &u)?)?;
                (Some(v), Some(cache))
            }
            None => (None, None),
        };
        Ok(Evaluated {
            q_tot,
            critic,
            agent_cache,
            mix_cache,
            critic_cache,
        })
    }

    /// Loss value only (used for finite differences and diagnostics).
    pub fn loss(&self, params: &ParameterSet, batch: &TrainBatch, targets: &LossTargets) -> Result<f64> {
        let ev = self.evaluate(params, batch)?;
        Ok(loss_terms(&ev.q_tot, ev.critic.as_deref(), targets)?.0)
    }

    pub fn loss_and_grad(&self, params: &ParameterSet, batch: &TrainBatch, targets: &LossTargets) -> Result<(f64, GradBuffer)> {
        let ev = self.evaluate(params, batch)?;
        let (loss, d_tot, d_critic) = loss_terms(&ev.q_tot, ev.critic.as_deref(), targets)?;
        let mut grads = params.zeros_like();
        let d_chosen = match (&ev.mix_cache, &self.qmix) {
            (MixCache::Vdn, _) => {
                let data = d_tot.iter().flat_map(|&g| std::iter::repeat_n(g, self.n_agents)).collect();
                Tensor::from_vec(&[batch.len(), self.n_agents], data)?
            }
            (MixCache::Qmix(cache), Some(m)) => m.backward(params, cache, &d_tot, &mut grads)?,
            (MixCache::Qmix(_), None) => unreachable!("qmix cache without mixer"),
        };
        let mut dq = Tensor::zeros(&[batch.inputs.rows(), self.n_actions]);
        for (i, s) in batch.steps.iter().enumerate() {
            for (a, &u) in s.joint_action.iter().enumerate() {
                dq.row_mut(s.row + a)[u] += d_chosen.row(i)[a];
            }
        }
        self.agent.backward(params, &ev.agent_cache, &dq, &mut grads)?;
        if let (Some(c), Some(cache), Some(d)) = (&self.critic, &ev.critic_cache, d_critic) {
            c.backward(params, cache, &d, &mut grads)?;
        }
        grads.check_finite()?;
        Ok((loss, grads))
    }
}

/// Returns the loss and its derivatives with respect to `Q_tot` and `Q̂*`.
pub fn loss_terms(q_tot: &[f64], critic: Option<&[f64]>, t: &LossTargets) -> Result<(f64, Vec<f64>, Option<Vec<f64>>)> {
    let n = q_tot.len();
    if t.y.len() != n || t.e.len() != n {
        return Err(Error::Shape(format!("{} targets for {n} steps", t.y.len())));
    }
    let lambda = t.lambda;
    let mut loss = 0.0;
    let mut d_tot = Vec::with_capacity(n);
    let mut d_critic = Vec::with_capacity(n);
    match (&t.weights, critic) {
        (None, _) => {
            for i in 0..n {
                let (q, y, e) = (q_tot[i], t.y[i], t.e[i]);
                loss += (1.0 - lambda) * (q - y).powi(2) + lambda * (q - e).powi(2);
                d_tot.push(2.0 * (1.0 - lambda) * (q - y) + 2.0 * lambda * (q - e));
            }
        }
        (Some(w), Some(critic)) => {
            for i in 0..n {
                let (q, c, y, e) = (q_tot[i], critic[i], t.y[i], t.e[i]);
                let vanilla = w.w[i] * (q - y).powi(2) + (c - y).powi(2);
                let memory = w.w_e[i] * (q - e).powi(2) + (c - e).powi(2);
                loss += (1.0 - lambda) * vanilla + lambda * memory;
                d_tot.push(2.0 * (1.0 - lambda) * w.w[i] * (q - y) + 2.0 * lambda * w.w_e[i] * (q - e));
                d_critic.push(2.0 * (1.0 - lambda) * (c - y) + 2.0 * lambda * (c - e));
            }
        }
        (Some(_), None) => return Err(Error::Config("weighted loss requires the central critic".into())),
    }
    if !loss.is_finite() {
        return Err(Error::Numerics(format!("loss is {loss}")));
    }
    let d_critic = t.weights.is_some().then_some(d_critic);
    Ok((loss, d_tot, d_critic))
}

/// Plain TD loss `Σ (Q_tot − y)²`.
pub fn td_loss(q_tot: &[f64], y: &[f64]) -> f64 {
    q_tot.iter().zip(y).map(|(q, y)| (q - y).powi(2)).sum()
}

/// Weighted QMIX loss `Σ w (Q_tot − y)² + (Q̂* − y)²`.
pub fn wqmix_loss(q_tot: &[f64], critic: &[f64], y: &[f64], w: &[f64]) -> f64 {
    (0..q_tot.len())
        .map(|i| w[i] * (q_tot[i] - y[i]).powi(2) + (critic[i] - y[i]).powi(2))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::decode_joint;
    use crate::memory::{KeyEncoder, MemoryItem};
    use crate::neural::grad_check;
    use crate::{pad_batch, pad_batch_to, stream_rng, Episode, Transition};
    use rand::Rng as _;

    const N: usize = 2;
    const U: usize = 3;
    const OBS: usize = 4;
    const STATE: usize = 3;

    fn spec() -> EnvSpec {
        EnvSpec {
            n_agents: N,
            n_actions: U,
            obs_dim: OBS,
            state_dim: STATE,
            episode_limit: 4,
            gamma_hint: 0.99,
        }
    }

    fn sizes(recurrent: bool) -> NetworkSizes {
        NetworkSizes {
            agent_hidden: 8,
            recurrent,
            mixing_embed: 4,
            critic_hidden: 8,
        }
    }

    /// States are drawn from a small grid so that keys recur across episodes.
    fn random_episodes(rng: &mut Rng, count: usize) -> Vec<Episode> {
        let state = |rng: &mut Rng| -> Vec<f64> { (0..STATE).map(|_| rng.random_range(0..3) as f64 * 0.5).collect() };
        let obs = |rng: &mut Rng| -> Vec<Vec<f64>> { (0..N).map(|_| (0..OBS).map(|_| rng.random_range(-1.0..1.0)).collect()).collect() };
        (0..count)
            .map(|i| {
                let len = rng.random_range(1..=4);
                let terminal = rng.random_bool(0.6);
                let transitions = (0..len)
                    .map(|t| Transition {
                        observations: obs(rng),
                        joint_action: (0..N).map(|_| rng.random_range(0..U)).collect(),
                        global_state: state(rng),
                        reward: rng.random_range(-1.0..2.0),
                        terminal: terminal && t + 1 == len,
                    })
                    .collect();
                Episode::new(transitions, obs(rng), state(rng), i as u64, "synthetic").unwrap()
            })
            .collect()
    }

    fn keys_of(eps: &[Episode], enc: &KeyEncoder) -> Vec<Vec<MemoryKey>> {
        eps.iter()
            .map(|e| (0..=e.len()).map(|t| enc.encode(e.state_at(t)).unwrap()).collect())
            .collect()
    }

    fn perturbed(p: &ParameterSet, rng: &mut Rng) -> ParameterSet {
        let mut q = p.clone();
        for (_, t) in q.iter_mut() {
            t.data_mut().iter_mut().for_each(|v| *v += rng.random_range(-0.05..0.05));
        }
        q
    }

    struct Fixture {
        learner: Learner,
        params: ParameterSet,
        target: ParameterSet,
        batch: TrainBatch,
        memory: EpisodicMemory,
    }

    fn fixture(kind: MixerKind, recurrent: bool, seed: u64, fill_memory: bool) -> Fixture {
        let learner = Learner::new(&spec(), kind, sizes(recurrent));
        let params = learner.init_params(&mut stream_rng(seed, 0)).unwrap();
        let mut rng = stream_rng(seed, 1);
        let target = perturbed(&params, &mut rng);
        let eps = random_episodes(&mut rng, 4);
        let enc = KeyEncoder::raw(1e-6).unwrap();
        let keys = keys_of(&eps, &enc);
        let mut memory = EpisodicMemory::new(enc, 100, 1000, true).unwrap();
        if fill_memory {
            for (e, k) in eps.iter().zip(&keys) {
                let r = crate::discounted_returns(&e.rewards(), 0.99).unwrap();
                for t in (0..e.len()).rev() {
                    memory.push(MemoryItem {
                        key: k[t].clone(),
                        joint_action: e.transitions[t].joint_action.clone(),
                        ret: r[t] + rng.random_range(0.0..0.5),
                    });
                }
            }
            memory.flush();
        }
        let refs: Vec<&Episode> = eps.iter().collect();
        let krefs: Vec<&[MemoryKey]> = keys.iter().map(|k| k.as_slice()).collect();
        let batch = learner.batch(&pad_batch(&refs).unwrap(), Some(&krefs)).unwrap();
        Fixture {
            learner,
            params,
            target,
            batch,
            memory,
        }
    }

    #[test]
    fn em_loss_arithmetic() {
        let t = |lambda| LossTargets {
            y: vec![2.0],
            e: vec![1.5],
            lambda,
            weights: None,
        };
        assert!((loss_terms(&[1.0], None, &t(0.1)).unwrap().0 - 0.925).abs() < 1e-12);
        assert_eq!(loss_terms(&[1.0], None, &t(0.0)).unwrap().0, 1.0);
        assert_eq!(loss_terms(&[1.0], None, &t(1.0)).unwrap().0, 0.25);
        let nan = LossTargets { y: vec![f64::NAN], ..t(0.1) };
        assert!(matches!(loss_terms(&[1.0], None, &nan), Err(Error::Numerics(_))));
    }

    #[test]
    fn lambda_zero_is_the_td_loss_bit_for_bit() {
        let mut rng = stream_rng(5, 5);
        for _ in 0..50 {
            let q: Vec<f64> = (0..20).map(|_| rng.random_range(-5.0..5.0)).collect();
            let y: Vec<f64> = (0..20).map(|_| rng.random_range(-5.0..5.0)).collect();
            let e: Vec<f64> = (0..20).map(|_| rng.random_range(-5.0..5.0)).collect();
            let t = LossTargets { y: y.clone(), e, lambda: 0.0, weights: None };
            assert_eq!(loss_terms(&q, None, &t).unwrap().0.to_bits(), td_loss(&q, &y).to_bits());
        }
    }

    #[test]
    fn weighted_loss_at_lambda_zero_is_the_plain_weighted_loss() {
        let mut rng = stream_rng(6, 6);
        for _ in 0..50 {
            let v = |rng: &mut Rng| -> Vec<f64> { (0..16).map(|_| rng.random_range(-5.0..5.0)).collect() };
            let (q, c, y, e) = (v(&mut rng), v(&mut rng), v(&mut rng), v(&mut rng));
            let w: Vec<f64> = (0..16).map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.75 }).collect();
            let w_e: Vec<f64> = (0..16).map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.75 }).collect();
            let t = LossTargets {
                y: y.clone(),
                e,
                lambda: 0.0,
                weights: Some(WqmixWeights { w: w.clone(), w_e }),
            };
            let got = loss_terms(&q, Some(&c), &t).unwrap().0;
            assert_eq!(got.to_bits(), wqmix_loss(&q, &c, &y, &w).to_bits());
        }
    }

    #[test]
    fn unit_weights_and_matching_critic_double_the_memory_loss() {
        let mut rng = stream_rng(7, 7);
        let v = |rng: &mut Rng| -> Vec<f64> { (0..10).map(|_| rng.random_range(-5.0..5.0)).collect() };
        let (q, y, e) = (v(&mut rng), v(&mut rng), v(&mut rng));
        for lambda in [0.0, 0.1, 0.5, 1.0] {
            let plain = LossTargets { y: y.clone(), e: e.clone(), lambda, weights: None };
            let weighted = LossTargets {
                weights: Some(WqmixWeights { w: vec![1.0; 10], w_e: vec![1.0; 10] }),
                ..plain.clone()
            };
            let a = loss_terms(&q, None, &plain).unwrap().0;
            let b = loss_terms(&q, Some(&q), &weighted).unwrap().0;
            assert!((b - 2.0 * a).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn terminal_targets_are_the_reward() {
        let f = fixture(MixerKind::Qmix, false, 1, true);
        let mut memory = f.memory.clone();
        let t = f.learner.compute_targets(&f.target, &f.batch, 0.99, Some(&mut memory)).unwrap();
        let mut seen = 0;
        for (i, s) in f.batch.steps.iter().enumerate() {
            if s.terminal {
                assert_eq!(t.y[i], s.reward);
                assert_eq!(t.e_s[i], s.reward);
                seen += 1;
            }
        }
        assert!(seen > 0);
    }

    /// `max` over every joint action of the target mixer, evaluated one
    /// joint action at a time.
    fn enumerated_bootstrap(f: &Fixture, kind: MixerKind) -> Vec<f64> {
        let (q, _) = f.learner.agent.forward(&f.target, &f.batch.inputs, &f.batch.segments).unwrap();
        f.batch
            .steps
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let rows = f.learner.rows(&q, s.next_row);
                let state = Tensor::from_vec(&[1, STATE], f.batch.next_states.row(i).to_vec()).unwrap();
                let mut best = f64::NEG_INFINITY;
                let mut best_u = Vec::new();
                for j in 0..U.pow(N as u32) {
                    let u = decode_joint(j, N, U);
                    let v = f.learner.q_tot(&f.target, &[rows.clone()], &[u.clone()], &state).unwrap()[0];
                    if v > best {
                        best = v;
                        best_u = u;
                    }
                }
                match kind {
                    MixerKind::Wqmix => f.learner.critic_values(&f.target, &state, &[best_u]).unwrap()[0],
                    _ => best,
                }
            })
            .collect()
    }

    #[test]
    fn td_targets_match_exhaustive_enumeration() {
        for kind in [MixerKind::Vdn, MixerKind::Qmix, MixerKind::Wqmix] {
            for seed in 0..5 {
                let f = fixture(kind, false, seed, false);
                let t = f.learner.compute_targets(&f.target, &f.batch, 0.99, None).unwrap();
                let boot = enumerated_bootstrap(&f, kind);
                for (i, s) in f.batch.steps.iter().enumerate() {
                    let want = if s.terminal { s.reward } else { s.reward + 0.99 * boot[i] };
                    assert!((t.y[i] - want).abs() <= 1e-12 * want.abs().max(1.0), "{kind:?} {} vs {want}", t.y[i]);
                }
            }
        }
    }

    #[test]
    fn empty_table_falls_back_to_the_target_bootstrap() {
        let mut checked = 0;
        for seed in 0..40 {
            let f = fixture(MixerKind::Qmix, false, seed, false);
            let mut memory = f.memory.clone();
            let t = f.learner.compute_targets(&f.target, &f.batch, 0.99, Some(&mut memory)).unwrap();
            let boot = enumerated_bootstrap(&f, MixerKind::Qmix);
            for (i, s) in f.batch.steps.iter().enumerate() {
                if s.terminal {
                    continue;
                }
                assert!(!t.e_s_hit[i]);
                assert_eq!(t.e_s[i], s.reward + 0.99 * boot[i]);
                checked += 1;
            }
        }
        assert!(checked >= 100, "only {checked} transitions");
    }

    #[test]
    fn saem_miss_substitutes_td_target() {
        let f = fixture(MixerKind::Vdn, false, 3, false);
        let mut memory = f.memory.clone();
        let t = f.learner.compute_targets(&f.target, &f.batch, 0.99, Some(&mut memory)).unwrap();
        assert_eq!(t.e_su.unwrap(), t.y);
    }

    #[test]
    fn padding_never_changes_the_loss() {
        for kind in [MixerKind::Vdn, MixerKind::Qmix, MixerKind::Wqmix] {
            let learner = Learner::new(&spec(), kind, sizes(true));
            let params = learner.init_params(&mut stream_rng(2, 0)).unwrap();
            let eps = random_episodes(&mut stream_rng(2, 1), 5);
            let refs: Vec<&Episode> = eps.iter().collect();
            let tight = pad_batch(&refs).unwrap();
            let loose = pad_batch_to(&refs, 2 * tight.t_max).unwrap();
            let mut losses = Vec::new();
            for padded in [&tight, &loose] {
                let batch = learner.batch(padded, None).unwrap();
                let t = learner.compute_targets(&params, &batch, 0.99, None).unwrap();
                let weights = (kind == MixerKind::Wqmix).then(|| learner.wqmix_weights(&params, &batch, &t.y, &t.e_s, 0.75, false).unwrap());
                let lt = LossTargets { y: t.y, e: t.e_s, lambda: 0.3, weights };
                losses.push(learner.loss(&params, &batch, &lt).unwrap().to_bits());
            }
            assert_eq!(losses[0], losses[1]);
        }
    }

    #[test]
    fn every_loss_path_passes_gradient_check() {
        for kind in [MixerKind::Vdn, MixerKind::Qmix, MixerKind::Wqmix] {
            for mode in ["none", "sem", "saem"] {
                for seed in 0..10u64 {
                    let f = fixture(kind, seed % 2 == 1, seed, true);
                    let mut memory = f.memory.clone();
                    let t = f.learner.compute_targets(&f.target, &f.batch, 0.99, Some(&mut memory)).unwrap();
                    let (e, lambda) = match mode {
                        "none" => (t.e_s.clone(), 0.0),
                        "sem" => (t.e_s.clone(), 0.3),
                        _ => (t.e_su.clone().unwrap(), 0.3),
                    };
                    let weights = (kind == MixerKind::Wqmix)
                        .then(|| f.learner.wqmix_weights(&f.params, &f.batch, &t.y, &e, 0.75, false).unwrap());
                    let lt = LossTargets { y: t.y.clone(), e, lambda, weights };
                    let (_, grads) = f.learner.loss_and_grad(&f.params, &f.batch, &lt).unwrap();
                    let report = grad_check(&f.params, &grads, 1e-5, |p| f.learner.loss(p, &f.batch, &lt).unwrap());
                    assert!(report.passes(1e-4), "{kind:?}/{mode}/seed {seed}: {report:?}");
                }
            }
        }
    }

    #[test]
    fn hits_use_the_table_and_respect_the_return_bound() {
        let f = fixture(MixerKind::Vdn, false, 9, true);
        let mut memory = f.memory.clone();
        let t = f.learner.compute_targets(&f.target, &f.batch, 0.99, Some(&mut memory)).unwrap();
        let mut hits = 0;
        for (i, s) in f.batch.steps.iter().enumerate() {
            if t.e_s_hit[i] {
                let stored = f.memory.sem().peek(s.next_key.as_ref().unwrap()).unwrap();
                assert_eq!(t.e_s[i], s.reward + 0.99 * stored);
                hits += 1;
            }
        }
        assert!(hits > 0);
        assert_eq!(memory.sem().table().hits() as usize, hits);
    }
}
