//! The training loop: ε-greedy decentralised rollouts, episode replay,
//! TD and episodic-memory targets, the combined losses, target-network
//! syncs and greedy evaluation.

mod config;
mod model;
mod network;

pub use config::TrainerConfig;
pub use model::{loss_terms, td_loss, wqmix_loss, Learner, LossTargets, NetworkSizes, StepData, Targets, TrainBatch, WqmixWeights};
pub use network::{AgentCache, AgentNetwork, Segment};

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::time::Instant;

use rand::{Rng as _, RngCore};

use crate::envs::{EnvSpec, Environment};
use crate::memory::{EpisodicMemory, KeyEncoder, MemoryItem, MemoryKey, MemoryMode, ProjectionMatrix, Snapshot};
use crate::mixers::{argmax, MixerKind};
use crate::neural::{ParameterSet, RmsProp, Tensor};
use crate::{discounted_returns, pad_batch, stream_rng, Episode, Error, JointAction, ReplayBuffer, Result, Rng, Transition};

pub const STREAM_ENV: u64 = 1;
pub const STREAM_EXPLORE: u64 = 2;
pub const STREAM_PROJECTION: u64 = 3;
pub const STREAM_INIT: u64 = 4;
pub const STREAM_EVAL: u64 = 5;
pub const STREAM_SAMPLE: u64 = 6;

/// Per agent: a uniformly random action with probability ε, otherwise the
/// greedy one (lowest index on ties).
pub fn select_actions(all_q: &[Vec<f64>], epsilon: f64, rng: &mut Rng) -> JointAction {
    all_q
        .iter()
        .map(|row| {
            if rng.random::<f64>() < epsilon {
                rng.random_range(0..row.len())
            } else {
                argmax(row)
            }
        })
        .collect()
}

/// One ε-greedy episode. Returns the episode and whether the environment
/// reported success at any step.
pub fn rollout(
    learner: &Learner,
    params: &ParameterSet,
    env: &mut dyn Environment,
    epsilon: f64,
    rng: &mut Rng,
    seed: u64,
) -> Result<(Episode, bool)> {
    let limit = env.spec().episode_limit.max(1);
    let start = env.reset(seed);
    let (mut observations, mut state) = (start.observations, start.state);
    let mut hidden = learner.agent().initial_hidden();
    let mut transitions = Vec::new();
    let mut success = false;
    loop {
        let x = learner.step_inputs(&observations)?;
        let (q, h) = learner.agent().step(params, &x, &hidden)?;
        hidden = h;
        let all_q: Vec<Vec<f64>> = (0..q.rows()).map(|r| q.row(r).to_vec()).collect();
        let joint_action = select_actions(&all_q, epsilon, rng);
        let res = env.step(&joint_action)?;
        success |= res.success;
        transitions.push(Transition {
            observations,
            joint_action,
            global_state: state,
            reward: res.reward,
            terminal: res.terminated && !res.truncated,
        });
        observations = res.observations;
        state = res.state;
        if res.terminated {
            break;
        }
        if transitions.len() > limit {
            return Err(Error::Config(format!("{} ran past its step limit", env.id())));
        }
    }
    let id = env.id().to_string();
    Ok((Episode::new(transitions, observations, state, seed, id)?, success))
}

/// A replayed episode with the memory key of each of its states.
#[derive(Debug, Clone)]
pub struct StoredEpisode {
    pub episode: Episode,
    pub keys: Vec<MemoryKey>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub mean_return: f64,
    pub success_rate: f64,
    /// Discounted return of each evaluation episode.
    pub returns: Vec<f64>,
}

/// One logging boundary. Training statistics cover the updates since the
/// previous record and are `None` when there were none.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub step: u64,
    pub episode: u64,
    pub loss: Option<f64>,
    pub mean_y: Option<f64>,
    pub mean_e_s: Option<f64>,
    pub mean_e_su: Option<f64>,
    pub eval_return_mean: f64,
    pub eval_success_rate: f64,
    pub table_size: usize,
    pub table_hits: u64,
    pub table_misses: u64,
    pub wall_ms: u64,
    /// Largest state-memory target that came from a table hit.
    pub max_hit_e_s: Option<f64>,
    pub updates: u64,
}

impl MetricsRecord {
    pub fn hit_rate(&self) -> Option<f64> {
        let total = self.table_hits + self.table_misses;
        (total > 0).then(|| self.table_hits as f64 / total as f64)
    }
}

/// Statistics of a single gradient update.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateStats {
    pub loss: f64,
    pub steps: usize,
    pub mean_y: f64,
    pub mean_e_s: f64,
    pub mean_e_su: Option<f64>,
    pub max_hit_e_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeReport {
    pub length: usize,
    pub discounted_return: f64,
    pub success: bool,
    pub update: Option<UpdateStats>,
    pub synced: bool,
    pub flushed: bool,
}

#[derive(Debug, Default, Clone)]
struct Window {
    updates: u64,
    loss: f64,
    steps: usize,
    y: f64,
    e_s: f64,
    e_su: f64,
    has_e_su: bool,
    max_hit_e_s: Option<f64>,
    hits_at_start: u64,
    misses_at_start: u64,
}

/// Training state: parameters, target parameters, optimiser, replay buffer,
/// episodic memory, counters and random streams.
pub struct Trainer {
    config: TrainerConfig,
    spec: EnvSpec,
    env: Box<dyn Environment + Send>,
    learner: Learner,
    params: ParameterSet,
    target: ParameterSet,
    optimizer: RmsProp,
    buffer: ReplayBuffer<StoredEpisode>,
    memory: EpisodicMemory,
    env_steps: u64,
    episodes: u64,
    training_episodes: u64,
    updates: u64,
    env_rng: Rng,
    explore_rng: Rng,
    sample_rng: Rng,
    window: Window,
    started: Instant,
}

impl Trainer {
    pub fn new(config: TrainerConfig) -> Result<Self> {
        config.validate()?;
        let env = config.env.build()?;
        let spec = env.spec().clone();
        let learner = Learner::new(
            &spec,
            config.mixer,
            NetworkSizes {
                agent_hidden: config.agent_hidden,
                recurrent: config.recurrent,
                mixing_embed: config.mixing_embed,
                critic_hidden: config.critic_hidden,
            },
        );
        let params = learner.init_params(&mut stream_rng(config.seed, STREAM_INIT))?;
        let target = params.sync_target();
        let optimizer = RmsProp::new(&params, config.learning_rate, RmsProp::DEFAULT_DECAY, RmsProp::DEFAULT_EPSILON)?;
        let encoder = if config.project_keys {
            let seed = stream_rng(config.seed, STREAM_PROJECTION).next_u64();
            KeyEncoder::projected(ProjectionMatrix::gaussian(spec.state_dim, config.key_dim, seed), config.quantization)?
        } else {
            KeyEncoder::raw(config.quantization)?
        };
        let memory = EpisodicMemory::new(
            encoder,
            config.table_capacity,
            config.mset_capacity,
            config.memory == MemoryMode::Saem,
        )?;
        Ok(Self {
            buffer: ReplayBuffer::new(config.buffer_capacity)?,
            env_rng: stream_rng(config.seed, STREAM_ENV),
            explore_rng: stream_rng(config.seed, STREAM_EXPLORE),
            sample_rng: stream_rng(config.seed, STREAM_SAMPLE),
            config,
            spec,
            env,
            learner,
            params,
            target,
            optimizer,
            memory,
            env_steps: 0,
            episodes: 0,
            training_episodes: 0,
            updates: 0,
            window: Window::default(),
            started: Instant::now(),
        })
    }

    pub fn config(&self) -> &TrainerConfig {
        &self.config
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn learner(&self) -> &Learner {
        &self.learner
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }

    pub fn target_params(&self) -> &ParameterSet {
        &self.target
    }

    pub fn memory(&self) -> &EpisodicMemory {
        &self.memory
    }

    pub fn buffer(&self) -> &ReplayBuffer<StoredEpisode> {
        &self.buffer
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    pub fn episodes(&self) -> u64 {
        self.episodes
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn epsilon(&self) -> f64 {
        self.config.epsilon.epsilon_at(self.env_steps)
    }

    /// Greedy joint action for one set of observations with a fresh
    /// recurrent state.
    pub fn greedy_action(&self, observations: &[Vec<f64>]) -> Result<JointAction> {
        let x = self.learner.step_inputs(observations)?;
        let (q, _) = self.learner.agent().step(&self.params, &x, &self.learner.agent().initial_hidden())?;
        Ok((0..q.rows()).map(|r| argmax(q.row(r))).collect())
    }

    fn encode_episode(&self, episode: &Episode) -> Result<Vec<MemoryKey>> {
        (0..=episode.len()).map(|t| self.memory.encoder().encode(episode.state_at(t))).collect()
    }

    /// Collects one ε-greedy episode, stages its returns in `M` (last step
    /// first) and stores it for replay. No learning happens here.
    pub fn run_episode(&mut self, epsilon: f64) -> Result<(Episode, bool, bool)> {
        let seed = self.env_rng.next_u64();
        let (episode, success) = rollout(&self.learner, &self.params, self.env.as_mut(), epsilon, &mut self.explore_rng, seed)?;
        let keys = self.encode_episode(&episode)?;
        let returns = discounted_returns(&episode.rewards(), self.config.gamma)?;
        let mut flushed = false;
        for t in (0..episode.len()).rev() {
            let item = MemoryItem {
                key: keys[t].clone(),
                joint_action: episode.transitions[t].joint_action.clone(),
                ret: returns[t],
            };
            flushed |= self.memory.push(item).is_some();
        }
        self.env_steps += episode.len() as u64;
        self.episodes += 1;
        self.buffer.store(StoredEpisode { episode: episode.clone(), keys });
        Ok((episode, success, flushed))
    }

    /// One gradient step on a uniformly sampled batch of episodes.
    pub fn train_step(&mut self) -> Result<UpdateStats> {
        let sampled = self.buffer.sample(self.config.batch_size, &mut self.sample_rng)?;
        let episodes: Vec<&Episode> = sampled.iter().map(|s| &s.episode).collect();
        let keys: Vec<&[MemoryKey]> = sampled.iter().map(|s| s.keys.as_slice()).collect();
        let padded = pad_batch(&episodes)?;
        let batch = self.learner.batch(&padded, Some(&keys))?;
        let targets = self
            .learner
            .compute_targets(&self.target, &batch, self.config.gamma, Some(&mut self.memory))?;
        let e = match (self.config.memory, &targets.e_su) {
            (MemoryMode::Saem, Some(e_su)) => e_su.clone(),
            _ => targets.e_s.clone(),
        };
        let weights = if self.config.mixer == MixerKind::Wqmix {
            Some(self.learner.wqmix_weights(&self.params, &batch, &targets.y, &e, self.config.alpha, false)?)
        } else {
            None
        };
        let loss_targets = LossTargets {
            y: targets.y.clone(),
            e,
            lambda: self.config.effective_lambda(),
            weights,
        };
        let (loss, mut grads) = self.learner.loss_and_grad(&self.params, &batch, &loss_targets)?;
        if let Some(limit) = self.config.grad_clip {
            let norm = grads.squared_norm().sqrt();
            if norm > limit {
                let scale = limit / norm;
                for (_, g) in grads.iter_mut() {
                    g.data_mut().iter_mut().for_each(|v| *v *= scale);
                }
            }
        }
        self.optimizer.step(&mut self.params, &grads)?;
        self.updates += 1;

        let n = batch.len();
        let max_hit_e_s = targets
            .e_s
            .iter()
            .zip(&targets.e_s_hit)
            .filter(|(_, &hit)| hit)
            .map(|(&e, _)| e)
            .reduce(f64::max);
        let stats = UpdateStats {
            loss,
            steps: n,
            mean_y: targets.y.iter().sum::<f64>() / n as f64,
            mean_e_s: targets.e_s.iter().sum::<f64>() / n as f64,
            mean_e_su: targets.e_su.as_ref().map(|v| v.iter().sum::<f64>() / n as f64),
            max_hit_e_s,
        };
        let w = &mut self.window;
        w.updates += 1;
        w.loss += loss;
        w.steps += n;
        w.y += targets.y.iter().sum::<f64>();
        w.e_s += targets.e_s.iter().sum::<f64>();
        if let Some(v) = &targets.e_su {
            w.e_su += v.iter().sum::<f64>();
            w.has_e_su = true;
        }
        w.max_hit_e_s = match (w.max_hit_e_s, max_hit_e_s) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        };
        Ok(stats)
    }

    /// Rollout, store, and (once the buffer holds a batch) train and
    /// possibly sync the target network.
    pub fn step_episode(&mut self) -> Result<EpisodeReport> {
        let epsilon = self.epsilon();
        let (episode, success, flushed) = self.run_episode(epsilon)?;
        let mut update = None;
        let mut synced = false;
        if self.buffer.len() >= self.config.batch_size {
            for _ in 0..self.config.train_steps_per_episode {
                update = Some(self.train_step()?);
            }
            self.training_episodes += 1;
            if self.training_episodes % self.config.target_sync_episodes == 0 {
                self.target.copy_from(&self.params)?;
                synced = true;
            }
        }
        Ok(EpisodeReport {
            length: episode.len(),
            discounted_return: episode.total_discounted_return(self.config.gamma),
            success,
            update,
            synced,
            flushed,
        })
    }

    /// Greedy rollouts on a separate environment instance; the same episode
    /// seeds are used at every evaluation.
    pub fn evaluate(&self, episodes: usize) -> Result<EvalResult> {
        let mut env = self.config.env.build()?;
        let mut rng = stream_rng(self.config.seed, STREAM_EVAL);
        let mut returns = Vec::with_capacity(episodes);
        let mut successes = 0;
        for _ in 0..episodes {
            let seed = rng.next_u64();
            let (ep, success) = rollout(&self.learner, &self.params, env.as_mut(), 0.0, &mut rng, seed)?;
            returns.push(ep.total_discounted_return(self.config.gamma));
            successes += usize::from(success);
        }
        let n = episodes.max(1) as f64;
        Ok(EvalResult {
            mean_return: returns.iter().sum::<f64>() / n,
            success_rate: successes as f64 / n,
            returns,
        })
    }

    fn lookup_counts(&self) -> (usize, u64, u64) {
        match (self.config.memory, self.memory.saem()) {
            (MemoryMode::Saem, Some(t)) => (t.len(), t.hits(), t.misses()),
            _ => {
                let t = self.memory.sem().table();
                (t.len(), t.hits(), t.misses())
            }
        }
    }

    /// Evaluates and closes the current statistics window.
    pub fn record(&mut self) -> Result<MetricsRecord> {
        let eval = self.evaluate(self.config.eval_episodes)?;
        let (size, hits, misses) = self.lookup_counts();
        let w = std::mem::take(&mut self.window);
        let per_step = |sum: f64| (w.steps > 0).then(|| sum / w.steps as f64);
        let record = MetricsRecord {
            step: self.env_steps,
            episode: self.episodes,
            loss: (w.updates > 0).then(|| w.loss / w.updates as f64),
            mean_y: per_step(w.y),
            mean_e_s: per_step(w.e_s),
            mean_e_su: if w.has_e_su { per_step(w.e_su) } else { None },
            eval_return_mean: eval.mean_return,
            eval_success_rate: eval.success_rate,
            table_size: size,
            table_hits: hits - w.hits_at_start,
            table_misses: misses - w.misses_at_start,
            wall_ms: if self.config.record_wall_time {
                self.started.elapsed().as_millis() as u64
            } else {
                0
            },
            max_hit_e_s: w.max_hit_e_s,
            updates: self.updates,
        };
        self.window.hits_at_start = hits;
        self.window.misses_at_start = misses;
        Ok(record)
    }

    /// Full run: an initial record, then one record each time the step
    /// counter passes a multiple of the evaluation interval.
    pub fn train(&mut self, mut sink: impl FnMut(&MetricsRecord)) -> Result<Vec<MetricsRecord>> {
        let mut records = Vec::new();
        let first = self.record()?;
        sink(&first);
        records.push(first);
        let interval = self.config.eval_interval;
        let mut next_eval = interval;
        while self.env_steps < self.config.total_steps {
            self.step_episode()?;
            while self.env_steps >= next_eval && next_eval <= self.config.total_steps {
                let r = self.record()?;
                sink(&r);
                records.push(r);
                next_eval += interval;
            }
        }
        Ok(records)
    }

    /// Hash of every piece of learning state, for purity checks.
    pub fn state_digest(&self) -> u64 {
        let mut h = DefaultHasher::new();
        let mut hash_params = |p: &ParameterSet| p.flatten().iter().for_each(|v| v.to_bits().hash(&mut h));
        hash_params(&self.params);
        hash_params(&self.target);
        hash_params(self.optimizer.second_moments());
        self.buffer.len().hash(&mut h);
        for s in self.buffer.iter() {
            s.episode.seed.hash(&mut h);
            s.keys.hash(&mut h);
        }
        for item in self.memory.staging().items() {
            item.key.hash(&mut h);
            item.ret.to_bits().hash(&mut h);
        }
        let q = self.memory.encoder().quantization();
        Snapshot::of_sem(self.memory.sem(), q).to_bytes().hash(&mut h);
        if let Some(t) = self.memory.saem() {
            Snapshot::of_saem(t, q).to_bytes().hash(&mut h);
        }
        (self.env_steps, self.episodes, self.training_episodes, self.updates).hash(&mut h);
        h.finish()
    }

    /// Agent utilities `[agent][action]` at one set of observations.
    pub fn agent_utilities(&self, observations: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let x: Tensor = self.learner.step_inputs(observations)?;
        let (q, _) = self.learner.agent().step(&self.params, &x, &self.learner.agent().initial_hidden())?;
        Ok((0..q.rows()).map(|r| q.row(r).to_vec()).collect())
    }
}
