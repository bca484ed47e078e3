use crate::envs::{EnvConfig, PredatorPreyConfig};
use crate::memory::{MemoryMode, DEFAULT_KEY_DIM, DEFAULT_QUANTIZATION, DESK_MSET_CAPACITY, DESK_TABLE_CAPACITY, PAPER_MSET_CAPACITY, PAPER_TABLE_CAPACITY};
use crate::mixers::{MixerKind, DEFAULT_ALPHA};
use crate::neural::RmsProp;
use crate::{EpsilonSchedule, Error, Result};

/// Everything that determines a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainerConfig {
    pub env: EnvConfig,
    pub mixer: MixerKind,
    pub memory: MemoryMode,
    pub lambda: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Hard copy θ⁻ ← θ after this many training episodes.
    pub target_sync_episodes: u64,
    pub epsilon: EpsilonSchedule,
    /// Environment steps to collect.
    pub total_steps: u64,
    pub eval_interval: u64,
    pub eval_episodes: usize,
    pub train_steps_per_episode: usize,
    pub agent_hidden: usize,
    pub recurrent: bool,
    pub mixing_embed: usize,
    pub critic_hidden: usize,
    pub table_capacity: usize,
    pub mset_capacity: usize,
    pub key_dim: usize,
    pub quantization: f64,
    /// When false the raw state vector is the memory key.
    pub project_keys: bool,
    /// Clip the global gradient norm to this value.
    pub grad_clip: Option<f64>,
    /// Fill `wall_ms` with measured time instead of 0.
    pub record_wall_time: bool,
    pub seed: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            env: EnvConfig::PredatorPrey(PredatorPreyConfig::default()),
            mixer: MixerKind::Qmix,
            memory: MemoryMode::Sem,
            lambda: 0.1,
            alpha: DEFAULT_ALPHA,
            gamma: 0.99,
            learning_rate: RmsProp::DEFAULT_LR,
            batch_size: 32,
            buffer_capacity: 5000,
            target_sync_episodes: 200,
            epsilon: EpsilonSchedule::default(),
            total_steps: 50_000,
            eval_interval: 2_000,
            eval_episodes: 32,
            train_steps_per_episode: 1,
            agent_hidden: 64,
            recurrent: false,
            mixing_embed: 32,
            critic_hidden: 64,
            table_capacity: PAPER_TABLE_CAPACITY,
            mset_capacity: PAPER_MSET_CAPACITY,
            key_dim: DEFAULT_KEY_DIM,
            quantization: DEFAULT_QUANTIZATION,
            project_keys: true,
            grad_clip: None,
            record_wall_time: false,
            seed: 0,
        }
    }
}

impl TrainerConfig {
    /// Smaller tables and staging set for short runs on one machine.
    pub fn desk() -> Self {
        Self {
            table_capacity: DESK_TABLE_CAPACITY,
            mset_capacity: DESK_MSET_CAPACITY,
            ..Self::default()
        }
    }

    /// λ actually applied in the loss.
    pub fn effective_lambda(&self) -> f64 {
        if self.memory == MemoryMode::None {
            0.0
        } else {
            self.lambda
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: String| Err(Error::Config(format!("{field}: {why}")));
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad("lambda", format!("{} is outside [0, 1]", self.lambda));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad("alpha", format!("{} is outside [0, 1]", self.alpha));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma", format!("{} is outside [0, 1]", self.gamma));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate", format!("{} must be positive", self.learning_rate));
        }
        for (field, v) in [
            ("batch_size", self.batch_size),
            ("buffer_capacity", self.buffer_capacity),
            ("train_steps_per_episode", self.train_steps_per_episode),
            ("agent_hidden", self.agent_hidden),
            ("mixing_embed", self.mixing_embed),
            ("critic_hidden", self.critic_hidden),
            ("table_capacity", self.table_capacity),
            ("mset_capacity", self.mset_capacity),
            ("key_dim", self.key_dim),
        ] {
            if v == 0 {
                return bad(field, "must be positive".into());
            }
        }
        if self.batch_size > self.buffer_capacity {
            return bad("batch_size", format!("{} exceeds buffer capacity {}", self.batch_size, self.buffer_capacity));
        }
        if self.target_sync_episodes == 0 || self.eval_interval == 0 {
            return bad("target_sync_episodes/eval_interval", "must be positive".into());
        }
        if !(self.quantization.is_finite() && self.quantization > 0.0) {
            return bad("quantization", format!("{} must be positive", self.quantization));
        }
        if let Some(c) = self.grad_clip {
            if !(c.is_finite() && c > 0.0) {
                return bad("grad_clip", format!("{c} must be positive"));
            }
        }
        EpsilonSchedule::new(self.epsilon.start, self.epsilon.end, self.epsilon.anneal_steps)?;
        self.env.build()?;
        Ok(())
    }
}
