//! Experiment configuration files.
//!
//! A config is TOML with four sections plus a few top-level keys:
//!
//! ```toml
//! seeds = [0, 1, 2, 3, 4]
//! output_dir = "runs/pp"       # optional; falls back to $EMARL_OUT_DIR/<file stem>
//! profile = "paper"            # "paper" (default) or "desk": table/M capacity defaults
//!
//! [env]
//! name = "predator_prey"       # matrix_game | climbing_game | lever | predator_prey
//! width = 4
//!
//! [algo]
//! mixer = "qmix"               # vdn | qmix | wqmix
//! memory = "sem"               # none | sem | saem
//! lambda = 0.1
//!
//! [memory]
//! table_capacity = 1000000
//!
//! [training]
//! total_steps = 50000
//! ```
//!
//! Unknown keys are rejected. Every error names the offending field and,
//! where it can be located, the line.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use emarl::envs::{EnvConfig, LeverConfig, PredatorPreyConfig};
use emarl::memory::{MemoryMode, DESK_MSET_CAPACITY, DESK_TABLE_CAPACITY, PAPER_MSET_CAPACITY, PAPER_TABLE_CAPACITY};
use emarl::mixers::MixerKind;
use emarl::trainer::TrainerConfig;
use emarl::EpsilonSchedule;

/// Environment variable naming the default output root.
pub const OUT_DIR_ENV: &str = "EMARL_OUT_DIR";

#[derive(Debug, Default, Deserialize, Serialize, Clone, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EnvSection {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_agents: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_actions: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub payoff: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_levers: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cue_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub width: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub height: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_predators: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sight_radius: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub episode_limit: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub capture_reward: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distance_shaping: Option<f64>,
}

#[derive(Debug, Default, Deserialize, Serialize, Clone, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct AlgoSection {
    pub mixer: Option<String>,
    pub memory: Option<String>,
    pub lambda: Option<f64>,
    pub alpha: Option<f64>,
}

#[derive(Debug, Default, Deserialize, Serialize, Clone, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MemorySection {
    pub table_capacity: Option<usize>,
    pub mset_capacity: Option<usize>,
    pub projection_dim: Option<usize>,
    pub quantization: Option<f64>,
    pub projection: Option<bool>,
}

#[derive(Debug, Default, Deserialize, Serialize, Clone, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    pub gamma: Option<f64>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub buffer_capacity: Option<usize>,
    pub target_sync_episodes: Option<u64>,
    pub epsilon_start: Option<f64>,
    pub epsilon_end: Option<f64>,
    pub epsilon_anneal_steps: Option<u64>,
    pub total_steps: Option<u64>,
    pub eval_interval: Option<u64>,
    pub eval_episodes: Option<usize>,
    pub train_steps_per_episode: Option<usize>,
    pub agent_hidden: Option<usize>,
    pub recurrent: Option<bool>,
    pub mixing_embed: Option<usize>,
    pub critic_hidden: Option<usize>,
    pub grad_clip: Option<f64>,
    pub record_wall_time: Option<bool>,
}

/// The file as written, every field optional except the environment name.
#[derive(Debug, Deserialize, Serialize, Clone, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub profile: Option<String>,
    pub env: EnvSection,
    #[serde(default)]
    pub algo: AlgoSection,
    #[serde(default)]
    pub memory: MemorySection,
    #[serde(default)]
    pub training: TrainingSection,
}

/// A validated experiment: one trainer configuration replicated over seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub trainer: TrainerConfig,
    pub seeds: Vec<u64>,
    pub output_dir: Option<PathBuf>,
    pub profile: String,
}

/// 1-based line of `key` inside `[section]` (or at top level when `section`
/// is empty).
pub fn locate(source: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, line) in source.lines().enumerate() {
        let t = line.trim();
        if let Some(name) = t.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            current = name.trim().to_string();
            continue;
        }
        if current == section {
            if let Some((k, _)) = t.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

fn at(source: &str, section: &str, key: &str) -> String {
    let field = if section.is_empty() { key.to_string() } else { format!("{section}.{key}") };
    match locate(source, section, key) {
        Some(line) => format!("line {line}: {field}"),
        None => field,
    }
}

fn env_config(env: &EnvSection, source: &str) -> Result<EnvConfig> {
    let allowed: &[&str] = match env.name.as_str() {
        "matrix_game" => &["n_agents", "n_actions", "payoff"],
        "climbing_game" => &[],
        "lever" => &["n_agents", "n_levers", "episode_limit", "cue_accuracy"],
        "predator_prey" => &["width", "height", "n_predators", "sight_radius", "episode_limit", "capture_reward", "distance_shaping"],
        other => bail!(
            "{}: unknown environment {other:?} (matrix_game, climbing_game, lever, predator_prey)",
            at(source, "env", "name")
        ),
    };
    let present = [
        ("n_agents", env.n_agents.is_some()),
        ("n_actions", env.n_actions.is_some()),
        ("payoff", env.payoff.is_some()),
        ("n_levers", env.n_levers.is_some()),
        ("cue_accuracy", env.cue_accuracy.is_some()),
        ("width", env.width.is_some()),
        ("height", env.height.is_some()),
        ("n_predators", env.n_predators.is_some()),
        ("sight_radius", env.sight_radius.is_some()),
        ("episode_limit", env.episode_limit.is_some()),
        ("capture_reward", env.capture_reward.is_some()),
        ("distance_shaping", env.distance_shaping.is_some()),
    ];
    for (key, set) in present {
        if set && !allowed.contains(&key) {
            bail!("{}: not a parameter of {}", at(source, "env", key), env.name);
        }
    }
    Ok(match env.name.as_str() {
        "climbing_game" => EnvConfig::climbing_game(),
        "matrix_game" => {
            let n_agents = env.n_agents.unwrap_or(2);
            let n_actions = env.n_actions.ok_or_else(|| anyhow!("env.n_actions is required for matrix_game"))?;
            let payoff = env.payoff.clone().ok_or_else(|| anyhow!("env.payoff is required for matrix_game"))?;
            let expected = n_actions.checked_pow(n_agents as u32).unwrap_or(usize::MAX);
            if payoff.len() != expected {
                bail!("{}: {} entries, expected n_actions^n_agents = {expected}", at(source, "env", "payoff"), payoff.len());
            }
            EnvConfig::MatrixGame { n_agents, n_actions, payoff }
        }
        "lever" => {
            let d = LeverConfig::default();
            EnvConfig::Lever(LeverConfig {
                n_agents: env.n_agents.unwrap_or(d.n_agents),
                n_levers: env.n_levers.unwrap_or(d.n_levers),
                episode_limit: env.episode_limit.unwrap_or(d.episode_limit),
                cue_accuracy: env.cue_accuracy.unwrap_or(d.cue_accuracy),
            })
        }
        _ => {
            let d = PredatorPreyConfig::default();
            EnvConfig::PredatorPrey(PredatorPreyConfig {
                width: env.width.unwrap_or(d.width),
                height: env.height.unwrap_or(d.height),
                n_predators: env.n_predators.unwrap_or(d.n_predators),
                sight_radius: env.sight_radius.unwrap_or(d.sight_radius),
                episode_limit: env.episode_limit.unwrap_or(d.episode_limit),
                capture_reward: env.capture_reward.unwrap_or(d.capture_reward),
                distance_shaping: env.distance_shaping.unwrap_or(d.distance_shaping),
            })
        }
    })
}

fn check_unit(source: &str, section: &str, key: &str, v: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&v) {
        bail!("{}: {v} is outside [0, 1]", at(source, section, key));
    }
    Ok(v)
}

fn check_positive<T: PartialOrd + Default + std::fmt::Display + Copy>(source: &str, section: &str, key: &str, v: T) -> Result<T> {
    if v <= T::default() {
        bail!("{}: must be positive, got {v}", at(source, section, key));
    }
    Ok(v)
}

impl ConfigFile {
    pub fn parse(source: &str) -> Result<Self> {
        toml::from_str(source).map_err(|e| anyhow!("{e}"))
    }

    /// Applies defaults and checks every constraint.
    pub fn resolve(&self, source: &str) -> Result<ExperimentConfig> {
        let profile = self.profile.clone().unwrap_or_else(|| "paper".into());
        let base = match profile.as_str() {
            "paper" => TrainerConfig::default(),
            "desk" => TrainerConfig::desk(),
            other => bail!("{}: unknown profile {other:?} (paper, desk)", at(source, "", "profile")),
        };
        debug_assert_eq!(base.table_capacity, if profile == "paper" { PAPER_TABLE_CAPACITY } else { DESK_TABLE_CAPACITY });
        debug_assert_eq!(base.mset_capacity, if profile == "paper" { PAPER_MSET_CAPACITY } else { DESK_MSET_CAPACITY });

        let a = &self.algo;
        let m = &self.memory;
        let t = &self.training;
        let s = source;
        let mixer: MixerKind = match &a.mixer {
            Some(v) => v.parse().map_err(|e| anyhow!("{}: {e}", at(s, "algo", "mixer")))?,
            None => base.mixer,
        };
        let memory: MemoryMode = match &a.memory {
            Some(v) => v.parse().map_err(|e| anyhow!("{}: {e}", at(s, "algo", "memory")))?,
            None => base.memory,
        };
        let opt_unit = |key: &str, v: Option<f64>, d: f64| v.map_or(Ok(d), |v| check_unit(s, "algo", key, v));
        let eps_start = t.epsilon_start.map_or(Ok(base.epsilon.start), |v| check_unit(s, "training", "epsilon_start", v))?;
        let eps_end = t.epsilon_end.map_or(Ok(base.epsilon.end), |v| check_unit(s, "training", "epsilon_end", v))?;
        let eps_steps = t
            .epsilon_anneal_steps
            .map_or(Ok(base.epsilon.anneal_steps), |v| check_positive(s, "training", "epsilon_anneal_steps", v))?;
        let epsilon = EpsilonSchedule::new(eps_start, eps_end, eps_steps).map_err(|e| anyhow!("{}: {e}", at(s, "training", "epsilon_end")))?;
        let pos_usize = |section: &str, key: &str, v: Option<usize>, d: usize| v.map_or(Ok(d), |v| check_positive(s, section, key, v));
        let pos_u64 = |section: &str, key: &str, v: Option<u64>, d: u64| v.map_or(Ok(d), |v| check_positive(s, section, key, v));
        let pos_f64 = |section: &str, key: &str, v: Option<f64>, d: f64| v.map_or(Ok(d), |v| check_positive(s, section, key, v));

        let trainer = TrainerConfig {
            env: env_config(&self.env, source)?,
            mixer,
            memory,
            lambda: opt_unit("lambda", a.lambda, base.lambda)?,
            alpha: opt_unit("alpha", a.alpha, base.alpha)?,
            gamma: t.gamma.map_or(Ok(base.gamma), |v| check_unit(s, "training", "gamma", v))?,
            learning_rate: pos_f64("training", "learning_rate", t.learning_rate, base.learning_rate)?,
            batch_size: pos_usize("training", "batch_size", t.batch_size, base.batch_size)?,
            buffer_capacity: pos_usize("training", "buffer_capacity", t.buffer_capacity, base.buffer_capacity)?,
            target_sync_episodes: pos_u64("training", "target_sync_episodes", t.target_sync_episodes, base.target_sync_episodes)?,
            epsilon,
            total_steps: t.total_steps.unwrap_or(base.total_steps),
            eval_interval: pos_u64("training", "eval_interval", t.eval_interval, base.eval_interval)?,
            eval_episodes: pos_usize("training", "eval_episodes", t.eval_episodes, base.eval_episodes)?,
            train_steps_per_episode: pos_usize("training", "train_steps_per_episode", t.train_steps_per_episode, base.train_steps_per_episode)?,
            agent_hidden: pos_usize("training", "agent_hidden", t.agent_hidden, base.agent_hidden)?,
            recurrent: t.recurrent.unwrap_or(base.recurrent),
            mixing_embed: pos_usize("training", "mixing_embed", t.mixing_embed, base.mixing_embed)?,
            critic_hidden: pos_usize("training", "critic_hidden", t.critic_hidden, base.critic_hidden)?,
            table_capacity: pos_usize("memory", "table_capacity", m.table_capacity, base.table_capacity)?,
            mset_capacity: pos_usize("memory", "mset_capacity", m.mset_capacity, base.mset_capacity)?,
            key_dim: pos_usize("memory", "projection_dim", m.projection_dim, base.key_dim)?,
            quantization: pos_f64("memory", "quantization", m.quantization, base.quantization)?,
            project_keys: m.projection.unwrap_or(base.project_keys),
            grad_clip: t.grad_clip.map(|v| check_positive(s, "training", "grad_clip", v)).transpose()?,
            record_wall_time: t.record_wall_time.unwrap_or(false),
            seed: 0,
        };
        if trainer.batch_size > trainer.buffer_capacity {
            bail!("{}: {} exceeds buffer_capacity {}", at(s, "training", "batch_size"), trainer.batch_size, trainer.buffer_capacity);
        }
        trainer.validate().map_err(|e| anyhow!("{e}"))?;
        let seeds = self.seeds.clone().unwrap_or_else(|| vec![0]);
        if seeds.is_empty() {
            bail!("{}: at least one seed is required", at(s, "", "seeds"));
        }
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != seeds.len() {
            bail!("{}: seeds must be distinct", at(s, "", "seeds"));
        }
        Ok(ExperimentConfig {
            trainer,
            seeds,
            output_dir: self.output_dir.as_ref().map(PathBuf::from),
            profile,
        })
    }
}

impl ExperimentConfig {
    pub fn from_str(source: &str) -> Result<Self> {
        ConfigFile::parse(source)?.resolve(source)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let source = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        Self::from_str(&source).with_context(|| format!("invalid config {}", path.display()))
    }

    /// Trainer configuration for one seed.
    pub fn for_seed(&self, seed: u64) -> TrainerConfig {
        TrainerConfig { seed, ..self.trainer.clone() }
    }

    /// Every setting written out explicitly; parsing it yields `self`.
    pub fn resolved_file(&self) -> ConfigFile {
        let c = &self.trainer;
        let env = match &c.env {
            EnvConfig::MatrixGame { n_agents, n_actions, payoff } => EnvSection {
                name: "matrix_game".into(),
                n_agents: Some(*n_agents),
                n_actions: Some(*n_actions),
                payoff: Some(payoff.clone()),
                ..EnvSection::default()
            },
            EnvConfig::Lever(l) => EnvSection {
                name: "lever".into(),
                n_agents: Some(l.n_agents),
                n_levers: Some(l.n_levers),
                episode_limit: Some(l.episode_limit),
                cue_accuracy: Some(l.cue_accuracy),
                ..EnvSection::default()
            },
            EnvConfig::PredatorPrey(p) => EnvSection {
                name: "predator_prey".into(),
                width: Some(p.width),
                height: Some(p.height),
                n_predators: Some(p.n_predators),
                sight_radius: Some(p.sight_radius),
                episode_limit: Some(p.episode_limit),
                capture_reward: Some(p.capture_reward),
                distance_shaping: Some(p.distance_shaping),
                ..EnvSection::default()
            },
        };
        ConfigFile {
            seeds: Some(self.seeds.clone()),
            output_dir: self.output_dir.as_ref().map(|p| p.display().to_string()),
            profile: Some(self.profile.clone()),
            env,
            algo: AlgoSection {
                mixer: Some(c.mixer.as_str().into()),
                memory: Some(c.memory.as_str().into()),
                lambda: Some(c.lambda),
                alpha: Some(c.alpha),
            },
            memory: MemorySection {
                table_capacity: Some(c.table_capacity),
                mset_capacity: Some(c.mset_capacity),
                projection_dim: Some(c.key_dim),
                quantization: Some(c.quantization),
                projection: Some(c.project_keys),
            },
            training: TrainingSection {
                gamma: Some(c.gamma),
                learning_rate: Some(c.learning_rate),
                batch_size: Some(c.batch_size),
                buffer_capacity: Some(c.buffer_capacity),
                target_sync_episodes: Some(c.target_sync_episodes),
                epsilon_start: Some(c.epsilon.start),
                epsilon_end: Some(c.epsilon.end),
                epsilon_anneal_steps: Some(c.epsilon.anneal_steps),
                total_steps: Some(c.total_steps),
                eval_interval: Some(c.eval_interval),
                eval_episodes: Some(c.eval_episodes),
                train_steps_per_episode: Some(c.train_steps_per_episode),
                agent_hidden: Some(c.agent_hidden),
                recurrent: Some(c.recurrent),
                mixing_embed: Some(c.mixing_embed),
                critic_hidden: Some(c.critic_hidden),
                grad_clip: c.grad_clip,
                record_wall_time: Some(c.record_wall_time),
            },
        }
    }

    pub fn resolved_toml(&self) -> String {
        toml::to_string(&self.resolved_file()).expect("config serializes")
    }
}
