use rand::Rng as _;

use super::{
    check_actions, solve, EnvSpec, Environment, Observation, OracleResult, StepResult,
    TabularModel,
};
use crate::{stream_rng, Error, Result, Rng};

#[derive(Debug, Clone, PartialEq)]
pub struct PredatorPreyConfig {
    pub width: usize,
    pub height: usize,
    pub n_predators: usize,
    /// Chebyshev radius (on the torus) within which other entities are seen.
    pub sight_radius: usize,
    pub episode_limit: usize,
    pub capture_reward: f64,
    /// Per-step penalty per unit of mean predator-prey distance; 0 disables.
    pub distance_shaping: f64,
}

impl Default for PredatorPreyConfig {
    fn default() -> Self {
        Self {
            width: 4,
            height: 4,
            n_predators: 2,
            sight_radius: 2,
            episode_limit: 20,
            capture_reward: 10.0,
            distance_shaping: 0.0,
        }
    }
}

const MOVES: [(i64, i64); 5] = [(0, 0), (0, -1), (0, 1), (-1, 0), (1, 0)];

/// Predators on a torus grid chasing a random-walking prey. The team is
/// rewarded when every predator stands on the prey's cell after moving.
///
/// Observation of a predator: one-hot of its own cell, then for every other
/// entity (other predators, then the prey) a one-hot over the sight window,
/// all zeros when out of sight. Global state: one-hot cell of each entity.
#[derive(Debug, Clone)]
pub struct PredatorPrey {
    cfg: PredatorPreyConfig,
    spec: EnvSpec,
    prey_rng: Rng,
    predators: Vec<usize>,
    prey: usize,
    t: usize,
    done: bool,
}

impl PredatorPrey {
    pub fn new(cfg: PredatorPreyConfig) -> Result<Self> {
        if cfg.width == 0 || cfg.height == 0 || cfg.n_predators == 0 || cfg.episode_limit == 0 {
            return Err(Error::Config("predator-prey sizes must be positive".into()));
        }
        if !cfg.capture_reward.is_finite() || !cfg.distance_shaping.is_finite() {
            return Err(Error::Config("predator-prey rewards must be finite".into()));
        }
        let cells = cfg.width * cfg.height;
        let window = (2 * cfg.sight_radius + 1).pow(2);
        let spec = EnvSpec {
            n_agents: cfg.n_predators,
            n_actions: MOVES.len(),
            obs_dim: cells + cfg.n_predators * window,
            state_dim: (cfg.n_predators + 1) * cells,
            episode_limit: cfg.episode_limit,
            gamma_hint: 0.99,
        };
        Ok(Self {
            predators: vec![0; cfg.n_predators],
            cfg,
            spec,
            prey_rng: stream_rng(0, 1),
            prey: 0,
            t: 0,
            done: false,
        })
    }

    pub fn positions(&self) -> (&[usize], usize) {
        (&self.predators, self.prey)
    }

    fn cells(&self) -> usize {
        self.cfg.width * self.cfg.height
    }

    fn shift(&self, cell: usize, action: usize) -> usize {
        let (w, h) = (self.cfg.width as i64, self.cfg.height as i64);
        let (x, y) = ((cell % self.cfg.width) as i64, (cell / self.cfg.width) as i64);
        let (dx, dy) = MOVES[action];
        ((y + dy).rem_euclid(h) * w + (x + dx).rem_euclid(w)) as usize
    }

    /// Signed torus offset from `from` to `to` along an axis of length `len`,
    /// in `[-len/2, (len-1)/2]`.
    fn offset(from: usize, to: usize, len: usize) -> i64 {
        let half = (len / 2) as i64;
        (to as i64 - from as i64 + half).rem_euclid(len as i64) - half
    }

    fn delta(&self, from: usize, to: usize) -> (i64, i64) {
        let w = self.cfg.width;
        (
            Self::offset(from % w, to % w, w),
            Self::offset(from / w, to / w, self.cfg.height),
        )
    }

    fn captured(predators: &[usize], prey: usize) -> bool {
        predators.iter().all(|&p| p == prey)
    }

    fn shaping(&self, predators: &[usize], prey: usize) -> f64 {
        if self.cfg.distance_shaping == 0.0 {
            return 0.0;
        }
        let mean: f64 = predators
            .iter()
            .map(|&p| {
                let (dx, dy) = self.delta(p, prey);
                (dx.abs() + dy.abs()) as f64
            })
            .sum::<f64>()
            / predators.len() as f64;
        -self.cfg.distance_shaping * mean
    }

    fn encode(&self, predators: &[usize], prey: usize) -> usize {
        predators
            .iter()
            .chain(std::iter::once(&prey))
            .fold(0, |acc, &c| acc * self.cells() + c)
    }

    fn decode(&self, mut index: usize) -> (Vec<usize>, usize) {
        let cells = self.cells();
        let prey = index % cells;
        index /= cells;
        let mut predators = vec![0; self.cfg.n_predators];
        for slot in predators.iter_mut().rev() {
            *slot = index % cells;
            index /= cells;
        }
        (predators, prey)
    }
}

impl Environment for PredatorPrey {
    fn id(&self) -> &str {
        "predator_prey"
    }

    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Observation {
        let mut placement = stream_rng(seed, 0);
        self.prey_rng = stream_rng(seed, 1);
        let cells = self.cells();
        loop {
            for p in self.predators.iter_mut() {
                *p = placement.random_range(0..cells);
            }
            self.prey = placement.random_range(0..cells);
            if !Self::captured(&self.predators, self.prey) {
                break;
            }
        }
        self.t = 0;
        self.done = false;
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
        self.predators = self
            .predators
            .iter()
            .zip(joint_action)
            .map(|(&c, &u)| self.shift(c, u))
            .collect();
        self.t += 1;
        let success = Self::captured(&self.predators, self.prey);
        let reward = if success {
            self.cfg.capture_reward
        } else {
            let mv = self.prey_rng.random_range(0..MOVES.len());
            self.prey = self.shift(self.prey, mv);
            self.shaping(&self.predators, self.prey)
        };
        let truncated = !success && self.t >= self.cfg.episode_limit;
        self.done = success || truncated;
        Ok(StepResult {
            reward,
            state: self.global_state(),
            observations: self.observe_all(),
            terminated: self.done,
            truncated,
            success,
        })
    }

    fn global_state(&self) -> Vec<f64> {
        let cells = self.cells();
        let mut s = vec![0.0; (self.cfg.n_predators + 1) * cells];
        for (i, &c) in self.predators.iter().chain(std::iter::once(&self.prey)).enumerate() {
            s[i * cells + c] = 1.0;
        }
        s
    }

    fn observe(&self, agent: usize) -> Vec<f64> {
        let cells = self.cells();
        let r = self.cfg.sight_radius as i64;
        let side = 2 * r + 1;
        let window = (side * side) as usize;
        let me = self.predators[agent];
        let mut o = vec![0.0; self.spec.obs_dim];
        o[me] = 1.0;
        let others = self
            .predators
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != agent)
            .map(|(_, &c)| c)
            .chain(std::iter::once(self.prey));
        for (slot, cell) in others.enumerate() {
            let (dx, dy) = self.delta(me, cell);
            if dx.abs() <= r && dy.abs() <= r {
                let idx = ((dy + r) * side + (dx + r)) as usize;
                o[cells + slot * window + idx] = 1.0;
            }
        }
        o
    }

    fn oracle(&self) -> Result<OracleResult> {
        solve(self)
    }
}

/// States enumerate every placement; the step counter is folded into the
/// solver's finite horizon.
impl TabularModel for PredatorPrey {
    fn n_states(&self) -> usize {
        self.cells().pow(self.cfg.n_predators as u32 + 1)
    }
    fn n_agents(&self) -> usize {
        self.cfg.n_predators
    }
    fn n_actions(&self) -> usize {
        MOVES.len()
    }
    fn horizon(&self) -> usize {
        self.cfg.episode_limit
    }
    fn gamma(&self) -> f64 {
        self.spec.gamma_hint
    }
    fn initial_distribution(&self) -> Vec<(usize, f64)> {
        let valid: Vec<usize> = (0..self.n_states())
            .filter(|&s| {
                let (preds, prey) = self.decode(s);
                !Self::captured(&preds, prey)
            })
            .collect();
        let p = 1.0 / valid.len() as f64;
        valid.into_iter().map(|s| (s, p)).collect()
    }
    fn outcomes(&self, state: usize, joint_action: &[usize], visit: &mut dyn FnMut(f64, usize, f64, bool)) {
        let (preds, prey) = self.decode(state);
        let moved: Vec<usize> = preds
            .iter()
            .zip(joint_action)
            .map(|(&c, &u)| self.shift(c, u))
            .collect();
        if Self::captured(&moved, prey) {
            visit(1.0, self.encode(&moved, prey), self.cfg.capture_reward, true);
            return;
        }
        let p = 1.0 / MOVES.len() as f64;
        for mv in 0..MOVES.len() {
            let prey2 = self.shift(prey, mv);
            visit(p, self.encode(&moved, prey2), self.shaping(&moved, prey2), false);
        }
    }
}
