use crate::{Error, Result};

/// Linear exploration annealing, constant after `anneal_steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub anneal_steps: u64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self {
            start: 1.0,
            end: 0.05,
            anneal_steps: 5_000,
        }
    }
}

impl EpsilonSchedule {
    pub fn new(start: f64, end: f64, anneal_steps: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&start) || !(0.0..=start).contains(&end) {
            return Err(Error::Config(format!(
                "epsilon schedule requires 1 >= start >= end >= 0, got start={start} end={end}"
            )));
        }
        if anneal_steps == 0 {
            return Err(Error::Config("epsilon anneal_steps must be positive".into()));
        }
        Ok(Self {
            start,
            end,
            anneal_steps,
        })
    }

    pub fn epsilon_at(&self, step: u64) -> f64 {
        if step >= self.anneal_steps {
            return self.end;
        }
        let frac = step as f64 / self.anneal_steps as f64;
        (self.start + (self.end - self.start) * frac).clamp(self.end, self.start)
    }
}
