use rand_distr::{Distribution, StandardNormal};

use crate::{stream_rng, Error, Result};

pub const DEFAULT_QUANTIZATION: f64 = 1e-6;
pub const DEFAULT_KEY_DIM: usize = 4;

/// Exact-match table key: projected coordinates divided by the quantization
/// step and rounded to the nearest integer.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MemoryKey(Box<[i64]>);

impl MemoryKey {
    pub fn from_components(components: Vec<i64>) -> Self {
        Self(components.into_boxed_slice())
    }

    pub fn quantize(values: &[f64], quantization: f64) -> Self {
        Self(values.iter().map(|v| (v / quantization).round() as i64).collect())
    }

    pub fn components(&self) -> &[i64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Coordinates back on the real line.
    pub fn values(&self, quantization: f64) -> Vec<f64> {
        self.0.iter().map(|&c| c as f64 * quantization).collect()
    }
}

/// Fixed `D × F` matrix with i.i.d. standard-normal entries.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl ProjectionMatrix {
    pub fn gaussian(state_dim: usize, key_dim: usize, seed: u64) -> Self {
        let mut rng = stream_rng(seed, 0);
        let data = (0..state_dim * key_dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        Self { rows: key_dim, cols: state_dim, data }
    }

    pub fn identity(dim: usize) -> Self {
        let mut data = vec![0.0; dim * dim];
        for i in 0..dim {
            data[i * dim + i] = 1.0;
        }
        Self { rows: dim, cols: dim, data }
    }

    pub fn key_dim(&self) -> usize {
        self.rows
    }

    pub fn state_dim(&self) -> usize {
        self.cols
    }

    pub fn apply(&self, state: &[f64]) -> Result<Vec<f64>> {
        if state.len() != self.cols {
            return Err(Error::Shape(format!("projection expects {} inputs, got {}", self.cols, state.len())));
        }
        Ok(self
            .data
            .chunks_exact(self.cols)
            .map(|row| row.iter().zip(state).map(|(a, b)| a * b).sum())
            .collect())
    }
}

/// Maps global states to keys, either through a projection or directly.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyEncoder {
    projection: Option<ProjectionMatrix>,
    quantization: f64,
}

impl KeyEncoder {
    pub fn projected(projection: ProjectionMatrix, quantization: f64) -> Result<Self> {
        check_quantization(quantization)?;
        Ok(Self { projection: Some(projection), quantization })
    }

    /// Raw state vector as the key.
    pub fn raw(quantization: f64) -> Result<Self> {
        check_quantization(quantization)?;
        Ok(Self { projection: None, quantization })
    }

    pub fn quantization(&self) -> f64 {
        self.quantization
    }

    pub fn projection(&self) -> Option<&ProjectionMatrix> {
        self.projection.as_ref()
    }

    pub fn encode(&self, state: &[f64]) -> Result<MemoryKey> {
        match &self.projection {
            Some(p) => Ok(MemoryKey::quantize(&p.apply(state)?, self.quantization)),
            None => Ok(MemoryKey::quantize(state, self.quantization)),
        }
    }
}

fn check_quantization(q: f64) -> Result<()> {
    if q.is_finite() && q > 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("quantization must be positive, got {q}")))
    }
}
