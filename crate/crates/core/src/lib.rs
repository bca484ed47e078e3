//! Cooperative multi-agent Q-learning with value decomposition (VDN, QMIX,
//! weighted QMIX) and episodic-memory targets.
//!
//! Two memory flavours are provided. The state-based memory keeps a single
//! table from projected global state to the best discounted return ever seen;
//! the state-action memory keeps one table per joint action. Either one feeds
//! an auxiliary regression target into the mixer loss.

pub mod envs;
pub mod episode;
mod error;
pub mod memory;
pub mod mixers;
pub mod neural;
pub mod replay;
pub mod schedule;
pub mod stats;
pub mod trainer;

pub use episode::{discounted_returns, Episode, Transition};
pub use error::{Error, Result};
pub use replay::{pad_batch, pad_batch_to, PaddedBatch, ReplayBuffer};
pub use schedule::EpsilonSchedule;

/// One action index per agent.
pub type JointAction = Vec<usize>;

/// Seeded generator used for every random stream in the crate.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Build a generator from a seed and a stream tag so that independent
/// streams (env, exploration, projection, init, eval) never share state.
pub fn stream_rng(seed: u64, stream: u64) -> Rng {
    use rand::SeedableRng;
    let mut rng = Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
