//! Learning agents: PPO with GAE and DQN with prioritized replay.

pub mod dqn;
pub mod eval;
pub mod nn;
pub mod per;
pub mod ppo;
pub mod train;

pub use dqn::{DqnAgent, DqnConfig};
pub use eval::{evaluate, run_episode, EpisodeMetrics, EvalPolicy};
pub use nn::{Adam, Mlp};
pub use per::{PrioritizedBuffer, SumTree};
pub use ppo::{clipped_surrogate, compute_gae, PpoAgent, PpoConfig};
pub use train::{
    load_checkpoint, save_checkpoint, train, write_curve_csv, AgentKind, Checkpoint, CurvePoint,
    leading_trailing_means, TrainOptions, TrainOutcome, TrainedAgent,
};
