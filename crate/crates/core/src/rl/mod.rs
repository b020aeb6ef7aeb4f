//! Specialist policy training: reward, PPO, curriculum and rollouts.

pub mod curriculum;
pub mod env;
pub mod ppo;
pub mod reward;
pub mod train;

pub use curriculum::{curriculum_advance, CurriculumConfig, CurriculumState, Stage};
pub use env::{control_step, Conditions, Env, EnvConfig, EnvSettings};
pub use ppo::{gae, GaussianPolicy, PpoConfig};
pub use reward::{compute_reward, RewardConfig, RewardErrors};
pub use train::{train_policy, LogRow, TrainConfig, TrainedPolicy};
