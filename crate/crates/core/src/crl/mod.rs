//! Contrastive RL objectives: L2 energy critic, InfoNCE with logsumexp
//! penalty, and the goal-conditioned Gaussian policy.

mod agent;
mod critic;
mod energy;
mod infonce;
mod policy;

pub use agent::{mix_seed, AgentConfig, CrlAgent, UpdateStats};
pub use critic::{actor_loss, actor_loss_and_grad, critic_loss, critic_loss_and_grad, ActorLossOutput, CriticPair, TrainingBatch};
pub use energy::{critic_energy, energy_matrix, EnergyMatrix};
pub use infonce::{infonce_forward_backward, infonce_loss, InfoNceStats};
pub use policy::{policy_sample, GaussianPolicy, LOG_STD_MAX, LOG_STD_MIN};
