use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::arch::{build_network, NetworkSpec};
use crate::crl::critic::{actor_loss_and_grad, critic_loss_and_grad, CriticPair, TrainingBatch};
use crate::crl::policy::GaussianPolicy;
use crate::error::{Error, Result};
use crate::nn::{clip_grad_norm, AdamConfig, AdamState, ParameterStore, RealArray};
use crate::scalar::Scalar;

/// Dimensions and hyperparameters of one actor + critic-pair learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub state_dim: usize,
    pub action_dim: usize,
    pub goal_dim: usize,
    pub action_bound: f64,
    pub actor_depth: usize,
    pub critic_depth: usize,
    pub width: usize,
    pub repr_dim: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub logsumexp_penalty: f64,
    pub entropy_coef: f64,
    pub grad_clip: Option<f64>,
}

impl AgentConfig {
    pub fn actor_spec(&self) -> NetworkSpec {
        NetworkSpec::new(self.state_dim + self.goal_dim, self.width, self.actor_depth, 2 * self.action_dim)
    }

    pub fn sa_spec(&self) -> NetworkSpec {
        NetworkSpec::new(self.state_dim + self.action_dim, self.width, self.critic_depth, self.repr_dim)
    }

    pub fn goal_spec(&self) -> NetworkSpec {
        NetworkSpec::new(self.goal_dim, self.width, self.critic_depth, self.repr_dim)
    }
}

/// Statistics of one gradient step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub critic_grad_norm: f64,
    pub actor_grad_norm: f64,
    pub diag_accuracy: f64,
    pub mean_energy: f64,
}

/// SplitMix64 finalizer, used to derive independent sub-seeds.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Policy, critic and their optimizers.
pub struct CrlAgent<T> {
    pub config: AgentConfig,
    pub policy: GaussianPolicy<T>,
    pub critic: CriticPair<T>,
    actor_opt: AdamState<T>,
    sa_opt: AdamState<T>,
    g_opt: AdamState<T>,
}

impl<T: Scalar> CrlAgent<T> {
    /// Builds the three networks from independent seeds derived from `seed`.
    pub fn new(config: AgentConfig, seed: u64) -> Result<Self> {
        let actor = build_network(&config.actor_spec(), mix_seed(seed, 1))?;
        let sa = build_network(&config.sa_spec(), mix_seed(seed, 2))?;
        let g = build_network(&config.goal_spec(), mix_seed(seed, 3))?;
        let policy = GaussianPolicy::new(actor, config.action_dim, config.action_bound)?;
        let critic = CriticPair::new(sa, g)?;
        let actor_opt = AdamState::new(policy.actor.params(), AdamConfig::with_lr(config.actor_lr));
        let sa_opt = AdamState::new(critic.sa_encoder.params(), AdamConfig::with_lr(config.critic_lr));
        let g_opt = AdamState::new(critic.g_encoder.params(), AdamConfig::with_lr(config.critic_lr));
        Ok(Self {
            config,
            policy,
            critic,
            actor_opt,
            sa_opt,
            g_opt,
        })
    }

    /// One critic step followed by one actor step on the same batch.
    pub fn update(&mut self, batch: &TrainingBatch<T>, rng: &mut impl Rng) -> Result<UpdateStats> {
        let cfg = &self.config;
        let stats = critic_loss_and_grad(&mut self.critic, batch, cfg.logsumexp_penalty)?;
        let critic_grad_norm = clip_grad_norm(
            &mut [self.critic.sa_encoder.params_mut(), self.critic.g_encoder.params_mut()],
            cfg.grad_clip,
        );
        self.sa_opt.step(self.critic.sa_encoder.params_mut())?;
        self.g_opt.step(self.critic.g_encoder.params_mut())?;

        let noise = self.policy.draw_noise(batch.len(), rng);
        let actor = actor_loss_and_grad(
            &mut self.policy,
            &mut self.critic,
            &batch.states,
            &batch.goals,
            &noise,
            cfg.entropy_coef,
        )?;
        if !actor.loss.is_finite() {
            return Err(Error::NonFinite {
                entry: "actor_loss".into(),
                context: "actor update".into(),
            });
        }
        let actor_grad_norm = clip_grad_norm(&mut [self.policy.actor.params_mut()], cfg.grad_clip);
        self.actor_opt.step(self.policy.actor.params_mut())?;

        Ok(UpdateStats {
            critic_loss: stats.loss,
            actor_loss: actor.loss,
            critic_grad_norm,
            actor_grad_norm,
            diag_accuracy: stats.diag_accuracy,
            mean_energy: actor.mean_energy,
        })
    }

    /// Actions for flat row-major observation and goal buffers.
    pub fn act(&self, obs: &[f64], goals: &[f64], rows: usize, rng: Option<&mut dyn rand::RngCore>) -> Result<Vec<f64>> {
        let cfg = &self.config;
        let mut input = Vec::with_capacity(rows * (cfg.state_dim + cfg.goal_dim));
        for r in 0..rows {
            input.extend_from_slice(&obs[r * cfg.state_dim..(r + 1) * cfg.state_dim]);
            input.extend_from_slice(&goals[r * cfg.goal_dim..(r + 1) * cfg.goal_dim]);
        }
        let x = RealArray::<T>::from_f64(&[rows, cfg.state_dim + cfg.goal_dim], &input)?;
        let noise = rng.map(|mut r| self.policy.draw_noise(rows, &mut r));
        Ok(self.policy.act(&x, noise.as_ref())?.to_f64_vec())
    }

    /// Named views of all parameter stores, prefixed `actor/`, `critic_sa/`
    /// and `critic_g/`.
    pub fn stores(&self) -> [(&'static str, &ParameterStore<T>); 3] {
        [
            ("actor", self.policy.actor.params()),
            ("critic_sa", self.critic.sa_encoder.params()),
            ("critic_g", self.critic.g_encoder.params()),
        ]
    }

    pub fn stores_mut(&mut self) -> [(&'static str, &mut ParameterStore<T>); 3] {
        [
            ("actor", self.policy.actor.params_mut()),
            ("critic_sa", self.critic.sa_encoder.params_mut()),
            ("critic_g", self.critic.g_encoder.params_mut()),
        ]
    }

    /// Name of the first parameter entry holding NaN/Inf, if any.
    pub fn first_non_finite_param(&self) -> Option<String> {
        self.stores()
            .iter()
            .find_map(|(p, s)| s.first_non_finite_value().map(|n| format!("{p}/{n}")))
    }
}
