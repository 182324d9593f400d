use crate::arch::BuiltNetwork;
use crate::crl::energy::{sq_dist, EnergyMatrix};
use crate::crl::infonce::{infonce_forward_backward, InfoNceStats};
use crate::crl::policy::GaussianPolicy;
use crate::error::{dim_err, Error, Result};
use crate::nn::{GradMode, RealArray};
use crate::scalar::Scalar;

/// Dual-encoder critic: `phi(state, action)` and `psi(goal)`.
pub struct CriticPair<T> {
    pub sa_encoder: BuiltNetwork<T>,
    pub g_encoder: BuiltNetwork<T>,
    pub repr_dim: usize,
}

/// One batch of (state, action, future goal) rows; other rows act as negatives.
#[derive(Debug, Clone)]
pub struct TrainingBatch<T> {
    pub states: RealArray<T>,
    pub actions: RealArray<T>,
    pub goals: RealArray<T>,
}

impl<T: Scalar> TrainingBatch<T> {
    pub fn len(&self) -> usize {
        self.states.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl<T: Scalar> CriticPair<T> {
    pub fn new(sa_encoder: BuiltNetwork<T>, g_encoder: BuiltNetwork<T>) -> Result<Self> {
        let repr_dim = sa_encoder.spec.output_dim;
        if g_encoder.spec.output_dim != repr_dim {
            return Err(dim_err("CriticPair", repr_dim, g_encoder.spec.output_dim));
        }
        Ok(Self {
            sa_encoder,
            g_encoder,
            repr_dim,
        })
    }

    pub fn embed_sa(&self, states: &RealArray<T>, actions: &RealArray<T>) -> Result<RealArray<T>> {
        self.sa_encoder.forward(&states.hcat(actions)?)
    }

    pub fn embed_goal(&self, goals: &RealArray<T>) -> Result<RealArray<T>> {
        self.g_encoder.forward(goals)
    }

    /// `energy_matrix` for a batch: row i's state-action against every goal.
    pub fn energy_matrix(&self, batch: &TrainingBatch<T>) -> Result<RealArray<T>> {
        let phi = self.embed_sa(&batch.states, &batch.actions)?;
        let psi = self.embed_goal(&batch.goals)?;
        Ok(EnergyMatrix::compute(&phi, &psi)?.energies)
    }
}

/// Contrastive critic loss without gradients.
pub fn critic_loss<T: Scalar>(critic: &CriticPair<T>, batch: &TrainingBatch<T>, penalty: f64) -> Result<InfoNceStats> {
    let l = critic.energy_matrix(batch)?;
    Ok(infonce_forward_backward(&l, penalty, false)?.0)
}

/// Contrastive critic loss; accumulates gradients into both encoders.
pub fn critic_loss_and_grad<T: Scalar>(
    critic: &mut CriticPair<T>,
    batch: &TrainingBatch<T>,
    penalty: f64,
) -> Result<InfoNceStats> {
    let phi = critic.sa_encoder.forward_train(&batch.states.hcat(&batch.actions)?)?;
    let psi = critic.g_encoder.forward_train(&batch.goals)?;
    let em = EnergyMatrix::compute(&phi, &psi)?;
    let (stats, grad) = infonce_forward_backward(&em.energies, penalty, true)?;
    if !stats.loss.is_finite() {
        return Err(Error::NonFinite {
            entry: "critic_loss".into(),
            context: "contrastive loss".into(),
        });
    }
    let (dphi, dpsi) = em.backward(&phi, &psi, &grad.expect("requested"))?;
    critic.sa_encoder.backward(&dphi, GradMode::Accumulate)?;
    critic.g_encoder.backward(&dpsi, GradMode::Accumulate)?;
    Ok(stats)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActorLossOutput {
    pub loss: f64,
    pub mean_energy: f64,
    pub mean_log_prob: f64,
}

fn check_log_probs(lp: &[f64]) -> Result<()> {
    if let Some(i) = lp.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            entry: format!("log_prob[{i}]"),
            context: "actor loss".into(),
        });
    }
    Ok(())
}

/// `−mean energy(phi(s, ã), psi(g)) + α·mean log π(ã | s, g)` without gradients.
pub fn actor_loss<T: Scalar>(
    policy: &GaussianPolicy<T>,
    critic: &CriticPair<T>,
    states: &RealArray<T>,
    goals: &RealArray<T>,
    noise: &RealArray<T>,
    alpha: f64,
) -> Result<ActorLossOutput> {
    let head = policy.actor.forward(&states.hcat(goals)?)?;
    let sample = policy.squash(&head, Some(noise))?;
    check_log_probs(&sample.log_prob)?;
    let phi = critic.embed_sa(states, &sample.actions)?;
    let psi = critic.embed_goal(goals)?;
    let b = states.rows() as f64;
    let mut energy = 0.0;
    for i in 0..states.rows() {
        energy -= sq_dist(phi.row(i), psi.row(i)).as_f64().sqrt();
    }
    let mean_energy = energy / b;
    let mean_log_prob = sample.log_prob.iter().sum::<f64>() / b;
    Ok(ActorLossOutput {
        loss: -mean_energy + alpha * mean_log_prob,
        mean_energy,
        mean_log_prob,
    })
}

/// Actor loss with gradients accumulated into the actor only. The critic is
/// read but its gradient buffers are never written.
pub fn actor_loss_and_grad<T: Scalar>(
    policy: &mut GaussianPolicy<T>,
    critic: &mut CriticPair<T>,
    states: &RealArray<T>,
    goals: &RealArray<T>,
    noise: &RealArray<T>,
    alpha: f64,
) -> Result<ActorLossOutput> {
    let rows = states.rows();
    let state_dim = states.cols();
    let a = policy.action_dim;
    let b = rows as f64;

    let head = policy.actor.forward_train(&states.hcat(goals)?)?;
    let sample = policy.squash(&head, Some(noise))?;
    check_log_probs(&sample.log_prob)?;

    let phi = critic.sa_encoder.forward_train(&states.hcat(&sample.actions)?)?;
    let psi = critic.embed_goal(goals)?;
    let d = phi.cols();
    let mut dphi = RealArray::zeros(&[rows, d]);
    let mut energy = 0.0;
    for i in 0..rows {
        let (p, q) = (phi.row(i), psi.row(i));
        let dist = sq_dist(p, q).sqrt();
        energy -= dist.as_f64();
        if dist > T::zero() {
            // loss = −mean energy = mean dist, ∂dist/∂phi = (phi − psi)/dist
            let scale = T::one() / (dist * T::of(b));
            for (g, (&x, &y)) in dphi.row_mut(i).iter_mut().zip(p.iter().zip(q)) {
                *g = (x - y) * scale;
            }
        }
    }
    let dinput = critic.sa_encoder.backward(&dphi, GradMode::InputOnly)?;

    let bound = policy.action_bound;
    let mut dhead = RealArray::zeros(&[rows, 2 * a]);
    for r in 0..rows {
        let da = &dinput.row(r)[state_dim..state_dim + a];
        let eps = noise.row(r);
        let out = dhead.row_mut(r);
        for k in 0..a {
            let idx = r * a + k;
            let t = sample.pre_tanh[idx].tanh();
            let du = da[k].as_f64() * bound * (1.0 - t * t) + alpha * 2.0 * t / b;
            out[k] = T::of(du);
            if sample.log_std_free[idx] {
                out[a + k] = T::of(du * sample.std[idx] * eps[k].as_f64() - alpha / b);
            }
        }
    }
    policy.actor.backward(&dhead, GradMode::Accumulate)?;

    let mean_energy = energy / b;
    let mean_log_prob = sample.log_prob.iter().sum::<f64>() / b;
    Ok(ActorLossOutput {
        loss: -mean_energy + alpha * mean_log_prob,
        mean_energy,
        mean_log_prob,
    })
}
