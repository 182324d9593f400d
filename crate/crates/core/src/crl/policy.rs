//! Tanh-squashed diagonal Gaussian policy over a residual actor network.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::arch::BuiltNetwork;
use crate::error::{dim_err, Error, Result};
use crate::nn::RealArray;
use crate::scalar::Scalar;

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Squashed actions are kept this fraction inside the bounds so they stay
/// strictly interior even where `tanh` rounds to ±1.
const EDGE_MARGIN: f64 = 1e-6;

/// Goal-conditioned Gaussian policy. The actor maps `state ⊕ goal` to
/// `2·action_dim` values: means followed by raw log standard deviations.
pub struct GaussianPolicy<T> {
    pub actor: BuiltNetwork<T>,
    pub action_dim: usize,
    pub action_bound: f64,
}

/// Quantities of one reparameterized sample, kept for the backward pass.
pub(crate) struct PolicySample<T> {
    pub actions: RealArray<T>,
    pub pre_tanh: Vec<f64>,
    pub std: Vec<f64>,
    /// Whether each log-std lies inside the clamp range (gradient passes).
    pub log_std_free: Vec<bool>,
    pub log_prob: Vec<f64>,
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `ln(1 − tanh²(u))`, stable for large |u|.
fn log_one_minus_tanh_sq(u: f64) -> f64 {
    2.0 * (std::f64::consts::LN_2 - u - softplus(-2.0 * u))
}

impl<T: Scalar> GaussianPolicy<T> {
    pub fn new(actor: BuiltNetwork<T>, action_dim: usize, action_bound: f64) -> Result<Self> {
        if actor.spec.output_dim != 2 * action_dim {
            return Err(dim_err("GaussianPolicy", 2 * action_dim, actor.spec.output_dim));
        }
        Ok(Self {
            actor,
            action_dim,
            action_bound,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.actor.spec.input_dim
    }

    /// Draws standard-normal noise for `rows` samples.
    pub fn draw_noise(&self, rows: usize, rng: &mut impl Rng) -> RealArray<T> {
        let data = (0..rows * self.action_dim)
            .map(|_| T::of(rng.sample::<f64, _>(StandardNormal)))
            .collect();
        RealArray::from_vec(&[rows, self.action_dim], data).expect("shape matches")
    }

    /// Maps actor head outputs plus noise (or the mean, when `noise` is
    /// `None`) to bounded actions and their log-densities.
    pub(crate) fn squash(&self, head: &RealArray<T>, noise: Option<&RealArray<T>>) -> Result<PolicySample<T>> {
        let a = self.action_dim;
        let rows = head.rows();
        if head.cols() != 2 * a {
            return Err(dim_err("policy head", 2 * a, head.cols()));
        }
        if let Some(n) = noise {
            if n.rows() != rows || n.cols() != a {
                return Err(dim_err("policy noise", format!("[{rows}, {a}]"), format!("{:?}", n.shape())));
            }
        }
        let bound = self.action_bound;
        let mut actions = Vec::with_capacity(rows * a);
        let mut pre_tanh = Vec::with_capacity(rows * a);
        let mut std = Vec::with_capacity(rows * a);
        let mut log_std_free = Vec::with_capacity(rows * a);
        let mut log_prob = Vec::with_capacity(rows);
        for r in 0..rows {
            let out = head.row(r);
            let mut lp = 0.0;
            for k in 0..a {
                let mean = out[k].as_f64();
                let raw = out[a + k].as_f64();
                let log_std = raw.clamp(LOG_STD_MIN, LOG_STD_MAX);
                let s = log_std.exp();
                let eps = noise.map_or(0.0, |n| n.row(r)[k].as_f64());
                let u = mean + s * eps;
                actions.push(T::of(bound * u.tanh().clamp(EDGE_MARGIN - 1.0, 1.0 - EDGE_MARGIN)));
                lp += -0.5 * eps * eps - log_std - HALF_LN_2PI - bound.ln() - log_one_minus_tanh_sq(u);
                pre_tanh.push(u);
                std.push(s);
                log_std_free.push(raw > LOG_STD_MIN && raw < LOG_STD_MAX);
            }
            log_prob.push(lp);
        }
        Ok(PolicySample {
            actions: RealArray::matrix(rows, a, actions)?,
            pre_tanh,
            std,
            log_std_free,
            log_prob,
        })
    }

    /// Actions for a batch of `state ⊕ goal` rows.
    pub fn act(&self, inputs: &RealArray<T>, noise: Option<&RealArray<T>>) -> Result<RealArray<T>> {
        let head = self.actor.forward(inputs)?;
        Ok(self.squash(&head, noise)?.actions)
    }

    /// Log-density of the action produced from `inputs` and `noise`.
    pub fn log_prob(&self, inputs: &RealArray<T>, noise: &RealArray<T>) -> Result<Vec<f64>> {
        let head = self.actor.forward(inputs)?;
        Ok(self.squash(&head, Some(noise))?.log_prob)
    }
}

/// Samples one action for `(state, goal)`. The same seed yields the same
/// action; `deterministic` returns the squashed mean.
pub fn policy_sample<T: Scalar>(
    policy: &GaussianPolicy<T>,
    state: &[f64],
    goal: &[f64],
    seed: u64,
    deterministic: bool,
) -> Result<Vec<f64>> {
    let mut input: Vec<f64> = state.to_vec();
    input.extend_from_slice(goal);
    if input.len() != policy.input_dim() {
        return Err(Error::Dimension {
            op: "policy_sample",
            expected: format!("state+goal of length {}", policy.input_dim()),
            got: input.len().to_string(),
        });
    }
    let x = RealArray::<T>::from_f64(&[1, input.len()], &input)?;
    let noise = if deterministic {
        None
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Some(policy.draw_noise(1, &mut rng))
    };
    Ok(policy.act(&x, noise.as_ref())?.to_f64_vec())
}
