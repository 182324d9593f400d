#![allow(dead_code)]

use deepcrl::crl::{actor_loss, actor_loss_and_grad, critic_loss, critic_loss_and_grad, CriticPair, GaussianPolicy, TrainingBatch};
use deepcrl::nn::{ParameterStore, RealArray};
use deepcrl::{build_network, NetworkSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rows: usize, cols: usize, scale: f64, rng: &mut impl Rng) -> RealArray<f64> {
    let data = (0..rows * cols).map(|_| (rng.random::<f64>() * 2.0 - 1.0) * scale).collect();
    RealArray::matrix(rows, cols, data).unwrap()
}

/// Central-difference step and the accepted relative error.
pub const FD_STEP: f64 = 1e-4;
pub const FD_TOL: f64 = 1e-4;

/// Relative error with a floor on the denominator so that gradients that are
/// numerically zero are compared in absolute terms.
pub const REL_ERR_FLOOR: f64 = 1e-4;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

/// Central finite differences of `loss` with respect to every scalar in the
/// store selected by `select`; returns the worst relative error against the
/// analytic gradients already held in that store.
pub fn max_fd_error<S>(
    state: &mut S,
    select: impl Fn(&mut S) -> &mut ParameterStore<f64>,
    loss: impl Fn(&S) -> f64,
    step: f64,
) -> (f64, String) {
    let analytic: Vec<(String, Vec<f64>)> = select(state)
        .iter()
        .map(|(n, e)| (n.to_string(), e.grad.data().to_vec()))
        .collect();
    let mut worst = (0.0, String::new());
    for (idx, (name, grads)) in analytic.iter().enumerate() {
        for (k, &g) in grads.iter().enumerate() {
            let orig = select(state).at(idx).value.data()[k];
            select(state).at_mut(idx).value.data_mut()[k] = orig + step;
            let up = loss(state);
            select(state).at_mut(idx).value.data_mut()[k] = orig - step;
            let down = loss(state);
            select(state).at_mut(idx).value.data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * step);
            let e = rel_err(g, numeric);
            if e > worst.0 {
                worst = (e, format!("{name}[{k}]: analytic {g:e} numeric {numeric:e}"));
            }
        }
    }
    worst
}

pub struct Setup {
    pub critic: CriticPair<f64>,
    pub policy: GaussianPolicy<f64>,
    pub batch: TrainingBatch<f64>,
    pub noise: RealArray<f64>,
}

pub fn setup(depth: usize, width: usize, seed: u64) -> Setup {
    let (s, a, g, repr, b) = (4, 2, 2, 8, 6);
    let sa = build_network(&NetworkSpec::new(s + a, width, depth, repr), seed).unwrap();
    let ge = build_network(&NetworkSpec::new(g, width, depth, repr), seed + 1).unwrap();
    let actor = build_network(&NetworkSpec::new(s + g, width, depth, 2 * a), seed + 2).unwrap();
    let mut r = rng(seed + 3);
    let batch = TrainingBatch {
        states: random_matrix(b, s, 2.0, &mut r),
        actions: random_matrix(b, a, 1.0, &mut r),
        goals: random_matrix(b, g, 2.0, &mut r),
    };
    let noise = RealArray::matrix(b, a, (0..b * a).map(|_| r.random::<f64>() * 2.0 - 1.0).collect()).unwrap();
    Setup {
        critic: CriticPair::new(sa, ge).unwrap(),
        policy: GaussianPolicy::new(actor, a, 1.0).unwrap(),
        batch,
        noise,
    }
}

/// Worst relative error of the InfoNCE gradient over both encoders.
pub fn infonce_fd_error(depth: usize, width: usize, seed: u64) -> (f64, String) {
    let mut st = setup(depth, width, seed);
    critic_loss_and_grad(&mut st.critic, &st.batch, 0.1).unwrap();
    let batch = st.batch.clone();
    let loss = |c: &CriticPair<f64>| critic_loss(c, &batch, 0.1).unwrap().loss;
    let (e1, at1) = max_fd_error(&mut st.critic, |c| c.sa_encoder.params_mut(), loss, FD_STEP);
    let (e2, at2) = max_fd_error(&mut st.critic, |c| c.g_encoder.params_mut(), loss, FD_STEP);
    if e1 >= e2 {
        (e1, format!("critic_sa {at1}"))
    } else {
        (e2, format!("critic_g {at2}"))
    }
}

/// Worst relative error of the actor-loss gradient; panics if the actor
/// update touches critic gradients.
pub fn actor_fd_error(depth: usize, width: usize, seed: u64, alpha: f64) -> (f64, String) {
    let mut st = setup(depth, width, seed);
    actor_loss_and_grad(&mut st.policy, &mut st.critic, &st.batch.states, &st.batch.goals, &st.noise, alpha).unwrap();
    let critic_grads_zero = [st.critic.sa_encoder.params(), st.critic.g_encoder.params()]
        .iter()
        .all(|s| s.iter().all(|(_, e)| e.grad.data().iter().all(|&g| g == 0.0)));
    assert!(critic_grads_zero, "actor loss wrote critic gradients");
    let Setup {
        critic,
        mut policy,
        batch,
        noise,
    } = st;
    let loss = |p: &GaussianPolicy<f64>| actor_loss(p, &critic, &batch.states, &batch.goals, &noise, alpha).unwrap().loss;
    max_fd_error(&mut policy, |p| p.actor.params_mut(), loss, FD_STEP)
}
