//! Shared fixtures for the benchmarks under `benches/`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use deepcrl::envs::{preset, EnvSpec, Phase};
use deepcrl::nn::RealArray;
use deepcrl::replay::{ReplayBuffer, Transition};
use deepcrl::Result;

/// Uniform `rows × cols` matrix in `[-1, 1)`.
pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> RealArray<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..rows * cols).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    RealArray::matrix(rows, cols, data).expect("shape matches data")
}

/// Replay buffer holding `episodes` random-walk episodes of `env`.
pub fn filled_buffer(env: &str, episodes: usize, seed: u64) -> Result<(EnvSpec, ReplayBuffer)> {
    let spec = preset(env)?;
    let len = spec.episode_length;
    let mut buf = ReplayBuffer::new(spec.state_dim, spec.action_dim, spec.goal_dims(), episodes * len, 1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for id in 0..episodes as u64 {
        let (mut s, g) = spec.reset(seed ^ id, Phase::Train)?;
        for t in 0..len {
            let a: Vec<f64> = (0..spec.action_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let next = spec.step(&s, &a, &g)?.state;
            buf.append_step(&Transition {
                state: spec.observe(&s),
                action: a,
                next_state: spec.observe(&next),
                step_index: t,
                episode_id: id,
            })?;
            s = next;
        }
        buf.end_episode(id);
    }
    Ok((spec, buf))
}
