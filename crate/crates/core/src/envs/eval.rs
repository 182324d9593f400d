use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::crl::{mix_seed, CrlAgent};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{EnvSpec, Phase};

/// Anything that maps row-major (observation, goal) batches to actions.
pub trait GoalPolicy {
    fn act(&mut self, obs: &[f64], goals: &[f64], rows: usize) -> Result<Vec<f64>>;
}

/// Deterministic (mean) actions of a trained agent.
impl<T: Scalar> GoalPolicy for CrlAgent<T> {
    fn act(&mut self, obs: &[f64], goals: &[f64], rows: usize) -> Result<Vec<f64>> {
        CrlAgent::act(self, obs, goals, rows, None)
    }
}

/// Per-row closure policy: `f(observation, goal) -> action`.
pub struct FnPolicy<F>(pub F);

impl<F: FnMut(&[f64], &[f64]) -> Vec<f64>> GoalPolicy for FnPolicy<F> {
    fn act(&mut self, obs: &[f64], goals: &[f64], rows: usize) -> Result<Vec<f64>> {
        let od = obs.len() / rows.max(1);
        let gd = goals.len() / rows.max(1);
        let mut out = Vec::new();
        for r in 0..rows {
            out.extend((self.0)(&obs[r * od..(r + 1) * od], &goals[r * gd..(r + 1) * gd]));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalStats {
    pub mean: f64,
    pub stderr: f64,
    /// Steps spent within the goal radius, per episode.
    pub counts: Vec<usize>,
}

/// Runs `n` evaluation episodes in lockstep and counts steps near the goal.
/// Episode `i` is reset from `mix_seed(seed, i)`, so results do not depend
/// on `n` for the shared prefix of episodes.
pub fn rollout_eval(policy: &mut dyn GoalPolicy, spec: &EnvSpec, n: usize, seed: u64) -> Result<EvalStats> {
    if n == 0 {
        return Err(Error::Usage("evaluation needs at least one episode".into()));
    }
    let mut states = Vec::with_capacity(n);
    let mut goals = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, i as u64));
        let (s, g) = spec.reset_with(spec.sampler(Phase::Eval), &mut rng)?;
        states.push(s);
        goals.push(g);
    }
    let goal_mat: Vec<f64> = goals.iter().flat_map(|g| g.g).collect();
    let mut counts = vec![0usize; n];
    let mut obs = Vec::with_capacity(n * spec.state_dim);
    let ad = spec.action_dim;
    for _ in 0..spec.episode_length {
        obs.clear();
        for s in &states {
            spec.observe_into(s, &mut obs);
        }
        let actions = policy.act(&obs, &goal_mat, n)?;
        if actions.len() != n * ad {
            return Err(crate::error::dim_err("policy actions", n * ad, actions.len()));
        }
        for i in 0..n {
            let o = spec.step(&states[i], &actions[i * ad..(i + 1) * ad], &goals[i])?;
            counts[i] += o.near_goal as usize;
            states[i] = o.state;
        }
    }
    let mean = counts.iter().sum::<usize>() as f64 / n as f64;
    let stderr = if n > 1 {
        let var = counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    } else {
        0.0
    };
    Ok(EvalStats { mean, stderr, counts })
}

/// One step of a recorded episode: the observation the policy saw, the
/// action it chose and whether the resulting state is near the goal.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub t: usize,
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub goal: [f64; 2],
    pub near_goal: bool,
}

/// Records the first evaluation episode of `seed` (the same episode that
/// `rollout_eval` runs as episode 0).
pub fn rollout_trace(policy: &mut dyn GoalPolicy, spec: &EnvSpec, seed: u64) -> Result<Vec<TraceStep>> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0));
    let (mut s, g) = spec.reset_with(spec.sampler(Phase::Eval), &mut rng)?;
    let mut out = Vec::with_capacity(spec.episode_length);
    for t in 0..spec.episode_length {
        let obs = spec.observe(&s);
        let action = policy.act(&obs, &g.g, 1)?;
        if action.len() != spec.action_dim {
            return Err(crate::error::dim_err("policy actions", spec.action_dim, action.len()));
        }
        let o = spec.step(&s, &action, &g)?;
        out.push(TraceStep { t, obs, action, goal: g.g, near_goal: o.near_goal });
        s = o.state;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::preset;

    #[test]
    fn trace_matches_first_eval_episode() {
        let spec = preset("point_reach").unwrap();
        let toward = |o: &[f64], g: &[f64]| vec![g[0] - o[0], g[1] - o[1]];
        let st = rollout_eval(&mut FnPolicy(toward), &spec, 2, 5).unwrap();
        let tr = rollout_trace(&mut FnPolicy(toward), &spec, 5).unwrap();
        assert_eq!(tr.len(), spec.episode_length);
        assert_eq!(tr.iter().filter(|s| s.near_goal).count(), st.counts[0]);
        assert!(st.counts[0] > 0);
    }

    #[test]
    fn still_policy_far_from_goal_scores_zero() {
        let spec = preset("point_umaze").unwrap();
        let mut still = FnPolicy(|_: &[f64], _: &[f64]| vec![0.0, 0.0]);
        let st = rollout_eval(&mut still, &spec, 4, 0).unwrap();
        assert_eq!(st.counts, vec![0; 4]);
    }

    #[test]
    fn start_inside_radius_saturates() {
        let mut spec = preset("point_reach").unwrap();
        // start and goal drawn from the same single cell without jitter
        let one = crate::envs::Region::Cells { cells: vec![(3, 3)], jitter: 0.0 };
        spec.eval_sampler.start = one.clone();
        spec.eval_sampler.goal = one;
        let mut still = FnPolicy(|_: &[f64], _: &[f64]| vec![0.0, 0.0]);
        let st = rollout_eval(&mut still, &spec, 3, 9).unwrap();
        assert_eq!(st.mean, spec.episode_length as f64);
        assert_eq!(st.stderr, 0.0);
    }

    #[test]
    fn zero_episodes_is_an_error() {
        let spec = preset("point_reach").unwrap();
        let mut still = FnPolicy(|_: &[f64], _: &[f64]| vec![0.0, 0.0]);
        assert!(rollout_eval(&mut still, &spec, 0, 0).is_err());
    }
}
