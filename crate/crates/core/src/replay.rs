//! Episode-segmented replay storage with future-state goal relabeling.
//!
//! Steps are staged per episode and become sampleable only once the episode
//! is closed with [`ReplayBuffer::end_episode`]. Capacity is counted in
//! completed transitions; eviction drops whole episodes, oldest first.

use std::collections::{BTreeMap, VecDeque};

use rand::Rng;

use crate::crl::TrainingBatch;
use crate::error::{dim_err, Error, Result};
use crate::nn::RealArray;
use crate::scalar::Scalar;

/// Rejections tolerated before the future-offset sampler falls back to a
/// uniform draw over the remaining steps.
pub const MAX_GEOMETRIC_REJECTIONS: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub next_state: Vec<f64>,
    pub step_index: usize,
    pub episode_id: u64,
}

#[derive(Debug, Clone, Default)]
struct Episode {
    id: u64,
    len: usize,
    states: Vec<f32>,
    actions: Vec<f32>,
    final_state: Vec<f32>,
}

impl Episode {
    /// Positions `t` that have at least one strictly later state.
    fn sample_positions(&self) -> usize {
        self.len.saturating_sub(1)
    }
}

/// One sampled training row, by index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampledRow {
    pub episode_id: u64,
    pub t: usize,
    pub goal_t: usize,
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    obs_dim: usize,
    act_dim: usize,
    goal_dims: Vec<usize>,
    capacity: usize,
    min_size: usize,
    episodes: VecDeque<Episode>,
    pending: BTreeMap<u64, Episode>,
    stored: usize,
    /// Cumulative sample positions per stored episode.
    cumulative: Vec<usize>,
}

/// Draws `t + Δ` with `Δ ≥ 1` from Geometric(1 − γ), resampled until it
/// falls inside the episode; after [`MAX_GEOMETRIC_REJECTIONS`] misses the
/// offset is drawn uniformly from the remaining steps.
pub fn sample_future_goal(episode_len: usize, t: usize, gamma: f64, rng: &mut impl Rng) -> usize {
    debug_assert!(t + 1 < episode_len, "no future state after t={t} (len {episode_len})");
    debug_assert!((0.0..1.0).contains(&gamma));
    let last = episode_len - 1;
    if t + 1 >= last || gamma <= 0.0 {
        return t + 1;
    }
    let ln_gamma = gamma.ln();
    for _ in 0..MAX_GEOMETRIC_REJECTIONS {
        // Inverse CDF of P(Δ = k) = γ^{k−1}(1 − γ).
        let u: f64 = 1.0 - rng.random::<f64>();
        let delta = 1.0 + (u.ln() / ln_gamma).floor();
        if delta.is_finite() && t as f64 + delta <= last as f64 {
            return t + delta as usize;
        }
    }
    rng.random_range(t + 1..=last)
}

impl ReplayBuffer {
    /// `goal_dims` lists the state coordinates that form the goal vector.
    pub fn new(obs_dim: usize, act_dim: usize, goal_dims: Vec<usize>, capacity: usize, min_size: usize) -> Result<Self> {
        if let Some(&d) = goal_dims.iter().find(|&&d| d >= obs_dim) {
            return Err(Error::Config(format!("goal dimension {d} outside state of size {obs_dim}")));
        }
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be positive".into()));
        }
        Ok(Self {
            obs_dim,
            act_dim,
            goal_dims,
            capacity,
            min_size,
            episodes: VecDeque::new(),
            pending: BTreeMap::new(),
            stored: 0,
            cumulative: Vec::new(),
        })
    }

    /// Completed, sampleable transitions.
    pub fn len(&self) -> usize {
        self.stored
    }

    pub fn is_empty(&self) -> bool {
        self.stored == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn min_size(&self) -> usize {
        self.min_size
    }

    pub fn num_episodes(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_ready(&self) -> bool {
        self.stored >= self.min_size && self.cumulative.last().copied().unwrap_or(0) > 0
    }

    pub fn episode_ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.episodes.iter().map(|e| e.id)
    }

    pub fn goal_dims(&self) -> &[usize] {
        &self.goal_dims
    }

    pub fn append_step(&mut self, t: &Transition) -> Result<()> {
        if t.state.len() != self.obs_dim || t.next_state.len() != self.obs_dim {
            return Err(dim_err("append_step state", self.obs_dim, t.state.len()));
        }
        if t.action.len() != self.act_dim {
            return Err(dim_err("append_step action", self.act_dim, t.action.len()));
        }
        let ep = self.pending.entry(t.episode_id).or_insert_with(|| Episode {
            id: t.episode_id,
            ..Episode::default()
        });
        if t.step_index != ep.len {
            return Err(Error::Usage(format!(
                "episode {} expected step {} but got step {}",
                t.episode_id, ep.len, t.step_index
            )));
        }
        ep.states.extend(t.state.iter().map(|&v| v as f32));
        ep.actions.extend(t.action.iter().map(|&v| v as f32));
        ep.final_state.clear();
        ep.final_state.extend(t.next_state.iter().map(|&v| v as f32));
        ep.len += 1;
        Ok(())
    }

    /// Publishes the staged episode. Closing an empty or unknown episode is a no-op.
    pub fn end_episode(&mut self, episode_id: u64) {
        let Some(ep) = self.pending.remove(&episode_id) else {
            return;
        };
        if ep.len == 0 {
            return;
        }
        self.stored += ep.len;
        self.episodes.push_back(ep);
        while self.stored > self.capacity {
            match self.episodes.pop_front() {
                Some(old) => self.stored -= old.len,
                None => break,
            }
        }
        self.rebuild_index();
    }

    fn rebuild_index(&mut self) {
        self.cumulative.clear();
        let mut acc = 0;
        for ep in &self.episodes {
            acc += ep.sample_positions();
            self.cumulative.push(acc);
        }
    }

    fn check_ready(&self) -> Result<()> {
        if !self.is_ready() {
            return Err(Error::BufferBelowMinimum {
                have: self.stored,
                need: self.min_size.max(1),
            });
        }
        Ok(())
    }

    /// Draws `batch` rows, each a uniform (episode, t) pair with a relabeled
    /// future goal index.
    pub fn sample_rows(&self, batch: usize, gamma: f64, rng: &mut impl Rng) -> Result<Vec<SampledRow>> {
        self.check_ready()?;
        let total = *self.cumulative.last().expect("ready implies episodes");
        Ok((0..batch)
            .map(|_| {
                let u = rng.random_range(0..total);
                let e = self.cumulative.partition_point(|&c| c <= u);
                let before = if e == 0 { 0 } else { self.cumulative[e - 1] };
                let ep = &self.episodes[e];
                let t = u - before;
                let goal_t = sample_future_goal(ep.len, t, gamma, rng);
                SampledRow {
                    episode_id: ep.id,
                    t,
                    goal_t,
                }
            })
            .collect())
    }

    /// Samples a training batch; goals are the goal coordinates of the
    /// relabeled future states.
    pub fn sample_training_batch<T: Scalar>(&self, batch: usize, gamma: f64, rng: &mut impl Rng) -> Result<TrainingBatch<T>> {
        let rows = self.sample_rows(batch, gamma, rng)?;
        self.gather(&rows)
    }

    fn episode(&self, id: u64) -> Option<&Episode> {
        let first = self.episodes.front()?.id;
        // Ids are published in increasing order by the trainer; fall back to a scan otherwise.
        let guess = id.checked_sub(first).map(|d| d as usize);
        match guess.and_then(|g| self.episodes.get(g)) {
            Some(ep) if ep.id == id => Some(ep),
            _ => self.episodes.iter().find(|e| e.id == id),
        }
    }

    pub fn gather<T: Scalar>(&self, rows: &[SampledRow]) -> Result<TrainingBatch<T>> {
        let (o, a, g) = (self.obs_dim, self.act_dim, self.goal_dims.len());
        let mut states = Vec::with_capacity(rows.len() * o);
        let mut actions = Vec::with_capacity(rows.len() * a);
        let mut goals = Vec::with_capacity(rows.len() * g);
        for row in rows {
            let ep = self
                .episode(row.episode_id)
                .ok_or_else(|| Error::Usage(format!("episode {} not in buffer", row.episode_id)))?;
            states.extend(ep.states[row.t * o..(row.t + 1) * o].iter().map(|&v| T::of(v as f64)));
            actions.extend(ep.actions[row.t * a..(row.t + 1) * a].iter().map(|&v| T::of(v as f64)));
            let future = &ep.states[row.goal_t * o..(row.goal_t + 1) * o];
            goals.extend(self.goal_dims.iter().map(|&d| T::of(future[d] as f64)));
        }
        let n = rows.len();
        Ok(TrainingBatch {
            states: RealArray::matrix(n, o, states)?,
            actions: RealArray::matrix(n, a, actions)?,
            goals: RealArray::matrix(n, g, goals)?,
        })
    }

    /// Length of a stored episode.
    pub fn episode_len(&self, id: u64) -> Option<usize> {
        self.episode(id).map(|e| e.len)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn step(ep: u64, i: usize) -> Transition {
        Transition {
            state: vec![i as f64, ep as f64],
            action: vec![0.5],
            next_state: vec![(i + 1) as f64, ep as f64],
            step_index: i,
            episode_id: ep,
        }
    }

    fn fill(buf: &mut ReplayBuffer, ep: u64, len: usize) {
        for i in 0..len {
            buf.append_step(&step(ep, i)).unwrap();
        }
        buf.end_episode(ep);
    }

    #[test]
    fn five_steps_then_end() {
        let mut b = ReplayBuffer::new(2, 1, vec![0], 100, 1).unwrap();
        for i in 0..5 {
            b.append_step(&step(0, i)).unwrap();
        }
        assert_eq!(b.len(), 0, "partial episodes are invisible");
        b.end_episode(0);
        assert_eq!(b.len(), 5);
    }

    #[test]
    fn eviction_is_fifo_by_episode() {
        let mut b = ReplayBuffer::new(2, 1, vec![0], 10, 1).unwrap();
        fill(&mut b, 0, 4);
        fill(&mut b, 1, 4);
        fill(&mut b, 2, 4);
        assert_eq!(b.episode_ids().collect::<Vec<_>>(), [1, 2]);
        assert_eq!(b.len(), 8);
    }

    #[test]
    fn empty_end_is_noop_and_out_of_order_rejected() {
        let mut b = ReplayBuffer::new(2, 1, vec![0], 10, 1).unwrap();
        b.end_episode(7);
        assert_eq!(b.num_episodes(), 0);
        b.append_step(&step(3, 0)).unwrap();
        assert!(matches!(b.append_step(&step(3, 2)), Err(Error::Usage(_))));
    }

    #[test]
    fn sampling_below_minimum_is_gated() {
        let mut b = ReplayBuffer::new(2, 1, vec![0], 100, 10).unwrap();
        fill(&mut b, 0, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            b.sample_training_batch::<f32>(4, 0.9, &mut rng),
            Err(Error::BufferBelowMinimum { have: 5, need: 10 })
        ));
    }

    #[test]
    fn geometric_edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(sample_future_goal(50, 10, 0.0, &mut rng), 11);
            assert_eq!(sample_future_goal(50, 48, 0.99, &mut rng), 49);
        }
    }

    #[test]
    fn single_episode_batch_uses_that_episode_and_future_goals() {
        let mut b = ReplayBuffer::new(2, 1, vec![0], 100, 1).unwrap();
        fill(&mut b, 9, 20);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let batch = b.sample_training_batch::<f64>(64, 0.9, &mut rng).unwrap();
        for r in 0..64 {
            assert_eq!(batch.states.row(r)[1], 9.0);
            assert!(batch.goals.row(r)[0] > batch.states.row(r)[0]);
        }
    }

    #[test]
    fn sampling_is_deterministic_given_seed() {
        let mut b = ReplayBuffer::new(2, 1, vec![0, 1], 1000, 1).unwrap();
        for ep in 0..5 {
            fill(&mut b, ep, 30);
        }
        let draw = |s| b.sample_rows(32, 0.95, &mut ChaCha8Rng::seed_from_u64(s)).unwrap();
        assert_eq!(draw(4), draw(4));
    }
}
