//! Analytic goal-conditioned environments: a point mass in open space or a
//! maze, and a planar two-link arm. Everything here is pure and seeded;
//! episodes are truncated at `episode_length` and never terminate early.

mod eval;
mod grid;
mod presets;

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::crl::mix_seed;
use crate::error::{Error, Result};

pub use eval::{rollout_eval, rollout_trace, EvalStats, FnPolicy, GoalPolicy, TraceStep};
pub use grid::{Cell, CellIndex, GridLayout, Rect};
pub use presets::{preset, preset_names, GENERALIZATION_TRAIN_SEP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnvKind {
    Point,
    Arm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointPhysics {
    pub dt: f64,
    /// Fraction of velocity lost per step.
    pub damping: f64,
    /// Acceleration at full action.
    pub accel: f64,
    pub v_max: f64,
}

impl Default for PointPhysics {
    fn default() -> Self {
        Self {
            dt: 0.05,
            damping: 0.1,
            accel: 4.0,
            v_max: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmPhysics {
    pub dt: f64,
    pub damping: f64,
    /// Angular acceleration at full torque.
    pub torque: f64,
    pub omega_max: f64,
    pub link_lengths: [f64; 2],
}

impl Default for ArmPhysics {
    fn default() -> Self {
        Self {
            dt: 0.05,
            damping: 0.1,
            torque: 8.0,
            omega_max: 3.0,
            link_lengths: [1.0, 1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Physics {
    Point { physics: PointPhysics, layout: GridLayout },
    Arm(ArmPhysics),
}

/// Where starts or goals are drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Region {
    /// Uniform cell, then uniform offset of at most `jitter` from its centre.
    Cells { cells: Vec<CellIndex>, jitter: f64 },
    /// Uniform joint angles.
    ArmWorkspace,
}

/// Geodesic cell-separation filter on (start, goal) pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Separation {
    AtMost(f64),
    Exactly(f64),
    AtLeast(f64),
}

impl Separation {
    pub fn admits(&self, d: f64) -> bool {
        match *self {
            Separation::AtMost(k) => d <= k,
            Separation::Exactly(k) => d == k,
            Separation::AtLeast(k) => d >= k,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSampler {
    pub start: Region,
    pub goal: Region,
    pub separation: Option<Separation>,
}

const MAX_PAIR_REJECTIONS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub name: String,
    pub kind: EnvKind,
    pub state_dim: usize,
    pub action_dim: usize,
    pub goal_dim: usize,
    /// Actions lie in `[-action_bound, action_bound]` per dimension.
    pub action_bound: f64,
    pub goal_radius: f64,
    pub episode_length: usize,
    pub walls: Vec<Rect>,
    pub train_sampler: PairSampler,
    pub eval_sampler: PairSampler,
    pub physics: Physics,
}

/// Physical state. For point envs `pos`/`vel` are xy; for the arm they are
/// joint angles and angular velocities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub pos: [f64; 2],
    pub vel: [f64; 2],
    pub t: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalSpec {
    pub g: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub state: EnvState,
    pub reward: f64,
    pub near_goal: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Train,
    Eval,
}

fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

impl EnvSpec {
    /// Observation indices forming the goal projection.
    pub fn goal_dims(&self) -> Vec<usize> {
        match self.kind {
            EnvKind::Point => vec![0, 1],
            EnvKind::Arm => vec![4, 5],
        }
    }

    pub fn layout(&self) -> Option<&GridLayout> {
        match &self.physics {
            Physics::Point { layout, .. } => Some(layout),
            Physics::Arm(_) => None,
        }
    }

    pub fn sampler(&self, phase: Phase) -> &PairSampler {
        match phase {
            Phase::Train => &self.train_sampler,
            Phase::Eval => &self.eval_sampler,
        }
    }

    /// Copy whose evaluation pairs are restricted to the given separation.
    pub fn with_eval_separation(&self, sep: Separation) -> Self {
        let mut s = self.clone();
        s.eval_sampler.separation = Some(sep);
        s
    }

    pub fn fingertip(&self, angles: [f64; 2]) -> [f64; 2] {
        let l = match &self.physics {
            Physics::Arm(a) => a.link_lengths,
            Physics::Point { .. } => [1.0, 1.0],
        };
        let a12 = angles[0] + angles[1];
        [l[0] * angles[0].cos() + l[1] * a12.cos(), l[0] * angles[0].sin() + l[1] * a12.sin()]
    }

    pub fn observe(&self, s: &EnvState) -> Vec<f64> {
        let mut o = Vec::with_capacity(self.state_dim);
        self.observe_into(s, &mut o);
        o
    }

    pub fn observe_into(&self, s: &EnvState, out: &mut Vec<f64>) {
        out.extend_from_slice(&[s.pos[0], s.pos[1], s.vel[0], s.vel[1]]);
        if self.kind == EnvKind::Arm {
            out.extend_from_slice(&self.fingertip(s.pos));
        }
    }

    pub fn goal_of(&self, s: &EnvState) -> [f64; 2] {
        match self.kind {
            EnvKind::Point => s.pos,
            EnvKind::Arm => self.fingertip(s.pos),
        }
    }

    /// Canonical observation for a point env at `pos` with zero velocity.
    pub fn observation_at(&self, pos: [f64; 2]) -> Result<Vec<f64>> {
        if self.kind != EnvKind::Point {
            return Err(Error::Unsupported(format!("{} has no 2D positional state", self.name)));
        }
        Ok(vec![pos[0], pos[1], 0.0, 0.0])
    }

    pub fn is_near(&self, s: &EnvState, goal: &GoalSpec) -> bool {
        let p = self.goal_of(s);
        let d = ((p[0] - goal.g[0]).powi(2) + (p[1] - goal.g[1]).powi(2)).sqrt();
        d <= self.goal_radius
    }

    fn draw_cell(cells: &[CellIndex], rng: &mut impl Rng) -> CellIndex {
        cells[rng.random_range(0..cells.len())]
    }

    fn jittered(layout: &GridLayout, cell: CellIndex, jitter: f64, rng: &mut impl Rng) -> [f64; 2] {
        let c = layout.cell_center(cell);
        let j = jitter * layout.cell_size();
        if j == 0.0 {
            return c;
        }
        [c[0] + rng.random_range(-j..=j), c[1] + rng.random_range(-j..=j)]
    }

    fn draw_angles(rng: &mut impl Rng) -> [f64; 2] {
        [rng.random_range(-PI..PI), rng.random_range(-PI..PI)]
    }

    /// Draws a start state and a goal from `sampler`.
    pub fn reset_with(&self, sampler: &PairSampler, rng: &mut impl Rng) -> Result<(EnvState, GoalSpec)> {
        match (&self.physics, &sampler.start, &sampler.goal) {
            (Physics::Point { layout, .. }, Region::Cells { cells: sc, jitter: sj }, Region::Cells { cells: gc, jitter: gj }) => {
                if sc.is_empty() || gc.is_empty() {
                    return Err(Error::Config(format!("{}: empty start or goal region", self.name)));
                }
                let mut picked = None;
                for _ in 0..MAX_PAIR_REJECTIONS {
                    let s = Self::draw_cell(sc, rng);
                    let g = Self::draw_cell(gc, rng);
                    let ok = match sampler.separation {
                        None => true,
                        Some(sep) => layout.separation(s, g).is_some_and(|d| sep.admits(d)),
                    };
                    if ok {
                        picked = Some((s, g));
                        break;
                    }
                }
                let (s, g) = picked.ok_or_else(|| {
                    Error::Config(format!("{}: no (start, goal) pair satisfies {:?}", self.name, sampler.separation))
                })?;
                let pos = Self::jittered(layout, s, *sj, rng);
                let goal = Self::jittered(layout, g, *gj, rng);
                Ok((EnvState { pos, vel: [0.0; 2], t: 0 }, GoalSpec { g: goal }))
            }
            (Physics::Arm(_), Region::ArmWorkspace, Region::ArmWorkspace) => {
                let pos = Self::draw_angles(rng);
                let g = self.fingertip(Self::draw_angles(rng));
                Ok((EnvState { pos, vel: [0.0; 2], t: 0 }, GoalSpec { g }))
            }
            _ => Err(Error::Config(format!("{}: sampler does not match environment kind", self.name))),
        }
    }

    pub fn reset(&self, seed: u64, phase: Phase) -> Result<(EnvState, GoalSpec)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.reset_with(self.sampler(phase), &mut rng)
    }

    /// Advances one step. Actions are clipped to the bounds.
    pub fn step(&self, s: &EnvState, action: &[f64], goal: &GoalSpec) -> Result<StepOutcome> {
        if action.len() != self.action_dim {
            return Err(crate::error::dim_err("env step", self.action_dim, action.len()));
        }
        let a = [
            action[0].clamp(-self.action_bound, self.action_bound) / self.action_bound,
            action[1].clamp(-self.action_bound, self.action_bound) / self.action_bound,
        ];
        let next = match &self.physics {
            Physics::Point { physics: p, layout } => {
                let mut v = [0.0; 2];
                for i in 0..2 {
                    v[i] = (1.0 - p.damping) * s.vel[i] + p.accel * a[i] * p.dt;
                }
                let speed = (v[0] * v[0] + v[1] * v[1]).sqrt();
                if speed > p.v_max {
                    v[0] *= p.v_max / speed;
                    v[1] *= p.v_max / speed;
                }
                let (x, bx) = layout.sweep_x(s.pos[0], s.pos[0] + v[0] * p.dt, s.pos[1]);
                if bx {
                    v[0] = 0.0;
                }
                let (y, by) = layout.sweep_y(s.pos[1], s.pos[1] + v[1] * p.dt, x);
                if by {
                    v[1] = 0.0;
                }
                EnvState { pos: [x, y], vel: v, t: s.t + 1 }
            }
            Physics::Arm(p) => {
                let mut w = [0.0; 2];
                let mut q = [0.0; 2];
                for i in 0..2 {
                    w[i] = ((1.0 - p.damping) * s.vel[i] + p.torque * a[i] * p.dt).clamp(-p.omega_max, p.omega_max);
                    q[i] = wrap_angle(s.pos[i] + w[i] * p.dt);
                }
                EnvState { pos: q, vel: w, t: s.t + 1 }
            }
        };
        let near_goal = self.is_near(&next, goal);
        Ok(StepOutcome {
            state: next,
            reward: if near_goal { 1.0 } else { 0.0 },
            near_goal,
        })
    }
}

/// Result of stepping one sub-environment of a [`VecEnv`].
#[derive(Debug, Clone, PartialEq)]
pub struct VecStep {
    pub obs: Vec<f64>,
    pub next_obs: Vec<f64>,
    pub near_goal: bool,
    /// True when this step was the last of its episode.
    pub done: bool,
    pub episode_id: u64,
    pub step_index: usize,
}

/// `n` independent environments, each with its own rng stream, reset
/// automatically at truncation. Stepping is sequential, so results do not
/// depend on any parallelism setting.
pub struct VecEnv {
    spec: Arc<EnvSpec>,
    phase: Phase,
    states: Vec<EnvState>,
    goals: Vec<GoalSpec>,
    episode_ids: Vec<u64>,
    rngs: Vec<ChaCha8Rng>,
    next_episode_id: u64,
    resets: Vec<ResetRecord>,
}

/// Start position and goal of one episode, in reset order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResetRecord {
    pub episode_id: u64,
    pub start: [f64; 2],
    pub goal: [f64; 2],
}

impl VecEnv {
    pub fn new(spec: Arc<EnvSpec>, n: usize, seed: u64, phase: Phase) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("VecEnv needs at least one environment".into()));
        }
        let mut rngs: Vec<ChaCha8Rng> = (0..n).map(|i| ChaCha8Rng::seed_from_u64(mix_seed(seed, i as u64))).collect();
        let mut states = Vec::with_capacity(n);
        let mut goals = Vec::with_capacity(n);
        let mut resets = Vec::with_capacity(n);
        for (i, rng) in rngs.iter_mut().enumerate() {
            let (s, g) = spec.reset_with(spec.sampler(phase), rng)?;
            resets.push(ResetRecord {
                episode_id: i as u64,
                start: s.pos,
                goal: g.g,
            });
            states.push(s);
            goals.push(g);
        }
        Ok(Self {
            resets,
            spec,
            phase,
            states,
            goals,
            episode_ids: (0..n as u64).collect(),
            rngs,
            next_episode_id: n as u64,
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn states(&self) -> &[EnvState] {
        &self.states
    }

    pub fn goals(&self) -> &[GoalSpec] {
        &self.goals
    }

    /// Row-major observations of all environments.
    pub fn observations(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len() * self.spec.state_dim);
        for s in &self.states {
            self.spec.observe_into(s, &mut out);
        }
        out
    }

    /// Row-major goal vectors of all environments.
    pub fn goal_matrix(&self) -> Vec<f64> {
        self.goals.iter().flat_map(|g| g.g).collect()
    }

    /// Steps every environment with its row of `actions`.
    pub fn step(&mut self, actions: &[f64]) -> Result<Vec<VecStep>> {
        let ad = self.spec.action_dim;
        if actions.len() != self.len() * ad {
            return Err(crate::error::dim_err("VecEnv::step", self.len() * ad, actions.len()));
        }
        let mut out = Vec::with_capacity(self.len());
        for i in 0..self.len() {
            let s = self.states[i];
            let o = self.spec.step(&s, &actions[i * ad..(i + 1) * ad], &self.goals[i])?;
            let done = o.state.t >= self.spec.episode_length;
            out.push(VecStep {
                obs: self.spec.observe(&s),
                next_obs: self.spec.observe(&o.state),
                near_goal: o.near_goal,
                done,
                episode_id: self.episode_ids[i],
                step_index: s.t,
            });
            if done {
                let (ns, ng) = self.spec.reset_with(self.spec.sampler(self.phase), &mut self.rngs[i])?;
                self.states[i] = ns;
                self.goals[i] = ng;
                self.episode_ids[i] = self.next_episode_id;
                self.resets.push(ResetRecord {
                    episode_id: self.next_episode_id,
                    start: ns.pos,
                    goal: ng.g,
                });
                self.next_episode_id += 1;
            } else {
                self.states[i] = o.state;
            }
        }
        Ok(out)
    }

    /// Every (start, goal) pair drawn so far.
    pub fn reset_log(&self) -> &[ResetRecord] {
        &self.resets
    }
}
