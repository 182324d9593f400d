//! Online training: parallel collection into a replay buffer, gradient
//! steps gated by the update-to-data ratio, periodic deterministic
//! evaluation, JSONL metrics and binary checkpoints.

mod checkpoint;
mod config;

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::crl::{mix_seed, CrlAgent, UpdateStats};
use crate::envs::{rollout_eval, EnvSpec, EvalStats, Phase, ResetRecord, VecEnv};
use crate::error::{Error, Result};
use crate::replay::{ReplayBuffer, Transition};
use crate::scalar::{Precision, Scalar};

pub use checkpoint::{Checkpoint, CheckpointEntry, RngState, FORMAT_VERSION, MAGIC};
pub use config::{TrainConfig, EXTREME_ACTOR_DEPTH};

const ENV_SALT: u64 = 0x656e_76;
const NOISE_SALT: u64 = 0x6e6f_6973;
const LEARN_SALT: u64 = 0x6c72_6e;
const EVAL_SALT: u64 = 0x6576_616c;

/// Epochs averaged into the final score.
pub const FINAL_EPOCHS: usize = 5;

/// One line of the metrics stream. Loss and gradient fields are epoch
/// means and are `None` for epochs without gradient steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub env_steps: usize,
    pub grad_steps: usize,
    pub eval_time_near_goal: f64,
    pub eval_stderr: f64,
    pub critic_loss: Option<f64>,
    pub actor_loss: Option<f64>,
    pub critic_grad_norm: Option<f64>,
    pub actor_grad_norm: Option<f64>,
    pub wall_seconds: f64,
}

impl MetricsRecord {
    /// Equality ignoring wall-clock time.
    pub fn same_run_values(&self, other: &Self) -> bool {
        let strip = |r: &Self| Self {
            wall_seconds: 0.0,
            ..r.clone()
        };
        strip(self) == strip(other)
    }
}

/// Mean evaluation score over the last [`FINAL_EPOCHS`] epochs; the
/// pre-training evaluation (epoch 0) only counts when nothing else exists.
pub fn final_score(records: &[MetricsRecord]) -> f64 {
    let trained: Vec<&MetricsRecord> = records.iter().filter(|r| r.epoch > 0).collect();
    let pool: Vec<&MetricsRecord> = if trained.is_empty() { records.iter().collect() } else { trained };
    if pool.is_empty() {
        return f64::NAN;
    }
    let tail = &pool[pool.len().saturating_sub(FINAL_EPOCHS)..];
    tail.iter().map(|r| r.eval_time_near_goal).sum::<f64>() / tail.len() as f64
}

/// Number of gradient steps owed after `steps_since_warmup` env steps.
pub fn target_grad_steps(steps_since_warmup: usize, utd_ratio: usize) -> usize {
    steps_since_warmup / utd_ratio
}

#[derive(Debug, Clone, Copy, Default)]
struct EpochAccumulator {
    n: usize,
    sum: UpdateStats,
}

impl EpochAccumulator {
    fn add(&mut self, s: &UpdateStats) {
        self.n += 1;
        self.sum.critic_loss += s.critic_loss;
        self.sum.actor_loss += s.actor_loss;
        self.sum.critic_grad_norm += s.critic_grad_norm;
        self.sum.actor_grad_norm += s.actor_grad_norm;
    }

    fn mean(&self, f: impl Fn(&UpdateStats) -> f64) -> Option<f64> {
        (self.n > 0).then(|| f(&self.sum) / self.n as f64)
    }
}

/// An agent plus its update bookkeeping. A learner that never acts keeps
/// `env_steps == 0`.
pub struct Learner<T> {
    pub agent: CrlAgent<T>,
    grad_steps: usize,
    env_steps: usize,
    rng: ChaCha8Rng,
    epoch: EpochAccumulator,
}

impl<T: Scalar> Learner<T> {
    pub fn new(config: &TrainConfig, spec: &EnvSpec, seed: u64) -> Result<Self> {
        Ok(Self {
            agent: CrlAgent::new(config.agent_config(spec), seed)?,
            grad_steps: 0,
            env_steps: 0,
            rng: ChaCha8Rng::seed_from_u64(mix_seed(seed, LEARN_SALT)),
            epoch: EpochAccumulator::default(),
        })
    }

    pub fn grad_steps(&self) -> usize {
        self.grad_steps
    }

    /// Environment steps taken with this learner's policy.
    pub fn env_steps(&self) -> usize {
        self.env_steps
    }

    pub fn rng(&self) -> &ChaCha8Rng {
        &self.rng
    }

    /// Runs the gradient steps owed for `steps_since_warmup`.
    pub fn catch_up(&mut self, buffer: &ReplayBuffer, steps_since_warmup: usize, config: &TrainConfig) -> Result<usize> {
        let target = target_grad_steps(steps_since_warmup, config.utd_ratio);
        let mut done = 0;
        while self.grad_steps < target {
            let batch = buffer.sample_training_batch::<T>(config.batch_size, config.gamma, &mut self.rng)?;
            let stats = self.agent.update(&batch, &mut self.rng)?;
            for (name, v) in [("critic_loss", stats.critic_loss), ("actor_loss", stats.actor_loss)] {
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        entry: name.into(),
                        context: format!("gradient step {}", self.grad_steps),
                    });
                }
            }
            self.epoch.add(&stats);
            self.grad_steps += 1;
            done += 1;
        }
        Ok(done)
    }

    fn take_epoch(&mut self) -> EpochAccumulator {
        std::mem::take(&mut self.epoch)
    }
}

/// Parallel environments feeding one replay buffer.
pub struct Collector {
    venv: VecEnv,
    pub buffer: ReplayBuffer,
    env_steps: usize,
    warmup_at: Option<usize>,
    noise: ChaCha8Rng,
}

impl Collector {
    pub fn new(config: &TrainConfig, spec: Arc<EnvSpec>, seed: u64) -> Result<Self> {
        let buffer = ReplayBuffer::new(
            spec.state_dim,
            spec.action_dim,
            spec.goal_dims(),
            config.max_replay,
            config.min_replay,
        )?;
        Ok(Self {
            venv: VecEnv::new(spec, config.num_envs, mix_seed(seed, ENV_SALT), Phase::Train)?,
            buffer,
            env_steps: 0,
            warmup_at: None,
            noise: ChaCha8Rng::seed_from_u64(mix_seed(seed, NOISE_SALT)),
        })
    }

    pub fn env_steps(&self) -> usize {
        self.env_steps
    }

    /// Env steps since the buffer first reached its minimum size.
    pub fn steps_since_warmup(&self) -> Option<usize> {
        self.warmup_at.map(|w| self.env_steps - w)
    }

    pub fn venv(&self) -> &VecEnv {
        &self.venv
    }

    /// Steps every environment once with stochastic actions from `actor`.
    pub fn collect<T: Scalar>(&mut self, actor: &mut Learner<T>) -> Result<()> {
        let n = self.venv.len();
        let obs = self.venv.observations();
        let goals = self.venv.goal_matrix();
        let actions = actor.agent.act(&obs, &goals, n, Some(&mut self.noise))?;
        let ad = self.venv.spec().action_dim;
        let steps = self.venv.step(&actions)?;
        for (i, s) in steps.into_iter().enumerate() {
            self.buffer.append_step(&Transition {
                state: s.obs,
                action: actions[i * ad..(i + 1) * ad].to_vec(),
                next_state: s.next_obs,
                step_index: s.step_index,
                episode_id: s.episode_id,
            })?;
            if s.done {
                self.buffer.end_episode(s.episode_id);
            }
        }
        self.env_steps += n;
        actor.env_steps += n;
        if self.warmup_at.is_none() && self.buffer.is_ready() {
            self.warmup_at = Some(self.env_steps);
        }
        Ok(())
    }
}

/// Where a run writes its artifacts. Every path is optional.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Metrics JSONL, appended and flushed one record at a time.
    pub metrics_path: Option<PathBuf>,
    /// Final checkpoint.
    pub checkpoint_path: Option<PathBuf>,
    /// Checkpoint written when training aborts on a non-finite value.
    pub diagnostic_path: Option<PathBuf>,
}

impl RunOptions {
    /// Standard file names inside `dir`.
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            metrics_path: Some(dir.join("metrics.jsonl")),
            checkpoint_path: Some(dir.join("final.ckpt")),
            diagnostic_path: Some(dir.join("diagnostic.ckpt")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub records: Vec<MetricsRecord>,
    pub final_score: f64,
    pub env_steps: usize,
    pub grad_steps: usize,
    /// Grad steps owed minus grad steps done, after every collection step.
    pub max_utd_lag: usize,
    pub checkpoint: Checkpoint,
    /// Training (start, goal) pairs in reset order.
    pub resets: Vec<ResetRecord>,
}

struct MetricsSink(Option<BufWriter<File>>);

impl MetricsSink {
    fn open(path: Option<&Path>) -> Result<Self> {
        Ok(Self(match path {
            Some(p) => Some(BufWriter::new(OpenOptions::new().create(true).append(true).open(p)?)),
            None => None,
        }))
    }

    fn push(&mut self, r: &MetricsRecord) -> Result<()> {
        if let Some(w) = &mut self.0 {
            serde_json::to_writer(&mut *w, r)?;
            w.write_all(b"\n")?;
            w.flush()?;
        }
        Ok(())
    }
}

/// Deterministic evaluation episodes used by every epoch of a run.
pub fn eval_seed(config: &TrainConfig) -> u64 {
    mix_seed(config.seed, EVAL_SALT)
}

/// Trains one agent from scratch.
pub fn train(config: &TrainConfig, opts: &RunOptions) -> Result<TrainOutcome> {
    match config.precision {
        Precision::F32 => train_impl::<f32>(config, opts),
        Precision::F64 => train_impl::<f64>(config, opts),
    }
}

fn train_impl<T: Scalar>(config: &TrainConfig, opts: &RunOptions) -> Result<TrainOutcome> {
    config.validate()?;
    let spec = Arc::new(config.env_spec()?);
    let start = Instant::now();
    let mut collector = Collector::new(config, spec.clone(), config.seed)?;
    let mut learner = Learner::<T>::new(config, &spec, config.seed)?;
    let mut sink = MetricsSink::open(opts.metrics_path.as_deref())?;
    let epoch_len = config.eval_every();
    let mut records = Vec::new();
    let mut max_lag = 0;

    let record = |epoch: usize, collector: &Collector, learner: &mut Learner<T>| -> Result<MetricsRecord> {
        let acc = learner.take_epoch();
        let ev = rollout_eval(&mut learner.agent, &spec, config.eval_episodes, eval_seed(config))?;
        Ok(MetricsRecord {
            epoch,
            env_steps: collector.env_steps(),
            grad_steps: learner.grad_steps(),
            eval_time_near_goal: ev.mean,
            eval_stderr: ev.stderr,
            critic_loss: acc.mean(|s| s.critic_loss),
            actor_loss: acc.mean(|s| s.actor_loss),
            critic_grad_norm: acc.mean(|s| s.critic_grad_norm),
            actor_grad_norm: acc.mean(|s| s.actor_grad_norm),
            wall_seconds: start.elapsed().as_secs_f64(),
        })
    };

    let r0 = record(0, &collector, &mut learner)?;
    sink.push(&r0)?;
    records.push(r0);
    let mut epoch = 1;
    while collector.env_steps() < config.total_env_steps {
        let step = collector.collect(&mut learner).and_then(|_| match collector.steps_since_warmup() {
            Some(s) => learner.catch_up(&collector.buffer, s, config).map(|_| ()),
            None => Ok(()),
        });
        let step = step.and_then(|_| {
            if collector.env_steps() >= epoch * epoch_len || collector.env_steps() >= config.total_env_steps {
                if let Some(bad) = learner.agent.first_non_finite_param() {
                    return Err(Error::NonFinite {
                        entry: bad,
                        context: format!("epoch {epoch}"),
                    });
                }
            }
            Ok(())
        });
        if let Err(e) = step {
            if matches!(e, Error::NonFinite { .. }) {
                if let Some(p) = &opts.diagnostic_path {
                    let ck = Checkpoint::capture(&learner.agent, config, learner.rng());
                    if let Err(w) = ck.save(p) {
                        log::error!("could not write diagnostic checkpoint {}: {w}", p.display());
                    }
                }
            }
            return Err(e);
        }
        if let Some(s) = collector.steps_since_warmup() {
            max_lag = max_lag.max(target_grad_steps(s, config.utd_ratio) - learner.grad_steps());
        }
        if collector.env_steps() >= epoch * epoch_len || collector.env_steps() >= config.total_env_steps {
            let r = record(epoch, &collector, &mut learner)?;
            log::info!(
                "epoch {} env_steps {} grad_steps {} eval {:.1}",
                r.epoch,
                r.env_steps,
                r.grad_steps,
                r.eval_time_near_goal
            );
            sink.push(&r)?;
            records.push(r);
            while epoch * epoch_len <= collector.env_steps() {
                epoch += 1;
            }
        }
    }

    let checkpoint = Checkpoint::capture(&learner.agent, config, learner.rng());
    if let Some(p) = &opts.checkpoint_path {
        checkpoint.save(p)?;
    }
    Ok(TrainOutcome {
        final_score: final_score(&records),
        env_steps: collector.env_steps(),
        grad_steps: learner.grad_steps(),
        max_utd_lag: max_lag,
        records,
        checkpoint,
        resets: collector.venv().reset_log().to_vec(),
    })
}

/// Deterministic-policy evaluation of a checkpoint on a named environment,
/// using the checkpoint's episode length.
pub fn evaluate(checkpoint: &Checkpoint, env: &str, n: usize, seed: u64) -> Result<EvalStats> {
    let config = checkpoint.config()?;
    let mut spec = crate::envs::preset(env)?;
    if config.episode_length > 0 {
        spec.episode_length = config.episode_length;
    }
    evaluate_spec(checkpoint, &spec, n, seed)
}

/// Deterministic-policy evaluation of a checkpoint on an explicit spec.
pub fn evaluate_spec(checkpoint: &Checkpoint, spec: &EnvSpec, n: usize, seed: u64) -> Result<EvalStats> {
    if n == 0 {
        return Err(Error::Usage("evaluation needs at least one episode".into()));
    }
    let config = checkpoint.config()?;
    let env = &spec.name;
    let trained = config.env_spec()?;
    for (what, a, b) in [
        ("state_dim", trained.state_dim, spec.state_dim),
        ("action_dim", trained.action_dim, spec.action_dim),
        ("goal_dim", trained.goal_dim, spec.goal_dim),
    ] {
        if a != b {
            return Err(Error::CheckpointMismatch {
                entry: what.into(),
                detail: format!("checkpoint trained on `{}` ({a}), `{env}` has {b}", config.env),
            });
        }
    }
    match config.precision {
        Precision::F32 => rollout_eval(&mut checkpoint.build_agent::<f32>()?, spec, n, seed),
        Precision::F64 => rollout_eval(&mut checkpoint.build_agent::<f64>()?, spec, n, seed),
    }
}
