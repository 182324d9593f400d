//! Shared-buffer study: one collector acts and learns, passive learners of
//! other depths train from the same buffer at the same update ratio and are
//! only ever evaluated, never used to act during training.

use std::sync::Arc;

use crate::crl::mix_seed;
use crate::envs::rollout_eval;
use crate::error::Result;
use crate::scalar::{Precision, Scalar};
use crate::table::{fmt_f64, Table};
use crate::trainer::{eval_seed, Collector, Learner, TrainConfig, FINAL_EPOCHS};

use super::{base_hash, cached_cell, CellResult, StudyOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct RoleResult {
    pub role: &'static str,
    pub depth: usize,
    pub final_score: f64,
    /// Environment steps taken with this network's policy.
    pub env_steps: usize,
    pub grad_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollectorRun {
    /// Collector first, then learners in the requested order.
    pub roles: Vec<RoleResult>,
    pub buffer_env_steps: usize,
}

fn tail_mean(v: &[f64]) -> f64 {
    let t = &v[v.len().saturating_sub(FINAL_EPOCHS)..];
    if t.is_empty() {
        f64::NAN
    } else {
        t.iter().sum::<f64>() / t.len() as f64
    }
}

fn run_impl<T: Scalar>(config: &TrainConfig, learner_depths: &[usize]) -> Result<CollectorRun> {
    config.validate()?;
    let spec = Arc::new(config.env_spec()?);
    let mut collector = Collector::new(config, spec.clone(), config.seed)?;
    let mut nets: Vec<(&'static str, usize, Learner<T>)> = vec![(
        "collector",
        config.actor_depth,
        Learner::new(config, &spec, config.seed)?,
    )];
    for (i, &d) in learner_depths.iter().enumerate() {
        let mut c = config.clone();
        c.actor_depth = d;
        c.critic_depth = d;
        c.validate()?;
        nets.push(("learner", d, Learner::new(&c, &spec, mix_seed(config.seed, 1000 + i as u64))?));
    }
    let mut evals: Vec<Vec<f64>> = vec![Vec::new(); nets.len()];
    let epoch_len = config.eval_every();
    let mut epoch = 1;
    while collector.env_steps() < config.total_env_steps {
        collector.collect(&mut nets[0].2)?;
        if let Some(s) = collector.steps_since_warmup() {
            for (_, _, l) in nets.iter_mut() {
                l.catch_up(&collector.buffer, s, config)?;
            }
        }
        if collector.env_steps() >= epoch * epoch_len || collector.env_steps() >= config.total_env_steps {
            for ((_, _, l), e) in nets.iter_mut().zip(evals.iter_mut()) {
                e.push(rollout_eval(&mut l.agent, &spec, config.eval_episodes, eval_seed(config))?.mean);
            }
            while epoch * epoch_len <= collector.env_steps() {
                epoch += 1;
            }
        }
    }
    Ok(CollectorRun {
        buffer_env_steps: collector.env_steps(),
        roles: nets
            .iter()
            .zip(&evals)
            .map(|((role, depth, l), e)| RoleResult {
                role,
                depth: *depth,
                final_score: tail_mean(e),
                env_steps: l.env_steps(),
                grad_steps: l.grad_steps(),
            })
            .collect(),
    })
}

/// One shared-buffer run with the collector at `config`'s depth.
pub fn collector_run(config: &TrainConfig, learner_depths: &[usize]) -> Result<CollectorRun> {
    match config.precision {
        Precision::F32 => run_impl::<f32>(config, learner_depths),
        Precision::F64 => run_impl::<f64>(config, learner_depths),
    }
}

/// Rows `(collector_depth, role, depth, seed, ...)` for every collector
/// depth and seed.
pub fn run_collector_experiment(opts: &StudyOptions, collector_depths: &[usize], learner_depths: &[usize]) -> Result<Table> {
    let base = opts.base_config();
    let swept = ["actor_depth", "critic_depth"];
    let expected = base_hash(&base, &base, &swept)?;
    let mut table = Table::new(&[
        "collector_depth",
        "role",
        "depth",
        "seed",
        "final_score",
        "env_steps",
        "grad_steps",
        "budget",
        "base_hash",
    ]);
    let tag = format!(
        "collector-l{}",
        learner_depths.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("_")
    );
    for &cd in collector_depths {
        for &seed in &opts.seeds {
            let mut c = base.clone();
            c.actor_depth = cd;
            c.critic_depth = cd;
            c.seed = seed;
            c.validate()?;
            let r = cached_cell(opts.out_dir.as_deref(), &tag, &c, || match collector_run(&c, learner_depths) {
                Ok(run) => CellResult {
                    final_score: run.roles[0].final_score,
                    env_steps: run.buffer_env_steps,
                    grad_steps: run.roles[0].grad_steps,
                    error: None,
                    extra: run
                        .roles
                        .iter()
                        .enumerate()
                        .flat_map(|(i, r)| {
                            [
                                (format!("score{i}"), Some(r.final_score)),
                                (format!("env_steps{i}"), Some(r.env_steps as f64)),
                                (format!("grad_steps{i}"), Some(r.grad_steps as f64)),
                            ]
                        })
                        .collect(),
                },
                Err(e) => {
                    log::warn!("collector depth {cd} seed {seed} aborted: {e}");
                    CellResult::aborted(&e)
                }
            })?;
            let roles = std::iter::once(("collector", cd)).chain(learner_depths.iter().map(|&d| ("learner", d)));
            for (i, (role, depth)) in roles.enumerate() {
                let int = |k: &str| {
                    let v = r.extra(&format!("{k}{i}"));
                    if v.is_nan() {
                        "NaN".to_string()
                    } else {
                        (v as usize).to_string()
                    }
                };
                table.push(vec![
                    cd.to_string(),
                    role.to_string(),
                    depth.to_string(),
                    seed.to_string(),
                    fmt_f64(r.extra(&format!("score{i}"))),
                    int("env_steps"),
                    int("grad_steps"),
                    opts.budget.to_string(),
                    expected.clone(),
                ])?;
            }
        }
    }
    if let Some(d) = opts.out_dir.as_deref() {
        std::fs::create_dir_all(d)?;
        table.save(&d.join("collector.csv"))?;
    }
    Ok(table)
}
