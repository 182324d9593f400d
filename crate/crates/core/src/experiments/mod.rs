//! Scripted scaling studies. Each study expands into cells (one training
//! run per configuration and seed), caches finished cells on disk so an
//! interrupted study resumes where it stopped, and emits one CSV.

mod collector;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::arch::param_count;
use crate::envs::Separation;
use crate::error::{Error, Result};
use crate::table::{fmt_f64, Table};
use crate::trainer::{evaluate, evaluate_spec, train, RunOptions, TrainConfig};

pub use collector::{collector_run, run_collector_experiment, CollectorRun, RoleResult};

/// Default depth ladder.
pub const DEPTH_LADDER: [usize; 5] = [4, 8, 16, 32, 64];
/// Evaluation separations of the stitching study.
pub const EVAL_SEPARATIONS: [usize; 3] = [4, 5, 6];

/// Settings shared by every cell of a study.
#[derive(Debug, Clone)]
pub struct StudyOptions {
    /// Preset for every key the study does not sweep.
    pub base: TrainConfig,
    pub seeds: Vec<u64>,
    /// Env steps per cell.
    pub budget: usize,
    /// Cell cache and CSV destination; `None` keeps everything in memory.
    pub out_dir: Option<PathBuf>,
}

impl StudyOptions {
    pub fn new(base: TrainConfig, seeds: Vec<u64>, budget: usize) -> Self {
        Self {
            base,
            seeds,
            budget,
            out_dir: None,
        }
    }

    fn base_config(&self) -> TrainConfig {
        let mut c = self.base.clone();
        c.total_env_steps = self.budget;
        c
    }
}

/// Outcome of one cell. Aborted runs carry a NaN score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    #[serde(with = "nan_as_null")]
    pub final_score: f64,
    pub env_steps: usize,
    pub grad_steps: usize,
    pub error: Option<String>,
    /// Extra named values (per-bucket evaluations, per-role results).
    pub extra: Vec<(String, Option<f64>)>,
}

// JSON has no NaN; store it as null.
mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_nan() {
            s.serialize_none()
        } else {
            s.serialize_some(v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

impl CellResult {
    pub fn extra(&self, key: &str) -> f64 {
        self.extra
            .iter()
            .find(|(k, _)| k == key)
            .and_then(|p| p.1)
            .unwrap_or(f64::NAN)
    }

    pub fn aborted(e: &Error) -> Self {
        Self {
            final_score: f64::NAN,
            env_steps: 0,
            grad_steps: 0,
            error: Some(e.to_string()),
            extra: Vec::new(),
        }
    }
}

/// Hex SHA-256 of the canonical config text with the seed cleared.
pub fn config_hash(config: &TrainConfig) -> String {
    let mut c = config.clone();
    c.seed = 0;
    hex::encode(Sha256::digest(c.to_text().as_bytes()))
}

/// Hash of `config` after resetting the swept keys to the base values.
/// Every cell of a study must produce the study's base hash.
pub fn base_hash(config: &TrainConfig, base: &TrainConfig, swept: &[&str]) -> Result<String> {
    let mut c = config.clone();
    for k in swept {
        let v = base.get(k).ok_or_else(|| Error::Config(format!("unknown swept key `{k}`")))?;
        c.set(k, &v)?;
    }
    Ok(config_hash(&c))
}

fn cache_path(dir: &Path, tag: &str, config: &TrainConfig) -> PathBuf {
    dir.join("cells").join(format!("{tag}-{}-s{}.json", &config_hash(config)[..16], config.seed))
}

/// Runs `f` unless a cached result for `(tag, config hash, seed)` exists.
pub fn cached_cell(
    out_dir: Option<&Path>,
    tag: &str,
    config: &TrainConfig,
    f: impl FnOnce() -> CellResult,
) -> Result<CellResult> {
    let path = out_dir.map(|d| cache_path(d, tag, config));
    if let Some(p) = &path {
        if p.exists() {
            let text = std::fs::read_to_string(p)?;
            let r: CellResult = serde_json::from_str(&text)?;
            log::info!("cell {} cached", p.display());
            return Ok(r);
        }
    }
    let r = f();
    if let Some(p) = &path {
        std::fs::create_dir_all(p.parent().expect("cells dir"))?;
        let tmp = p.with_extension("tmp");
        std::fs::write(&tmp, serde_json::to_string(&r)?)?;
        std::fs::rename(tmp, p)?;
    }
    Ok(r)
}

fn train_cell(config: &TrainConfig, out_dir: Option<&Path>, tag: &str) -> Result<CellResult> {
    cached_cell(out_dir, tag, config, || {
        let opts = match out_dir {
            Some(d) => {
                let run = d.join("runs").join(format!("{tag}-{}-s{}", &config_hash(config)[..16], config.seed));
                match std::fs::create_dir_all(&run) {
                    Ok(()) => RunOptions::in_dir(&run),
                    Err(_) => RunOptions::default(),
                }
            }
            None => RunOptions::default(),
        };
        match train(config, &opts) {
            Ok(out) => CellResult {
                final_score: out.final_score,
                env_steps: out.env_steps,
                grad_steps: out.grad_steps,
                error: None,
                extra: Vec::new(),
            },
            Err(e) => {
                log::warn!("cell {tag} seed {} aborted: {e}", config.seed);
                CellResult::aborted(&e)
            }
        }
    })
}

fn save_table(out_dir: Option<&Path>, name: &str, t: &Table) -> Result<()> {
    if let Some(d) = out_dir {
        std::fs::create_dir_all(d)?;
        t.save(&d.join(name))?;
    }
    Ok(())
}

fn check_depth(d: usize) -> Result<()> {
    if d == 0 || d % 4 != 0 {
        return Err(Error::Config(format!("depth {d} must be a positive multiple of 4")));
    }
    Ok(())
}

/// Total parameters of the actor and both critic encoders.
pub fn agent_param_count(config: &TrainConfig) -> Result<usize> {
    let spec = config.env_spec()?;
    let a = config.agent_config(&spec);
    Ok(param_count(&a.actor_spec()) + param_count(&a.sa_spec()) + param_count(&a.goal_spec()))
}

struct Grid<'a> {
    opts: &'a StudyOptions,
    tag: &'a str,
    swept: &'a [&'a str],
    axes: &'a [&'a str],
    extra_cols: &'a [&'a str],
}

impl Grid<'_> {
    /// Runs every `(axis values, overrides)` cell for every seed; rows are
    /// sorted by the axis values (numerically) then seed.
    fn run(&self, cells: Vec<Vec<(&str, String)>>, extra: impl Fn(&TrainConfig, &CellResult) -> Result<Vec<String>>) -> Result<Table> {
        let base = self.opts.base_config();
        let mut header: Vec<&str> = self.axes.to_vec();
        header.push("seed");
        header.extend_from_slice(self.extra_cols);
        header.extend_from_slice(&["final_score", "env_steps", "grad_steps", "budget", "base_hash"]);
        let mut table = Table::new(&header);
        let expected_hash = base_hash(&base, &base, self.swept)?;
        let mut keyed = Vec::new();
        for cell in &cells {
            for &seed in &self.opts.seeds {
                let mut c = base.clone();
                for (k, v) in cell {
                    c.set(k, v)?;
                }
                c.seed = seed;
                c.validate()?;
                let h = base_hash(&c, &base, self.swept)?;
                if h != expected_hash {
                    return Err(Error::Config(format!("cell {cell:?} changes keys outside {:?}", self.swept)));
                }
                let r = train_cell(&c, self.opts.out_dir.as_deref(), self.tag)?;
                let mut row: Vec<String> = cell.iter().map(|(_, v)| v.clone()).collect();
                row.push(seed.to_string());
                row.extend(extra(&c, &r)?);
                row.extend([
                    fmt_f64(r.final_score),
                    r.env_steps.to_string(),
                    r.grad_steps.to_string(),
                    self.opts.budget.to_string(),
                    h.clone(),
                ]);
                let key: Vec<f64> = cell.iter().map(|(_, v)| v.parse().unwrap_or(f64::NAN)).collect();
                keyed.push((key, seed, row));
            }
        }
        keyed.sort_by(|a, b| {
            a.0.iter()
                .zip(&b.0)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.1.cmp(&b.1))
        });
        for (_, _, row) in keyed {
            table.push(row)?;
        }
        save_table(self.opts.out_dir.as_deref(), &format!("{}.csv", self.tag), &table)?;
        Ok(table)
    }
}

/// One run per (depth, seed); actor and critic share the depth.
pub fn run_depth_sweep(opts: &StudyOptions, depths: &[usize]) -> Result<Table> {
    depths.iter().try_for_each(|&d| check_depth(d))?;
    let cells = depths.iter().map(|d| vec![("depth", d.to_string())]).collect();
    Grid {
        opts,
        tag: "depth_sweep",
        swept: &["actor_depth", "critic_depth"],
        axes: &["depth"],
        extra_cols: &[],
    }
    .run(cells, |_, _| Ok(vec![]))
}

/// Width ladder at depth 4 plus the depth ladder at `ladder_width`; each
/// (width, depth) cell appears once.
pub fn run_width_depth_pareto(opts: &StudyOptions, widths: &[usize], depths: &[usize], ladder_width: usize) -> Result<Table> {
    depths.iter().try_for_each(|&d| check_depth(d))?;
    let mut pairs: Vec<(usize, usize)> = widths.iter().map(|&w| (w, 4)).collect();
    pairs.extend(depths.iter().map(|&d| (ladder_width, d)));
    pairs.sort();
    pairs.dedup();
    let cells = pairs
        .iter()
        .map(|(w, d)| vec![("width", w.to_string()), ("depth", d.to_string())])
        .collect();
    Grid {
        opts,
        tag: "pareto",
        swept: &["width", "actor_depth", "critic_depth"],
        axes: &["width", "depth"],
        extra_cols: &["param_count"],
    }
    .run(cells, |c, _| Ok(vec![agent_param_count(c)?.to_string()]))
}

/// Full grid over independent actor and critic depths.
pub fn run_actor_critic_grid(opts: &StudyOptions, actor_depths: &[usize], critic_depths: &[usize]) -> Result<Table> {
    actor_depths.iter().chain(critic_depths).try_for_each(|&d| check_depth(d))?;
    let cells = actor_depths
        .iter()
        .flat_map(|a| {
            critic_depths
                .iter()
                .map(move |c| vec![("actor_depth", a.to_string()), ("critic_depth", c.to_string())])
        })
        .collect();
    Grid {
        opts,
        tag: "actor_critic_grid",
        swept: &["actor_depth", "critic_depth"],
        axes: &["actor_depth", "critic_depth"],
        extra_cols: &[],
    }
    .run(cells, |_, _| Ok(vec![]))
}

/// Grid over (batch size, depth).
pub fn run_batch_depth_grid(opts: &StudyOptions, batch_sizes: &[usize], depths: &[usize]) -> Result<Table> {
    depths.iter().try_for_each(|&d| check_depth(d))?;
    let cells = batch_sizes
        .iter()
        .flat_map(|b| depths.iter().map(move |d| vec![("batch_size", b.to_string()), ("depth", d.to_string())]))
        .collect();
    Grid {
        opts,
        tag: "batch_grid",
        swept: &["batch_size", "actor_depth", "critic_depth"],
        axes: &["batch_size", "depth"],
        extra_cols: &[],
    }
    .run(cells, |_, _| Ok(vec![]))
}

/// Stitching study: train on pairs at most [`crate::envs::GENERALIZATION_TRAIN_SEP`]
/// apart, then evaluate the final policy on held-out pairs at each
/// separation in `eval_seps`. Rows are (depth, eval_sep, seed).
pub fn run_generalization(opts: &StudyOptions, depths: &[usize], eval_seps: &[usize]) -> Result<Table> {
    depths.iter().try_for_each(|&d| check_depth(d))?;
    for &s in eval_seps {
        if (s as f64) <= crate::envs::GENERALIZATION_TRAIN_SEP {
            return Err(Error::Config(format!(
                "evaluation separation {s} overlaps the training pairs (<= {})",
                crate::envs::GENERALIZATION_TRAIN_SEP
            )));
        }
    }
    let mut base = opts.base_config();
    base.env = "point_umaze_stitch".into();
    let expected = base_hash(&base, &base, &["actor_depth", "critic_depth"])?;
    let mut table = Table::new(&[
        "depth",
        "eval_sep",
        "seed",
        "score",
        "max_train_sep",
        "env_steps",
        "budget",
        "base_hash",
    ]);
    let out_dir = opts.out_dir.as_deref();
    for &d in depths {
        for &seed in &opts.seeds {
            let mut c = base.clone();
            c.actor_depth = d;
            c.critic_depth = d;
            c.seed = seed;
            c.validate()?;
            let r = cached_cell(out_dir, "generalization", &c, || match generalization_cell(&c, eval_seps) {
                Ok(r) => r,
                Err(e) => {
                    log::warn!("generalization depth {d} seed {seed} aborted: {e}");
                    CellResult::aborted(&e)
                }
            })?;
            let max_sep = r.extra("max_train_sep");
            for &s in eval_seps {
                let score = r.extra(&format!("sep{s}"));
                table.push(vec![
                    d.to_string(),
                    s.to_string(),
                    seed.to_string(),
                    fmt_f64(score),
                    fmt_f64(max_sep),
                    r.env_steps.to_string(),
                    opts.budget.to_string(),
                    expected.clone(),
                ])?;
            }
        }
    }
    save_table(out_dir, "generalization.csv", &table)?;
    Ok(table)
}

/// Largest geodesic cell separation among logged training pairs.
pub fn max_train_separation(spec: &crate::envs::EnvSpec, resets: &[crate::envs::ResetRecord]) -> Result<f64> {
    let layout = spec
        .layout()
        .ok_or_else(|| Error::Unsupported(format!("{} has no maze layout", spec.name)))?;
    let mut worst = 0.0f64;
    for r in resets {
        let (a, b) = (layout.cell_of(r.start), layout.cell_of(r.goal));
        let d = match (a, b) {
            (Some(a), Some(b)) => layout.separation(a, b).unwrap_or(f64::INFINITY),
            _ => f64::INFINITY,
        };
        worst = worst.max(d);
    }
    Ok(worst)
}

fn generalization_cell(c: &TrainConfig, eval_seps: &[usize]) -> Result<CellResult> {
    let out = train(c, &RunOptions::default())?;
    let spec = c.env_spec()?;
    let mut extra = vec![("max_train_sep".to_string(), Some(max_train_separation(&spec, &out.resets)?))];
    for &s in eval_seps {
        let spec = spec.with_eval_separation(Separation::Exactly(s as f64));
        let score = evaluate_spec(&out.checkpoint, &spec, c.eval_episodes, crate::trainer::eval_seed(c))?.mean;
        extra.push((format!("sep{s}"), Some(score)));
    }
    Ok(CellResult {
        final_score: out.final_score,
        env_steps: out.env_steps,
        grad_steps: out.grad_steps,
        error: None,
        extra,
    })
}

/// Mean score per value of `group_col`, ignoring NaN rows.
pub fn group_means(table: &Table, group_col: &str, value_col: &str) -> Result<Vec<(String, f64, usize)>> {
    let g = table.column(group_col)?;
    let v = table.f64_column(value_col)?;
    let mut out: Vec<(String, f64, usize)> = Vec::new();
    for (row, val) in table.rows.iter().zip(v) {
        if val.is_nan() {
            continue;
        }
        match out.iter_mut().find(|(k, _, _)| *k == row[g]) {
            Some(e) => {
                e.1 += val;
                e.2 += 1;
            }
            None => out.push((row[g].clone(), val, 1)),
        }
    }
    for e in out.iter_mut() {
        e.1 /= e.2 as f64;
    }
    Ok(out)
}

/// Score of a checkpoint on a named preset; re-exported for the CLI.
pub fn evaluate_checkpoint(path: &Path, env: &str, n: usize, seed: u64) -> Result<f64> {
    let ck = crate::trainer::Checkpoint::load(path)?;
    Ok(evaluate(&ck, env, n, seed)?.mean)
}
