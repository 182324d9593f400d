use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use deepcrl::envs::{preset, rollout_trace, EnvSpec, TraceStep};
use deepcrl::experiments::{
    run_actor_critic_grid, run_batch_depth_grid, run_collector_experiment, run_depth_sweep, run_generalization,
    run_width_depth_pareto, StudyOptions, DEPTH_LADDER, EVAL_SEPARATIONS,
};
use deepcrl::nn::RealArray;
use deepcrl::table::Table;
use deepcrl::trainer::{evaluate, train, Checkpoint, RunOptions, TrainConfig};
use deepcrl::viz::{
    embedding_pca, emit_plot, export_q_grid, pca_table, q_grid_table, residual_norm_profile, residual_norm_table,
    trace_table, AxesSpec, PlotKind,
};
use deepcrl::{crl::CrlAgent, Precision, Scalar};

#[derive(Parser)]
#[command(name = "deepcrl", version, about = "Contrastive RL with deep residual networks")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Key-value config file applied on top of the desk preset. Without it,
    /// `--env` selects the per-environment preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    env: Option<String>,
    /// Further `--key value` overrides of any config key.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
    overrides: Vec<String>,
}

#[derive(Args, Clone)]
struct StudyArgs {
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',', default_values_t = [0u64, 1, 2])]
    seeds: Vec<u64>,
    /// Env steps per cell.
    #[arg(long, default_value_t = 200_000)]
    budget: usize,
    #[arg(long, default_value = "results")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct CheckpointArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Environment; defaults to the one the checkpoint was trained on.
    #[arg(long)]
    env: Option<String>,
    /// Evaluation seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train one agent and write metrics.jsonl and final.ckpt.
    Train {
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Evaluate a checkpoint with deterministic actions.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        env: Option<String>,
        #[arg(long, default_value_t = 32)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Final score per (depth, seed).
    SweepDepth {
        #[arg(long, value_delimiter = ',', default_values_t = DEPTH_LADDER)]
        depths: Vec<usize>,
        #[command(flatten)]
        study: StudyArgs,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Width at fixed depth against depth at fixed width.
    Pareto {
        #[arg(long, value_delimiter = ',', default_values_t = [256usize, 512, 1024])]
        widths: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = DEPTH_LADDER)]
        depths: Vec<usize>,
        /// Width of the depth ladder.
        #[arg(long, default_value_t = 256)]
        ladder_width: usize,
        #[command(flatten)]
        study: StudyArgs,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Independent actor and critic depths.
    ActorCriticGrid {
        #[arg(long, value_delimiter = ',', default_values_t = DEPTH_LADDER)]
        actor_depths: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = DEPTH_LADDER)]
        critic_depths: Vec<usize>,
        #[command(flatten)]
        study: StudyArgs,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Batch size against depth.
    BatchGrid {
        #[arg(long, value_delimiter = ',', default_values_t = [256usize, 512, 1024])]
        batch_sizes: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = [4usize, 16, 64])]
        depths: Vec<usize>,
        #[command(flatten)]
        study: StudyArgs,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// One collector and passive learners sharing a replay buffer.
    Collector {
        #[arg(long, value_delimiter = ',', default_values_t = [32usize, 4])]
        collector_depths: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = [4usize, 32])]
        learner_depths: Vec<usize>,
        #[command(flatten)]
        study: StudyArgs,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Train on near pairs of the stitching maze, evaluate on far pairs.
    Generalization {
        #[arg(long, value_delimiter = ',', default_values_t = [4usize, 16, 64])]
        depths: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = EVAL_SEPARATIONS)]
        eval_seps: Vec<usize>,
        #[command(flatten)]
        study: StudyArgs,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Critic energy over a grid of positions.
    QGrid {
        #[command(flatten)]
        ck: CheckpointArgs,
        /// Goal position `x,y`.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        goal: Vec<f64>,
        #[arg(long, default_value_t = 40)]
        resolution: usize,
        /// Fixed action; zero when absent.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        action: Option<Vec<f64>>,
    },
    /// PCA of state-action embeddings along one evaluation episode.
    Pca {
        #[command(flatten)]
        ck: CheckpointArgs,
        #[arg(long, default_value_t = 2)]
        k: usize,
    },
    /// Residual-branch norms per block on one evaluation episode.
    Resnorms {
        #[command(flatten)]
        ck: CheckpointArgs,
    },
    /// Dump one evaluation episode as CSV.
    Rollout {
        #[command(flatten)]
        ck: CheckpointArgs,
    },
    /// Render a CSV as an SVG line plot or heatmap.
    Plot {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long, default_value = "line")]
        kind: PlotKind,
        #[arg(long)]
        x: String,
        #[arg(long)]
        y: String,
        #[arg(long)]
        group: Option<String>,
        #[arg(long)]
        value: Option<String>,
        #[arg(long)]
        title: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Pairs `--key value` or `--key=value` tokens.
fn parse_overrides(tokens: &[String]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut it = tokens.iter();
    while let Some(tok) = it.next() {
        let Some(key) = tok.strip_prefix("--") else {
            bail!("expected `--key value`, found `{tok}`");
        };
        match key.split_once('=') {
            Some((k, v)) => out.push((k.to_string(), v.to_string())),
            None => {
                let v = it.next().with_context(|| format!("missing value for --{key}"))?;
                out.push((key.to_string(), v.clone()));
            }
        }
    }
    Ok(out)
}

fn build_config(args: &ConfigArgs) -> Result<TrainConfig> {
    let mut c = match &args.config {
        Some(p) => TrainConfig::load(p)?,
        None => match &args.env {
            Some(env) => TrainConfig::desk_for(env)?,
            None => TrainConfig::desk(),
        },
    };
    if let Some(env) = &args.env {
        c.set("env", env)?;
    }
    for (k, v) in parse_overrides(&args.overrides)? {
        c.set(&k.replace('-', "_"), &v)?;
    }
    c.validate()?;
    Ok(c)
}

fn study(args: &StudyArgs, cfg: &ConfigArgs) -> Result<StudyOptions> {
    let mut o = StudyOptions::new(build_config(cfg)?, args.seeds.clone(), args.budget);
    std::fs::create_dir_all(&args.out_dir)?;
    o.out_dir = Some(args.out_dir.clone());
    Ok(o)
}

fn emit(table: &Table, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => {
            table.save(p)?;
            log::info!("wrote {}", p.display());
        }
        None => print!("{}", table.to_csv_string()),
    }
    Ok(())
}

fn load_spec(ck: &Checkpoint, env: Option<&str>) -> Result<EnvSpec> {
    Ok(match env {
        Some(e) => preset(e)?,
        None => ck.config()?.env_spec()?,
    })
}

/// Per-precision work on a checkpoint's agent.
trait AgentTask {
    type Out;
    fn run<T: Scalar>(self, agent: &mut CrlAgent<T>) -> Result<Self::Out>;
}

fn with_agent<W: AgentTask>(ck: &Checkpoint, work: W) -> Result<W::Out> {
    match ck.config()?.precision {
        Precision::F32 => work.run(&mut ck.build_agent::<f32>()?),
        Precision::F64 => work.run(&mut ck.build_agent::<f64>()?),
    }
}

struct Analysis<'a> {
    spec: &'a EnvSpec,
    seed: u64,
    what: &'a Cmd,
}

fn trace_batch<T: Scalar>(steps: &[TraceStep]) -> Result<[RealArray<T>; 3]> {
    let n = steps.len();
    let cat = |f: &dyn Fn(&TraceStep) -> Vec<f64>| steps.iter().flat_map(f).collect::<Vec<f64>>();
    let s = cat(&|t| t.obs.clone());
    let a = cat(&|t| t.action.clone());
    let g = cat(&|t| t.goal.to_vec());
    Ok([
        RealArray::from_f64(&[n, s.len() / n], &s)?,
        RealArray::from_f64(&[n, a.len() / n], &a)?,
        RealArray::from_f64(&[n, 2], &g)?,
    ])
}

impl AgentTask for Analysis<'_> {
    type Out = Table;

    fn run<T: Scalar>(self, agent: &mut CrlAgent<T>) -> Result<Table> {
        if let Cmd::QGrid { goal, resolution, action, .. } = self.what {
            if goal.len() != 2 {
                bail!("--goal takes two coordinates `x,y`, got {}", goal.len());
            }
            let cells = export_q_grid(agent, self.spec, [goal[0], goal[1]], *resolution, action.as_deref())?;
            return Ok(q_grid_table(&cells));
        }
        let steps = rollout_trace(agent, self.spec, self.seed)?;
        Ok(match self.what {
            Cmd::Pca { k, .. } => {
                let p = embedding_pca(agent, &steps, *k)?;
                log::info!("explained variance {:?}", p.explained);
                pca_table(&p)
            }
            Cmd::Resnorms { .. } => {
                let [s, a, g] = trace_batch::<T>(&steps)?;
                residual_norm_table(&residual_norm_profile(agent, &s, &a, &g)?)
            }
            _ => trace_table(&steps),
        })
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let table = match &cli.cmd {
        Cmd::Train { out_dir, cfg } => {
            let c = build_config(cfg)?;
            std::fs::create_dir_all(out_dir)?;
            std::fs::write(out_dir.join("config.txt"), c.to_text())?;
            let out = train(&c, &RunOptions::in_dir(out_dir))?;
            println!(
                "final_score {:.3} env_steps {} grad_steps {}",
                out.final_score, out.env_steps, out.grad_steps
            );
            return Ok(());
        }
        Cmd::Evaluate { checkpoint, env, episodes, seed } => {
            let ck = Checkpoint::load(checkpoint)?;
            let env = match env {
                Some(e) => e.clone(),
                None => ck.config()?.env,
            };
            let st = evaluate(&ck, &env, *episodes, *seed)?;
            println!("time_near_goal {:.3} stderr {:.3}", st.mean, st.stderr);
            return Ok(());
        }
        Cmd::SweepDepth { depths, study: s, cfg } => run_depth_sweep(&study(s, cfg)?, depths)?,
        Cmd::Pareto { widths, depths, ladder_width, study: s, cfg } => {
            run_width_depth_pareto(&study(s, cfg)?, widths, depths, *ladder_width)?
        }
        Cmd::ActorCriticGrid { actor_depths, critic_depths, study: s, cfg } => {
            run_actor_critic_grid(&study(s, cfg)?, actor_depths, critic_depths)?
        }
        Cmd::BatchGrid { batch_sizes, depths, study: s, cfg } => {
            run_batch_depth_grid(&study(s, cfg)?, batch_sizes, depths)?
        }
        Cmd::Collector { collector_depths, learner_depths, study: s, cfg } => {
            run_collector_experiment(&study(s, cfg)?, collector_depths, learner_depths)?
        }
        Cmd::Generalization { depths, eval_seps, study: s, cfg } => {
            run_generalization(&study(s, cfg)?, depths, eval_seps)?
        }
        Cmd::QGrid { ck, .. } | Cmd::Pca { ck, .. } | Cmd::Resnorms { ck } | Cmd::Rollout { ck } => {
            let checkpoint = Checkpoint::load(&ck.checkpoint)?;
            let spec = load_spec(&checkpoint, ck.env.as_deref())?;
            let table = with_agent(&checkpoint, Analysis { spec: &spec, seed: ck.seed, what: &cli.cmd })?;
            return emit(&table, ck.out.as_deref());
        }
        Cmd::Plot { csv, kind, x, y, group, value, title, out } => {
            let table = Table::load(csv)?;
            let axes = AxesSpec {
                x: x.clone(),
                y: y.clone(),
                group: group.clone(),
                value: value.clone(),
                title: title.clone(),
            };
            let svg = emit_plot(&table, *kind, &axes)?;
            match out {
                Some(p) => std::fs::write(p, svg)?,
                None => print!("{svg}"),
            }
            return Ok(());
        }
    };
    print!("{}", table.to_csv_string());
    Ok(())
}
