use crate::error::{Error, Result};

use super::{ArmPhysics, EnvKind, EnvSpec, GridLayout, PairSampler, Physics, PointPhysics, Region, Separation};

/// Largest geodesic start-goal separation seen in stitching training.
pub const GENERALIZATION_TRAIN_SEP: f64 = 3.0;

const POINT_REACH: &str = include_str!("../../mazes/point_reach.txt");
const U_MAZE: &str = include_str!("../../mazes/u_maze.txt");
const U4_MAZE: &str = include_str!("../../mazes/u4_maze.txt");
const U5_MAZE: &str = include_str!("../../mazes/u5_maze.txt");
const BIG_MAZE: &str = include_str!("../../mazes/big_maze.txt");

const NAMES: [&str; 7] = [
    "point_reach",
    "point_umaze",
    "point_u4maze",
    "point_u5maze",
    "point_bigmaze",
    "point_umaze_stitch",
    "arm_reach",
];

pub fn preset_names() -> &'static [&'static str] {
    &NAMES
}

fn cells(cells: Vec<super::CellIndex>, jitter: f64) -> Region {
    Region::Cells { cells, jitter }
}

fn point_env(name: &str, text: &str, episode_length: usize, open: bool) -> Result<EnvSpec> {
    let layout = GridLayout::parse(text, 1.0)?;
    let free = layout.free_cells();
    let (train, eval) = if open {
        let s = PairSampler {
            start: cells(free.clone(), 0.5),
            goal: cells(free, 0.5),
            separation: None,
        };
        (s.clone(), s)
    } else {
        // train over the whole maze, evaluate from the start region to the goal region
        let train = PairSampler {
            start: cells(free.clone(), 0.25),
            goal: cells(free, 0.25),
            separation: None,
        };
        let eval = PairSampler {
            start: cells(layout.start_cells(), 0.25),
            goal: cells(layout.goal_cells(), 0.25),
            separation: None,
        };
        (train, eval)
    };
    Ok(EnvSpec {
        name: name.to_string(),
        kind: EnvKind::Point,
        state_dim: 4,
        action_dim: 2,
        goal_dim: 2,
        action_bound: 1.0,
        goal_radius: 0.5,
        episode_length,
        walls: layout.wall_rects(),
        train_sampler: train,
        eval_sampler: eval,
        physics: Physics::Point {
            physics: PointPhysics::default(),
            layout,
        },
    })
}

/// Builds a named environment preset.
pub fn preset(name: &str) -> Result<EnvSpec> {
    match name {
        "point_reach" => point_env(name, POINT_REACH, 200, true),
        "point_umaze" => point_env(name, U_MAZE, 200, false),
        "point_u4maze" => point_env(name, U4_MAZE, 300, false),
        "point_u5maze" => point_env(name, U5_MAZE, 400, false),
        "point_bigmaze" => point_env(name, BIG_MAZE, 500, false),
        "point_umaze_stitch" => {
            let mut s = point_env(name, U_MAZE, 200, false)?;
            s.train_sampler.separation = Some(Separation::AtMost(GENERALIZATION_TRAIN_SEP));
            s.eval_sampler.separation = Some(Separation::AtLeast(GENERALIZATION_TRAIN_SEP + 1.0));
            Ok(s)
        }
        "arm_reach" => Ok(EnvSpec {
            name: name.to_string(),
            kind: EnvKind::Arm,
            state_dim: 6,
            action_dim: 2,
            goal_dim: 2,
            action_bound: 1.0,
            goal_radius: 0.25,
            episode_length: 200,
            walls: Vec::new(),
            train_sampler: PairSampler {
                start: Region::ArmWorkspace,
                goal: Region::ArmWorkspace,
                separation: None,
            },
            eval_sampler: PairSampler {
                start: Region::ArmWorkspace,
                goal: Region::ArmWorkspace,
                separation: None,
            },
            physics: Physics::Arm(ArmPhysics::default()),
        }),
        other => Err(Error::Config(format!(
            "unknown environment `{other}` (known: {})",
            NAMES.join(", ")
        ))),
    }
}
