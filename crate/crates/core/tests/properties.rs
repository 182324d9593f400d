mod common;

use std::f64::consts::PI;

use deepcrl::crl::{energy_matrix, infonce_loss, CrlAgent, TrainingBatch};
use deepcrl::envs::{preset, EnvState, GoalSpec, Phase};
use deepcrl::nn::{layer_norm, GradMode, RealArray, LN_EPS};
use deepcrl::replay::{ReplayBuffer, Transition};
use deepcrl::trainer::{train, MetricsRecord, RunOptions, TrainConfig};
use deepcrl::viz::{export_q_grid, pca_project};
use deepcrl::{build_network, Error, NetworkSpec};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> RealArray<f64> {
    RealArray::matrix(rows, cols, data).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn layer_norm_standardizes_rows(width in 8usize..64, seed in any::<u64>(), scale in 1e-2f64..1e3) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..width).map(|_| r.random_range(-1.0..1.0) * scale).collect();
        let out = layer_norm(
            &matrix(1, width, x),
            &RealArray::full(&[width], 1.0),
            &RealArray::zeros(&[width]),
            LN_EPS,
        ).unwrap();
        let mean = out.data().iter().sum::<f64>() / width as f64;
        let var = out.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / width as f64;
        prop_assert!(mean.abs() <= 1e-5);
        prop_assert!((var - 1.0).abs() <= 1e-3, "var {}", var);
    }

    #[test]
    fn infonce_row_shift(b in 2usize..12, seed in any::<u64>(), row in 0usize..12, shift in -5.0f64..5.0) {
        let row = row % b;
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let e: Vec<f64> = (0..b * b).map(|_| r.random_range(-4.0..0.0)).collect();
        let mut shifted = e.clone();
        for v in &mut shifted[row * b..(row + 1) * b] {
            *v += shift;
        }
        let (base, moved) = (matrix(b, b, e), matrix(b, b, shifted));
        let plain = infonce_loss(&base, 0.0).unwrap();
        prop_assert!(plain >= 0.0);
        prop_assert!((plain - infonce_loss(&moved, 0.0).unwrap()).abs() < 1e-10);
        if shift.abs() > 0.1 {
            let d = infonce_loss(&base, 0.1).unwrap() - infonce_loss(&moved, 0.1).unwrap();
            prop_assert!(d.abs() > 1e-6);
        }
    }

    #[test]
    fn pca_spectrum_is_rotation_invariant(seed in any::<u64>(), angles in prop::array::uniform3(-PI..PI)) {
        let (n, d) = (20, 3);
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..n * d).map(|i| r.random_range(-1.0..1.0) * (1 + i % d) as f64).collect();
        let rot = rotation(angles);
        let rotated: Vec<f64> = data
            .chunks(d)
            .flat_map(|p| (0..d).map(|i| (0..d).map(|k| rot[i][k] * p[k]).sum::<f64>()).collect::<Vec<_>>())
            .collect();
        let a = pca_project(&data, n, d, d).unwrap();
        let b = pca_project(&rotated, n, d, d).unwrap();
        for (x, y) in a.explained_all.iter().zip(&b.explained_all) {
            prop_assert!((x - y).abs() < 1e-10);
        }
        prop_assert!((a.explained_all.iter().sum::<f64>() - 1.0).abs() < 1e-8);
        // the sign convention pins the projected coordinates as well
        for (x, y) in a.coords.iter().zip(&b.coords) {
            prop_assert!((x - y).abs() < 1e-8);
        }
    }

    #[test]
    fn replay_rows_are_future_and_capacity_holds(
        lens in prop::collection::vec(1usize..40, 1..30),
        capacity in 30usize..200,
        seed in any::<u64>(),
    ) {
        let mut buf = ReplayBuffer::new(2, 1, vec![0, 1], capacity, 1).unwrap();
        for (id, &len) in lens.iter().enumerate() {
            for t in 0..len {
                let s = vec![id as f64, t as f64];
                buf.append_step(&Transition {
                    state: s.clone(),
                    action: vec![0.0],
                    next_state: vec![id as f64, t as f64 + 1.0],
                    step_index: t,
                    episode_id: id as u64,
                }).unwrap();
            }
            buf.end_episode(id as u64);
            prop_assert!(buf.len() <= capacity);
            for eid in buf.episode_ids() {
                prop_assert_eq!(buf.episode_len(eid), Some(lens[eid as usize]));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match buf.sample_training_batch::<f64>(64, 0.9, &mut rng) {
            Ok(batch) => {
                for i in 0..64 {
                    let (s, g) = (batch.states.row(i), batch.goals.row(i));
                    prop_assert_eq!(s[0], g[0], "goal from another episode");
                    prop_assert!(g[1] > s[1], "goal not strictly in the future");
                }
            }
            // every stored episode is a single step: no strictly later state exists
            Err(Error::Usage(_)) | Err(Error::BufferBelowMinimum { .. }) => {}
            Err(e) => prop_assert!(false, "unexpected {e}"),
        }
    }

    #[test]
    fn point_steps_never_enter_walls(seed in any::<u64>(), maze in 0usize..4) {
        let name = ["point_umaze", "point_u4maze", "point_u5maze", "point_bigmaze"][maze];
        let spec = preset(name).unwrap();
        let layout = spec.layout().unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let (mut s, g) = spec.reset(seed, Phase::Train).unwrap();
        let mut near = 0;
        for _ in 0..2000 {
            // large actions exercise the clipping path too
            let a = [r.random_range(-3.0..3.0), r.random_range(-3.0..3.0)];
            let next = spec.step(&s, &a, &g).unwrap();
            prop_assert_eq!(&next, &spec.step(&s, &a, &g).unwrap());
            prop_assert!(!layout.in_wall_interior(next.state.pos), "{:?} -> {:?}", s.pos, next.state.pos);
            near += next.near_goal as usize;
            s = next.state;
        }
        prop_assert!(near <= 2000);
    }
}

fn rotation([a, b, c]: [f64; 3]) -> [[f64; 3]; 3] {
    let rz = [[a.cos(), -a.sin(), 0.0], [a.sin(), a.cos(), 0.0], [0.0, 0.0, 1.0]];
    let ry = [[b.cos(), 0.0, b.sin()], [0.0, 1.0, 0.0], [-b.sin(), 0.0, b.cos()]];
    let rx = [[1.0, 0.0, 0.0], [0.0, c.cos(), -c.sin()], [0.0, c.sin(), c.cos()]];
    let mul = |p: [[f64; 3]; 3], q: [[f64; 3]; 3]| {
        let mut m = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = (0..3).map(|k| p[i][k] * q[k][j]).sum();
            }
        }
        m
    };
    mul(mul(rz, ry), rx)
}

#[test]
fn state_at_goal_is_near() {
    for name in ["point_reach", "point_umaze", "arm_reach"] {
        let spec = preset(name).unwrap();
        let (s, _) = spec.reset(3, Phase::Eval).unwrap();
        let goal = GoalSpec { g: spec.goal_of(&s) };
        assert!(spec.is_near(&s, &goal), "{name}");
        let still = EnvState { t: 0, ..s.clone() };
        assert!(spec.is_near(&still, &goal));
    }
}

#[test]
fn forward_and_backward_are_bit_identical() {
    let spec = NetworkSpec::new(6, 16, 8, 4);
    let run = || {
        let mut net = build_network::<f32>(&spec, 42).unwrap();
        let mut r = common::rng(1);
        let x = RealArray::<f32>::from_f64(&[5, 6], &(0..30).map(|_| r.random_range(-1.0..1.0)).collect::<Vec<_>>()).unwrap();
        let y = net.forward_train(&x).unwrap();
        let dx = net.backward(&y, GradMode::Accumulate).unwrap();
        let grads: Vec<Vec<f32>> = net.params().iter().map(|(_, e)| e.grad.data().to_vec()).collect();
        (y.into_data(), dx.into_data(), grads)
    };
    assert_eq!(run(), run());
}

#[test]
fn critic_ranks_true_goal_first_on_clustered_data() {
    let spec = preset("point_reach").unwrap();
    let mut c = TrainConfig::desk();
    c.width = 32;
    c.repr_dim = 16;
    c.critic_lr = 1e-3;
    let mut agent = CrlAgent::<f64>::new(c.agent_config(&spec), 7).unwrap();
    // 40 well-separated clusters; each goal sits next to its state
    let n = 40;
    let mut r = common::rng(3);
    let mut states = Vec::new();
    let mut goals = Vec::new();
    for i in 0..n {
        let (x, y) = ((i % 8) as f64 * 1.2 + 0.5, (i / 8) as f64 * 1.8 + 0.5);
        states.extend([x, y, r.random_range(-0.1..0.1), r.random_range(-0.1..0.1)]);
        goals.extend([x + r.random_range(-0.05..0.05), y + r.random_range(-0.05..0.05)]);
    }
    let batch = TrainingBatch {
        states: matrix(n, 4, states),
        actions: RealArray::zeros(&[n, 2]),
        goals: matrix(n, 2, goals),
    };
    let mut rng = common::rng(4);
    for _ in 0..400 {
        agent.update(&batch, &mut rng).unwrap();
    }
    let e = energy_matrix(
        &agent.critic.embed_sa(&batch.states, &batch.actions).unwrap(),
        &agent.critic.embed_goal(&batch.goals).unwrap(),
    )
    .unwrap();
    let hits = (0..n)
        .filter(|&i| {
            let row = e.row(i);
            (0..n).all(|j| j == i || row[j] < row[i])
        })
        .count();
    assert!(hits as f64 >= 0.95 * n as f64, "{hits}/{n}");
}

#[test]
fn q_grid_is_pure() {
    let spec = preset("point_umaze").unwrap();
    let mut c = TrainConfig::desk();
    c.width = 16;
    let agent = CrlAgent::<f32>::new(c.agent_config(&spec), 1).unwrap();
    let a = export_q_grid(&agent, &spec, [1.5, 1.5], 7, Some(&[0.2, -0.1])).unwrap();
    let b = export_q_grid(&agent, &spec, [1.5, 1.5], 7, Some(&[0.2, -0.1])).unwrap();
    assert_eq!(format!("{a:?}"), format!("{b:?}"));
}

#[test]
fn metrics_stay_parseable_after_abort() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = TrainConfig::desk();
    c.width = 8;
    c.repr_dim = 4;
    c.batch_size = 16;
    c.num_envs = 4;
    c.episode_length = 20;
    c.min_replay = 40;
    c.eval_every = 40;
    c.eval_episodes = 2;
    c.utd_ratio = 4;
    c.total_env_steps = 4000;
    c.actor_lr = 1e30;
    c.critic_lr = 1e30;
    c.grad_clip = 0.0;
    let opts = RunOptions::in_dir(dir.path());
    let err = train(&c, &opts).unwrap_err();
    assert!(matches!(err, Error::NonFinite { .. }), "{err}");
    assert!(dir.path().join("diagnostic.ckpt").exists());
    let text = std::fs::read_to_string(dir.path().join("metrics.jsonl")).unwrap();
    let records: Vec<MetricsRecord> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(!records.is_empty());
    assert!(records.windows(2).all(|w| w[0].epoch + 1 == w[1].epoch));
    // a second run appends rather than truncating
    let _ = train(&c, &opts);
    let again = std::fs::read_to_string(dir.path().join("metrics.jsonl")).unwrap();
    assert!(again.starts_with(&text) && again.len() > text.len());
}

#[test]
fn two_equal_episodes_split_rows_evenly() {
    let mut buf = ReplayBuffer::new(1, 1, vec![0], 1000, 1).unwrap();
    for id in 0..2u64 {
        for t in 0..50 {
            buf.append_step(&Transition {
                state: vec![id as f64],
                action: vec![0.0],
                next_state: vec![id as f64],
                step_index: t,
                episode_id: id,
            })
            .unwrap();
        }
        buf.end_episode(id);
    }
    let mut rng = common::rng(8);
    let (batches, b) = (100_000, 32);
    let mut first = 0usize;
    for _ in 0..batches {
        first += buf.sample_rows(b, 0.99, &mut rng).unwrap().iter().filter(|r| r.episode_id == 0).count();
    }
    let share = first as f64 / (batches * b) as f64;
    assert!((share - 0.5).abs() <= 0.01, "{share}");
}
