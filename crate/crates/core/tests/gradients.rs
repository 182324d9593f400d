mod common;

use common::{actor_fd_error, infonce_fd_error, max_fd_error, random_matrix, rng, setup, FD_STEP, FD_TOL};
use deepcrl::crl::actor_loss_and_grad;
use deepcrl::nn::{GradMode, Layer, Network, ParameterStore, RealArray};
use deepcrl::{build_network, Error, NetworkSpec};

#[test]
fn single_dense_squared_loss_matches_closed_form() {
    let mut r = rng(0);
    let x = random_matrix(5, 3, 1.0, &mut r);
    let y = random_matrix(5, 2, 1.0, &mut r);
    let mut store = ParameterStore::new();
    let w = store.insert("w", random_matrix(3, 2, 1.0, &mut r)).unwrap();
    let b = store.insert("b", RealArray::zeros(&[2])).unwrap();
    let mut net = Network::new(
        store,
        vec![Layer::Dense {
            weight: w,
            bias: b,
            fan_in: 3,
            fan_out: 2,
        }],
        3,
        2,
        1e-6,
    );
    // loss = ½‖xW − y‖² → upstream = xW − y, grad_W = xᵀ(xW − y)
    let out = net.forward_train(&x).unwrap();
    let mut resid = out.clone();
    resid.data_mut().iter_mut().zip(y.data()).for_each(|(a, b)| *a -= b);
    net.backward(&resid, GradMode::Accumulate).unwrap();
    let grad = &net.params.at(w).grad;
    for i in 0..3 {
        for j in 0..2 {
            let expect: f64 = (0..5).map(|n| x.row(n)[i] * resid.row(n)[j]).sum();
            assert!((grad.data()[i * 2 + j] - expect).abs() < 1e-12);
        }
    }
}

#[test]
fn constant_loss_gives_zero_gradients() {
    let spec = NetworkSpec::new(3, 8, 8, 2);
    let mut net = build_network::<f64>(&spec, 1).unwrap();
    let x = random_matrix(4, 3, 1.0, &mut rng(1));
    net.forward_train(&x).unwrap();
    net.backward(&RealArray::zeros(&[4, 2]), GradMode::Accumulate).unwrap();
    assert!(net.params().iter().all(|(_, e)| e.grad.data().iter().all(|&g| g == 0.0)));
}

#[test]
fn backward_without_forward_is_usage_error() {
    let mut net = build_network::<f64>(&NetworkSpec::new(3, 8, 4, 2), 1).unwrap();
    let err = net.backward(&RealArray::zeros(&[1, 2]), GradMode::Accumulate).unwrap_err();
    assert!(matches!(err, Error::Usage(_)));
    // the tape is consumed by the first backward
    let x = random_matrix(1, 3, 1.0, &mut rng(2));
    net.forward_train(&x).unwrap();
    net.backward(&RealArray::zeros(&[1, 2]), GradMode::Accumulate).unwrap();
    assert!(net.backward(&RealArray::zeros(&[1, 2]), GradMode::Accumulate).is_err());
}

fn linear_probe_loss(net: &deepcrl::BuiltNetwork<f64>, x: &RealArray<f64>, probe: &RealArray<f64>) -> f64 {
    let out = net.forward(x).unwrap();
    out.data().iter().zip(probe.data()).map(|(a, b)| a * b).sum()
}

fn network_fd(depth: usize, width: usize, seed: u64) -> f64 {
    let spec = NetworkSpec::new(5, width, depth, 3);
    let mut net = build_network::<f64>(&spec, seed).unwrap();
    let mut r = rng(seed + 100);
    let x = random_matrix(6, 5, 1.0, &mut r);
    let probe = random_matrix(6, 3, 1.0, &mut r);
    net.forward_train(&x).unwrap();
    net.backward(&probe, GradMode::Accumulate).unwrap();
    let (err, at) = max_fd_error(
        &mut net,
        |n| n.params_mut(),
        |n| linear_probe_loss(n, &x, &probe),
        FD_STEP,
    );
    assert!(err <= FD_TOL, "depth {depth} width {width}: {err:e} at {at}");
    err
}

#[test]
fn depth8_width8_network_matches_finite_differences() {
    network_fd(8, 8, 3);
}

#[test]
fn network_gradients_over_depth_width_grid() {
    for depth in [4, 16] {
        for width in [8, 32] {
            network_fd(depth, width, depth as u64 * 7 + width as u64);
        }
    }
}

#[test]
fn input_gradient_matches_finite_differences() {
    let spec = NetworkSpec::new(4, 8, 8, 2);
    let mut net = build_network::<f64>(&spec, 5).unwrap();
    let mut r = rng(5);
    let x = random_matrix(3, 4, 1.0, &mut r);
    let probe = random_matrix(3, 2, 1.0, &mut r);
    net.forward_train(&x).unwrap();
    let dx = net.backward(&probe, GradMode::InputOnly).unwrap();
    assert!(net.params().iter().all(|(_, e)| e.grad.data().iter().all(|&g| g == 0.0)));
    for k in 0..x.len() {
        let mut up = x.clone();
        up.data_mut()[k] += FD_STEP;
        let mut down = x.clone();
        down.data_mut()[k] -= FD_STEP;
        let fd = (linear_probe_loss(&net, &up, &probe) - linear_probe_loss(&net, &down, &probe)) / (2.0 * FD_STEP);
        assert!(common::rel_err(dx.data()[k], fd) < FD_TOL);
    }
}

#[test]
fn infonce_gradients_on_tiny_critic() {
    let (e, at) = infonce_fd_error(4, 8, 11);
    assert!(e <= FD_TOL, "{e:e} at {at}");
}

#[test]
fn actor_gradients_on_tiny_actor() {
    for (seed, alpha) in [(12, 0.001), (13, 0.5)] {
        let (e, at) = actor_fd_error(4, 4, seed, alpha);
        assert!(e <= FD_TOL, "alpha {alpha}: {e:e} at {at}");
    }
}

#[test]
fn actor_gradient_vanishes_for_constant_critic_without_entropy() {
    let mut st = setup(4, 8, 14);
    // A critic whose sa-encoder ignores its input: zero every dense weight.
    for (_, e) in st.critic.sa_encoder.params_mut().iter_mut() {
        e.value.fill(0.0);
    }
    actor_loss_and_grad(&mut st.policy, &mut st.critic, &st.batch.states, &st.batch.goals, &st.noise, 0.0).unwrap();
    assert!(st.policy.actor.params().grad_norm() == 0.0);
}
