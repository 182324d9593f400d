use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use deepcrl::crl::{energy_matrix, infonce_forward_backward, EnergyMatrix};
use deepcrl::envs::{preset, Phase};
use deepcrl::nn::GradMode;
use deepcrl::{build_network, NetworkSpec};
use deepcrl_bench::{filled_buffer, random_matrix};

const BATCH: usize = 256;
const WIDTH: usize = 64;

fn networks(c: &mut Criterion) {
    let mut g = c.benchmark_group("network");
    g.sample_size(20);
    let x = random_matrix(BATCH, 8, 1);
    for depth in [4, 16, 64] {
        let mut net = build_network::<f32>(&NetworkSpec::new(8, WIDTH, depth, 64), 0).unwrap();
        g.bench_with_input(BenchmarkId::new("forward", depth), &depth, |b, _| b.iter(|| net.forward(&x).unwrap()));
        let up = random_matrix(BATCH, 64, 2);
        g.bench_with_input(BenchmarkId::new("forward_backward", depth), &depth, |b, _| {
            b.iter(|| {
                net.forward_train(&x).unwrap();
                net.backward(&up, GradMode::Accumulate).unwrap()
            })
        });
    }
    g.finish();
}

fn losses(c: &mut Criterion) {
    let mut g = c.benchmark_group("loss");
    let phi = random_matrix(BATCH, 64, 3);
    let psi = random_matrix(BATCH, 64, 4);
    g.bench_function("energy_matrix", |b| b.iter(|| energy_matrix(&phi, &psi).unwrap()));
    let e = energy_matrix(&phi, &psi).unwrap();
    g.bench_function("infonce_grad", |b| b.iter(|| infonce_forward_backward(&e, 0.1, true).unwrap()));
    let em = EnergyMatrix::compute(&phi, &psi).unwrap();
    let (_, up) = infonce_forward_backward(&e, 0.1, true).unwrap();
    let up = up.unwrap();
    g.bench_function("energy_backward", |b| b.iter(|| em.backward(&phi, &psi, &up).unwrap()));
    g.finish();
}

fn environments(c: &mut Criterion) {
    let mut g = c.benchmark_group("env");
    for name in ["point_reach", "point_bigmaze", "arm_reach"] {
        let spec = preset(name).unwrap();
        let (s, goal) = spec.reset(0, Phase::Train).unwrap();
        g.bench_function(BenchmarkId::new("step", name), |b| {
            b.iter(|| spec.step(&s, &[0.7, -0.3], &goal).unwrap())
        });
    }
    let (_, buf) = filled_buffer("point_umaze", 50, 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    g.bench_function("replay_sample_256", |b| {
        b.iter(|| buf.sample_training_batch::<f32>(BATCH, 0.99, &mut rng).unwrap())
    });
    g.finish();
}

criterion_group!(benches, networks, losses, environments);
criterion_main!(benches);
