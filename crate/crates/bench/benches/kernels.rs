use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use drsan::data::{gen_synthetic, samples_from, SceneConfig};
use drsan::model::{predict, ModelConfig};
use drsan::stn::{affine_grid, bilinear_sample, inverse_scatter, AffineTransform};
use drsan::tensor::kernels::{conv2d_backward, conv2d_forward, ConvGeometry};
use drsan::train::{init_params, train, TrainConfig};
use drsan::{Float, SplitMix64, Tensor};

fn random(len: usize, seed: u64) -> Vec<Float> {
    let mut rng = SplitMix64::new(seed);
    (0..len).map(|_| rng.uniform(-1.0, 1.0) as Float).collect()
}

fn conv(c: &mut Criterion) {
    // first GFE layer of the large column at 64×64
    let g = ConvGeometry {
        batch: 1,
        in_channels: 1,
        height: 64,
        width: 64,
        out_channels: 8,
        kernel_h: 9,
        kernel_w: 9,
        stride: 1,
        pad: 4,
    };
    let input = random(64 * 64, 1);
    let weight = random(8 * 81, 2);
    let bias = vec![0.0; 8];
    c.bench_function("conv2d_forward 1x64x64 k9 c8", |b| {
        b.iter(|| conv2d_forward(black_box(&input), black_box(&weight), Some(&bias), &g))
    });
    let grad = random(8 * 64 * 64, 3);
    c.bench_function("conv2d_backward 1x64x64 k9 c8", |b| {
        b.iter(|| conv2d_backward(black_box(&input), black_box(&weight), black_box(&grad), &g, true))
    });

    let deep = ConvGeometry {
        in_channels: 16,
        height: 16,
        width: 16,
        out_channels: 16,
        kernel_h: 7,
        kernel_w: 7,
        pad: 3,
        ..g
    };
    let input = random(16 * 16 * 16, 4);
    let weight = random(16 * 16 * 49, 5);
    c.bench_function("conv2d_forward 16x16x16 k7 c16", |b| {
        b.iter(|| conv2d_forward(black_box(&input), black_box(&weight), None, &deep))
    });
}

fn sampler(c: &mut Criterion) {
    let map = Tensor::new(&[1, 64, 64], random(64 * 64, 6)).unwrap();
    let t = AffineTransform::raw([0.7, -0.2, 0.1, 0.25, 0.6, -0.05]);
    let grid = affine_grid(&t, 32, 32).unwrap();
    c.bench_function("bilinear_sample 64x64 -> 32x32", |b| {
        b.iter(|| bilinear_sample(black_box(&map), black_box(&grid)).unwrap())
    });
    let residual = Tensor::new(&[1, 32, 32], random(32 * 32, 7)).unwrap();
    c.bench_function("inverse_scatter 32x32 -> 64x64", |b| {
        b.iter(|| inverse_scatter(black_box(&residual), &t, 64, 64).unwrap())
    });
}

fn network(c: &mut Criterion) {
    let cfg = ModelConfig::new(64, 64);
    let params = init_params(&cfg, 7);
    let image = Tensor::new(&[1, 1, 64, 64], random(64 * 64, 8)).unwrap();
    let mut group = c.benchmark_group("drsan 64x64");
    group.sample_size(10);
    group.bench_function("forward n=4", |b| {
        b.iter(|| predict(black_box(&params), &cfg, black_box(&image), 4).unwrap())
    });
    let scenes = gen_synthetic(&SceneConfig::default(), 1).unwrap();
    let samples = samples_from(&scenes, 4.0, 1).unwrap();
    let tc = TrainConfig {
        iterations: 1,
        ..TrainConfig::default()
    };
    group.bench_function("train iteration n=4", |b| {
        b.iter(|| train(&cfg, &tc, black_box(&samples), |_| {}).unwrap())
    });
    group.finish();
}

criterion_group!(benches, conv, sampler, network);
criterion_main!(benches);
