//! Sequential versus rayon-parallel timings of the hot kernels.
//!
//! "sequential" runs inside a one-thread pool, "parallel" uses every
//! available core. Building with `--no-default-features` turns both into the
//! plain sequential fallback.

use cnnfd::net::{assemble_input_on, build_model, ArchitectureConfig, ModelParameters};
use cnnfd::par;
use cnnfd::tensor::{ops, PaddingSpec};
use cnnfd::train::{train_step, Adam, AdamConfig};
use cnnfd::Tensor;
use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

fn variants() -> [(&'static str, usize); 2] {
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    [("sequential", 1), ("parallel", cores)]
}

fn conv(c: &mut Criterion) {
    let x = Tensor::<f32>::from_fn(vec![4, 64, 64, 8], |i| ((i % 17) as f32 - 8.0) * 0.1);
    let k = Tensor::<f32>::from_fn(vec![3, 3, 3, 8, 8], |i| ((i % 7) as f32 - 3.0) * 0.05);
    let b = Tensor::<f32>::zeros(vec![8]);
    let spec = PaddingSpec::annulus([3, 3, 3]);
    let mut g = c.benchmark_group("conv3d_4x64x64x8");
    for (name, threads) in variants() {
        g.bench_function(name, |bench| {
            par::with_threads(threads, || bench.iter(|| black_box(ops::conv3d(&x, &k, &b, &spec).unwrap())))
        });
    }
    g.finish();
}

fn step(c: &mut Criterion) {
    let extents = [4, 32, 32];
    let cfg = ArchitectureConfig::default();
    let inputs: Vec<Tensor<f32>> = [[0.2, 1.0, 1.8], [1.5, 0.4, 0.9]]
        .iter()
        .map(|&cl| assemble_input_on(cl, extents).unwrap().tensor)
        .collect();
    let input = Tensor::stack(&inputs).unwrap();
    let target = Tensor::<f32>::from_fn(vec![2, 4, 32, 32, 6], |i| ((i % 13) as f32 - 6.0) * 0.1);
    let mut g = c.benchmark_group("train_step_batch2_4x32x32");
    g.sample_size(10);
    for (name, threads) in variants() {
        let mut model: ModelParameters<f32> = build_model(&cfg, 0).unwrap();
        let mut opt = Adam::new(AdamConfig::default(), model.params());
        g.bench_function(name, |bench| {
            par::with_threads(threads, || {
                bench.iter(|| black_box(train_step(&mut model, &mut opt, &input, &target, 1e-4).unwrap()))
            })
        });
    }
    g.finish();
}

criterion_group!(benches, conv, step);
criterion_main!(benches);
