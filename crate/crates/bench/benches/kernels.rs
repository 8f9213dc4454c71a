use criterion::{criterion_group, criterion_main, Criterion};
use lbs_core::apps::{build_completion, synthetic_image, CompletionParams};
use lbs_core::denoise::WaveletShrink;
use lbs_core::linops::{haar_dwt, ConvKernel, Convolution, LinearMap, Mask};
use lbs_core::prox::prox_lp;
use lbs_core::splitting::fbs_solve;
use lbs_core::{lbs_solve, ImageDenoiser, LbsConfig, ResidualConvNet, SeededRng, SolverConfig};
use std::hint::black_box;

fn transforms(c: &mut Criterion) {
    let img = synthetic_image(64, 64, 1);
    let conv = Convolution::new(ConvKernel::box_blur(9).unwrap(), 64, 64).unwrap();
    c.bench_function("fft_conv_64x64_box9", |b| b.iter(|| conv.forward(black_box(&img)).unwrap()));
    c.bench_function("haar_dwt_64x64_3lvl", |b| b.iter(|| haar_dwt(black_box(&img), 3).unwrap()));
    let coeffs = SeededRng::new(2).uniform_vector(&[64, 64], -1.0, 1.0);
    c.bench_function("prox_lp_p0.8_4096", |b| b.iter(|| prox_lp(black_box(&coeffs), 0.05, 0.8).unwrap()));
}

fn denoiser(c: &mut Criterion) {
    let img = synthetic_image(64, 64, 3);
    let net = ResidualConvNet::new(&[1, 8, 8, 1], 0).unwrap();
    c.bench_function("cnn_1-8-8-1_64x64", |b| b.iter(|| net.denoise(black_box(&img)).unwrap()));
}

fn solvers(c: &mut Criterion) {
    let gt = synthetic_image(64, 64, 4);
    let mask = Mask::random(&mut SeededRng::new(4), &[64, 64], 0.4).unwrap();
    let cp = build_completion(&gt, &mask, &CompletionParams::default()).unwrap();
    let p = cp.split_problem();
    let x0 = cp.initial_point().unwrap();
    let rho = 0.95 / p.lipschitz();
    let iters = 20;
    let sc = SolverConfig {
        rho,
        max_iters: iters,
        tol: 1e-300,
        ..SolverConfig::default()
    };
    let lc = LbsConfig {
        c: 50.0,
        rho,
        max_iters: iters,
        tol: 1e-300,
        ..LbsConfig::default()
    };
    let t_d = cp.lift_denoiser(WaveletShrink { tau: 0.05, levels: 1 });
    let mut g = c.benchmark_group("completion_64x64_20_iters");
    g.sample_size(20);
    g.bench_function("fbs", |b| b.iter(|| fbs_solve(p, &x0, &sc, None).unwrap()));
    g.bench_function("lbs_wavelet", |b| b.iter(|| lbs_solve(p, &x0, &t_d, &lc, None).unwrap()));
    g.finish();
}

criterion_group!(benches, transforms, denoiser, solvers);
criterion_main!(benches);
