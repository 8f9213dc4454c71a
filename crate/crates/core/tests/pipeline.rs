use approx::assert_relative_eq;
use lbs_core::apps::{build_completion, build_deblur, psnr, synthetic_image, CompletionParams, DeblurParams};
use lbs_core::denoise::{NoiseOp, WaveletShrink};
use lbs_core::linops::{convolve, ConvKernel, Mask};
use lbs_core::numerics::gaussian_noise;
use lbs_core::splitting::fbs_solve;
use lbs_core::trace::{fallback_fraction, trace_diagnostics};
use lbs_core::{lbs_solve, LbsConfig, SeededRng, SolverConfig};
use proptest::prelude::*;

#[test]
fn completion_restores_a_masked_image() {
    let gt = synthetic_image(32, 32, 4);
    let mask = Mask::random(&mut SeededRng::new(4).substream("mask"), &[32, 32], 0.4).unwrap();
    let cp = build_completion(&gt, &mask, &CompletionParams::default()).unwrap();
    let p = cp.split_problem();
    let cfg = LbsConfig {
        c: 50.0,
        rho: 0.95 / p.lipschitz(),
        max_iters: 2000,
        ..LbsConfig::default()
    };
    let t_d = cp.lift_denoiser(WaveletShrink { tau: 0.05, levels: 1 });
    let out = lbs_solve(p, &cp.initial_point().unwrap(), &t_d, &cfg, Some(&gt)).unwrap();
    assert!(out.converged());
    assert!(trace_diagnostics(&out.trace).is_monotone());
    let restored = cp.image(&out.solution).unwrap();
    let before = psnr(cp.observed(), &gt, 1.0).unwrap();
    let after = psnr(&restored, &gt, 1.0).unwrap();
    assert!(after > before + 3.0, "{before} -> {after}");
}

#[test]
fn adversarial_operator_degrades_to_the_model_step() {
    let gt = synthetic_image(32, 32, 5);
    let y = convolve(&ConvKernel::box_blur(5).unwrap(), &gt)
        .unwrap()
        .add(&gaussian_noise(&mut SeededRng::new(5), &[32, 32], 0.01).unwrap())
        .unwrap();
    let dp = build_deblur(&y, &ConvKernel::box_blur(5).unwrap(), &DeblurParams::default()).unwrap();
    let p = dp.split_problem();
    let rho = 0.95 / p.lipschitz();
    let cfg = LbsConfig {
        c: 0.4 * p.geometry().modulus() / 2.0,
        rho,
        max_iters: 300,
        ..LbsConfig::default()
    };
    let t_d = NoiseOp { amplitude: 1.0, seed: 1 };
    let x0 = dp.initial_point().unwrap();
    let lbs = lbs_solve(p, &x0, &t_d, &cfg, None).unwrap();
    let n = lbs.iterations();
    assert_eq!(fallback_fraction(&lbs.trace, 0, n), 1.0);
    let fbs = fbs_solve(
        p,
        &x0,
        &SolverConfig {
            rho,
            max_iters: 300,
            ..SolverConfig::default()
        },
        None,
    )
    .unwrap();
    assert_relative_eq!(lbs.trace.final_psi(), fbs.trace.final_psi(), max_relative = 1e-3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn synthetic_images_stay_in_range(seed in any::<u64>(), h in 4usize..40, w in 4usize..40) {
        let img = synthetic_image(h, w, seed);
        prop_assert_eq!(img.shape(), &[h, w]);
        prop_assert!(img.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
