//! `selftest`: the invariant suite run against the installed build.

use lbs_core::denoise::{NoiseOp, WaveletShrink};
use lbs_core::linops::{
    adjoint_mismatch, haar_dwt, haar_idwt, ConvKernel, Convolution, GradH, GradV, HaarAnalysis,
    HaarSynthesis, LinearMap, Mask,
};
use lbs_core::prox::prox_lp_scalar;
use lbs_core::trace::trace_diagnostics;
use lbs_core::{lbs_solve, BlockVector, DenoiserOp, ResidualConvNet, SeededRng, SplitProblem};

use crate::config::{ExperimentConfig, Task};
use crate::error::CliResult;
use crate::run::{build_instance, lbs_config, step_size};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

fn adjoints() -> CheckResult {
    let mut rng = SeededRng::new(11);
    let maps: Vec<(&str, Box<dyn LinearMap>)> = vec![
        ("mask", Box::new(Mask::random(&mut rng, &[16, 16], 0.4).expect("valid ratio"))),
        ("conv", Box::new(Convolution::new(ConvKernel::box_blur(5).expect("odd size"), 16, 16).expect("fits"))),
        ("grad_h", Box::new(GradH::new(16, 16))),
        ("grad_v", Box::new(GradV::new(16, 16))),
        ("haar", Box::new(HaarAnalysis::new(16, 16, 2).expect("divisible"))),
        ("ihaar", Box::new(HaarSynthesis::new(16, 16, 2).expect("divisible"))),
    ];
    let mut worst: f64 = 0.0;
    for (_, m) in &maps {
        for _ in 0..5 {
            worst = worst.max(adjoint_mismatch(m.as_ref(), &mut rng).unwrap_or(f64::INFINITY));
        }
    }
    let x = rng.uniform_vector(&[32, 32], 0.0, 1.0);
    let round = haar_dwt(&x, 3)
        .and_then(|c| haar_idwt(&c, 3))
        .and_then(|r| r.sub(&x))
        .map_or(f64::INFINITY, |d| d.data().iter().fold(0.0, |a: f64, v| a.max(v.abs())));
    CheckResult::new(
        "adjoints",
        worst <= 1e-10 && round <= 1e-10,
        format!("worst adjoint mismatch {worst:.1e}, haar round trip {round:.1e}"),
    )
}

/// Scalar objective `|y|^p + (x − y)²/(2ρ)` at a dense grid refined by
/// golden-section search around the best grid cell.
fn brute_force_prox(x: f64, rho: f64, p: f64) -> f64 {
    let obj = |y: f64| y.abs().powf(p) + (x - y).powi(2) / (2.0 * rho);
    let (lo, hi) = (-x.abs() - 1.0, x.abs() + 1.0);
    let n = 4000;
    let step = (hi - lo) / n as f64;
    let best = (0..=n)
        .map(|i| lo + step * i as f64)
        .min_by(|a, b| obj(*a).total_cmp(&obj(*b)))
        .expect("nonempty grid");
    let (mut a, mut b) = (best - step, best + step);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if obj(c) < obj(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let refined = 0.5 * (a + b);
    if obj(0.0) <= obj(refined) {
        0.0
    } else {
        refined
    }
}

fn prox_oracle() -> CheckResult {
    let mut rng = SeededRng::new(12);
    let mut worst: f64 = 0.0;
    for i in 0..150 {
        let p = [0.5, 0.8, 1.0][i % 3];
        let x = rng.uniform_range(-3.0, 3.0);
        let rho = rng.uniform_range(0.05, 2.0);
        let obj = |y: f64| y.abs().powf(p) + (x - y).powi(2) / (2.0 * rho);
        let ours = prox_lp_scalar(x, rho, p).unwrap_or(f64::NAN);
        // Compare objective values: near the hard threshold two minimizers tie.
        worst = worst.max(obj(ours) - obj(brute_force_prox(x, rho, p)));
    }
    CheckResult::new(
        "prox-oracle",
        worst <= 1e-9,
        format!("worst objective excess over brute force {worst:.1e}"),
    )
}

fn fd_block_gradients(problem: &SplitProblem, x: &BlockVector, rng: &mut SeededRng) -> f64 {
    let mut worst: f64 = 0.0;
    for n in 0..x.num_blocks() {
        let Ok(g) = problem.f_grad_block(x, n) else {
            return f64::INFINITY;
        };
        for _ in 0..4 {
            let i = rng.below(g.len());
            let eps = 1e-6;
            let bump = |d: f64| {
                let mut b = x.block(n).clone();
                b.data_mut()[i] += d;
                let mut xp = x.clone();
                xp.set_block(n, b).expect("same shape");
                problem.f_value(&xp)
            };
            let fd = (bump(eps) - bump(-eps)) / (2.0 * eps);
            let an = g.data()[i];
            worst = worst.max((fd - an).abs() / an.abs().max(1.0));
        }
    }
    worst
}

fn small_config(task: Task, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        task,
        seed,
        size: 32,
        max_iters: 60,
        ..ExperimentConfig::default()
    }
}

fn problem_gradients() -> CheckResult {
    let mut rng = SeededRng::new(13);
    let mut worst: f64 = 0.0;
    for task in [Task::Complete, Task::Deblur] {
        let Ok(inst) = build_instance(&small_config(task, 1)) else {
            return CheckResult::new("problem-gradients", false, format!("{task}: instance failed"));
        };
        let x0 = inst.initial_point().expect("initial point");
        let x = x0.map_blocks(|_, b| {
            let noise = rng.uniform_vector(b.shape(), -0.1, 0.1);
            b.add(&noise).expect("same shape")
        });
        worst = worst.max(fd_block_gradients(inst.split_problem(), &x, &mut rng));
    }
    CheckResult::new(
        "problem-gradients",
        worst < 1e-5,
        format!("worst relative finite-difference error {worst:.1e}"),
    )
}

#[allow(clippy::needless_range_loop)]
fn network_gradients() -> CheckResult {
    let mut rng = SeededRng::new(14);
    let mut net = ResidualConvNet::new(&[1, 4, 1], 3).expect("valid channels");
    // Nonzero last layer so every parameter influences the loss.
    for v in net.layers_mut()[1].weights_mut() {
        *v = rng.uniform_range(-0.3, 0.3);
    }
    let noisy = rng.uniform_vector(&[8, 8], 0.0, 1.0);
    let noise = rng.uniform_vector(&[8, 8], -0.1, 0.1);
    let (_, grads) = net.loss_and_grads(&noisy, &noise).expect("shapes agree");
    let mut worst: f64 = 0.0;
    for l in 0..net.layers().len() {
        for k in 0..6 {
            let i = (k * 7) % net.layers()[l].weights().len();
            let eps = 1e-6;
            let loss_at = |d: f64| {
                let mut m = net.clone();
                m.layers_mut()[l].weights_mut()[i] += d;
                m.loss_and_grads(&noisy, &noise).expect("shapes agree").0
            };
            let fd = (loss_at(eps) - loss_at(-eps)) / (2.0 * eps);
            let an = grads[l].weights[i];
            worst = worst.max((fd - an).abs() / an.abs().max(1e-3));
        }
    }
    CheckResult::new(
        "network-gradients",
        worst < 1e-4,
        format!("worst relative finite-difference error {worst:.1e}"),
    )
}

/// LBS under the descent hypotheses with a useful and an adversarial `T_d`.
fn monotone_descent() -> (CheckResult, Vec<String>) {
    let mut violations = 0usize;
    let mut runs = 0usize;
    let mut csvs = Vec::new();
    for task in [Task::Complete, Task::Deblur] {
        for seed in 0..2 {
            let cfg = small_config(task, seed);
            let Ok(inst) = build_instance(&cfg) else {
                return (CheckResult::new("monotone-descent", false, "instance failed".into()), csvs);
            };
            let problem = inst.split_problem();
            let mu = problem.geometry().modulus();
            let mut lc = lbs_config(&cfg, step_size(&cfg, problem));
            lc.c = 0.4 * mu / (2.0 * cfg.lambda);
            lc.descent_check = false;
            let x0 = inst.initial_point().expect("initial point");
            let useful = inst.lift(Box::new(WaveletShrink { tau: 0.05, levels: 1 }));
            let adversarial = NoiseOp {
                amplitude: 0.5,
                seed,
            };
            for t_d in [useful.as_ref(), &adversarial as &dyn DenoiserOp] {
                runs += 1;
                match lbs_solve(problem, &x0, t_d, &lc, inst.ground_truth.as_ref()) {
                    Ok(out) => {
                        violations += trace_diagnostics(&out.trace).descent_violations.len();
                        csvs.push(out.trace.to_csv());
                    }
                    Err(_) => violations += 1,
                }
            }
        }
    }
    (
        CheckResult::new(
            "monotone-descent",
            violations == 0,
            format!("{runs} runs, {violations} descent violations"),
        ),
        csvs,
    )
}

fn corrupted_weights() -> CheckResult {
    let net = ResidualConvNet::new(&[1, 4, 1], 5).expect("valid channels");
    let bytes = net.to_bytes();
    let mut bad_magic = bytes.clone();
    bad_magic[0] ^= 0xff;
    let cases = [
        ("truncated", bytes[..bytes.len() - 3].to_vec()),
        ("bad magic", bad_magic),
        ("empty", Vec::new()),
    ];
    let surfaced: Vec<&str> = cases
        .iter()
        .filter(|(_, b)| ResidualConvNet::from_bytes(b).is_err())
        .map(|(n, _)| *n)
        .collect();
    let round_trip = ResidualConvNet::from_bytes(&bytes).map(|n| n.to_bytes() == bytes).unwrap_or(false);
    CheckResult::new(
        "weight-file",
        surfaced.len() == cases.len() && round_trip,
        format!("load errors surfaced for {surfaced:?}; round trip {round_trip}"),
    )
}

/// Runs every check. Deterministic: two runs give identical reports.
pub fn run_selftest() -> CliResult<Vec<CheckResult>> {
    let mut results = vec![adjoints(), prox_oracle(), problem_gradients(), network_gradients()];
    let (descent, first) = monotone_descent();
    results.push(descent);
    let (_, second) = monotone_descent();
    results.push(CheckResult::new(
        "determinism",
        !first.is_empty() && first == second,
        format!("{} trace CSVs compared", first.len()),
    ));
    results.push(corrupted_weights());
    Ok(results)
}

pub fn format_report(results: &[CheckResult]) -> String {
    let mut s = String::new();
    for r in results {
        s += &format!("{} {:<18} {}\n", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
    }
    let passed = results.iter().filter(|r| r.passed).count();
    s += &format!("{passed}/{} checks passed\n", results.len());
    s
}
