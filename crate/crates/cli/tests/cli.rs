use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use lbs_cli::config::ExperimentConfig;
use proptest::prelude::*;

fn lbs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lbs"))
        .args(args)
        .env_remove("LBS_THREADS")
        .output()
        .expect("binary runs")
}

fn manifest(dir: &Path, name: &str) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join(name)).unwrap()).unwrap()
}

fn listed_files(m: &serde_json::Value) -> Vec<String> {
    let mut v: Vec<String> = m["files"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f.as_str().unwrap().to_string())
        .collect();
    v.sort();
    v
}

fn files_on_disk(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path().display().to_string())
        .collect();
    v.sort();
    v
}

#[test]
fn complete_writes_listed_artifacts_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = lbs(&["complete", "--data.size", "32", "--output_dir", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let m = manifest(&a, "manifest.json");
    assert_eq!(listed_files(&m), files_on_disk(&a));
    assert_eq!(m["config"]["data.size"], "32");
    assert_eq!(m["metrics"][0]["solver"], "lbs");
    let psnr = m["metrics"][0]["psnr"].as_f64().unwrap();
    assert!(psnr > m["input_psnr"].as_f64().unwrap() + 3.0);
    for f in ["trace.csv", "restored.pgm"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn zero_missing_with_identity_reference_caps_psnr() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("flat.pgm");
    // A constant image is reproduced exactly once quantized.
    let mut bytes = b"P5\n16 16\n255\n".to_vec();
    bytes.extend([128u8; 256]);
    fs::write(&img, &bytes).unwrap();
    let out = dir.path().join("out");
    let o = lbs(&[
        "complete",
        "--data.input",
        img.to_str().unwrap(),
        "--data.ground_truth",
        img.to_str().unwrap(),
        "--data.mask_ratio=0",
        "--model.levels=2",
        "--model.rho_fidelity=1e-4",
        "--denoiser.kind=identity",
        "--solver.tol=1e-2",
        "--output_dir",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read(out.join("restored.pgm")).unwrap(), bytes);
}

#[test]
fn deblur_trace_has_three_block_columns() {
    let dir = tempfile::tempdir().unwrap();
    let o = lbs(&[
        "deblur",
        "--data.size=32",
        "--solver.max_iters=20",
        "--output_dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert!(header.ends_with("step_norm2_u,step_norm2_v_h,step_norm2_v_v"), "{header}");
    assert_eq!(csv.lines().count(), 21);
}

#[test]
fn delta_kernel_without_noise_keeps_observation() {
    let dir = tempfile::tempdir().unwrap();
    let kernel = dir.path().join("delta.txt");
    fs::write(&kernel, "1 1\n1\n").unwrap();
    let out = dir.path().join("out");
    let o = lbs(&[
        "deblur",
        "--data.size=32",
        "--data.noise_sigma=0",
        "--data.kernel",
        kernel.to_str().unwrap(),
        "--output_dir",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&out, "manifest.json");
    assert!(m["input_psnr"].as_f64().unwrap() >= 99.0);
    assert!(m["metrics"][0]["psnr"].as_f64().unwrap() > 30.0);
}

#[test]
fn compare_lists_one_trace_per_solver() {
    let dir = tempfile::tempdir().unwrap();
    let o = lbs(&[
        "compare",
        "--data.size=32",
        "--compare.solvers=fbs,fista",
        "--output_dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(dir.path(), "manifest.json");
    assert_eq!(listed_files(&m), files_on_disk(dir.path()));
    assert_eq!(m["trace_paths"].as_array().unwrap().len(), 2);
    let iters = |i: usize| m["metrics"][i]["iterations"].as_u64().unwrap();
    assert!(iters(1) <= iters(0), "fista {} vs fbs {}", iters(1), iters(0));

    let one = dir.path().join("one");
    let o = lbs(&["compare", "--data.size=32", "--compare.solvers=fbs", "--output_dir", one.to_str().unwrap()]);
    assert!(o.status.success());
    let table = fs::read_to_string(one.join("compare.csv")).unwrap();
    assert_eq!(table.lines().count(), 2);
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# deblur defaults\nsolver.tol=1e-3\nsolver.name=fista\n").unwrap();
    let o = lbs(&["deblur", "--config", cfg.to_str().unwrap(), "--solver.name", "fbs", "--print-config"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let parsed = ExperimentConfig::parse(&text).unwrap();
    assert_eq!(parsed.tol, 1e-3);
    assert_eq!(parsed.solver.as_str(), "fbs");
    assert_eq!(parsed.task.as_str(), "deblur");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let code = |o: &Output| o.status.code().unwrap();

    let o = lbs(&["complete", "--solver.rh0=0.1"]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("solver.rh0"));
    assert_eq!(code(&o), 2);
    assert_eq!(code(&lbs(&["complete", "--task=deblur"])), 2);
    assert_eq!(code(&lbs(&["complete", "--denoiser.kind=net"])), 2);

    let missing = dir.path().join("missing.pgm");
    let o = lbs(&["complete", "--data.input", missing.to_str().unwrap(), "--output_dir", out]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.pgm"));
    assert_eq!(code(&o), 3);

    let weights = dir.path().join("bad.bin");
    fs::write(&weights, b"not a network").unwrap();
    let o = lbs(&["complete", "--denoiser.kind=net", "--denoiser.weights", weights.to_str().unwrap(), "--output_dir", out]);
    assert_eq!(code(&o), 3);

    // A step far above 1/L with the runtime descent check makes LBS fault.
    let o = lbs(&["complete", "--data.size=32", "--solver.rho=10", "--denoiser.kind=identity", "--output_dir", out]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));

    let o = Command::new(env!("CARGO_BIN_EXE_lbs"))
        .args(["selftest"])
        .env("LBS_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn train_denoiser_writes_weights_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("net.bin");
    let o = lbs(&["train-denoiser", "--sigma", "0.1", "--epochs", "2", "--seed", "3", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let net = lbs_core::ResidualConvNet::load(&out).unwrap();
    assert_eq!(net.channels(), vec![1, 8, 8, 1]);
    let m = manifest(dir.path(), "net.bin.manifest.json");
    assert_eq!(listed_files(&m), files_on_disk(dir.path()));
    assert!(m["summary"]["final_loss"].as_f64().unwrap() < m["summary"]["initial_loss"].as_f64().unwrap());
}

#[test]
fn selftest_passes_and_is_stable() {
    let a = lbs(&["selftest"]);
    let b = lbs(&["selftest"]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stdout));
    assert_eq!(a.stdout, b.stdout);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn config_round_trips(
        seed in any::<u64>(),
        rho in prop::option::of(1e-6f64..1e3),
        c in prop::option::of(0.0f64..1e4),
        tol in 1e-12f64..1.0,
        iters in 1usize..100_000,
        ratio in 0.0f64..=1.0,
        input in prop::option::of("[a-z]{1,8}\\.pgm"),
        solvers in prop::collection::vec(prop::sample::select(vec!["lbs", "fbs", "fista", "admm", "drs"]), 0..5),
    ) {
        let mut cfg = ExperimentConfig {
            seed,
            rho,
            c,
            tol,
            max_iters: iters,
            mask_ratio: ratio,
            input: input.map(Into::into),
            ..ExperimentConfig::default()
        };
        cfg.set("compare.solvers", &solvers.join(",")).unwrap();
        let text = cfg.to_text();
        let back = ExperimentConfig::parse(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.to_text(), text);
    }
}
