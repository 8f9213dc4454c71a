//! `train-denoiser`: fits the residual CNN on a seeded synthetic corpus.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use lbs_core::denoise::{moving_average, synthetic_corpus, train, validation_report, TrainConfig};
use lbs_core::ResidualConvNet;

use crate::error::{CliError, CliResult};
use crate::manifest::{ArtifactWriter, RunManifest};

pub const DEFAULT_CHANNELS: [usize; 4] = [1, 8, 8, 1];
const CORPUS_IMAGES: usize = 16;
const CORPUS_SIZE: usize = 64;
const VALIDATION_IMAGES: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainArgs {
    pub sigma: f64,
    pub epochs: usize,
    pub seed: u64,
    pub out: PathBuf,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: ResidualConvNet,
    pub loss_curve: Vec<f64>,
    pub validation_gain_db: f64,
    pub manifest_path: PathBuf,
}

/// Trains on `synthetic_corpus(16, 64, 64, seed)` and validates on a
/// disjoint seeded corpus.
pub fn train_net(sigma: f64, epochs: usize, seed: u64) -> CliResult<(ResidualConvNet, Vec<f64>, f64)> {
    let config = TrainConfig {
        noise_sigma: sigma,
        epochs,
        seed,
        ..TrainConfig::default()
    };
    config.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let corpus = synthetic_corpus(CORPUS_IMAGES, CORPUS_SIZE, CORPUS_SIZE, seed);
    let mut net = ResidualConvNet::new(&DEFAULT_CHANNELS, seed)?;
    let report = train(&mut net, &corpus, &config)?;
    let held_out = synthetic_corpus(VALIDATION_IMAGES, CORPUS_SIZE, CORPUS_SIZE, seed ^ 0x5eed_f00d);
    let gain = validation_report(&net, &held_out, sigma, seed)?.gain_db();
    Ok((net, report.loss_curve, gain))
}

fn file_name(out: &Path) -> CliResult<String> {
    out.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .ok_or_else(|| CliError::Config(format!("--out {} has no file name", out.display())))
}

/// Writes the weights, `<out>.loss.csv` and `<out>.manifest.json`.
pub fn cmd_train(args: &TrainArgs) -> CliResult<TrainOutcome> {
    let started = Instant::now();
    let name = file_name(&args.out)?;
    let dir = match args.out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let (net, loss_curve, gain) = train_net(args.sigma, args.epochs, args.seed)?;

    let mut w = ArtifactWriter::new(&dir)?;
    w.write_bytes(&name, &net.to_bytes())?;
    let smooth = moving_average(&loss_curve, 50);
    let mut csv = String::from("step,loss,loss_avg50\n");
    for (i, (l, a)) in loss_curve.iter().zip(&smooth).enumerate() {
        csv += &format!("{i},{l:.10e},{a:.10e}\n");
    }
    w.write_text(&format!("{name}.loss.csv"), &csv)?;

    let config: BTreeMap<String, String> = [
        ("sigma", args.sigma.to_string()),
        ("epochs", args.epochs.to_string()),
        ("seed", args.seed.to_string()),
        ("out", args.out.display().to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    let mut manifest = RunManifest::bare("train-denoiser", config, started.elapsed().as_secs_f64());
    manifest.summary.insert("initial_loss".into(), loss_curve.first().copied().unwrap_or(f64::NAN));
    manifest.summary.insert("final_loss".into(), loss_curve.last().copied().unwrap_or(f64::NAN));
    manifest.summary.insert("validation_gain_db".into(), gain);
    let manifest_path = w.finish_as(manifest, &format!("{name}.manifest.json"))?;
    Ok(TrainOutcome {
        net,
        loss_curve,
        validation_gain_db: gain,
        manifest_path,
    })
}
